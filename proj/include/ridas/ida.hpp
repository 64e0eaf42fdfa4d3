#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ridas/link.hpp"
#include "ridas/rda.hpp"

namespace ridas::ida {

/// Connected-user ledger row. allocated_mhz always satisfies the bandwidth
/// formula for (measured_bits, link, code_rate).
struct UserRecord {
    std::uint64_t user_id = 0;
    codec::ControlParameter theta;
    link::CodeRate code_rate;
    double allocated_mhz = 0.0;
    link::LinkParams link;
    link::QosRequirement qos;
    double measured_bits = 0.0;

    bool operator==(const UserRecord&) const = default;
};

/// Bandwidth ledger: total budget plus the records of connected users.
class SystemState {
public:
    SystemState() = default;
    explicit SystemState(double total_bandwidth_mhz) : total_mhz_(total_bandwidth_mhz) {}

    double total_bandwidth_mhz() const { return total_mhz_; }
    const std::vector<UserRecord>& users() const { return users_; }
    std::vector<UserRecord>& users() { return users_; }

    double allocated_mhz() const;
    double idle_mhz() const { return total_mhz_ - allocated_mhz(); }

    bool operator==(const SystemState&) const = default;

private:
    double total_mhz_ = 0.0;
    std::vector<UserRecord> users_;
};

enum class PlannerKind : std::uint8_t { Oracle, Rule, Prompt, Llm };
const char* planner_kind_name(PlannerKind kind);

struct PlanProposal {
    codec::ControlParameter theta;
    link::CodeRate code_rate;
    double predicted_bits = 0.0;
    double predicted_mhz = 0.0;
    PlannerKind source = PlannerKind::Oracle;
};

enum class RejectReason : std::uint8_t { InfeasibleQos, InsufficientBandwidth, PlannerFailure };
const char* reject_reason_name(RejectReason reason);

struct AdmissionOutcome {
    std::optional<UserRecord> record;
    std::optional<RejectReason> reason;
    int realloc_rounds = 0;
    double freed_mhz = 0.0;

    bool admitted() const { return record.has_value(); }
};

/// Control-parameter proposer. Returns nullopt when it can prove the QoS
/// requirement infeasible against the table; throws PlannerFailureError on
/// transport failure or repeated malformed replies.
class Planner {
public:
    virtual ~Planner() = default;
    virtual std::optional<PlanProposal> plan(const link::UserRequest& req,
                                             const rda::ExperienceTable& table,
                                             const SystemState& state) = 0;
    virtual PlannerKind kind() const = 0;
};

/// Exhaustive search over (table entry, code rate): among entries meeting the
/// accuracy bound, minimizes predicted bandwidth. Ties break toward lower q,
/// then lower r, then higher code rate. nullopt when nothing is feasible.
std::optional<PlanProposal> oracle_plan(const link::UserRequest& req,
                                        const rda::ExperienceTable& table,
                                        const SystemState& state);

/// Same search restricted to a fixed code rate (rule baseline).
std::optional<PlanProposal> oracle_plan_fixed_rate(const link::UserRequest& req,
                                                   const rda::ExperienceTable& table,
                                                   link::CodeRate rate, PlannerKind source);

class OraclePlanner final : public Planner {
public:
    std::optional<PlanProposal> plan(const link::UserRequest& req,
                                     const rda::ExperienceTable& table,
                                     const SystemState& state) override;
    PlannerKind kind() const override { return PlannerKind::Oracle; }
};

/// Optimal theta, SNR-scaled code rate.
class RulePlanner final : public Planner {
public:
    std::optional<PlanProposal> plan(const link::UserRequest& req,
                                     const rda::ExperienceTable& table,
                                     const SystemState& state) override;
    PlannerKind kind() const override { return PlannerKind::Rule; }
};

/// Deterministic stand-in for an LLM backend.
enum class StubBehavior : std::uint8_t {
    Accurate,       // oracle choice, honest prediction
    Wasteful,       // feasible entry with the highest rate, lowest code rate
    OverstateBits,  // oracle choice, predicted bits scaled up by factor
    UnderstateBits, // oracle choice, predicted bits scaled down by factor
};

class StubPlanner final : public Planner {
public:
    StubPlanner(PlannerKind kind, StubBehavior behavior, double factor = 4.0)
        : kind_(kind), behavior_(behavior), factor_(factor) {}

    std::optional<PlanProposal> plan(const link::UserRequest& req,
                                     const rda::ExperienceTable& table,
                                     const SystemState& state) override;
    PlannerKind kind() const override { return kind_; }

private:
    PlannerKind kind_;
    StubBehavior behavior_;
    double factor_;
};

/// Chat-completion backend configuration, read from RIDAS_LLM_ENDPOINT,
/// RIDAS_LLM_MODEL, RIDAS_LLM_API_KEY, RIDAS_LLM_TIMEOUT_S.
struct LlmClientConfig {
    std::string endpoint_url;
    std::string model = "default";
    std::string api_key;
    double timeout_s = 30.0;
    int max_attempts = 3;
    int top_k_rows = 32;

    static LlmClientConfig from_env();
};

/// The user-visible prompt: system-state summary, QoS requirement, and the
/// top-k experience rows sorted by mean bits.
std::string render_planning_prompt(const link::UserRequest& req,
                                   const rda::ExperienceTable& table,
                                   const SystemState& state, int top_k);

/// Sends one chat-completion request and parses a {"rank", "qbits",
/// "code_rate"} object from the reply, retrying on malformed output.
/// Out-of-set code rates are snapped to the nearest allowed value.
PlanProposal llm_plan(const link::UserRequest& req, const rda::ExperienceTable& table,
                      const SystemState& state, const LlmClientConfig& config);

/// llm_plan tagged as the single-shot prompt baseline; the admission path
/// built on it skips verification and reallocation.
PlanProposal prompt_plan(const link::UserRequest& req, const rda::ExperienceTable& table,
                         const SystemState& state, const LlmClientConfig& config);

class HttpChatPlanner final : public Planner {
public:
    HttpChatPlanner(LlmClientConfig config, PlannerKind kind)
        : config_(std::move(config)), kind_(kind) {}

    std::optional<PlanProposal> plan(const link::UserRequest& req,
                                     const rda::ExperienceTable& table,
                                     const SystemState& state) override;
    PlannerKind kind() const override { return kind_; }

private:
    LlmClientConfig config_;
    PlannerKind kind_;
};

struct PreAllocation {
    std::optional<PlanProposal> proposal;
    std::optional<RejectReason> reason;
};

/// First planning stage: obtain a proposal for the idle-bandwidth check.
PreAllocation pre_allocate(const link::UserRequest& req, const rda::ExperienceTable& table,
                           const SystemState& state, Planner& planner);

struct VerifiedPlan {
    PlanProposal plan;
    double measured_bits = 0.0;
    double measured_nmse = 0.0;
    double accuracy = 0.0;
    double verified_mhz = 0.0;
    bool qos_ok = false;
};

/// Guards against numerical hallucinations: re-measures the proposed theta on
/// the live source, replaces the predicted rate, and folds the measurement
/// into the experience table. qos_ok is false when the measured accuracy
/// misses the requirement.
VerifiedPlan verify_plan(const PlanProposal& proposal, const link::UserRequest& req,
                         const rda::FeatureSource& src, const rda::AccuracyModel& model,
                         std::uint64_t n_probe, rda::ExperienceTable& table);

struct Adjustment {
    std::uint64_t user_id = 0;
    codec::ControlParameter old_theta, new_theta;
    link::CodeRate old_rate, new_rate;
    double old_mhz = 0.0;
    double new_mhz = 0.0;
};

struct ReclaimResult {
    double freed_mhz = 0.0;
    std::vector<Adjustment> adjustments;
};

/// Reallocation stage: retunes connected users to their minimal feasible
/// allocation (oracle search per user), most slack first, until the deficit
/// is covered or every user has been visited. Freeing less than the deficit
/// is a valid outcome.
ReclaimResult reclaim(SystemState& state, double deficit_mhz, const rda::ExperienceTable& table);

struct AdmitOptions {
    std::uint64_t n_probe = 8;
    bool verify = true;     // the prompt baseline turns both of these off
    bool reallocate = true;
};

/// Full admission pathway: pre-allocate, verify, then commit or reclaim.
/// A rejected admission leaves the state untouched apart from experience
/// appends made during verification.
AdmissionOutcome admit(const link::UserRequest& req, SystemState& state,
                       rda::ExperienceTable& table, Planner& planner,
                       const rda::FeatureSource& src, const rda::AccuracyModel& model,
                       const AdmitOptions& options = {});

/// User-record persistence:
/// user_id,r,q,code_rate,allocated_mhz,snr_db,delay_ms,tier
void save_users(const SystemState& state, const std::filesystem::path& path);
std::vector<UserRecord> load_users(const std::filesystem::path& path);

} // namespace ridas::ida
