#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ridas/ida.hpp"

namespace ridas::sim {

enum class Policy : std::uint8_t { Oracle, Rule, Prompt, Llm };
const char* policy_name(Policy policy);
Policy policy_from_name(const std::string& name);

/// Backend selection for the prompt/llm policies. "env" talks to the real
/// chat-completion endpoint; the stub variants run the deterministic
/// in-process stand-in.
enum class LlmBackend : std::uint8_t { Env, StubOracle, StubWasteful, StubOverstate, StubUnderstate };

struct SourceSpec {
    enum class Kind : std::uint8_t { Gaussian, File } kind = Kind::Gaussian;
    std::size_t m = 32;
    std::size_t n = 32;
    double scale = 1.0;
    std::string path;
};

struct AccuracySpec {
    enum class Kind : std::uint8_t { Synthetic, Calibration } kind = Kind::Synthetic;
    double acc_max = 0.95;
    double acc_min = 0.10;
    double slope = 20.0;
    std::string path;
};

struct ScenarioConfig {
    double total_bandwidth_mhz = 100.0;
    double snr_range_db[2] = {5.0, 30.0};
    double delay_range_ms[2] = {0.05, 0.5};
    std::array<double, 3> tier_weights = {1.0, 1.0, 1.0};
    std::uint64_t queue_length = 200;
    std::uint64_t seed = 1;
    SourceSpec source;
    AccuracySpec accuracy_model;
    std::vector<int> rank_grid = {1, 2, 4, 8, 16, 32};
    std::vector<int> qbits_grid = {1, 2, 4, 8};
    std::uint64_t n_probe = 8;
    LlmBackend llm_backend = LlmBackend::StubOracle;
    double stub_factor = 4.0;

    /// Flat "key = value" text, '#' comments. Unknown keys are errors.
    static ScenarioConfig from_file(const std::filesystem::path& path);
    static ScenarioConfig from_map(const std::map<std::string, std::string>& kv);
    void validate() const;

    link::SamplerRanges sampler_ranges() const;
};

struct SimEvent {
    std::uint64_t event_index = 0;
    std::uint64_t user_id = 0;
    bool admitted = false;
    std::string reason; // empty when admitted
    int r = 0;
    int q = 0;
    double code_rate = 0.0; // 0 when rejected
    double allocated_mhz = 0.0;
    int realloc_rounds = 0;
    double cum_fraction = 0.0;

    bool operator==(const SimEvent&) const = default;
};

struct SimReport {
    Policy policy = Policy::Oracle;
    std::uint64_t seed = 0;
    double total_bandwidth_mhz = 0.0;
    std::vector<SimEvent> events;
    std::uint64_t admitted_count = 0;
    /// Final allocated bandwidth divided by admitted users; the summary.csv
    /// payload, stored so an imported report reproduces the file exactly.
    double avg_mhz_final = 0.0;
    /// Mean per-user allocation snapshot taken as the k-th user was admitted.
    std::vector<double> avg_mhz_at_count;
    std::vector<ida::UserRecord> final_users;
    rda::ExperienceTable final_table;

    double avg_mhz_per_user() const { return avg_mhz_final; }

    /// Equality over the CSV-visible fields (events + summary row).
    bool csv_equal(const SimReport& other) const;
};

/// Profiles the experience grid once, then drives the common request queue
/// through the admission pathway of the chosen policy.
SimReport run_scenario(const ScenarioConfig& cfg, Policy policy);

struct ComparisonReport {
    std::vector<SimReport> runs; // ordered by (policy position, seed position)
};

/// Runs every (policy, seed) pair on the identical request queue.
ComparisonReport compare_policies(const ScenarioConfig& cfg, const std::vector<Policy>& policies,
                                  const std::vector<std::uint64_t>& seeds);

/// Writes events.csv and summary.csv into the directory.
void export_csv(const SimReport& report, const std::filesystem::path& dir);
SimReport import_csv(const std::filesystem::path& dir);

/// Writes summary.csv plus curve.csv (per-admission bandwidth-fraction curve).
void export_csv(const ComparisonReport& report, const std::filesystem::path& dir);

} // namespace ridas::sim
