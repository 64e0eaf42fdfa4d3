#include "ridas/ida.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include "ridas/errors.hpp"

namespace ridas::ida {

namespace {

constexpr double kBandwidthEps = 1e-9;

bool meets_qos(const rda::ExperienceRecord& row, const link::QosRequirement& qos) {
    return row.accuracy > qos.min_accuracy;
}

double plan_mhz(double bits, const link::UserRequest& req, link::CodeRate rate) {
    link::LinkParams params = req.link;
    params.code_rate = rate;
    return link::required_bandwidth_mhz(bits, params);
}

// candidate a beats b: lower bandwidth, then lower q, lower r, higher rate
bool better_plan(const PlanProposal& a, const PlanProposal& b) {
    if (a.predicted_mhz != b.predicted_mhz) return a.predicted_mhz < b.predicted_mhz;
    if (a.theta.qbits != b.theta.qbits) return a.theta.qbits < b.theta.qbits;
    if (a.theta.rank != b.theta.rank) return a.theta.rank < b.theta.rank;
    return a.code_rate.value() > b.code_rate.value();
}

std::optional<PlanProposal> search_plan(const link::UserRequest& req,
                                        const rda::ExperienceTable& table,
                                        const std::vector<link::CodeRate>& rates,
                                        PlannerKind source) {
    std::optional<PlanProposal> best;
    for (const rda::ExperienceRecord& row : table.rows()) {
        if (!meets_qos(row, req.qos)) continue;
        for (const link::CodeRate& rate : rates) {
            PlanProposal cand;
            cand.theta = row.theta;
            cand.code_rate = rate;
            cand.predicted_bits = row.mean_bits;
            cand.predicted_mhz = plan_mhz(row.mean_bits, req, rate);
            cand.source = source;
            if (!best || better_plan(cand, *best)) best = cand;
        }
    }
    return best;
}

} // namespace

double SystemState::allocated_mhz() const {
    double total = 0.0;
    for (const UserRecord& user : users_) total += user.allocated_mhz;
    return total;
}

const char* planner_kind_name(PlannerKind kind) {
    switch (kind) {
    case PlannerKind::Oracle: return "oracle";
    case PlannerKind::Rule: return "rule";
    case PlannerKind::Prompt: return "prompt";
    case PlannerKind::Llm: return "llm";
    }
    return "?";
}

const char* reject_reason_name(RejectReason reason) {
    switch (reason) {
    case RejectReason::InfeasibleQos: return "infeasible-qos";
    case RejectReason::InsufficientBandwidth: return "insufficient-bandwidth";
    case RejectReason::PlannerFailure: return "planner-failure";
    }
    return "?";
}

std::optional<PlanProposal> oracle_plan(const link::UserRequest& req,
                                        const rda::ExperienceTable& table,
                                        const SystemState& /*state*/) {
    const std::vector<link::CodeRate> rates(link::kCodeRates.begin(), link::kCodeRates.end());
    return search_plan(req, table, rates, PlannerKind::Oracle);
}

std::optional<PlanProposal> oracle_plan_fixed_rate(const link::UserRequest& req,
                                                   const rda::ExperienceTable& table,
                                                   link::CodeRate rate, PlannerKind source) {
    return search_plan(req, table, {rate}, source);
}

std::optional<PlanProposal> OraclePlanner::plan(const link::UserRequest& req,
                                                const rda::ExperienceTable& table,
                                                const SystemState& state) {
    return oracle_plan(req, table, state);
}

std::optional<PlanProposal> RulePlanner::plan(const link::UserRequest& req,
                                              const rda::ExperienceTable& table,
                                              const SystemState& /*state*/) {
    const link::CodeRate rate = link::rule_based_code_rate(req.link.snr_db);
    return oracle_plan_fixed_rate(req, table, rate, PlannerKind::Rule);
}

std::optional<PlanProposal> StubPlanner::plan(const link::UserRequest& req,
                                              const rda::ExperienceTable& table,
                                              const SystemState& state) {
    std::optional<PlanProposal> base = oracle_plan(req, table, state);
    if (!base) return std::nullopt;
    base->source = kind_;

    switch (behavior_) {
    case StubBehavior::Accurate:
        return base;
    case StubBehavior::OverstateBits:
        base->predicted_bits *= factor_;
        base->predicted_mhz = plan_mhz(base->predicted_bits, req, base->code_rate);
        return base;
    case StubBehavior::UnderstateBits:
        base->predicted_bits /= factor_;
        base->predicted_mhz = plan_mhz(base->predicted_bits, req, base->code_rate);
        return base;
    case StubBehavior::Wasteful: {
        // highest-rate feasible entry at the lowest code rate
        const rda::ExperienceRecord* worst = nullptr;
        for (const rda::ExperienceRecord& row : table.rows()) {
            if (!meets_qos(row, req.qos)) continue;
            if (!worst || row.mean_bits > worst->mean_bits) worst = &row;
        }
        PlanProposal p;
        p.theta = worst->theta;
        p.code_rate = link::kCodeRates.front();
        p.predicted_bits = worst->mean_bits;
        p.predicted_mhz = plan_mhz(p.predicted_bits, req, p.code_rate);
        p.source = kind_;
        return p;
    }
    }
    return base;
}

LlmClientConfig LlmClientConfig::from_env() {
    LlmClientConfig config;
    if (const char* v = std::getenv("RIDAS_LLM_ENDPOINT")) config.endpoint_url = v;
    if (const char* v = std::getenv("RIDAS_LLM_MODEL")) config.model = v;
    if (const char* v = std::getenv("RIDAS_LLM_API_KEY")) config.api_key = v;
    if (const char* v = std::getenv("RIDAS_LLM_TIMEOUT_S")) {
        try {
            config.timeout_s = std::stod(v);
        } catch (const std::exception&) {
            throw ConfigError("RIDAS_LLM_TIMEOUT_S is not a number");
        }
    }
    return config;
}

std::string render_planning_prompt(const link::UserRequest& req,
                                   const rda::ExperienceTable& table,
                                   const SystemState& state, int top_k) {
    std::vector<const rda::ExperienceRecord*> rows;
    rows.reserve(table.size());
    for (const rda::ExperienceRecord& row : table.rows()) rows.push_back(&row);
    std::sort(rows.begin(), rows.end(),
              [](const rda::ExperienceRecord* a, const rda::ExperienceRecord* b) {
                  return a->mean_bits != b->mean_bits ? a->mean_bits < b->mean_bits
                                                      : a->theta < b->theta;
              });
    if (top_k > 0 && rows.size() > static_cast<std::size_t>(top_k)) rows.resize(top_k);

    char buf[256];
    std::string prompt;
    prompt += "You allocate radio bandwidth for a semantic communication system.\n";
    std::snprintf(buf, sizeof(buf),
                  "System state: total %.3f MHz, allocated %.3f MHz, idle %.3f MHz, "
                  "%zu connected users.\n",
                  state.total_bandwidth_mhz(), state.allocated_mhz(), state.idle_mhz(),
                  state.users().size());
    prompt += buf;
    std::snprintf(buf, sizeof(buf),
                  "New user: SNR %.2f dB, delay budget %.3f ms, QoS tier %s "
                  "(task accuracy must exceed %.2f).\n",
                  req.link.snr_db, req.link.delay_budget_s * 1e3, link::tier_name(req.qos.tier),
                  req.qos.min_accuracy);
    prompt += buf;
    prompt += "Allowed code rates: ";
    for (std::size_t i = 0; i < link::kCodeRates.size(); ++i) {
        prompt += link::kCodeRates[i].str();
        prompt += i + 1 < link::kCodeRates.size() ? ", " : ".\n";
    }
    prompt += "Measured operating points (rank r, quantization bits q, mean bits per frame, "
              "task accuracy):\n";
    for (const rda::ExperienceRecord* row : rows) {
        std::snprintf(buf, sizeof(buf), "  r=%d q=%d bits=%.1f accuracy=%.4f\n", row->theta.rank,
                      row->theta.qbits, row->mean_bits, row->accuracy);
        prompt += buf;
    }
    prompt += "Pick one measured operating point and one code rate so the accuracy requirement "
              "holds and bandwidth is minimal.\n";
    prompt += "Reply with a single JSON object: {\"rank\": <int>, \"qbits\": <int>, "
              "\"code_rate\": <float>} and nothing else.\n";
    return prompt;
}

namespace {

// Balanced {...} spans in the reply, tried in order until one parses as an
// object carrying the three planning keys.
std::optional<nlohmann::json> extract_plan_object(const std::string& content) {
    for (std::size_t start = 0; start < content.size(); ++start) {
        if (content[start] != '{') continue;
        int depth = 0;
        bool in_string = false, escaped = false;
        for (std::size_t i = start; i < content.size(); ++i) {
            const char c = content[i];
            if (escaped) {
                escaped = false;
            } else if (in_string) {
                if (c == '\\') escaped = true;
                else if (c == '"') in_string = false;
            } else if (c == '"') {
                in_string = true;
            } else if (c == '{') {
                ++depth;
            } else if (c == '}') {
                if (--depth == 0) {
                    nlohmann::json obj =
                        nlohmann::json::parse(content.substr(start, i - start + 1),
                                              /*cb=*/nullptr, /*allow_exceptions=*/false);
                    if (obj.is_object() && obj.contains("rank") && obj.contains("qbits") &&
                        obj.contains("code_rate") && obj["rank"].is_number_integer() &&
                        obj["qbits"].is_number_integer() && obj["code_rate"].is_number()) {
                        return obj;
                    }
                    break; // malformed span; try the next opening brace
                }
            }
        }
    }
    return std::nullopt;
}

struct SplitUrl {
    std::string base; // scheme://host[:port]
    std::string path;
};

SplitUrl split_url(const std::string& url) {
    const std::size_t scheme = url.find("://");
    if (scheme == std::string::npos) {
        throw PlannerFailureError("endpoint URL needs a scheme: " + url);
    }
    const std::size_t path_start = url.find('/', scheme + 3);
    SplitUrl out;
    if (path_start == std::string::npos) {
        out.base = url;
        out.path = "/v1/chat/completions";
    } else {
        out.base = url.substr(0, path_start);
        out.path = url.substr(path_start);
    }
    return out;
}

PlanProposal chat_plan(const link::UserRequest& req, const rda::ExperienceTable& table,
                       const SystemState& state, const LlmClientConfig& config,
                       PlannerKind source) {
    if (config.endpoint_url.empty()) {
        throw PlannerFailureError("no LLM endpoint configured (set RIDAS_LLM_ENDPOINT)");
    }
    if (table.empty()) throw PlannerFailureError("cannot plan against an empty experience table");

    const SplitUrl url = split_url(config.endpoint_url);
    httplib::Client client(url.base);
    client.set_connection_timeout(std::chrono::duration<double>(config.timeout_s));
    client.set_read_timeout(std::chrono::duration<double>(config.timeout_s));
    httplib::Headers headers;
    if (!config.api_key.empty()) headers.emplace("Authorization", "Bearer " + config.api_key);

    nlohmann::json body = {
        {"model", config.model},
        {"temperature", 0},
        {"messages",
         {{{"role", "system"},
           {"content", "You are a planning assistant. Reply with only a JSON object."}},
          {{"role", "user"},
           {"content", render_planning_prompt(req, table, state, config.top_k_rows)}}}},
    };
    const std::string payload = body.dump();

    std::string last_error = "no attempts made";
    for (int attempt = 0; attempt < config.max_attempts; ++attempt) {
        httplib::Result res = client.Post(url.path, headers, payload, "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "HTTP status " + std::to_string(res->status);
            continue;
        }
        nlohmann::json reply = nlohmann::json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.contains("choices") || !reply["choices"].is_array() ||
            reply["choices"].empty()) {
            last_error = "reply is not a chat completion";
            continue;
        }
        const nlohmann::json& msg = reply["choices"][0];
        if (!msg.contains("message") || !msg["message"].contains("content") ||
            !msg["message"]["content"].is_string()) {
            last_error = "completion carries no message content";
            continue;
        }
        const std::string content = msg["message"]["content"].get<std::string>();
        const std::optional<nlohmann::json> obj = extract_plan_object(content);
        if (!obj) {
            last_error = "no {\"rank\", \"qbits\", \"code_rate\"} object in the reply";
            continue;
        }
        codec::ControlParameter theta{(*obj)["rank"].get<int>(), (*obj)["qbits"].get<int>()};
        if (theta.rank < 1 || theta.qbits < 1 || theta.qbits > 16) {
            last_error = "plan out of range: rank=" + std::to_string(theta.rank) +
                         " qbits=" + std::to_string(theta.qbits);
            continue;
        }
        const rda::ExperienceRecord* row = table.find(theta);
        if (row == nullptr) {
            last_error = "plan names an unmeasured operating point: rank=" +
                         std::to_string(theta.rank) + " qbits=" + std::to_string(theta.qbits);
            continue;
        }
        PlanProposal proposal;
        proposal.theta = theta;
        proposal.code_rate = link::snap_code_rate((*obj)["code_rate"].get<double>());
        proposal.predicted_bits = row->mean_bits;
        proposal.predicted_mhz = plan_mhz(row->mean_bits, req, proposal.code_rate);
        proposal.source = source;
        return proposal;
    }
    throw PlannerFailureError("LLM planning failed after " + std::to_string(config.max_attempts) +
                              " attempts; last error: " + last_error);
}

} // namespace

PlanProposal llm_plan(const link::UserRequest& req, const rda::ExperienceTable& table,
                      const SystemState& state, const LlmClientConfig& config) {
    return chat_plan(req, table, state, config, PlannerKind::Llm);
}

PlanProposal prompt_plan(const link::UserRequest& req, const rda::ExperienceTable& table,
                         const SystemState& state, const LlmClientConfig& config) {
    return chat_plan(req, table, state, config, PlannerKind::Prompt);
}

std::optional<PlanProposal> HttpChatPlanner::plan(const link::UserRequest& req,
                                                  const rda::ExperienceTable& table,
                                                  const SystemState& state) {
    bool any_feasible = false;
    for (const rda::ExperienceRecord& row : table.rows()) {
        if (meets_qos(row, req.qos)) {
            any_feasible = true;
            break;
        }
    }
    if (!any_feasible) return std::nullopt;
    return chat_plan(req, table, state, config_, kind_);
}

PreAllocation pre_allocate(const link::UserRequest& req, const rda::ExperienceTable& table,
                           const SystemState& state, Planner& planner) {
    PreAllocation pre;
    try {
        pre.proposal = planner.plan(req, table, state);
    } catch (const PlannerFailureError&) {
        pre.reason = RejectReason::PlannerFailure;
        return pre;
    }
    if (!pre.proposal) pre.reason = RejectReason::InfeasibleQos;
    return pre;
}

VerifiedPlan verify_plan(const PlanProposal& proposal, const link::UserRequest& req,
                         const rda::FeatureSource& src, const rda::AccuracyModel& model,
                         std::uint64_t n_probe, rda::ExperienceTable& table) {
    const rda::ExperienceRecord probe = rda::measure(src, proposal.theta, n_probe, model);
    table.merge(probe, model);

    VerifiedPlan v;
    v.plan = proposal;
    v.measured_bits = probe.mean_bits;
    v.measured_nmse = probe.mean_nmse;
    v.accuracy = probe.accuracy;
    v.verified_mhz = plan_mhz(probe.mean_bits, req, proposal.code_rate);
    v.qos_ok = probe.accuracy > req.qos.min_accuracy;
    return v;
}

ReclaimResult reclaim(SystemState& state, double deficit_mhz, const rda::ExperienceTable& table) {
    struct Candidate {
        std::size_t index;
        PlanProposal target;
        double slack;
    };
    std::vector<Candidate> candidates;
    for (std::size_t i = 0; i < state.users().size(); ++i) {
        const UserRecord& user = state.users()[i];
        link::UserRequest req;
        req.user_id = user.user_id;
        req.link = user.link;
        req.qos = user.qos;
        const std::optional<PlanProposal> target = oracle_plan(req, table, state);
        if (!target) continue;
        const double slack = user.allocated_mhz - target->predicted_mhz;
        if (slack > kBandwidthEps) candidates.push_back({i, *target, slack});
    }
    std::sort(candidates.begin(), candidates.end(), [&](const Candidate& a, const Candidate& b) {
        return a.slack != b.slack ? a.slack > b.slack
                                  : state.users()[a.index].user_id < state.users()[b.index].user_id;
    });

    ReclaimResult result;
    for (const Candidate& cand : candidates) {
        if (result.freed_mhz >= deficit_mhz - kBandwidthEps) break;
        UserRecord& user = state.users()[cand.index];
        Adjustment adj;
        adj.user_id = user.user_id;
        adj.old_theta = user.theta;
        adj.new_theta = cand.target.theta;
        adj.old_rate = user.code_rate;
        adj.new_rate = cand.target.code_rate;
        adj.old_mhz = user.allocated_mhz;
        adj.new_mhz = cand.target.predicted_mhz;
        user.theta = cand.target.theta;
        user.code_rate = cand.target.code_rate;
        user.link.code_rate = cand.target.code_rate;
        user.measured_bits = cand.target.predicted_bits;
        user.allocated_mhz = cand.target.predicted_mhz;
        result.freed_mhz += cand.slack;
        result.adjustments.push_back(adj);
    }
    return result;
}

AdmissionOutcome admit(const link::UserRequest& req, SystemState& state,
                       rda::ExperienceTable& table, Planner& planner,
                       const rda::FeatureSource& src, const rda::AccuracyModel& model,
                       const AdmitOptions& options) {
    AdmissionOutcome outcome;

    const PreAllocation pre = pre_allocate(req, table, state, planner);
    if (!pre.proposal) {
        outcome.reason = pre.reason;
        return outcome;
    }

    double committed_bits = pre.proposal->predicted_bits;
    double needed_mhz = pre.proposal->predicted_mhz;
    if (options.verify) {
        const VerifiedPlan v = verify_plan(*pre.proposal, req, src, model, options.n_probe, table);
        if (!v.qos_ok) {
            outcome.reason = RejectReason::InfeasibleQos;
            return outcome;
        }
        committed_bits = v.measured_bits;
        needed_mhz = v.verified_mhz;
    }

    // all mutations are staged; rejection leaves the caller's ledger unchanged
    SystemState staged = state;
    while (needed_mhz > staged.idle_mhz() + kBandwidthEps) {
        if (!options.reallocate) {
            outcome.reason = RejectReason::InsufficientBandwidth;
            return outcome;
        }
        const double deficit = needed_mhz - staged.idle_mhz();
        const ReclaimResult freed = reclaim(staged, deficit, table);
        ++outcome.realloc_rounds;
        outcome.freed_mhz += freed.freed_mhz;
        if (freed.freed_mhz <= kBandwidthEps) {
            outcome.reason = RejectReason::InsufficientBandwidth;
            outcome.freed_mhz = 0.0;
            return outcome;
        }
    }

    UserRecord rec;
    rec.user_id = req.user_id;
    rec.theta = pre.proposal->theta;
    rec.code_rate = pre.proposal->code_rate;
    rec.allocated_mhz = needed_mhz;
    rec.link = req.link;
    rec.link.code_rate = pre.proposal->code_rate;
    rec.qos = req.qos;
    rec.measured_bits = committed_bits;
    staged.users().push_back(rec);
    state = std::move(staged);
    outcome.record = rec;
    return outcome;
}

void save_users(const SystemState& state, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write user ledger: " + path.string());
    out << "user_id,r,q,code_rate,allocated_mhz,snr_db,delay_ms,tier\n";
    char buf[256];
    for (const UserRecord& user : state.users()) {
        std::snprintf(buf, sizeof(buf), "%llu,%d,%d,%s,%.17g,%.17g,%.17g,%s\n",
                      static_cast<unsigned long long>(user.user_id), user.theta.rank,
                      user.theta.qbits, user.code_rate.str().c_str(), user.allocated_mhz,
                      user.link.snr_db, user.link.delay_budget_s * 1e3,
                      link::tier_name(user.qos.tier));
        out << buf;
    }
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<UserRecord> load_users(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open user ledger: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("user_id,r,q,", 0) != 0) {
        throw IoError("missing user-ledger header in " + path.string());
    }
    std::vector<UserRecord> users;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::istringstream row(line);
        std::string field;
        while (std::getline(row, field, ',')) fields.push_back(field);
        if (fields.size() != 8) throw IoError("bad user row in " + path.string() + ": " + line);
        try {
            UserRecord user;
            user.user_id = std::stoull(fields[0]);
            user.theta = {std::stoi(fields[1]), std::stoi(fields[2])};
            user.code_rate = link::code_rate_from_string(fields[3]);
            user.allocated_mhz = std::stod(fields[4]);
            user.link.snr_db = std::stod(fields[5]);
            user.link.code_rate = user.code_rate;
            user.link.delay_budget_s = std::stod(fields[6]) * 1e-3;
            user.qos = link::QosRequirement::from_tier(link::tier_from_name(fields[7]));
            // the ledger stores the allocation; invert the bandwidth formula
            user.measured_bits = user.allocated_mhz * 1e6 *
                                 link::spectral_efficiency(user.link.snr_db) *
                                 user.link.delay_budget_s * user.code_rate.value();
            users.push_back(user);
        } catch (const InvalidInputError&) {
            throw;
        } catch (const std::exception&) {
            throw IoError("bad user row in " + path.string() + ": " + line);
        }
    }
    return users;
}

} // namespace ridas::ida
