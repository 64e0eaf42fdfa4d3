#include "ridas/sim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>

#include "ridas/errors.hpp"

namespace ridas::sim {

namespace {

std::string trim(const std::string& s) {
    std::size_t a = 0, b = s.size();
    while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
    while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
    return s.substr(a, b - a);
}

std::vector<std::string> split_ws(std::string s) {
    std::replace(s.begin(), s.end(), ',', ' ');
    std::istringstream in(s);
    std::vector<std::string> out;
    std::string tok;
    while (in >> tok) out.push_back(tok);
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const double v = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not a number: " + value);
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const unsigned long long v = std::stoull(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not a nonnegative integer: " + value);
    }
}

int parse_int(const std::string& key, const std::string& value) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError(key + ": not an integer: " + value);
    }
}

LlmBackend backend_from_name(const std::string& name) {
    if (name == "env") return LlmBackend::Env;
    if (name == "stub-oracle") return LlmBackend::StubOracle;
    if (name == "stub-wasteful") return LlmBackend::StubWasteful;
    if (name == "stub-overstate") return LlmBackend::StubOverstate;
    if (name == "stub-understate") return LlmBackend::StubUnderstate;
    throw ConfigError("llm_backend: unknown backend: " + name);
}

} // namespace

const char* policy_name(Policy policy) {
    switch (policy) {
    case Policy::Oracle: return "oracle";
    case Policy::Rule: return "rule";
    case Policy::Prompt: return "prompt";
    case Policy::Llm: return "llm";
    }
    return "?";
}

Policy policy_from_name(const std::string& name) {
    if (name == "oracle") return Policy::Oracle;
    if (name == "rule") return Policy::Rule;
    if (name == "prompt") return Policy::Prompt;
    if (name == "llm") return Policy::Llm;
    throw ConfigError("unknown policy: " + name);
}

ScenarioConfig ScenarioConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scenario file: " + path.string());
    std::map<std::string, std::string> kv;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": empty key");
        }
        if (!kv.emplace(key, value).second) {
            throw ConfigError(path.string() + ":" + std::to_string(lineno) +
                              ": duplicate key: " + key);
        }
    }
    return from_map(kv);
}

ScenarioConfig ScenarioConfig::from_map(const std::map<std::string, std::string>& kv) {
    ScenarioConfig cfg;
    for (const auto& [key, value] : kv) {
        if (key == "total_bandwidth_mhz") {
            cfg.total_bandwidth_mhz = parse_double(key, value);
        } else if (key == "snr_range_db") {
            const std::vector<std::string> parts = split_ws(value);
            if (parts.size() != 2) throw ConfigError("snr_range_db needs two values");
            cfg.snr_range_db[0] = parse_double(key, parts[0]);
            cfg.snr_range_db[1] = parse_double(key, parts[1]);
        } else if (key == "delay_range_ms") {
            const std::vector<std::string> parts = split_ws(value);
            if (parts.size() != 2) throw ConfigError("delay_range_ms needs two values");
            cfg.delay_range_ms[0] = parse_double(key, parts[0]);
            cfg.delay_range_ms[1] = parse_double(key, parts[1]);
        } else if (key == "tier_weights") {
            const std::vector<std::string> parts = split_ws(value);
            if (parts.size() != 3) throw ConfigError("tier_weights needs three values");
            for (int i = 0; i < 3; ++i) cfg.tier_weights[i] = parse_double(key, parts[i]);
        } else if (key == "queue_length") {
            cfg.queue_length = parse_u64(key, value);
        } else if (key == "seed") {
            cfg.seed = parse_u64(key, value);
        } else if (key == "source") {
            const std::vector<std::string> parts = split_ws(value);
            if (!parts.empty() && parts[0] == "gaussian" && parts.size() == 4) {
                cfg.source.kind = SourceSpec::Kind::Gaussian;
                cfg.source.m = parse_u64(key, parts[1]);
                cfg.source.n = parse_u64(key, parts[2]);
                cfg.source.scale = parse_double(key, parts[3]);
            } else if (!parts.empty() && parts[0] == "file" && parts.size() == 2) {
                cfg.source.kind = SourceSpec::Kind::File;
                cfg.source.path = parts[1];
            } else {
                throw ConfigError("source: expected 'gaussian M N SCALE' or 'file PATH'");
            }
        } else if (key == "accuracy_model") {
            const std::vector<std::string> parts = split_ws(value);
            if (!parts.empty() && parts[0] == "synthetic" && parts.size() == 4) {
                cfg.accuracy_model.kind = AccuracySpec::Kind::Synthetic;
                cfg.accuracy_model.acc_max = parse_double(key, parts[1]);
                cfg.accuracy_model.acc_min = parse_double(key, parts[2]);
                cfg.accuracy_model.slope = parse_double(key, parts[3]);
            } else if (!parts.empty() && parts[0] == "calibration" && parts.size() == 2) {
                cfg.accuracy_model.kind = AccuracySpec::Kind::Calibration;
                cfg.accuracy_model.path = parts[1];
            } else {
                throw ConfigError(
                    "accuracy_model: expected 'synthetic MAX MIN SLOPE' or 'calibration PATH'");
            }
        } else if (key == "rank_grid") {
            cfg.rank_grid.clear();
            for (const std::string& tok : split_ws(value)) cfg.rank_grid.push_back(parse_int(key, tok));
        } else if (key == "qbits_grid") {
            cfg.qbits_grid.clear();
            for (const std::string& tok : split_ws(value)) cfg.qbits_grid.push_back(parse_int(key, tok));
        } else if (key == "n_probe") {
            cfg.n_probe = parse_u64(key, value);
        } else if (key == "llm_backend") {
            cfg.llm_backend = backend_from_name(value);
        } else if (key == "stub_factor") {
            cfg.stub_factor = parse_double(key, value);
        } else {
            throw ConfigError("unknown scenario key: " + key);
        }
    }
    cfg.validate();
    return cfg;
}

void ScenarioConfig::validate() const {
    if (!(total_bandwidth_mhz > 0.0) || !std::isfinite(total_bandwidth_mhz)) {
        throw ConfigError("total_bandwidth_mhz must be positive");
    }
    if (!(snr_range_db[0] <= snr_range_db[1])) throw ConfigError("snr_range_db must be ordered");
    if (!(delay_range_ms[0] > 0.0) || !(delay_range_ms[0] <= delay_range_ms[1])) {
        throw ConfigError("delay_range_ms must be positive and ordered");
    }
    double weight_sum = 0.0;
    for (double w : tier_weights) {
        if (!(w >= 0.0)) throw ConfigError("tier_weights must be nonnegative");
        weight_sum += w;
    }
    if (!(weight_sum > 0.0)) throw ConfigError("tier_weights must not all be zero");
    if (queue_length == 0) throw ConfigError("queue_length must be at least 1");
    if (source.kind == SourceSpec::Kind::Gaussian) {
        if (source.m == 0 || source.n == 0) throw ConfigError("source dimensions must be positive");
        if (!(source.scale > 0.0)) throw ConfigError("source scale must be positive");
        for (int r : rank_grid) {
            if (r < 1 || static_cast<std::size_t>(r) > std::min(source.m, source.n)) {
                throw ConfigError("rank_grid entry " + std::to_string(r) +
                                  " exceeds min(source dimensions)");
            }
        }
    }
    if (rank_grid.empty() || qbits_grid.empty()) throw ConfigError("profiling grids must be nonempty");
    for (int r : rank_grid) {
        if (r < 1) throw ConfigError("rank_grid entries must be >= 1");
    }
    for (int q : qbits_grid) {
        if (q < 1 || q > 16) throw ConfigError("qbits_grid entries must lie in [1, 16]");
    }
    if (n_probe == 0) throw ConfigError("n_probe must be at least 1");
    if (accuracy_model.kind == AccuracySpec::Kind::Synthetic) {
        const AccuracySpec& a = accuracy_model;
        if (!(a.acc_min >= 0.0 && a.acc_min <= a.acc_max && a.acc_max <= 1.0) || !(a.slope >= 0.0)) {
            throw ConfigError("accuracy_model: need 0 <= min <= max <= 1 and slope >= 0");
        }
    }
    if (!(stub_factor > 0.0) || !std::isfinite(stub_factor)) {
        throw ConfigError("stub_factor must be positive");
    }
}

link::SamplerRanges ScenarioConfig::sampler_ranges() const {
    link::SamplerRanges ranges;
    ranges.snr_min_db = snr_range_db[0];
    ranges.snr_max_db = snr_range_db[1];
    ranges.delay_min_ms = delay_range_ms[0];
    ranges.delay_max_ms = delay_range_ms[1];
    ranges.tier_weights = tier_weights;
    return ranges;
}

namespace {

rda::FeatureSource make_source(const ScenarioConfig& cfg) {
    if (cfg.source.kind == SourceSpec::Kind::File) {
        return rda::FeatureSource::from_file(cfg.source.path);
    }
    return rda::FeatureSource::gaussian(cfg.seed, cfg.source.m, cfg.source.n, cfg.source.scale);
}

rda::AccuracyModel make_model(const ScenarioConfig& cfg) {
    if (cfg.accuracy_model.kind == AccuracySpec::Kind::Calibration) {
        return rda::AccuracyModel::calibration_from_csv(cfg.accuracy_model.path);
    }
    return rda::AccuracyModel::synthetic(cfg.accuracy_model.acc_max, cfg.accuracy_model.acc_min,
                                         cfg.accuracy_model.slope);
}

std::unique_ptr<ida::Planner> make_planner(const ScenarioConfig& cfg, Policy policy) {
    switch (policy) {
    case Policy::Oracle: return std::make_unique<ida::OraclePlanner>();
    case Policy::Rule: return std::make_unique<ida::RulePlanner>();
    case Policy::Prompt:
    case Policy::Llm: {
        const ida::PlannerKind kind =
            policy == Policy::Prompt ? ida::PlannerKind::Prompt : ida::PlannerKind::Llm;
        switch (cfg.llm_backend) {
        case LlmBackend::Env:
            return std::make_unique<ida::HttpChatPlanner>(ida::LlmClientConfig::from_env(), kind);
        case LlmBackend::StubOracle:
            return std::make_unique<ida::StubPlanner>(kind, ida::StubBehavior::Accurate);
        case LlmBackend::StubWasteful:
            return std::make_unique<ida::StubPlanner>(kind, ida::StubBehavior::Wasteful,
                                                      cfg.stub_factor);
        case LlmBackend::StubOverstate:
            return std::make_unique<ida::StubPlanner>(kind, ida::StubBehavior::OverstateBits,
                                                      cfg.stub_factor);
        case LlmBackend::StubUnderstate:
            return std::make_unique<ida::StubPlanner>(kind, ida::StubBehavior::UnderstateBits,
                                                      cfg.stub_factor);
        }
        break;
    }
    }
    throw ConfigError("unsupported policy/backend combination");
}

std::string events_csv(const SimReport& report) {
    std::string out = "event_index,user_id,policy,outcome,reason,r,q,code_rate,allocated_mhz,"
                      "realloc_rounds,cum_fraction\n";
    char buf[320];
    for (const SimEvent& e : report.events) {
        std::snprintf(buf, sizeof(buf), "%llu,%llu,%s,%s,%s,%d,%d,%.17g,%.17g,%d,%.17g\n",
                      static_cast<unsigned long long>(e.event_index),
                      static_cast<unsigned long long>(e.user_id), policy_name(report.policy),
                      e.admitted ? "admitted" : "rejected", e.reason.c_str(), e.r, e.q, e.code_rate,
                      e.allocated_mhz, e.realloc_rounds, e.cum_fraction);
        out += buf;
    }
    return out;
}

std::string summary_header() { return "policy,seed,admitted,avg_mhz_per_user\n"; }

std::string summary_row(const SimReport& report) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s,%llu,%llu,%.17g\n", policy_name(report.policy),
                  static_cast<unsigned long long>(report.seed),
                  static_cast<unsigned long long>(report.admitted_count),
                  report.avg_mhz_per_user());
    return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, ',')) fields.push_back(field);
    if (!line.empty() && line.back() == ',') fields.push_back("");
    return fields;
}

} // namespace

bool SimReport::csv_equal(const SimReport& other) const {
    return policy == other.policy && seed == other.seed && admitted_count == other.admitted_count &&
           avg_mhz_final == other.avg_mhz_final && events == other.events;
}

SimReport run_scenario(const ScenarioConfig& cfg, Policy policy) {
    cfg.validate();
    const rda::FeatureSource src = make_source(cfg);
    const rda::AccuracyModel model = make_model(cfg);
    if (cfg.source.kind == SourceSpec::Kind::File) {
        for (int r : cfg.rank_grid) {
            if (static_cast<std::size_t>(r) > std::min(src.rows(), src.cols())) {
                throw ConfigError("rank_grid entry " + std::to_string(r) +
                                  " exceeds min(source dimensions)");
            }
        }
    }

    SimReport report;
    report.policy = policy;
    report.seed = cfg.seed;
    report.total_bandwidth_mhz = cfg.total_bandwidth_mhz;

    rda::ExperienceTable table =
        rda::profile_grid(src, cfg.rank_grid, cfg.qbits_grid, cfg.n_probe, model);
    ida::SystemState state(cfg.total_bandwidth_mhz);
    const std::unique_ptr<ida::Planner> planner = make_planner(cfg, policy);

    ida::AdmitOptions options;
    options.n_probe = cfg.n_probe;
    options.verify = policy != Policy::Prompt;
    options.reallocate = policy != Policy::Prompt;

    const link::SamplerRanges ranges = cfg.sampler_ranges();
    for (std::uint64_t index = 0; index < cfg.queue_length; ++index) {
        const link::UserRequest req = link::sample_user(cfg.seed, index, ranges);
        const ida::AdmissionOutcome outcome =
            ida::admit(req, state, table, *planner, src, model, options);

        SimEvent event;
        event.event_index = index;
        event.user_id = req.user_id;
        event.admitted = outcome.admitted();
        event.realloc_rounds = outcome.realloc_rounds;
        if (outcome.admitted()) {
            event.r = outcome.record->theta.rank;
            event.q = outcome.record->theta.qbits;
            event.code_rate = outcome.record->code_rate.value();
            event.allocated_mhz = outcome.record->allocated_mhz;
            ++report.admitted_count;
            report.avg_mhz_at_count.push_back(state.allocated_mhz() /
                                              static_cast<double>(report.admitted_count));
        } else {
            event.reason = ida::reject_reason_name(*outcome.reason);
        }
        event.cum_fraction = state.allocated_mhz() / cfg.total_bandwidth_mhz;
        report.events.push_back(event);
    }

    report.avg_mhz_final = report.admitted_count == 0
                               ? 0.0
                               : state.allocated_mhz() / static_cast<double>(report.admitted_count);
    report.final_users = state.users();
    report.final_table = table;
    return report;
}

ComparisonReport compare_policies(const ScenarioConfig& cfg, const std::vector<Policy>& policies,
                                  const std::vector<std::uint64_t>& seeds) {
    if (policies.empty()) throw InvalidInputError("compare_policies needs at least one policy");
    const std::vector<std::uint64_t> seed_list = seeds.empty() ? std::vector<std::uint64_t>{cfg.seed}
                                                               : seeds;
    ComparisonReport report;
    for (Policy policy : policies) {
        for (std::uint64_t seed : seed_list) {
            ScenarioConfig run_cfg = cfg;
            run_cfg.seed = seed;
            report.runs.push_back(run_scenario(run_cfg, policy));
        }
    }
    return report;
}

void export_csv(const SimReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_text(dir / "events.csv", events_csv(report));
    write_text(dir / "summary.csv", summary_header() + summary_row(report));
}

SimReport import_csv(const std::filesystem::path& dir) {
    const std::filesystem::path summary_path = dir / "summary.csv";
    std::ifstream summary(summary_path);
    if (!summary) throw IoError("cannot open " + summary_path.string());
    std::string line;
    if (!std::getline(summary, line) || line != "policy,seed,admitted,avg_mhz_per_user") {
        throw IoError("missing summary header in " + summary_path.string());
    }
    SimReport report;
    if (!std::getline(summary, line)) throw IoError("empty summary in " + summary_path.string());
    {
        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != 4) throw IoError("bad summary row: " + line);
        report.policy = policy_from_name(fields[0]);
        report.seed = std::stoull(fields[1]);
        report.admitted_count = std::stoull(fields[2]);
        report.avg_mhz_final = std::stod(fields[3]);
    }

    const std::filesystem::path events_path = dir / "events.csv";
    std::ifstream events(events_path);
    if (!events) throw IoError("cannot open " + events_path.string());
    if (!std::getline(events, line) ||
        line != "event_index,user_id,policy,outcome,reason,r,q,code_rate,allocated_mhz,"
                "realloc_rounds,cum_fraction") {
        throw IoError("missing events header in " + events_path.string());
    }
    while (std::getline(events, line)) {
        if (line.empty()) continue;
        const std::vector<std::string> fields = split_fields(line);
        if (fields.size() != 11) throw IoError("bad event row: " + line);
        try {
            SimEvent e;
            e.event_index = std::stoull(fields[0]);
            e.user_id = std::stoull(fields[1]);
            if (policy_from_name(fields[2]) != report.policy) {
                throw IoError("event policy disagrees with summary: " + line);
            }
            if (fields[3] == "admitted") {
                e.admitted = true;
            } else if (fields[3] == "rejected") {
                e.admitted = false;
            } else {
                throw IoError("bad outcome: " + fields[3]);
            }
            e.reason = fields[4];
            e.r = std::stoi(fields[5]);
            e.q = std::stoi(fields[6]);
            e.code_rate = std::stod(fields[7]);
            e.allocated_mhz = std::stod(fields[8]);
            e.realloc_rounds = std::stoi(fields[9]);
            e.cum_fraction = std::stod(fields[10]);
            report.events.push_back(e);
        } catch (const IoError&) {
            throw;
        } catch (const std::exception&) {
            throw IoError("bad event row in " + events_path.string() + ": " + line);
        }
    }
    return report;
}

void export_csv(const ComparisonReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::string summary = summary_header();
    for (const SimReport& run : report.runs) summary += summary_row(run);
    write_text(dir / "summary.csv", summary);

    std::string curve = "policy,seed,k,cum_fraction,avg_mhz\n";
    char buf[200];
    for (const SimReport& run : report.runs) {
        std::uint64_t k = 0;
        for (const SimEvent& e : run.events) {
            if (!e.admitted) continue;
            ++k;
            std::snprintf(buf, sizeof(buf), "%s,%llu,%llu,%.17g,%.17g\n", policy_name(run.policy),
                          static_cast<unsigned long long>(run.seed),
                          static_cast<unsigned long long>(k), e.cum_fraction,
                          run.avg_mhz_at_count[k - 1]);
            curve += buf;
        }
    }
    write_text(dir / "curve.csv", curve);
}

} // namespace ridas::sim
