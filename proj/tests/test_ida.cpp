#include <doctest.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "helpers.hpp"
#include "ridas/errors.hpp"
#include "ridas/ida.hpp"
#include "ridas/link.hpp"
#include "ridas/rda.hpp"
#include "ridas/rng.hpp"

using namespace ridas;
using namespace ridas::ida;

namespace {

rda::ExperienceTable make_table(const std::vector<rda::ExperienceRecord>& rows) {
    const rda::AccuracyModel model = rda::AccuracyModel::synthetic();
    rda::ExperienceTable table;
    for (const rda::ExperienceRecord& row : rows) table.merge(row, model);
    return table;
}

// rows: {1,4}:800@0.72, {2,8}:2000@0.85, {4,8}:4000@0.93, {8,12}:9000@0.97
rda::ExperienceTable fixture_table() {
    return make_table({
        {{1, 4}, 800.0, 0.0, 0.72, 1},
        {{2, 8}, 2000.0, 0.0, 0.85, 1},
        {{4, 8}, 4000.0, 0.0, 0.93, 1},
        {{8, 12}, 9000.0, 0.0, 0.97, 1},
    });
}

link::UserRequest fixture_request(link::QosTier tier = link::QosTier::Medium) {
    link::UserRequest req;
    req.user_id = 1;
    req.link.snr_db = 20.0;
    req.link.delay_budget_s = 0.2e-3;
    req.link.code_rate = {3, 4};
    req.qos = link::QosRequirement::from_tier(tier);
    return req;
}

double bw(double bits, const link::UserRequest& req, link::CodeRate rate) {
    link::LinkParams params = req.link;
    params.code_rate = rate;
    return link::required_bandwidth_mhz(bits, params);
}

class ThrowingPlanner final : public Planner {
public:
    std::optional<PlanProposal> plan(const link::UserRequest&, const rda::ExperienceTable&,
                                     const SystemState&) override {
        throw PlannerFailureError("backend down");
    }
    PlannerKind kind() const override { return PlannerKind::Llm; }
};

/// Proposes a fixed theta read straight from the table, 9/10 rate.
class FixedThetaPlanner final : public Planner {
public:
    explicit FixedThetaPlanner(codec::ControlParameter theta) : theta_(theta) {}
    std::optional<PlanProposal> plan(const link::UserRequest& req,
                                     const rda::ExperienceTable& table,
                                     const SystemState&) override {
        const rda::ExperienceRecord* row = table.find(theta_);
        if (row == nullptr) return std::nullopt;
        PlanProposal p;
        p.theta = theta_;
        p.code_rate = {9, 10};
        p.predicted_bits = row->mean_bits;
        link::LinkParams params = req.link;
        params.code_rate = p.code_rate;
        p.predicted_mhz = link::required_bandwidth_mhz(row->mean_bits, params);
        p.source = PlannerKind::Llm;
        return p;
    }
    PlannerKind kind() const override { return PlannerKind::Llm; }

private:
    codec::ControlParameter theta_;
};

std::filesystem::path temp_file(const std::string& name) {
    const auto path = std::filesystem::temp_directory_path() / ("ridas_test_" + name);
    std::filesystem::remove(path);
    return path;
}

/// In-process chat-completion endpoint replaying a scripted response list;
/// the last step repeats when the client retries past the end.
class ChatServer {
public:
    struct Step {
        int status = 200;
        std::string content;
    };

    explicit ChatServer(std::vector<Step> steps) : steps_(std::move(steps)) {
        auto handler = [this](const httplib::Request& request, httplib::Response& response) {
            const int idx = hits_++;
            {
                std::lock_guard<std::mutex> lock(mu_);
                bodies_.push_back(request.body);
                auth_.push_back(request.get_header_value("Authorization"));
            }
            const Step& step =
                steps_[std::min<std::size_t>(static_cast<std::size_t>(idx), steps_.size() - 1)];
            if (step.status != 200) {
                response.status = step.status;
                return;
            }
            nlohmann::json msg = {
                {"message", {{"role", "assistant"}, {"content", step.content}}}};
            nlohmann::json reply = {{"choices", nlohmann::json::array({msg})}};
            response.set_content(reply.dump(), "application/json");
        };
        server_.Post("/v1/chat/completions", handler);
        server_.Post("/custom/chat", handler);
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        while (!server_.is_running()) {
            std::this_thread::sleep_for(std::chrono::milliseconds(1));
        }
    }

    ~ChatServer() {
        server_.stop();
        thread_.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }
    int hits() const { return hits_.load(); }
    std::string body(std::size_t i) {
        std::lock_guard<std::mutex> lock(mu_);
        return bodies_.at(i);
    }
    std::string auth(std::size_t i) {
        std::lock_guard<std::mutex> lock(mu_);
        return auth_.at(i);
    }

private:
    std::vector<Step> steps_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<int> hits_{0};
    std::mutex mu_;
    std::vector<std::string> bodies_;
    std::vector<std::string> auth_;
};

LlmClientConfig server_config(const ChatServer& server) {
    LlmClientConfig config;
    config.endpoint_url = server.endpoint();
    config.model = "test-model";
    config.timeout_s = 5.0;
    return config;
}

} // namespace

TEST_CASE("system state: allocation arithmetic") {
    SystemState state(100.0);
    CHECK(state.total_bandwidth_mhz() == 100.0);
    CHECK(state.allocated_mhz() == 0.0);
    CHECK(state.idle_mhz() == 100.0);
    UserRecord a;
    a.allocated_mhz = 12.5;
    UserRecord b;
    b.allocated_mhz = 30.0;
    state.users().push_back(a);
    state.users().push_back(b);
    CHECK(state.allocated_mhz() == 42.5);
    CHECK(state.idle_mhz() == 57.5);
}

TEST_CASE("enum names") {
    CHECK(std::string(planner_kind_name(PlannerKind::Oracle)) == "oracle");
    CHECK(std::string(planner_kind_name(PlannerKind::Rule)) == "rule");
    CHECK(std::string(planner_kind_name(PlannerKind::Prompt)) == "prompt");
    CHECK(std::string(planner_kind_name(PlannerKind::Llm)) == "llm");
    CHECK(std::string(reject_reason_name(RejectReason::InfeasibleQos)) == "infeasible-qos");
    CHECK(std::string(reject_reason_name(RejectReason::InsufficientBandwidth)) ==
          "insufficient-bandwidth");
    CHECK(std::string(reject_reason_name(RejectReason::PlannerFailure)) == "planner-failure");
}

TEST_CASE("oracle_plan: picks the cheapest feasible row at the highest rate") {
    const rda::ExperienceTable table = fixture_table();
    const SystemState state(100.0);

    const link::UserRequest medium = fixture_request(link::QosTier::Medium);
    const std::optional<PlanProposal> plan = oracle_plan(medium, table, state);
    REQUIRE(plan.has_value());
    CHECK(plan->theta == codec::ControlParameter{2, 8}); // 0.72 row fails the 0.80 bound
    CHECK(plan->code_rate == link::CodeRate{9, 10});
    CHECK(plan->predicted_bits == 2000.0);
    CHECK(plan->predicted_mhz == bw(2000.0, medium, {9, 10}));
    CHECK(plan->source == PlannerKind::Oracle);

    const link::UserRequest high = fixture_request(link::QosTier::High);
    const std::optional<PlanProposal> plan_high = oracle_plan(high, table, state);
    REQUIRE(plan_high.has_value());
    CHECK(plan_high->theta == codec::ControlParameter{4, 8});

    // nothing clears the bound -> nullopt
    const rda::ExperienceTable weak = make_table({{{1, 4}, 800.0, 0.0, 0.72, 1}});
    CHECK(!oracle_plan(high, weak, state).has_value());
}

TEST_CASE("oracle_plan: the accuracy bound is strict") {
    const SystemState state(100.0);
    const link::UserRequest medium = fixture_request(link::QosTier::Medium);
    const rda::ExperienceTable at_bound = make_table({{{2, 8}, 2000.0, 0.0, 0.80, 1}});
    CHECK(!oracle_plan(medium, at_bound, state).has_value());
    const rda::ExperienceTable above = make_table(
        {{{2, 8}, 2000.0, 0.0, std::nextafter(0.80, 1.0), 1}});
    CHECK(oracle_plan(medium, above, state).has_value());
}

TEST_CASE("oracle_plan: tie-breaks prefer lower q, lower r, higher rate") {
    const SystemState state(100.0);
    const link::UserRequest req = fixture_request(link::QosTier::Low);

    // zero-bit rows cost 0 MHz at every rate: lower q wins, then highest rate
    const rda::ExperienceTable zeros = make_table({
        {{1, 6}, 0.0, 0.0, 0.95, 1},
        {{2, 4}, 0.0, 0.0, 0.95, 1},
    });
    const std::optional<PlanProposal> z = oracle_plan(req, zeros, state);
    REQUIRE(z.has_value());
    CHECK(z->theta == codec::ControlParameter{2, 4});
    CHECK(z->code_rate == link::CodeRate{9, 10});
    CHECK(z->predicted_mhz == 0.0);

    // equal bits and q: lower rank wins
    const rda::ExperienceTable equal_bits = make_table({
        {{5, 8}, 1000.0, 0.0, 0.9, 1},
        {{3, 8}, 1000.0, 0.0, 0.9, 1},
    });
    const std::optional<PlanProposal> e = oracle_plan(req, equal_bits, state);
    REQUIRE(e.has_value());
    CHECK(e->theta == codec::ControlParameter{3, 8});
}

TEST_CASE("oracle_plan agrees with an independent exhaustive search") {
    Rng rng(2024);
    const SystemState state(100.0);
    int feasible_cases = 0;
    for (int trial = 0; trial < 60; ++trial) {
        rda::ExperienceTable table;
        const rda::AccuracyModel model = rda::AccuracyModel::synthetic();
        std::set<std::pair<int, int>> seen;
        const int rows = 1 + static_cast<int>(rng.next_u64() % 12);
        for (int i = 0; i < rows; ++i) {
            const int r = 1 + static_cast<int>(rng.next_u64() % 6);
            const int q = 1 + static_cast<int>(rng.next_u64() % 16);
            if (!seen.insert({r, q}).second) continue;
            rda::ExperienceRecord rec;
            rec.theta = {r, q};
            rec.mean_bits = rng.uniform() < 0.15 ? 0.0 : rng.uniform(0.0, 5000.0);
            rec.mean_nmse = rng.uniform(0.0, 1.0);
            rec.accuracy = rng.uniform(0.55, 0.99);
            rec.sample_count = 1;
            table.merge(rec, model);
        }
        link::UserRequest req;
        req.user_id = 1;
        req.link.snr_db = rng.uniform(5.0, 30.0);
        req.link.delay_budget_s = rng.uniform(0.05, 0.5) * 1e-3;
        req.qos = link::QosRequirement::from_tier(static_cast<link::QosTier>(trial % 3));

        const std::optional<PlanProposal> got = oracle_plan(req, table, state);
        const std::optional<PlanProposal> want = testutil::brute_force_plan(req, table);
        REQUIRE(got.has_value() == want.has_value());
        if (!got) continue;
        ++feasible_cases;
        CHECK(got->theta == want->theta);
        CHECK(got->code_rate == want->code_rate);
        CHECK(got->predicted_bits == want->predicted_bits);
        CHECK(got->predicted_mhz == want->predicted_mhz);
    }
    CHECK(feasible_cases > 10); // the sweep actually exercised the search
}

TEST_CASE("oracle_plan_fixed_rate: restricted search") {
    const rda::ExperienceTable table = fixture_table();
    const link::UserRequest req = fixture_request(link::QosTier::Medium);
    const std::optional<PlanProposal> plan =
        oracle_plan_fixed_rate(req, table, {1, 2}, PlannerKind::Rule);
    REQUIRE(plan.has_value());
    CHECK(plan->theta == codec::ControlParameter{2, 8}); // min bits among feasible
    CHECK(plan->code_rate == link::CodeRate{1, 2});
    CHECK(plan->predicted_mhz == bw(2000.0, req, {1, 2}));
    CHECK(plan->source == PlannerKind::Rule);
}

TEST_CASE("rule planner: oracle theta at the SNR-mapped rate") {
    const rda::ExperienceTable table = fixture_table();
    const SystemState state(100.0);
    RulePlanner planner;
    const link::UserRequest req = fixture_request(link::QosTier::Medium); // 20 dB -> 3/4
    const std::optional<PlanProposal> plan = planner.plan(req, table, state);
    REQUIRE(plan.has_value());
    CHECK(plan->code_rate == link::rule_based_code_rate(20.0));
    CHECK(plan->code_rate == link::CodeRate{3, 4});
    CHECK(plan->theta == codec::ControlParameter{2, 8});
    CHECK(plan->source == PlannerKind::Rule);
    CHECK(planner.kind() == PlannerKind::Rule);
}

TEST_CASE("stub planner behaviors") {
    const rda::ExperienceTable table = fixture_table();
    const SystemState state(100.0);
    const link::UserRequest req = fixture_request(link::QosTier::Medium);
    const std::optional<PlanProposal> base = oracle_plan(req, table, state);
    REQUIRE(base.has_value());

    SUBCASE("accurate mirrors the oracle, tagged with the stub's kind") {
        StubPlanner planner(PlannerKind::Llm, StubBehavior::Accurate);
        const std::optional<PlanProposal> plan = planner.plan(req, table, state);
        REQUIRE(plan.has_value());
        CHECK(plan->theta == base->theta);
        CHECK(plan->code_rate == base->code_rate);
        CHECK(plan->predicted_bits == base->predicted_bits);
        CHECK(plan->predicted_mhz == base->predicted_mhz);
        CHECK(plan->source == PlannerKind::Llm);
    }
    SUBCASE("overstate scales the predicted bits up and recomputes bandwidth") {
        StubPlanner planner(PlannerKind::Llm, StubBehavior::OverstateBits, 4.0);
        const std::optional<PlanProposal> plan = planner.plan(req, table, state);
        REQUIRE(plan.has_value());
        CHECK(plan->theta == base->theta);
        CHECK(plan->predicted_bits == 4.0 * base->predicted_bits);
        CHECK(plan->predicted_mhz == bw(plan->predicted_bits, req, plan->code_rate));
        CHECK(plan->predicted_mhz > base->predicted_mhz);
    }
    SUBCASE("understate scales the predicted bits down") {
        StubPlanner planner(PlannerKind::Prompt, StubBehavior::UnderstateBits, 4.0);
        const std::optional<PlanProposal> plan = planner.plan(req, table, state);
        REQUIRE(plan.has_value());
        CHECK(plan->predicted_bits == base->predicted_bits / 4.0);
        CHECK(plan->predicted_mhz == bw(plan->predicted_bits, req, plan->code_rate));
        CHECK(plan->source == PlannerKind::Prompt);
    }
    SUBCASE("custom factor") {
        StubPlanner planner(PlannerKind::Llm, StubBehavior::OverstateBits, 2.5);
        CHECK(planner.plan(req, table, state)->predicted_bits == 2.5 * base->predicted_bits);
    }
    SUBCASE("wasteful picks the heaviest feasible row at the lowest rate") {
        StubPlanner planner(PlannerKind::Llm, StubBehavior::Wasteful);
        const std::optional<PlanProposal> plan = planner.plan(req, table, state);
        REQUIRE(plan.has_value());
        CHECK(plan->theta == codec::ControlParameter{8, 12});
        CHECK(plan->code_rate == link::CodeRate{1, 2});
        CHECK(plan->predicted_bits == 9000.0);
        CHECK(plan->predicted_mhz == bw(9000.0, req, {1, 2}));
    }
    SUBCASE("every behavior reports infeasibility as nullopt") {
        const rda::ExperienceTable weak = make_table({{{1, 4}, 800.0, 0.0, 0.72, 1}});
        for (StubBehavior behavior : {StubBehavior::Accurate, StubBehavior::Wasteful,
                                      StubBehavior::OverstateBits, StubBehavior::UnderstateBits}) {
            StubPlanner planner(PlannerKind::Llm, behavior);
            CHECK(!planner.plan(req, weak, state).has_value());
        }
    }
}

TEST_CASE("pre_allocate maps planner outcomes to reject reasons") {
    const rda::ExperienceTable table = fixture_table();
    const SystemState state(100.0);
    const link::UserRequest req = fixture_request(link::QosTier::Medium);

    OraclePlanner oracle;
    const PreAllocation ok = pre_allocate(req, table, state, oracle);
    CHECK(ok.proposal.has_value());
    CHECK(!ok.reason.has_value());

    const rda::ExperienceTable weak = make_table({{{1, 4}, 800.0, 0.0, 0.72, 1}});
    const PreAllocation infeasible = pre_allocate(req, weak, state, oracle);
    CHECK(!infeasible.proposal.has_value());
    CHECK(infeasible.reason == RejectReason::InfeasibleQos);

    ThrowingPlanner broken;
    const PreAllocation failed = pre_allocate(req, table, state, broken);
    CHECK(!failed.proposal.has_value());
    CHECK(failed.reason == RejectReason::PlannerFailure);
}

TEST_CASE("planning prompt: state summary, QoS line, rates, sorted rows") {
    const rda::ExperienceTable table = fixture_table();
    SystemState state(100.0);
    const link::UserRequest req = fixture_request(link::QosTier::Medium);
    const std::string prompt = render_planning_prompt(req, table, state, 32);

    CHECK(prompt.find("System state: total 100.000 MHz, allocated 0.000 MHz, "
                      "idle 100.000 MHz, 0 connected users.") != std::string::npos);
    CHECK(prompt.find("New user: SNR 20.00 dB, delay budget 0.200 ms, QoS tier medium "
                      "(task accuracy must exceed 0.80).") != std::string::npos);
    CHECK(prompt.find("Allowed code rates: 1/2, 3/5, 2/3, 3/4, 4/5, 5/6, 8/9, 9/10.") !=
          std::string::npos);
    CHECK(prompt.find("{\"rank\": <int>, \"qbits\": <int>, \"code_rate\": <float>}") !=
          std::string::npos);

    // rows appear in ascending mean-bits order
    const std::size_t p800 = prompt.find("r=1 q=4 bits=800.0");
    const std::size_t p2000 = prompt.find("r=2 q=8 bits=2000.0");
    const std::size_t p9000 = prompt.find("r=8 q=12 bits=9000.0");
    REQUIRE(p800 != std::string::npos);
    REQUIRE(p2000 != std::string::npos);
    REQUIRE(p9000 != std::string::npos);
    CHECK(p800 < p2000);
    CHECK(p2000 < p9000);
    CHECK(prompt.find("accuracy=0.8500") != std::string::npos);

    // top_k keeps only the cheapest rows
    const std::string top2 = render_planning_prompt(req, table, state, 2);
    CHECK(top2.find("bits=800.0") != std::string::npos);
    CHECK(top2.find("bits=2000.0") != std::string::npos);
    CHECK(top2.find("bits=4000.0") == std::string::npos);
    CHECK(top2.find("bits=9000.0") == std::string::npos);
}

TEST_CASE("LLM client config from environment") {
    // snapshot and clear
    const char* names[4] = {"RIDAS_LLM_ENDPOINT", "RIDAS_LLM_MODEL", "RIDAS_LLM_API_KEY",
                            "RIDAS_LLM_TIMEOUT_S"};
    std::vector<std::optional<std::string>> saved;
    for (const char* name : names) {
        const char* v = std::getenv(name);
        saved.push_back(v ? std::optional<std::string>(v) : std::nullopt);
        ::unsetenv(name);
    }

    const LlmClientConfig defaults = LlmClientConfig::from_env();
    CHECK(defaults.endpoint_url.empty());
    CHECK(defaults.model == "default");
    CHECK(defaults.api_key.empty());
    CHECK(defaults.timeout_s == 30.0);
    CHECK(defaults.max_attempts == 3);

    ::setenv("RIDAS_LLM_ENDPOINT", "http://example.test:8080/v1/chat/completions", 1);
    ::setenv("RIDAS_LLM_MODEL", "planner-9000", 1);
    ::setenv("RIDAS_LLM_API_KEY", "sekrit", 1);
    ::setenv("RIDAS_LLM_TIMEOUT_S", "2.5", 1);
    const LlmClientConfig loaded = LlmClientConfig::from_env();
    CHECK(loaded.endpoint_url == "http://example.test:8080/v1/chat/completions");
    CHECK(loaded.model == "planner-9000");
    CHECK(loaded.api_key == "sekrit");
    CHECK(loaded.timeout_s == 2.5);

    ::setenv("RIDAS_LLM_TIMEOUT_S", "soon", 1);
    CHECK_THROWS_AS(LlmClientConfig::from_env(), ConfigError);

    for (std::size_t i = 0; i < 4; ++i) {
        if (saved[i]) {
            ::setenv(names[i], saved[i]->c_str(), 1);
        } else {
            ::unsetenv(names[i]);
        }
    }
}

TEST_CASE("llm_plan: parses a valid reply and fills predictions from the table") {
    ChatServer server({{200, "Given the constraints I recommend\n"
                             "{\"rank\": 2, \"qbits\": 8, \"code_rate\": 0.9}\nGood luck!"}});
    LlmClientConfig config = server_config(server);
    config.api_key = "sekrit";
    const rda::ExperienceTable table = fixture_table();
    const SystemState state(100.0);
    const link::UserRequest req = fixture_request(link::QosTier::Medium);

    const PlanProposal plan = llm_plan(req, table, state, config);
    CHECK(plan.theta == codec::ControlParameter{2, 8});
    CHECK(plan.code_rate == link::CodeRate{9, 10});
    CHECK(plan.predicted_bits == 2000.0); // from the table, not the reply
    CHECK(plan.predicted_mhz == bw(2000.0, req, {9, 10}));
    CHECK(plan.source == PlannerKind::Llm);
    CHECK(server.hits() == 1);

    // the request carried the model, zero temperature, prompt, and API key
    const nlohmann::json body = nlohmann::json::parse(server.body(0));
    CHECK(body["model"] == "test-model");
    CHECK(body["temperature"] == 0);
    const std::string user_msg = body["messages"][1]["content"].get<std::string>();
    CHECK(user_msg.find("New user: SNR 20.00 dB") != std::string::npos);
    CHECK(server.auth(0) == "Bearer sekrit");
}

TEST_CASE("llm_plan: out-of-set code rate snaps to the nearest allowed value") {
    ChatServer server({{200, "{\"rank\": 2, \"qbits\": 8, \"code_rate\": 0.7}"}});
    const PlanProposal plan = llm_plan(fixture_request(), fixture_table(), SystemState(100.0),
                                       server_config(server));
    CHECK(plan.code_rate == link::CodeRate{2, 3});
}

TEST_CASE("llm_plan: plan object may be buried in prose or a wrapper object") {
    ChatServer server({{200, "Thoughts: {braces, not JSON} then the answer "
                             "{\"result\": {\"rank\": 4, \"qbits\": 8, \"code_rate\": 0.75}}"}});
    const PlanProposal plan = llm_plan(fixture_request(), fixture_table(), SystemState(100.0),
                                       server_config(server));
    CHECK(plan.theta == codec::ControlParameter{4, 8});
    CHECK(plan.code_rate == link::CodeRate{3, 4});
    CHECK(server.hits() == 1);
}

TEST_CASE("llm_plan: retries malformed replies until one parses") {
    ChatServer server({
        {200, "I cannot answer in JSON."},
        {200, "{\"rank\": 2.5, \"qbits\": 8, \"code_rate\": 0.9}"}, // non-integer rank
        {200, "{\"rank\": 2, \"qbits\": 8, \"code_rate\": 0.9}"},
    });
    const PlanProposal plan = llm_plan(fixture_request(), fixture_table(), SystemState(100.0),
                                       server_config(server));
    CHECK(plan.theta == codec::ControlParameter{2, 8});
    CHECK(server.hits() == 3);
}

TEST_CASE("llm_plan: gives up after max_attempts and reports the last error") {
    ChatServer server({{200, "no json here"}});
    try {
        llm_plan(fixture_request(), fixture_table(), SystemState(100.0), server_config(server));
        FAIL("expected PlannerFailureError");
    } catch (const PlannerFailureError& e) {
        CHECK(std::string(e.what()).find("3 attempts") != std::string::npos);
    }
    CHECK(server.hits() == 3);
}

TEST_CASE("llm_plan: unmeasured operating points are rejected and retried") {
    ChatServer server({
        {200, "{\"rank\": 7, \"qbits\": 7, \"code_rate\": 0.9}"}, // not in the table
        {200, "{\"rank\": 0, \"qbits\": 8, \"code_rate\": 0.9}"}, // out of range
        {200, "{\"rank\": 1, \"qbits\": 4, \"code_rate\": 0.5}"},
    });
    const PlanProposal plan = llm_plan(fixture_request(), fixture_table(), SystemState(100.0),
                                       server_config(server));
    CHECK(plan.theta == codec::ControlParameter{1, 4});
    CHECK(plan.code_rate == link::CodeRate{1, 2});
    CHECK(server.hits() == 3);
}

TEST_CASE("llm_plan: HTTP errors consume attempts, then a good reply lands") {
    ChatServer server({
        {500, ""},
        {200, "{\"rank\": 2, \"qbits\": 8, \"code_rate\": 0.9}"},
    });
    const PlanProposal plan = llm_plan(fixture_request(), fixture_table(), SystemState(100.0),
                                       server_config(server));
    CHECK(plan.theta == codec::ControlParameter{2, 8});
    CHECK(server.hits() == 2);
}

TEST_CASE("llm_plan: custom endpoint paths are honored") {
    ChatServer server({{200, "{\"rank\": 2, \"qbits\": 8, \"code_rate\": 0.9}"}});
    LlmClientConfig config = server_config(server);
    config.endpoint_url = server.endpoint() + "/custom/chat";
    const PlanProposal plan =
        llm_plan(fixture_request(), fixture_table(), SystemState(100.0), config);
    CHECK(plan.theta == codec::ControlParameter{2, 8});
    CHECK(server.hits() == 1);
}

TEST_CASE("llm_plan: configuration and transport failures") {
    const rda::ExperienceTable table = fixture_table();
    const link::UserRequest req = fixture_request();
    const SystemState state(100.0);

    LlmClientConfig empty;
    CHECK_THROWS_AS(llm_plan(req, table, state, empty), PlannerFailureError);

    LlmClientConfig no_scheme;
    no_scheme.endpoint_url = "localhost:9";
    CHECK_THROWS_AS(llm_plan(req, table, state, no_scheme), PlannerFailureError);

    LlmClientConfig refused;
    refused.endpoint_url = "http://127.0.0.1:9"; // nothing listens on the discard port
    refused.timeout_s = 2.0;
    CHECK_THROWS_AS(llm_plan(req, table, state, refused), PlannerFailureError);

    ChatServer server({{200, "{\"rank\": 2, \"qbits\": 8, \"code_rate\": 0.9}"}});
    CHECK_THROWS_AS(llm_plan(req, rda::ExperienceTable{}, state, server_config(server)),
                    PlannerFailureError);
    CHECK(server.hits() == 0); // empty table fails before any request
}

TEST_CASE("prompt_plan tags the proposal as the prompt baseline") {
    ChatServer server({{200, "{\"rank\": 2, \"qbits\": 8, \"code_rate\": 0.9}"}});
    const PlanProposal plan = prompt_plan(fixture_request(), fixture_table(), SystemState(100.0),
                                          server_config(server));
    CHECK(plan.source == PlannerKind::Prompt);
}

TEST_CASE("HttpChatPlanner: proves infeasibility locally, otherwise asks the backend") {
    ChatServer server({{200, "{\"rank\": 2, \"qbits\": 8, \"code_rate\": 0.9}"}});
    HttpChatPlanner planner(server_config(server), PlannerKind::Llm);
    const SystemState state(100.0);

    const rda::ExperienceTable weak = make_table({{{1, 4}, 800.0, 0.0, 0.72, 1}});
    CHECK(!planner.plan(fixture_request(link::QosTier::High), weak, state).has_value());
    CHECK(server.hits() == 0);

    const std::optional<PlanProposal> plan =
        planner.plan(fixture_request(link::QosTier::Medium), fixture_table(), state);
    REQUIRE(plan.has_value());
    CHECK(plan->theta == codec::ControlParameter{2, 8});
    CHECK(plan->source == PlannerKind::Llm);
    CHECK(server.hits() == 1);
    CHECK(planner.kind() == PlannerKind::Llm);
}

TEST_CASE("verify_plan: re-measures, replaces predictions, folds into the table") {
    const rda::FeatureSource src = rda::FeatureSource::gaussian(17, 8, 8, 1.0);
    const rda::AccuracyModel model = rda::AccuracyModel::synthetic();
    const link::UserRequest req = fixture_request(link::QosTier::Medium);

    rda::ExperienceTable table;
    table.merge({{2, 8}, 1000.0, 0.0, 0.95, 5}, model); // optimistic stale row

    PlanProposal proposal;
    proposal.theta = {2, 8};
    proposal.code_rate = {3, 4};
    proposal.predicted_bits = 1000.0;
    proposal.predicted_mhz = bw(1000.0, req, {3, 4});

    const rda::ExperienceRecord probe = rda::measure(src, {2, 8}, 3, model);
    const VerifiedPlan v = verify_plan(proposal, req, src, model, 3, table);

    CHECK(v.measured_bits == probe.mean_bits);
    CHECK(v.measured_nmse == probe.mean_nmse);
    CHECK(v.accuracy == probe.accuracy);
    CHECK(v.verified_mhz == bw(probe.mean_bits, req, {3, 4}));
    CHECK(v.plan.theta == proposal.theta);

    // the probe was merged: counts add, means re-weight
    const rda::ExperienceRecord* row = table.find({2, 8});
    REQUIRE(row != nullptr);
    CHECK(row->sample_count == 8);
    CHECK(row->mean_bits ==
          doctest::Approx((5.0 * 1000.0 + 3.0 * probe.mean_bits) / 8.0).epsilon(1e-12));
}

TEST_CASE("verify_plan: the measured-accuracy bound is strict") {
    const rda::FeatureSource src = rda::FeatureSource::gaussian(17, 8, 8, 1.0);
    const link::UserRequest req = fixture_request(link::QosTier::Medium); // bound 0.80

    PlanProposal proposal;
    proposal.theta = {2, 8};
    proposal.code_rate = {3, 4};

    const rda::AccuracyModel at_bound = rda::AccuracyModel::calibration({{{2, 8}, 0.80}});
    rda::ExperienceTable t1;
    CHECK(!verify_plan(proposal, req, src, at_bound, 2, t1).qos_ok);

    const rda::AccuracyModel above = rda::AccuracyModel::calibration({{{2, 8}, 0.81}});
    rda::ExperienceTable t2;
    CHECK(verify_plan(proposal, req, src, above, 2, t2).qos_ok);
}

namespace {

/// Two-row table where every tier is satisfiable and the oracle target is
/// the 100-bit row at rate 9/10.
rda::ExperienceTable reclaim_table() {
    return make_table({
        {{1, 2}, 100.0, 0.0, 0.95, 1},
        {{4, 8}, 1000.0, 0.0, 0.96, 1},
    });
}

UserRecord padded_user(std::uint64_t id, double allocated) {
    UserRecord user;
    user.user_id = id;
    user.theta = {4, 8};
    user.code_rate = {1, 2};
    user.allocated_mhz = allocated;
    user.link.snr_db = 30.0;
    user.link.code_rate = {1, 2};
    user.link.delay_budget_s = 0.5e-3;
    user.qos = link::QosRequirement::from_tier(link::QosTier::Low);
    user.measured_bits = 1000.0;
    return user;
}

double reclaim_target_mhz() {
    link::LinkParams params{30.0, {9, 10}, 0.5e-3};
    return link::required_bandwidth_mhz(100.0, params);
}

} // namespace

TEST_CASE("reclaim: most slack first, stops once the deficit is covered") {
    const rda::ExperienceTable table = reclaim_table();
    const double target = reclaim_target_mhz();

    SystemState state(50.0);
    state.users().push_back(padded_user(1, 10.0));
    state.users().push_back(padded_user(2, 8.0));

    const ReclaimResult result = reclaim(state, 5.0, table);
    REQUIRE(result.adjustments.size() == 1);
    CHECK(result.adjustments[0].user_id == 1); // slack 10-t > 8-t
    CHECK(result.freed_mhz == doctest::Approx(10.0 - target).epsilon(1e-12));

    const UserRecord& u1 = state.users()[0];
    CHECK(u1.theta == codec::ControlParameter{1, 2});
    CHECK(u1.code_rate == link::CodeRate{9, 10});
    CHECK(u1.link.code_rate == link::CodeRate{9, 10});
    CHECK(u1.measured_bits == 100.0);
    CHECK(u1.allocated_mhz == target);
    CHECK(state.users()[1].allocated_mhz == 8.0); // untouched

    const Adjustment& adj = result.adjustments[0];
    CHECK(adj.old_theta == codec::ControlParameter{4, 8});
    CHECK(adj.new_theta == codec::ControlParameter{1, 2});
    CHECK(adj.old_mhz == 10.0);
    CHECK(adj.new_mhz == target);
}

TEST_CASE("reclaim: visits more users when one is not enough, may fall short") {
    const rda::ExperienceTable table = reclaim_table();
    const double target = reclaim_target_mhz();

    SystemState state(50.0);
    state.users().push_back(padded_user(1, 10.0));
    state.users().push_back(padded_user(2, 8.0));

    const ReclaimResult both = reclaim(state, 15.0, table);
    CHECK(both.adjustments.size() == 2);
    CHECK(both.adjustments[0].user_id == 1);
    CHECK(both.adjustments[1].user_id == 2);
    CHECK(both.freed_mhz == doctest::Approx(18.0 - 2.0 * target).epsilon(1e-12));

    SystemState more(50.0);
    more.users().push_back(padded_user(1, 10.0));
    const ReclaimResult partial = reclaim(more, 100.0, table);
    CHECK(partial.adjustments.size() == 1);
    CHECK(partial.freed_mhz < 100.0); // falling short is a valid outcome
}

TEST_CASE("reclaim: minimal users yield nothing; slack ties break by user id") {
    const rda::ExperienceTable table = reclaim_table();
    const double target = reclaim_target_mhz();

    SystemState minimal(50.0);
    UserRecord tight = padded_user(1, target);
    tight.theta = {1, 2};
    tight.code_rate = {9, 10};
    tight.link.code_rate = {9, 10};
    minimal.users().push_back(tight);
    const SystemState before = minimal;
    const ReclaimResult none = reclaim(minimal, 5.0, table);
    CHECK(none.freed_mhz == 0.0);
    CHECK(none.adjustments.empty());
    CHECK(minimal == before);

    // identical links and allocations give identical slack; lower id first
    SystemState tied(50.0);
    tied.users().push_back(padded_user(7, 9.0));
    tied.users().push_back(padded_user(3, 9.0));
    const ReclaimResult tie = reclaim(tied, 5.0, table);
    REQUIRE(tie.adjustments.size() == 1);
    CHECK(tie.adjustments[0].user_id == 3);
}

namespace {

struct AdmitFixture {
    rda::FeatureSource src = rda::FeatureSource::gaussian(5, 8, 8, 1.0);
    rda::AccuracyModel model = rda::AccuracyModel::calibration({
        {{2, 4}, 0.65},
        {{2, 8}, 0.75},
        {{4, 4}, 0.82},
        {{4, 8}, 0.88},
        {{8, 4}, 0.91},
        {{8, 8}, 0.97},
    });
    rda::ExperienceTable table;
    AdmitOptions options;

    AdmitFixture() {
        table = rda::profile_grid(src, {2, 4, 8}, {4, 8}, 3, model);
        options.n_probe = 3; // matches the profiling depth: verification confirms
    }
};

} // namespace

TEST_CASE("admit: success within idle bandwidth") {
    AdmitFixture fx;
    SystemState state(100.0);
    OraclePlanner planner;
    const link::UserRequest req = fixture_request(link::QosTier::Low);

    const std::optional<PlanProposal> expected = testutil::brute_force_plan(req, fx.table);
    REQUIRE(expected.has_value());

    const AdmissionOutcome outcome =
        admit(req, state, fx.table, planner, fx.src, fx.model, fx.options);
    REQUIRE(outcome.admitted());
    CHECK(!outcome.reason.has_value());
    CHECK(outcome.realloc_rounds == 0);
    CHECK(outcome.freed_mhz == 0.0);
    CHECK(state.users().size() == 1);

    const UserRecord& rec = *outcome.record;
    CHECK(rec.user_id == req.user_id);
    CHECK(rec.theta == expected->theta);
    CHECK(rec.code_rate == expected->code_rate);
    CHECK(rec.link.code_rate == expected->code_rate);
    CHECK(rec.qos.tier == link::QosTier::Low);
    // n_probe == profiling depth, so verification reproduces the prediction
    CHECK(rec.allocated_mhz == doctest::Approx(expected->predicted_mhz).epsilon(1e-12));
    CHECK(state.users()[0] == rec);
    CHECK(state.allocated_mhz() == rec.allocated_mhz);
}

TEST_CASE("admit: planner rejection leaves state and table untouched") {
    AdmitFixture fx;
    SystemState state(100.0);
    const SystemState state_before = state;
    const rda::ExperienceTable table_before = fx.table;
    OraclePlanner planner;

    // a table whose best row misses the bound forces an InfeasibleQos reject
    rda::ExperienceTable weak = make_table({{{1, 4}, 800.0, 0.0, 0.72, 1}});
    const link::UserRequest req = fixture_request(link::QosTier::High);
    const AdmissionOutcome outcome =
        admit(req, state, weak, planner, fx.src, fx.model, fx.options);
    CHECK(!outcome.admitted());
    CHECK(outcome.reason == RejectReason::InfeasibleQos);
    CHECK(state == state_before);
    CHECK(weak == make_table({{{1, 4}, 800.0, 0.0, 0.72, 1}}));

    ThrowingPlanner broken;
    const AdmissionOutcome failed =
        admit(req, state, fx.table, broken, fx.src, fx.model, fx.options);
    CHECK(!failed.admitted());
    CHECK(failed.reason == RejectReason::PlannerFailure);
    CHECK(state == state_before);
    CHECK(fx.table == table_before);
}

TEST_CASE("admit: verification catches an optimistic table row") {
    AdmitFixture fx;
    // a fabricated row claims excellent accuracy at a point the calibration
    // table never measured; live verification falls back to the synthetic
    // curve at the real (large) distortion and vetoes it
    fx.table.merge({{3, 8}, 500.0, 0.0, 0.95, 1}, fx.model);
    SystemState state(100.0);
    const SystemState state_before = state;
    FixedThetaPlanner planner({3, 8});
    const link::UserRequest req = fixture_request(link::QosTier::Medium);

    const AdmissionOutcome outcome =
        admit(req, state, fx.table, planner, fx.src, fx.model, fx.options);
    CHECK(!outcome.admitted());
    CHECK(outcome.reason == RejectReason::InfeasibleQos);
    CHECK(state == state_before);

    // the probe stayed in the experience memory even though admission failed
    const rda::ExperienceRecord* row = fx.table.find({3, 8});
    REQUIRE(row != nullptr);
    CHECK(row->sample_count == 4); // 1 fabricated + 3 probes
    CHECK(row->accuracy < 0.80);   // dragged down toward the measurement
}

TEST_CASE("admit: insufficient bandwidth with nothing to reclaim") {
    AdmitFixture fx;
    SystemState state(0.001);
    const SystemState state_before = state;
    OraclePlanner planner;
    const link::UserRequest req = fixture_request(link::QosTier::Low);

    const AdmissionOutcome outcome =
        admit(req, state, fx.table, planner, fx.src, fx.model, fx.options);
    CHECK(!outcome.admitted());
    CHECK(outcome.reason == RejectReason::InsufficientBandwidth);
    CHECK(outcome.freed_mhz == 0.0);
    CHECK(outcome.realloc_rounds == 1); // one reclaim attempt found nothing
    CHECK(state == state_before);

    AdmitOptions no_realloc = fx.options;
    no_realloc.reallocate = false;
    const AdmissionOutcome fast =
        admit(req, state, fx.table, planner, fx.src, fx.model, no_realloc);
    CHECK(!fast.admitted());
    CHECK(fast.reason == RejectReason::InsufficientBandwidth);
    CHECK(fast.realloc_rounds == 0);
    CHECK(state == state_before);
}

TEST_CASE("admit: wasteful plans trigger reallocation of earlier users") {
    AdmitFixture fx;
    StubPlanner wasteful(PlannerKind::Llm, StubBehavior::Wasteful);
    const link::UserRequest base = fixture_request(link::QosTier::Low);

    // the wasteful choice is the heaviest profiled row at rate 1/2
    const rda::ExperienceRecord* heavy = fx.table.find({8, 8});
    REQUIRE(heavy != nullptr);
    const double wasteful_mhz = bw(heavy->mean_bits, base, {1, 2});

    SystemState state(2.5 * wasteful_mhz);
    for (std::uint64_t id = 1; id <= 3; ++id) {
        link::UserRequest req = base;
        req.user_id = id;
        const AdmissionOutcome outcome =
            admit(req, state, fx.table, wasteful, fx.src, fx.model, fx.options);
        REQUIRE(outcome.admitted());
        if (id <= 2) {
            CHECK(outcome.realloc_rounds == 0);
        } else {
            // the third user does not fit until an earlier one is retuned
            CHECK(outcome.realloc_rounds >= 1);
            CHECK(outcome.freed_mhz > 0.0);
        }
    }
    CHECK(state.users().size() == 3);
    CHECK(state.allocated_mhz() <= state.total_bandwidth_mhz() + 1e-9);
    // user 1 gave up its padding: no longer on the wasteful operating point
    CHECK(state.users()[0].theta != codec::ControlParameter{8, 8});
}

TEST_CASE("admit without verification books the planner's own numbers") {
    AdmitFixture fx;
    AdmitOptions prompt_mode;
    prompt_mode.verify = false;
    prompt_mode.reallocate = false;
    StubPlanner liar(PlannerKind::Prompt, StubBehavior::UnderstateBits, 4.0);
    const link::UserRequest req = fixture_request(link::QosTier::Low);

    SystemState state(100.0);
    const AdmissionOutcome outcome =
        admit(req, state, fx.table, liar, fx.src, fx.model, prompt_mode);
    REQUIRE(outcome.admitted());

    const std::optional<PlanProposal> honest = testutil::brute_force_plan(req, fx.table);
    REQUIRE(honest.has_value());
    CHECK(outcome.record->measured_bits == honest->predicted_bits / 4.0);
    CHECK(outcome.record->allocated_mhz == bw(honest->predicted_bits / 4.0, req, honest->code_rate));
    CHECK(outcome.record->allocated_mhz < honest->predicted_mhz); // under-booked
}

TEST_CASE("user ledger: save and load round-trip") {
    SystemState state(100.0);
    UserRecord u1;
    u1.user_id = 42;
    u1.theta = {4, 8};
    u1.code_rate = {3, 4};
    u1.link.snr_db = 19.25;
    u1.link.code_rate = {3, 4};
    u1.link.delay_budget_s = 0.2e-3;
    u1.qos = link::QosRequirement::from_tier(link::QosTier::Medium);
    u1.measured_bits = 2345.5;
    u1.allocated_mhz = link::required_bandwidth_mhz(u1.measured_bits, u1.link);
    UserRecord u2;
    u2.user_id = 7;
    u2.theta = {1, 2};
    u2.code_rate = {9, 10};
    u2.link.snr_db = 28.0;
    u2.link.code_rate = {9, 10};
    u2.link.delay_budget_s = 0.05e-3;
    u2.qos = link::QosRequirement::from_tier(link::QosTier::High);
    u2.measured_bits = 100.0;
    u2.allocated_mhz = link::required_bandwidth_mhz(u2.measured_bits, u2.link);
    state.users().push_back(u1);
    state.users().push_back(u2);

    const auto path = temp_file("users.csv");
    save_users(state, path);
    const std::vector<UserRecord> loaded = load_users(path);
    REQUIRE(loaded.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        const UserRecord& orig = state.users()[i];
        const UserRecord& got = loaded[i];
        CHECK(got.user_id == orig.user_id);
        CHECK(got.theta == orig.theta);
        CHECK(got.code_rate == orig.code_rate);
        CHECK(got.allocated_mhz == orig.allocated_mhz); // %.17g is exact
        CHECK(got.link.snr_db == orig.link.snr_db);
        CHECK(got.link.delay_budget_s ==
              doctest::Approx(orig.link.delay_budget_s).epsilon(1e-12));
        CHECK(got.qos.tier == orig.qos.tier);
        CHECK(got.qos.min_accuracy == orig.qos.min_accuracy);
        // bits are reconstructed by inverting the bandwidth formula
        CHECK(got.measured_bits == doctest::Approx(orig.measured_bits).epsilon(1e-9));
    }
    std::filesystem::remove(path);
}

TEST_CASE("user ledger: malformed files are rejected") {
    const auto path = temp_file("bad_users.csv");
    CHECK_THROWS_AS(load_users(path), IoError);
    {
        std::ofstream out(path);
        out << "wrong,header\n";
    }
    CHECK_THROWS_AS(load_users(path), IoError);
    {
        std::ofstream out(path);
        out << "user_id,r,q,code_rate,allocated_mhz,snr_db,delay_ms,tier\n"
            << "1,4,8,3/4,1.0,20.0,0.2\n"; // 7 fields
    }
    CHECK_THROWS_AS(load_users(path), IoError);
    {
        std::ofstream out(path);
        out << "user_id,r,q,code_rate,allocated_mhz,snr_db,delay_ms,tier\n"
            << "1,4,8,3/4,1.0,20.0,0.2,platinum\n";
    }
    CHECK_THROWS_AS(load_users(path), InvalidInputError);
    {
        std::ofstream out(path);
        out << "user_id,r,q,code_rate,allocated_mhz,snr_db,delay_ms,tier\n"
            << "1,4,8,7/8,1.0,20.0,0.2,low\n"; // rate outside the allowed set
    }
    CHECK_THROWS_AS(load_users(path), InvalidInputError);
    {
        std::ofstream out(path);
        out << "user_id,r,q,code_rate,allocated_mhz,snr_db,delay_ms,tier\n"
            << "one,4,8,3/4,1.0,20.0,0.2,low\n";
    }
    CHECK_THROWS_AS(load_users(path), IoError);
    std::filesystem::remove(path);
}
