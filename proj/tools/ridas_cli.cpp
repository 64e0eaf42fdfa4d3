#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ridas/errors.hpp"
#include "ridas/sim.hpp"

namespace fs = std::filesystem;
using namespace ridas;

namespace {

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : csv) {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

sim::ScenarioConfig load_config(const std::string& path) {
    return path.empty() ? sim::ScenarioConfig{} : sim::ScenarioConfig::from_file(path);
}

link::CodeRate parse_rate_arg(const std::string& text) {
    if (text.find('/') != std::string::npos) return link::code_rate_from_string(text);
    return link::snap_code_rate(std::stod(text));
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"rate-controllable representation codec and bandwidth admission simulator"};
    app.require_subcommand(1);

    std::string config_path, out_path, in_path;
    std::string policy_arg = "oracle";
    std::string policies_arg = "oracle,rule,prompt,llm";
    std::string seeds_arg;
    std::string rate_arg = "1/2";
    double bits_arg = 0.0, delay_ms_arg = 0.5, snr_arg = 30.0;
    std::uint64_t height_arg = 0, width_arg = 0, bits_u64_arg = 0;
    int rank_arg = 1, qbits_arg = 8;

    CLI::App* profile = app.add_subcommand("profile", "measure the (rank, qbits) grid");
    profile->add_option("--config", config_path, "scenario file (defaults when omitted)");
    profile->add_option("--out", out_path, "experience-table CSV destination")->required();

    CLI::App* run = app.add_subcommand("run", "run one admission scenario");
    run->add_option("--config", config_path, "scenario file (defaults when omitted)");
    run->add_option("--policy", policy_arg, "oracle | rule | prompt | llm");
    run->add_option("--out", out_path, "directory for events.csv and summary.csv")->required();

    CLI::App* compare = app.add_subcommand("compare", "run several policies on one queue");
    compare->add_option("--config", config_path, "scenario file (defaults when omitted)");
    compare->add_option("--policies", policies_arg, "comma-separated policy list");
    compare->add_option("--seeds", seeds_arg, "comma-separated seed list (default: config seed)");
    compare->add_option("--out", out_path, "directory for summary.csv and curve.csv")->required();

    CLI::App* bandwidth = app.add_subcommand("bandwidth", "required bandwidth for a payload");
    bandwidth->add_option("--bits", bits_arg, "payload size in bits")->required();
    bandwidth->add_option("--rate,--code-rate", rate_arg, "rational like 3/4, or a value to snap");
    bandwidth->add_option("--delay-ms", delay_ms_arg, "delay budget in milliseconds");
    bandwidth->add_option("--snr-db", snr_arg, "channel SNR in dB");

    CLI::App* encode = app.add_subcommand("encode", "compress a matrix file into a stream");
    encode->add_option("--in", in_path, "text matrix file ('m n' header, then rows)")->required();
    encode->add_option("--rank", rank_arg, "decomposition rank")->required();
    encode->add_option("--qbits", qbits_arg, "quantization bits, 1..16");
    encode->add_option("--out", out_path, "binary stream destination")->required();

    CLI::App* decode = app.add_subcommand("decode", "reconstruct a matrix from a stream");
    decode->add_option("--in", in_path, "binary stream file")->required();
    decode->add_option("--out", out_path, "text matrix destination")->required();

    CLI::App* bpp_cmd = app.add_subcommand("bpp", "bits per pixel of a stream size");
    bpp_cmd->add_option("--bits", bits_u64_arg, "stream size in bits")->required();
    bpp_cmd->add_option("--height", height_arg, "image height")->required();
    bpp_cmd->add_option("--width", width_arg, "image width")->required();

    CLI11_PARSE(app, argc, argv);

    std::vector<fs::path> partial_outputs;
    try {
        if (profile->parsed()) {
            const sim::ScenarioConfig cfg = load_config(config_path);
            const rda::FeatureSource src =
                cfg.source.kind == sim::SourceSpec::Kind::File
                    ? rda::FeatureSource::from_file(cfg.source.path)
                    : rda::FeatureSource::gaussian(cfg.seed, cfg.source.m, cfg.source.n,
                                                   cfg.source.scale);
            const rda::AccuracyModel model =
                cfg.accuracy_model.kind == sim::AccuracySpec::Kind::Calibration
                    ? rda::AccuracyModel::calibration_from_csv(cfg.accuracy_model.path)
                    : rda::AccuracyModel::synthetic(cfg.accuracy_model.acc_max,
                                                    cfg.accuracy_model.acc_min,
                                                    cfg.accuracy_model.slope);
            const rda::ExperienceTable table =
                rda::profile_grid(src, cfg.rank_grid, cfg.qbits_grid, cfg.n_probe, model);
            partial_outputs.push_back(out_path);
            table.to_csv(out_path);
            std::printf("profiled %zu operating points -> %s\n", table.size(), out_path.c_str());
        } else if (run->parsed()) {
            const sim::ScenarioConfig cfg = load_config(config_path);
            const sim::SimReport report =
                sim::run_scenario(cfg, sim::policy_from_name(policy_arg));
            partial_outputs.push_back(fs::path(out_path) / "events.csv");
            partial_outputs.push_back(fs::path(out_path) / "summary.csv");
            sim::export_csv(report, out_path);
            std::printf("policy=%s seed=%llu admitted=%llu avg=%.6f MHz/user\n",
                        sim::policy_name(report.policy),
                        static_cast<unsigned long long>(report.seed),
                        static_cast<unsigned long long>(report.admitted_count),
                        report.avg_mhz_per_user());
        } else if (compare->parsed()) {
            const sim::ScenarioConfig cfg = load_config(config_path);
            std::vector<sim::Policy> policies;
            for (const std::string& name : split_list(policies_arg)) {
                policies.push_back(sim::policy_from_name(name));
            }
            std::vector<std::uint64_t> seeds;
            for (const std::string& tok : split_list(seeds_arg)) seeds.push_back(std::stoull(tok));
            const sim::ComparisonReport report = sim::compare_policies(cfg, policies, seeds);
            partial_outputs.push_back(fs::path(out_path) / "summary.csv");
            partial_outputs.push_back(fs::path(out_path) / "curve.csv");
            sim::export_csv(report, out_path);
            for (const sim::SimReport& r : report.runs) {
                std::printf("policy=%s seed=%llu admitted=%llu avg=%.6f MHz/user\n",
                            sim::policy_name(r.policy), static_cast<unsigned long long>(r.seed),
                            static_cast<unsigned long long>(r.admitted_count),
                            r.avg_mhz_per_user());
            }
        } else if (bandwidth->parsed()) {
            link::LinkParams params;
            params.snr_db = snr_arg;
            params.code_rate = parse_rate_arg(rate_arg);
            params.delay_budget_s = delay_ms_arg * 1e-3;
            std::printf("%.6f MHz\n", link::required_bandwidth_mhz(bits_arg, params));
        } else if (encode->parsed()) {
            const Matrix z = read_matrix(in_path);
            const codec::ControlParameter theta{rank_arg, qbits_arg};
            codec::validate(theta);
            const svid::SvidFactors factors =
                svid::svid_decompose(z, static_cast<std::size_t>(rank_arg));
            const codec::BitStream stream = codec::pack_stream(factors, qbits_arg);
            partial_outputs.push_back(out_path);
            write_bytes(out_path, stream.bytes);
            const double nmse = svid::approximation_error(z, rda::rda_decode(stream)).nmse;
            std::printf("encoded %zux%zu at r=%d q=%d: %llu bits, nmse=%.9g -> %s\n", z.rows(),
                        z.cols(), rank_arg, qbits_arg,
                        static_cast<unsigned long long>(stream.total_bits()), nmse,
                        out_path.c_str());
        } else if (decode->parsed()) {
            codec::BitStream stream;
            stream.bytes = read_bytes(in_path);
            const Matrix zhat = rda::rda_decode(stream);
            partial_outputs.push_back(out_path);
            write_matrix(zhat, out_path);
            std::printf("decoded %zux%zu -> %s\n", zhat.rows(), zhat.cols(), out_path.c_str());
        } else if (bpp_cmd->parsed()) {
            std::printf("%.6f\n", rda::bpp(bits_u64_arg, height_arg, width_arg));
        }
    } catch (const std::exception& e) {
        for (const fs::path& path : partial_outputs) {
            std::error_code ec;
            fs::remove(path, ec);
        }
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
