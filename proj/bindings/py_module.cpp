#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ridas/errors.hpp"
#include "ridas/sim.hpp"

namespace py = pybind11;
using namespace ridas;

namespace {

Matrix matrix_from_numpy(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    if (a.ndim() != 2) throw InvalidInputError("expected a 2-D array");
    Matrix m(static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    std::copy(a.data(), a.data() + a.size(), m.data().begin());
    return m;
}

py::array_t<double> matrix_to_numpy(const Matrix& m) {
    py::array_t<double> a({m.rows(), m.cols()});
    std::copy(m.data().begin(), m.data().end(), a.mutable_data());
    return a;
}

py::array_t<double> sign_to_numpy(const SignMatrix& s) {
    py::array_t<double> a({s.rows(), s.cols()});
    double* out = a.mutable_data();
    for (std::size_t i = 0; i < s.data().size(); ++i) out[i] = s.data()[i];
    return a;
}

sim::ScenarioConfig config_from_object(const py::object& obj) {
    if (py::isinstance<py::str>(obj)) {
        return sim::ScenarioConfig::from_file(obj.cast<std::string>());
    }
    std::map<std::string, std::string> kv;
    for (const auto& item : obj.cast<py::dict>()) {
        kv[py::str(item.first).cast<std::string>()] = py::str(item.second).cast<std::string>();
    }
    return sim::ScenarioConfig::from_map(kv);
}

py::dict report_to_dict(const sim::SimReport& report) {
    py::dict d;
    d["policy"] = sim::policy_name(report.policy);
    d["seed"] = report.seed;
    d["total_bandwidth_mhz"] = report.total_bandwidth_mhz;
    d["admitted"] = report.admitted_count;
    d["avg_mhz_per_user"] = report.avg_mhz_per_user();
    py::list events;
    for (const sim::SimEvent& e : report.events) {
        py::dict row;
        row["event_index"] = e.event_index;
        row["user_id"] = e.user_id;
        row["admitted"] = e.admitted;
        row["reason"] = e.reason;
        row["r"] = e.r;
        row["q"] = e.q;
        row["code_rate"] = e.code_rate;
        row["allocated_mhz"] = e.allocated_mhz;
        row["realloc_rounds"] = e.realloc_rounds;
        row["cum_fraction"] = e.cum_fraction;
        events.append(row);
    }
    d["events"] = events;
    return d;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "rate-controllable representation codec and bandwidth admission simulator";

    py::register_exception<Error>(m, "RidasError", PyExc_RuntimeError);

    // ---- decomposition
    m.def(
        "svid_decompose",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& z,
           std::size_t rank) {
            const svid::SvidFactors f = svid::svid_decompose(matrix_from_numpy(z), rank);
            return py::make_tuple(sign_to_numpy(f.sign), matrix_to_numpy(f.low_rank.u),
                                  py::array_t<double>(py::cast(f.low_rank.singular_values)),
                                  matrix_to_numpy(f.low_rank.v));
        },
        py::arg("z"), py::arg("rank"),
        "Sign matrix plus truncated SVD of |Z|; returns (sign, U, sigma, V).");

    m.def(
        "truncated_svd",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           std::size_t rank) {
            const svid::LowRankFactors f = svid::truncated_svd(matrix_from_numpy(a), rank);
            return py::make_tuple(matrix_to_numpy(f.u),
                                  py::array_t<double>(py::cast(f.singular_values)),
                                  matrix_to_numpy(f.v));
        },
        py::arg("a"), py::arg("rank"), "Top-rank singular triplets; returns (U, sigma, V).");

    m.def(
        "reconstruction_nmse",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& z,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& zhat) {
            return svid::approximation_error(matrix_from_numpy(z), matrix_from_numpy(zhat)).nmse;
        },
        py::arg("z"), py::arg("zhat"), "||Z - Zhat||_F^2 / ||Z||_F^2.");

    // ---- codec
    m.def(
        "encode_matrix",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& z, int rank,
           int qbits) {
            codec::validate({rank, qbits});
            const Matrix mat = matrix_from_numpy(z);
            const svid::SvidFactors f =
                svid::svid_decompose(mat, static_cast<std::size_t>(rank));
            const codec::BitStream stream = codec::pack_stream(f, qbits);
            return py::bytes(reinterpret_cast<const char*>(stream.bytes.data()),
                             stream.bytes.size());
        },
        py::arg("z"), py::arg("rank"), py::arg("qbits"),
        "Compress a matrix into the serialized stream format.");

    m.def(
        "decode_matrix",
        [](const py::bytes& blob) {
            codec::BitStream stream;
            const std::string buf = blob;
            stream.bytes.assign(buf.begin(), buf.end());
            return matrix_to_numpy(rda::rda_decode(stream));
        },
        py::arg("stream"), "Reconstruct a matrix from a serialized stream.");

    m.def(
        "stream_info",
        [](const py::bytes& blob) {
            codec::BitStream stream;
            const std::string buf = blob;
            stream.bytes.assign(buf.begin(), buf.end());
            const codec::StreamHeader h = codec::read_header(stream);
            py::dict d;
            d["m"] = h.m;
            d["n"] = h.n;
            d["r"] = h.r;
            d["q"] = h.q;
            d["total_bits"] = stream.total_bits();
            return d;
        },
        py::arg("stream"), "Header fields and size of a serialized stream.");

    m.def("bpp", &rda::bpp, py::arg("total_bits"), py::arg("height"), py::arg("width"),
          "total_bits / (3 * height * width).");

    // ---- link model
    m.def("spectral_efficiency", &link::spectral_efficiency, py::arg("snr_db"),
          "log2(1 + 10^(snr/10)).");
    m.def(
        "required_bandwidth_mhz",
        [](double bits, double code_rate, double delay_ms, double snr_db) {
            link::LinkParams params;
            params.snr_db = snr_db;
            params.code_rate = link::snap_code_rate(code_rate);
            params.delay_budget_s = delay_ms * 1e-3;
            return link::required_bandwidth_mhz(bits, params);
        },
        py::arg("bits"), py::arg("code_rate"), py::arg("delay_ms"), py::arg("snr_db"),
        "Bandwidth to move `bits` within the delay budget; the code rate is "
        "snapped to the allowed set.");
    m.def(
        "snap_code_rate", [](double value) { return link::snap_code_rate(value).value(); },
        py::arg("value"), "Nearest allowed code rate; ties go lower.");
    m.def(
        "rule_based_code_rate",
        [](double snr_db) { return link::rule_based_code_rate(snr_db).value(); },
        py::arg("snr_db"), "SNR-scaled code-rate heuristic.");

    // ---- profiling and simulation
    m.def(
        "profile_grid",
        [](const py::object& cfg_obj) {
            const sim::ScenarioConfig cfg = config_from_object(cfg_obj);
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
            py::list rows;
            for (const rda::ExperienceRecord& rec : table.rows()) {
                py::dict row;
                row["r"] = rec.theta.rank;
                row["q"] = rec.theta.qbits;
                row["mean_bits"] = rec.mean_bits;
                row["mean_nmse"] = rec.mean_nmse;
                row["accuracy"] = rec.accuracy;
                row["sample_count"] = rec.sample_count;
                rows.append(row);
            }
            return rows;
        },
        py::arg("config"),
        "Measure the (rank, qbits) grid for a scenario given as a path or a dict.");

    m.def(
        "run_scenario",
        [](const py::object& cfg_obj, const std::string& policy) {
            return report_to_dict(
                sim::run_scenario(config_from_object(cfg_obj), sim::policy_from_name(policy)));
        },
        py::arg("config"), py::arg("policy") = "oracle",
        "Run the admission queue; config is a scenario-file path or a dict of its keys.");
}
