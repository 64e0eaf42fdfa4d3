#include "ridas/rda.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ridas/errors.hpp"
#include "ridas/rng.hpp"
#include "ridas/svid.hpp"

namespace ridas::rda {

// -------------------------------------------------------------- FeatureSource

FeatureSource FeatureSource::gaussian(std::uint64_t seed, std::size_t m, std::size_t n,
                                      double scale) {
    if (m == 0 || n == 0) throw InvalidInputError("feature source needs positive dimensions");
    if (!(scale > 0.0) || !std::isfinite(scale)) {
        throw InvalidInputError("feature scale must be positive and finite");
    }
    FeatureSource src;
    src.kind_ = Kind::Gaussian;
    src.seed_ = seed;
    src.rows_ = m;
    src.cols_ = n;
    src.scale_ = scale;
    return src;
}

FeatureSource FeatureSource::from_file(const std::filesystem::path& path) {
    FeatureSource src;
    src.kind_ = Kind::File;
    src.fixed_ = read_matrix(path);
    require_finite(src.fixed_, "feature file");
    src.rows_ = src.fixed_.rows();
    src.cols_ = src.fixed_.cols();
    return src;
}

Matrix FeatureSource::draw(std::uint64_t index) const {
    if (kind_ == Kind::File) return fixed_;
    Rng rng(Rng::mix(seed_ ^ 0x66656174u /* "feat" */), index);
    Matrix z(rows_, cols_);
    for (double& v : z.data()) v = scale_ * rng.normal();
    return z;
}

// -------------------------------------------------------------- AccuracyModel

AccuracyModel AccuracyModel::synthetic(double acc_max, double acc_min, double slope) {
    if (!(acc_min >= 0.0) || !(acc_max <= 1.0) || !(acc_min <= acc_max) || !(slope >= 0.0)) {
        throw InvalidInputError("synthetic accuracy model needs 0 <= min <= max <= 1, slope >= 0");
    }
    AccuracyModel m;
    m.kind_ = Kind::Synthetic;
    m.acc_max_ = acc_max;
    m.acc_min_ = acc_min;
    m.slope_ = slope;
    return m;
}

AccuracyModel AccuracyModel::calibration(std::vector<CalibrationEntry> entries) {
    if (entries.empty()) throw InvalidInputError("calibration table is empty");
    for (const CalibrationEntry& e : entries) {
        codec::validate(e.theta);
        if (!(e.accuracy >= 0.0 && e.accuracy <= 1.0)) {
            throw InvalidInputError("calibration accuracy must lie in [0, 1]");
        }
    }
    std::sort(entries.begin(), entries.end(),
              [](const CalibrationEntry& a, const CalibrationEntry& b) { return a.theta < b.theta; });
    AccuracyModel m;
    m.kind_ = Kind::Calibration;
    m.entries_ = std::move(entries);
    return m;
}

AccuracyModel AccuracyModel::calibration_from_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open calibration file: " + path.string());
    std::vector<CalibrationEntry> entries;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (first && line.rfind("r,", 0) == 0) { // optional header
            first = false;
            continue;
        }
        first = false;
        CalibrationEntry e;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        if (!(row >> e.theta.rank >> e.theta.qbits >> e.accuracy)) {
            throw IoError("bad calibration row in " + path.string() + ": " + line);
        }
        entries.push_back(e);
    }
    return calibration(std::move(entries));
}

double AccuracyModel::evaluate(double nmse, const codec::ControlParameter& theta) const {
    if (kind_ == Kind::Calibration) {
        for (const CalibrationEntry& e : entries_) {
            if (e.theta == theta) return e.accuracy;
        }
        // fall through to the synthetic curve for uncalibrated cells
    }
    if (!(nmse >= 0.0)) throw InvalidInputError("nmse must be nonnegative");
    return acc_min_ + (acc_max_ - acc_min_) * std::exp(-slope_ * nmse);
}

// ------------------------------------------------------------ ExperienceTable

const ExperienceRecord* ExperienceTable::find(const codec::ControlParameter& theta) const {
    for (const ExperienceRecord& rec : rows_) {
        if (rec.theta == theta) return &rec;
    }
    return nullptr;
}

void ExperienceTable::merge(const ExperienceRecord& rec, const AccuracyModel& model) {
    codec::validate(rec.theta);
    if (rec.sample_count == 0) throw InvalidInputError("experience record has no samples");
    for (ExperienceRecord& row : rows_) {
        if (row.theta == rec.theta) {
            const double total = static_cast<double>(row.sample_count + rec.sample_count);
            const double wa = static_cast<double>(row.sample_count) / total;
            const double wb = static_cast<double>(rec.sample_count) / total;
            row.mean_bits = wa * row.mean_bits + wb * rec.mean_bits;
            row.mean_nmse = wa * row.mean_nmse + wb * rec.mean_nmse;
            row.sample_count += rec.sample_count;
            row.accuracy = model.evaluate(row.mean_nmse, row.theta);
            return;
        }
    }
    rows_.push_back(rec);
    std::sort(rows_.begin(), rows_.end(),
              [](const ExperienceRecord& a, const ExperienceRecord& b) { return a.theta < b.theta; });
}

void ExperienceTable::to_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write experience table: " + path.string());
    out << "r,q,mean_bits,mean_nmse,accuracy,sample_count\n";
    char buf[128];
    for (const ExperienceRecord& rec : rows_) {
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%llu\n", rec.theta.rank,
                      rec.theta.qbits, rec.mean_bits, rec.mean_nmse, rec.accuracy,
                      static_cast<unsigned long long>(rec.sample_count));
        out << buf;
    }
    if (!out) throw IoError("write failed: " + path.string());
}

ExperienceTable ExperienceTable::from_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open experience table: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("r,q,mean_bits", 0) != 0) {
        throw IoError("missing experience-table header in " + path.string());
    }
    ExperienceTable table;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::replace(line.begin(), line.end(), ',', ' ');
        std::istringstream row(line);
        ExperienceRecord rec;
        unsigned long long count = 0;
        if (!(row >> rec.theta.rank >> rec.theta.qbits >> rec.mean_bits >> rec.mean_nmse >>
              rec.accuracy >> count)) {
            throw IoError("bad experience row in " + path.string() + ": " + line);
        }
        rec.sample_count = count;
        codec::validate(rec.theta);
        table.rows_.push_back(rec);
    }
    std::sort(table.rows_.begin(), table.rows_.end(),
              [](const ExperienceRecord& a, const ExperienceRecord& b) { return a.theta < b.theta; });
    return table;
}

// ------------------------------------------------------------------- pipeline

codec::BitStream rda_encode(std::uint64_t x, const FeatureSource& src,
                            const codec::ControlParameter& theta) {
    codec::validate(theta);
    const Matrix z = src.draw(x);
    if (static_cast<std::size_t>(theta.rank) > std::min(z.rows(), z.cols())) {
        throw InvalidRankError("rank exceeds min(m, n) of the feature source");
    }
    const svid::SvidFactors factors = svid::svid_decompose(z, static_cast<std::size_t>(theta.rank));
    return codec::pack_stream(factors, theta.qbits);
}

Matrix rda_decode(const codec::BitStream& stream) {
    return svid::reconstruct(codec::unpack_stream(stream));
}

ExperienceRecord measure(const FeatureSource& src, const codec::ControlParameter& theta,
                         std::uint64_t n_samples, const AccuracyModel& model) {
    codec::validate(theta);
    if (n_samples == 0) throw InvalidInputError("measure needs at least one sample");
    double bits_acc = 0.0;
    double nmse_acc = 0.0;
    for (std::uint64_t x = 0; x < n_samples; ++x) {
        const Matrix z = src.draw(x);
        const codec::BitStream stream = rda_encode(x, src, theta);
        const Matrix zhat = rda_decode(stream);
        bits_acc += static_cast<double>(stream.total_bits());
        nmse_acc += svid::approximation_error(z, zhat).nmse;
    }
    ExperienceRecord rec;
    rec.theta = theta;
    rec.mean_bits = bits_acc / static_cast<double>(n_samples);
    rec.mean_nmse = nmse_acc / static_cast<double>(n_samples);
    rec.accuracy = model.evaluate(rec.mean_nmse, theta);
    rec.sample_count = n_samples;
    return rec;
}

ExperienceTable profile_grid(const FeatureSource& src, const std::vector<int>& ranks,
                             const std::vector<int>& qbits, std::uint64_t n_samples,
                             const AccuracyModel& model) {
    if (ranks.empty() || qbits.empty()) throw InvalidInputError("profile grid is empty");
    ExperienceTable table;
    for (int r : ranks) {
        if (r < 1 || static_cast<std::size_t>(r) > std::min(src.rows(), src.cols())) {
            throw InvalidRankError("grid rank exceeds min(m, n) of the feature source");
        }
        for (int q : qbits) {
            table.merge(measure(src, {r, q}, n_samples, model), model);
        }
    }
    return table;
}

double bpp(std::uint64_t total_bits, std::uint64_t height, std::uint64_t width) {
    if (height == 0 || width == 0) throw InvalidInputError("bpp needs positive dimensions");
    return static_cast<double>(total_bits) / (3.0 * static_cast<double>(height * width));
}

} // namespace ridas::rda
