#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ridas/codec.hpp"
#include "ridas/matrix.hpp"

namespace ridas::rda {

/// Pluggable representation backbone: a seeded Gaussian generator or a matrix
/// file replayed for every index. draw(index) is deterministic.
class FeatureSource {
public:
    static FeatureSource gaussian(std::uint64_t seed, std::size_t m, std::size_t n, double scale);
    static FeatureSource from_file(const std::filesystem::path& path);

    Matrix draw(std::uint64_t index) const;
    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

private:
    FeatureSource() = default;

    enum class Kind { Gaussian, File } kind_ = Kind::Gaussian;
    std::uint64_t seed_ = 0;
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    double scale_ = 1.0;
    Matrix fixed_; // File kind
};

struct CalibrationEntry {
    codec::ControlParameter theta;
    double accuracy = 0.0;
};

/// Maps distortion (or a stored (r, q) key) to task accuracy in [0, 1].
/// The synthetic model is acc_min + (acc_max - acc_min) * exp(-slope * nmse);
/// a calibration table overrides it where real measurements exist.
class AccuracyModel {
public:
    static AccuracyModel synthetic(double acc_max = 0.95, double acc_min = 0.10,
                                   double slope = 20.0);
    static AccuracyModel calibration(std::vector<CalibrationEntry> entries);
    static AccuracyModel calibration_from_csv(const std::filesystem::path& path);

    double evaluate(double nmse, const codec::ControlParameter& theta) const;

private:
    AccuracyModel() = default;

    enum class Kind { Synthetic, Calibration } kind_ = Kind::Synthetic;
    double acc_max_ = 0.95;
    double acc_min_ = 0.10;
    double slope_ = 20.0;
    std::vector<CalibrationEntry> entries_;
};

/// One measured grid point: mean rate and distortion at theta, with the
/// model-estimated accuracy.
struct ExperienceRecord {
    codec::ControlParameter theta;
    double mean_bits = 0.0;
    double mean_nmse = 0.0;
    double accuracy = 0.0;
    std::uint64_t sample_count = 0;

    bool operator==(const ExperienceRecord&) const = default;
};

/// Memory of (theta -> rate, distortion, accuracy) records, sorted by (r, q).
class ExperienceTable {
public:
    const std::vector<ExperienceRecord>& rows() const { return rows_; }
    bool empty() const { return rows_.empty(); }
    std::size_t size() const { return rows_.size(); }

    const ExperienceRecord* find(const codec::ControlParameter& theta) const;

    /// Inserts the record, or folds it into an existing row with the same
    /// theta using sample-count-weighted means; accuracy is re-evaluated.
    void merge(const ExperienceRecord& rec, const AccuracyModel& model);

    void to_csv(const std::filesystem::path& path) const;
    static ExperienceTable from_csv(const std::filesystem::path& path);

    bool operator==(const ExperienceTable&) const = default;

private:
    std::vector<ExperienceRecord> rows_;
};

/// Full encoder pipeline: pack_stream(svid_decompose(draw(x), r), q).
codec::BitStream rda_encode(std::uint64_t x, const FeatureSource& src,
                            const codec::ControlParameter& theta);

/// Receiver side: reconstruct(unpack_stream(stream)).
Matrix rda_decode(const codec::BitStream& stream);

/// Encodes sample indices 0..n_samples-1 and averages rate and distortion.
ExperienceRecord measure(const FeatureSource& src, const codec::ControlParameter& theta,
                         std::uint64_t n_samples, const AccuracyModel& model);

/// One measure() per (rank, qbits) grid cell; result sorted by (r, q).
ExperienceTable profile_grid(const FeatureSource& src, const std::vector<int>& ranks,
                             const std::vector<int>& qbits, std::uint64_t n_samples,
                             const AccuracyModel& model);

/// total_bits / (3 * height * width).
double bpp(std::uint64_t total_bits, std::uint64_t height, std::uint64_t width);

} // namespace ridas::rda
