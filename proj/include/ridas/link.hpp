#pragma once

#include <array>
#include <cstdint>
#include <string>

namespace ridas::link {

/// Channel code rate, one of the eight allowed rationals.
struct CodeRate {
    int num = 1;
    int den = 2;

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }
    std::string str() const { return std::to_string(num) + "/" + std::to_string(den); }

    bool operator==(const CodeRate&) const = default;
};

inline constexpr std::array<CodeRate, 8> kCodeRates = {{
    {1, 2}, {3, 5}, {2, 3}, {3, 4}, {4, 5}, {5, 6}, {8, 9}, {9, 10},
}};

/// Nearest allowed rate to an arbitrary value; ties go to the lower rate.
CodeRate snap_code_rate(double value);

/// Parses "num/den" and requires membership in kCodeRates.
CodeRate code_rate_from_string(const std::string& text);

struct LinkParams {
    double snr_db = 0.0;
    CodeRate code_rate{1, 2};
    double delay_budget_s = 0.5e-3;

    bool operator==(const LinkParams&) const = default;
};

enum class QosTier : std::uint8_t { Low, Medium, High };

/// Accuracy floor per tier: Low > 0.70, Medium > 0.80, High > 0.90.
struct QosRequirement {
    QosTier tier = QosTier::Low;
    double min_accuracy = 0.70;

    static QosRequirement from_tier(QosTier tier);

    bool operator==(const QosRequirement&) const = default;
};

const char* tier_name(QosTier tier);
QosTier tier_from_name(const std::string& name);

struct UserRequest {
    std::uint64_t user_id = 0;
    LinkParams link;
    QosRequirement qos;
};

/// log2(1 + 10^(snr/10)), bits/s/Hz.
double spectral_efficiency(double snr_db);

/// ((bits / code_rate) / delay) / (spectral_efficiency * 1e6), in MHz.
double required_bandwidth_mhz(double bits, const LinkParams& link);

/// SNR-scaled heuristic: 5 dB -> 0.5, 30 dB -> 0.9, linear in between,
/// clamped, snapped to the nearest allowed rate.
CodeRate rule_based_code_rate(double snr_db);

/// Request-sampling ranges; defaults match the simulated scenario.
struct SamplerRanges {
    double snr_min_db = 5.0;
    double snr_max_db = 30.0;
    double delay_min_ms = 0.05;
    double delay_max_ms = 0.5;
    std::array<double, 3> tier_weights = {1.0, 1.0, 1.0};
};

/// Deterministic per (seed, index): SNR and delay uniform over their ranges,
/// tier categorical by weight. The code rate is initialized from the
/// rule-based map; planners may override it.
UserRequest sample_user(std::uint64_t seed, std::uint64_t index, const SamplerRanges& ranges);

} // namespace ridas::link
