#include "ridas/link.hpp"

#include <cmath>

#include "ridas/errors.hpp"
#include "ridas/rng.hpp"

namespace ridas::link {

CodeRate snap_code_rate(double value) {
    if (!std::isfinite(value)) throw InvalidInputError("code rate must be finite");
    CodeRate best = kCodeRates.front();
    double best_dist = std::abs(value - best.value());
    for (const CodeRate& rate : kCodeRates) {
        const double dist = std::abs(value - rate.value());
        // kCodeRates ascends, so strict < keeps the lower rate on ties
        if (dist < best_dist) {
            best = rate;
            best_dist = dist;
        }
    }
    return best;
}

CodeRate code_rate_from_string(const std::string& text) {
    const std::size_t slash = text.find('/');
    if (slash == std::string::npos) throw InvalidInputError("code rate must look like 3/4: " + text);
    int num = 0, den = 0;
    try {
        num = std::stoi(text.substr(0, slash));
        den = std::stoi(text.substr(slash + 1));
    } catch (const std::exception&) {
        throw InvalidInputError("unparseable code rate: " + text);
    }
    for (const CodeRate& rate : kCodeRates) {
        if (rate.num == num && rate.den == den) return rate;
    }
    throw InvalidInputError("code rate outside the allowed set: " + text);
}

QosRequirement QosRequirement::from_tier(QosTier tier) {
    switch (tier) {
    case QosTier::Low: return {tier, 0.70};
    case QosTier::Medium: return {tier, 0.80};
    case QosTier::High: return {tier, 0.90};
    }
    throw InvalidInputError("unknown QoS tier");
}

const char* tier_name(QosTier tier) {
    switch (tier) {
    case QosTier::Low: return "low";
    case QosTier::Medium: return "medium";
    case QosTier::High: return "high";
    }
    return "?";
}

QosTier tier_from_name(const std::string& name) {
    if (name == "low") return QosTier::Low;
    if (name == "medium") return QosTier::Medium;
    if (name == "high") return QosTier::High;
    throw InvalidInputError("unknown QoS tier name: " + name);
}

double spectral_efficiency(double snr_db) {
    if (!std::isfinite(snr_db)) throw InvalidInputError("SNR must be finite");
    return std::log2(1.0 + std::pow(10.0, snr_db / 10.0));
}

double required_bandwidth_mhz(double bits, const LinkParams& link) {
    if (!(bits >= 0.0) || !std::isfinite(bits)) {
        throw InvalidInputError("bit count must be finite and nonnegative");
    }
    if (!(link.delay_budget_s > 0.0)) {
        throw InvalidInputError("delay budget must be positive");
    }
    const double coded_bits = bits / link.code_rate.value();
    const double rate_bps = coded_bits / link.delay_budget_s;
    return rate_bps / (spectral_efficiency(link.snr_db) * 1e6);
}

CodeRate rule_based_code_rate(double snr_db) {
    if (!std::isfinite(snr_db)) throw InvalidInputError("SNR must be finite");
    const double t = (snr_db - 5.0) / 25.0;
    const double raw = 0.5 + 0.4 * std::min(1.0, std::max(0.0, t));
    return snap_code_rate(raw);
}

UserRequest sample_user(std::uint64_t seed, std::uint64_t index, const SamplerRanges& ranges) {
    if (!(ranges.snr_min_db <= ranges.snr_max_db) ||
        !(ranges.delay_min_ms <= ranges.delay_max_ms) || !(ranges.delay_min_ms > 0.0)) {
        throw InvalidInputError("invalid sampler ranges");
    }
    Rng rng(Rng::mix(seed ^ 0x75736572u /* "user" */), index);
    UserRequest req;
    req.user_id = index + 1;
    req.link.snr_db = rng.uniform(ranges.snr_min_db, ranges.snr_max_db);
    req.link.delay_budget_s = rng.uniform(ranges.delay_min_ms, ranges.delay_max_ms) * 1e-3;
    req.link.code_rate = rule_based_code_rate(req.link.snr_db);
    req.qos = QosRequirement::from_tier(static_cast<QosTier>(rng.categorical(ranges.tier_weights)));
    return req;
}

} // namespace ridas::link
