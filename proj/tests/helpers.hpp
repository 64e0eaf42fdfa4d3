#pragma once

// Test-side oracles, derived independently of the library implementations
// they check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "ridas/ida.hpp"
#include "ridas/link.hpp"
#include "ridas/matrix.hpp"
#include "ridas/rng.hpp"

namespace testutil {

inline ridas::Matrix random_matrix(ridas::Rng& rng, std::size_t m, std::size_t n,
                                   double scale = 1.0) {
    ridas::Matrix z(m, n);
    for (double& v : z.data()) v = scale * rng.normal();
    return z;
}

/// Largest singular value via power iteration on A^T A.
inline double power_sigma1(const ridas::Matrix& a, int iters = 2000) {
    const std::size_t n = a.cols();
    std::vector<double> x(n, 1.0 / std::sqrt(static_cast<double>(n)));
    double lambda = 0.0;
    for (int it = 0; it < iters; ++it) {
        // y = A^T (A x)
        std::vector<double> ax(a.rows(), 0.0);
        for (std::size_t i = 0; i < a.rows(); ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += a(i, j) * x[j];
            ax[i] = acc;
        }
        std::vector<double> y(n, 0.0);
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t i = 0; i < a.rows(); ++i) acc += a(i, j) * ax[i];
            y[j] = acc;
        }
        double norm = 0.0;
        for (double v : y) norm += v * v;
        norm = std::sqrt(norm);
        if (norm == 0.0) return 0.0;
        lambda = norm;
        for (std::size_t j = 0; j < n; ++j) x[j] = y[j] / norm;
    }
    return std::sqrt(lambda);
}

/// Best rank-1 Frobenius approximation error of a 2x2 matrix, closed form:
/// err^2 = ||Z||_F^2 - lambda_max(Z^T Z).
inline double rank1_error_2x2(const ridas::Matrix& z) {
    const double a = z(0, 0), b = z(0, 1), c = z(1, 0), d = z(1, 1);
    const double g11 = a * a + c * c;
    const double g22 = b * b + d * d;
    const double g12 = a * b + c * d;
    const double tr = g11 + g22;
    const double det = g11 * g22 - g12 * g12;
    const double lambda = 0.5 * (tr + std::sqrt(std::max(0.0, tr * tr - 4.0 * det)));
    const double err2 = std::max(0.0, (a * a + b * b + c * c + d * d) - lambda);
    return std::sqrt(err2);
}

/// Optimal prefix-code cost (total bits) by the classic two-smallest-merge
/// argument; never looks at code lengths.
inline std::uint64_t huffman_cost_oracle(std::vector<std::uint64_t> counts) {
    std::erase(counts, 0ull);
    if (counts.size() <= 1) return 0; // single symbol carries no payload here
    std::uint64_t total = 0;
    while (counts.size() > 1) {
        std::sort(counts.begin(), counts.end());
        const std::uint64_t merged = counts[0] + counts[1];
        total += merged;
        counts.erase(counts.begin(), counts.begin() + 2);
        counts.push_back(merged);
    }
    return total;
}

/// Exhaustive admission search written independently of oracle_plan: walks
/// every (row, rate) pair, applies the strict accuracy bound and the
/// (bandwidth, lower q, lower r, higher rate) preference order.
inline std::optional<ridas::ida::PlanProposal>
brute_force_plan(const ridas::link::UserRequest& req, const ridas::rda::ExperienceTable& table) {
    std::optional<ridas::ida::PlanProposal> best;
    for (const ridas::rda::ExperienceRecord& row : table.rows()) {
        if (!(row.accuracy > req.qos.min_accuracy)) continue;
        for (const ridas::link::CodeRate& rate : ridas::link::kCodeRates) {
            ridas::link::LinkParams params = req.link;
            params.code_rate = rate;
            const double mhz = ridas::link::required_bandwidth_mhz(row.mean_bits, params);
            bool take = false;
            if (!best) {
                take = true;
            } else if (mhz != best->predicted_mhz) {
                take = mhz < best->predicted_mhz;
            } else if (row.theta.qbits != best->theta.qbits) {
                take = row.theta.qbits < best->theta.qbits;
            } else if (row.theta.rank != best->theta.rank) {
                take = row.theta.rank < best->theta.rank;
            } else {
                take = rate.value() > best->code_rate.value();
            }
            if (take) {
                ridas::ida::PlanProposal p;
                p.theta = row.theta;
                p.code_rate = rate;
                p.predicted_bits = row.mean_bits;
                p.predicted_mhz = mhz;
                best = p;
            }
        }
    }
    return best;
}

} // namespace testutil
