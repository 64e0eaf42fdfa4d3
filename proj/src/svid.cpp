#include "ridas/svid.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ridas/errors.hpp"

namespace ridas::svid {

namespace {

constexpr double kJacobiTol = 1e-10; // relative off-diagonal threshold
constexpr int kMaxSweeps = 100;

// Thin SVD of a tall matrix (m >= n) by one-sided Jacobi: orthogonalize the
// columns of W = A by plane rotations, accumulating them into V. At
// convergence W = U * diag(sigma) and A = U * diag(sigma) * V^T.
void jacobi_tall(Matrix w, Matrix& u, std::vector<double>& sigma, Matrix& v) {
    const std::size_t m = w.rows();
    const std::size_t n = w.cols();

    v = Matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

    for (int sweep = 0; sweep < kMaxSweeps && n > 1; ++sweep) {
        bool rotated = false;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t k = 0; k < m; ++k) {
                    const double wi = w(k, i), wj = w(k, j);
                    alpha += wi * wi;
                    beta += wj * wj;
                    gamma += wi * wj;
                }
                const double denom = std::sqrt(alpha * beta);
                if (denom == 0.0 || std::abs(gamma) <= kJacobiTol * denom) continue;

                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = (zeta >= 0.0 ? 1.0 : -1.0) /
                                 (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;

                for (std::size_t k = 0; k < m; ++k) {
                    const double wi = w(k, i), wj = w(k, j);
                    w(k, i) = c * wi - s * wj;
                    w(k, j) = s * wi + c * wj;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vi = v(k, i), vj = v(k, j);
                    v(k, i) = c * vi - s * vj;
                    v(k, j) = s * vi + c * vj;
                }
                rotated = true;
            }
        }
        if (!rotated) break;
    }

    sigma.assign(n, 0.0);
    u = Matrix(m, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t j = 0; j < n; ++j) {
        double norm2 = 0.0;
        for (std::size_t k = 0; k < m; ++k) norm2 += w(k, j) * w(k, j);
        sigma[j] = std::sqrt(norm2);
    }
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

    std::vector<double> sorted_sigma(n);
    Matrix sorted_v(n, n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t src = order[j];
        sorted_sigma[j] = sigma[src];
        const double inv = sigma[src] > 0.0 ? 1.0 / sigma[src] : 0.0;
        for (std::size_t k = 0; k < m; ++k) u(k, j) = w(k, src) * inv;
        for (std::size_t k = 0; k < n; ++k) sorted_v(k, j) = v(k, src);
    }
    sigma = std::move(sorted_sigma);
    v = std::move(sorted_v);
}

Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

LowRankFactors thin_svd(const Matrix& a) {
    Matrix u, v;
    std::vector<double> sigma;
    if (a.rows() >= a.cols()) {
        jacobi_tall(a, u, sigma, v);
    } else {
        // decompose A^T and swap the factor roles
        jacobi_tall(transpose(a), v, sigma, u);
    }
    return LowRankFactors{std::move(u), std::move(sigma), std::move(v)};
}

LowRankFactors truncate(LowRankFactors f, std::size_t r) {
    if (f.rank() == r) return f;
    Matrix u(f.u.rows(), r), v(f.v.rows(), r);
    for (std::size_t i = 0; i < u.rows(); ++i)
        for (std::size_t j = 0; j < r; ++j) u(i, j) = f.u(i, j);
    for (std::size_t i = 0; i < v.rows(); ++i)
        for (std::size_t j = 0; j < r; ++j) v(i, j) = f.v(i, j);
    f.singular_values.resize(r);
    return LowRankFactors{std::move(u), std::move(f.singular_values), std::move(v)};
}

void check_rank(const Matrix& a, std::size_t r) {
    const std::size_t max_r = std::min(a.rows(), a.cols());
    if (r < 1 || r > max_r) {
        throw InvalidRankError("rank " + std::to_string(r) + " outside [1, " +
                               std::to_string(max_r) + "]");
    }
}

} // namespace

std::pair<SignMatrix, Matrix> sign_split(const Matrix& z) {
    require_finite(z, "sign_split");
    SignMatrix sign(z.rows(), z.cols());
    Matrix abs(z.rows(), z.cols());
    for (std::size_t i = 0; i < z.rows(); ++i) {
        for (std::size_t j = 0; j < z.cols(); ++j) {
            const double v = z(i, j);
            sign(i, j) = v >= 0.0 ? +1 : -1;
            abs(i, j) = std::fabs(v);
        }
    }
    return {std::move(sign), std::move(abs)};
}

LowRankFactors truncated_svd(const Matrix& a, std::size_t r) {
    require_finite(a, "truncated_svd");
    check_rank(a, r);
    return truncate(thin_svd(a), r);
}

SvidFactors svid_decompose(const Matrix& z, std::size_t r) {
    check_rank(z, r);
    auto [sign, abs] = sign_split(z);
    return SvidFactors{std::move(sign), truncated_svd(abs, r)};
}

Matrix reconstruct_low_rank(const LowRankFactors& f) {
    const std::size_t m = f.u.rows(), n = f.v.rows(), r = f.rank();
    if (f.u.cols() != r || f.v.cols() != r) {
        throw InvalidInputError("factor rank mismatch");
    }
    Matrix out(m, n);
    for (std::size_t k = 0; k < r; ++k) {
        const double s = f.singular_values[k];
        if (s == 0.0) continue;
        for (std::size_t i = 0; i < m; ++i) {
            const double us = f.u(i, k) * s;
            for (std::size_t j = 0; j < n; ++j) out(i, j) += us * f.v(j, k);
        }
    }
    return out;
}

Matrix reconstruct(const SvidFactors& f) {
    Matrix low = reconstruct_low_rank(f.low_rank);
    if (low.rows() != f.sign.rows() || low.cols() != f.sign.cols()) {
        throw InvalidInputError("sign/low-rank dimension mismatch");
    }
    for (std::size_t i = 0; i < low.rows(); ++i)
        for (std::size_t j = 0; j < low.cols(); ++j) low(i, j) *= f.sign(i, j);
    return low;
}

ApproxError approximation_error(const Matrix& z, const Matrix& zhat) {
    if (!z.same_shape(zhat)) throw InvalidInputError("approximation_error: shape mismatch");
    double diff2 = 0.0, ref2 = 0.0;
    for (std::size_t i = 0; i < z.data().size(); ++i) {
        const double d = z.data()[i] - zhat.data()[i];
        diff2 += d * d;
        ref2 += z.data()[i] * z.data()[i];
    }
    ApproxError e;
    e.frobenius = std::sqrt(diff2);
    if (ref2 > 0.0) {
        e.nmse = diff2 / ref2;
    } else {
        e.nmse = diff2 == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return e;
}

LowRankFactors svd_baseline(const Matrix& z, std::size_t r) {
    return truncated_svd(z, r);
}

} // namespace ridas::svid
