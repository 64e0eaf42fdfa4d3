#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "ridas/matrix.hpp"

namespace ridas::svid {

/// Truncated SVD factors: U (m x r), nonincreasing singular values (length r),
/// V (n x r). Columns of U and V are unit norm except where sigma is zero.
struct LowRankFactors {
    Matrix u;
    std::vector<double> singular_values;
    Matrix v;

    std::size_t rank() const { return singular_values.size(); }
};

/// Sign-value-independent decomposition: elementwise sign matrix plus a
/// rank-r approximation of the entrywise absolute value.
struct SvidFactors {
    SignMatrix sign;
    LowRankFactors low_rank;
};

struct ApproxError {
    double frobenius = 0.0;
    double nmse = 0.0;
};

/// Splits Z into its sign matrix and entrywise absolute value.
/// sign(z) is +1 for z >= 0 and -1 for z < 0, so Z == sign (.) abs exactly.
std::pair<SignMatrix, Matrix> sign_split(const Matrix& z);

/// Top-r singular triplets of A via one-sided Jacobi iteration.
LowRankFactors truncated_svd(const Matrix& a, std::size_t r);

/// sign_split followed by truncated_svd on the absolute-value matrix.
SvidFactors svid_decompose(const Matrix& z, std::size_t r);

/// U * diag(sigma) * V^T.
Matrix reconstruct_low_rank(const LowRankFactors& f);

/// sign (.) (U * diag(sigma) * V^T).
Matrix reconstruct(const SvidFactors& f);

/// Frobenius distance and normalized MSE (||Z - Zhat||_F^2 / ||Z||_F^2).
ApproxError approximation_error(const Matrix& z, const Matrix& zhat);

/// Truncated SVD of Z itself (no sign split); comparison baseline.
LowRankFactors svd_baseline(const Matrix& z, std::size_t r);

} // namespace ridas::svid
