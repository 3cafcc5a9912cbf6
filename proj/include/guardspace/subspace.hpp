#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "guardspace/linalg.hpp"
#include "guardspace/matrix.hpp"

namespace guardspace {

// Captured inputs of one linear layer: columns are per-sample activations.
struct ActivationBatch {
    Matrix features;  // d_in x N
    std::string source_tag;
    std::size_t layer_id = 0;
};

// Unnormalized covariance C = X X^t of a captured batch.
struct CovarianceMatrix {
    Matrix c;  // d_in x d_in, symmetric PSD
    std::size_t sample_count = 0;
};

inline CovarianceMatrix compute_covariance(const ActivationBatch& x) {
    if (x.features.empty())
        throw contract_error("compute_covariance: batch has no samples");
    Matrix c = matmul(x.features, x.features.transpose());
    // Exact symmetry; the product can drift at the last ulp.
    for (std::size_t i = 0; i < c.rows(); ++i)
        for (std::size_t j = i + 1; j < c.cols(); ++j) {
            double v = 0.5 * (c(i, j) + c(j, i));
            c(i, j) = v;
            c(j, i) = v;
        }
    return {std::move(c), x.features.cols()};
}

// Preconditioned factorization of a weight: svd(W * C_reg) with Vhat = Vt * C_inv,
// so that U * diag(S) * Vhat reconstructs W exactly up to the inversion residual.
struct SafetyDecomposition {
    Matrix U;               // d_out x k
    std::vector<double> S;  // length k, descending
    Matrix Vhat;            // k x d_in, row i is vhat_i^t
    CovarianceMatrix C_reg;
    Matrix C_inv;
};

inline SafetyDecomposition safety_decompose(const Matrix& w, const CovarianceMatrix& c,
                                            double rho = 0.01, double tau = 1e-8,
                                            std::size_t max_rounds = 100) {
    if (w.cols() != c.c.rows())
        throw contract_error("safety_decompose: weight cols " + std::to_string(w.cols()) +
                             " vs covariance dim " + std::to_string(c.c.rows()));
    AdaptiveInverse inv = adaptive_inverse(c.c, rho, tau, max_rounds);
    SvdFactors f = svd(matmul(w, inv.c_reg));
    Matrix vhat = matmul(f.Vt, inv.c_inv);
    return {std::move(f.U), std::move(f.S), std::move(vhat),
            CovarianceMatrix{std::move(inv.c_reg), c.sample_count}, std::move(inv.c_inv)};
}

// Low-rank adapter factors; at initialization B*A equals the trailing-r
// component sum of the decomposition.
struct AdapterPair {
    Matrix B;  // d_out x r
    Matrix A;  // r x d_in
    std::size_t rank = 0;
};

inline AdapterPair init_adapters(const SafetyDecomposition& d, std::size_t r) {
    const std::size_t k = d.S.size();
    if (r < 1 || r > k)
        throw contract_error("init_adapters: rank " + std::to_string(r) +
                             " outside [1, " + std::to_string(k) + "]");
    const std::size_t lo = k - r;
    Matrix b(d.U.rows(), r);
    Matrix a(r, d.Vhat.cols());
    for (std::size_t t = 0; t < r; ++t) {
        double root = std::sqrt(d.S[lo + t]);
        for (std::size_t i = 0; i < b.rows(); ++i) b(i, t) = d.U(i, lo + t) * root;
        for (std::size_t j = 0; j < a.cols(); ++j) a(t, j) = root * d.Vhat(lo + t, j);
    }
    return {std::move(b), std::move(a), r};
}

// Reconstruction with the r_drop most safety-irrelevant (trailing) components
// removed: sum_{i < k - r_drop} s_i u_i vhat_i^t.
inline Matrix truncate_reconstruct(const SafetyDecomposition& d, std::size_t r_drop) {
    const std::size_t k = d.S.size();
    if (r_drop > k)
        throw contract_error("truncate_reconstruct: r_drop " + std::to_string(r_drop) +
                             " exceeds k = " + std::to_string(k));
    const std::size_t keep = k - r_drop;
    Matrix out(d.U.rows(), d.Vhat.cols());
    if (keep == 0) return out;
    Matrix us(d.U.rows(), keep);
    for (std::size_t t = 0; t < keep; ++t)
        for (std::size_t i = 0; i < us.rows(); ++i) us(i, t) = d.U(i, t) * d.S[t];
    Matrix vh(keep, d.Vhat.cols());
    for (std::size_t t = 0; t < keep; ++t)
        for (std::size_t j = 0; j < vh.cols(); ++j) vh(t, j) = d.Vhat(t, j);
    return matmul(us, vh);
}

}  // namespace guardspace
