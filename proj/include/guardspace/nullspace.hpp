#pragma once

#include <cstddef>
#include <string>

#include "guardspace/linalg.hpp"
#include "guardspace/matrix.hpp"
#include "guardspace/subspace.hpp"

namespace guardspace {

// Symmetric idempotent projector onto the null space of a calibration
// covariance. Applied on the right of B*A, it zeroes adapter updates along
// every direction the calibration data occupies.
struct NullProjector {
    Matrix p;  // d x d
    std::size_t null_dim = 0;
    double eps_used = 0.0;  // relative eigenvalue threshold; -1 for the
                            // rank-targeted and surrogate constructors
};

namespace detail {

inline NullProjector projector_from_trailing(const EigFactors& f, std::size_t null_dim,
                                             double eps_used) {
    const std::size_t d = f.Q.rows();
    Matrix p(d, d);
    if (null_dim > 0) {
        const std::size_t lo = d - null_dim;
        Matrix qhat(d, null_dim);
        for (std::size_t j = 0; j < null_dim; ++j)
            for (std::size_t i = 0; i < d; ++i) qhat(i, j) = f.Q(i, lo + j);
        p = matmul(qhat, qhat.transpose());
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = i + 1; j < d; ++j) {
                double v = 0.5 * (p(i, j) + p(j, i));
                p(i, j) = v;
                p(j, i) = v;
            }
    }
    return {std::move(p), null_dim, eps_used};
}

}  // namespace detail

// Eigenvalues at or below eps_null * lambda_max count as zero; their
// eigenvectors span the null space. A covariance that is zero altogether has
// everything in its null space, so p = I.
inline NullProjector build_projector(const CovarianceMatrix& c, double eps_null = 1e-6) {
    EigFactors f = sym_eig(c.c);
    const std::size_t d = f.Lambda.size();
    if (f.Lambda[0] == 0.0)
        return {Matrix::identity(d), d, eps_null};
    const double thresh = eps_null * f.Lambda[0];
    std::size_t null_dim = 0;
    while (null_dim < d && f.Lambda[d - 1 - null_dim] <= thresh) ++null_dim;
    return detail::projector_from_trailing(f, null_dim, eps_null);
}

// Alternative constructor for sample-limited regimes: keep exactly the
// null_target smallest eigendirections. With m calibration columns and
// null_target = d - m, every kept direction is an exact zero of the sample
// covariance.
inline NullProjector build_projector_rank(const CovarianceMatrix& c, std::size_t null_target) {
    const std::size_t d = c.c.rows();
    if (null_target > d)
        throw contract_error("build_projector_rank: target " + std::to_string(null_target) +
                             " exceeds dimension " + std::to_string(d));
    if (null_target == d)
        return {Matrix::identity(d), d, -1.0};
    EigFactors f = sym_eig(c.c);
    return detail::projector_from_trailing(f, null_target, -1.0);
}

// Identity surrogate used by the projector-less training modes.
inline NullProjector identity_projector(std::size_t d) {
    return {Matrix::identity(d), d, -1.0};
}

// W' = w - B*A*p: shifts the adapter contribution on the calibration span into
// the frozen part, so the effective weight at initialization equals w.
inline Matrix guard_weights(const Matrix& w, const AdapterPair& adapters,
                            const NullProjector& p) {
    if (adapters.B.rows() != w.rows() || adapters.A.cols() != w.cols() ||
        p.p.rows() != w.cols())
        throw contract_error("guard_weights: dimension mismatch between weight " +
                             std::to_string(w.rows()) + "x" + std::to_string(w.cols()) +
                             ", adapters, and projector");
    return w - matmul(adapters.B, matmul(adapters.A, p.p));
}

// The four ablation training configurations.
enum class Mode { full, no_init, no_projector, lora_baseline };

inline const char* mode_name(Mode m) {
    switch (m) {
        case Mode::full: return "full";
        case Mode::no_init: return "no-init";
        case Mode::no_projector: return "no-projector";
        case Mode::lora_baseline: return "lora-baseline";
    }
    throw contract_error("mode_name: invalid mode value");
}

inline Mode parse_mode(const std::string& s) {
    if (s == "full") return Mode::full;
    if (s == "no-init") return Mode::no_init;
    if (s == "no-projector") return Mode::no_projector;
    if (s == "lora-baseline") return Mode::lora_baseline;
    throw contract_error("unknown mode \"" + s +
                         "\"; expected full, no-init, no-projector, or lora-baseline");
}

// One linear layer split into frozen weight, trainable adapters, and fixed
// projector. Invariant: w_prime + B*A*P equals original_w at construction.
struct GuardedLayer {
    Matrix w_prime;
    AdapterPair adapters;
    NullProjector projector;
    Mode mode = Mode::lora_baseline;
    Matrix original_w;
};

// Max over columns of ||(W' + BAP) x - W' x|| / max(||W' x||, 1e-30). On
// inputs spanned by the projector's calibration data this stays <= 1e-8 no
// matter what values the adapters currently hold.
inline double verify_invariance(const GuardedLayer& layer, const ActivationBatch& x) {
    Matrix effective =
        layer.w_prime + matmul(layer.adapters.B, matmul(layer.adapters.A, layer.projector.p));
    Matrix y_eff = matmul(effective, x.features);
    Matrix y_base = matmul(layer.w_prime, x.features);
    double worst = 0.0;
    for (std::size_t j = 0; j < x.features.cols(); ++j) {
        double diff = 0.0, base = 0.0;
        for (std::size_t i = 0; i < y_eff.rows(); ++i) {
            double d = y_eff(i, j) - y_base(i, j);
            diff += d * d;
            base += y_base(i, j) * y_base(i, j);
        }
        worst = std::max(worst, std::sqrt(diff) / std::max(std::sqrt(base), 1e-30));
    }
    return worst;
}

}  // namespace guardspace
