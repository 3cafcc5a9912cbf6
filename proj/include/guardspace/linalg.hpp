#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "guardspace/matrix.hpp"

namespace guardspace {

namespace detail {

using ERowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline Eigen::Map<const ERowMat> emap(const Matrix& m) {
    return {m.data().data(), static_cast<Eigen::Index>(m.rows()),
            static_cast<Eigen::Index>(m.cols())};
}

template <typename Expr>
Matrix from_eigen(const Expr& e) {
    Eigen::MatrixXd v = e;
    Matrix out(static_cast<std::size_t>(v.rows()), static_cast<std::size_t>(v.cols()));
    Eigen::Map<ERowMat>(out.data().data(), v.rows(), v.cols()) = v;
    return out;
}

inline void require_nonempty_finite(const Matrix& m, const char* op) {
    if (m.empty())
        throw contract_error(std::string(op) + ": empty matrix");
    if (!m.all_finite())
        throw contract_error(std::string(op) + ": non-finite entries");
}

}  // namespace detail

// Factors of m = U*diag(S)*Vt with k = min(rows, cols).
// S non-negative descending; U, Vt orthonormal (thin); the largest-magnitude
// entry of each column of U is non-negative (ties resolved to the first index).
struct SvdFactors {
    Matrix U;
    std::vector<double> S;
    Matrix Vt;
};

// Factors of symmetric c = Q*diag(Lambda)*Qt, Lambda sorted descending.
struct EigFactors {
    Matrix Q;
    std::vector<double> Lambda;
};

struct AdaptiveInverse {
    Matrix c_reg;        // c + rounds*step*I, the covariance actually inverted
    Matrix c_inv;        // inverse of c_reg with ||c_reg*c_inv - I||_2 <= tau
    std::size_t rounds;  // number of diagonal additions applied
};

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    detail::require_nonempty_finite(a, "matmul");
    detail::require_nonempty_finite(b, "matmul");
    if (a.cols() != b.rows())
        throw contract_error("matmul: inner dimensions differ, " +
                             std::to_string(a.cols()) + " vs " + std::to_string(b.rows()));
    return detail::from_eigen(detail::emap(a) * detail::emap(b));
}

// Largest singular value; +inf for non-finite input.
inline double spectral_norm(const Matrix& m) {
    if (m.empty()) return 0.0;
    if (!m.all_finite()) return std::numeric_limits<double>::infinity();
    Eigen::MatrixXd a = detail::emap(m);
    return Eigen::JacobiSVD<Eigen::MatrixXd>(a).singularValues()(0);
}

inline SvdFactors svd(const Matrix& m) {
    detail::require_nonempty_finite(m, "svd");
    Eigen::MatrixXd a = detail::emap(m);
    Eigen::JacobiSVD<Eigen::MatrixXd> solver(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    Eigen::MatrixXd u = solver.matrixU();
    Eigen::MatrixXd v = solver.matrixV();
    Eigen::VectorXd s = solver.singularValues();
    if (!u.allFinite() || !v.allFinite() || !s.allFinite())
        throw numerical_error("svd: no convergence for " + std::to_string(m.rows()) + "x" +
                              std::to_string(m.cols()) + " input");
    // Sign convention: largest-magnitude entry of each U column non-negative.
    const Eigen::Index k = s.size();
    for (Eigen::Index j = 0; j < k; ++j) {
        Eigen::Index imax = 0;
        for (Eigen::Index i = 1; i < u.rows(); ++i)
            if (std::abs(u(i, j)) > std::abs(u(imax, j))) imax = i;
        if (u(imax, j) < 0.0) {
            u.col(j) = -u.col(j);
            v.col(j) = -v.col(j);
        }
    }
    return {detail::from_eigen(u), std::vector<double>(s.data(), s.data() + k),
            detail::from_eigen(v.transpose())};
}

inline EigFactors sym_eig(const Matrix& c) {
    detail::require_nonempty_finite(c, "sym_eig");
    if (c.rows() != c.cols())
        throw contract_error("sym_eig: input is " + std::to_string(c.rows()) + "x" +
                             std::to_string(c.cols()) + ", expected square");
    Eigen::MatrixXd a = detail::emap(c);
    Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
    if (solver.info() != Eigen::Success)
        throw numerical_error("sym_eig: no convergence for " + std::to_string(c.rows()) +
                              "x" + std::to_string(c.cols()) + " input");
    const Eigen::Index n = sym.rows();
    Matrix q(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
    std::vector<double> lambda(static_cast<std::size_t>(n));
    // Eigen sorts ascending; the contract wants descending.
    for (Eigen::Index j = 0; j < n; ++j) {
        lambda[static_cast<std::size_t>(j)] = solver.eigenvalues()(n - 1 - j);
        for (Eigen::Index i = 0; i < n; ++i)
            q(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) =
                solver.eigenvectors()(i, n - 1 - j);
    }
    return {std::move(q), std::move(lambda)};
}

// Regularize c until it is numerically invertible: c + k*rho*mean(diag(c))*I
// for the smallest k with ||c_reg*c_inv - I||_2 <= tau. Falls back to steps of
// rho*I when mean(diag(c)) == 0. Rounds with a non-finite candidate inverse
// count as residual +inf.
inline AdaptiveInverse adaptive_inverse(const Matrix& c, double rho = 0.01, double tau = 1e-8,
                                        std::size_t max_rounds = 100) {
    detail::require_nonempty_finite(c, "adaptive_inverse");
    if (c.rows() != c.cols())
        throw contract_error("adaptive_inverse: input is " + std::to_string(c.rows()) + "x" +
                             std::to_string(c.cols()) + ", expected square");
    if (rho <= 0.0 || tau <= 0.0)
        throw contract_error("adaptive_inverse: rho and tau must be positive");
    const Eigen::Index n = static_cast<Eigen::Index>(c.rows());
    Eigen::MatrixXd base = detail::emap(c);
    double diag_mean = base.diagonal().mean();
    const double step = diag_mean == 0.0 ? rho : rho * diag_mean;
    double last_residual = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k <= max_rounds; ++k) {
        Eigen::MatrixXd reg =
            base + static_cast<double>(k) * step * Eigen::MatrixXd::Identity(n, n);
        Eigen::MatrixXd inv = reg.inverse();
        if (inv.allFinite()) {
            Eigen::MatrixXd residual = reg * inv - Eigen::MatrixXd::Identity(n, n);
            last_residual = Eigen::JacobiSVD<Eigen::MatrixXd>(residual).singularValues()(0);
            if (last_residual <= tau)
                return {detail::from_eigen(reg), detail::from_eigen(inv), k};
        }
    }
    throw numerical_error("adaptive_inverse: residual " + std::to_string(last_residual) +
                          " still above tau after " + std::to_string(max_rounds) + " rounds");
}

}  // namespace guardspace
