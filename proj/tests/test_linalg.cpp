#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <random>

#include "guardspace/linalg.hpp"
#include "guardspace/matrix.hpp"
#include "oracles.hpp"

using guardspace::Matrix;
using guardspace::adaptive_inverse;
using guardspace::contract_error;
using guardspace::matmul;
using guardspace::numerical_error;
using guardspace::spectral_norm;
using guardspace::svd;
using guardspace::sym_eig;

TEST_CASE("Matrix type invariants are enforced") {
    CHECK_THROWS_AS(Matrix(0, 3), contract_error);
    CHECK_THROWS_AS(Matrix(3, 0), contract_error);
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), contract_error);
    CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}),
                    contract_error);
    CHECK_THROWS_AS(Matrix(1, 1, {std::numeric_limits<double>::infinity()}), contract_error);
    Matrix m(2, 3, {1, 2, 3, 4, 5, 6});
    CHECK(m(1, 2) == 6.0);
    CHECK(m.transpose()(2, 1) == 6.0);
}

TEST_CASE("matmul identity case") {
    Matrix m(2, 2, {1.5, -2.0, 3.25, 0.5});
    Matrix r = matmul(Matrix::identity(2), m);
    CHECK(r == m);
}

TEST_CASE("matmul hand-forced 2x2") {
    Matrix a(2, 2, {1, 1, 0, 0});
    Matrix b(2, 2, {1, 0, 1, 0});
    Matrix r = matmul(a, b);
    CHECK(r == Matrix(2, 2, {2, 0, 0, 0}));
}

TEST_CASE("matmul matches naive triple-loop oracle") {
    std::mt19937_64 rng(11);
    Matrix a = oracles::random_matrix(rng, 5, 3);
    Matrix b = oracles::random_matrix(rng, 3, 4);
    Matrix got = matmul(a, b);
    Matrix want = oracles::naive_matmul(a, b);
    for (std::size_t i = 0; i < got.size(); ++i)
        CHECK(std::abs(got.data()[i] - want.data()[i]) < 1e-12);
}

TEST_CASE("matmul rejects dimension mismatch") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), contract_error);
    CHECK_THROWS_AS(matmul(Matrix(), Matrix(2, 2)), contract_error);
}

TEST_CASE("matmul is deterministic") {
    std::mt19937_64 rng(12);
    Matrix a = oracles::random_matrix(rng, 17, 9);
    Matrix b = oracles::random_matrix(rng, 9, 13);
    CHECK(matmul(a, b) == matmul(a, b));
}

TEST_CASE("svd of diagonal and identity") {
    auto d = svd(Matrix(2, 2, {3, 0, 0, 1}));
    REQUIRE(d.S.size() == 2);
    CHECK(d.S[0] == Catch::Approx(3.0).margin(1e-12));
    CHECK(d.S[1] == Catch::Approx(1.0).margin(1e-12));
    // Sign convention makes the factors exactly the identity here.
    CHECK(guardspace::relative_frobenius_error(d.U, Matrix::identity(2)) < 1e-12);
    CHECK(guardspace::relative_frobenius_error(d.Vt, Matrix::identity(2)) < 1e-12);

    auto e = svd(Matrix::identity(3));
    for (double s : e.S) CHECK(s == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("svd sign convention flips Vt, not the data") {
    // diag(-5, 1): dominant U entries must come out non-negative, so the sign
    // moves into Vt.
    auto d = svd(Matrix(2, 2, {-5, 0, 0, 1}));
    CHECK(d.U(0, 0) == Catch::Approx(1.0).margin(1e-12));
    CHECK(d.Vt(0, 0) == Catch::Approx(-1.0).margin(1e-12));
    Matrix rec = oracles::rank1_sum(d.U, d.S, d.Vt, 0, d.S.size());
    CHECK(guardspace::relative_frobenius_error(rec, Matrix(2, 2, {-5, 0, 0, 1})) < 1e-10);
}

TEST_CASE("svd reconstruction on a random 4x2") {
    std::mt19937_64 rng(21);
    Matrix m = oracles::random_matrix(rng, 4, 2);
    auto f = svd(m);
    REQUIRE(f.S.size() == 2);
    CHECK(f.S[0] >= f.S[1]);
    CHECK(f.S[1] >= 0.0);
    Matrix rec = oracles::rank1_sum(f.U, f.S, f.Vt, 0, 2);
    CHECK(guardspace::relative_frobenius_error(rec, m) < 1e-10);
}

TEST_CASE("svd invariants over 100 random trials") {
    std::mt19937_64 rng(22);
    std::uniform_int_distribution<std::size_t> dim(1, 32);
    for (int t = 0; t < 100; ++t) {
        std::size_t m = dim(rng), n = dim(rng);
        Matrix x = oracles::random_matrix(rng, m, n);
        auto f = svd(x);
        std::size_t k = std::min(m, n);
        REQUIRE(f.S.size() == k);
        for (std::size_t i = 0; i + 1 < k; ++i) CHECK(f.S[i] >= f.S[i + 1]);
        CHECK(f.S[k - 1] >= 0.0);
        Matrix utu = oracles::naive_matmul(f.U.transpose(), f.U);
        Matrix vvt = oracles::naive_matmul(f.Vt, f.Vt.transpose());
        CHECK((utu - Matrix::identity(k)).frobenius_norm() < 1e-10);
        CHECK((vvt - Matrix::identity(k)).frobenius_norm() < 1e-10);
        Matrix rec = oracles::rank1_sum(f.U, f.S, f.Vt, 0, k);
        CHECK(guardspace::relative_frobenius_error(rec, x) < 1e-10);
        // Convention: largest-magnitude entry of every U column non-negative.
        for (std::size_t j = 0; j < k; ++j) {
            std::size_t imax = 0;
            for (std::size_t i = 1; i < m; ++i)
                if (std::abs(f.U(i, j)) > std::abs(f.U(imax, j))) imax = i;
            CHECK(f.U(imax, j) >= 0.0);
        }
    }
}

TEST_CASE("svd determinism") {
    std::mt19937_64 rng(23);
    Matrix m = oracles::random_matrix(rng, 12, 7);
    auto a = svd(m);
    auto b = svd(m);
    CHECK(a.U == b.U);
    CHECK(a.S == b.S);
    CHECK(a.Vt == b.Vt);
}

TEST_CASE("sym_eig diagonal case") {
    auto f = sym_eig(Matrix(2, 2, {2, 0, 0, 0}));
    REQUIRE(f.Lambda.size() == 2);
    CHECK(f.Lambda[0] == Catch::Approx(2.0).margin(1e-12));
    CHECK(f.Lambda[1] == Catch::Approx(0.0).margin(1e-12));
    // Q is a permutation of identity columns up to sign.
    for (std::size_t j = 0; j < 2; ++j) {
        int ones = 0;
        for (std::size_t i = 0; i < 2; ++i) {
            double a = std::abs(f.Q(i, j));
            CHECK((a < 1e-10 || std::abs(a - 1.0) < 1e-10));
            if (std::abs(a - 1.0) < 1e-10) ++ones;
        }
        CHECK(ones == 1);
    }
    CHECK(std::abs(f.Q(0, 0)) == Catch::Approx(1.0).margin(1e-10));
}

TEST_CASE("sym_eig 2x2 analytic case") {
    // C = XX^t for X = (1,1)^t: eigenvalues {2, 0}, leading vector (1,1)/sqrt(2).
    auto f = sym_eig(Matrix(2, 2, {1, 1, 1, 1}));
    CHECK(f.Lambda[0] == Catch::Approx(2.0).margin(1e-12));
    CHECK(f.Lambda[1] == Catch::Approx(0.0).margin(1e-12));
    double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    CHECK(std::abs(f.Q(0, 0)) == Catch::Approx(inv_sqrt2).margin(1e-10));
    CHECK(std::abs(f.Q(1, 0)) == Catch::Approx(inv_sqrt2).margin(1e-10));
    CHECK(f.Q(0, 0) * f.Q(1, 0) > 0.0);
}

TEST_CASE("sym_eig zero matrix") {
    auto f = sym_eig(Matrix(3, 3));
    for (double l : f.Lambda) CHECK(l == 0.0);
}

TEST_CASE("sym_eig rejects non-square input") {
    CHECK_THROWS_AS(sym_eig(Matrix(2, 3)), contract_error);
}

TEST_CASE("sym_eig invariants on random PSD matrices") {
    std::mt19937_64 rng(31);
    for (int t = 0; t < 50; ++t) {
        Matrix x = oracles::random_matrix(rng, 8, 5);
        Matrix c = oracles::naive_covariance(x);
        auto f = sym_eig(c);
        Matrix qtq = oracles::naive_matmul(f.Q.transpose(), f.Q);
        CHECK((qtq - Matrix::identity(8)).frobenius_norm() < 1e-10);
        for (std::size_t i = 0; i + 1 < 8; ++i) CHECK(f.Lambda[i] >= f.Lambda[i + 1]);
        CHECK(f.Lambda[7] >= -1e-10 * f.Lambda[0]);
        Matrix lam(8, 8);
        for (std::size_t i = 0; i < 8; ++i) lam(i, i) = f.Lambda[i];
        Matrix rec = oracles::naive_matmul(oracles::naive_matmul(f.Q, lam), f.Q.transpose());
        CHECK(guardspace::relative_frobenius_error(rec, c) < 1e-10);
    }
}

TEST_CASE("adaptive_inverse leaves invertible input untouched") {
    auto r = adaptive_inverse(Matrix::identity(4), 0.01, 1e-8, 100);
    CHECK(r.rounds == 0);
    CHECK(guardspace::relative_frobenius_error(r.c_inv, Matrix::identity(4)) < 1e-12);
    CHECK(r.c_reg == Matrix::identity(4));
}

TEST_CASE("adaptive_inverse regularizes diag(2, 0) in one round") {
    auto r = adaptive_inverse(Matrix(2, 2, {2, 0, 0, 0}), 0.01, 1e-8, 100);
    CHECK(r.rounds == 1);
    // Step is rho * mean(diag) = 0.01 * 1.0.
    CHECK(r.c_reg(0, 0) == Catch::Approx(2.01).margin(1e-15));
    CHECK(r.c_reg(1, 1) == Catch::Approx(0.01).margin(1e-15));
    Matrix prod = oracles::naive_matmul(r.c_reg, r.c_inv);
    CHECK((prod - Matrix::identity(2)).frobenius_norm() < 1e-8);
}

TEST_CASE("adaptive_inverse falls back to rho*I on the zero matrix") {
    auto r = adaptive_inverse(Matrix(3, 3), 0.01, 1e-8, 100);
    CHECK(r.rounds == 1);
    for (std::size_t i = 0; i < 3; ++i) CHECK(r.c_reg(i, i) == Catch::Approx(0.01).margin(1e-18));
    CHECK(spectral_norm(matmul(r.c_reg, r.c_inv) - Matrix::identity(3)) <= 1e-8);
}

TEST_CASE("adaptive_inverse residual meets tau on rank-deficient covariances") {
    std::mt19937_64 rng(41);
    for (int t = 0; t < 20; ++t) {
        Matrix x = oracles::random_matrix(rng, 6, 3);
        Matrix c = oracles::naive_covariance(x);
        auto r = adaptive_inverse(c, 0.01, 1e-8, 100);
        CHECK(r.rounds >= 1);
        CHECK(spectral_norm(matmul(r.c_reg, r.c_inv) - Matrix::identity(6)) <= 1e-8);
    }
}

TEST_CASE("adaptive_inverse reports failure when rounds run out") {
    CHECK_THROWS_AS(adaptive_inverse(Matrix(2, 2), 0.01, 1e-8, 0), numerical_error);
    try {
        adaptive_inverse(Matrix(2, 2), 0.01, 1e-8, 0);
    } catch (const numerical_error& e) {
        CHECK(std::string(e.what()).find("residual") != std::string::npos);
    }
}

TEST_CASE("adaptive_inverse validates arguments") {
    CHECK_THROWS_AS(adaptive_inverse(Matrix(2, 3), 0.01, 1e-8, 10), contract_error);
    CHECK_THROWS_AS(adaptive_inverse(Matrix(2, 2), 0.0, 1e-8, 10), contract_error);
    CHECK_THROWS_AS(adaptive_inverse(Matrix(2, 2), 0.01, 0.0, 10), contract_error);
}

TEST_CASE("spectral_norm basics") {
    CHECK(spectral_norm(Matrix(2, 2, {3, 0, 0, 1})) == Catch::Approx(3.0).margin(1e-12));
    CHECK(spectral_norm(Matrix::identity(5)) == Catch::Approx(1.0).margin(1e-12));
}
