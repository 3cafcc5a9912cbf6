#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include <Eigen/QR>

#include "guardspace/trainer.hpp"

namespace guardspace {

enum class LabelRule { regression, classification };

inline const char* label_rule_name(LabelRule r) {
    return r == LabelRule::regression ? "regression" : "classification";
}

inline LabelRule parse_label_rule(const std::string& s) {
    if (s == "regression") return LabelRule::regression;
    if (s == "classification") return LabelRule::classification;
    throw contract_error("unknown label_rule \"" + s + "\"; expected regression or classification");
}

// Two Gaussian clusters: a benign task cluster and a low-rank harmful cluster
// whose span the benign noise mostly avoids. Counts cover the downstream
// splits (n_benign, halved into train/test), the projector corpus and held-out
// probes (n_harmful, halved), and a separate decomposition corpus.
struct SyntheticTaskSpec {
    std::size_t d_in = 64;
    std::vector<std::size_t> hidden = {64};
    std::size_t d_out = 64;
    std::uint64_t seed = 7;
    std::size_t n_benign = 512;
    std::size_t n_harmful = 64;
    std::size_t n_subspace = 32;
    double separation = 9.0;
    std::size_t harmful_rank = 16;
    double overlap = 0.1;
    LabelRule label_rule = LabelRule::regression;

    bool operator==(const SyntheticTaskSpec&) const = default;
};

inline void validate_spec(const SyntheticTaskSpec& s) {
    if (s.d_in < 2) throw contract_error("SyntheticTaskSpec: d_in must be >= 2");
    if (s.d_out < 1) throw contract_error("SyntheticTaskSpec: d_out must be >= 1");
    if (s.label_rule == LabelRule::classification && s.d_out != 2)
        throw contract_error("SyntheticTaskSpec: classification labels need d_out == 2");
    if (s.n_benign < 2) throw contract_error("SyntheticTaskSpec: n_benign must be >= 2");
    if (s.n_harmful < 2) throw contract_error("SyntheticTaskSpec: n_harmful must be >= 2");
    if (s.n_subspace < 1) throw contract_error("SyntheticTaskSpec: n_subspace must be >= 1");
    // separation 0 is the degenerate coincident-cluster stress case.
    if (s.separation < 0.0) throw contract_error("SyntheticTaskSpec: separation must be >= 0");
    if (s.harmful_rank < 1 || s.harmful_rank >= s.d_in)
        throw contract_error("SyntheticTaskSpec: harmful_rank must lie in [1, d_in)");
    if (s.overlap < 0.0 || s.overlap > 1.0)
        throw contract_error("SyntheticTaskSpec: overlap must lie in [0, 1]");
}

namespace detail {

inline Matrix orthonormal_cols(const Matrix& m) {
    Eigen::MatrixXd e = emap(m);
    Eigen::HouseholderQR<Eigen::MatrixXd> qr(e);
    Eigen::MatrixXd thin =
        qr.householderQ() * Eigen::MatrixXd::Identity(e.rows(), e.cols());
    return from_eigen(thin);
}

inline Matrix draw_normal(std::mt19937_64& rng, std::size_t rows, std::size_t cols,
                          double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(rows, cols);
    for (double& v : out.data()) v = scale * normal(rng);
    return out;
}

}  // namespace detail

// Base network with N(0, 1/fan_in) weights, pristine adapters (zero, rank 1)
// and identity projectors so it computes the plain forward pass.
inline ToyModel make_base_model(const SyntheticTaskSpec& spec) {
    validate_spec(spec);
    std::mt19937_64 rng(spec.seed ^ 0x5747534d4f44454cull);
    std::vector<std::size_t> dims{spec.d_in};
    dims.insert(dims.end(), spec.hidden.begin(), spec.hidden.end());
    dims.push_back(spec.d_out);
    ToyModel model;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Matrix w = detail::draw_normal(rng, dims[l + 1], dims[l],
                                       1.0 / std::sqrt(static_cast<double>(dims[l])));
        AdapterPair zero{Matrix(w.rows(), 1), Matrix(1, w.cols()), 1};
        model.layers.push_back(
            {w, std::move(zero), identity_projector(w.cols()), Mode::lora_baseline, w});
    }
    return model;
}

// Deterministic draw order: direction, harmful basis, teacher, benign columns,
// subspace corpus, calibration corpus, held-out probes, unsafe replacements.
// unsafe_ratio replaces that fraction of the training columns (taken from the
// end, so ratio 0 leaves every earlier draw byte-identical) with harmful
// inputs labeled adversarially against the teacher.
inline TaskData gen_synthetic(const SyntheticTaskSpec& spec, double unsafe_ratio = 0.0) {
    validate_spec(spec);
    if (unsafe_ratio < 0.0 || unsafe_ratio > 1.0)
        throw contract_error("gen_synthetic: unsafe_ratio must lie in [0, 1]");
    std::mt19937_64 rng(spec.seed);
    const std::size_t d = spec.d_in, q = spec.harmful_rank;

    Matrix e_raw = detail::draw_normal(rng, d, 1);
    double e_norm = e_raw.frobenius_norm();
    if (e_norm == 0.0) throw numerical_error("gen_synthetic: degenerate direction draw");
    Eigen::VectorXd e = detail::emap(e_raw).col(0) / e_norm;

    Eigen::MatrixXd m_basis = detail::emap(detail::orthonormal_cols(detail::draw_normal(rng, d, q)));
    // Offsets are asymmetric around the origin; the gap stays exactly
    // `separation` while the benign cluster keeps a moderate input norm.
    Eigen::VectorXd mu_h = (2.0 / 3.0) * spec.separation * e;
    Eigen::VectorXd mu_b = -(1.0 / 3.0) * spec.separation * e;

    // Orthonormal basis of the harmful span (offset direction plus the basis).
    Eigen::MatrixXd span_raw(d, q + 1);
    span_raw.col(0) = e;
    span_raw.rightCols(q) = m_basis;
    Eigen::MatrixXd h_span = detail::emap(detail::orthonormal_cols(detail::from_eigen(span_raw)));

    Matrix teacher_w;  // regression teacher, or the half-space normal
    if (spec.label_rule == LabelRule::regression)
        teacher_w = detail::draw_normal(rng, spec.d_out, d,
                                        1.0 / std::sqrt(static_cast<double>(d)));
    else
        teacher_w = detail::draw_normal(rng, d, 1);
    Eigen::MatrixXd teacher = detail::emap(teacher_w);

    auto benign_cols = [&](std::size_t n) {
        Eigen::MatrixXd g = detail::emap(detail::draw_normal(rng, d, n));
        // Damp the noise component inside the harmful span to the overlap
        // level; the complement keeps unit variance.
        Eigen::MatrixXd inside = h_span * (h_span.transpose() * g);
        Eigen::MatrixXd x = g - (1.0 - spec.overlap) * inside;
        x.colwise() += mu_b;
        return x;
    };
    auto harmful_cols = [&](std::size_t n) {
        Eigen::MatrixXd z = detail::emap(detail::draw_normal(rng, q, n));
        Eigen::MatrixXd x = m_basis * z;
        x.colwise() += mu_h;
        return x;
    };
    auto label_of = [&](const Eigen::MatrixXd& x, bool flipped) {
        if (spec.label_rule == LabelRule::regression) {
            Eigen::MatrixXd y = teacher * x;
            if (flipped) y = -y;
            return y;
        }
        Eigen::MatrixXd y = Eigen::MatrixXd::Zero(2, x.cols());
        for (Eigen::Index j = 0; j < x.cols(); ++j) {
            bool pos = (teacher.col(0).dot(x.col(j)) >= 0.0) != flipped;
            y(pos ? 0 : 1, j) = 1.0;
        }
        return y;
    };

    const std::size_t n_train = spec.n_benign / 2;
    const std::size_t n_test = spec.n_benign - n_train;
    const std::size_t n_cal = spec.n_harmful / 2;
    const std::size_t n_held = spec.n_harmful - n_cal;

    Eigen::MatrixXd train_x = benign_cols(n_train);
    Eigen::MatrixXd test_x = benign_cols(n_test);
    Eigen::MatrixXd subspace = harmful_cols(spec.n_subspace);
    Eigen::MatrixXd calibration = harmful_cols(n_cal);
    Eigen::MatrixXd held_out = harmful_cols(n_held);

    Eigen::MatrixXd train_y = label_of(train_x, false);
    Eigen::MatrixXd test_y = label_of(test_x, false);

    const std::size_t n_unsafe =
        static_cast<std::size_t>(std::llround(unsafe_ratio * static_cast<double>(n_train)));
    if (n_unsafe > 0) {
        Eigen::MatrixXd bad_x = harmful_cols(n_unsafe);
        Eigen::MatrixXd bad_y = label_of(bad_x, true);
        train_x.rightCols(n_unsafe) = bad_x;
        train_y.rightCols(n_unsafe) = bad_y;
    }

    TaskData out;
    out.train_x = detail::from_eigen(train_x);
    out.train_y = detail::from_eigen(train_y);
    out.test_x = detail::from_eigen(test_x);
    out.test_y = detail::from_eigen(test_y);
    out.subspace = detail::from_eigen(subspace);
    out.calibration = detail::from_eigen(calibration);
    out.held_out = detail::from_eigen(held_out);
    out.classification = spec.label_rule == LabelRule::classification;
    return out;
}

}  // namespace guardspace
