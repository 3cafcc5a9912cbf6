#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "guardspace/synthetic.hpp"
#include "oracles.hpp"

using guardspace::compute_covariance;
using guardspace::gen_synthetic;
using guardspace::LabelRule;
using guardspace::make_base_model;
using guardspace::Matrix;
using guardspace::SyntheticTaskSpec;
using guardspace::TaskData;

namespace {

Matrix stack_rows(const Matrix& top, const Matrix& bottom, bool negate_bottom = false) {
    Matrix out(top.rows() + bottom.rows(), top.cols());
    for (std::size_t j = 0; j < top.cols(); ++j) {
        for (std::size_t i = 0; i < top.rows(); ++i) out(i, j) = top(i, j);
        for (std::size_t i = 0; i < bottom.rows(); ++i)
            out(top.rows() + i, j) = negate_bottom ? -bottom(i, j) : bottom(i, j);
    }
    return out;
}

Matrix hcat(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), a.cols() + b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t j = 0; j < a.cols(); ++j) out(i, j) = a(i, j);
        for (std::size_t j = 0; j < b.cols(); ++j) out(i, a.cols() + j) = b(i, j);
    }
    return out;
}

std::vector<double> column_mean(const Matrix& m) {
    std::vector<double> mu(m.rows(), 0.0);
    for (std::size_t j = 0; j < m.cols(); ++j)
        for (std::size_t i = 0; i < m.rows(); ++i) mu[i] += m(i, j);
    for (double& v : mu) v /= static_cast<double>(m.cols());
    return mu;
}

double mean_distance(const Matrix& a, const Matrix& b) {
    auto ma = column_mean(a), mb = column_mean(b);
    double s = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) s += (ma[i] - mb[i]) * (ma[i] - mb[i]);
    return std::sqrt(s);
}

}  // namespace

TEST_CASE("generation is deterministic in the spec") {
    SyntheticTaskSpec spec;
    TaskData a = gen_synthetic(spec);
    TaskData b = gen_synthetic(spec);
    CHECK(a.train_x == b.train_x);
    CHECK(a.train_y == b.train_y);
    CHECK(a.test_x == b.test_x);
    CHECK(a.test_y == b.test_y);
    CHECK(a.subspace == b.subspace);
    CHECK(a.calibration == b.calibration);
    CHECK(a.held_out == b.held_out);

    spec.seed = 8;
    TaskData c = gen_synthetic(spec);
    CHECK(a.train_x != c.train_x);
    CHECK(a.calibration != c.calibration);
}

TEST_CASE("split sizes follow the spec counts") {
    SyntheticTaskSpec spec;
    spec.n_benign = 100;
    spec.n_harmful = 30;
    spec.n_subspace = 12;
    TaskData d = gen_synthetic(spec);
    CHECK(d.train_x.cols() == 50);
    CHECK(d.test_x.cols() == 50);
    CHECK(d.calibration.cols() == 15);
    CHECK(d.held_out.cols() == 15);
    CHECK(d.subspace.cols() == 12);
    CHECK(d.train_y.rows() == spec.d_out);
    CHECK(d.train_y.cols() == 50);
    CHECK_FALSE(d.classification);
    // the decomposition corpus is its own draw, not a calibration prefix
    CHECK(d.subspace != Matrix(d.calibration));
}

TEST_CASE("zero separation collapses the cluster means") {
    SyntheticTaskSpec spec;
    spec.separation = 0.0;
    TaskData d = gen_synthetic(spec);
    // both clusters center at the origin; sampling error only
    CHECK(mean_distance(d.train_x, d.calibration) < 1.5);

    spec.separation = 9.0;
    TaskData far = gen_synthetic(spec);
    double dist = mean_distance(far.train_x, far.calibration);
    CHECK(dist > 7.5);
    CHECK(dist < 10.5);
}

TEST_CASE("harmful cluster has intrinsic rank harmful_rank + 1") {
    SyntheticTaskSpec spec;
    TaskData d = gen_synthetic(spec);
    // offset direction plus the basis directions
    CHECK(oracles::gram_schmidt_rank(d.calibration) == spec.harmful_rank + 1);
    CHECK(oracles::gram_schmidt_rank(d.held_out) == spec.harmful_rank + 1);
    // held-out probes stay inside the calibration span
    CHECK(oracles::gram_schmidt_rank(hcat(d.calibration, d.held_out)) ==
          spec.harmful_rank + 1);
}

TEST_CASE("few harmful samples leave a large input null space") {
    SyntheticTaskSpec spec;
    spec.d_in = 32;
    spec.n_harmful = 16;
    spec.harmful_rank = 16;
    TaskData d = gen_synthetic(spec);
    guardspace::ActivationBatch batch{d.calibration, "projector", 0};
    CHECK(oracles::gram_schmidt_rank(d.calibration) <= 16);
    auto proj = guardspace::build_projector(compute_covariance(batch));
    CHECK(proj.null_dim >= 16);
}

TEST_CASE("labels are an exact linear function of the inputs") {
    SyntheticTaskSpec spec;
    TaskData d = gen_synthetic(spec);
    CHECK(oracles::gram_schmidt_rank(d.train_x) == spec.d_in);
    // [x; y] columns live in the d_in-dimensional graph of the teacher
    Matrix train_graph = stack_rows(d.train_x, d.train_y);
    CHECK(oracles::gram_schmidt_rank(train_graph) == spec.d_in);
    // same teacher labels both splits
    Matrix both = hcat(train_graph, stack_rows(d.test_x, d.test_y));
    CHECK(oracles::gram_schmidt_rank(both) == spec.d_in);
}

TEST_CASE("benign noise is damped inside the harmful span") {
    SyntheticTaskSpec spec;
    TaskData d = gen_synthetic(spec);
    // recover the harmful span from the calibration covariance
    guardspace::ActivationBatch batch{d.calibration, "projector", 0};
    auto eig = guardspace::sym_eig(compute_covariance(batch).c);
    std::size_t span_dim = spec.harmful_rank + 1;
    auto mu = column_mean(d.train_x);
    double inside = 0.0, outside = 0.0;
    for (std::size_t j = 0; j < d.train_x.cols(); ++j)
        for (std::size_t t = 0; t < spec.d_in; ++t) {
            double dot = 0.0;
            for (std::size_t i = 0; i < spec.d_in; ++i)
                dot += eig.Q(i, t) * (d.train_x(i, j) - mu[i]);
            (t < span_dim ? inside : outside) += dot * dot;
        }
    inside /= static_cast<double>(d.train_x.cols() * span_dim);
    outside /= static_cast<double>(d.train_x.cols() * (spec.d_in - span_dim));
    // variances per direction: overlap^2 = 0.01 inside, 1 outside
    CHECK(inside < 0.05);
    CHECK(outside > 0.6);
    CHECK(outside < 1.5);
}

TEST_CASE("unsafe mixing replaces only the tail of the training split") {
    SyntheticTaskSpec spec;
    TaskData clean = gen_synthetic(spec, 0.0);
    TaskData mixed = gen_synthetic(spec, 0.25);
    const std::size_t n_train = clean.train_x.cols();
    const std::size_t n_unsafe = n_train / 4;

    CHECK(mixed.test_x == clean.test_x);
    CHECK(mixed.subspace == clean.subspace);
    CHECK(mixed.calibration == clean.calibration);
    CHECK(mixed.held_out == clean.held_out);

    bool head_same = true, tail_differs = false;
    for (std::size_t j = 0; j < n_train; ++j)
        for (std::size_t i = 0; i < spec.d_in; ++i) {
            if (j < n_train - n_unsafe && mixed.train_x(i, j) != clean.train_x(i, j))
                head_same = false;
            if (j >= n_train - n_unsafe && mixed.train_x(i, j) != clean.train_x(i, j))
                tail_differs = true;
        }
    CHECK(head_same);
    CHECK(tail_differs);

    // replacements come from the harmful cluster
    Matrix tail(spec.d_in, n_unsafe);
    Matrix tail_y(spec.d_out, n_unsafe);
    for (std::size_t j = 0; j < n_unsafe; ++j)
        for (std::size_t i = 0; i < spec.d_in; ++i) {
            tail(i, j) = mixed.train_x(i, n_train - n_unsafe + j);
        }
    for (std::size_t j = 0; j < n_unsafe; ++j)
        for (std::size_t i = 0; i < spec.d_out; ++i)
            tail_y(i, j) = mixed.train_y(i, n_train - n_unsafe + j);
    CHECK(oracles::gram_schmidt_rank(hcat(clean.calibration, tail)) ==
          spec.harmful_rank + 1);

    // adversarial labels are the negated teacher output: the columns
    // [x; -y] lie back on the teacher graph spanned by the clean split
    Matrix clean_graph = stack_rows(clean.train_x, clean.train_y);
    Matrix negated_tail = stack_rows(tail, tail_y, true);
    CHECK(oracles::gram_schmidt_rank(hcat(clean_graph, negated_tail)) == spec.d_in);
}

TEST_CASE("classification labels are one-hot over two classes") {
    SyntheticTaskSpec spec;
    spec.d_out = 2;
    spec.label_rule = LabelRule::classification;
    TaskData d = gen_synthetic(spec);
    CHECK(d.classification);
    CHECK(d.train_y.rows() == 2);
    std::size_t class0 = 0;
    for (std::size_t j = 0; j < d.train_y.cols(); ++j) {
        double a = d.train_y(0, j), b = d.train_y(1, j);
        CHECK(((a == 0.0 && b == 1.0) || (a == 1.0 && b == 0.0)));
        if (a == 1.0) ++class0;
    }
    CHECK(class0 > 0);
    CHECK(class0 < d.train_y.cols());
}

TEST_CASE("spec validation rejects out-of-range fields") {
    SyntheticTaskSpec spec;
    spec.harmful_rank = spec.d_in;
    CHECK_THROWS_AS(gen_synthetic(spec), guardspace::contract_error);
    spec = {};
    spec.overlap = 1.5;
    CHECK_THROWS_AS(gen_synthetic(spec), guardspace::contract_error);
    spec = {};
    spec.label_rule = LabelRule::classification;  // d_out still 64
    CHECK_THROWS_AS(gen_synthetic(spec), guardspace::contract_error);
    spec = {};
    spec.n_benign = 1;
    CHECK_THROWS_AS(gen_synthetic(spec), guardspace::contract_error);
    spec = {};
    CHECK_THROWS_AS(gen_synthetic(spec, -0.1), guardspace::contract_error);
    CHECK_THROWS_AS(gen_synthetic(spec, 1.1), guardspace::contract_error);
}

TEST_CASE("base model is deterministic and pristine") {
    SyntheticTaskSpec spec;
    spec.hidden = {48, 32};
    auto a = make_base_model(spec);
    auto b = make_base_model(spec);
    REQUIRE(a.layers.size() == 3);
    CHECK(a.layers[0].original_w.rows() == 48);
    CHECK(a.layers[0].original_w.cols() == 64);
    CHECK(a.layers[1].original_w.rows() == 32);
    CHECK(a.layers[2].original_w.rows() == 64);
    CHECK(a.layers[2].original_w.cols() == 32);
    for (std::size_t l = 0; l < a.layers.size(); ++l) {
        CHECK(a.layers[l].original_w == b.layers[l].original_w);
        CHECK(guardspace::merge(a.layers[l]) == a.layers[l].original_w);
    }
    spec.seed = 11;
    auto c = make_base_model(spec);
    CHECK(a.layers[0].original_w != c.layers[0].original_w);

    // weight scale follows 1/fan_in variance
    double ss = 0.0;
    const Matrix& w0 = a.layers[0].original_w;
    for (double v : w0.data()) ss += v * v;
    double var = ss / static_cast<double>(w0.size());
    CHECK(var > 0.5 / 64.0);
    CHECK(var < 2.0 / 64.0);
}

TEST_CASE("base model runs the synthetic data end to end") {
    SyntheticTaskSpec spec;
    auto model = make_base_model(spec);
    TaskData d = gen_synthetic(spec);
    auto fr = guardspace::forward(model, d.test_x);
    CHECK(fr.y.rows() == spec.d_out);
    CHECK(fr.y.cols() == d.test_x.cols());
    CHECK(fr.y.all_finite());
    CHECK(fr.y.frobenius_norm() > 0.0);
}
