#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "guardspace/model.hpp"
#include "guardspace/nullspace.hpp"
#include "guardspace/subspace.hpp"

namespace guardspace {

enum class ProjectorConstructor { eps, rank };

inline const char* projector_constructor_name(ProjectorConstructor c) {
    return c == ProjectorConstructor::eps ? "eps" : "rank";
}

inline ProjectorConstructor parse_projector_constructor(const std::string& s) {
    if (s == "eps") return ProjectorConstructor::eps;
    if (s == "rank") return ProjectorConstructor::rank;
    throw contract_error("unknown projector_constructor \"" + s + "\"; expected eps or rank");
}

struct TrainConfig {
    Mode mode = Mode::full;
    std::size_t rank = 8;
    double learning_rate = 0.05;
    std::size_t epochs = 200;
    std::size_t batch = 0;  // 0 selects full-batch steps
    std::uint64_t seed = 7;
    double eps_null = 1e-6;
    double rho = 0.01;
    double tau = 1e-8;
    std::size_t max_rounds = 100;
    std::string subspace_corpus_tag = "subspace";
    std::string projector_corpus_tag = "projector";
    double unsafe_ratio = 0.0;
    ProjectorConstructor projector_constructor = ProjectorConstructor::eps;

    bool operator==(const TrainConfig&) const = default;
};

inline void validate_config(const TrainConfig& c) {
    if (c.epochs < 1) throw contract_error("TrainConfig: epochs must be >= 1");
    if (c.rank < 1) throw contract_error("TrainConfig: rank must be >= 1");
    // learning_rate 0 is the legal null optimizer; negative rates are not.
    if (c.learning_rate < 0.0) throw contract_error("TrainConfig: learning_rate must be >= 0");
    if (c.unsafe_ratio < 0.0 || c.unsafe_ratio > 1.0)
        throw contract_error("TrainConfig: unsafe_ratio must lie in [0, 1]");
    if (c.eps_null < 0.0) throw contract_error("TrainConfig: eps_null must be >= 0");
}

// Downstream task splits plus the two harmful corpora and the held-out set.
struct TaskData {
    Matrix train_x, train_y;
    Matrix test_x, test_y;
    Matrix subspace;     // harmful corpus driving the decomposition
    Matrix calibration;  // harmful corpus driving the projector
    Matrix held_out;     // fresh harmful samples, never used in preparation
    bool classification = false;
};

// Per-epoch series plus the config echo; every series has length epochs.
struct RunReport {
    TrainConfig config;
    double initial_task_loss = 0.0;
    std::vector<double> task_loss;
    std::vector<double> task_accuracy;
    std::vector<double> harmful_drift;      // held-out harmful inputs
    std::vector<double> calibration_drift;  // the projector corpus itself
    std::string merged_checksum;
};

namespace detail {

inline std::string fnv1a_hex(const std::vector<const Matrix*>& ms) {
    std::uint64_t h = 1469598103934665603ull;
    for (const Matrix* m : ms)
        for (double v : m->data()) {
            std::uint64_t bits;
            static_assert(sizeof bits == sizeof v);
            std::memcpy(&bits, &v, sizeof bits);
            for (int b = 0; b < 8; ++b) {
                h ^= (bits >> (8 * b)) & 0xffu;
                h *= 1099511628211ull;
            }
        }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline ToyModel base_of(const ToyModel& model) {
    ToyModel base;
    base.nonlinearity = model.nonlinearity;
    base.nonlinearity_deriv = model.nonlinearity_deriv;
    for (const GuardedLayer& l : model.layers) {
        AdapterPair zero{Matrix(l.original_w.rows(), 1), Matrix(1, l.original_w.cols()), 1};
        base.layers.push_back({l.original_w, std::move(zero),
                               identity_projector(l.original_w.cols()), Mode::lora_baseline,
                               l.original_w});
    }
    return base;
}

// Mean relative column deviation between two output batches.
inline double drift_between(const Matrix& y_base, const Matrix& y_new) {
    if (y_base.empty()) return 0.0;
    double acc = 0.0;
    for (std::size_t j = 0; j < y_base.cols(); ++j) {
        double diff = 0.0, base = 0.0;
        for (std::size_t i = 0; i < y_base.rows(); ++i) {
            double d = y_new(i, j) - y_base(i, j);
            diff += d * d;
            base += y_base(i, j) * y_base(i, j);
        }
        acc += std::sqrt(diff) / std::max(std::sqrt(base), 1e-30);
    }
    return acc / static_cast<double>(y_base.cols());
}

inline Matrix softmax_cols(const Matrix& z) {
    Matrix p = z;
    for (std::size_t j = 0; j < p.cols(); ++j) {
        double mx = p(0, j);
        for (std::size_t i = 1; i < p.rows(); ++i) mx = std::max(mx, p(i, j));
        double sum = 0.0;
        for (std::size_t i = 0; i < p.rows(); ++i) {
            p(i, j) = std::exp(p(i, j) - mx);
            sum += p(i, j);
        }
        for (std::size_t i = 0; i < p.rows(); ++i) p(i, j) /= sum;
    }
    return p;
}

inline double task_loss_of(const Matrix& y, const Matrix& target, bool classification) {
    const double n = static_cast<double>(y.cols());
    if (!classification) {
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) {
            double d = y.data()[i] - target.data()[i];
            s += d * d;
        }
        return 0.5 * s / n;
    }
    Matrix p = softmax_cols(y);
    double s = 0.0;
    for (std::size_t j = 0; j < y.cols(); ++j)
        for (std::size_t i = 0; i < y.rows(); ++i)
            if (target(i, j) > 0.5) s -= std::log(std::max(p(i, j), 1e-300));
    return s / n;
}

inline Matrix loss_gradient(const Matrix& y, const Matrix& target, bool classification) {
    const double inv_n = 1.0 / static_cast<double>(y.cols());
    Matrix g = classification ? softmax_cols(y) : y;
    for (std::size_t i = 0; i < g.size(); ++i)
        g.data()[i] = (g.data()[i] - target.data()[i]) * inv_n;
    return g;
}

inline double task_accuracy_of(const Matrix& y, const Matrix& target, bool classification) {
    if (classification) {
        std::size_t hits = 0;
        for (std::size_t j = 0; j < y.cols(); ++j) {
            std::size_t py = 0, pt = 0;
            for (std::size_t i = 1; i < y.rows(); ++i) {
                if (y(i, j) > y(py, j)) py = i;
                if (target(i, j) > target(pt, j)) pt = i;
            }
            if (py == pt) ++hits;
        }
        return static_cast<double>(hits) / static_cast<double>(y.cols());
    }
    // Coefficient of determination against the per-row mean predictor.
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t i = 0; i < target.rows(); ++i) {
        double mean = 0.0;
        for (std::size_t j = 0; j < target.cols(); ++j) mean += target(i, j);
        mean /= static_cast<double>(target.cols());
        for (std::size_t j = 0; j < target.cols(); ++j) {
            double r = y(i, j) - target(i, j);
            double t = target(i, j) - mean;
            ss_res += r * r;
            ss_tot += t * t;
        }
    }
    return 1.0 - ss_res / std::max(ss_tot, 1e-30);
}

inline Matrix gather_cols(const Matrix& m, const std::vector<std::size_t>& idx,
                          std::size_t lo, std::size_t hi) {
    Matrix out(m.rows(), hi - lo);
    for (std::size_t t = lo; t < hi; ++t)
        for (std::size_t i = 0; i < m.rows(); ++i) out(i, t - lo) = m(i, idx[t]);
    return out;
}

}  // namespace detail

// Captures both corpora on the pristine model, decomposes, initializes
// adapters and projector per mode, and folds the adapter span back into the
// frozen weight so the effective function starts unchanged.
inline ToyModel prepare(const ToyModel& pristine, const TrainConfig& cfg,
                        const Matrix& subspace_corpus, const Matrix& projector_corpus) {
    validate_config(cfg);
    validate_chain(pristine);
    const bool wants_init = cfg.mode == Mode::full || cfg.mode == Mode::no_projector;
    const bool wants_projector = cfg.mode == Mode::full || cfg.mode == Mode::no_init;
    std::vector<ActivationBatch> sub_batches, proj_batches;
    if (wants_init)
        sub_batches = capture_activations(pristine, subspace_corpus, cfg.subspace_corpus_tag);
    const bool have_projector_data = !projector_corpus.empty();
    if (wants_projector && have_projector_data)
        proj_batches = capture_activations(pristine, projector_corpus,
                                           cfg.projector_corpus_tag);
    std::mt19937_64 rng(cfg.seed);
    ToyModel out;
    out.nonlinearity = pristine.nonlinearity;
    out.nonlinearity_deriv = pristine.nonlinearity_deriv;
    for (std::size_t li = 0; li < pristine.layers.size(); ++li) {
        const Matrix& w = pristine.layers[li].original_w;
        const std::size_t d_in = w.cols(), d_out = w.rows();
        AdapterPair ap;
        if (wants_init) {
            auto dec = safety_decompose(w, compute_covariance(sub_batches[li]), cfg.rho,
                                        cfg.tau, cfg.max_rounds);
            ap = init_adapters(dec, cfg.rank);
        } else {
            // LoRA-style zero init: B = 0, A Kaiming-uniform.
            ap = {Matrix(d_out, cfg.rank), Matrix(cfg.rank, d_in), cfg.rank};
            const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
            std::uniform_real_distribution<double> kaiming(-bound, bound);
            for (double& v : ap.A.data()) v = kaiming(rng);
        }
        NullProjector proj;
        if (wants_projector && have_projector_data) {
            auto cov = compute_covariance(proj_batches[li]);
            if (cfg.projector_constructor == ProjectorConstructor::eps)
                proj = build_projector(cov, cfg.eps_null);
            else
                proj = build_projector_rank(
                    cov, d_in > cov.sample_count ? d_in - cov.sample_count : 0);
        } else {
            // No projector data (or a projector-less mode): everything is
            // treated as null space, equivalent to no-projector behavior.
            proj = identity_projector(d_in);
        }
        Matrix w_prime = guard_weights(w, ap, proj);
        out.layers.push_back({std::move(w_prime), std::move(ap), std::move(proj), cfg.mode, w});
    }
    return out;
}

// Constraint metric: mean over columns of the relative output deviation
// between the two models.
inline double harmful_drift(const ToyModel& base_model, const ToyModel& tuned_model,
                            const Matrix& h) {
    if (h.empty()) return 0.0;
    return detail::drift_between(forward(base_model, h).y, forward(tuned_model, h).y);
}

// Adapter-only SGD for cfg.epochs epochs; W' and P are never touched. Metrics
// are recorded once per epoch. Aborts with a diagnostic on divergence.
inline RunReport train(ToyModel& model, const TrainConfig& cfg, const TaskData& data) {
    validate_config(cfg);
    validate_chain(model);
    if (data.train_x.empty() || data.train_x.cols() != data.train_y.cols())
        throw contract_error("train: downstream training split is empty or mismatched");
    ToyModel base = detail::base_of(model);
    const Matrix y_base_cal =
        data.calibration.empty() ? Matrix() : forward(base, data.calibration).y;
    const Matrix y_base_held = data.held_out.empty() ? Matrix() : forward(base, data.held_out).y;

    RunReport report;
    report.config = cfg;
    report.initial_task_loss =
        detail::task_loss_of(forward(model, data.test_x).y, data.test_y, data.classification);

    const std::size_t n = data.train_x.cols();
    const std::size_t bs = cfg.batch == 0 ? n : std::min(cfg.batch, n);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(cfg.seed + 1);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        auto diverged = [&](const char* why) {
            return numerical_error("train: diverged at epoch " + std::to_string(epoch + 1) +
                                   " of " + std::to_string(cfg.epochs) + " (" + why + ")");
        };
        try {
            if (bs < n) std::shuffle(order.begin(), order.end(), rng);
            for (std::size_t start = 0; start < n; start += bs) {
                const std::size_t stop = std::min(start + bs, n);
                Matrix xb =
                    bs == n ? data.train_x : detail::gather_cols(data.train_x, order, start, stop);
                Matrix yb =
                    bs == n ? data.train_y : detail::gather_cols(data.train_y, order, start, stop);
                ForwardResult fr = forward(model, xb);
                Matrix g0 = detail::loss_gradient(fr.y, yb, data.classification);
                GradientSet gs = backward(model, fr, g0);
                for (std::size_t li = 0; li < model.layers.size(); ++li) {
                    AdapterPair& ap = model.layers[li].adapters;
                    for (std::size_t i = 0; i < ap.A.size(); ++i)
                        ap.A.data()[i] -= cfg.learning_rate * gs.per_layer[li].dA.data()[i];
                    for (std::size_t i = 0; i < ap.B.size(); ++i)
                        ap.B.data()[i] -= cfg.learning_rate * gs.per_layer[li].dB.data()[i];
                }
            }
            Matrix y_test = forward(model, data.test_x).y;
            double loss = detail::task_loss_of(y_test, data.test_y, data.classification);
            if (!std::isfinite(loss)) throw diverged("task loss is not finite");
            report.task_loss.push_back(loss);
            report.task_accuracy.push_back(
                detail::task_accuracy_of(y_test, data.test_y, data.classification));
            report.harmful_drift.push_back(
                y_base_held.empty()
                    ? 0.0
                    : detail::drift_between(y_base_held, forward(model, data.held_out).y));
            report.calibration_drift.push_back(
                y_base_cal.empty()
                    ? 0.0
                    : detail::drift_between(y_base_cal, forward(model, data.calibration).y));
        } catch (const contract_error& e) {
            // Shapes were validated before the loop, so the only contract
            // failures left are non-finite values from a runaway step.
            if (std::string(e.what()).find("non-finite") != std::string::npos)
                throw diverged("activations overflowed");
            throw;
        }
    }

    std::vector<Matrix> merged;
    merged.reserve(model.layers.size());
    std::vector<const Matrix*> refs;
    for (const GuardedLayer& l : model.layers) {
        merged.push_back(merge(l));
        refs.push_back(&merged.back());
    }
    report.merged_checksum = detail::fnv1a_hex(refs);
    return report;
}

// The four ablation configurations over shared data and seed, plus the
// ordering assertions: per-epoch calibration invariance in projector modes,
// a >= 1e3 calibration-drift gap between the mode groups, and utility within
// 1.1x of the plain-LoRA baseline.
struct AblationOutcome {
    // Order: lora-baseline, no-init, no-projector, full.
    std::array<RunReport, 4> reports;
    bool ordering_ok = false;
    std::vector<std::string> violations;
};

inline AblationOutcome ablation_suite(const ToyModel& pristine, const TrainConfig& base_cfg,
                                      const TaskData& data) {
    static constexpr std::array<Mode, 4> kModes{Mode::lora_baseline, Mode::no_init,
                                                Mode::no_projector, Mode::full};
    AblationOutcome out;
    for (std::size_t i = 0; i < kModes.size(); ++i) {
        TrainConfig cfg = base_cfg;
        cfg.mode = kModes[i];
        ToyModel model = prepare(pristine, cfg, data.subspace, data.calibration);
        out.reports[i] = train(model, cfg, data);
    }
    const RunReport& lora = out.reports[0];
    const RunReport& no_init = out.reports[1];
    const RunReport& no_proj = out.reports[2];
    const RunReport& full = out.reports[3];
    auto series_max = [](const std::vector<double>& v) {
        return *std::max_element(v.begin(), v.end());
    };
    if (series_max(full.calibration_drift) > 1e-7)
        out.violations.push_back("full-mode calibration drift exceeded 1e-7 within an epoch");
    if (series_max(no_init.calibration_drift) > 1e-7)
        out.violations.push_back("no-init calibration drift exceeded 1e-7 within an epoch");
    double guarded = std::max(full.calibration_drift.back(), no_init.calibration_drift.back());
    double unguarded =
        std::min(no_proj.calibration_drift.back(), lora.calibration_drift.back());
    if (unguarded < 1e3 * std::max(guarded, 1e-30))
        out.violations.push_back("calibration drift gap between mode groups is below 1e3");
    if (full.task_loss.back() > 1.1 * lora.task_loss.back())
        out.violations.push_back("full-mode final task loss exceeds 1.1x the lora baseline");
    out.ordering_ok = out.violations.empty();
    return out;
}

struct SweepPoint {
    std::size_t size = 0;
    double drift = 0.0;        // final held-out harmful drift
    double task_metric = 0.0;  // final task loss
};

// Data-size sensitivity: rebuild the projector from a prefix of the
// calibration corpus, retrain from the pristine state, record held-out drift.
inline std::vector<SweepPoint> datasize_sweep(const ToyModel& pristine, const TrainConfig& cfg,
                                              const TaskData& data,
                                              const std::vector<std::size_t>& sizes) {
    std::vector<SweepPoint> out;
    out.reserve(sizes.size());
    for (std::size_t size : sizes) {
        if (size > data.calibration.cols())
            throw contract_error("datasize_sweep: size " + std::to_string(size) +
                                 " exceeds the projector corpus (" +
                                 std::to_string(data.calibration.cols()) + " columns)");
        Matrix prefix;
        if (size > 0) {
            prefix = Matrix(data.calibration.rows(), size);
            for (std::size_t j = 0; j < size; ++j)
                for (std::size_t i = 0; i < prefix.rows(); ++i)
                    prefix(i, j) = data.calibration(i, j);
        }
        ToyModel model = prepare(pristine, cfg, data.subspace, prefix);
        TaskData point_data = data;
        point_data.calibration = prefix;
        RunReport report = train(model, cfg, point_data);
        out.push_back({size, report.harmful_drift.back(), report.task_loss.back()});
    }
    return out;
}

}  // namespace guardspace
