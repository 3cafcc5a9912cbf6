#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "guardspace/matrix.hpp"
#include "guardspace/nullspace.hpp"

namespace guardspace {

inline double relu(double v) { return v > 0.0 ? v : 0.0; }
// Evaluated on the activation value; valid for monotone piecewise-linear maps.
inline double relu_deriv(double v) { return v > 0.0 ? 1.0 : 0.0; }

// Feed-forward stack of guarded layers with an elementwise nonlinearity
// between layers and none after the last.
struct ToyModel {
    std::vector<GuardedLayer> layers;
    double (*nonlinearity)(double) = relu;
    double (*nonlinearity_deriv)(double) = relu_deriv;
};

// W* = W' + B*A*P, the effective weight of one layer.
inline Matrix merge(const GuardedLayer& layer) {
    return layer.w_prime +
           matmul(layer.adapters.B, matmul(layer.adapters.A, layer.projector.p));
}

inline void validate_chain(const ToyModel& model) {
    if (model.layers.empty())
        throw contract_error("ToyModel: no layers");
    for (std::size_t i = 0; i + 1 < model.layers.size(); ++i)
        if (model.layers[i].w_prime.rows() != model.layers[i + 1].w_prime.cols())
            throw contract_error("ToyModel: layer " + std::to_string(i) + " outputs " +
                                 std::to_string(model.layers[i].w_prime.rows()) +
                                 " but layer " + std::to_string(i + 1) + " expects " +
                                 std::to_string(model.layers[i + 1].w_prime.cols()));
}

struct ForwardResult {
    Matrix y;
    std::vector<Matrix> layer_inputs;  // [i] is the input batch seen by layer i
};

inline ForwardResult forward(const ToyModel& model, const Matrix& x) {
    validate_chain(model);
    if (x.rows() != model.layers.front().w_prime.cols())
        throw contract_error("forward: input has " + std::to_string(x.rows()) +
                             " rows, first layer expects " +
                             std::to_string(model.layers.front().w_prime.cols()));
    ForwardResult r;
    r.layer_inputs.reserve(model.layers.size());
    Matrix h = x;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        r.layer_inputs.push_back(h);
        Matrix z = matmul(merge(model.layers[i]), h);
        if (i + 1 < model.layers.size())
            for (double& v : z.data()) v = model.nonlinearity(v);
        h = std::move(z);
    }
    r.y = std::move(h);
    return r;
}

// One ActivationBatch per layer from a single pass over the corpus. Requires a
// pristine model (effective weights still equal to the originals), per the
// decomposition-before-training ordering.
inline std::vector<ActivationBatch> capture_activations(const ToyModel& model,
                                                        const Matrix& corpus,
                                                        const std::string& tag) {
    for (std::size_t i = 0; i < model.layers.size(); ++i)
        if (relative_frobenius_error(merge(model.layers[i]), model.layers[i].original_w) > 1e-9)
            throw contract_error("capture_activations: layer " + std::to_string(i) +
                                 " is not pristine");
    ForwardResult r = forward(model, corpus);
    std::vector<ActivationBatch> out;
    out.reserve(model.layers.size());
    for (std::size_t i = 0; i < model.layers.size(); ++i)
        out.push_back({std::move(r.layer_inputs[i]), tag, i});
    return out;
}

struct AdapterGradient {
    Matrix dA;  // r x d_in
    Matrix dB;  // d_out x r
};

// Gradients exist for the adapters only; W' and P are frozen by construction.
struct GradientSet {
    std::vector<AdapterGradient> per_layer;
};

// Reverse pass for adapter gradients: with upstream gradient G and layer input
// h, dB = G (A P h)^t and dA = B^t G (P h)^t; the input gradient flows through
// (W' + BAP)^t and the nonlinearity derivative.
inline GradientSet backward(const ToyModel& model, const ForwardResult& cache,
                            const Matrix& loss_grad) {
    validate_chain(model);
    const std::size_t n_layers = model.layers.size();
    if (cache.layer_inputs.size() != n_layers)
        throw contract_error("backward: cache holds " +
                             std::to_string(cache.layer_inputs.size()) + " batches for " +
                             std::to_string(n_layers) + " layers");
    if (loss_grad.rows() != model.layers.back().w_prime.rows() ||
        loss_grad.cols() != cache.layer_inputs.front().cols())
        throw contract_error("backward: loss gradient is " + std::to_string(loss_grad.rows()) +
                             "x" + std::to_string(loss_grad.cols()) +
                             ", stale or mismatched cache");
    GradientSet g;
    g.per_layer.resize(n_layers);
    Matrix grad = loss_grad;  // dL/dz of the current layer
    for (std::size_t idx = n_layers; idx-- > 0;) {
        const GuardedLayer& layer = model.layers[idx];
        const Matrix& h = cache.layer_inputs[idx];
        if (h.rows() != layer.w_prime.cols() || h.cols() != loss_grad.cols())
            throw contract_error("backward: cached input for layer " + std::to_string(idx) +
                                 " has stale shape");
        Matrix ph = matmul(layer.projector.p, h);
        Matrix aph = matmul(layer.adapters.A, ph);
        g.per_layer[idx].dB = matmul(grad, aph.transpose());
        g.per_layer[idx].dA = matmul(layer.adapters.B.transpose(), matmul(grad, ph.transpose()));
        if (idx == 0) break;
        Matrix gin = matmul(merge(layer).transpose(), grad);
        // h itself is the previous nonlinearity's output; the derivative mask
        // comes from its values.
        for (std::size_t t = 0; t < gin.size(); ++t)
            gin.data()[t] *= model.nonlinearity_deriv(h.data()[t]);
        grad = std::move(gin);
    }
    return g;
}

}  // namespace guardspace
