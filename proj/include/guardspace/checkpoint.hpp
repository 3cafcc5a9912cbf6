#pragma once

#include <filesystem>
#include <string>

#include "guardspace/model.hpp"
#include "guardspace/tensor_io.hpp"

namespace guardspace {

// Model checkpoint: "GSCP", version u64 = 1, layer_count u64, then per layer
// mode ordinal u64, adapter rank u64, projector null_dim u64, projector
// eps_used f64, followed by the tensors original_w, w_prime, B, A, P in that
// order (each as rows u64, cols u64, payload).
inline constexpr std::uint64_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::filesystem::path& path, const ToyModel& model) {
    validate_chain(model);
    std::string buf;
    buf += "GSCP";
    detail::put_u64(buf, kCheckpointVersion);
    detail::put_u64(buf, model.layers.size());
    for (const GuardedLayer& l : model.layers) {
        detail::put_u64(buf, static_cast<std::uint64_t>(l.mode));
        detail::put_u64(buf, l.adapters.rank);
        detail::put_u64(buf, l.projector.null_dim);
        detail::put_f64(buf, l.projector.eps_used);
        detail::serialize_matrix(buf, l.original_w);
        detail::serialize_matrix(buf, l.w_prime);
        detail::serialize_matrix(buf, l.adapters.B);
        detail::serialize_matrix(buf, l.adapters.A);
        detail::serialize_matrix(buf, l.projector.p);
    }
    detail::atomic_write(path, buf);
}

inline ToyModel load_checkpoint(const std::filesystem::path& path) {
    std::string bytes = detail::read_file(path);
    detail::ByteReader r(bytes, "checkpoint file " + path.filename().string());
    r.expect_magic("GSCP", "magic");
    std::uint64_t version = r.u64("version");
    if (version != kCheckpointVersion)
        throw contract_error(r.context() + ": unsupported version " + std::to_string(version));
    std::uint64_t layer_count = r.u64("layer_count");
    if (layer_count == 0) throw contract_error(r.context() + ": layer_count is zero");
    if (layer_count > 1024)
        throw contract_error(r.context() + ": implausible layer_count " +
                             std::to_string(layer_count));
    ToyModel model;
    for (std::uint64_t li = 0; li < layer_count; ++li) {
        std::uint64_t mode_ord = r.u64("mode");
        if (mode_ord > 3)
            throw contract_error(r.context() + ": invalid mode ordinal " +
                                 std::to_string(mode_ord));
        std::uint64_t rank = r.u64("rank");
        std::uint64_t null_dim = r.u64("null_dim");
        double eps_used = r.f64("eps_used");
        GuardedLayer l;
        l.mode = static_cast<Mode>(mode_ord);
        l.original_w = detail::deserialize_matrix(r);
        l.w_prime = detail::deserialize_matrix(r);
        l.adapters.B = detail::deserialize_matrix(r);
        l.adapters.A = detail::deserialize_matrix(r);
        l.adapters.rank = rank;
        l.projector.p = detail::deserialize_matrix(r);
        l.projector.null_dim = null_dim;
        l.projector.eps_used = eps_used;
        if (l.adapters.B.cols() != rank || l.adapters.A.rows() != rank)
            throw contract_error(r.context() + ": rank field disagrees with adapter shapes");
        if (l.w_prime.rows() != l.original_w.rows() || l.w_prime.cols() != l.original_w.cols())
            throw contract_error(r.context() + ": w_prime shape disagrees with original_w");
        if (l.projector.p.rows() != l.original_w.cols() ||
            l.projector.p.cols() != l.original_w.cols())
            throw contract_error(r.context() + ": projector shape disagrees with the layer");
        if (null_dim > l.original_w.cols())
            throw contract_error(r.context() + ": null_dim exceeds the input dimension");
        model.layers.push_back(std::move(l));
    }
    if (r.remaining() != 0)
        throw contract_error(r.context() + ": trailing bytes after the last layer");
    validate_chain(model);
    return model;
}

}  // namespace guardspace
