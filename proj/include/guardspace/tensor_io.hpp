#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "guardspace/matrix.hpp"

namespace guardspace {

namespace detail {

// All on-disk integers and doubles are little-endian regardless of host order.
inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int b = 0; b < 8; ++b) buf.push_back(static_cast<char>((v >> (8 * b)) & 0xffu));
}

inline void put_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    put_u64(buf, bits);
}

class ByteReader {
public:
    ByteReader(const std::string& buf, std::string context)
        : buf_(buf), context_(std::move(context)) {}

    std::uint64_t u64(const char* field) {
        if (pos_ + 8 > buf_.size())
            throw contract_error(context_ + ": truncated while reading " + field);
        std::uint64_t v = 0;
        for (int b = 0; b < 8; ++b)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + b])) << (8 * b);
        pos_ += 8;
        return v;
    }

    double f64(const char* field) {
        std::uint64_t bits = u64(field);
        double v;
        std::memcpy(&v, &bits, sizeof v);
        return v;
    }

    void expect_magic(const char* magic, const char* field) {
        std::size_t len = std::strlen(magic);
        if (pos_ + len > buf_.size() || buf_.compare(pos_, len, magic) != 0)
            throw contract_error(context_ + ": bad " + field);
        pos_ += len;
    }

    [[nodiscard]] std::size_t remaining() const { return buf_.size() - pos_; }
    [[nodiscard]] const std::string& context() const { return context_; }

private:
    const std::string& buf_;
    std::string context_;
    std::size_t pos_ = 0;
};

// Write-temp-then-rename so a crash never leaves a half-written artifact.
inline void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw contract_error("cannot open " + tmp.string() + " for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw contract_error("write failed for " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw contract_error("cannot open " + path.string());
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return bytes;
}

inline void serialize_matrix(std::string& buf, const Matrix& m) {
    put_u64(buf, m.rows());
    put_u64(buf, m.cols());
    for (double v : m.data()) put_f64(buf, v);
}

inline Matrix deserialize_matrix(ByteReader& r) {
    std::uint64_t rows = r.u64("rows");
    std::uint64_t cols = r.u64("cols");
    if (rows == 0) throw contract_error(r.context() + ": rows is zero");
    if (cols == 0) throw contract_error(r.context() + ": cols is zero");
    if (rows > (1u << 20) || cols > (1u << 20))
        throw contract_error(r.context() + ": implausible dimensions " + std::to_string(rows) +
                             "x" + std::to_string(cols));
    if (r.remaining() < rows * cols * 8)
        throw contract_error(r.context() + ": truncated payload, expected " +
                             std::to_string(rows * cols * 8) + " bytes, found " +
                             std::to_string(r.remaining()));
    Matrix m(rows, cols);
    for (double& v : m.data()) v = r.f64("payload");
    return m;
}

}  // namespace detail

// Tensor container: "GSTF", version u64 = 1, rows u64, cols u64, then the
// row-major f64 payload. Everything little-endian.
inline constexpr std::uint64_t kTensorVersion = 1;

inline void save_tensor(const std::filesystem::path& path, const Matrix& m) {
    if (m.empty()) throw contract_error("save_tensor: refusing to write an empty tensor");
    std::string buf;
    buf.reserve(28 + m.size() * 8);
    buf += "GSTF";
    detail::put_u64(buf, kTensorVersion);
    detail::serialize_matrix(buf, m);
    detail::atomic_write(path, buf);
}

inline Matrix load_tensor(const std::filesystem::path& path) {
    std::string bytes = detail::read_file(path);
    detail::ByteReader r(bytes, "tensor file " + path.filename().string());
    r.expect_magic("GSTF", "magic");
    std::uint64_t version = r.u64("version");
    if (version != kTensorVersion)
        throw contract_error(r.context() + ": unsupported version " + std::to_string(version));
    Matrix m = detail::deserialize_matrix(r);
    if (r.remaining() != 0)
        throw contract_error(r.context() + ": trailing bytes after payload");
    return m;
}

}  // namespace guardspace
