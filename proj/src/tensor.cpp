#include "fc2s/tensor.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fc2s/error.hpp"

namespace fc2s {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
    std::size_t n = 1;
    for (std::size_t d : shape) {
        if (d == 0) fail(ErrorKind::shape, "tensor dimensions must be positive, got " + shape_string(shape));
        n *= d;
    }
    return n;
}

void put_u32(std::ostream& out, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) fail(ErrorKind::io, "truncated tensor header");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t{b[i]} << (8 * i);
    return v;
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {
    if (!std::isfinite(fill)) fail(ErrorKind::numeric, "non-finite fill value");
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size())
        fail(ErrorKind::shape, "shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) +
                                   " entries");
    validate();
}

Tensor Tensor::vector(std::vector<double> data) {
    const std::size_t n = data.size();
    return Tensor({n}, std::move(data));
}

std::size_t Tensor::dim(std::size_t axis) const {
    if (axis >= shape_.size()) fail(ErrorKind::shape, "axis out of range for shape " + shape_string(shape_));
    return shape_[axis];
}

double& Tensor::at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

Tensor Tensor::slice(std::size_t begin, std::size_t end) const {
    if (shape_.empty() || begin >= end || end > shape_[0])
        fail(ErrorKind::shape, "invalid slice [" + std::to_string(begin) + "," + std::to_string(end) + ") of " +
                                   shape_string(shape_));
    const std::size_t stride = data_.size() / shape_[0];
    auto shape = shape_;
    shape[0] = end - begin;
    std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                            data_.begin() + static_cast<std::ptrdiff_t>(end * stride));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(out);
    return t;
}

Tensor Tensor::reshaped(std::vector<std::size_t> shape) const {
    if (element_count(shape) != data_.size())
        fail(ErrorKind::shape, "cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = data_;
    return t;
}

void Tensor::validate(const std::string& what) const {
    for (std::size_t i = 0; i < data_.size(); ++i) {
        if (!std::isfinite(data_[i]))
            fail(ErrorKind::numeric, what + ": non-finite entry at flat index " + std::to_string(i));
    }
}

bool Tensor::all_finite() const noexcept {
    for (double v : data_)
        if (!std::isfinite(v)) return false;
    return true;
}

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
    os << ']';
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        fail(ErrorKind::shape,
             std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
}

Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "subtract");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
    return out;
}

Tensor operator*(double s, const Tensor& a) {
    Tensor out = a;
    for (double& v : out.raw()) v *= s;
    return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "hadamard");
    Tensor out = a;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
    return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) fail(ErrorKind::shape, "dot: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

double squared_distance(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) fail(ErrorKind::shape, "squared_distance: length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

Tensor stack(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail(ErrorKind::shape, "stack of zero tensors");
    std::vector<std::size_t> shape{parts.size()};
    shape.insert(shape.end(), parts[0].shape().begin(), parts[0].shape().end());
    std::vector<double> data;
    data.reserve(parts.size() * parts[0].size());
    for (const auto& p : parts) {
        require_same_shape(p, parts[0], "stack");
        data.insert(data.end(), p.raw().begin(), p.raw().end());
    }
    return Tensor(std::move(shape), std::move(data));
}

Tensor concat(const std::vector<Tensor>& parts) {
    if (parts.empty()) fail(ErrorKind::shape, "concat of zero tensors");
    auto shape = parts[0].shape();
    if (shape.empty()) fail(ErrorKind::shape, "concat of rank-0 tensors");
    std::vector<double> data;
    std::size_t lead = 0;
    for (const auto& p : parts) {
        if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1))
            fail(ErrorKind::shape, "concat: trailing shape mismatch");
        lead += p.shape()[0];
        data.insert(data.end(), p.raw().begin(), p.raw().end());
    }
    shape[0] = lead;
    return Tensor(std::move(shape), std::move(data));
}

void write_tensor(std::ostream& out, const Tensor& t) {
    out.write("FC2S", 4);
    put_u32(out, kTensorFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    std::vector<unsigned char> buf(t.size() * 8);
    for (std::size_t i = 0; i < t.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(t[i]);
        for (int b = 0; b < 8; ++b) buf[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) fail(ErrorKind::io, "tensor write failed");
}

Tensor read_tensor(std::istream& in) {
    char magic[4];
    if (!in.read(magic, 4) || std::string(magic, 4) != "FC2S") fail(ErrorKind::io, "bad tensor magic");
    const std::uint32_t version = get_u32(in);
    if (version != kTensorFormatVersion) fail(ErrorKind::io, "unsupported tensor format version " + std::to_string(version));
    const std::uint32_t rank = get_u32(in);
    if (rank == 0 || rank > 16) fail(ErrorKind::io, "unsupported tensor rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    for (auto& d : shape) d = get_u32(in);
    const std::size_t n = std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
    std::vector<unsigned char> buf(n * 8);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size())))
        fail(ErrorKind::io, "truncated tensor payload");
    std::vector<double> data(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= std::uint64_t{buf[i * 8 + b]} << (8 * b);
        data[i] = std::bit_cast<double>(bits);
    }
    return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::io, "cannot open " + path + " for writing");
    write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open " + path);
    return read_tensor(in);
}

std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed) {
    std::uint64_t h = seed;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t fnv1a(const std::string& s) {
    return fnv1a(std::span(reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

std::uint64_t hash_tensor(const Tensor& t) {
    std::ostringstream os;
    write_tensor(os, t);
    return fnv1a(os.str());
}

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return s;
}

}  // namespace fc2s
