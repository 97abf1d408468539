#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace fc2s {

// Dense row-major array of doubles. Entries are finite by construction.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> data);

    static Tensor vector(std::vector<double> data);

    const std::vector<std::size_t>& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> data() noexcept { return data_; }
    std::span<const double> data() const noexcept { return data_; }
    std::vector<double>& raw() noexcept { return data_; }
    const std::vector<double>& raw() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& at(std::size_t i, std::size_t j);
    double at(std::size_t i, std::size_t j) const;

    // Leading-axis slice [begin, end) as a new tensor.
    Tensor slice(std::size_t begin, std::size_t end) const;
    Tensor reshaped(std::vector<std::size_t> shape) const;

    // Throws numeric error naming `what` on the first NaN/Inf.
    void validate(const std::string& what = "tensor") const;
    bool all_finite() const noexcept;

    friend bool operator==(const Tensor& a, const Tensor& b) = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);
void require_same_shape(const Tensor& a, const Tensor& b, const char* op);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);
Tensor hadamard(const Tensor& a, const Tensor& b);
double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double squared_distance(std::span<const double> a, std::span<const double> b);

// Stack equal-shape tensors along a new leading axis.
Tensor stack(const std::vector<Tensor>& parts);
// Concatenate along the leading axis.
Tensor concat(const std::vector<Tensor>& parts);

// Binary container: "FC2S", u32 version, u32 rank, u32 dims[rank], f64 LE payload.
inline constexpr std::uint32_t kTensorFormatVersion = 1;
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

// 64-bit FNV-1a, used for content hashes of artifacts.
std::uint64_t fnv1a(std::span<const unsigned char> bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a(const std::string& s);
std::uint64_t hash_tensor(const Tensor& t);
std::string hex64(std::uint64_t v);

}  // namespace fc2s
