#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace bgrid {

// Element type used when a tensor is serialized. Arithmetic is always
// carried out in double precision; the dtype only controls the on-disk
// payload width.
enum class Dtype : std::uint8_t { Float32 = 0, Float64 = 1 };

// Dense row-major N-dimensional array of doubles. Shapes are immutable
// after construction; extents must all be >= 1.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape, Dtype dtype = Dtype::Float64)
        : shape_(std::move(shape)), dtype_(dtype) {
        validate_shape(shape_);
        data_.assign(numel(shape_), 0.0);
    }

    Tensor(std::vector<std::size_t> shape, std::vector<double> data,
           Dtype dtype = Dtype::Float64)
        : shape_(std::move(shape)), data_(std::move(data)), dtype_(dtype) {
        validate_shape(shape_);
        if (data_.size() != numel(shape_)) {
            throw std::invalid_argument("tensor data length does not match shape");
        }
    }

    static Tensor full(std::vector<std::size_t> shape, double value,
                       Dtype dtype = Dtype::Float64) {
        Tensor t(std::move(shape), dtype);
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static std::size_t numel(std::span<const std::size_t> shape) {
        std::size_t n = 1;
        for (std::size_t e : shape) n *= e;
        return n;
    }

    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
    Dtype dtype() const { return dtype_; }
    void set_dtype(Dtype d) { dtype_ = d; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& values() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double& operator[](std::size_t i) { return data_[i]; }

    double at(std::span<const std::size_t> idx) const { return data_[offset(idx)]; }
    double& at(std::span<const std::size_t> idx) { return data_[offset(idx)]; }
    double at(std::initializer_list<std::size_t> idx) const {
        return at(std::span<const std::size_t>(idx.begin(), idx.size()));
    }
    double& at(std::initializer_list<std::size_t> idx) {
        return data_[offset(std::span<const std::size_t>(idx.begin(), idx.size()))];
    }

    std::size_t offset(std::span<const std::size_t> idx) const {
        if (idx.size() != shape_.size()) {
            throw std::invalid_argument("index rank does not match tensor rank");
        }
        std::size_t off = 0;
        for (std::size_t a = 0; a < idx.size(); ++a) {
            off = off * shape_[a] + idx[a];
        }
        return off;
    }

    // Row-major strides, innermost axis last.
    std::vector<std::size_t> strides() const {
        std::vector<std::size_t> s(shape_.size(), 1);
        for (std::size_t a = shape_.size(); a-- > 1;) {
            s[a - 1] = s[a] * shape_[a];
        }
        return s;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

private:
    static void validate_shape(const std::vector<std::size_t>& shape) {
        if (shape.empty()) {
            throw std::invalid_argument("tensor shape must have rank >= 1");
        }
        for (std::size_t e : shape) {
            if (e == 0) throw std::invalid_argument("tensor extents must be >= 1");
        }
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
    Dtype dtype_ = Dtype::Float64;
};

inline std::string shape_string(std::span<const std::size_t> shape) {
    std::string s;
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s;
}

}  // namespace bgrid
