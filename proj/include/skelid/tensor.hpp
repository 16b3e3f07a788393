#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "skelid/common.hpp"
#include "skelid/rng.hpp"

namespace skelid {

using Shape = std::vector<std::int64_t>;

inline std::string shape_str(const Shape& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (auto d : s) {
        if (d < 0) throw ShapeError("negative dimension in shape " + shape_str(s));
        n *= d;
    }
    return n;
}

// Dense row-major double tensor. All math in the project runs in double;
// model files store doubles too, so saved and live states match bit for bit.
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), 0.0) {}

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_))
            throw ShapeError("data size " + std::to_string(data_.size()) + " does not match shape " + shape_str(shape_));
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

    static Tensor full(Shape shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    static Tensor ones(Shape shape) { return full(std::move(shape), 1.0); }

    static Tensor scalar(double v) { return Tensor({}, {v}); }

    static Tensor randn(Shape shape, CounterRng& rng, double stddev = 1.0) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = stddev * rng.next_normal();
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::int64_t ndim() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    std::int64_t dim(std::int64_t i) const {
        if (i < 0 || i >= ndim()) throw ShapeError("dim index " + std::to_string(i) + " out of range for " + shape_str(shape_));
        return shape_[static_cast<std::size_t>(i)];
    }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(std::initializer_list<std::int64_t> idx) { return data_[static_cast<std::size_t>(offset(idx))]; }
    double at(std::initializer_list<std::int64_t> idx) const { return data_[static_cast<std::size_t>(offset(idx))]; }

    double item() const {
        if (numel() != 1) throw ShapeError("item() requires a single-element tensor, got " + shape_str(shape_));
        return data_[0];
    }

    Tensor reshaped(Shape new_shape) const {
        if (shape_numel(new_shape) != numel())
            throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(new_shape));
        return Tensor(std::move(new_shape), data_);
    }

    void fill(double v) {
        for (auto& x : data_) x = v;
    }

    void add_(const Tensor& other) {
        check_same_shape(other, "add_");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
    }

    void sub_(const Tensor& other) {
        check_same_shape(other, "sub_");
        for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
    }

    void scale_(double a) {
        for (auto& x : data_) x *= a;
    }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    void check_same_shape(const Tensor& other, const char* what) const {
        if (!same_shape(other))
            throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(shape_) + " vs " + shape_str(other.shape_));
    }

  private:
    std::int64_t offset(std::initializer_list<std::int64_t> idx) const {
        if (static_cast<std::int64_t>(idx.size()) != ndim())
            throw ShapeError("index rank " + std::to_string(idx.size()) + " does not match tensor rank " +
                             std::to_string(ndim()));
        std::int64_t off = 0;
        std::size_t k = 0;
        for (auto i : idx) {
            std::int64_t d = shape_[k];
            if (i < 0 || i >= d)
                throw ShapeError("index " + std::to_string(i) + " out of range for axis " + std::to_string(k) + " of " +
                                 shape_str(shape_));
            off = off * d + i;
            ++k;
        }
        return off;
    }

    Shape shape_;
    std::vector<double> data_;
};

}  // namespace skelid
