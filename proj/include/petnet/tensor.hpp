#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <vector>

#include "petnet/errors.hpp"

namespace petnet {

// Dense row-major layout. 4-D tensors follow the (batch N, channels C,
// height H, width W) convention everywhere in this project.
struct Shape {
    std::vector<int64_t> dims;

    Shape() = default;
    Shape(std::initializer_list<int64_t> d);
    explicit Shape(std::vector<int64_t> d);

    int64_t rank() const { return static_cast<int64_t>(dims.size()); }
    int64_t count() const;
    int64_t operator[](int64_t axis) const { return dims[static_cast<size_t>(axis)]; }
    bool operator==(const Shape& other) const { return dims == other.dims; }
    bool operator!=(const Shape& other) const { return dims != other.dims; }
    std::string str() const;  // e.g. "2x3x4"
};

class Tensor {
  public:
    Tensor() = default;
    Tensor(Shape shape, std::vector<double> values);

    // Validating constructor wrapper; rejects count mismatches and
    // non-finite values.
    static Tensor create(Shape shape, std::vector<double> values);
    static Tensor zeros(const Shape& shape);
    static Tensor full(const Shape& shape, double value);

    const Shape& shape() const { return shape_; }
    int64_t size() const { return static_cast<int64_t>(values_.size()); }
    bool empty() const { return values_.empty() && shape_.dims.empty(); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::vector<double>& values() { return values_; }
    const std::vector<double>& values() const { return values_; }

    double operator[](int64_t i) const { return values_[static_cast<size_t>(i)]; }
    double& operator[](int64_t i) { return values_[static_cast<size_t>(i)]; }

    // 4-D accessor, (n, c, y, x) row-major.
    double at4(int64_t n, int64_t c, int64_t y, int64_t x) const;
    double& at4(int64_t n, int64_t c, int64_t y, int64_t x);

    // Same values, new shape; counts must agree.
    Tensor reshaped(Shape shape) const;

  private:
    Shape shape_;
    std::vector<double> values_;
};

// Row-major unrolling to rank 1.
Tensor flatten(const Tensor& x);
// Batched variant: collapses all non-batch axes, N x rest.
Tensor flatten_batch(const Tensor& x);

// Channel-axis (axis 1) concatenation of two N x C x H x W tensors.
// a's channels come first.
Tensor concat_channels(const Tensor& a, const Tensor& b);

// Standard rank-2 matrix product with 64-bit accumulation.
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor map_elementwise(const Tensor& x, const std::function<double(double)>& f);

// Raw kernel: C(m x n) += A(m x k) * B(k x n), all row-major. Exposed so
// layer code can run on scratch buffers without building Tensors.
void matmul_accumulate(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n);

}  // namespace petnet
