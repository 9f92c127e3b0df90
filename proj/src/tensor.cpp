#include "petnet/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace petnet {

namespace {

void check_extents(const std::vector<int64_t>& dims) {
    for (int64_t d : dims) {
        if (d < 0) {
            throw ShapeError("negative extent in shape");
        }
    }
}

}  // namespace

Shape::Shape(std::initializer_list<int64_t> d) : dims(d) { check_extents(dims); }

Shape::Shape(std::vector<int64_t> d) : dims(std::move(d)) { check_extents(dims); }

int64_t Shape::count() const {
    int64_t n = 1;
    for (int64_t d : dims) n *= d;
    return n;
}

std::string Shape::str() const {
    std::ostringstream out;
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i) out << 'x';
        out << dims[i];
    }
    if (dims.empty()) out << "scalar";
    return out.str();
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_.count() != static_cast<int64_t>(values_.size())) {
        throw ShapeError("value count " + std::to_string(values_.size()) +
                         " does not match shape " + shape_.str() + " (expects " +
                         std::to_string(shape_.count()) + ")");
    }
}

Tensor Tensor::create(Shape shape, std::vector<double> values) {
    Tensor t(std::move(shape), std::move(values));
    for (size_t i = 0; i < t.values_.size(); ++i) {
        if (!std::isfinite(t.values_[i])) {
            throw NumericError("non-finite value at index " + std::to_string(i));
        }
    }
    return t;
}

Tensor Tensor::zeros(const Shape& shape) {
    return Tensor(shape, std::vector<double>(static_cast<size_t>(shape.count()), 0.0));
}

Tensor Tensor::full(const Shape& shape, double value) {
    return Tensor(shape, std::vector<double>(static_cast<size_t>(shape.count()), value));
}

double Tensor::at4(int64_t n, int64_t c, int64_t y, int64_t x) const {
    const auto& d = shape_.dims;
    return values_[static_cast<size_t>(((n * d[1] + c) * d[2] + y) * d[3] + x)];
}

double& Tensor::at4(int64_t n, int64_t c, int64_t y, int64_t x) {
    const auto& d = shape_.dims;
    return values_[static_cast<size_t>(((n * d[1] + c) * d[2] + y) * d[3] + x)];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape.count() != size()) {
        throw ShapeError("cannot reshape " + shape_.str() + " (" + std::to_string(size()) +
                         " values) to " + shape.str());
    }
    return Tensor(std::move(shape), values_);
}

Tensor flatten(const Tensor& x) { return x.reshaped(Shape{x.size()}); }

Tensor flatten_batch(const Tensor& x) {
    if (x.shape().rank() < 1) {
        throw ShapeError("flatten_batch needs rank >= 1, got " + x.shape().str());
    }
    int64_t n = x.shape()[0];
    int64_t rest = n == 0 ? 0 : x.size() / n;
    return x.reshaped(Shape{n, rest});
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.shape().rank() != 4 || b.shape().rank() != 4) {
        throw ShapeError("concat_channels expects rank-4 tensors, got " + a.shape().str() +
                         " and " + b.shape().str());
    }
    for (int64_t axis : {int64_t{0}, int64_t{2}, int64_t{3}}) {
        if (a.shape()[axis] != b.shape()[axis]) {
            throw ShapeError("concat_channels mismatch on axis " + std::to_string(axis) + ": " +
                             a.shape().str() + " vs " + b.shape().str());
        }
    }
    int64_t n = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
    int64_t h = a.shape()[2], w = a.shape()[3];
    int64_t plane = h * w;
    Tensor out = Tensor::zeros(Shape{n, ca + cb, h, w});
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (int64_t i = 0; i < n; ++i) {
        double* dst = po + i * (ca + cb) * plane;
        const double* sa = pa + i * ca * plane;
        const double* sb = pb + i * cb * plane;
        for (int64_t j = 0; j < ca * plane; ++j) dst[j] = sa[j];
        for (int64_t j = 0; j < cb * plane; ++j) dst[ca * plane + j] = sb[j];
    }
    return out;
}

void matmul_accumulate(const double* a, const double* b, double* c, int64_t m, int64_t k,
                       int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            double av = arow[p];
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.shape().rank() != 2 || b.shape().rank() != 2) {
        throw ShapeError("matmul expects rank-2 operands, got " + a.shape().str() + " and " +
                         b.shape().str());
    }
    if (a.shape()[1] != b.shape()[0]) {
        throw ShapeError("matmul inner dimensions disagree: " + a.shape().str() + " vs " +
                         b.shape().str());
    }
    Tensor out = Tensor::zeros(Shape{a.shape()[0], b.shape()[1]});
    matmul_accumulate(a.data(), b.data(), out.data(), a.shape()[0], a.shape()[1], b.shape()[1]);
    return out;
}

Tensor map_elementwise(const Tensor& x, const std::function<double(double)>& f) {
    Tensor out = Tensor::zeros(x.shape());
    for (int64_t i = 0; i < x.size(); ++i) {
        double v = f(x[i]);
        if (!std::isfinite(v)) {
            throw NumericError("map_elementwise produced non-finite value at index " +
                               std::to_string(i));
        }
        out[i] = v;
    }
    return out;
}

}  // namespace petnet
