#include "petnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace petnet::layers {

namespace {

void require_rank4(const Tensor& x, const char* op) {
    if (x.shape().rank() != 4) {
        throw ShapeError(std::string(op) + " expects a rank-4 N x C x H x W tensor, got " +
                         x.shape().str());
    }
}

void require_filter_bank(const FilterBank& f) {
    if (f.weights.shape().rank() != 4) {
        throw ShapeError("filter weights must be rank-4 (J, C, kh, kw), got " +
                         f.weights.shape().str());
    }
    if (f.bias.shape().rank() != 1 || f.bias.shape()[0] != f.weights.shape()[0]) {
        throw ShapeError("filter bias must be (J) = (" + std::to_string(f.weights.shape()[0]) +
                         "), got " + f.bias.shape().str());
    }
}

// Gathers the (C*kh*kw) x (Ho*Wo) patch matrix for one sample, zero-filled
// outside the padded border.
void im2col(const double* src, int64_t c_in, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int64_t pad_top, int64_t pad_left, int64_t ho, int64_t wo, double* cols) {
    int64_t m = ho * wo;
    for (int64_t c = 0; c < c_in; ++c) {
        const double* plane = src + c * h * w;
        for (int64_t dy = 0; dy < kh; ++dy) {
            for (int64_t dx = 0; dx < kw; ++dx) {
                double* row = cols + ((c * kh + dy) * kw + dx) * m;
                for (int64_t y = 0; y < ho; ++y) {
                    int64_t sy = y + dy - pad_top;
                    if (sy < 0 || sy >= h) {
                        for (int64_t x = 0; x < wo; ++x) row[y * wo + x] = 0.0;
                        continue;
                    }
                    const double* srow = plane + sy * w;
                    for (int64_t x = 0; x < wo; ++x) {
                        int64_t sx = x + dx - pad_left;
                        row[y * wo + x] = (sx < 0 || sx >= w) ? 0.0 : srow[sx];
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: scatter-adds patch-matrix gradients back to the input.
void col2im_add(const double* cols, int64_t c_in, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int64_t pad_top, int64_t pad_left, int64_t ho, int64_t wo, double* dst) {
    int64_t m = ho * wo;
    for (int64_t c = 0; c < c_in; ++c) {
        double* plane = dst + c * h * w;
        for (int64_t dy = 0; dy < kh; ++dy) {
            for (int64_t dx = 0; dx < kw; ++dx) {
                const double* row = cols + ((c * kh + dy) * kw + dx) * m;
                for (int64_t y = 0; y < ho; ++y) {
                    int64_t sy = y + dy - pad_top;
                    if (sy < 0 || sy >= h) continue;
                    double* drow = plane + sy * w;
                    for (int64_t x = 0; x < wo; ++x) {
                        int64_t sx = x + dx - pad_left;
                        if (sx >= 0 && sx < w) drow[sx] += row[y * wo + x];
                    }
                }
            }
        }
    }
}

// Clamped to the nearest representable doubles inside (0, 1): the exact
// ratio rounds to 1.0 for v > ~37 and underflows to 0.0 for v < ~-745,
// which would break the open-interval output contract.
double sigmoid(double v) {
    double s = 1.0 / (1.0 + std::exp(-v));
    if (s >= 1.0) return std::nextafter(1.0, 0.0);
    if (s <= 0.0) return std::numeric_limits<double>::min();
    return s;
}

}  // namespace

std::string to_string(ActivationKind k) {
    switch (k) {
        case ActivationKind::Relu: return "relu";
        case ActivationKind::Sigmoid: return "sigmoid";
        case ActivationKind::Linear: return "linear";
        case ActivationKind::Softmax: return "softmax";
    }
    return "?";
}

std::string to_string(Padding p) { return p == Padding::Same ? "same" : "valid"; }

ActivationKind activation_from_string(const std::string& s) {
    if (s == "relu") return ActivationKind::Relu;
    if (s == "sigmoid") return ActivationKind::Sigmoid;
    if (s == "linear") return ActivationKind::Linear;
    if (s == "softmax") return ActivationKind::Softmax;
    throw ConfigError("unknown activation kind '" + s + "'");
}

void LayerCache::mark_consumed(const char* op) {
    if (consumed) {
        throw UsageError(std::string(op) + ": layer cache already consumed by a backward call");
    }
    consumed = true;
}

void LayerCache::check_grad(const Tensor& grad_out, const char* op) const {
    if (grad_out.shape() != output_shape) {
        throw ShapeError(std::string(op) + ": grad_out shape " + grad_out.shape().str() +
                         " does not match forward output " + output_shape.str());
    }
}

std::pair<Tensor, LayerCache> conv2d_forward(const Tensor& input, const FilterBank& filters,
                                             Padding padding) {
    require_rank4(input, "conv2d");
    require_filter_bank(filters);
    int64_t n = input.shape()[0], c_in = input.shape()[1];
    int64_t h = input.shape()[2], w = input.shape()[3];
    int64_t j = filters.weights.shape()[0];
    int64_t kh = filters.weights.shape()[2], kw = filters.weights.shape()[3];
    if (filters.weights.shape()[1] != c_in) {
        throw ShapeError("conv2d channel mismatch: input has " + std::to_string(c_in) +
                         " channels, filters expect " +
                         std::to_string(filters.weights.shape()[1]));
    }
    int64_t pad_top = 0, pad_left = 0, ho = h, wo = w;
    if (padding == Padding::Same) {
        pad_top = (kh - 1) / 2;
        pad_left = (kw - 1) / 2;
        if (kh > 2 * h || kw > 2 * w) {
            throw ShapeError("conv2d kernel " + std::to_string(kh) + "x" + std::to_string(kw) +
                             " larger than padded input " + input.shape().str());
        }
    } else {
        ho = h - kh + 1;
        wo = w - kw + 1;
        if (ho < 1 || wo < 1) {
            throw ShapeError("conv2d valid: kernel " + std::to_string(kh) + "x" +
                             std::to_string(kw) + " larger than input " + input.shape().str());
        }
    }
    int64_t k = c_in * kh * kw;
    int64_t m = ho * wo;

    Tensor out = Tensor::zeros(Shape{n, j, ho, wo});
    std::vector<double> cols(static_cast<size_t>(k * m));
    const double* wmat = filters.weights.data();  // (J x K) row-major
    for (int64_t i = 0; i < n; ++i) {
        im2col(input.data() + i * c_in * h * w, c_in, h, w, kh, kw, pad_top, pad_left, ho, wo,
               cols.data());
        double* dst = out.data() + i * j * m;
        for (int64_t f = 0; f < j; ++f) {
            double b = filters.bias[f];
            double* row = dst + f * m;
            for (int64_t p = 0; p < m; ++p) row[p] = b;
        }
        matmul_accumulate(wmat, cols.data(), dst, j, k, m);
    }

    LayerCache cache;
    cache.input_shape = input.shape();
    cache.output_shape = out.shape();
    cache.input = input;
    cache.padding = padding;
    return {std::move(out), std::move(cache)};
}

std::pair<Tensor, LayerCache> conv1x1_forward(const Tensor& input, const FilterBank& filters) {
    require_filter_bank(filters);
    if (filters.weights.shape()[2] != 1 || filters.weights.shape()[3] != 1) {
        throw ShapeError("conv1x1 requires a 1x1 kernel, got " +
                         std::to_string(filters.weights.shape()[2]) + "x" +
                         std::to_string(filters.weights.shape()[3]));
    }
    return conv2d_forward(input, filters, Padding::Same);
}

Tensor conv2d_backward(LayerCache& cache, const FilterBank& filters, const Tensor& grad_out,
                       FilterGrads& grads) {
    cache.check_grad(grad_out, "conv2d_backward");
    cache.mark_consumed("conv2d_backward");
    const Tensor& input = cache.input;
    int64_t n = input.shape()[0], c_in = input.shape()[1];
    int64_t h = input.shape()[2], w = input.shape()[3];
    int64_t j = filters.weights.shape()[0];
    int64_t kh = filters.weights.shape()[2], kw = filters.weights.shape()[3];
    int64_t ho = grad_out.shape()[2], wo = grad_out.shape()[3];
    int64_t pad_top = cache.padding == Padding::Same ? (kh - 1) / 2 : 0;
    int64_t pad_left = cache.padding == Padding::Same ? (kw - 1) / 2 : 0;
    int64_t k = c_in * kh * kw;
    int64_t m = ho * wo;

    grads.weights = Tensor::zeros(filters.weights.shape());
    grads.bias = Tensor::zeros(filters.bias.shape());
    Tensor grad_in = Tensor::zeros(input.shape());

    std::vector<double> cols(static_cast<size_t>(k * m));
    std::vector<double> grad_cols(static_cast<size_t>(k * m));
    const double* wmat = filters.weights.data();
    double* gw = grads.weights.data();
    for (int64_t i = 0; i < n; ++i) {
        const double* go = grad_out.data() + i * j * m;
        im2col(input.data() + i * c_in * h * w, c_in, h, w, kh, kw, pad_top, pad_left, ho, wo,
               cols.data());
        // bias: sum of grad_out per filter
        for (int64_t f = 0; f < j; ++f) {
            double s = 0.0;
            const double* row = go + f * m;
            for (int64_t p = 0; p < m; ++p) s += row[p];
            grads.bias[f] += s;
        }
        // weights: grad_out (J x M) . cols^T (M x K)
        for (int64_t f = 0; f < j; ++f) {
            const double* gorow = go + f * m;
            for (int64_t q = 0; q < k; ++q) {
                const double* crow = cols.data() + q * m;
                double s = 0.0;
                for (int64_t p = 0; p < m; ++p) s += gorow[p] * crow[p];
                gw[f * k + q] += s;
            }
        }
        // input: W^T (K x J) . grad_out (J x M), then col2im
        std::fill(grad_cols.begin(), grad_cols.end(), 0.0);
        for (int64_t f = 0; f < j; ++f) {
            const double* gorow = go + f * m;
            for (int64_t q = 0; q < k; ++q) {
                double wv = wmat[f * k + q];
                double* gcrow = grad_cols.data() + q * m;
                for (int64_t p = 0; p < m; ++p) gcrow[p] += wv * gorow[p];
            }
        }
        col2im_add(grad_cols.data(), c_in, h, w, kh, kw, pad_top, pad_left, ho, wo,
                   grad_in.data() + i * c_in * h * w);
    }
    return grad_in;
}

std::pair<Tensor, LayerCache> activation_forward(ActivationKind kind, const Tensor& x) {
    Tensor out = Tensor::zeros(x.shape());
    LayerCache cache;
    cache.input_shape = x.shape();
    cache.output_shape = x.shape();
    switch (kind) {
        case ActivationKind::Relu: {
            for (int64_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
            cache.input = x;
            break;
        }
        case ActivationKind::Sigmoid: {
            for (int64_t i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
            cache.output = out;
            break;
        }
        case ActivationKind::Linear: {
            out = x;
            break;
        }
        case ActivationKind::Softmax: {
            if (x.shape().rank() < 1 || x.shape()[x.shape().rank() - 1] < 1) {
                throw ShapeError("softmax class axis (last) is empty in " + x.shape().str());
            }
            int64_t classes = x.shape()[x.shape().rank() - 1];
            int64_t slices = x.size() / classes;
            for (int64_t s = 0; s < slices; ++s) {
                const double* src = x.data() + s * classes;
                double* dst = out.data() + s * classes;
                double mx = src[0];
                for (int64_t i = 1; i < classes; ++i) mx = std::max(mx, src[i]);
                double sum = 0.0;
                for (int64_t i = 0; i < classes; ++i) {
                    dst[i] = std::exp(src[i] - mx);
                    sum += dst[i];
                }
                for (int64_t i = 0; i < classes; ++i) dst[i] /= sum;
            }
            cache.output = out;
            break;
        }
    }
    return {std::move(out), std::move(cache)};
}

Tensor relu_backward(LayerCache& cache, const Tensor& grad_out) {
    cache.check_grad(grad_out, "relu_backward");
    cache.mark_consumed("relu_backward");
    Tensor grad_in = Tensor::zeros(cache.input_shape);
    for (int64_t i = 0; i < grad_out.size(); ++i) {
        grad_in[i] = cache.input[i] > 0.0 ? grad_out[i] : 0.0;
    }
    return grad_in;
}

Tensor sigmoid_backward(LayerCache& cache, const Tensor& grad_out) {
    cache.check_grad(grad_out, "sigmoid_backward");
    cache.mark_consumed("sigmoid_backward");
    Tensor grad_in = Tensor::zeros(cache.input_shape);
    for (int64_t i = 0; i < grad_out.size(); ++i) {
        double y = cache.output[i];
        grad_in[i] = grad_out[i] * y * (1.0 - y);
    }
    return grad_in;
}

Tensor linear_backward(LayerCache& cache, const Tensor& grad_out) {
    cache.check_grad(grad_out, "linear_backward");
    cache.mark_consumed("linear_backward");
    return grad_out;
}

Tensor softmax_backward(LayerCache& cache, const Tensor& grad_out) {
    cache.check_grad(grad_out, "softmax_backward");
    cache.mark_consumed("softmax_backward");
    const Tensor& p = cache.output;
    int64_t classes = p.shape()[p.shape().rank() - 1];
    int64_t slices = p.size() / classes;
    Tensor grad_in = Tensor::zeros(cache.input_shape);
    for (int64_t s = 0; s < slices; ++s) {
        const double* pp = p.data() + s * classes;
        const double* gg = grad_out.data() + s * classes;
        double dot = 0.0;
        for (int64_t i = 0; i < classes; ++i) dot += pp[i] * gg[i];
        double* gi = grad_in.data() + s * classes;
        for (int64_t i = 0; i < classes; ++i) gi[i] = pp[i] * (gg[i] - dot);
    }
    return grad_in;
}

Tensor activation_backward(ActivationKind kind, LayerCache& cache, const Tensor& grad_out) {
    switch (kind) {
        case ActivationKind::Relu: return relu_backward(cache, grad_out);
        case ActivationKind::Sigmoid: return sigmoid_backward(cache, grad_out);
        case ActivationKind::Linear: return linear_backward(cache, grad_out);
        case ActivationKind::Softmax: return softmax_backward(cache, grad_out);
    }
    throw UsageError("unhandled activation kind");
}

std::pair<Tensor, LayerCache> maxpool2_forward(const Tensor& x) {
    require_rank4(x, "maxpool2");
    int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (h % 2 != 0 || w % 2 != 0) {
        throw ShapeError("maxpool2 requires even spatial dims, got " + x.shape().str() +
                         "; pad or resize the input");
    }
    int64_t ho = h / 2, wo = w / 2;
    Tensor out = Tensor::zeros(Shape{n, c, ho, wo});
    LayerCache cache;
    cache.input_shape = x.shape();
    cache.output_shape = out.shape();
    cache.argmax.resize(static_cast<size_t>(out.size()));
    const double* src = x.data();
    double* dst = out.data();
    int64_t oi = 0;
    for (int64_t i = 0; i < n * c; ++i) {
        const double* plane = src + i * h * w;
        for (int64_t y = 0; y < ho; ++y) {
            for (int64_t xx = 0; xx < wo; ++xx) {
                // row-major patch order; ties keep the first index
                int64_t base = (2 * y) * w + 2 * xx;
                int64_t idx[4] = {base, base + 1, base + w, base + w + 1};
                int64_t best = idx[0];
                double bv = plane[idx[0]];
                for (int t = 1; t < 4; ++t) {
                    if (plane[idx[t]] > bv) {
                        bv = plane[idx[t]];
                        best = idx[t];
                    }
                }
                dst[oi] = bv;
                cache.argmax[static_cast<size_t>(oi)] = i * h * w + best;
                ++oi;
            }
        }
    }
    return {std::move(out), std::move(cache)};
}

Tensor maxpool2_backward(LayerCache& cache, const Tensor& grad_out) {
    cache.check_grad(grad_out, "maxpool2_backward");
    cache.mark_consumed("maxpool2_backward");
    Tensor grad_in = Tensor::zeros(cache.input_shape);
    for (int64_t i = 0; i < grad_out.size(); ++i) {
        grad_in[cache.argmax[static_cast<size_t>(i)]] += grad_out[i];
    }
    return grad_in;
}

std::pair<Tensor, LayerCache> fc_forward(const Tensor& x, const FcParams& p) {
    if (x.shape().rank() != 2) {
        throw ShapeError("fc expects a flattened rank-2 input, got " + x.shape().str());
    }
    if (p.weights.shape().rank() != 2 || x.shape()[1] != p.weights.shape()[0]) {
        throw ShapeError("fc input width " + std::to_string(x.shape()[1]) +
                         " does not match weights " + p.weights.shape().str());
    }
    int64_t n = x.shape()[0], n_out = p.weights.shape()[1];
    Tensor out = Tensor::zeros(Shape{n, n_out});
    for (int64_t i = 0; i < n; ++i) {
        double* row = out.data() + i * n_out;
        for (int64_t o = 0; o < n_out; ++o) row[o] = p.bias[o];
    }
    matmul_accumulate(x.data(), p.weights.data(), out.data(), n, x.shape()[1], n_out);
    LayerCache cache;
    cache.input_shape = x.shape();
    cache.output_shape = out.shape();
    cache.input = x;
    return {std::move(out), std::move(cache)};
}

Tensor fc_backward(LayerCache& cache, const FcParams& p, const Tensor& grad_out, FcGrads& grads) {
    cache.check_grad(grad_out, "fc_backward");
    cache.mark_consumed("fc_backward");
    const Tensor& x = cache.input;
    int64_t n = x.shape()[0], n_in = x.shape()[1], n_out = p.weights.shape()[1];
    grads.weights = Tensor::zeros(p.weights.shape());
    grads.bias = Tensor::zeros(p.bias.shape());
    // dW = x^T . grad_out
    for (int64_t i = 0; i < n; ++i) {
        const double* xrow = x.data() + i * n_in;
        const double* grow = grad_out.data() + i * n_out;
        for (int64_t q = 0; q < n_in; ++q) {
            double xv = xrow[q];
            double* wrow = grads.weights.data() + q * n_out;
            for (int64_t o = 0; o < n_out; ++o) wrow[o] += xv * grow[o];
        }
        for (int64_t o = 0; o < n_out; ++o) grads.bias[o] += grow[o];
    }
    // dx = grad_out . W^T
    Tensor grad_in = Tensor::zeros(x.shape());
    for (int64_t i = 0; i < n; ++i) {
        const double* grow = grad_out.data() + i * n_out;
        double* xrow = grad_in.data() + i * n_in;
        for (int64_t q = 0; q < n_in; ++q) {
            const double* wrow = p.weights.data() + q * n_out;
            double s = 0.0;
            for (int64_t o = 0; o < n_out; ++o) s += grow[o] * wrow[o];
            xrow[q] = s;
        }
    }
    return grad_in;
}

std::pair<Tensor, LayerCache> batchnorm_forward(const Tensor& x, BnParams& p, Mode mode) {
    require_rank4(x, "batchnorm");
    int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (p.scale.shape().rank() != 1 || p.scale.shape()[0] != c) {
        throw ShapeError("batchnorm parameter channel count " + p.scale.shape().str() +
                         " does not match input " + x.shape().str());
    }
    int64_t m = n * h * w;
    if (mode == Mode::Train && m < 2) {
        throw NumericError("batchnorm train mode needs at least 2 values per channel, got " +
                           std::to_string(m));
    }
    Tensor out = Tensor::zeros(x.shape());
    LayerCache cache;
    cache.input_shape = x.shape();
    cache.output_shape = x.shape();
    cache.inv_std.resize(static_cast<size_t>(c));
    if (mode == Mode::Train) {
        cache.x_hat = Tensor::zeros(x.shape());
    }
    int64_t plane = h * w;
    for (int64_t ch = 0; ch < c; ++ch) {
        double mean, var;
        if (mode == Mode::Train) {
            double sum = 0.0, sq = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const double* src = x.data() + (i * c + ch) * plane;
                for (int64_t q = 0; q < plane; ++q) {
                    sum += src[q];
                }
            }
            mean = sum / static_cast<double>(m);
            for (int64_t i = 0; i < n; ++i) {
                const double* src = x.data() + (i * c + ch) * plane;
                for (int64_t q = 0; q < plane; ++q) {
                    double d = src[q] - mean;
                    sq += d * d;
                }
            }
            var = sq / static_cast<double>(m);  // biased, standard for BN
            p.running_mean[ch] = (1.0 - p.momentum) * p.running_mean[ch] + p.momentum * mean;
            p.running_var[ch] = (1.0 - p.momentum) * p.running_var[ch] + p.momentum * var;
        } else {
            mean = p.running_mean[ch];
            var = p.running_var[ch];
        }
        double inv_std = 1.0 / std::sqrt(var + p.epsilon);
        cache.inv_std[static_cast<size_t>(ch)] = inv_std;
        double g = p.scale[ch], b = p.offset[ch];
        for (int64_t i = 0; i < n; ++i) {
            const double* src = x.data() + (i * c + ch) * plane;
            double* dst = out.data() + (i * c + ch) * plane;
            double* xh = mode == Mode::Train ? cache.x_hat.data() + (i * c + ch) * plane : nullptr;
            for (int64_t q = 0; q < plane; ++q) {
                double nv = (src[q] - mean) * inv_std;
                if (xh) xh[q] = nv;
                dst[q] = g * nv + b;
            }
        }
    }
    return {std::move(out), std::move(cache)};
}

Tensor batchnorm_backward(LayerCache& cache, const BnParams& p, const Tensor& grad_out,
                          BnGrads& grads) {
    cache.check_grad(grad_out, "batchnorm_backward");
    cache.mark_consumed("batchnorm_backward");
    if (cache.x_hat.size() == 0) {
        throw UsageError("batchnorm_backward requires a train-mode forward cache");
    }
    int64_t n = cache.input_shape[0], c = cache.input_shape[1];
    int64_t plane = cache.input_shape[2] * cache.input_shape[3];
    int64_t m = n * plane;
    grads.scale = Tensor::zeros(p.scale.shape());
    grads.offset = Tensor::zeros(p.offset.shape());
    Tensor grad_in = Tensor::zeros(cache.input_shape);
    for (int64_t ch = 0; ch < c; ++ch) {
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const double* dy = grad_out.data() + (i * c + ch) * plane;
            const double* xh = cache.x_hat.data() + (i * c + ch) * plane;
            for (int64_t q = 0; q < plane; ++q) {
                sum_dy += dy[q];
                sum_dy_xhat += dy[q] * xh[q];
            }
        }
        grads.offset[ch] = sum_dy;
        grads.scale[ch] = sum_dy_xhat;
        double g = p.scale[ch];
        double inv_std = cache.inv_std[static_cast<size_t>(ch)];
        double mean_dy = sum_dy / static_cast<double>(m);
        double mean_dy_xhat = sum_dy_xhat / static_cast<double>(m);
        for (int64_t i = 0; i < n; ++i) {
            const double* dy = grad_out.data() + (i * c + ch) * plane;
            const double* xh = cache.x_hat.data() + (i * c + ch) * plane;
            double* dx = grad_in.data() + (i * c + ch) * plane;
            for (int64_t q = 0; q < plane; ++q) {
                dx[q] = g * inv_std * (dy[q] - mean_dy - xh[q] * mean_dy_xhat);
            }
        }
    }
    return grad_in;
}

std::pair<Tensor, LayerCache> upsample_nearest_forward(const Tensor& x) {
    require_rank4(x, "upsample_nearest");
    int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    Tensor out = Tensor::zeros(Shape{n, c, 2 * h, 2 * w});
    const double* src = x.data();
    double* dst = out.data();
    for (int64_t i = 0; i < n * c; ++i) {
        const double* plane = src + i * h * w;
        double* oplane = dst + i * 4 * h * w;
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t xx = 0; xx < w; ++xx) {
                double v = plane[y * w + xx];
                int64_t base = (2 * y) * (2 * w) + 2 * xx;
                oplane[base] = v;
                oplane[base + 1] = v;
                oplane[base + 2 * w] = v;
                oplane[base + 2 * w + 1] = v;
            }
        }
    }
    LayerCache cache;
    cache.input_shape = x.shape();
    cache.output_shape = out.shape();
    return {std::move(out), std::move(cache)};
}

Tensor upsample_nearest_backward(LayerCache& cache, const Tensor& grad_out) {
    cache.check_grad(grad_out, "upsample_nearest_backward");
    cache.mark_consumed("upsample_nearest_backward");
    int64_t n = cache.input_shape[0], c = cache.input_shape[1];
    int64_t h = cache.input_shape[2], w = cache.input_shape[3];
    Tensor grad_in = Tensor::zeros(cache.input_shape);
    const double* go = grad_out.data();
    double* gi = grad_in.data();
    for (int64_t i = 0; i < n * c; ++i) {
        const double* oplane = go + i * 4 * h * w;
        double* plane = gi + i * h * w;
        for (int64_t y = 0; y < h; ++y) {
            for (int64_t xx = 0; xx < w; ++xx) {
                int64_t base = (2 * y) * (2 * w) + 2 * xx;
                plane[y * w + xx] = oplane[base] + oplane[base + 1] + oplane[base + 2 * w] +
                                    oplane[base + 2 * w + 1];
            }
        }
    }
    return grad_in;
}

std::pair<Tensor, LayerCache> transpose_conv2_forward(const Tensor& x, const FilterBank& filters) {
    require_rank4(x, "transpose_conv2");
    require_filter_bank(filters);
    if (filters.weights.shape()[2] != 2 || filters.weights.shape()[3] != 2) {
        throw ConfigError("transpose_conv2 requires a 2x2 kernel with stride 2, got " +
                          std::to_string(filters.weights.shape()[2]) + "x" +
                          std::to_string(filters.weights.shape()[3]));
    }
    int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    if (filters.weights.shape()[1] != c) {
        throw ShapeError("transpose_conv2 channel mismatch: input has " + std::to_string(c) +
                         " channels, filters expect " +
                         std::to_string(filters.weights.shape()[1]));
    }
    int64_t j = filters.weights.shape()[0];
    Tensor out = Tensor::zeros(Shape{n, j, 2 * h, 2 * w});
    const double* wts = filters.weights.data();  // (j, c, 2, 2)
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t f = 0; f < j; ++f) {
            double* oplane = out.data() + (i * j + f) * 4 * h * w;
            double b = filters.bias[f];
            for (int64_t q = 0; q < 4 * h * w; ++q) oplane[q] = b;
            for (int64_t ch = 0; ch < c; ++ch) {
                const double* plane = x.data() + (i * c + ch) * h * w;
                const double* kw = wts + (f * c + ch) * 4;
                for (int64_t y = 0; y < h; ++y) {
                    for (int64_t xx = 0; xx < w; ++xx) {
                        double v = plane[y * w + xx];
                        int64_t base = (2 * y) * (2 * w) + 2 * xx;
                        oplane[base] += v * kw[0];
                        oplane[base + 1] += v * kw[1];
                        oplane[base + 2 * w] += v * kw[2];
                        oplane[base + 2 * w + 1] += v * kw[3];
                    }
                }
            }
        }
    }
    LayerCache cache;
    cache.input_shape = x.shape();
    cache.output_shape = out.shape();
    cache.input = x;
    return {std::move(out), std::move(cache)};
}

Tensor transpose_conv2_backward(LayerCache& cache, const FilterBank& filters,
                                const Tensor& grad_out, FilterGrads& grads) {
    cache.check_grad(grad_out, "transpose_conv2_backward");
    cache.mark_consumed("transpose_conv2_backward");
    const Tensor& x = cache.input;
    int64_t n = x.shape()[0], c = x.shape()[1], h = x.shape()[2], w = x.shape()[3];
    int64_t j = filters.weights.shape()[0];
    grads.weights = Tensor::zeros(filters.weights.shape());
    grads.bias = Tensor::zeros(filters.bias.shape());
    Tensor grad_in = Tensor::zeros(x.shape());
    const double* wts = filters.weights.data();
    for (int64_t i = 0; i < n; ++i) {
        for (int64_t f = 0; f < j; ++f) {
            const double* goplane = grad_out.data() + (i * j + f) * 4 * h * w;
            double bsum = 0.0;
            for (int64_t q = 0; q < 4 * h * w; ++q) bsum += goplane[q];
            grads.bias[f] += bsum;
            for (int64_t ch = 0; ch < c; ++ch) {
                const double* plane = x.data() + (i * c + ch) * h * w;
                double* giplane = grad_in.data() + (i * c + ch) * h * w;
                const double* kw = wts + (f * c + ch) * 4;
                double* gw = grads.weights.data() + (f * c + ch) * 4;
                for (int64_t y = 0; y < h; ++y) {
                    for (int64_t xx = 0; xx < w; ++xx) {
                        int64_t base = (2 * y) * (2 * w) + 2 * xx;
                        double g0 = goplane[base], g1 = goplane[base + 1];
                        double g2 = goplane[base + 2 * w], g3 = goplane[base + 2 * w + 1];
                        double v = plane[y * w + xx];
                        gw[0] += v * g0;
                        gw[1] += v * g1;
                        gw[2] += v * g2;
                        gw[3] += v * g3;
                        giplane[y * w + xx] += kw[0] * g0 + kw[1] * g1 + kw[2] * g2 + kw[3] * g3;
                    }
                }
            }
        }
    }
    return grad_in;
}

}  // namespace petnet::layers
