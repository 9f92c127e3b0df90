#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "petnet/tensor.hpp"

namespace petnet::layers {

enum class Padding { Same, Valid };
enum class ActivationKind { Relu, Sigmoid, Linear, Softmax };
enum class Mode { Train, Infer };

std::string to_string(ActivationKind k);
std::string to_string(Padding p);
ActivationKind activation_from_string(const std::string& s);

// J filters of extent C_in x k_h x k_w plus one bias per filter.
struct FilterBank {
    Tensor weights;  // (J, C_in, k_h, k_w)
    Tensor bias;     // (J)
};

struct FcParams {
    Tensor weights;  // (n_in, n_out)
    Tensor bias;     // (n_out)
};

struct BnParams {
    Tensor scale;         // (C), learned
    Tensor offset;        // (C), learned
    Tensor running_mean;  // (C), updated by train-mode forward
    Tensor running_var;   // (C)
    double epsilon = 1e-5;
    double momentum = 0.1;
};

// Forward-pass intermediates for the matching backward call. Produced by
// exactly one forward; consumed by at most one backward.
struct LayerCache {
    Shape input_shape;
    Shape output_shape;
    Tensor input;                // conv / fc / transpose-conv / relu (values at forward)
    Tensor output;               // sigmoid / softmax (need y, not x)
    std::vector<int64_t> argmax; // maxpool: chosen input flat index per output element
    Tensor x_hat;                // batchnorm normalized values
    std::vector<double> inv_std; // batchnorm per-channel 1/sqrt(var+eps)
    Padding padding = Padding::Same;
    bool consumed = false;

    void mark_consumed(const char* op);
    void check_grad(const Tensor& grad_out, const char* op) const;
};

// --- forward -----------------------------------------------------------

// Cross-correlation with stride 1. Padding::Same zero-pads so the spatial
// dims are preserved; Padding::Valid shrinks them by k-1.
std::pair<Tensor, LayerCache> conv2d_forward(const Tensor& input, const FilterBank& filters,
                                             Padding padding);

// 1x1 kernel special case: per-pixel weighted sum across channels.
std::pair<Tensor, LayerCache> conv1x1_forward(const Tensor& input, const FilterBank& filters);

std::pair<Tensor, LayerCache> activation_forward(ActivationKind kind, const Tensor& x);

// Non-overlapping 2x2 patch maximum; requires even H and W.
std::pair<Tensor, LayerCache> maxpool2_forward(const Tensor& x);

// out = x * weights + bias per row; x must already be rank 2 (N, n_in).
std::pair<Tensor, LayerCache> fc_forward(const Tensor& x, const FcParams& p);

// Train mode normalizes by batch statistics over (N, H, W) per channel and
// updates the running statistics in place; infer mode uses the running ones.
std::pair<Tensor, LayerCache> batchnorm_forward(const Tensor& x, BnParams& p, Mode mode);

// Each pixel replicated into its 2x2 block.
std::pair<Tensor, LayerCache> upsample_nearest_forward(const Tensor& x);

// 2x2 kernel, stride 2: each input pixel scatters into a disjoint 2x2 output
// block; bias added once per output pixel.
std::pair<Tensor, LayerCache> transpose_conv2_forward(const Tensor& x, const FilterBank& filters);

// --- backward ----------------------------------------------------------

struct FilterGrads {
    Tensor weights;
    Tensor bias;
};

struct FcGrads {
    Tensor weights;
    Tensor bias;
};

struct BnGrads {
    Tensor scale;
    Tensor offset;
};

Tensor conv2d_backward(LayerCache& cache, const FilterBank& filters, const Tensor& grad_out,
                       FilterGrads& grads);
Tensor relu_backward(LayerCache& cache, const Tensor& grad_out);
Tensor sigmoid_backward(LayerCache& cache, const Tensor& grad_out);
Tensor linear_backward(LayerCache& cache, const Tensor& grad_out);
// Full softmax Jacobian along the class axis. The cross-entropy training
// path bypasses this with the fused (p - t)/N form; see training.
Tensor softmax_backward(LayerCache& cache, const Tensor& grad_out);
Tensor activation_backward(ActivationKind kind, LayerCache& cache, const Tensor& grad_out);
Tensor maxpool2_backward(LayerCache& cache, const Tensor& grad_out);
Tensor fc_backward(LayerCache& cache, const FcParams& p, const Tensor& grad_out, FcGrads& grads);
Tensor batchnorm_backward(LayerCache& cache, const BnParams& p, const Tensor& grad_out,
                          BnGrads& grads);
Tensor upsample_nearest_backward(LayerCache& cache, const Tensor& grad_out);
Tensor transpose_conv2_backward(LayerCache& cache, const FilterBank& filters,
                                const Tensor& grad_out, FilterGrads& grads);

}  // namespace petnet::layers
