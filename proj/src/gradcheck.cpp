#include "petnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <map>
#include <ostream>

#include "petnet/network.hpp"
#include "petnet/rng.hpp"
#include "petnet/training.hpp"

namespace petnet::gradcheck {

using layers::ActivationKind;
using layers::BnParams;
using layers::FcParams;
using layers::FilterBank;
using layers::Padding;

Tensor finite_difference_gradient(const std::function<double(const Tensor&)>& f, const Tensor& x,
                                  double h) {
    Tensor grad = Tensor::zeros(x.shape());
    Tensor probe = x;
    for (int64_t i = 0; i < x.size(); ++i) {
        double original = probe[i];
        probe[i] = original + h;
        double up = f(probe);
        probe[i] = original - h;
        double down = f(probe);
        probe[i] = original;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("finite differences: non-finite function value at index " +
                               std::to_string(i));
        }
        grad[i] = (up - down) / (2.0 * h);
    }
    return grad;
}

Tensor conv_bruteforce(const Tensor& input, const Tensor& weights, const Tensor& bias,
                       Padding padding) {
    if (input.shape().rank() != 4 || weights.shape().rank() != 4) {
        throw ShapeError("conv_bruteforce expects rank-4 input and weights");
    }
    int64_t n = input.shape()[0], c_in = input.shape()[1];
    int64_t h = input.shape()[2], w = input.shape()[3];
    int64_t j = weights.shape()[0], kh = weights.shape()[2], kw = weights.shape()[3];
    if (weights.shape()[1] != c_in) throw ShapeError("conv_bruteforce channel mismatch");
    int64_t pad_y = padding == Padding::Same ? (kh - 1) / 2 : 0;
    int64_t pad_x = padding == Padding::Same ? (kw - 1) / 2 : 0;
    int64_t ho = padding == Padding::Same ? h : h - kh + 1;
    int64_t wo = padding == Padding::Same ? w : w - kw + 1;
    if (ho < 1 || wo < 1) throw ShapeError("conv_bruteforce kernel larger than input");

    Tensor out = Tensor::zeros(Shape{n, j, ho, wo});
    for (int64_t in = 0; in < n; ++in) {
        for (int64_t f = 0; f < j; ++f) {
            for (int64_t y = 0; y < ho; ++y) {
                for (int64_t x = 0; x < wo; ++x) {
                    double acc = bias[f];
                    for (int64_t c = 0; c < c_in; ++c) {
                        for (int64_t dy = 0; dy < kh; ++dy) {
                            for (int64_t dx = 0; dx < kw; ++dx) {
                                int64_t sy = y + dy - pad_y;
                                int64_t sx = x + dx - pad_x;
                                if (sy < 0 || sy >= h || sx < 0 || sx >= w) continue;
                                acc += input.at4(in, c, sy, sx) * weights.at4(f, c, dy, dx);
                            }
                        }
                    }
                    out.at4(in, f, y, x) = acc;
                }
            }
        }
    }
    return out;
}

namespace {

constexpr double kStep = 1e-6;
constexpr double kTolerance = 1e-6;
constexpr double kBnTolerance = 1e-5;  // the variance chain rule amplifies truncation error

Tensor random_tensor(Rng& rng, const Shape& shape, double lo, double hi) {
    Tensor t = Tensor::zeros(shape);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

// Magnitudes in [0.1, 1.1], random sign: keeps relu and maxpool inputs away
// from kinks and ties that invalidate central differences.
Tensor random_away_from_zero(Rng& rng, const Shape& shape) {
    Tensor t = Tensor::zeros(shape);
    for (int64_t i = 0; i < t.size(); ++i) {
        double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        t[i] = sign * rng.uniform(0.1, 1.1);
    }
    return t;
}

// Probe weights for the scalar loss. Magnitudes in [0.5, 1.5] so every
// analytic partial stays well above the finite-difference noise floor.
Tensor random_probe(Rng& rng, const Shape& shape) {
    Tensor t = Tensor::zeros(shape);
    for (int64_t i = 0; i < t.size(); ++i) {
        double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
        t[i] = sign * rng.uniform(0.5, 1.5);
    }
    return t;
}

double probe_dot(const Tensor& probe, const Tensor& y) {
    double s = 0.0;
    for (int64_t i = 0; i < y.size(); ++i) s += probe[i] * y[i];
    return s;
}

struct ErrAccum {
    double max_err = 0.0;

    void add(const Tensor& analytic, const Tensor& fd) {
        for (int64_t i = 0; i < analytic.size(); ++i) {
            double denom = std::max({std::abs(analytic[i]), std::abs(fd[i]), 1e-8});
            max_err = std::max(max_err, std::abs(analytic[i] - fd[i]) / denom);
        }
    }

    // Per-tensor relative L2 error. Whole-model checks use this: a deep
    // chain always has some near-cancelled coordinates whose finite
    // difference is pure roundoff, so the per-coordinate metric cannot
    // certify them, while the tensor norm can. Differences below the
    // finite-difference noise scale count as agreement at numeric zero
    // (e.g. a conv bias feeding batchnorm has a true gradient of exactly 0,
    // and its finite difference is nothing but roundoff).
    void add_norm(const Tensor& analytic, const Tensor& fd) {
        double dd = 0.0, aa = 0.0, ff = 0.0;
        for (int64_t i = 0; i < analytic.size(); ++i) {
            double d = analytic[i] - fd[i];
            dd += d * d;
            aa += analytic[i] * analytic[i];
            ff += fd[i] * fd[i];
        }
        if (std::sqrt(dd) <= 1e-6) return;
        double denom = std::max({std::sqrt(aa), std::sqrt(ff), 1e-8});
        max_err = std::max(max_err, std::sqrt(dd) / denom);
    }
};

GradCheckReport make_report(const std::string& name, double max_err, double tol) {
    return {name, max_err, tol, kStep, max_err < tol};
}

GradCheckReport check_conv(const std::string& name, Padding padding, uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor(rng, Shape{2, 3, 6, 6}, -1.0, 1.0);
    FilterBank bank{random_tensor(rng, Shape{4, 3, 3, 3}, -0.6, 0.6),
                    random_tensor(rng, Shape{4}, -0.2, 0.2)};
    auto [y, cache] = layers::conv2d_forward(x, bank, padding);
    Tensor probe = random_probe(rng, y.shape());

    layers::FilterGrads grads;
    Tensor grad_in = layers::conv2d_backward(cache, bank, probe, grads);

    ErrAccum acc;
    acc.add(grad_in, finite_difference_gradient(
                         [&](const Tensor& v) {
                             return probe_dot(probe, layers::conv2d_forward(v, bank, padding).first);
                         },
                         x, kStep));
    acc.add(grads.weights,
            finite_difference_gradient(
                [&](const Tensor& v) {
                    FilterBank b{v, bank.bias};
                    return probe_dot(probe, layers::conv2d_forward(x, b, padding).first);
                },
                bank.weights, kStep));
    acc.add(grads.bias, finite_difference_gradient(
                            [&](const Tensor& v) {
                                FilterBank b{bank.weights, v};
                                return probe_dot(probe, layers::conv2d_forward(x, b, padding).first);
                            },
                            bank.bias, kStep));
    return make_report(name, acc.max_err, kTolerance);
}

GradCheckReport check_conv1x1(uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor(rng, Shape{2, 3, 5, 5}, -1.0, 1.0);
    FilterBank bank{random_tensor(rng, Shape{2, 3, 1, 1}, -0.8, 0.8),
                    random_tensor(rng, Shape{2}, -0.2, 0.2)};
    auto [y, cache] = layers::conv1x1_forward(x, bank);
    Tensor probe = random_probe(rng, y.shape());
    layers::FilterGrads grads;
    Tensor grad_in = layers::conv2d_backward(cache, bank, probe, grads);

    ErrAccum acc;
    acc.add(grad_in, finite_difference_gradient(
                         [&](const Tensor& v) {
                             return probe_dot(probe, layers::conv1x1_forward(v, bank).first);
                         },
                         x, kStep));
    acc.add(grads.weights, finite_difference_gradient(
                               [&](const Tensor& v) {
                                   FilterBank b{v, bank.bias};
                                   return probe_dot(probe, layers::conv1x1_forward(x, b).first);
                               },
                               bank.weights, kStep));
    acc.add(grads.bias, finite_difference_gradient(
                            [&](const Tensor& v) {
                                FilterBank b{bank.weights, v};
                                return probe_dot(probe, layers::conv1x1_forward(x, b).first);
                            },
                            bank.bias, kStep));
    return make_report("conv1x1", acc.max_err, kTolerance);
}

GradCheckReport check_activation(const std::string& name, ActivationKind kind, uint64_t seed) {
    Rng rng(seed);
    Tensor x = kind == ActivationKind::Relu ? random_away_from_zero(rng, Shape{2, 3, 4, 4})
                                            : random_tensor(rng, Shape{2, 3, 4, 4}, -2.0, 2.0);
    auto [y, cache] = layers::activation_forward(kind, x);
    Tensor probe = random_probe(rng, y.shape());
    Tensor grad_in = layers::activation_backward(kind, cache, probe);
    ErrAccum acc;
    acc.add(grad_in,
            finite_difference_gradient(
                [&](const Tensor& v) {
                    return probe_dot(probe, layers::activation_forward(kind, v).first);
                },
                x, kStep));
    return make_report(name, acc.max_err, kTolerance);
}

// Full softmax Jacobian on its own, class axis last.
GradCheckReport check_softmax(uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor(rng, Shape{3, 5}, -2.0, 2.0);
    auto [y, cache] = layers::activation_forward(ActivationKind::Softmax, x);
    Tensor probe = random_probe(rng, y.shape());
    Tensor grad_in = layers::softmax_backward(cache, probe);
    ErrAccum acc;
    acc.add(grad_in, finite_difference_gradient(
                         [&](const Tensor& v) {
                             return probe_dot(
                                 probe,
                                 layers::activation_forward(ActivationKind::Softmax, v).first);
                         },
                         x, kStep));
    return make_report("softmax", acc.max_err, kTolerance);
}

// Softmax + cross-entropy as trained: analytic gradient is the fused
// (p - t)/N with respect to the logits.
GradCheckReport check_softmax_xent(uint64_t seed) {
    Rng rng(seed);
    Tensor logits = random_tensor(rng, Shape{4, 5}, -2.0, 2.0);
    Tensor target = Tensor::zeros(Shape{4, 5});
    for (int64_t i = 0; i < 4; ++i) {
        target[i * 5 + static_cast<int64_t>(rng.uniform() * 5.0)] = 1.0;
    }
    auto loss_of = [&](const Tensor& v) {
        Tensor p = layers::activation_forward(ActivationKind::Softmax, v).first;
        return training::loss_value(training::LossKind::CrossEntropy, p, target);
    };
    Tensor p = layers::activation_forward(ActivationKind::Softmax, logits).first;
    auto loss = training::compute_loss(training::LossKind::CrossEntropy, p, target);
    ErrAccum acc;
    acc.add(loss.grad, finite_difference_gradient(loss_of, logits, kStep));
    return make_report("softmax_xent_fused", acc.max_err, kTolerance);
}

GradCheckReport check_sigmoid_bce(uint64_t seed) {
    Rng rng(seed);
    Tensor logits = random_tensor(rng, Shape{3, 4}, -2.0, 2.0);
    Tensor target = Tensor::zeros(Shape{3, 4});
    for (int64_t i = 0; i < target.size(); ++i) target[i] = rng.uniform() < 0.5 ? 0.0 : 1.0;
    auto loss_of = [&](const Tensor& v) {
        Tensor p = layers::activation_forward(ActivationKind::Sigmoid, v).first;
        return training::loss_value(training::LossKind::BinaryCrossEntropy, p, target);
    };
    Tensor p = layers::activation_forward(ActivationKind::Sigmoid, logits).first;
    auto loss = training::compute_loss(training::LossKind::BinaryCrossEntropy, p, target);
    ErrAccum acc;
    acc.add(loss.grad, finite_difference_gradient(loss_of, logits, kStep));
    return make_report("sigmoid_bce_fused", acc.max_err, kTolerance);
}

GradCheckReport check_maxpool(uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_away_from_zero(rng, Shape{2, 3, 4, 4});
    auto [y, cache] = layers::maxpool2_forward(x);
    Tensor probe = random_probe(rng, y.shape());
    Tensor grad_in = layers::maxpool2_backward(cache, probe);
    ErrAccum acc;
    acc.add(grad_in, finite_difference_gradient(
                         [&](const Tensor& v) {
                             return probe_dot(probe, layers::maxpool2_forward(v).first);
                         },
                         x, kStep));
    return make_report("maxpool2", acc.max_err, kTolerance);
}

GradCheckReport check_fc(uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor(rng, Shape{3, 10}, -1.0, 1.0);
    FcParams p{random_tensor(rng, Shape{10, 4}, -0.6, 0.6),
               random_tensor(rng, Shape{4}, -0.2, 0.2)};
    auto [y, cache] = layers::fc_forward(x, p);
    Tensor probe = random_probe(rng, y.shape());
    layers::FcGrads grads;
    Tensor grad_in = layers::fc_backward(cache, p, probe, grads);

    ErrAccum acc;
    acc.add(grad_in,
            finite_difference_gradient(
                [&](const Tensor& v) { return probe_dot(probe, layers::fc_forward(v, p).first); },
                x, kStep));
    acc.add(grads.weights, finite_difference_gradient(
                               [&](const Tensor& v) {
                                   FcParams q{v, p.bias};
                                   return probe_dot(probe, layers::fc_forward(x, q).first);
                               },
                               p.weights, kStep));
    acc.add(grads.bias, finite_difference_gradient(
                            [&](const Tensor& v) {
                                FcParams q{p.weights, v};
                                return probe_dot(probe, layers::fc_forward(x, q).first);
                            },
                            p.bias, kStep));
    return make_report("fc", acc.max_err, kTolerance);
}

GradCheckReport check_batchnorm(uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor(rng, Shape{2, 3, 4, 4}, -2.0, 2.0);
    BnParams p;
    p.scale = random_tensor(rng, Shape{3}, 0.5, 1.5);
    p.offset = random_tensor(rng, Shape{3}, -0.5, 0.5);
    p.running_mean = Tensor::zeros(Shape{3});
    p.running_var = Tensor::full(Shape{3}, 1.0);

    auto forward_with = [&](const Tensor& input, const Tensor& scale, const Tensor& offset) {
        BnParams q = p;  // keep running-stat updates out of the probe
        q.scale = scale;
        q.offset = offset;
        return layers::batchnorm_forward(input, q, layers::Mode::Train).first;
    };

    BnParams work = p;
    auto [y, cache] = layers::batchnorm_forward(x, work, layers::Mode::Train);
    Tensor probe = random_probe(rng, y.shape());
    layers::BnGrads grads;
    Tensor grad_in = layers::batchnorm_backward(cache, p, probe, grads);

    ErrAccum acc;
    acc.add(grad_in, finite_difference_gradient(
                         [&](const Tensor& v) {
                             return probe_dot(probe, forward_with(v, p.scale, p.offset));
                         },
                         x, kStep));
    acc.add(grads.scale, finite_difference_gradient(
                             [&](const Tensor& v) {
                                 return probe_dot(probe, forward_with(x, v, p.offset));
                             },
                             p.scale, kStep));
    acc.add(grads.offset, finite_difference_gradient(
                              [&](const Tensor& v) {
                                  return probe_dot(probe, forward_with(x, p.scale, v));
                              },
                              p.offset, kStep));
    return make_report("batchnorm_train", acc.max_err, kBnTolerance);
}

GradCheckReport check_upsample(uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor(rng, Shape{2, 3, 3, 3}, -1.0, 1.0);
    auto [y, cache] = layers::upsample_nearest_forward(x);
    Tensor probe = random_probe(rng, y.shape());
    Tensor grad_in = layers::upsample_nearest_backward(cache, probe);
    ErrAccum acc;
    acc.add(grad_in, finite_difference_gradient(
                         [&](const Tensor& v) {
                             return probe_dot(probe, layers::upsample_nearest_forward(v).first);
                         },
                         x, kStep));
    return make_report("upsample_nearest", acc.max_err, kTolerance);
}

GradCheckReport check_transpose_conv(uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor(rng, Shape{2, 3, 3, 3}, -1.0, 1.0);
    FilterBank bank{random_tensor(rng, Shape{2, 3, 2, 2}, -0.7, 0.7),
                    random_tensor(rng, Shape{2}, -0.2, 0.2)};
    auto [y, cache] = layers::transpose_conv2_forward(x, bank);
    Tensor probe = random_probe(rng, y.shape());
    layers::FilterGrads grads;
    Tensor grad_in = layers::transpose_conv2_backward(cache, bank, probe, grads);

    ErrAccum acc;
    acc.add(grad_in,
            finite_difference_gradient(
                [&](const Tensor& v) {
                    return probe_dot(probe, layers::transpose_conv2_forward(v, bank).first);
                },
                x, kStep));
    acc.add(grads.weights,
            finite_difference_gradient(
                [&](const Tensor& v) {
                    FilterBank b{v, bank.bias};
                    return probe_dot(probe, layers::transpose_conv2_forward(x, b).first);
                },
                bank.weights, kStep));
    acc.add(grads.bias,
            finite_difference_gradient(
                [&](const Tensor& v) {
                    FilterBank b{bank.weights, v};
                    return probe_dot(probe, layers::transpose_conv2_forward(x, b).first);
                },
                bank.bias, kStep));
    return make_report("transpose_conv2", acc.max_err, kTolerance);
}

GradCheckReport check_flatten(uint64_t seed) {
    Rng rng(seed);
    Tensor x = random_tensor(rng, Shape{2, 3, 2, 2}, -1.0, 1.0);
    Tensor y = flatten_batch(x);
    Tensor probe = random_probe(rng, y.shape());
    Tensor grad_in = probe.reshaped(x.shape());  // flatten adjoint is the inverse reshape
    ErrAccum acc;
    acc.add(grad_in, finite_difference_gradient(
                         [&](const Tensor& v) { return probe_dot(probe, flatten_batch(v)); }, x,
                         kStep));
    return make_report("flatten", acc.max_err, kTolerance);
}

GradCheckReport check_concat(uint64_t seed) {
    Rng rng(seed);
    Tensor a = random_tensor(rng, Shape{2, 2, 3, 3}, -1.0, 1.0);
    Tensor b = random_tensor(rng, Shape{2, 3, 3, 3}, -1.0, 1.0);
    Tensor y = concat_channels(a, b);
    Tensor probe = random_probe(rng, y.shape());
    // adjoint: channel split back to the operands
    Tensor ga = Tensor::zeros(a.shape());
    Tensor gb = Tensor::zeros(b.shape());
    int64_t plane = 9;
    for (int64_t s = 0; s < 2; ++s) {
        for (int64_t q = 0; q < 2 * plane; ++q) ga[s * 2 * plane + q] = probe[s * 5 * plane + q];
        for (int64_t q = 0; q < 3 * plane; ++q) {
            gb[s * 3 * plane + q] = probe[s * 5 * plane + 2 * plane + q];
        }
    }
    ErrAccum acc;
    acc.add(ga, finite_difference_gradient(
                    [&](const Tensor& v) { return probe_dot(probe, concat_channels(v, b)); }, a,
                    kStep));
    acc.add(gb, finite_difference_gradient(
                    [&](const Tensor& v) { return probe_dot(probe, concat_channels(a, v)); }, b,
                    kStep));
    return make_report("concat", acc.max_err, kTolerance);
}

// Flat list of the differentiable parameter tensors of a model.
std::vector<Tensor*> learnable_tensors(network::Model& model) {
    std::vector<Tensor*> list;
    for (auto& bank : model.params) {
        if (auto* f = std::get_if<FilterBank>(&bank)) {
            list.push_back(&f->weights);
            list.push_back(&f->bias);
        } else if (auto* fc = std::get_if<FcParams>(&bank)) {
            list.push_back(&fc->weights);
            list.push_back(&fc->bias);
        } else if (auto* bn = std::get_if<BnParams>(&bank)) {
            list.push_back(&bn->scale);
            list.push_back(&bn->offset);
        }
    }
    return list;
}

// Probe functional of the whole-model output: the dense O(1) adjoint keeps
// every parameter's partial far above the finite-difference noise floor,
// which a mean-reduced loss would not.
GradCheckReport check_model_end_to_end(const std::string& name, network::Model model,
                                       uint64_t seed, double tol) {
    Rng rng(seed);
    int64_t h = model.input_shape[2], w = model.input_shape[3];
    Tensor input = random_tensor(rng, Shape{2, 1, h, w}, 0.0, 1.0);

    auto fr0 = network::forward(model, input, layers::Mode::Train);
    Tensor probe = random_probe(rng, fr0.output.shape());

    auto loss_at = [&](network::Model& m, const Tensor& in) {
        auto fr = network::forward(m, in, layers::Mode::Train);
        return probe_dot(probe, fr.output);
    };

    auto fr = network::forward(model, input, layers::Mode::Train);
    auto grads = network::backward(model, fr, probe);

    network::Model grad_model = model;  // mirror holding analytic grads in bank layout
    grad_model.params = grads.banks;
    std::vector<Tensor*> analytic = learnable_tensors(grad_model);
    std::vector<Tensor*> param = learnable_tensors(model);

    ErrAccum acc;
    acc.add_norm(grads.input_grad,
                 finite_difference_gradient(
                     [&](const Tensor& v) { return loss_at(model, v); }, input, kStep));
    for (size_t t = 0; t < param.size(); ++t) {
        Tensor& w_ref = *param[t];
        Tensor fd = finite_difference_gradient(
            [&](const Tensor& v) {
                Tensor saved = w_ref;
                w_ref = v;
                double value = loss_at(model, input);
                w_ref = saved;
                return value;
            },
            w_ref, kStep);
        acc.add_norm(*analytic[t], fd);
    }
    return make_report(name, acc.max_err, tol);
}

GradCheckReport check_toy_end_to_end(uint64_t seed) {
    auto model = network::build_toy_cnn(8, 8, 2, 4, network::HeadKind::Sigmoid, 2, seed);
    return check_model_end_to_end("toy_cnn_end_to_end", std::move(model), seed, kTolerance);
}

GradCheckReport check_unet_end_to_end(uint64_t seed) {
    auto model = network::build_unet(8, 8, 2, 1, network::HeadKind::Sigmoid, false,
                                     network::UpsampleKind::TransposeConv, false, seed);
    return check_model_end_to_end("unet_end_to_end", std::move(model), seed, kTolerance);
}

// BN inside a network, checked at the looser batchnorm tolerance.
GradCheckReport check_unet_bn_end_to_end(uint64_t seed) {
    auto model = network::build_unet(8, 8, 2, 1, network::HeadKind::Sigmoid, true,
                                     network::UpsampleKind::Nearest, false, seed);
    GradCheckReport r =
        check_model_end_to_end("unet_bn_end_to_end", std::move(model), seed, kBnTolerance);
    return r;
}

using CheckFn = GradCheckReport (*)(uint64_t);

const std::vector<std::pair<std::string, CheckFn>>& registry() {
    static const std::vector<std::pair<std::string, CheckFn>> checks = {
        {"conv3x3_same", [](uint64_t s) { return check_conv("conv3x3_same", Padding::Same, s); }},
        {"conv3x3_valid",
         [](uint64_t s) { return check_conv("conv3x3_valid", Padding::Valid, s); }},
        {"conv1x1", check_conv1x1},
        {"relu", [](uint64_t s) { return check_activation("relu", ActivationKind::Relu, s); }},
        {"sigmoid",
         [](uint64_t s) { return check_activation("sigmoid", ActivationKind::Sigmoid, s); }},
        {"linear",
         [](uint64_t s) { return check_activation("linear", ActivationKind::Linear, s); }},
        {"softmax", check_softmax},
        {"softmax_xent_fused", check_softmax_xent},
        {"sigmoid_bce_fused", check_sigmoid_bce},
        {"maxpool2", check_maxpool},
        {"fc", check_fc},
        {"batchnorm_train", check_batchnorm},
        {"upsample_nearest", check_upsample},
        {"transpose_conv2", check_transpose_conv},
        {"flatten", check_flatten},
        {"concat", check_concat},
        {"toy_cnn_end_to_end", check_toy_end_to_end},
        {"unet_end_to_end", check_unet_end_to_end},
        {"unet_bn_end_to_end", check_unet_bn_end_to_end},
    };
    return checks;
}

// Check names that must exist for each node kind the network module can
// build. The -Wswitch exhaustiveness of this switch is the coverage lock:
// a new NodeKind will not compile until it is mapped to a check.
std::vector<std::string> names_for(network::NodeKind kind) {
    switch (kind) {
        case network::NodeKind::Conv: return {"conv3x3_same", "conv3x3_valid"};
        case network::NodeKind::Conv1x1: return {"conv1x1"};
        case network::NodeKind::Activation:
            return {"relu", "sigmoid", "linear", "softmax", "softmax_xent_fused",
                    "sigmoid_bce_fused"};
        case network::NodeKind::MaxPool2: return {"maxpool2"};
        case network::NodeKind::Flatten: return {"flatten"};
        case network::NodeKind::Fc: return {"fc"};
        case network::NodeKind::BatchNorm: return {"batchnorm_train"};
        case network::NodeKind::UpsampleNearest: return {"upsample_nearest"};
        case network::NodeKind::TransposeConv: return {"transpose_conv2"};
        case network::NodeKind::Concat: return {"concat"};
    }
    throw UsageError("unmapped node kind");
}

}  // namespace

GradCheckReport check_layer(const std::string& kind, uint64_t seed) {
    for (const auto& [name, fn] : registry()) {
        if (name == kind) return fn(seed);
    }
    throw ConfigError("no gradient check registered for layer kind '" + kind + "'");
}

std::vector<std::string> registered_checks() {
    std::vector<std::string> names;
    for (const auto& [name, fn] : registry()) names.push_back(name);
    return names;
}

std::vector<GradCheckReport> run_all(uint64_t seed) {
    // coverage lock: every node kind must map to registered checks
    for (int k = 0; k <= static_cast<int>(network::NodeKind::Concat); ++k) {
        for (const std::string& name : names_for(static_cast<network::NodeKind>(k))) {
            bool found = false;
            for (const auto& [reg_name, fn] : registry()) found = found || reg_name == name;
            if (!found) {
                throw UsageError("layer kind check '" + name + "' is not registered");
            }
        }
    }
    std::vector<GradCheckReport> reports;
    for (const auto& [name, fn] : registry()) {
        reports.push_back(fn(seed));
    }
    return reports;
}

bool all_pass(const std::vector<GradCheckReport>& reports) {
    for (const auto& r : reports) {
        if (!r.pass) return false;
    }
    return !reports.empty();
}

void print_reports(std::ostream& out, const std::vector<GradCheckReport>& reports) {
    out << std::left << std::setw(24) << "check" << std::setw(14) << "max_rel_err" << std::setw(12)
        << "tolerance" << "result\n";
    for (const auto& r : reports) {
        out << std::left << std::setw(24) << r.name << std::setw(14) << std::scientific
            << std::setprecision(3) << r.max_rel_error << std::setw(12) << r.tolerance
            << (r.pass ? "pass" : "FAIL") << "\n";
    }
    out.flags(std::ios::fmtflags{});
}

}  // namespace petnet::gradcheck
