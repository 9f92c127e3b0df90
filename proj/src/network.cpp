#include "petnet/network.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "petnet/rng.hpp"

namespace petnet::network {

using layers::ActivationKind;
using layers::BnParams;
using layers::FcParams;
using layers::FilterBank;
using layers::LayerCache;
using layers::Mode;
using layers::Padding;

std::string to_string(NodeKind k) {
    switch (k) {
        case NodeKind::Conv: return "conv";
        case NodeKind::Conv1x1: return "conv1x1";
        case NodeKind::Activation: return "activation";
        case NodeKind::MaxPool2: return "maxpool2";
        case NodeKind::Flatten: return "flatten";
        case NodeKind::Fc: return "fc";
        case NodeKind::BatchNorm: return "batchnorm";
        case NodeKind::UpsampleNearest: return "upsample_nearest";
        case NodeKind::TransposeConv: return "transpose_conv";
        case NodeKind::Concat: return "concat";
    }
    return "?";
}

std::string to_string(HeadKind h) {
    switch (h) {
        case HeadKind::Sigmoid: return "sigmoid";
        case HeadKind::Linear: return "linear";
        case HeadKind::Softmax: return "softmax";
    }
    return "?";
}

HeadKind head_from_string(const std::string& s) {
    if (s == "sigmoid") return HeadKind::Sigmoid;
    if (s == "linear") return HeadKind::Linear;
    if (s == "softmax") return HeadKind::Softmax;
    throw ConfigError("unknown head kind '" + s + "'");
}

HeadKind Model::head_kind() const {
    if (nodes.empty() || nodes.back().kind != NodeKind::Activation) {
        throw UsageError("model has no head activation node");
    }
    switch (nodes.back().activation) {
        case ActivationKind::Sigmoid: return HeadKind::Sigmoid;
        case ActivationKind::Linear: return HeadKind::Linear;
        case ActivationKind::Softmax: return HeadKind::Softmax;
        default:
            throw UsageError("head activation must be sigmoid, linear or softmax");
    }
}

namespace {

int64_t find_node(const std::vector<LayerSpec>& nodes, const std::string& name, int64_t before) {
    for (int64_t i = 0; i < before; ++i) {
        if (nodes[static_cast<size_t>(i)].name == name) return i;
    }
    throw ShapeError("concat references unknown or later node '" + name + "'");
}

[[noreturn]] void node_shape_error(const LayerSpec& node, const std::string& msg) {
    throw ShapeError("node '" + node.name + "' (" + to_string(node.kind) + "): " + msg);
}

}  // namespace

std::vector<Shape> infer_shapes(const Model& model, const Shape& input_shape) {
    std::vector<Shape> shapes;
    shapes.reserve(model.nodes.size());
    Shape cur = input_shape;
    for (size_t i = 0; i < model.nodes.size(); ++i) {
        const LayerSpec& node = model.nodes[i];
        switch (node.kind) {
            case NodeKind::Conv:
            case NodeKind::Conv1x1:
            case NodeKind::TransposeConv: {
                if (cur.rank() != 4) node_shape_error(node, "needs rank-4 input, got " + cur.str());
                int64_t k = node.kind == NodeKind::Conv1x1 ? 1 : node.kernel;
                if (node.kind == NodeKind::TransposeConv) {
                    cur = Shape{cur[0], node.filters, 2 * cur[2], 2 * cur[3]};
                } else if (node.padding == Padding::Same || k == 1) {
                    cur = Shape{cur[0], node.filters, cur[2], cur[3]};
                } else {
                    int64_t ho = cur[2] - k + 1, wo = cur[3] - k + 1;
                    if (ho < 1 || wo < 1) {
                        node_shape_error(node, "kernel " + std::to_string(k) +
                                                   " larger than input " + cur.str());
                    }
                    cur = Shape{cur[0], node.filters, ho, wo};
                }
                break;
            }
            case NodeKind::Activation:
                if (node.activation == ActivationKind::Softmax &&
                    (cur.rank() < 1 || cur[cur.rank() - 1] < 1)) {
                    node_shape_error(node, "softmax class axis empty in " + cur.str());
                }
                break;
            case NodeKind::MaxPool2: {
                if (cur.rank() != 4) node_shape_error(node, "needs rank-4 input, got " + cur.str());
                if (cur[2] % 2 != 0 || cur[3] % 2 != 0) {
                    node_shape_error(node, "spatial dims must be even, got " + cur.str());
                }
                cur = Shape{cur[0], cur[1], cur[2] / 2, cur[3] / 2};
                break;
            }
            case NodeKind::Flatten: {
                if (cur.rank() < 1) node_shape_error(node, "needs rank >= 1");
                cur = Shape{cur[0], cur.count() / cur[0]};
                break;
            }
            case NodeKind::Fc: {
                if (cur.rank() != 2) node_shape_error(node, "needs rank-2 input, got " + cur.str());
                cur = Shape{cur[0], node.fc_width};
                break;
            }
            case NodeKind::BatchNorm:
                if (cur.rank() != 4) node_shape_error(node, "needs rank-4 input, got " + cur.str());
                break;
            case NodeKind::UpsampleNearest: {
                if (cur.rank() != 4) node_shape_error(node, "needs rank-4 input, got " + cur.str());
                cur = Shape{cur[0], cur[1], 2 * cur[2], 2 * cur[3]};
                break;
            }
            case NodeKind::Concat: {
                int64_t other = find_node(model.nodes, node.concat_with, static_cast<int64_t>(i));
                const Shape& a = shapes[static_cast<size_t>(other)];
                if (a.rank() != 4 || cur.rank() != 4) {
                    node_shape_error(node, "concat needs rank-4 operands");
                }
                if (a[0] != cur[0] || a[2] != cur[2] || a[3] != cur[3]) {
                    node_shape_error(node, "spatial mismatch " + a.str() + " vs " + cur.str());
                }
                cur = Shape{cur[0], a[1] + cur[1], cur[2], cur[3]};
                break;
            }
        }
        shapes.push_back(cur);
    }
    return shapes;
}

namespace {

Tensor uniform_tensor(Rng& rng, const Shape& shape, double bound) {
    Tensor t = Tensor::zeros(shape);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
    return t;
}

}  // namespace

// Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)); biases start at 0,
// batch-norm scale at 1, running statistics at (0, 1).
void initialize(Model& model) {
    Rng rng(model.seed);
    std::vector<Shape> shapes = infer_shapes(model, model.input_shape);
    model.params.assign(model.nodes.size(), ParamBank{});
    for (size_t i = 0; i < model.nodes.size(); ++i) {
        const LayerSpec& node = model.nodes[i];
        const Shape& in = i == 0 ? model.input_shape : shapes[i - 1];
        switch (node.kind) {
            case NodeKind::Conv:
            case NodeKind::Conv1x1:
            case NodeKind::TransposeConv: {
                int64_t k = node.kind == NodeKind::Conv ? node.kernel
                            : node.kind == NodeKind::Conv1x1 ? 1
                                                             : 2;
                int64_t c = in[1], j = node.filters;
                double s = std::sqrt(6.0 / static_cast<double>((c + j) * k * k));
                FilterBank bank;
                bank.weights = uniform_tensor(rng, Shape{j, c, k, k}, s);
                bank.bias = Tensor::zeros(Shape{j});
                model.params[i] = std::move(bank);
                break;
            }
            case NodeKind::Fc: {
                int64_t n_in = in[1], n_out = node.fc_width;
                double s = std::sqrt(6.0 / static_cast<double>(n_in + n_out));
                FcParams p;
                p.weights = uniform_tensor(rng, Shape{n_in, n_out}, s);
                p.bias = Tensor::zeros(Shape{n_out});
                model.params[i] = std::move(p);
                break;
            }
            case NodeKind::BatchNorm: {
                int64_t c = in[1];
                BnParams p;
                p.scale = Tensor::full(Shape{c}, 1.0);
                p.offset = Tensor::zeros(Shape{c});
                p.running_mean = Tensor::zeros(Shape{c});
                p.running_var = Tensor::full(Shape{c}, 1.0);
                model.params[i] = std::move(p);
                break;
            }
            default:
                break;
        }
    }
}

namespace {

void validate_head(const Model& model) {
    (void)model.head_kind();  // throws if the last node is not a valid head
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

}  // namespace

Model build_toy_cnn(int64_t height, int64_t width, int64_t channels, int64_t fc_width,
                    HeadKind head, int64_t classes, uint64_t seed) {
    if (height % 2 != 0 || width % 2 != 0 || height < 2 || width < 2) {
        throw ShapeError("toy cnn input dims must be even and positive, got " +
                         std::to_string(height) + "x" + std::to_string(width));
    }
    if (channels < 1 || fc_width < 1) {
        throw ConfigError("toy cnn needs channels >= 1 and fc_width >= 1");
    }
    if (head == HeadKind::Softmax && classes < 2) {
        throw ConfigError("softmax head needs classes >= 2, got " + std::to_string(classes));
    }
    Model model;
    model.input_shape = Shape{1, 1, height, width};
    model.seed = seed;
    int64_t head_size = head == HeadKind::Softmax ? classes : 1;
    ActivationKind head_act = head == HeadKind::Sigmoid  ? ActivationKind::Sigmoid
                              : head == HeadKind::Linear ? ActivationKind::Linear
                                                         : ActivationKind::Softmax;
    model.nodes = {
        {.kind = NodeKind::Conv, .name = "conv1", .filters = channels, .kernel = 3},
        {.kind = NodeKind::Activation, .name = "relu1", .activation = ActivationKind::Relu},
        {.kind = NodeKind::MaxPool2, .name = "pool1"},
        {.kind = NodeKind::Flatten, .name = "flat"},
        {.kind = NodeKind::Fc, .name = "fc1", .fc_width = fc_width},
        {.kind = NodeKind::Activation, .name = "relu2", .activation = ActivationKind::Relu},
        {.kind = NodeKind::Fc, .name = "fc2", .fc_width = head_size},
        {.kind = NodeKind::Activation, .name = "head.act", .activation = head_act},
    };
    std::ostringstream arch;
    arch << "model.arch = toy_cnn\n"
         << "model.channels = " << channels << "\n"
         << "model.fc_width = " << fc_width << "\n"
         << "model.head = " << to_string(head) << "\n"
         << "model.classes = " << classes << "\n"
         << "model.seed = " << seed << "\n"
         << "input.channels = 1\n"
         << "input.height = " << height << "\n"
         << "input.width = " << width << "\n";
    model.arch_text = arch.str();
    initialize(model);
    validate_head(model);
    return model;
}

Model build_unet(int64_t height, int64_t width, int64_t base_channels, int64_t depth,
                 HeadKind head, bool use_bn, UpsampleKind upsample, bool allow_bn_with_linear,
                 uint64_t seed) {
    if (depth < 1) throw ConfigError("unet depth must be >= 1, got " + std::to_string(depth));
    if (base_channels < 1) throw ConfigError("unet base_channels must be >= 1");
    if (head == HeadKind::Softmax) {
        throw ConfigError("unet head must be sigmoid or linear");
    }
    int64_t div = int64_t{1} << depth;
    if (height % div != 0 || width % div != 0 || height < div || width < div) {
        throw ShapeError("unet input " + std::to_string(height) + "x" + std::to_string(width) +
                         " must be divisible by 2^depth = " + std::to_string(div));
    }
    if (head == HeadKind::Linear && use_bn && !allow_bn_with_linear) {
        throw ConfigError(
            "batch normalization with a linear (synthesis) head drifts quantitative outputs; "
            "disable use_bn or set allow_bn_with_linear");
    }

    Model model;
    model.input_shape = Shape{1, 1, height, width};
    model.seed = seed;
    auto& nodes = model.nodes;

    auto conv_block = [&](const std::string& prefix, int64_t j) {
        nodes.push_back({.kind = NodeKind::Conv, .name = prefix + ".conv1", .filters = j,
                         .kernel = 3});
        if (use_bn) nodes.push_back({.kind = NodeKind::BatchNorm, .name = prefix + ".bn1"});
        nodes.push_back({.kind = NodeKind::Activation, .name = prefix + ".relu1",
                         .activation = ActivationKind::Relu});
        nodes.push_back({.kind = NodeKind::Conv, .name = prefix + ".conv2", .filters = j,
                         .kernel = 3});
        if (use_bn) nodes.push_back({.kind = NodeKind::BatchNorm, .name = prefix + ".bn2"});
        nodes.push_back({.kind = NodeKind::Activation, .name = prefix + ".relu2",
                         .activation = ActivationKind::Relu});
    };

    for (int64_t s = 1; s <= depth; ++s) {
        std::string prefix = "enc" + std::to_string(s);
        conv_block(prefix, base_channels << (s - 1));
        nodes.push_back({.kind = NodeKind::MaxPool2, .name = prefix + ".pool"});
    }
    conv_block("bot", base_channels << depth);
    for (int64_t s = depth; s >= 1; --s) {
        std::string prefix = "dec" + std::to_string(s);
        int64_t j = base_channels << (s - 1);
        if (upsample == UpsampleKind::TransposeConv) {
            nodes.push_back({.kind = NodeKind::TransposeConv, .name = prefix + ".up",
                             .filters = j, .kernel = 2});
        } else {
            nodes.push_back({.kind = NodeKind::UpsampleNearest, .name = prefix + ".up"});
        }
        nodes.push_back({.kind = NodeKind::Concat, .name = prefix + ".cat",
                         .concat_with = "enc" + std::to_string(s) + ".relu2"});
        conv_block(prefix, j);
    }
    nodes.push_back({.kind = NodeKind::Conv1x1, .name = "head.conv", .filters = 1, .kernel = 1});
    nodes.push_back({.kind = NodeKind::Activation, .name = "head.act",
                     .activation = head == HeadKind::Sigmoid ? ActivationKind::Sigmoid
                                                             : ActivationKind::Linear});

    std::ostringstream arch;
    arch << "model.arch = unet\n"
         << "model.channels = " << base_channels << "\n"
         << "model.depth = " << depth << "\n"
         << "model.head = " << to_string(head) << "\n"
         << "model.use_bn = " << bool_str(use_bn) << "\n"
         << "model.upsample = " << (upsample == UpsampleKind::TransposeConv ? "transpose" : "nearest")
         << "\n"
         << "model.allow_bn_with_linear = " << bool_str(allow_bn_with_linear) << "\n"
         << "model.seed = " << seed << "\n"
         << "input.channels = 1\n"
         << "input.height = " << height << "\n"
         << "input.width = " << width << "\n";
    model.arch_text = arch.str();
    initialize(model);
    validate_head(model);
    return model;
}

ForwardResult forward(Model& model, const Tensor& input, Mode mode) {
    const Shape& want = model.input_shape;
    const Shape& got = input.shape();
    bool ok = got.rank() == want.rank();
    for (int64_t a = 1; ok && a < want.rank(); ++a) ok = got[a] == want[a];
    if (!ok) {
        throw ShapeError("model expects input (N, " + std::to_string(want[1]) + ", " +
                         std::to_string(want[2]) + ", " + std::to_string(want[3]) + "), got " +
                         got.str());
    }
    ForwardResult fr;
    fr.node_outputs.resize(model.nodes.size());
    fr.caches.resize(model.nodes.size());
    Tensor cur = input;
    for (size_t i = 0; i < model.nodes.size(); ++i) {
        const LayerSpec& node = model.nodes[i];
        switch (node.kind) {
            case NodeKind::Conv: {
                auto [out, cache] = layers::conv2d_forward(
                    cur, std::get<FilterBank>(model.params[i]), node.padding);
                cur = std::move(out);
                fr.caches[i] = std::move(cache);
                break;
            }
            case NodeKind::Conv1x1: {
                auto [out, cache] =
                    layers::conv1x1_forward(cur, std::get<FilterBank>(model.params[i]));
                cur = std::move(out);
                fr.caches[i] = std::move(cache);
                break;
            }
            case NodeKind::Activation: {
                auto [out, cache] = layers::activation_forward(node.activation, cur);
                cur = std::move(out);
                fr.caches[i] = std::move(cache);
                break;
            }
            case NodeKind::MaxPool2: {
                auto [out, cache] = layers::maxpool2_forward(cur);
                cur = std::move(out);
                fr.caches[i] = std::move(cache);
                break;
            }
            case NodeKind::Flatten: {
                LayerCache cache;
                cache.input_shape = cur.shape();
                Tensor out = flatten_batch(cur);
                cache.output_shape = out.shape();
                cur = std::move(out);
                fr.caches[i] = std::move(cache);
                break;
            }
            case NodeKind::Fc: {
                auto [out, cache] = layers::fc_forward(cur, std::get<FcParams>(model.params[i]));
                cur = std::move(out);
                fr.caches[i] = std::move(cache);
                break;
            }
            case NodeKind::BatchNorm: {
                auto [out, cache] =
                    layers::batchnorm_forward(cur, std::get<BnParams>(model.params[i]), mode);
                cur = std::move(out);
                fr.caches[i] = std::move(cache);
                break;
            }
            case NodeKind::UpsampleNearest: {
                auto [out, cache] = layers::upsample_nearest_forward(cur);
                cur = std::move(out);
                fr.caches[i] = std::move(cache);
                break;
            }
            case NodeKind::TransposeConv: {
                auto [out, cache] =
                    layers::transpose_conv2_forward(cur, std::get<FilterBank>(model.params[i]));
                cur = std::move(out);
                fr.caches[i] = std::move(cache);
                break;
            }
            case NodeKind::Concat: {
                int64_t other =
                    find_node(model.nodes, node.concat_with, static_cast<int64_t>(i));
                const Tensor& a = fr.node_outputs[static_cast<size_t>(other)];
                LayerCache cache;
                cache.input_shape = cur.shape();
                Tensor out = concat_channels(a, cur);
                cache.output_shape = out.shape();
                cur = std::move(out);
                fr.caches[i] = std::move(cache);
                break;
            }
        }
        fr.node_outputs[i] = cur;
    }
    fr.output = cur;
    return fr;
}

namespace {

void accumulate(Tensor& acc, const Tensor& g) {
    if (acc.size() == 0 && acc.shape().rank() == 0) {
        acc = g;
        return;
    }
    if (acc.shape() != g.shape()) {
        throw ShapeError("gradient accumulation shape mismatch: " + acc.shape().str() + " vs " +
                         g.shape().str());
    }
    for (int64_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
}

}  // namespace

GradientBank backward(const Model& model, ForwardResult& fwd, const Tensor& loss_grad,
                      bool from_prehead) {
    size_t n = model.nodes.size();
    if (fwd.consumed) {
        throw UsageError("backward: forward result already consumed");
    }
    if (fwd.caches.size() != n || fwd.node_outputs.size() != n) {
        throw UsageError("backward: stale or mismatched forward result");
    }
    fwd.consumed = true;

    GradientBank gb;
    gb.banks.resize(n);
    std::vector<Tensor> slot(n);

    int64_t start;
    if (from_prehead) {
        if (model.nodes.back().kind != NodeKind::Activation) {
            throw UsageError("from_prehead requires an activation head node");
        }
        fwd.caches[n - 1].consumed = true;  // the fused loss stands in for its backward
        if (loss_grad.shape() != fwd.caches[n - 1].input_shape) {
            throw ShapeError("pre-head loss gradient shape " + loss_grad.shape().str() +
                             " does not match head input " + fwd.caches[n - 1].input_shape.str());
        }
        if (n == 1) {
            gb.input_grad = loss_grad;
            return gb;
        }
        slot[n - 2] = loss_grad;
        start = static_cast<int64_t>(n) - 2;
    } else {
        if (loss_grad.shape() != fwd.caches[n - 1].output_shape) {
            throw ShapeError("loss gradient shape " + loss_grad.shape().str() +
                             " does not match model output " +
                             fwd.caches[n - 1].output_shape.str());
        }
        slot[n - 1] = loss_grad;
        start = static_cast<int64_t>(n) - 1;
    }

    for (int64_t i = start; i >= 0; --i) {
        const LayerSpec& node = model.nodes[static_cast<size_t>(i)];
        LayerCache& cache = fwd.caches[static_cast<size_t>(i)];
        Tensor& g = slot[static_cast<size_t>(i)];
        Tensor grad_in;
        switch (node.kind) {
            case NodeKind::Conv:
            case NodeKind::Conv1x1: {
                layers::FilterGrads fg;
                grad_in = layers::conv2d_backward(
                    cache, std::get<FilterBank>(model.params[static_cast<size_t>(i)]), g, fg);
                gb.banks[static_cast<size_t>(i)] =
                    FilterBank{std::move(fg.weights), std::move(fg.bias)};
                break;
            }
            case NodeKind::Activation:
                grad_in = layers::activation_backward(node.activation, cache, g);
                break;
            case NodeKind::MaxPool2:
                grad_in = layers::maxpool2_backward(cache, g);
                break;
            case NodeKind::Flatten:
                cache.check_grad(g, "flatten_backward");
                cache.mark_consumed("flatten_backward");
                grad_in = g.reshaped(cache.input_shape);
                break;
            case NodeKind::Fc: {
                layers::FcGrads fg;
                grad_in = layers::fc_backward(
                    cache, std::get<FcParams>(model.params[static_cast<size_t>(i)]), g, fg);
                gb.banks[static_cast<size_t>(i)] =
                    FcParams{std::move(fg.weights), std::move(fg.bias)};
                break;
            }
            case NodeKind::BatchNorm: {
                layers::BnGrads bg;
                const auto& p = std::get<BnParams>(model.params[static_cast<size_t>(i)]);
                grad_in = layers::batchnorm_backward(cache, p, g, bg);
                BnParams grads;
                grads.scale = std::move(bg.scale);
                grads.offset = std::move(bg.offset);
                grads.running_mean = Tensor::zeros(p.running_mean.shape());
                grads.running_var = Tensor::zeros(p.running_var.shape());
                gb.banks[static_cast<size_t>(i)] = std::move(grads);
                break;
            }
            case NodeKind::UpsampleNearest:
                grad_in = layers::upsample_nearest_backward(cache, g);
                break;
            case NodeKind::TransposeConv: {
                layers::FilterGrads fg;
                grad_in = layers::transpose_conv2_backward(
                    cache, std::get<FilterBank>(model.params[static_cast<size_t>(i)]), g, fg);
                gb.banks[static_cast<size_t>(i)] =
                    FilterBank{std::move(fg.weights), std::move(fg.bias)};
                break;
            }
            case NodeKind::Concat: {
                cache.check_grad(g, "concat_backward");
                cache.mark_consumed("concat_backward");
                int64_t other = find_node(model.nodes, node.concat_with, i);
                const Shape& ash = fwd.node_outputs[static_cast<size_t>(other)].shape();
                int64_t na = ash[1];
                int64_t nb = cache.input_shape[1];
                int64_t batch = g.shape()[0], plane = g.shape()[2] * g.shape()[3];
                Tensor ga = Tensor::zeros(ash);
                Tensor gbp = Tensor::zeros(cache.input_shape);
                for (int64_t s = 0; s < batch; ++s) {
                    const double* src = g.data() + s * (na + nb) * plane;
                    double* da = ga.data() + s * na * plane;
                    double* db = gbp.data() + s * nb * plane;
                    for (int64_t q = 0; q < na * plane; ++q) da[q] = src[q];
                    for (int64_t q = 0; q < nb * plane; ++q) db[q] = src[na * plane + q];
                }
                accumulate(slot[static_cast<size_t>(other)], ga);
                grad_in = std::move(gbp);
                break;
            }
        }
        if (i == 0) {
            accumulate(gb.input_grad, grad_in);
        } else {
            accumulate(slot[static_cast<size_t>(i - 1)], grad_in);
        }
    }
    return gb;
}

// Learnable scalars only: filter/fc weights and biases, batch-norm scale and
// offset. Running statistics are state, not parameters.
int64_t parameter_count(const Model& model) {
    int64_t total = 0;
    for (const ParamBank& bank : model.params) {
        if (const auto* f = std::get_if<FilterBank>(&bank)) {
            total += f->weights.size() + f->bias.size();
        } else if (const auto* fc = std::get_if<FcParams>(&bank)) {
            total += fc->weights.size() + fc->bias.size();
        } else if (const auto* bn = std::get_if<BnParams>(&bank)) {
            total += bn->scale.size() + bn->offset.size();
        }
    }
    return total;
}

std::vector<ParamBank> clone_params(const Model& model) { return model.params; }

namespace {

std::map<std::string, std::string> parse_kv_lines(const std::string& text) {
    std::map<std::string, std::string> kv;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t b = s.find_first_not_of(" \t\r");
            size_t e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = value;
    }
    return kv;
}

int64_t kv_int(const std::map<std::string, std::string>& kv, const std::string& key,
               int64_t fallback) {
    auto it = kv.find(key);
    if (it == kv.end()) return fallback;
    try {
        return std::stoll(it->second);
    } catch (const std::exception&) {
        throw FormatError("model metadata: bad integer for " + key + ": '" + it->second + "'");
    }
}

}  // namespace

Model model_from_arch_text(const std::string& text) {
    auto kv = parse_kv_lines(text);
    auto it = kv.find("model.arch");
    if (it == kv.end()) throw FormatError("model metadata missing model.arch");
    std::string arch = it->second;
    int64_t h = kv_int(kv, "input.height", 0);
    int64_t w = kv_int(kv, "input.width", 0);
    uint64_t seed = static_cast<uint64_t>(kv_int(kv, "model.seed", 0));
    HeadKind head = head_from_string(kv.count("model.head") ? kv.at("model.head") : "sigmoid");
    if (arch == "toy_cnn") {
        return build_toy_cnn(h, w, kv_int(kv, "model.channels", 8), kv_int(kv, "model.fc_width", 32),
                             head, kv_int(kv, "model.classes", 2), seed);
    }
    if (arch == "unet") {
        bool use_bn = kv.count("model.use_bn") && kv.at("model.use_bn") == "true";
        bool allow = kv.count("model.allow_bn_with_linear") &&
                     kv.at("model.allow_bn_with_linear") == "true";
        UpsampleKind up = kv.count("model.upsample") && kv.at("model.upsample") == "nearest"
                              ? UpsampleKind::Nearest
                              : UpsampleKind::TransposeConv;
        return build_unet(h, w, kv_int(kv, "model.channels", 8), kv_int(kv, "model.depth", 3), head,
                          use_bn, up, allow, seed);
    }
    throw FormatError("model metadata: unknown architecture '" + arch + "'");
}

}  // namespace petnet::network
