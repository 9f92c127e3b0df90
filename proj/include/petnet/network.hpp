#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "petnet/layers.hpp"
#include "petnet/tensor.hpp"

namespace petnet::network {

enum class NodeKind {
    Conv,
    Conv1x1,
    Activation,
    MaxPool2,
    Flatten,
    Fc,
    BatchNorm,
    UpsampleNearest,
    TransposeConv,
    Concat,
};

std::string to_string(NodeKind k);

enum class HeadKind { Sigmoid, Linear, Softmax };

std::string to_string(HeadKind h);
HeadKind head_from_string(const std::string& s);

enum class UpsampleKind { TransposeConv, Nearest };

// One node of the layer chain. Concat pulls a second input from the named
// earlier node (channels of the named node come first in the output).
struct LayerSpec {
    NodeKind kind{};
    std::string name;
    int64_t filters = 0;                    // conv / conv1x1 / transpose_conv
    int64_t kernel = 3;                     // conv
    layers::Padding padding = layers::Padding::Same;
    layers::ActivationKind activation = layers::ActivationKind::Relu;
    int64_t fc_width = 0;                   // fc
    std::string concat_with;                // concat
};

// Parameter bank attached to a node; nodes without parameters hold monostate.
using ParamBank = std::variant<std::monostate, layers::FilterBank, layers::FcParams,
                               layers::BnParams>;

struct Model {
    Shape input_shape;                 // (1, C, H, W); batch extent is nominal
    std::vector<LayerSpec> nodes;      // chain in topological order
    std::vector<ParamBank> params;     // parallel to nodes
    uint64_t seed = 0;                 // weight init seed
    std::string arch_text;             // config-grammar lines that rebuild this model

    HeadKind head_kind() const;
};

// Everything backward needs from one forward pass. Single consumer.
struct ForwardResult {
    Tensor output;
    std::vector<Tensor> node_outputs;
    std::vector<layers::LayerCache> caches;
    bool consumed = false;
};

// Gradients, one bank per node, same variant layout as the parameters, plus
// the gradient with respect to the model input.
struct GradientBank {
    std::vector<ParamBank> banks;
    Tensor input_grad;
};

// Static shape per node, failing fast with the offending node name.
std::vector<Shape> infer_shapes(const Model& model, const Shape& input_shape);

// conv(same, J) -> relu -> maxpool2 -> flatten -> fc(fc_width) -> relu ->
// fc(head size) -> head activation. Head size is 1 for sigmoid/linear and
// `classes` for softmax.
Model build_toy_cnn(int64_t height, int64_t width, int64_t channels, int64_t fc_width,
                    HeadKind head, int64_t classes = 2, uint64_t seed = 0);

// Encoder-decoder with skip concatenations; channel count doubles per encoder
// stage from base_channels and halves per decoder stage; final 1x1 conv to a
// single channel plus the head activation. A linear (synthesis) head rejects
// batch normalization unless explicitly overridden.
Model build_unet(int64_t height, int64_t width, int64_t base_channels, int64_t depth,
                 HeadKind head, bool use_bn, UpsampleKind upsample = UpsampleKind::TransposeConv,
                 bool allow_bn_with_linear = false, uint64_t seed = 0);

// Allocates and seeds the parameter banks of a hand-assembled node chain;
// the two build_* functions call this themselves.
void initialize(Model& model);

ForwardResult forward(Model& model, const Tensor& input, layers::Mode mode);

// Reverse-topological application of the per-layer backward rules. When
// `from_prehead` is set, loss_grad is taken with respect to the input of the
// final (head) node; the fused entropic losses use this path.
GradientBank backward(const Model& model, ForwardResult& fwd, const Tensor& loss_grad,
                      bool from_prehead = false);

int64_t parameter_count(const Model& model);

// Deep copies of the learnable state, in node order.
std::vector<ParamBank> clone_params(const Model& model);

// PNM1 container: magic "PNM1", u32 version, length-prefixed metadata text,
// named parameter tensors, trailing CRC-32.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

// Rebuilds a model (fresh weights) from the arch_text grammar.
Model model_from_arch_text(const std::string& text);

}  // namespace petnet::network
