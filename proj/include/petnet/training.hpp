#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "petnet/data.hpp"
#include "petnet/network.hpp"
#include "petnet/tensor.hpp"

namespace petnet::training {

enum class LossKind { Mse, CrossEntropy, BinaryCrossEntropy };
enum class Task { Classification, Segmentation, Synthesis };

std::string to_string(LossKind k);
std::string to_string(Task t);
LossKind loss_from_string(const std::string& s);
Task task_from_string(const std::string& s);

// Loss value plus gradient. The entropic losses return the gradient with
// respect to the head's pre-activation input (the fused softmax/sigmoid +
// cross-entropy form (p - t)/N), flagged by grad_is_preactivation; mse
// returns the gradient with respect to the prediction itself.
struct LossResult {
    double value = 0.0;
    Tensor grad;
    bool grad_is_preactivation = false;
};

LossResult compute_loss(LossKind kind, const Tensor& predicted, const Tensor& target);
double loss_value(LossKind kind, const Tensor& predicted, const Tensor& target);

// w <- w - learning_rate * g, in place, elementwise across every bank.
void sgd_step(std::vector<network::ParamBank>& params,
              const std::vector<network::ParamBank>& grads, double learning_rate);

struct TrainConfig {
    double learning_rate = 0.01;
    int64_t batch_size = 8;
    int64_t max_epochs = 50;
    int64_t patience = 5;  // consecutive non-improving epochs before stopping
    uint64_t seed = 0;
    LossKind loss = LossKind::BinaryCrossEntropy;
    bool shuffle = true;
};

struct Sample {
    Tensor input;   // 1 x C x H x W
    Tensor target;  // matches the head output for one sample
};

struct TrainReport {
    std::vector<double> train_loss;  // one entry per completed epoch
    std::vector<double> val_loss;
    int64_t stopped_epoch = 0;  // 1-based count of epochs run
    int64_t best_epoch = 0;
    double best_val_loss = 0.0;
    double seconds = 0.0;

    // header `epoch,train_loss,val_loss`, 17-significant-digit floats
    std::string to_csv() const;
};

// Seeded epoch/batch SGD loop with validation-based early stopping; the
// returned model carries the weights of the best validation epoch.
TrainReport train(network::Model& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config);

// Mean per-sample loss over a set in infer mode, batched like the training
// loop's validation pass computes it.
double validation_loss(network::Model& model, const std::vector<Sample>& set, LossKind loss,
                       int64_t batch_size);

struct MetricRecord {
    Task task{};
    std::vector<std::pair<std::string, double>> values;

    double get(const std::string& name) const;
};

MetricRecord evaluate(network::Model& model, const std::vector<data::PhantomSample>& dataset,
                      Task task);

// Builds (input, target) pairs for a task from phantom samples. Classes > 0
// selects a one-hot softmax target of that width for classification.
std::vector<Sample> to_samples(const std::vector<data::PhantomSample>& dataset, Task task,
                               network::HeadKind head, int64_t classes = 2);

// Dice with the empty-mask conventions: both empty -> 1, exactly one empty -> 0.
double dice_coefficient(const Tensor& predicted_mask, const Tensor& truth_mask);

}  // namespace petnet::training
