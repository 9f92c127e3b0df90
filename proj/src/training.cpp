#include "petnet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

namespace petnet::training {

using network::HeadKind;
using network::Model;
using network::ParamBank;

namespace {

constexpr double kProbFloor = 1e-12;

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

void require_same_shape(const Tensor& predicted, const Tensor& target) {
    if (predicted.shape() != target.shape()) {
        throw ShapeError("loss operands disagree: predicted " + predicted.shape().str() +
                         " vs target " + target.shape().str());
    }
}

void check_one_hot_rows(const Tensor& target) {
    if (target.shape().rank() != 2) {
        throw ShapeError("cross-entropy target must be rank-2 one-hot rows, got " +
                         target.shape().str());
    }
    int64_t n = target.shape()[0], k = target.shape()[1];
    for (int64_t i = 0; i < n; ++i) {
        double sum = 0.0;
        for (int64_t c = 0; c < k; ++c) sum += target[i * k + c];
        if (std::abs(sum - 1.0) > 1e-9) {
            throw ConfigError("cross-entropy target row " + std::to_string(i) + " sums to " +
                              std::to_string(sum) + ", expected 1");
        }
    }
}

}  // namespace

std::string to_string(LossKind k) {
    switch (k) {
        case LossKind::Mse: return "mse";
        case LossKind::CrossEntropy: return "cross_entropy";
        case LossKind::BinaryCrossEntropy: return "binary_cross_entropy";
    }
    return "?";
}

std::string to_string(Task t) {
    switch (t) {
        case Task::Classification: return "classification";
        case Task::Segmentation: return "segmentation";
        case Task::Synthesis: return "synthesis";
    }
    return "?";
}

LossKind loss_from_string(const std::string& s) {
    if (s == "mse") return LossKind::Mse;
    if (s == "cross_entropy") return LossKind::CrossEntropy;
    if (s == "binary_cross_entropy") return LossKind::BinaryCrossEntropy;
    throw ConfigError("unknown loss kind '" + s + "'");
}

Task task_from_string(const std::string& s) {
    if (s == "classification") return Task::Classification;
    if (s == "segmentation") return Task::Segmentation;
    if (s == "synthesis") return Task::Synthesis;
    throw ConfigError("unknown task '" + s + "'");
}

LossResult compute_loss(LossKind kind, const Tensor& predicted, const Tensor& target) {
    require_same_shape(predicted, target);
    LossResult result;
    int64_t count = predicted.size();
    if (count == 0) throw ShapeError("loss over empty tensors");
    switch (kind) {
        case LossKind::Mse: {
            result.grad = Tensor::zeros(predicted.shape());
            double sum = 0.0;
            for (int64_t i = 0; i < count; ++i) {
                double d = predicted[i] - target[i];
                sum += d * d;
                result.grad[i] = 2.0 * d / static_cast<double>(count);
            }
            result.value = sum / static_cast<double>(count);
            result.grad_is_preactivation = false;
            break;
        }
        case LossKind::CrossEntropy: {
            check_one_hot_rows(target);
            int64_t n = predicted.shape()[0];
            result.grad = Tensor::zeros(predicted.shape());
            double sum = 0.0;
            for (int64_t i = 0; i < count; ++i) {
                sum += target[i] * std::log(clamp_prob(predicted[i]));
                result.grad[i] = (predicted[i] - target[i]) / static_cast<double>(n);
            }
            result.value = -sum / static_cast<double>(n);
            result.grad_is_preactivation = true;  // gradient w.r.t. pre-softmax logits
            break;
        }
        case LossKind::BinaryCrossEntropy: {
            result.grad = Tensor::zeros(predicted.shape());
            double sum = 0.0;
            for (int64_t i = 0; i < count; ++i) {
                double t = target[i];
                if (t != 0.0 && t != 1.0) {
                    throw ConfigError("binary cross-entropy target must be 0 or 1, got " +
                                      std::to_string(t) + " at index " + std::to_string(i));
                }
                double p = clamp_prob(predicted[i]);
                sum += t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
                result.grad[i] = (predicted[i] - t) / static_cast<double>(count);
            }
            result.value = -sum / static_cast<double>(count);
            result.grad_is_preactivation = true;  // gradient w.r.t. pre-sigmoid input
            break;
        }
    }
    return result;
}

double loss_value(LossKind kind, const Tensor& predicted, const Tensor& target) {
    return compute_loss(kind, predicted, target).value;
}

namespace {

void sgd_tensor(Tensor& w, const Tensor& g, double lr) {
    if (w.shape() != g.shape()) {
        throw ShapeError("sgd_step shape mismatch: " + w.shape().str() + " vs " + g.shape().str());
    }
    for (int64_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
}

}  // namespace

void sgd_step(std::vector<ParamBank>& params, const std::vector<ParamBank>& grads,
              double learning_rate) {
    if (params.size() != grads.size()) {
        throw ShapeError("sgd_step: " + std::to_string(params.size()) + " parameter banks vs " +
                         std::to_string(grads.size()) + " gradient banks");
    }
    for (size_t i = 0; i < params.size(); ++i) {
        if (std::holds_alternative<std::monostate>(params[i])) continue;
        if (std::holds_alternative<std::monostate>(grads[i])) continue;  // no grad reached it
        if (auto* f = std::get_if<layers::FilterBank>(&params[i])) {
            const auto& g = std::get<layers::FilterBank>(grads[i]);
            sgd_tensor(f->weights, g.weights, learning_rate);
            sgd_tensor(f->bias, g.bias, learning_rate);
        } else if (auto* fc = std::get_if<layers::FcParams>(&params[i])) {
            const auto& g = std::get<layers::FcParams>(grads[i]);
            sgd_tensor(fc->weights, g.weights, learning_rate);
            sgd_tensor(fc->bias, g.bias, learning_rate);
        } else if (auto* bn = std::get_if<layers::BnParams>(&params[i])) {
            const auto& g = std::get<layers::BnParams>(grads[i]);
            sgd_tensor(bn->scale, g.scale, learning_rate);
            sgd_tensor(bn->offset, g.offset, learning_rate);
        }
    }
}

namespace {

void check_head_loss(HeadKind head, LossKind loss) {
    bool ok = (head == HeadKind::Softmax && loss == LossKind::CrossEntropy) ||
              (head == HeadKind::Sigmoid && loss == LossKind::BinaryCrossEntropy) ||
              (head == HeadKind::Linear && loss == LossKind::Mse);
    if (!ok) {
        throw ConfigError("loss " + to_string(loss) + " is incompatible with a " +
                          network::to_string(head) + " head");
    }
}

Tensor stack(const std::vector<Sample>& set, const std::vector<int64_t>& idx, bool inputs) {
    const Tensor& first = inputs ? set[0].input : set[0].target;
    std::vector<int64_t> dims = first.shape().dims;
    dims[0] = static_cast<int64_t>(idx.size());
    Tensor out = Tensor::zeros(Shape{dims});
    int64_t stride = first.size();
    for (size_t i = 0; i < idx.size(); ++i) {
        const Tensor& t = inputs ? set[idx[i]].input : set[idx[i]].target;
        std::copy(t.data(), t.data() + stride, out.data() + static_cast<int64_t>(i) * stride);
    }
    return out;
}

}  // namespace

double validation_loss(Model& model, const std::vector<Sample>& set, LossKind loss,
                       int64_t batch_size) {
    double weighted = 0.0;
    int64_t n = static_cast<int64_t>(set.size());
    for (int64_t start = 0; start < n; start += batch_size) {
        int64_t end = std::min(n, start + batch_size);
        std::vector<int64_t> idx(static_cast<size_t>(end - start));
        std::iota(idx.begin(), idx.end(), start);
        Tensor x = stack(set, idx, true);
        Tensor t = stack(set, idx, false);
        auto fr = network::forward(model, x, layers::Mode::Infer);
        weighted += loss_value(loss, fr.output, t) * static_cast<double>(end - start);
    }
    return weighted / static_cast<double>(n);
}

TrainReport train(Model& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& config) {
    if (train_set.empty() || val_set.empty()) {
        throw ConfigError("train and validation sets must be non-empty");
    }
    if (config.learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
    if (config.max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
    if (config.patience < 0) throw ConfigError("patience must be >= 0");
    if (config.batch_size < 1 || config.batch_size > static_cast<int64_t>(train_set.size())) {
        throw ConfigError("batch_size must lie in [1, training-set size]");
    }
    check_head_loss(model.head_kind(), config.loss);

    auto t0 = std::chrono::steady_clock::now();
    TrainReport report;
    int64_t n = static_cast<int64_t>(train_set.size());
    std::vector<ParamBank> best_params = network::clone_params(model);
    double best_val = std::numeric_limits<double>::infinity();
    int64_t best_epoch = 0;
    int64_t bad_streak = 0;

    for (int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        std::vector<std::vector<int64_t>> plan;
        if (config.shuffle) {
            plan = data::batches(n, config.batch_size, config.seed, epoch - 1);
        } else {
            for (int64_t start = 0; start < n; start += config.batch_size) {
                int64_t end = std::min(n, start + config.batch_size);
                std::vector<int64_t> idx(static_cast<size_t>(end - start));
                std::iota(idx.begin(), idx.end(), start);
                plan.push_back(std::move(idx));
            }
        }

        double epoch_loss = 0.0;
        for (size_t b = 0; b < plan.size(); ++b) {
            Tensor x = stack(train_set, plan[b], true);
            Tensor t = stack(train_set, plan[b], false);
            auto fr = network::forward(model, x, layers::Mode::Train);
            LossResult loss = compute_loss(config.loss, fr.output, t);
            if (!std::isfinite(loss.value)) {
                throw NumericError("non-finite training loss at epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(b));
            }
            auto grads = network::backward(model, fr, loss.grad, loss.grad_is_preactivation);
            sgd_step(model.params, grads.banks, config.learning_rate);
            epoch_loss += loss.value * static_cast<double>(plan[b].size());
        }
        report.train_loss.push_back(epoch_loss / static_cast<double>(n));

        double val = validation_loss(model, val_set, config.loss, config.batch_size);
        if (!std::isfinite(val)) {
            throw NumericError("non-finite validation loss at epoch " + std::to_string(epoch));
        }
        report.val_loss.push_back(val);
        report.stopped_epoch = epoch;

        if (val < best_val) {
            best_val = val;
            best_epoch = epoch;
            best_params = network::clone_params(model);
            bad_streak = 0;
        } else {
            ++bad_streak;
            // patience 0 behaves like "stop at the first failure to improve"
            if (bad_streak >= std::max<int64_t>(config.patience, 1)) break;
        }
    }

    model.params = std::move(best_params);
    report.best_epoch = best_epoch;
    report.best_val_loss = best_val;
    report.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::string TrainReport::to_csv() const {
    std::ostringstream out;
    out << "epoch,train_loss,val_loss\n";
    char buf[64];
    for (size_t i = 0; i < train_loss.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g\n", i + 1, train_loss[i], val_loss[i]);
        out << buf;
    }
    return out.str();
}

double MetricRecord::get(const std::string& name) const {
    for (const auto& [key, value] : values) {
        if (key == name) return value;
    }
    throw UsageError("metric '" + name + "' not present");
}

double dice_coefficient(const Tensor& predicted_mask, const Tensor& truth_mask) {
    require_same_shape(predicted_mask, truth_mask);
    int64_t inter = 0, p_count = 0, t_count = 0;
    for (int64_t i = 0; i < predicted_mask.size(); ++i) {
        bool p = predicted_mask[i] > 0.5;
        bool t = truth_mask[i] > 0.5;
        p_count += p;
        t_count += t;
        inter += p && t;
    }
    if (p_count == 0 && t_count == 0) return 1.0;
    if (p_count == 0 || t_count == 0) return 0.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(p_count + t_count);
}

std::vector<Sample> to_samples(const std::vector<data::PhantomSample>& dataset, Task task,
                               HeadKind head, int64_t classes) {
    std::vector<Sample> out;
    out.reserve(dataset.size());
    for (const auto& p : dataset) {
        Sample s;
        int64_t h = p.image.shape()[1], w = p.image.shape()[2];
        s.input = p.image.reshaped(Shape{1, 1, h, w});
        switch (task) {
            case Task::Classification: {
                if (head == HeadKind::Softmax) {
                    if (p.class_label < 0 || p.class_label >= classes) {
                        throw ConfigError("class label " + std::to_string(p.class_label) +
                                          " outside [0, " + std::to_string(classes) + ")");
                    }
                    Tensor t = Tensor::zeros(Shape{1, classes});
                    t[p.class_label] = 1.0;
                    s.target = std::move(t);
                } else if (head == HeadKind::Sigmoid) {
                    s.target = Tensor(Shape{1, 1}, {static_cast<double>(p.class_label)});
                } else {
                    throw ConfigError("classification needs a sigmoid or softmax head");
                }
                break;
            }
            case Task::Segmentation:
                if (head != HeadKind::Sigmoid) {
                    throw ConfigError("segmentation needs a sigmoid head");
                }
                s.target = p.mask.reshaped(Shape{1, 1, h, w});
                break;
            case Task::Synthesis:
                if (head != HeadKind::Linear) {
                    throw ConfigError("synthesis needs a linear head");
                }
                s.target = p.clean.reshaped(Shape{1, 1, h, w});
                break;
        }
        out.push_back(std::move(s));
    }
    return out;
}

MetricRecord evaluate(Model& model, const std::vector<data::PhantomSample>& dataset, Task task) {
    if (dataset.empty()) throw ConfigError("evaluate: dataset is empty");
    HeadKind head = model.head_kind();
    MetricRecord record;
    record.task = task;
    switch (task) {
        case Task::Classification: {
            if (head == HeadKind::Linear) {
                throw ConfigError("classification needs a sigmoid or softmax head");
            }
            int64_t correct = 0;
            for (const auto& p : dataset) {
                int64_t h = p.image.shape()[1], w = p.image.shape()[2];
                Tensor input = p.image.reshaped(Shape{1, 1, h, w});
                auto fr = network::forward(model, input, layers::Mode::Infer);
                int64_t predicted;
                if (head == HeadKind::Sigmoid) {
                    predicted = fr.output[0] > 0.5 ? 1 : 0;  // p = 0.5 rounds down
                } else {
                    int64_t k = fr.output.shape()[1];
                    predicted = 0;
                    for (int64_t c = 1; c < k; ++c) {
                        if (fr.output[c] > fr.output[predicted]) predicted = c;
                    }
                }
                correct += predicted == p.class_label;
            }
            record.values = {
                {"accuracy", static_cast<double>(correct) / static_cast<double>(dataset.size())},
                {"samples", static_cast<double>(dataset.size())},
            };
            break;
        }
        case Task::Segmentation: {
            if (head != HeadKind::Sigmoid) throw ConfigError("segmentation needs a sigmoid head");
            double dice_sum = 0.0;
            double pixel_acc_sum = 0.0;
            for (const auto& p : dataset) {
                int64_t h = p.image.shape()[1], w = p.image.shape()[2];
                Tensor input = p.image.reshaped(Shape{1, 1, h, w});
                auto fr = network::forward(model, input, layers::Mode::Infer);
                Tensor predicted =
                    map_elementwise(fr.output, [](double v) { return v > 0.5 ? 1.0 : 0.0; });
                Tensor truth = p.mask.reshaped(Shape{1, 1, h, w});
                dice_sum += dice_coefficient(predicted, truth);
                int64_t agree = 0;
                for (int64_t i = 0; i < predicted.size(); ++i) {
                    agree += (predicted[i] > 0.5) == (truth[i] > 0.5);
                }
                pixel_acc_sum += static_cast<double>(agree) / static_cast<double>(predicted.size());
            }
            double n = static_cast<double>(dataset.size());
            record.values = {
                {"dice", dice_sum / n},
                {"pixel_accuracy", pixel_acc_sum / n},
                {"samples", n},
            };
            break;
        }
        case Task::Synthesis: {
            if (head != HeadKind::Linear) throw ConfigError("synthesis needs a linear head");
            double mse_sum = 0.0, mae_sum = 0.0;
            for (const auto& p : dataset) {
                int64_t h = p.image.shape()[1], w = p.image.shape()[2];
                Tensor input = p.image.reshaped(Shape{1, 1, h, w});
                auto fr = network::forward(model, input, layers::Mode::Infer);
                double se = 0.0, ae = 0.0;
                for (int64_t i = 0; i < fr.output.size(); ++i) {
                    double d = fr.output[i] - p.clean[i];
                    se += d * d;
                    ae += std::abs(d);
                }
                mse_sum += se / static_cast<double>(fr.output.size());
                mae_sum += ae / static_cast<double>(fr.output.size());
            }
            double n = static_cast<double>(dataset.size());
            record.values = {
                {"mse", mse_sum / n},
                {"mae", mae_sum / n},
                {"samples", n},
            };
            break;
        }
    }
    return record;
}

}  // namespace petnet::training
