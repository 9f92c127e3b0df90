#include "petnet/commands.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "petnet/data.hpp"
#include "petnet/gradcheck.hpp"
#include "petnet/rng.hpp"

namespace petnet::commands {

using config::RunConfig;
using network::HeadKind;
using network::Model;
using training::Task;

namespace {

void echo_config(const RunConfig& cfg, std::ostream& out) {
    out << "# effective configuration\n" << cfg.effective_text() << "#\n";
}

void atomic_write_text(const std::filesystem::path& path, const std::string& text) {
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::trunc | std::ios::binary);
        if (!f) throw FormatError("cannot write " + path.string());
        f << text;
        if (!f) throw FormatError("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::vector<data::PhantomSample> load_or_generate(const RunConfig& cfg, std::ostream& out) {
    auto dir = cfg.resolved_data_dir();
    if (std::filesystem::exists(dir / "manifest.csv")) {
        out << "dataset: loading " << (dir / "manifest.csv").string() << "\n";
        return data::read_dataset(dir);
    }
    out << "dataset: generating " << cfg.count << " phantoms in memory (seed "
        << cfg.dataset_seed << ")\n";
    return data::generate_phantoms(cfg.count, cfg.height, cfg.width, cfg.dataset_seed,
                                   cfg.lesion_probability, cfg.noise_level);
}

Model build_model(const RunConfig& cfg) {
    if (cfg.arch == "toy_cnn") {
        return network::build_toy_cnn(cfg.height, cfg.width, cfg.channels, cfg.fc_width, cfg.head,
                                      cfg.classes, cfg.model_seed);
    }
    return network::build_unet(cfg.height, cfg.width, cfg.channels, cfg.depth, cfg.head,
                               cfg.use_bn, cfg.upsample, cfg.allow_bn_with_linear, cfg.model_seed);
}

// sigmoid heads are ambiguous (binary classification or segmentation); the
// config's task decides. softmax and linear imply their tasks.
Task task_for(HeadKind head, Task configured) {
    switch (head) {
        case HeadKind::Softmax:
            return Task::Classification;
        case HeadKind::Linear:
            return Task::Synthesis;
        case HeadKind::Sigmoid:
            if (configured == Task::Synthesis) {
                throw ConfigError("sigmoid head cannot serve the synthesis task");
            }
            return configured;
    }
    throw ConfigError("unknown head kind");
}

std::string metrics_csv_row(const training::MetricRecord& record, const std::string& label) {
    std::ostringstream out;
    out << label;
    char buf[64];
    for (const auto& [name, value] : record.values) {
        std::snprintf(buf, sizeof(buf), ",%.17g", value);
        out << buf;
    }
    out << "\n";
    return out.str();
}

std::string metrics_csv_header(const training::MetricRecord& record) {
    std::ostringstream out;
    out << "subset";
    for (const auto& [name, value] : record.values) out << ',' << name;
    out << "\n";
    return out.str();
}

void print_metrics(const training::MetricRecord& record, const std::string& label,
                   std::ostream& out) {
    out << label << ":";
    for (const auto& [name, value] : record.values) out << ' ' << name << '=' << value;
    out << "\n";
}

}  // namespace

void cmd_generate(const RunConfig& cfg, std::ostream& out) {
    echo_config(cfg, out);
    auto dataset = data::generate_phantoms(cfg.count, cfg.height, cfg.width, cfg.dataset_seed,
                                           cfg.lesion_probability, cfg.noise_level);
    auto dir = cfg.resolved_data_dir();
    data::write_dataset(dataset, dir);
    out << "wrote " << dataset.size() << " samples to " << dir.string() << "\n";
}

void cmd_train(const RunConfig& cfg, std::ostream& out) {
    echo_config(cfg, out);
    auto dataset = load_or_generate(cfg, out);
    auto parts = data::split(dataset,
                             {cfg.train_fraction, cfg.val_fraction, cfg.test_fraction,
                              cfg.dataset_seed});
    if (parts.train.empty() || parts.validation.empty()) {
        throw ConfigError("training requires non-empty train and validation splits (got " +
                          std::to_string(parts.train.size()) + "/" +
                          std::to_string(parts.validation.size()) + ")");
    }
    Model model = build_model(cfg);
    Task task = task_for(model.head_kind(), cfg.task);
    auto train_samples = training::to_samples(parts.train, task, model.head_kind(), cfg.classes);
    auto val_samples = training::to_samples(parts.validation, task, model.head_kind(), cfg.classes);

    auto report = training::train(model, train_samples, val_samples, cfg.train);

    std::filesystem::create_directories(cfg.out_dir);
    network::save_model(model, cfg.resolved_model_path());
    atomic_write_text(cfg.out_dir / "report.csv", report.to_csv());

    auto train_metrics = training::evaluate(model, parts.train, task);
    out << "stopped_epoch " << report.stopped_epoch << ", best_epoch " << report.best_epoch
        << ", best_val_loss " << report.best_val_loss << "\n";
    print_metrics(train_metrics, "train", out);
    out << "model: " << cfg.resolved_model_path().string() << "\n"
        << "report: " << (cfg.out_dir / "report.csv").string() << "\n";
}

void cmd_evaluate(const RunConfig& cfg, const std::filesystem::path& model_path,
                  const std::string& split, std::ostream& out) {
    echo_config(cfg, out);
    auto dataset = load_or_generate(cfg, out);
    std::filesystem::create_directories(cfg.out_dir);
    std::ostringstream csv;

    if (split == "all-folds") {
        auto plan = data::kfold(static_cast<int64_t>(dataset.size()), cfg.folds, cfg.dataset_seed);
        std::vector<training::MetricRecord> records;
        for (int64_t f = 0; f < plan.k; ++f) {
            std::vector<data::PhantomSample> test_fold, train_folds;
            for (int64_t i = 0; i < plan.k; ++i) {
                for (int64_t idx : plan.folds[static_cast<size_t>(i)]) {
                    (i == f ? test_fold : train_folds).push_back(dataset[static_cast<size_t>(idx)]);
                }
            }
            RunConfig fold_cfg = cfg;
            fold_cfg.model_seed = derive_seed(cfg.model_seed, static_cast<uint64_t>(f));
            Model model = build_model(fold_cfg);
            Task task = task_for(model.head_kind(), cfg.task);
            auto train_samples =
                training::to_samples(train_folds, task, model.head_kind(), cfg.classes);
            // the held-out fold doubles as the early-stopping validation set
            auto val_samples = training::to_samples(test_fold, task, model.head_kind(), cfg.classes);
            training::train(model, train_samples, val_samples, cfg.train);
            auto record = training::evaluate(model, test_fold, task);
            records.push_back(record);
            if (f == 0) csv << metrics_csv_header(record);
            std::string label = "fold" + std::to_string(f);
            csv << metrics_csv_row(record, label);
            print_metrics(record, label, out);
        }
        training::MetricRecord mean;
        mean.task = records[0].task;
        for (const auto& [name, value] : records[0].values) {
            double sum = 0.0;
            for (const auto& r : records) sum += r.get(name);
            mean.values.emplace_back(name, sum / static_cast<double>(records.size()));
        }
        csv << metrics_csv_row(mean, "mean");
        print_metrics(mean, "mean", out);
    } else if (split == "test" || split == "validation") {
        Model model = network::load_model(model_path);
        Task task = task_for(model.head_kind(), cfg.task);
        auto parts = data::split(dataset,
                                 {cfg.train_fraction, cfg.val_fraction, cfg.test_fraction,
                                  cfg.dataset_seed});
        const auto& subset = split == "test" ? parts.test : parts.validation;
        if (subset.empty()) {
            throw ConfigError("the " + split + " split is empty for this dataset/fractions");
        }
        auto record = training::evaluate(model, subset, task);
        csv << metrics_csv_header(record) << metrics_csv_row(record, split);
        print_metrics(record, split, out);
    } else {
        throw ConfigError("unknown split '" + split + "', expected test, validation or all-folds");
    }
    atomic_write_text(cfg.out_dir / "metrics.csv", csv.str());
    out << "metrics: " << (cfg.out_dir / "metrics.csv").string() << "\n";
}

void cmd_predict(const std::filesystem::path& model_path, const std::filesystem::path& input_pgm,
                 const std::filesystem::path& output_prefix, std::ostream& out) {
    Model model = network::load_model(model_path);
    out << "# model architecture\n" << model.arch_text << "#\n";
    Tensor raw = data::read_pgm(input_pgm);
    Tensor image = map_elementwise(raw, [](double v) { return v * data::kPhantomPgmScale; });
    int64_t h = image.shape()[1], w = image.shape()[2];
    if (h != model.input_shape[2] || w != model.input_shape[3]) {
        throw ShapeError("input image is " + std::to_string(h) + "x" + std::to_string(w) +
                         ", model expects " + std::to_string(model.input_shape[2]) + "x" +
                         std::to_string(model.input_shape[3]));
    }
    auto fr = network::forward(model, image.reshaped(Shape{1, 1, h, w}), layers::Mode::Infer);
    const Tensor& y = fr.output;

    auto as_map = [](const Tensor& t) {
        if (t.shape().rank() == 4) return t.reshaped(Shape{1, t.shape()[2], t.shape()[3]});
        return t.reshaped(Shape{1, 1, t.size()});
    };

    switch (model.head_kind()) {
        case HeadKind::Sigmoid: {
            Tensor prob = as_map(y);
            Tensor mask = map_elementwise(prob, [](double v) { return v > 0.5 ? 1.0 : 0.0; });
            std::filesystem::path prob_path = output_prefix;
            prob_path += "_prob.pgm";
            std::filesystem::path mask_path = output_prefix;
            mask_path += "_mask.pgm";
            data::write_pgm(prob, prob_path, 1.0);
            data::write_pgm(mask, mask_path, 1.0);
            out << "wrote " << prob_path.string() << " and " << mask_path.string() << "\n";
            break;
        }
        case HeadKind::Softmax: {
            std::ostringstream text;
            char buf[64];
            for (int64_t i = 0; i < y.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.17g\n", y[i]);
                text << buf;
            }
            std::filesystem::path path = output_prefix;
            path += "_probs.txt";
            atomic_write_text(path, text.str());
            out << "wrote " << path.string() << "\n";
            break;
        }
        case HeadKind::Linear: {
            Tensor synth =
                map_elementwise(as_map(y), [](double v) { return v < 0.0 ? 0.0 : v; });
            std::filesystem::path path = output_prefix;
            path += "_synth.pgm";
            data::write_pgm(synth, path, data::kPhantomPgmScale);
            out << "wrote " << path.string() << "\n";
            break;
        }
    }
}

int cmd_gradcheck(std::ostream& out) {
    auto reports = gradcheck::run_all();
    gradcheck::print_reports(out, reports);
    bool ok = gradcheck::all_pass(reports);
    out << (ok ? "gradcheck: all checks passed\n" : "gradcheck: FAILURES detected\n");
    return ok ? kExitOk : kExitGradcheck;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ShapeError*>(&e)) {
        return kExitConfig;
    }
    if (dynamic_cast<const FormatError*>(&e)) return kExitData;
    if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
    return 1;
}

}  // namespace petnet::commands
