#include "petnet/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace petnet::config {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r");
    size_t e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

struct FieldError {
    std::string key;
    std::string message;
};

int64_t parse_int(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        int64_t v = std::stoll(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("field " + key + ": '" + value + "' is not an integer");
    }
}

double parse_double(const std::string& key, const std::string& value) {
    try {
        size_t used = 0;
        double v = std::stod(value, &used);
        if (used != value.size() || !std::isfinite(v)) throw std::invalid_argument(value);
        return v;
    } catch (const std::exception&) {
        throw ConfigError("field " + key + ": '" + value + "' is not a number");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true") return true;
    if (value == "false") return false;
    throw ConfigError("field " + key + ": '" + value + "' is not true/false");
}

void apply(RunConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "dataset.count") cfg.count = parse_int(key, value);
    else if (key == "dataset.height") cfg.height = parse_int(key, value);
    else if (key == "dataset.width") cfg.width = parse_int(key, value);
    else if (key == "dataset.seed") cfg.dataset_seed = static_cast<uint64_t>(parse_int(key, value));
    else if (key == "dataset.lesion_probability") cfg.lesion_probability = parse_double(key, value);
    else if (key == "dataset.noise_level") cfg.noise_level = parse_double(key, value);
    else if (key == "dataset.train_fraction") cfg.train_fraction = parse_double(key, value);
    else if (key == "dataset.val_fraction") cfg.val_fraction = parse_double(key, value);
    else if (key == "dataset.test_fraction") cfg.test_fraction = parse_double(key, value);
    else if (key == "dataset.folds") cfg.folds = parse_int(key, value);
    else if (key == "model.arch") {
        if (value != "toy_cnn" && value != "unet") {
            throw ConfigError("field model.arch: unknown architecture '" + value + "'");
        }
        cfg.arch = value;
    } else if (key == "model.channels") cfg.channels = parse_int(key, value);
    else if (key == "model.depth") cfg.depth = parse_int(key, value);
    else if (key == "model.fc_width") cfg.fc_width = parse_int(key, value);
    else if (key == "model.head") cfg.head = network::head_from_string(value);
    else if (key == "model.classes") cfg.classes = parse_int(key, value);
    else if (key == "model.use_bn") cfg.use_bn = parse_bool(key, value);
    else if (key == "model.allow_bn_with_linear") cfg.allow_bn_with_linear = parse_bool(key, value);
    else if (key == "model.upsample") {
        if (value == "transpose") cfg.upsample = network::UpsampleKind::TransposeConv;
        else if (value == "nearest") cfg.upsample = network::UpsampleKind::Nearest;
        else throw ConfigError("field model.upsample: expected transpose or nearest, got '" +
                               value + "'");
    } else if (key == "model.seed") cfg.model_seed = static_cast<uint64_t>(parse_int(key, value));
    else if (key == "training.task") cfg.task = training::task_from_string(value);
    else if (key == "training.loss") cfg.train.loss = training::loss_from_string(value);
    else if (key == "training.learning_rate") cfg.train.learning_rate = parse_double(key, value);
    else if (key == "training.batch_size") cfg.train.batch_size = parse_int(key, value);
    else if (key == "training.max_epochs") cfg.train.max_epochs = parse_int(key, value);
    else if (key == "training.patience") cfg.train.patience = parse_int(key, value);
    else if (key == "training.seed") cfg.train.seed = static_cast<uint64_t>(parse_int(key, value));
    else if (key == "training.shuffle") cfg.train.shuffle = parse_bool(key, value);
    else if (key == "paths.out_dir") cfg.out_dir = value;
    else if (key == "paths.model_path") cfg.model_path = value;
    else if (key == "paths.data_dir") cfg.data_dir = value;
    else {
        auto dot = key.find('.');
        std::string section = dot == std::string::npos ? key : key.substr(0, dot);
        if (section == "dataset" || section == "model" || section == "training" ||
            section == "paths") {
            throw ConfigError("unknown key '" + key + "'");
        }
        throw ConfigError("unknown section '" + section + "' in key '" + key + "'");
    }
}

void validate(const RunConfig& cfg) {
    if (cfg.count < 1) throw ConfigError("field dataset.count: must be >= 1");
    if (cfg.height < 16 || cfg.width < 16) {
        throw ConfigError("field dataset.height/width: phantoms need at least 16x16");
    }
    if (cfg.lesion_probability < 0.0 || cfg.lesion_probability > 1.0) {
        throw ConfigError("field dataset.lesion_probability: must lie in [0, 1]");
    }
    if (cfg.noise_level < 0.0) throw ConfigError("field dataset.noise_level: must be >= 0");
    double sum = cfg.train_fraction + cfg.val_fraction + cfg.test_fraction;
    if (cfg.train_fraction < 0 || cfg.val_fraction < 0 || cfg.test_fraction < 0 ||
        std::abs(sum - 1.0) > 1e-9) {
        throw ConfigError("field dataset.*_fraction: fractions must be >= 0 and sum to 1");
    }
    if (cfg.folds < 2) throw ConfigError("field dataset.folds: must be >= 2");
    if (cfg.channels < 1) throw ConfigError("field model.channels: must be >= 1");
    if (cfg.depth < 1) throw ConfigError("field model.depth: must be >= 1");
    if (cfg.fc_width < 1) throw ConfigError("field model.fc_width: must be >= 1");
    if (cfg.classes < 2) throw ConfigError("field model.classes: must be >= 2");
    if (cfg.train.learning_rate <= 0.0) {
        throw ConfigError("field training.learning_rate: must be positive");
    }
    if (cfg.train.batch_size < 1) throw ConfigError("field training.batch_size: must be >= 1");
    if (cfg.train.max_epochs < 1) throw ConfigError("field training.max_epochs: must be >= 1");
    if (cfg.train.patience < 0) throw ConfigError("field training.patience: must be >= 0");
}

}  // namespace

RunConfig parse_config(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" +
                              line + "'");
        }
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        }
        try {
            apply(cfg, key, value);
        } catch (const ConfigError& e) {
            std::string msg = e.what();
            const std::string prefix = "config error: ";
            if (msg.rfind(prefix, 0) == 0) msg = msg.substr(prefix.size());
            throw ConfigError("line " + std::to_string(line_no) + ": " + msg);
        }
    }
    validate(cfg);
    return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream buf;
    buf << f.rdbuf();
    return parse_config(buf.str());
}

std::string RunConfig::effective_text() const {
    std::ostringstream out;
    char fp[64];
    auto num = [&](double v) {
        std::snprintf(fp, sizeof(fp), "%g", v);
        return std::string(fp);
    };
    out << "dataset.count = " << count << "\n"
        << "dataset.folds = " << folds << "\n"
        << "dataset.height = " << height << "\n"
        << "dataset.lesion_probability = " << num(lesion_probability) << "\n"
        << "dataset.noise_level = " << num(noise_level) << "\n"
        << "dataset.seed = " << dataset_seed << "\n"
        << "dataset.test_fraction = " << num(test_fraction) << "\n"
        << "dataset.train_fraction = " << num(train_fraction) << "\n"
        << "dataset.val_fraction = " << num(val_fraction) << "\n"
        << "dataset.width = " << width << "\n"
        << "model.allow_bn_with_linear = " << (allow_bn_with_linear ? "true" : "false") << "\n"
        << "model.arch = " << arch << "\n"
        << "model.channels = " << channels << "\n"
        << "model.classes = " << classes << "\n"
        << "model.depth = " << depth << "\n"
        << "model.fc_width = " << fc_width << "\n"
        << "model.head = " << network::to_string(head) << "\n"
        << "model.seed = " << model_seed << "\n"
        << "model.upsample = "
        << (upsample == network::UpsampleKind::TransposeConv ? "transpose" : "nearest") << "\n"
        << "model.use_bn = " << (use_bn ? "true" : "false") << "\n"
        << "paths.data_dir = " << resolved_data_dir().string() << "\n"
        << "paths.model_path = " << resolved_model_path().string() << "\n"
        << "paths.out_dir = " << out_dir.string() << "\n"
        << "training.batch_size = " << train.batch_size << "\n"
        << "training.learning_rate = " << num(train.learning_rate) << "\n"
        << "training.loss = " << training::to_string(train.loss) << "\n"
        << "training.max_epochs = " << train.max_epochs << "\n"
        << "training.patience = " << train.patience << "\n"
        << "training.seed = " << train.seed << "\n"
        << "training.shuffle = " << (train.shuffle ? "true" : "false") << "\n"
        << "training.task = " << training::to_string(task) << "\n";
    return out.str();
}

}  // namespace petnet::config
