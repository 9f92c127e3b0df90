#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "petnet/network.hpp"
#include "petnet/training.hpp"

namespace petnet::config {

// Everything a run needs, parsed from the line-oriented
// `section.key = value` grammar. Unknown sections or keys are errors.
struct RunConfig {
    // dataset
    int64_t count = 64;
    int64_t height = 64;
    int64_t width = 64;
    uint64_t dataset_seed = 1;
    double lesion_probability = 0.5;
    double noise_level = 0.2;
    double train_fraction = 0.7;
    double val_fraction = 0.15;
    double test_fraction = 0.15;
    int64_t folds = 5;

    // model
    std::string arch = "toy_cnn";  // toy_cnn | unet
    int64_t channels = 8;          // J for toy_cnn, base channels for unet
    int64_t depth = 3;             // unet
    int64_t fc_width = 32;         // toy_cnn
    network::HeadKind head = network::HeadKind::Sigmoid;
    int64_t classes = 2;  // softmax width
    bool use_bn = true;
    bool allow_bn_with_linear = false;
    network::UpsampleKind upsample = network::UpsampleKind::TransposeConv;
    uint64_t model_seed = 1;

    // training
    training::Task task = training::Task::Classification;
    training::TrainConfig train;

    // paths
    std::filesystem::path out_dir = "out";
    std::filesystem::path model_path;  // defaults to out_dir / "model.pnm"
    std::filesystem::path data_dir;    // defaults to out_dir / "data"

    std::filesystem::path resolved_model_path() const {
        return model_path.empty() ? out_dir / "model.pnm" : model_path;
    }
    std::filesystem::path resolved_data_dir() const {
        return data_dir.empty() ? out_dir / "data" : data_dir;
    }

    // Canonical sorted `section.key = value` lines with every default filled
    // in; echoed before each command for provenance.
    std::string effective_text() const;
};

RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace petnet::config
