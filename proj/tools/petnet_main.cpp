#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "petnet/commands.hpp"

namespace {

// --seed replaces every seed in the config (dataset, model, training) so a
// single flag pins a whole run.
petnet::config::RunConfig resolve(const std::string& config_path,
                                  const std::optional<int64_t>& seed,
                                  const std::string& out_dir) {
    petnet::config::RunConfig cfg;
    if (!config_path.empty()) cfg = petnet::config::load_config(config_path);
    if (seed) {
        cfg.dataset_seed = static_cast<uint64_t>(*seed);
        cfg.model_seed = static_cast<uint64_t>(*seed);
        cfg.train.seed = static_cast<uint64_t>(*seed);
    }
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"from-scratch CNN training on synthetic PET-like phantoms"};
    app.require_subcommand(1);
    app.fallthrough();  // global flags may follow the subcommand

    std::string config_path;
    std::optional<int64_t> seed;
    std::string out_dir;
    app.add_option("--config", config_path, "run configuration file")->capture_default_str();
    app.add_option("--seed", seed, "override every seed in the config");
    app.add_option("--out", out_dir, "override paths.out_dir");

    auto* generate = app.add_subcommand("generate", "write a phantom dataset (PGMs + manifest)");
    auto* train = app.add_subcommand("train", "train a model, write PNM1 model + report.csv");

    auto* evaluate = app.add_subcommand("evaluate", "evaluate a model, write metrics.csv");
    std::string split = "test";
    std::string model_path;
    evaluate->add_option("--split", split, "test | validation | all-folds")
        ->capture_default_str();
    evaluate->add_option("--model", model_path, "model file (default paths.model_path)");

    auto* predict = app.add_subcommand("predict", "run one image through a saved model");
    std::string predict_model, predict_input, predict_output;
    predict->add_option("--model", predict_model, "PNM1 model file")->required();
    predict->add_option("--input", predict_input, "input PGM image")->required();
    predict->add_option("--output", predict_output, "output path prefix")->required();

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference checks for every layer");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) {
            petnet::commands::cmd_generate(resolve(config_path, seed, out_dir), std::cout);
        } else if (train->parsed()) {
            petnet::commands::cmd_train(resolve(config_path, seed, out_dir), std::cout);
        } else if (evaluate->parsed()) {
            auto cfg = resolve(config_path, seed, out_dir);
            std::filesystem::path model =
                model_path.empty() ? cfg.resolved_model_path() : std::filesystem::path(model_path);
            petnet::commands::cmd_evaluate(cfg, model, split, std::cout);
        } else if (predict->parsed()) {
            petnet::commands::cmd_predict(predict_model, predict_input, predict_output, std::cout);
        } else if (gradcheck->parsed()) {
            return petnet::commands::cmd_gradcheck(std::cout);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return petnet::commands::exit_code_for(e);
    }
    return 0;
}
