#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "petnet/commands.hpp"
#include "petnet/config.hpp"
#include "petnet/data.hpp"
#include "petnet/network.hpp"

using namespace petnet;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
    std::ifstream f(path, std::ios::binary);
    REQUIRE(f);
    std::ostringstream buf;
    buf << f.rdbuf();
    return buf.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// small enough for seconds-scale command tests
std::string tiny_config(const fs::path& out_dir) {
    return "dataset.count = 14\n"
           "dataset.height = 16\n"
           "dataset.width = 16\n"
           "dataset.seed = 5\n"
           "dataset.lesion_probability = 0.5\n"
           "dataset.noise_level = 0.2\n"
           "dataset.train_fraction = 0.6\n"
           "dataset.val_fraction = 0.2\n"
           "dataset.test_fraction = 0.2\n"
           "model.arch = toy_cnn\n"
           "model.channels = 2\n"
           "model.fc_width = 4\n"
           "model.head = sigmoid\n"
           "training.task = classification\n"
           "training.loss = binary_cross_entropy\n"
           "training.learning_rate = 0.05\n"
           "training.batch_size = 4\n"
           "training.max_epochs = 3\n"
           "training.patience = 3\n"
           "training.seed = 9\n"
           "paths.out_dir = " + out_dir.string() + "\n";
}

}  // namespace

TEST_CASE("parse_config fills defaults and validates fields") {
    auto cfg = config::parse_config("");
    CHECK(cfg.train.learning_rate == 0.01);
    CHECK(cfg.train.patience == 5);
    CHECK(cfg.train.batch_size == 8);
    CHECK(cfg.train.shuffle);
    CHECK(cfg.arch == "toy_cnn");
    CHECK(cfg.resolved_model_path() == fs::path("out") / "model.pnm");

    auto cfg2 = config::parse_config("# comment\n\ntraining.learning_rate = 0.5\n");
    CHECK(cfg2.train.learning_rate == 0.5);

    // the effective echo parses back to itself (fixpoint)
    auto cfg3 = config::parse_config(cfg2.effective_text());
    CHECK(cfg3.effective_text() == cfg2.effective_text());
}

TEST_CASE("parse_config errors carry line numbers and field names") {
    try {
        config::parse_config("training.learning_rate = -1\n");
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("training.learning_rate") != std::string::npos);
    }

    try {
        config::parse_config("dataset.count = 10\ntrainin.learning_rate = 0.01\n");
        FAIL("expected an unknown-section error");
    } catch (const ConfigError& e) {
        std::string msg = e.what();
        CHECK(msg.find("line 2") != std::string::npos);
        CHECK(msg.find("trainin") != std::string::npos);
    }

    CHECK_THROWS_AS(config::parse_config("model.extra_knob = 3\n"), ConfigError);
    CHECK_THROWS_AS(config::parse_config("not a key value line\n"), ConfigError);
    CHECK_THROWS_AS(config::parse_config("dataset.count = ten\n"), ConfigError);
    CHECK_THROWS_AS(config::load_config("/nonexistent/run.cfg"), ConfigError);
}

TEST_CASE("generate writes a loadable dataset and is byte-stable across reruns") {
    fs::path dir = fresh_dir("petnet_cli_generate");
    auto cfg = config::parse_config("dataset.count = 10\ndataset.height = 16\n"
                                    "dataset.width = 16\ndataset.seed = 3\n"
                                    "paths.out_dir = " + dir.string() + "\n");
    std::ostringstream log;
    commands::cmd_generate(cfg, log);
    CHECK(log.str().find("effective configuration") != std::string::npos);

    fs::path manifest = cfg.resolved_data_dir() / "manifest.csv";
    REQUIRE(fs::exists(manifest));
    std::string manifest_a = slurp(manifest);
    CHECK(std::count(manifest_a.begin(), manifest_a.end(), '\n') == 11);  // header + 10 rows
    std::string image_a = slurp(cfg.resolved_data_dir() / "sample_0000_image.pgm");

    commands::cmd_generate(cfg, log);
    CHECK(slurp(manifest) == manifest_a);
    CHECK(slurp(cfg.resolved_data_dir() / "sample_0000_image.pgm") == image_a);

    auto loaded = data::read_dataset(cfg.resolved_data_dir());
    CHECK(loaded.size() == 10);
    fs::remove_all(dir);
}

TEST_CASE("train command produces a model and report; reruns are byte-identical") {
    fs::path dir_a = fresh_dir("petnet_cli_train_a");
    fs::path dir_b = fresh_dir("petnet_cli_train_b");
    std::ostringstream log;

    auto cfg_a = config::parse_config(tiny_config(dir_a));
    commands::cmd_train(cfg_a, log);
    REQUIRE(fs::exists(dir_a / "model.pnm"));
    REQUIRE(fs::exists(dir_a / "report.csv"));

    auto cfg_b = config::parse_config(tiny_config(dir_b));
    commands::cmd_train(cfg_b, log);

    CHECK(slurp(dir_a / "report.csv") == slurp(dir_b / "report.csv"));
    CHECK(slurp(dir_a / "model.pnm") == slurp(dir_b / "model.pnm"));

    // incompatible head/loss is rejected before any training
    auto bad = config::parse_config(tiny_config(dir_a) + "training.loss = mse\n");
    CHECK_THROWS_AS(commands::cmd_train(bad, log), ConfigError);

    fs::remove_all(dir_a);
    fs::remove_all(dir_b);
}

TEST_CASE("evaluate writes metrics for a split and for all folds") {
    fs::path dir = fresh_dir("petnet_cli_eval");
    std::ostringstream log;
    auto cfg = config::parse_config(tiny_config(dir) + "dataset.folds = 3\n");
    commands::cmd_train(cfg, log);

    commands::cmd_evaluate(cfg, cfg.resolved_model_path(), "test", log);
    std::string metrics = slurp(dir / "metrics.csv");
    CHECK(metrics.rfind("subset,accuracy", 0) == 0);
    CHECK(metrics.find("test,") != std::string::npos);

    commands::cmd_evaluate(cfg, cfg.resolved_model_path(), "all-folds", log);
    std::string folds = slurp(dir / "metrics.csv");
    CHECK(std::count(folds.begin(), folds.end(), '\n') == 5);  // header + 3 folds + mean
    CHECK(folds.find("fold0,") != std::string::npos);
    CHECK(folds.find("mean,") != std::string::npos);

    CHECK_THROWS_AS(commands::cmd_evaluate(cfg, cfg.resolved_model_path(), "bogus", log),
                    ConfigError);
    fs::remove_all(dir);
}

TEST_CASE("predict: zero-weight sigmoid model maps everything to 0.5 / mask 0") {
    fs::path dir = fresh_dir("petnet_cli_predict");
    auto model = network::build_toy_cnn(16, 16, 2, 4, network::HeadKind::Sigmoid);
    for (auto& bank : model.params) {
        if (auto* f = std::get_if<layers::FilterBank>(&bank)) {
            std::fill(f->weights.values().begin(), f->weights.values().end(), 0.0);
            std::fill(f->bias.values().begin(), f->bias.values().end(), 0.0);
        } else if (auto* fc = std::get_if<layers::FcParams>(&bank)) {
            std::fill(fc->weights.values().begin(), fc->weights.values().end(), 0.0);
            std::fill(fc->bias.values().begin(), fc->bias.values().end(), 0.0);
        }
    }
    network::save_model(model, dir / "zero.pnm");
    auto phantoms = data::generate_phantoms(1, 16, 16, 2, 1.0, 0.1);
    data::write_pgm(phantoms[0].image, dir / "input.pgm", data::kPhantomPgmScale);

    std::ostringstream log;
    commands::cmd_predict(dir / "zero.pnm", dir / "input.pgm", dir / "out", log);
    Tensor prob = data::read_pgm(dir / "out_prob.pgm");
    Tensor mask = data::read_pgm(dir / "out_mask.pgm");
    for (double v : prob.values()) REQUIRE(v == doctest::Approx(0.5).epsilon(1e-4));
    for (double v : mask.values()) REQUIRE(v == 0.0);

    // deterministic bytes
    std::string prob_a = slurp(dir / "out_prob.pgm");
    commands::cmd_predict(dir / "zero.pnm", dir / "input.pgm", dir / "out", log);
    CHECK(slurp(dir / "out_prob.pgm") == prob_a);

    // dimension mismatch names both shapes
    auto wrong = data::generate_phantoms(1, 32, 32, 2, 1.0, 0.1);
    data::write_pgm(wrong[0].image, dir / "wrong.pgm", data::kPhantomPgmScale);
    try {
        commands::cmd_predict(dir / "zero.pnm", dir / "wrong.pgm", dir / "out2", log);
        FAIL("expected shape error");
    } catch (const ShapeError& e) {
        std::string msg = e.what();
        CHECK(msg.find("32x32") != std::string::npos);
        CHECK(msg.find("16x16") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("predict emits softmax probabilities that sum to 1") {
    fs::path dir = fresh_dir("petnet_cli_softmax");
    auto model = network::build_toy_cnn(16, 16, 2, 4, network::HeadKind::Softmax, 4, 3);
    network::save_model(model, dir / "m.pnm");
    auto phantoms = data::generate_phantoms(1, 16, 16, 4, 1.0, 0.1);
    data::write_pgm(phantoms[0].image, dir / "input.pgm", data::kPhantomPgmScale);
    std::ostringstream log;
    commands::cmd_predict(dir / "m.pnm", dir / "input.pgm", dir / "out", log);

    std::istringstream lines(slurp(dir / "out_probs.txt"));
    double sum = 0, v;
    int count = 0;
    while (lines >> v) {
        sum += v;
        ++count;
    }
    CHECK(count == 4);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    fs::remove_all(dir);
}

TEST_CASE("reported dice matches a recomputation from dumped prediction masks") {
    fs::path dir = fresh_dir("petnet_cli_recompute");
    std::string cfg_text =
        "dataset.count = 12\ndataset.height = 16\ndataset.width = 16\ndataset.seed = 8\n"
        "dataset.lesion_probability = 1.0\ndataset.noise_level = 0.2\n"
        "dataset.train_fraction = 0.5\ndataset.val_fraction = 0.25\n"
        "dataset.test_fraction = 0.25\n"
        "model.arch = unet\nmodel.channels = 2\nmodel.depth = 1\nmodel.head = sigmoid\n"
        "model.use_bn = false\n"
        "training.task = segmentation\ntraining.loss = binary_cross_entropy\n"
        "training.learning_rate = 0.3\ntraining.batch_size = 3\ntraining.max_epochs = 4\n"
        "training.patience = 4\ntraining.seed = 2\n"
        "paths.out_dir = " + dir.string() + "\n";
    auto cfg = config::parse_config(cfg_text);
    std::ostringstream log;
    commands::cmd_generate(cfg, log);
    commands::cmd_train(cfg, log);
    commands::cmd_evaluate(cfg, cfg.resolved_model_path(), "test", log);

    // reported mean dice, parsed out of metrics.csv (first metric column)
    std::istringstream metrics(slurp(dir / "metrics.csv"));
    std::string header, row;
    std::getline(metrics, header);
    REQUIRE(header.rfind("subset,dice", 0) == 0);
    std::getline(metrics, row);
    double reported = std::stod(row.substr(row.find(',') + 1));

    // rebuild the same split, dump per-sample predictions, recompute dice
    auto dataset = data::read_dataset(cfg.resolved_data_dir());
    auto parts = data::split(dataset, {0.5, 0.25, 0.25, cfg.dataset_seed});
    REQUIRE(parts.test.size() == 3);
    double dice_sum = 0;
    for (size_t i = 0; i < parts.test.size(); ++i) {
        fs::path input = dir / ("eval_in_" + std::to_string(i) + ".pgm");
        data::write_pgm(parts.test[i].image, input, data::kPhantomPgmScale);
        fs::path prefix = dir / ("eval_out_" + std::to_string(i));
        commands::cmd_predict(cfg.resolved_model_path(), input, prefix, log);
        Tensor mask = data::read_pgm(fs::path(prefix.string() + "_mask.pgm"));
        // hand dice against the ground-truth mask
        int64_t inter = 0, p_count = 0, t_count = 0;
        for (int64_t q = 0; q < mask.size(); ++q) {
            bool p = mask[q] > 0.5;
            bool t = parts.test[i].mask[q] > 0.5;
            p_count += p;
            t_count += t;
            inter += p && t;
        }
        double dice = (p_count == 0 && t_count == 0) ? 1.0
                      : (p_count == 0 || t_count == 0)
                          ? 0.0
                          : 2.0 * double(inter) / double(p_count + t_count);
        dice_sum += dice;
    }
    double recomputed = dice_sum / double(parts.test.size());
    // both routes consume the same quantized PGMs and the same model, so the
    // agreement is exact up to the csv's 17-digit print
    CHECK(reported == doctest::Approx(recomputed).epsilon(1e-12));
    fs::remove_all(dir);
}

TEST_CASE("exit code mapping follows the documented contract") {
    CHECK(commands::exit_code_for(ConfigError("x")) == 2);
    CHECK(commands::exit_code_for(ShapeError("x")) == 2);
    CHECK(commands::exit_code_for(FormatError("x")) == 3);
    CHECK(commands::exit_code_for(NumericError("x")) == 4);
    CHECK(commands::exit_code_for(std::runtime_error("x")) == 1);
}

#ifdef PETNET_BIN
TEST_CASE("the installed binary honors config-error exit codes") {
    fs::path dir = fresh_dir("petnet_cli_bin");
    fs::path cfg = dir / "bad.cfg";
    {
        std::ofstream f(cfg);
        f << "training.learning_rate = -1\n";
    }
    std::string cmd = std::string(PETNET_BIN) + " train --config " + cfg.string() +
                      " > /dev/null 2>&1";
    int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 2);

    std::string help = std::string(PETNET_BIN) + " --help > /dev/null 2>&1";
    status = std::system(help.c_str());
    REQUIRE(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
    fs::remove_all(dir);
}
#endif
