#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "petnet/data.hpp"
#include "petnet/rng.hpp"

using namespace petnet;
namespace fs = std::filesystem;

TEST_CASE("phantom generation: determinism, zero noise, lesion gating") {
    auto a = data::generate_phantoms(6, 32, 32, 99, 0.5, 0.3);
    auto b = data::generate_phantoms(6, 32, 32, 99, 0.5, 0.3);
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        REQUIRE(a[i].image.values() == b[i].image.values());
        REQUIRE(a[i].mask.values() == b[i].mask.values());
        REQUIRE(a[i].clean.values() == b[i].clean.values());
        REQUIRE(a[i].class_label == b[i].class_label);
    }

    auto noiseless = data::generate_phantoms(4, 32, 32, 7, 1.0, 0.0);
    for (const auto& p : noiseless) {
        REQUIRE(p.image.values() == p.clean.values());
    }

    auto healthy = data::generate_phantoms(5, 32, 32, 8, 0.0, 0.2);
    for (const auto& p : healthy) {
        REQUIRE(p.class_label == 0);
        for (double v : p.mask.values()) REQUIRE(v == 0.0);
    }
}

TEST_CASE("phantom invariants: nonnegative, mask iff label, contrast floor") {
    auto phantoms = data::generate_phantoms(24, 64, 64, 5, 0.6, 0.4);
    int lesions = 0;
    for (const auto& p : phantoms) {
        double mask_sum = 0, lesion_mean = 0;
        for (int64_t i = 0; i < p.image.size(); ++i) {
            REQUIRE(p.image[i] >= 0.0);
            REQUIRE(p.clean[i] >= 0.0);
            REQUIRE((p.mask[i] == 0.0 || p.mask[i] == 1.0));
            if (p.mask[i] == 1.0) {
                mask_sum += 1;
                lesion_mean += p.clean[i];
            }
        }
        REQUIRE((mask_sum > 0) == (p.class_label == 1));
        if (p.class_label == 1) {
            ++lesions;
            lesion_mean /= mask_sum;
            REQUIRE(lesion_mean >= data::kMinLesionContrast * data::kBodyUptake);
        }
    }
    CHECK(lesions > 0);
    CHECK(lesions < 24);

    CHECK_THROWS_AS(data::generate_phantoms(1, 8, 32, 1, 0.5, 0.1), ConfigError);
    CHECK_THROWS_AS(data::generate_phantoms(1, 32, 32, 1, 1.5, 0.1), ConfigError);
    CHECK_THROWS_AS(data::generate_phantoms(1, 32, 32, 1, 0.5, -0.1), ConfigError);
}

TEST_CASE("split: exact sizes, degenerate fractions, determinism") {
    auto dataset = data::generate_phantoms(100, 16, 16, 3, 0.5, 0.1);
    auto parts = data::split(dataset, {0.7, 0.15, 0.15, 4});
    CHECK(parts.train.size() == 70);
    CHECK(parts.validation.size() == 15);
    CHECK(parts.test.size() == 15);

    auto all_train = data::split(dataset, {1.0, 0.0, 0.0, 4});
    CHECK(all_train.train.size() == 100);
    CHECK(all_train.validation.empty());
    CHECK(all_train.test.empty());

    CHECK_THROWS_AS(data::split(dataset, {0.5, 0.1, 0.1, 4}), ConfigError);
    CHECK_THROWS_AS(data::split({}, {0.7, 0.15, 0.15, 4}), ConfigError);
}

TEST_CASE("split survives rounding overshoot on tiny sets") {
    auto dataset = data::generate_phantoms(3, 16, 16, 7, 0.5, 0.0);
    // llround(1.5) twice would claim 4 of 3 samples
    auto parts = data::split(dataset, {0.0, 0.5, 0.5, 2});
    CHECK(parts.train.size() + parts.validation.size() + parts.test.size() == 3);
}

TEST_CASE("split partitions are disjoint and exhaustive for random specs") {
    Rng rng(31);
    for (int round = 0; round < 20; ++round) {
        int64_t n = 5 + static_cast<int64_t>(rng.uniform() * 60);
        double a = rng.uniform(), b = rng.uniform(), c = rng.uniform();
        double sum = a + b + c;
        data::SplitSpec spec{a / sum, b / sum, c / sum, rng.next_u64()};

        auto dataset = data::generate_phantoms(n, 16, 16, round, 0.5, 0.0);
        // tag each sample through the pixel at (0,0); the generator leaves the
        // background at zero there for these body sizes
        for (int64_t i = 0; i < n; ++i) dataset[static_cast<size_t>(i)].image[0] = double(i) + 1;
        auto parts = data::split(dataset, spec);
        REQUIRE(parts.train.size() + parts.validation.size() + parts.test.size() ==
                static_cast<size_t>(n));
        std::set<double> seen;
        for (const auto* subset : {&parts.train, &parts.validation, &parts.test}) {
            for (const auto& s : *subset) {
                REQUIRE(seen.insert(s.image[0]).second);  // disjoint
            }
        }
        REQUIRE(seen.size() == static_cast<size_t>(n));  // exhaustive
    }
}

TEST_CASE("kfold: balanced folds, coverage, bounds") {
    auto plan = data::kfold(10, 5, 3);
    for (const auto& fold : plan.folds) CHECK(fold.size() == 2);

    auto plan11 = data::kfold(11, 5, 3);
    std::multiset<size_t> sizes;
    for (const auto& fold : plan11.folds) sizes.insert(fold.size());
    CHECK(sizes == std::multiset<size_t>{3, 2, 2, 2, 2});

    Rng rng(17);
    for (int round = 0; round < 15; ++round) {
        int64_t n = 4 + static_cast<int64_t>(rng.uniform() * 50);
        int64_t k = 2 + static_cast<int64_t>(rng.uniform() * (n - 2));
        auto p = data::kfold(n, k, rng.next_u64());
        std::set<int64_t> seen;
        size_t min_size = SIZE_MAX, max_size = 0;
        for (const auto& fold : p.folds) {
            min_size = std::min(min_size, fold.size());
            max_size = std::max(max_size, fold.size());
            for (int64_t idx : fold) REQUIRE(seen.insert(idx).second);
        }
        REQUIRE(seen.size() == static_cast<size_t>(n));
        REQUIRE(max_size - min_size <= 1);
    }

    CHECK_THROWS_AS(data::kfold(10, 1, 3), ConfigError);
    CHECK_THROWS_AS(data::kfold(10, 11, 3), ConfigError);
}

TEST_CASE("batches: chunk sizes, coverage, per-epoch reshuffling") {
    auto plan = data::batches(16, 4, 9, 0);
    REQUIRE(plan.size() == 4);
    for (const auto& b : plan) CHECK(b.size() == 4);

    auto ragged = data::batches(10, 4, 9, 0);
    REQUIRE(ragged.size() == 3);
    CHECK(ragged[0].size() == 4);
    CHECK(ragged[2].size() == 2);

    std::set<int64_t> seen;
    for (const auto& b : ragged) {
        for (int64_t idx : b) REQUIRE(seen.insert(idx).second);
    }
    CHECK(seen.size() == 10);

    auto epoch0 = data::batches(32, 8, 9, 0);
    auto epoch1 = data::batches(32, 8, 9, 1);
    auto epoch0_again = data::batches(32, 8, 9, 0);
    CHECK(epoch0 == epoch0_again);
    CHECK(epoch0 != epoch1);
}

TEST_CASE("pgm round trip stays within the quantization bound") {
    fs::path dir = fs::temp_directory_path() / "petnet_test_pgm";
    fs::create_directories(dir);

    Tensor zero = Tensor::zeros(Shape{1, 3, 3});
    data::write_pgm(zero, dir / "zero.pgm", 1.0);
    Tensor read_zero = data::read_pgm(dir / "zero.pgm");
    for (double v : read_zero.values()) REQUIRE(v == 0.0);

    Rng rng(12);
    Tensor img = Tensor::zeros(Shape{1, 5, 7});
    for (int64_t i = 0; i < img.size(); ++i) img[i] = rng.uniform(0, 4);
    double scale = 4.0;
    data::write_pgm(img, dir / "img.pgm", scale);
    Tensor back = data::read_pgm(dir / "img.pgm");
    REQUIRE(back.shape() == img.shape());
    for (int64_t i = 0; i < img.size(); ++i) {
        REQUIRE(std::abs(back[i] * scale - img[i]) <= scale / 2.0 / 65535.0 + 1e-12);
    }
    fs::remove_all(dir);
}

TEST_CASE("pgm parser handles a hand-built fixture and rejects malformed files") {
    fs::path dir = fs::temp_directory_path() / "petnet_test_pgm2";
    fs::create_directories(dir);

    {
        std::ofstream f(dir / "fixture.pgm", std::ios::binary);
        f << "P5\n# comment line\n2 2\n65535\n";
        const unsigned char payload[8] = {0x00, 0x00, 0x80, 0x00, 0xFF, 0xFF, 0x00, 0x01};
        f.write(reinterpret_cast<const char*>(payload), 8);
    }
    Tensor t = data::read_pgm(dir / "fixture.pgm");
    REQUIRE(t.shape() == Shape{1, 2, 2});
    CHECK(t[0] == 0.0);
    CHECK(t[1] == doctest::Approx(32768.0 / 65535.0).epsilon(1e-12));
    CHECK(t[2] == 1.0);
    CHECK(t[3] == doctest::Approx(1.0 / 65535.0).epsilon(1e-12));

    // 8-bit payloads (maxval <= 255) are one byte per pixel
    {
        std::ofstream f(dir / "byte.pgm", std::ios::binary);
        f << "P5\n2 1\n255\n";
        const unsigned char payload[2] = {0x00, 0xFF};
        f.write(reinterpret_cast<const char*>(payload), 2);
    }
    Tensor byte_img = data::read_pgm(dir / "byte.pgm");
    REQUIRE(byte_img.shape() == Shape{1, 1, 2});
    CHECK(byte_img[0] == 0.0);
    CHECK(byte_img[1] == 1.0);

    {
        std::ofstream f(dir / "bad_magic.pgm", std::ios::binary);
        f << "P2\n2 2\n255\n0 0 0 0\n";
    }
    CHECK_THROWS_AS(data::read_pgm(dir / "bad_magic.pgm"), FormatError);

    {
        std::ofstream f(dir / "truncated.pgm", std::ios::binary);
        f << "P5\n4 4\n65535\n";
        f.put(0);
    }
    CHECK_THROWS_AS(data::read_pgm(dir / "truncated.pgm"), FormatError);

    CHECK_THROWS_AS(data::read_pgm(dir / "missing.pgm"), FormatError);

    // negative values are not representable
    Tensor neg = Tensor::create(Shape{1, 1, 1}, {-1});
    CHECK_THROWS_AS(data::write_pgm(neg, dir / "neg.pgm", 1.0), NumericError);
    fs::remove_all(dir);
}

TEST_CASE("dataset write/read round trip preserves structure and labels") {
    fs::path dir = fs::temp_directory_path() / "petnet_test_dataset";
    fs::remove_all(dir);
    auto dataset = data::generate_phantoms(5, 16, 16, 77, 0.6, 0.2);
    data::write_dataset(dataset, dir);
    CHECK(fs::exists(dir / "manifest.csv"));
    CHECK(fs::exists(dir / "sample_0000_image.pgm"));
    CHECK(fs::exists(dir / "sample_0004_clean.pgm"));

    auto loaded = data::read_dataset(dir);
    REQUIRE(loaded.size() == dataset.size());
    for (size_t i = 0; i < dataset.size(); ++i) {
        REQUIRE(loaded[i].class_label == dataset[i].class_label);
        REQUIRE(loaded[i].mask.values() == dataset[i].mask.values());
        for (int64_t q = 0; q < dataset[i].image.size(); ++q) {
            REQUIRE(std::abs(loaded[i].image[q] - dataset[i].image[q]) <=
                    data::kPhantomPgmScale / 2.0 / 65535.0 + 1e-12);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("rng stream is the documented splitmix64 sequence") {
    // first outputs of splitmix64 seeded with 0 (published reference values)
    Rng rng(0);
    CHECK(rng.next_u64() == 0xE220A8397B1DCDAFULL);
    CHECK(rng.next_u64() == 0x6E789E6AA1B965F4ULL);
    CHECK(rng.next_u64() == 0x06C45D188009454FULL);
}
