#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "petnet/tensor.hpp"

namespace petnet::data {

// Synthetic PET-like sample: an elliptical body of moderate uptake on a zero
// background, optionally containing 1-3 bright circular lesions. `clean` is
// the Gaussian-blurred noise-free image, `image` adds signal-dependent noise.
struct PhantomSample {
    Tensor image;  // 1 x H x W, noisy, >= 0
    Tensor mask;   // 1 x H x W, {0, 1} lesion indicator (pre-blur geometry)
    Tensor clean;  // 1 x H x W, noise-free target, >= 0
    int64_t class_label = 0;  // 0 = no lesion, 1 = lesion
};

// Generator constants. Lesion uptake is kept at >= 3x the body level so the
// blurred lesion interior still clears the 2x contrast floor.
inline constexpr double kBodyUptake = 1.0;
inline constexpr double kMinLesionContrast = 2.0;

// Fixed linear scale used when phantom images are stored as 16-bit PGM.
inline constexpr double kPhantomPgmScale = 8.0;

std::vector<PhantomSample> generate_phantoms(int64_t count, int64_t height, int64_t width,
                                             uint64_t seed, double lesion_probability,
                                             double noise_level);

struct SplitSpec {
    double train = 0.7;
    double validation = 0.15;
    double test = 0.15;
    uint64_t seed = 0;
};

struct SplitResult {
    std::vector<PhantomSample> train;
    std::vector<PhantomSample> validation;
    std::vector<PhantomSample> test;
};

// Seeded shuffle then contiguous slicing by rounded counts; the rounding
// remainder goes to train. Subsets are disjoint and exhaustive.
SplitResult split(const std::vector<PhantomSample>& dataset, const SplitSpec& spec);

struct FoldPlan {
    int64_t k = 0;
    std::vector<std::vector<int64_t>> folds;  // disjoint index lists, sizes differ by <= 1
    uint64_t seed = 0;
};

FoldPlan kfold(int64_t dataset_size, int64_t k, uint64_t seed);

// Per-epoch index batches: shuffle keyed by (seed, epoch_index), then chunks
// of batch_size with the last batch possibly partial.
std::vector<std::vector<int64_t>> batches(int64_t dataset_size, int64_t batch_size, uint64_t seed,
                                          int64_t epoch_index);

// Binary 16-bit PGM (P5, maxval 65535, big-endian pixels). Values are
// linearly scaled by max_value_scale and clamped to [0, 1] before
// quantization; read_pgm returns values in [0, 1].
void write_pgm(const Tensor& image, const std::filesystem::path& path, double max_value_scale);
Tensor read_pgm(const std::filesystem::path& path);

// Dataset manifest: CSV `index,image_path,mask_path,class_label,clean_path`,
// paths relative to the manifest's directory.
void write_dataset(const std::vector<PhantomSample>& dataset, const std::filesystem::path& dir);
std::vector<PhantomSample> read_dataset(const std::filesystem::path& dir);

}  // namespace petnet::data
