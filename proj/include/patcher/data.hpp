#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "patcher/png_io.hpp"
#include "patcher/rng.hpp"
#include "patcher/tensor.hpp"

namespace patcher {

// One segmentation example: image values in [0,1], mask strictly {0,1}.
struct Sample {
    std::string id;
    Tensor image;  // [C,H,W]
    Tensor mask;   // [1,H,W]
};

// Seeded synthetic dataset: dark noisy background plus bright ellipses whose
// union forms the mask. Identical specs produce bit-identical samples.
struct SynthSpec {
    uint64_t seed = 0;
    int64_t count = 16;
    int64_t size = 32;
    int64_t blobs_min = 1;
    int64_t blobs_max = 3;
    float noise = 0.05f;
    int64_t channels = 1;
};

// Train-time augmentation: uniform scale (bilinear image, nearest mask),
// then a random crop to `crop` pixels, zero-padding bottom/right first if
// the scaled image is smaller.
struct AugmentConfig {
    float scale_min = 0.7f;
    float scale_max = 2.0f;
    int64_t crop = 256;
};

// Loads paired `<stem>.png` files from images/masks directories, sorted by
// stem. Two-channel cases use suffixed grayscale pairs `<stem>_eadc.png` +
// `<stem>_dwi.png` sharing one `<stem>.png` mask. Mask pixels >= 128 map
// to 1. Throws DataError naming the stem on any per-file problem.
std::vector<Sample> load_dir(const std::filesystem::path& images_dir, const std::filesystem::path& masks_dir);

std::vector<Sample> synth_generate(const SynthSpec& spec);

Sample augment(const Sample& sample, const AugmentConfig& cfg, Rng& rng);

struct SplitResult {
    std::vector<Sample> train;
    std::vector<Sample> val;
    std::vector<Sample> test;
};

// Seeded shuffle then contiguous split by ratios (must sum to 1); every
// split must be non-empty.
SplitResult split(std::vector<Sample> samples, const std::array<double, 3>& ratios, uint64_t seed);

// Conversions between 8-bit images and tensors.
Tensor tensor_from_image(const ImageU8& img);                       // [C,H,W], /255
Tensor mask_from_image(const ImageU8& img);                         // [1,H,W], >=128 -> 1
ImageU8 gray_image_from_plane(const Tensor& plane, float scale);    // [1,H,W] or [H,W]; round(v*scale)

}  // namespace patcher
