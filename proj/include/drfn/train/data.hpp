#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "drfn/io/image.hpp"
#include "drfn/rng.hpp"
#include "drfn/tensor.hpp"

namespace drfn {

// Mask value excluded from loss and metrics (padding, unlabeled pixels).
inline constexpr int kIgnoreLabel = 255;

struct Sample {
    Tensor image;            // 3 x H x W, intensities in [0, 1]
    std::vector<int> mask;   // H * W labels, row-major
    std::size_t height() const { return image.dim(1); }
    std::size_t width() const { return image.dim(2); }
};

Sample make_sample(const Image8& rgb, const Image8& mask);
Tensor image_to_tensor(const Image8& rgb);

// Reads a synthdoc-format directory: manifest.json order when present,
// otherwise img_*.png / mask_*.png pairs sorted by name.
// Mask values must be class indices < num_classes or kIgnoreLabel.
std::vector<Sample> load_dataset(const std::filesystem::path& dir, std::size_t num_classes = 4);

std::size_t round_up(std::size_t n, std::size_t multiple);

// Pads bottom/right to a multiple of `multiple`; padded pixels get `fill` in
// the image and kIgnoreLabel in the mask.
Sample pad_sample(const Sample& s, std::size_t multiple = 16, double fill = 1.0);

// Stacks equally sized samples into N x 3 x H x W plus flat labels.
Tensor stack_images(const std::vector<const Sample*>& batch);
std::vector<int> stack_masks(const std::vector<const Sample*>& batch);

struct AugmentConfig {
    double hflip_prob = 0.5;
    double vflip_prob = 0.5;
    double crop_ratio = 0.7;
    std::size_t height = 64;  // train resolution
    std::size_t width = 64;

    // resize only, no flips or crops
    static AugmentConfig identity(std::size_t height, std::size_t width);
    void validate() const;
};

// The random decisions of one augmentation, separated so tests can force them.
struct AugmentDraw {
    bool hflip = false;
    bool vflip = false;
    std::size_t crop_y = 0;
    std::size_t crop_x = 0;
    std::size_t crop_h = 0;
    std::size_t crop_w = 0;
};

AugmentDraw draw_augment(const AugmentConfig& cfg, std::size_t height, std::size_t width, CounterRng& rng);
// hflip -> vflip -> crop -> resize to cfg resolution (bilinear image, nearest mask).
Sample apply_augment(const Sample& s, const AugmentDraw& d, const AugmentConfig& cfg);
Sample augment(const Sample& s, const AugmentConfig& cfg, CounterRng& rng);

}  // namespace drfn
