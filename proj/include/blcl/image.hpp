#pragma once

#include <string>
#include <vector>

#include "blcl/rng.hpp"

namespace blcl::data {

// Dense HWC image, values in [0, 1].
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<float> px;

  Image() = default;
  Image(int h_, int w_, int c_)
      : h(h_), w(w_), c(c_), px(static_cast<std::size_t>(h_) * w_ * c_, 0.0f) {}

  float& at(int y, int x, int ch) {
    return px[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
  float at(int y, int x, int ch) const {
    return px[(static_cast<std::size_t>(y) * w + x) * c + ch];
  }
};

struct LabeledImage {
  Image image;
  int label = -1;
  std::string id;
};

// Class-balancing augmentation settings; the transform magnitudes are the
// tuned values the pipeline was calibrated with.
struct AugmentationPolicy {
  int target_per_class = 1000;
  double brightness = 0.5;
  double hue = 0.3;
  int blur_kernel_x = 5;
  int blur_kernel_y = 9;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 5.0;
  double sharpness_factor = 2.0;
  double sharpness_prob = 0.5;
  double flip_prob = 0.4;
};

// factor 0 = black, 1 = original; values clamped to [0, 1]
void adjust_brightness(Image& img, double factor);

// delta in turns of the hue circle, in [-0.5, 0.5]; RGB images only
void adjust_hue(Image& img, double delta);

// separable Gaussian blur with per-axis kernel sizes (odd), replicate borders
void gaussian_blur(Image& img, int kx, int ky, double sigma);

// factor 0 = smoothed, 1 = original, 2 = doubled edge contrast
void adjust_sharpness(Image& img, double factor);

void flip_horizontal(Image& img);
void flip_vertical(Image& img);

// One randomly parameterized pass of the full pipeline: color jitter
// (brightness, hue), blur, sharpness, flips, with independent draws.
Image augment_once(const Image& src, const AugmentationPolicy& policy, Rng& rng);

// Grows one class's sample list to max(current, target_per_class). Originals
// are returned verbatim and first; synthesized samples transform randomly
// drawn originals and carry derived ids. Deterministic under seed.
std::vector<LabeledImage> augment_balance(const std::vector<LabeledImage>& samples,
                                          const AugmentationPolicy& policy,
                                          std::uint64_t seed);

}  // namespace blcl::data
