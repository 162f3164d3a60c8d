#include "blcl/image.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace blcl::data {

namespace {

float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

void rgb_to_hsv(float r, float g, float b, float& h, float& s, float& v) {
  const float mx = std::max({r, g, b});
  const float mn = std::min({r, g, b});
  const float d = mx - mn;
  v = mx;
  s = mx > 0.0f ? d / mx : 0.0f;
  if (d <= 0.0f) {
    h = 0.0f;
    return;
  }
  if (mx == r)
    h = (g - b) / d;
  else if (mx == g)
    h = 2.0f + (b - r) / d;
  else
    h = 4.0f + (r - g) / d;
  h /= 6.0f;
  if (h < 0.0f) h += 1.0f;
}

void hsv_to_rgb(float h, float s, float v, float& r, float& g, float& b) {
  if (s <= 0.0f) {
    r = g = b = v;
    return;
  }
  h = h - std::floor(h);
  const float hh = h * 6.0f;
  const int i = std::min(5, static_cast<int>(hh));
  const float f = hh - i;
  const float p = v * (1.0f - s);
  const float q = v * (1.0f - s * f);
  const float t = v * (1.0f - s * (1.0f - f));
  switch (i) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
}

std::vector<float> gaussian_kernel(int size, double sigma) {
  std::vector<float> k(size);
  const int half = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    const double x = i - half;
    k[i] = static_cast<float>(std::exp(-x * x / (2.0 * sigma * sigma)));
    sum += k[i];
  }
  for (float& v : k) v = static_cast<float>(v / sum);
  return k;
}

int clamp_index(int i, int n) { return std::min(std::max(i, 0), n - 1); }

}  // namespace

void adjust_brightness(Image& img, double factor) {
  for (float& v : img.px) v = clamp01(static_cast<float>(v * factor));
}

void adjust_hue(Image& img, double delta) {
  if (img.c != 3) throw std::invalid_argument("adjust_hue: needs RGB image");
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x) {
      float h, s, v;
      rgb_to_hsv(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2), h, s, v);
      h += static_cast<float>(delta);
      hsv_to_rgb(h, s, v, img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2));
    }
}

void gaussian_blur(Image& img, int kx, int ky, double sigma) {
  if (kx % 2 == 0 || ky % 2 == 0)
    throw std::invalid_argument("gaussian_blur: kernel sizes must be odd");
  const auto kernel_x = gaussian_kernel(kx, sigma);
  const auto kernel_y = gaussian_kernel(ky, sigma);
  Image tmp = img;
  // horizontal pass
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        float acc = 0.0f;
        for (int t = 0; t < kx; ++t)
          acc += kernel_x[t] * img.at(y, clamp_index(x + t - kx / 2, img.w), ch);
        tmp.at(y, x, ch) = acc;
      }
  // vertical pass
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        float acc = 0.0f;
        for (int t = 0; t < ky; ++t)
          acc += kernel_y[t] * tmp.at(clamp_index(y + t - ky / 2, img.h), x, ch);
        img.at(y, x, ch) = acc;
      }
}

void adjust_sharpness(Image& img, double factor) {
  // 3x3 smoothing (center weight 5, sum 13) over the interior, borders kept,
  // then blend: out = smoothed + factor * (original - smoothed).
  Image smooth = img;
  static const float k[3][3] = {{1, 1, 1}, {1, 5, 1}, {1, 1, 1}};
  for (int y = 1; y + 1 < img.h; ++y)
    for (int x = 1; x + 1 < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch) {
        float acc = 0.0f;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            acc += k[dy + 1][dx + 1] * img.at(y + dy, x + dx, ch);
        smooth.at(y, x, ch) = acc / 13.0f;
      }
  for (std::size_t i = 0; i < img.px.size(); ++i)
    img.px[i] = clamp01(static_cast<float>(
        smooth.px[i] + factor * (img.px[i] - smooth.px[i])));
}

void flip_horizontal(Image& img) {
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w / 2; ++x)
      for (int ch = 0; ch < img.c; ++ch)
        std::swap(img.at(y, x, ch), img.at(y, img.w - 1 - x, ch));
}

void flip_vertical(Image& img) {
  for (int y = 0; y < img.h / 2; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int ch = 0; ch < img.c; ++ch)
        std::swap(img.at(y, x, ch), img.at(img.h - 1 - y, x, ch));
}

Image augment_once(const Image& src, const AugmentationPolicy& policy, Rng& rng) {
  Image out = src;
  adjust_brightness(out, rng.uniform(std::max(0.0, 1.0 - policy.brightness),
                                     1.0 + policy.brightness));
  if (out.c == 3) adjust_hue(out, rng.uniform(-policy.hue, policy.hue));
  gaussian_blur(out, policy.blur_kernel_x, policy.blur_kernel_y,
                rng.uniform(policy.blur_sigma_min, policy.blur_sigma_max));
  if (rng.bernoulli(policy.sharpness_prob))
    adjust_sharpness(out, policy.sharpness_factor);
  if (rng.bernoulli(policy.flip_prob)) flip_horizontal(out);
  if (rng.bernoulli(policy.flip_prob)) flip_vertical(out);
  return out;
}

std::vector<LabeledImage> augment_balance(const std::vector<LabeledImage>& samples,
                                          const AugmentationPolicy& policy,
                                          std::uint64_t seed) {
  if (samples.empty())
    throw std::invalid_argument("augment_balance: empty input class");
  if (policy.target_per_class < 1)
    throw std::invalid_argument("augment_balance: target_per_class must be >= 1");

  std::vector<LabeledImage> out = samples;
  const int missing = policy.target_per_class - static_cast<int>(samples.size());
  Rng rng(seed);
  for (int k = 0; k < missing; ++k) {
    const int pick = rng.uniform_int(0, static_cast<int>(samples.size()) - 1);
    LabeledImage synth;
    synth.image = augment_once(samples[pick].image, policy, rng);
    synth.label = samples[pick].label;
    synth.id = samples[pick].id + "#aug" + std::to_string(k);
    out.push_back(std::move(synth));
  }
  return out;
}

}  // namespace blcl::data
