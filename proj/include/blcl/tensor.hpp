#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <vector>

namespace blcl {

// Dense float tensor in NCHW layout. Feature maps and parameter gradients all
// use this one shape-tagged buffer type.
struct Tensor4 {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> v;

  Tensor4() = default;
  Tensor4(int n_, int c_, int h_, int w_)
      : n(n_), c(c_), h(h_), w(w_),
        v(static_cast<std::size_t>(n_) * c_ * h_ * w_, 0.0f) {}

  std::size_t numel() const { return v.size(); }

  float& at(int in, int ic, int ih, int iw) {
    return v[((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw];
  }
  float at(int in, int ic, int ih, int iw) const {
    return v[((static_cast<std::size_t>(in) * c + ic) * h + ih) * w + iw];
  }

  float* sample(int in) { return v.data() + static_cast<std::size_t>(in) * c * h * w; }
  const float* sample(int in) const {
    return v.data() + static_cast<std::size_t>(in) * c * h * w;
  }

  void zero() { std::fill(v.begin(), v.end(), 0.0f); }

  bool all_finite() const {
    for (float x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

// Row-major matrix view used for logits/embeddings at the model boundary.
struct Mat2 {
  int rows = 0, cols = 0;
  std::vector<float> v;

  Mat2() = default;
  Mat2(int r, int c) : rows(r), cols(c), v(static_cast<std::size_t>(r) * c, 0.0f) {}

  float& at(int r, int c) { return v[static_cast<std::size_t>(r) * cols + c]; }
  float at(int r, int c) const { return v[static_cast<std::size_t>(r) * cols + c]; }

  bool all_finite() const {
    for (float x : v)
      if (!std::isfinite(x)) return false;
    return true;
  }
};

}  // namespace blcl
