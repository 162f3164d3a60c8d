#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "blcl/rng.hpp"
#include "blcl/tensor.hpp"

namespace blcl::nn {

// Handle to one named parameter array. Buffers (normalization running stats)
// are saved, loaded and averaged but never optimized.
struct ParamRef {
  std::string name;
  std::vector<float>* value = nullptr;
  std::vector<float>* grad = nullptr;
  std::vector<int> shape;
  bool is_buffer = false;
  bool trainable = true;
};

class Conv2d {
 public:
  Conv2d(int in_ch, int out_ch, int kernel, int stride, int pad);

  void init(Rng& rng);  // He-normal
  Tensor4 forward(const Tensor4& x, bool keep_cache);
  Tensor4 backward(const Tensor4& dy);
  void collect(const std::string& prefix, bool trainable,
               std::vector<ParamRef>& out);

  int in_ch, out_ch, kernel, stride, pad;
  std::vector<float> w;   // [out_ch][in_ch * k * k]
  std::vector<float> dw;

  int out_size(int in) const { return (in + 2 * pad - kernel) / stride + 1; }

 private:
  Eigen::MatrixXf cols_;  // cached im2col of the last forward input
  int in_n_ = 0, in_h_ = 0, in_w_ = 0, out_h_ = 0, out_w_ = 0;
};

class BatchNorm2d {
 public:
  explicit BatchNorm2d(int channels, float momentum = 0.1f, float eps = 1e-5f);

  Tensor4 forward(const Tensor4& x, bool train);
  Tensor4 backward(const Tensor4& dy);
  void collect(const std::string& prefix, bool trainable,
               std::vector<ParamRef>& out);

  int channels;
  float momentum, eps;
  std::vector<float> gamma, beta, dgamma, dbeta;
  std::vector<float> running_mean, running_var;

 private:
  Tensor4 xhat_;
  std::vector<float> inv_std_;
};

class Linear {
 public:
  Linear(int in_features, int out_features);

  void init(Rng& rng);
  Mat2 forward(const Mat2& x, bool keep_cache);
  Mat2 backward(const Mat2& dy);
  void collect(const std::string& prefix, bool trainable,
               std::vector<ParamRef>& out);

  int in_features, out_features;
  std::vector<float> w;  // [out][in], row-major
  std::vector<float> b;
  std::vector<float> dw, db;

 private:
  Mat2 x_;
};

// NCHW -> N x C mean over the spatial extent
Mat2 global_avg_pool(const Tensor4& x);
Tensor4 global_avg_pool_backward(const Mat2& dy, int h, int w);

void relu_inplace(Tensor4& x, std::vector<char>* mask);
void relu_backward_inplace(Tensor4& dy, const std::vector<char>& mask);

// conv + batchnorm + relu, used for the stem and projection layers
struct ConvUnit {
  Conv2d conv;
  BatchNorm2d bn;
  std::vector<char> mask;

  ConvUnit(int in_ch, int out_ch, int kernel, int stride, int pad)
      : conv(in_ch, out_ch, kernel, stride, pad), bn(out_ch) {}

  Tensor4 forward(const Tensor4& x, bool train);
  Tensor4 backward(const Tensor4& dy);
  void init(Rng& rng) { conv.init(rng); }
  void collect(const std::string& prefix, bool trainable,
               std::vector<ParamRef>& out);
};

// Residual block with one or two 3x3 conv+norm pairs. The shortcut is the
// identity when shapes allow, otherwise a strided 1x1 conv + norm.
struct BasicBlock {
  int conv_count;  // 1 or 2
  Conv2d conv1;
  BatchNorm2d bn1;
  std::optional<Conv2d> conv2;
  std::optional<BatchNorm2d> bn2;
  std::optional<Conv2d> sc_conv;
  std::optional<BatchNorm2d> sc_bn;

  BasicBlock(int in_ch, int out_ch, int stride, int convs);

  Tensor4 forward(const Tensor4& x, bool train);
  Tensor4 backward(const Tensor4& dy);
  void init(Rng& rng);
  void collect(const std::string& prefix, bool trainable,
               std::vector<ParamRef>& out);

  int in_ch() const { return conv1.in_ch; }
  int out_ch() const { return conv_count == 2 ? conv2->out_ch : conv1.out_ch; }
  int stride() const { return conv1.stride; }

 private:
  std::vector<char> mask_mid_, mask_out_;
};

}  // namespace blcl::nn
