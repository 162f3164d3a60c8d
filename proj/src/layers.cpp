#include "blcl/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace blcl::nn {

namespace {

using RowMajorMatrixXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// column col = ((n * out_h) + oy) * out_w + ox; row = (ic * k + ky) * k + kx
void im2col(const Tensor4& x, int kernel, int stride, int pad, int out_h,
            int out_w, Eigen::MatrixXf& cols) {
  const int rows = x.c * kernel * kernel;
  cols.resize(rows, static_cast<Eigen::Index>(x.n) * out_h * out_w);
  for (int n = 0; n < x.n; ++n) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const Eigen::Index col =
            (static_cast<Eigen::Index>(n) * out_h + oy) * out_w + ox;
        float* dst = cols.data() + col * rows;
        const int iy0 = oy * stride - pad;
        const int ix0 = ox * stride - pad;
        for (int ic = 0; ic < x.c; ++ic) {
          const float* src = x.v.data() +
                             (static_cast<std::size_t>(n) * x.c + ic) * x.h * x.w;
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = iy0 + ky;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ix0 + kx;
              *dst++ = (iy >= 0 && iy < x.h && ix >= 0 && ix < x.w)
                           ? src[iy * x.w + ix]
                           : 0.0f;
            }
          }
        }
      }
    }
  }
}

void col2im(const Eigen::MatrixXf& cols, int n_, int c_, int h_, int w_,
            int kernel, int stride, int pad, int out_h, int out_w, Tensor4& dx) {
  dx = Tensor4(n_, c_, h_, w_);
  const int rows = c_ * kernel * kernel;
  for (int n = 0; n < n_; ++n) {
    for (int oy = 0; oy < out_h; ++oy) {
      for (int ox = 0; ox < out_w; ++ox) {
        const Eigen::Index col =
            (static_cast<Eigen::Index>(n) * out_h + oy) * out_w + ox;
        const float* src = cols.data() + col * rows;
        const int iy0 = oy * stride - pad;
        const int ix0 = ox * stride - pad;
        for (int ic = 0; ic < c_; ++ic) {
          float* dst = dx.v.data() +
                       (static_cast<std::size_t>(n) * c_ + ic) * h_ * w_;
          for (int ky = 0; ky < kernel; ++ky) {
            const int iy = iy0 + ky;
            for (int kx = 0; kx < kernel; ++kx) {
              const int ix = ix0 + kx;
              if (iy >= 0 && iy < h_ && ix >= 0 && ix < w_)
                dst[iy * w_ + ix] += *src;
              ++src;
            }
          }
        }
      }
    }
  }
}

}  // namespace

Conv2d::Conv2d(int in_ch_, int out_ch_, int kernel_, int stride_, int pad_)
    : in_ch(in_ch_), out_ch(out_ch_), kernel(kernel_), stride(stride_), pad(pad_),
      w(static_cast<std::size_t>(out_ch_) * in_ch_ * kernel_ * kernel_, 0.0f),
      dw(w.size(), 0.0f) {}

void Conv2d::init(Rng& rng) {
  const double fan_in = static_cast<double>(in_ch) * kernel * kernel;
  const double stddev = std::sqrt(2.0 / fan_in);
  for (float& v : w) v = static_cast<float>(rng.normal(0.0, stddev));
}

Tensor4 Conv2d::forward(const Tensor4& x, bool keep_cache) {
  if (x.c != in_ch) throw std::invalid_argument("Conv2d: channel mismatch");
  in_n_ = x.n;
  in_h_ = x.h;
  in_w_ = x.w;
  out_h_ = out_size(x.h);
  out_w_ = out_size(x.w);
  im2col(x, kernel, stride, pad, out_h_, out_w_, cols_);

  const int rows = in_ch * kernel * kernel;
  Eigen::Map<const RowMajorMatrixXf> weight(w.data(), out_ch, rows);
  Eigen::MatrixXf y_mat = weight * cols_;  // out_ch x (n*oh*ow)

  Tensor4 y(x.n, out_ch, out_h_, out_w_);
  const Eigen::Index spatial = static_cast<Eigen::Index>(out_h_) * out_w_;
  for (int n = 0; n < x.n; ++n)
    for (Eigen::Index s = 0; s < spatial; ++s) {
      const Eigen::Index col = n * spatial + s;
      const float* src = y_mat.data() + col * out_ch;
      for (int oc = 0; oc < out_ch; ++oc)
        y.v[((static_cast<std::size_t>(n) * out_ch + oc) * spatial) + s] = src[oc];
    }
  if (!keep_cache) cols_.resize(0, 0);
  return y;
}

Tensor4 Conv2d::backward(const Tensor4& dy) {
  if (cols_.size() == 0)
    throw std::logic_error("Conv2d::backward without cached forward");
  const int rows = in_ch * kernel * kernel;
  const Eigen::Index spatial = static_cast<Eigen::Index>(out_h_) * out_w_;

  Eigen::MatrixXf dy_mat(out_ch, static_cast<Eigen::Index>(dy.n) * spatial);
  for (int n = 0; n < dy.n; ++n)
    for (Eigen::Index s = 0; s < spatial; ++s) {
      const Eigen::Index col = n * spatial + s;
      float* dst = dy_mat.data() + col * out_ch;
      for (int oc = 0; oc < out_ch; ++oc)
        dst[oc] = dy.v[((static_cast<std::size_t>(n) * out_ch + oc) * spatial) + s];
    }

  Eigen::Map<RowMajorMatrixXf> dweight(dw.data(), out_ch, rows);
  dweight.noalias() += dy_mat * cols_.transpose();

  Eigen::Map<const RowMajorMatrixXf> weight(w.data(), out_ch, rows);
  Eigen::MatrixXf dcols = weight.transpose() * dy_mat;

  Tensor4 dx;
  col2im(dcols, in_n_, in_ch, in_h_, in_w_, kernel, stride, pad, out_h_, out_w_, dx);
  cols_.resize(0, 0);
  return dx;
}

void Conv2d::collect(const std::string& prefix, bool trainable,
                     std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", &w, &dw, {out_ch, in_ch, kernel, kernel}, false,
                 trainable});
}

BatchNorm2d::BatchNorm2d(int channels_, float momentum_, float eps_)
    : channels(channels_), momentum(momentum_), eps(eps_),
      gamma(channels_, 1.0f), beta(channels_, 0.0f), dgamma(channels_, 0.0f),
      dbeta(channels_, 0.0f), running_mean(channels_, 0.0f),
      running_var(channels_, 1.0f) {}

Tensor4 BatchNorm2d::forward(const Tensor4& x, bool train) {
  if (x.c != channels) throw std::invalid_argument("BatchNorm2d: channel mismatch");
  Tensor4 y(x.n, x.c, x.h, x.w);
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  const std::size_t m = static_cast<std::size_t>(x.n) * plane;

  if (train) {
    xhat_ = Tensor4(x.n, x.c, x.h, x.w);
    inv_std_.assign(channels, 0.0f);
    for (int c = 0; c < channels; ++c) {
      double sum = 0.0, sq = 0.0;
      for (int n = 0; n < x.n; ++n) {
        const float* src = x.v.data() + (static_cast<std::size_t>(n) * x.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          sum += src[i];
          sq += static_cast<double>(src[i]) * src[i];
        }
      }
      const double mean = sum / static_cast<double>(m);
      const double var = std::max(0.0, sq / static_cast<double>(m) - mean * mean);
      const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
      inv_std_[c] = inv;
      const double unbiased = m > 1 ? var * static_cast<double>(m) / (m - 1) : var;
      running_mean[c] = (1.0f - momentum) * running_mean[c] +
                        momentum * static_cast<float>(mean);
      running_var[c] = (1.0f - momentum) * running_var[c] +
                       momentum * static_cast<float>(unbiased);
      const float fmean = static_cast<float>(mean);
      for (int n = 0; n < x.n; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * x.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i) {
          const float xh = (x.v[base + i] - fmean) * inv;
          xhat_.v[base + i] = xh;
          y.v[base + i] = gamma[c] * xh + beta[c];
        }
      }
    }
  } else {
    for (int c = 0; c < channels; ++c) {
      const float inv = 1.0f / std::sqrt(running_var[c] + eps);
      const float fmean = running_mean[c];
      for (int n = 0; n < x.n; ++n) {
        const std::size_t base = (static_cast<std::size_t>(n) * x.c + c) * plane;
        for (std::size_t i = 0; i < plane; ++i)
          y.v[base + i] = gamma[c] * (x.v[base + i] - fmean) * inv + beta[c];
      }
    }
  }
  return y;
}

Tensor4 BatchNorm2d::backward(const Tensor4& dy) {
  if (xhat_.numel() == 0)
    throw std::logic_error("BatchNorm2d::backward without cached forward");
  Tensor4 dx(dy.n, dy.c, dy.h, dy.w);
  const std::size_t plane = static_cast<std::size_t>(dy.h) * dy.w;
  const std::size_t m = static_cast<std::size_t>(dy.n) * plane;

  for (int c = 0; c < channels; ++c) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (int n = 0; n < dy.n; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * dy.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy.v[base + i];
        sum_dy_xhat += static_cast<double>(dy.v[base + i]) * xhat_.v[base + i];
      }
    }
    dbeta[c] += static_cast<float>(sum_dy);
    dgamma[c] += static_cast<float>(sum_dy_xhat);
    const float g_inv_m = gamma[c] * inv_std_[c] / static_cast<float>(m);
    const float fm = static_cast<float>(m);
    const float fsdy = static_cast<float>(sum_dy);
    const float fsdyx = static_cast<float>(sum_dy_xhat);
    for (int n = 0; n < dy.n; ++n) {
      const std::size_t base = (static_cast<std::size_t>(n) * dy.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i)
        dx.v[base + i] =
            g_inv_m * (fm * dy.v[base + i] - fsdy - xhat_.v[base + i] * fsdyx);
    }
  }
  xhat_ = Tensor4();
  return dx;
}

void BatchNorm2d::collect(const std::string& prefix, bool trainable,
                          std::vector<ParamRef>& out) {
  out.push_back({prefix + ".gamma", &gamma, &dgamma, {channels}, false, trainable});
  out.push_back({prefix + ".beta", &beta, &dbeta, {channels}, false, trainable});
  out.push_back({prefix + ".running_mean", &running_mean, nullptr, {channels},
                 true, false});
  out.push_back({prefix + ".running_var", &running_var, nullptr, {channels},
                 true, false});
}

Linear::Linear(int in_features_, int out_features_)
    : in_features(in_features_), out_features(out_features_),
      w(static_cast<std::size_t>(out_features_) * in_features_, 0.0f),
      b(out_features_, 0.0f), dw(w.size(), 0.0f), db(out_features_, 0.0f) {}

void Linear::init(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  for (float& v : w) v = static_cast<float>(rng.uniform(-bound, bound));
  for (float& v : b) v = 0.0f;
}

Mat2 Linear::forward(const Mat2& x, bool keep_cache) {
  if (x.cols != in_features) throw std::invalid_argument("Linear: width mismatch");
  Mat2 y(x.rows, out_features);
  Eigen::Map<const RowMajorMatrixXf> xm(x.v.data(), x.rows, x.cols);
  Eigen::Map<const RowMajorMatrixXf> wm(w.data(), out_features, in_features);
  Eigen::Map<RowMajorMatrixXf> ym(y.v.data(), y.rows, y.cols);
  ym.noalias() = xm * wm.transpose();
  for (int r = 0; r < y.rows; ++r)
    for (int c = 0; c < y.cols; ++c) y.at(r, c) += b[c];
  if (keep_cache) x_ = x;
  return y;
}

Mat2 Linear::backward(const Mat2& dy) {
  if (x_.rows == 0) throw std::logic_error("Linear::backward without cached forward");
  Eigen::Map<const RowMajorMatrixXf> dym(dy.v.data(), dy.rows, dy.cols);
  Eigen::Map<const RowMajorMatrixXf> xm(x_.v.data(), x_.rows, x_.cols);
  Eigen::Map<RowMajorMatrixXf> dwm(dw.data(), out_features, in_features);
  dwm.noalias() += dym.transpose() * xm;
  for (int r = 0; r < dy.rows; ++r)
    for (int c = 0; c < dy.cols; ++c) db[c] += dy.at(r, c);

  Mat2 dx(x_.rows, in_features);
  Eigen::Map<const RowMajorMatrixXf> wm(w.data(), out_features, in_features);
  Eigen::Map<RowMajorMatrixXf> dxm(dx.v.data(), dx.rows, dx.cols);
  dxm.noalias() = dym * wm;
  x_ = Mat2();
  return dx;
}

void Linear::collect(const std::string& prefix, bool trainable,
                     std::vector<ParamRef>& out) {
  out.push_back({prefix + ".w", &w, &dw, {out_features, in_features}, false,
                 trainable});
  out.push_back({prefix + ".b", &b, &db, {out_features}, false, trainable});
}

Mat2 global_avg_pool(const Tensor4& x) {
  Mat2 y(x.n, x.c);
  const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
  for (int n = 0; n < x.n; ++n)
    for (int c = 0; c < x.c; ++c) {
      const float* src = x.v.data() + (static_cast<std::size_t>(n) * x.c + c) * plane;
      double sum = 0.0;
      for (std::size_t i = 0; i < plane; ++i) sum += src[i];
      y.at(n, c) = static_cast<float>(sum / static_cast<double>(plane));
    }
  return y;
}

Tensor4 global_avg_pool_backward(const Mat2& dy, int h, int w) {
  Tensor4 dx(dy.rows, dy.cols, h, w);
  const float scale = 1.0f / static_cast<float>(h * w);
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  for (int n = 0; n < dy.rows; ++n)
    for (int c = 0; c < dy.cols; ++c) {
      float* dst = dx.v.data() + (static_cast<std::size_t>(n) * dy.cols + c) * plane;
      const float g = dy.at(n, c) * scale;
      for (std::size_t i = 0; i < plane; ++i) dst[i] = g;
    }
  return dx;
}

void relu_inplace(Tensor4& x, std::vector<char>* mask) {
  if (mask) mask->assign(x.numel(), 0);
  for (std::size_t i = 0; i < x.v.size(); ++i) {
    if (x.v[i] > 0.0f) {
      if (mask) (*mask)[i] = 1;
    } else {
      x.v[i] = 0.0f;
    }
  }
}

void relu_backward_inplace(Tensor4& dy, const std::vector<char>& mask) {
  for (std::size_t i = 0; i < dy.v.size(); ++i)
    if (!mask[i]) dy.v[i] = 0.0f;
}

Tensor4 ConvUnit::forward(const Tensor4& x, bool train) {
  Tensor4 y = bn.forward(conv.forward(x, train), train);
  relu_inplace(y, train ? &mask : nullptr);
  return y;
}

Tensor4 ConvUnit::backward(const Tensor4& dy) {
  Tensor4 d = dy;
  relu_backward_inplace(d, mask);
  return conv.backward(bn.backward(d));
}

void ConvUnit::collect(const std::string& prefix, bool trainable,
                       std::vector<ParamRef>& out) {
  conv.collect(prefix + ".conv", trainable, out);
  bn.collect(prefix + ".bn", trainable, out);
}

BasicBlock::BasicBlock(int in_ch_, int out_ch_, int stride_, int convs)
    : conv_count(convs), conv1(in_ch_, out_ch_, 3, stride_, 1), bn1(out_ch_) {
  if (convs < 1 || convs > 2)
    throw std::invalid_argument("BasicBlock: conv_count must be 1 or 2");
  if (convs == 2) {
    conv2.emplace(out_ch_, out_ch_, 3, 1, 1);
    bn2.emplace(out_ch_);
  }
  if (in_ch_ != out_ch_ || stride_ != 1) {
    sc_conv.emplace(in_ch_, out_ch_, 1, stride_, 0);
    sc_bn.emplace(out_ch_);
  }
}

void BasicBlock::init(Rng& rng) {
  conv1.init(rng);
  if (conv2) conv2->init(rng);
  if (sc_conv) sc_conv->init(rng);
}

Tensor4 BasicBlock::forward(const Tensor4& x, bool train) {
  Tensor4 main = bn1.forward(conv1.forward(x, train), train);
  if (conv_count == 2) {
    relu_inplace(main, train ? &mask_mid_ : nullptr);
    main = bn2->forward(conv2->forward(main, train), train);
  }
  if (sc_conv) {
    Tensor4 sc = sc_bn->forward(sc_conv->forward(x, train), train);
    for (std::size_t i = 0; i < main.v.size(); ++i) main.v[i] += sc.v[i];
  } else {
    for (std::size_t i = 0; i < main.v.size(); ++i) main.v[i] += x.v[i];
  }
  relu_inplace(main, train ? &mask_out_ : nullptr);
  return main;
}

Tensor4 BasicBlock::backward(const Tensor4& dy) {
  Tensor4 ds = dy;
  relu_backward_inplace(ds, mask_out_);

  Tensor4 dx_main;
  if (conv_count == 2) {
    Tensor4 dmid = conv2->backward(bn2->backward(ds));
    relu_backward_inplace(dmid, mask_mid_);
    dx_main = conv1.backward(bn1.backward(dmid));
  } else {
    dx_main = conv1.backward(bn1.backward(ds));
  }
  if (sc_conv) {
    Tensor4 dx_sc = sc_conv->backward(sc_bn->backward(ds));
    for (std::size_t i = 0; i < dx_main.v.size(); ++i) dx_main.v[i] += dx_sc.v[i];
  } else {
    for (std::size_t i = 0; i < dx_main.v.size(); ++i) dx_main.v[i] += ds.v[i];
  }
  return dx_main;
}

void BasicBlock::collect(const std::string& prefix, bool trainable,
                         std::vector<ParamRef>& out) {
  conv1.collect(prefix + ".conv1", trainable, out);
  bn1.collect(prefix + ".bn1", trainable, out);
  if (conv2) {
    conv2->collect(prefix + ".conv2", trainable, out);
    bn2->collect(prefix + ".bn2", trainable, out);
  }
  if (sc_conv) {
    sc_conv->collect(prefix + ".sc_conv", trainable, out);
    sc_bn->collect(prefix + ".sc_bn", trainable, out);
  }
}

}  // namespace blcl::nn
