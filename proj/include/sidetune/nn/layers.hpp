// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sidetune/nn/module.hpp"

namespace sidetune::nn {

namespace detail {

inline void require_rank(const Shape& shape, std::size_t rank, const char* layer) {
  if (shape.size() != rank)
    fail(ErrorKind::ShapeError, std::string(layer) + " expects a rank-" + std::to_string(rank) + " input, got " +
                                    shape_string(shape));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear: (N, in) -> (N, out)

template <typename T>
class Linear final : public Module<T> {
 public:
  Linear(std::size_t in_features, std::size_t out_features, bool with_bias = true)
      : in_(in_features), out_(out_features), weight_({out_features, in_features}) {
    if (with_bias) bias_.emplace(Shape{out_features});
  }

  std::size_t in_features() const noexcept { return in_; }
  std::size_t out_features() const noexcept { return out_; }
  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>* bias() noexcept { return bias_ ? &*bias_ : nullptr; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    detail::require_rank(x.shape(), 2, "Linear");
    if (x.dim(1) != in_)
      fail(ErrorKind::DimensionMismatch,
           "Linear expects " + std::to_string(in_) + " input features, got " + std::to_string(x.dim(1)));
    const std::size_t n = x.dim(0);
    Tensor<T> y({n, out_});
    auto Y = as_matrix(y.data(), n, out_);
    Y.noalias() = as_matrix(x.data(), n, in_) * as_matrix(weight_.value.data(), out_, in_).transpose();
    if (bias_) Y.rowwise() += as_matrix(bias_->value.data(), 1, out_).row(0);
    if (mode == Mode::Train) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    const std::size_t n = input_.dim(0);
    auto G = as_matrix(g.data(), n, out_);
    as_matrix(weight_.grad.data(), out_, in_).noalias() += G.transpose() * as_matrix(input_.data(), n, in_);
    if (bias_) as_matrix(bias_->grad.data(), 1, out_) += G.colwise().sum();
    Tensor<T> dx({n, in_});
    as_matrix(dx.data(), n, in_).noalias() = G * as_matrix(weight_.value.data(), out_, in_);
    return dx;
  }

  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override {
    out.push_back({join_name(prefix, "weight"), &weight_});
    if (bias_) out.push_back({join_name(prefix, "bias"), &*bias_});
  }

  void reset_parameters(Rng& rng) override {
    fill_fan_in_uniform(weight_.value, in_, rng);
    if (bias_) fill_fan_in_uniform(bias_->value, in_, rng);
  }

 private:
  std::size_t in_, out_;
  Parameter<T> weight_;
  std::optional<Parameter<T>> bias_;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------
// Conv2d over NCHW. Dense (groups == 1) and depthwise (groups == channels).

struct Conv2dOptions {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;
  bool bias = false;
};

template <typename T>
class Conv2d final : public Module<T> {
 public:
  explicit Conv2d(Conv2dOptions opt)
      : opt_(opt), weight_({opt.out_channels, opt.in_channels / opt.groups, opt.kernel, opt.kernel}) {
    const bool depthwise = opt.groups == opt.in_channels && opt.groups == opt.out_channels;
    if (opt.groups != 1 && !depthwise)
      fail(ErrorKind::ConfigError, "Conv2d supports dense or depthwise convolution only");
    if (opt.kernel == 0 || opt.stride == 0) fail(ErrorKind::ConfigError, "Conv2d kernel and stride must be positive");
    depthwise_ = opt.groups > 1;
    if (opt.bias) bias_.emplace(Shape{opt.out_channels});
  }

  const Conv2dOptions& options() const noexcept { return opt_; }
  Parameter<T>& weight() noexcept { return weight_; }
  Parameter<T>* bias() noexcept { return bias_ ? &*bias_ : nullptr; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    detail::require_rank(x.shape(), 4, "Conv2d");
    if (x.dim(1) != opt_.in_channels)
      fail(ErrorKind::ShapeError, "Conv2d expects " + std::to_string(opt_.in_channels) + " channels, got " +
                                      std::to_string(x.dim(1)));
    const auto geo = geometry(x.shape());
    Tensor<T> y({geo.n, opt_.out_channels, geo.ho, geo.wo});
    if (depthwise_) {
      depthwise_forward(x, y, geo);
    } else {
      const std::size_t ckk = opt_.in_channels * opt_.kernel * opt_.kernel;
      const std::size_t hw_out = geo.ho * geo.wo;
      std::vector<T> col;
      auto W = as_matrix(weight_.value.data(), opt_.out_channels, ckk);
      for (std::size_t n = 0; n < geo.n; ++n) {
        const T* xn = x.data() + n * opt_.in_channels * geo.h * geo.w;
        auto Y = as_matrix(y.data() + n * opt_.out_channels * hw_out, opt_.out_channels, hw_out);
        if (is_pointwise()) {
          Y.noalias() = W * as_matrix(xn, opt_.in_channels, hw_out);
        } else {
          col.assign(ckk * hw_out, T(0));
          im2col(xn, col.data(), geo);
          Y.noalias() = W * as_matrix(col.data(), ckk, hw_out);
        }
      }
    }
    if (bias_) {
      const std::size_t hw_out = geo.ho * geo.wo;
      for (std::size_t n = 0; n < geo.n; ++n)
        for (std::size_t o = 0; o < opt_.out_channels; ++o) {
          T* p = y.data() + (n * opt_.out_channels + o) * hw_out;
          const T b = bias_->value[o];
          for (std::size_t i = 0; i < hw_out; ++i) p[i] += b;
        }
    }
    if (mode == Mode::Train) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    const auto geo = geometry(input_.shape());
    Tensor<T> dx(input_.shape());
    const std::size_t hw_out = geo.ho * geo.wo;
    if (bias_) {
      for (std::size_t n = 0; n < geo.n; ++n)
        for (std::size_t o = 0; o < opt_.out_channels; ++o) {
          const T* p = g.data() + (n * opt_.out_channels + o) * hw_out;
          T acc = 0;
          for (std::size_t i = 0; i < hw_out; ++i) acc += p[i];
          bias_->grad[o] += acc;
        }
    }
    if (depthwise_) {
      depthwise_backward(g, dx, geo);
      return dx;
    }
    const std::size_t ckk = opt_.in_channels * opt_.kernel * opt_.kernel;
    auto W = as_matrix(weight_.value.data(), opt_.out_channels, ckk);
    auto dW = as_matrix(weight_.grad.data(), opt_.out_channels, ckk);
    std::vector<T> col;
    RowMatrix<T> dcol;
    for (std::size_t n = 0; n < geo.n; ++n) {
      const T* xn = input_.data() + n * opt_.in_channels * geo.h * geo.w;
      T* dxn = dx.data() + n * opt_.in_channels * geo.h * geo.w;
      auto G = as_matrix(g.data() + n * opt_.out_channels * hw_out, opt_.out_channels, hw_out);
      if (is_pointwise()) {
        dW.noalias() += G * as_matrix(xn, opt_.in_channels, hw_out).transpose();
        as_matrix(dxn, opt_.in_channels, hw_out).noalias() = W.transpose() * G;
      } else {
        col.assign(ckk * hw_out, T(0));
        im2col(xn, col.data(), geo);
        dW.noalias() += G * as_matrix(col.data(), ckk, hw_out).transpose();
        dcol.noalias() = W.transpose() * G;
        col2im(dcol.data(), dxn, geo);
      }
    }
    return dx;
  }

  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override {
    out.push_back({join_name(prefix, "weight"), &weight_});
    if (bias_) out.push_back({join_name(prefix, "bias"), &*bias_});
  }

  void reset_parameters(Rng& rng) override {
    const std::size_t fan_in = (opt_.in_channels / opt_.groups) * opt_.kernel * opt_.kernel;
    fill_fan_in_uniform(weight_.value, fan_in, rng);
    if (bias_) fill_fan_in_uniform(bias_->value, fan_in, rng);
  }

 private:
  struct Geometry {
    std::size_t n, h, w, ho, wo;
  };

  bool is_pointwise() const noexcept { return opt_.kernel == 1 && opt_.stride == 1 && opt_.padding == 0; }

  Geometry geometry(const Shape& s) const {
    const std::size_t h = s[2], w = s[3];
    if (h + 2 * opt_.padding < opt_.kernel || w + 2 * opt_.padding < opt_.kernel)
      fail(ErrorKind::ShapeError, "Conv2d input " + shape_string(s) + " smaller than kernel");
    return {s[0], h, w, (h + 2 * opt_.padding - opt_.kernel) / opt_.stride + 1,
            (w + 2 * opt_.padding - opt_.kernel) / opt_.stride + 1};
  }

  // Input coordinate for output coordinate `o` and kernel tap `k`, or -1 when in padding.
  long source(std::size_t o, std::size_t k, std::size_t extent) const noexcept {
    const long i = static_cast<long>(o * opt_.stride + k) - static_cast<long>(opt_.padding);
    return (i < 0 || i >= static_cast<long>(extent)) ? -1 : i;
  }

  void im2col(const T* x, T* col, const Geometry& g) const {
    const std::size_t k = opt_.kernel, hw_out = g.ho * g.wo;
    for (std::size_t c = 0; c < opt_.in_channels; ++c)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          T* dst = col + ((c * k + ky) * k + kx) * hw_out;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = source(oy, ky, g.h);
            if (iy < 0) continue;
            const T* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = source(ox, kx, g.w);
              if (ix >= 0) dst[oy * g.wo + ox] = src[ix];
            }
          }
        }
  }

  void col2im(const T* col, T* dx, const Geometry& g) const {
    const std::size_t k = opt_.kernel, hw_out = g.ho * g.wo;
    for (std::size_t c = 0; c < opt_.in_channels; ++c)
      for (std::size_t ky = 0; ky < k; ++ky)
        for (std::size_t kx = 0; kx < k; ++kx) {
          const T* src = col + ((c * k + ky) * k + kx) * hw_out;
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const long iy = source(oy, ky, g.h);
            if (iy < 0) continue;
            T* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const long ix = source(ox, kx, g.w);
              if (ix >= 0) dst[ix] += src[oy * g.wo + ox];
            }
          }
        }
  }

  void depthwise_forward(const Tensor<T>& x, Tensor<T>& y, const Geometry& g) const {
    const std::size_t k = opt_.kernel, c_total = opt_.in_channels;
    for (std::size_t n = 0; n < g.n; ++n)
      for (std::size_t c = 0; c < c_total; ++c) {
        const T* xi = x.data() + (n * c_total + c) * g.h * g.w;
        const T* wk = weight_.value.data() + c * k * k;
        T* yo = y.data() + (n * c_total + c) * g.ho * g.wo;
        for (std::size_t oy = 0; oy < g.ho; ++oy)
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            T acc = 0;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = source(oy, ky, g.h);
              if (iy < 0) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ix = source(ox, kx, g.w);
                if (ix >= 0) acc += wk[ky * k + kx] * xi[static_cast<std::size_t>(iy) * g.w + ix];
              }
            }
            yo[oy * g.wo + ox] = acc;
          }
      }
  }

  void depthwise_backward(const Tensor<T>& gy, Tensor<T>& dx, const Geometry& g) {
    const std::size_t k = opt_.kernel, c_total = opt_.in_channels;
    for (std::size_t n = 0; n < g.n; ++n)
      for (std::size_t c = 0; c < c_total; ++c) {
        const T* xi = input_.data() + (n * c_total + c) * g.h * g.w;
        T* dxi = dx.data() + (n * c_total + c) * g.h * g.w;
        const T* wk = weight_.value.data() + c * k * k;
        T* dwk = weight_.grad.data() + c * k * k;
        const T* go = gy.data() + (n * c_total + c) * g.ho * g.wo;
        for (std::size_t oy = 0; oy < g.ho; ++oy)
          for (std::size_t ox = 0; ox < g.wo; ++ox) {
            const T gv = go[oy * g.wo + ox];
            if (gv == T(0)) continue;
            for (std::size_t ky = 0; ky < k; ++ky) {
              const long iy = source(oy, ky, g.h);
              if (iy < 0) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const long ix = source(ox, kx, g.w);
                if (ix < 0) continue;
                const std::size_t at = static_cast<std::size_t>(iy) * g.w + ix;
                dwk[ky * k + kx] += gv * xi[at];
                dxi[at] += gv * wk[ky * k + kx];
              }
            }
          }
      }
  }

  Conv2dOptions opt_;
  bool depthwise_ = false;
  Parameter<T> weight_;
  std::optional<Parameter<T>> bias_;
  Tensor<T> input_;
};

// ---------------------------------------------------------------------------
// BatchNorm2d. Train mode normalizes with batch statistics and updates the
// running estimates; Eval mode uses the running estimates only.

template <typename T>
class BatchNorm2d final : public Module<T> {
 public:
  explicit BatchNorm2d(std::size_t channels, double eps = 1e-5, double momentum = 0.1)
      : channels_(channels),
        eps_(eps),
        momentum_(momentum),
        gamma_({channels}),
        beta_({channels}),
        running_mean_({channels}, false),
        running_var_({channels}, false) {
    gamma_.value.fill(T(1));
    running_var_.value.fill(T(1));
  }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    detail::require_rank(x.shape(), 4, "BatchNorm2d");
    if (x.dim(1) != channels_) fail(ErrorKind::ShapeError, "BatchNorm2d channel mismatch");
    const std::size_t n = x.dim(0), hw = x.dim(2) * x.dim(3);
    Tensor<T> y(x.shape());
    if (mode == Mode::Eval) {
      for (std::size_t c = 0; c < channels_; ++c) {
        const double inv = 1.0 / std::sqrt(static_cast<double>(running_var_.value[c]) + eps_);
        const T scale = static_cast<T>(gamma_.value[c] * inv);
        const T shift = static_cast<T>(beta_.value[c] - running_mean_.value[c] * gamma_.value[c] * inv);
        for (std::size_t b = 0; b < n; ++b) {
          const T* xi = x.data() + (b * channels_ + c) * hw;
          T* yo = y.data() + (b * channels_ + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) yo[i] = xi[i] * scale + shift;
        }
      }
      return y;
    }
    const double count = static_cast<double>(n * hw);
    xhat_ = Tensor<T>(x.shape());
    inv_std_.assign(channels_, 0.0);
    for (std::size_t c = 0; c < channels_; ++c) {
      double sum = 0, sq = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* xi = x.data() + (b * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) sum += xi[i];
      }
      const double mean = sum / count;
      for (std::size_t b = 0; b < n; ++b) {
        const T* xi = x.data() + (b * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) sq += (xi[i] - mean) * (xi[i] - mean);
      }
      const double var = sq / count;
      const double inv = 1.0 / std::sqrt(var + eps_);
      inv_std_[c] = inv;
      for (std::size_t b = 0; b < n; ++b) {
        const T* xi = x.data() + (b * channels_ + c) * hw;
        T* xh = xhat_.data() + (b * channels_ + c) * hw;
        T* yo = y.data() + (b * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          xh[i] = static_cast<T>((xi[i] - mean) * inv);
          yo[i] = gamma_.value[c] * xh[i] + beta_.value[c];
        }
      }
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      running_mean_.value[c] = static_cast<T>((1 - momentum_) * running_mean_.value[c] + momentum_ * mean);
      running_var_.value[c] = static_cast<T>((1 - momentum_) * running_var_.value[c] + momentum_ * unbiased);
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    const std::size_t n = xhat_.dim(0), hw = xhat_.dim(2) * xhat_.dim(3);
    const double count = static_cast<double>(n * hw);
    Tensor<T> dx(xhat_.shape());
    for (std::size_t c = 0; c < channels_; ++c) {
      double sum_g = 0, sum_gx = 0;
      for (std::size_t b = 0; b < n; ++b) {
        const T* gi = g.data() + (b * channels_ + c) * hw;
        const T* xh = xhat_.data() + (b * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) {
          sum_g += gi[i];
          sum_gx += gi[i] * xh[i];
        }
      }
      gamma_.grad[c] += static_cast<T>(sum_gx);
      beta_.grad[c] += static_cast<T>(sum_g);
      const double k = gamma_.value[c] * inv_std_[c] / count;
      for (std::size_t b = 0; b < n; ++b) {
        const T* gi = g.data() + (b * channels_ + c) * hw;
        const T* xh = xhat_.data() + (b * channels_ + c) * hw;
        T* di = dx.data() + (b * channels_ + c) * hw;
        for (std::size_t i = 0; i < hw; ++i) di[i] = static_cast<T>(k * (count * gi[i] - sum_g - xh[i] * sum_gx));
      }
    }
    return dx;
  }

  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override {
    out.push_back({join_name(prefix, "weight"), &gamma_});
    out.push_back({join_name(prefix, "bias"), &beta_});
    out.push_back({join_name(prefix, "running_mean"), &running_mean_});
    out.push_back({join_name(prefix, "running_var"), &running_var_});
  }

  void reset_parameters(Rng&) override {
    gamma_.value.fill(T(1));
    beta_.value.zero();
    running_mean_.value.zero();
    running_var_.value.fill(T(1));
  }

 private:
  std::size_t channels_;
  double eps_, momentum_;
  Parameter<T> gamma_, beta_, running_mean_, running_var_;
  Tensor<T> xhat_;
  std::vector<double> inv_std_;
};

// ---------------------------------------------------------------------------
// Elementwise clamp activation: ReLU is [0, inf), ReLU6 is [0, 6].

template <typename T>
class Clamp final : public Module<T> {
 public:
  explicit Clamp(T upper = std::numeric_limits<T>::infinity()) : upper_(upper) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] = std::min(std::max(x[i], T(0)), upper_);
    if (mode == Mode::Train) input_ = x;
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = (input_[i] > T(0) && input_[i] < upper_) ? g[i] : T(0);
    return dx;
  }

 private:
  T upper_;
  Tensor<T> input_;
};

template <typename T>
ModulePtr<T> make_relu() {
  return std::make_unique<Clamp<T>>();
}
template <typename T>
ModulePtr<T> make_relu6() {
  return std::make_unique<Clamp<T>>(T(6));
}

// ---------------------------------------------------------------------------

template <typename T>
class MaxPool2d final : public Module<T> {
 public:
  MaxPool2d(std::size_t kernel, std::size_t stride, std::size_t padding)
      : kernel_(kernel), stride_(stride), padding_(padding) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    detail::require_rank(x.shape(), 4, "MaxPool2d");
    const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
    if (h + 2 * padding_ < kernel_ || w + 2 * padding_ < kernel_) fail(ErrorKind::ShapeError, "MaxPool2d input too small");
    const std::size_t ho = (h + 2 * padding_ - kernel_) / stride_ + 1, wo = (w + 2 * padding_ - kernel_) / stride_ + 1;
    Tensor<T> y({n, c, ho, wo});
    std::vector<std::size_t> arg(y.size());
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      const T* xi = x.data() + plane * h * w;
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t best_at = 0;
          for (std::size_t ky = 0; ky < kernel_; ++ky) {
            const long iy = static_cast<long>(oy * stride_ + ky) - static_cast<long>(padding_);
            if (iy < 0 || iy >= static_cast<long>(h)) continue;
            for (std::size_t kx = 0; kx < kernel_; ++kx) {
              const long ix = static_cast<long>(ox * stride_ + kx) - static_cast<long>(padding_);
              if (ix < 0 || ix >= static_cast<long>(w)) continue;
              const std::size_t at = static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix);
              if (xi[at] > best) {
                best = xi[at];
                best_at = at;
              }
            }
          }
          const std::size_t o = plane * ho * wo + oy * wo + ox;
          y[o] = best;
          arg[o] = plane * h * w + best_at;
        }
    }
    if (mode == Mode::Train) {
      argmax_ = std::move(arg);
      input_shape_ = x.shape();
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx(input_shape_);
    for (std::size_t i = 0; i < g.size(); ++i) dx[argmax_[i]] += g[i];
    return dx;
  }

 private:
  std::size_t kernel_, stride_, padding_;
  std::vector<std::size_t> argmax_;
  Shape input_shape_;
};

// (N, C, H, W) -> (N, C)
template <typename T>
class GlobalAvgPool final : public Module<T> {
 public:
  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    detail::require_rank(x.shape(), 4, "GlobalAvgPool");
    const std::size_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Tensor<T> y({n, c});
    for (std::size_t plane = 0; plane < n * c; ++plane) {
      const T* xi = x.data() + plane * hw;
      T acc = 0;
      for (std::size_t i = 0; i < hw; ++i) acc += xi[i];
      y[plane] = acc / static_cast<T>(hw);
    }
    if (mode == Mode::Train) input_shape_ = x.shape();
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx(input_shape_);
    const std::size_t hw = input_shape_[2] * input_shape_[3];
    for (std::size_t plane = 0; plane < g.size(); ++plane) {
      const T v = g[plane] / static_cast<T>(hw);
      std::fill_n(dx.data() + plane * hw, hw, v);
    }
    return dx;
  }

 private:
  Shape input_shape_;
};

/// Inverted dropout; identity in Eval mode. The mask stream is seeded explicitly.
template <typename T>
class Dropout final : public Module<T> {
 public:
  explicit Dropout(double p, std::uint64_t seed = 0) : p_(p), rng_(seed) {
    if (!(p >= 0.0 && p < 1.0)) fail(ErrorKind::ConfigError, "dropout probability must be in [0, 1)");
  }

  double probability() const noexcept { return p_; }
  void reseed(std::uint64_t seed) { rng_.seed(seed); }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    if (mode == Mode::Eval || p_ == 0.0) {
      if (mode == Mode::Train) mask_.assign(x.size(), T(1));
      return x;
    }
    const T keep_scale = static_cast<T>(1.0 / (1.0 - p_));
    mask_.resize(x.size());
    Tensor<T> y(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask_[i] = draw_unit(rng_) < p_ ? T(0) : keep_scale;
      y[i] = x[i] * mask_[i];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> dx(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] = g[i] * mask_[i];
    return dx;
  }

 private:
  double p_;
  Rng rng_;
  std::vector<T> mask_;
};

// ---------------------------------------------------------------------------

template <typename T>
class Sequential : public Module<T> {
 public:
  Sequential() = default;

  Module<T>& add(std::string name, ModulePtr<T> module) {
    children_.emplace_back(std::move(name), std::move(module));
    return *children_.back().second;
  }

  template <typename M, typename... Args>
  M& emplace(std::string name, Args&&... args) {
    auto module = std::make_unique<M>(std::forward<Args>(args)...);
    M& ref = *module;
    children_.emplace_back(std::move(name), std::move(module));
    return ref;
  }

  std::size_t size() const noexcept { return children_.size(); }
  Module<T>& at(std::size_t i) { return *children_.at(i).second; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) override {
    Tensor<T> h = x;
    for (auto& [name, child] : children_) h = child->forward(h, mode);
    return h;
  }

  Tensor<T> backward(const Tensor<T>& g) override {
    Tensor<T> d = g;
    for (auto it = children_.rbegin(); it != children_.rend(); ++it) d = it->second->backward(d);
    return d;
  }

  void collect_parameters(const std::string& prefix, std::vector<NamedParameter<T>>& out) override {
    for (auto& [name, child] : children_) child->collect_parameters(join_name(prefix, name), out);
  }

  void reset_parameters(Rng& rng) override {
    for (auto& [name, child] : children_) child->reset_parameters(rng);
  }

 private:
  std::vector<std::pair<std::string, ModulePtr<T>>> children_;
};

}  // namespace sidetune::nn
