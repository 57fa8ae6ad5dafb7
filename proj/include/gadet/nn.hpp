#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <thread>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "gadet/common.hpp"
#include "gadet/image.hpp"

namespace gadet::nn {

// Double precision throughout: gradient checks against central finite
// differences need headroom well below the 1e-3 gate.
using MatrixRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Single-sample CHW tensor.
struct Tensor {
  int c = 0, h = 0, w = 0;
  std::vector<double> v;

  Tensor() = default;
  Tensor(int c_, int h_, int w_, double fill = 0.0)
      : c(c_), h(h_), w(w_), v(static_cast<size_t>(c_) * h_ * w_, fill) {}

  int size() const { return c * h * w; }
  double& at(int ci, int yi, int xi) {
    return v[(static_cast<size_t>(ci) * h + yi) * w + xi];
  }
  double at(int ci, int yi, int xi) const {
    return v[(static_cast<size_t>(ci) * h + yi) * w + xi];
  }
};

// HWC float image in [0, 255] -> CHW tensor in [0, 1].
inline Tensor image_to_tensor(const FloatImage& img) {
  Tensor t(img.channels, img.height, img.width);
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x)
        t.at(c, y, x) = img.at(y, x, c) / 255.0;
  return t;
}

// Per-layer context saved during a taped forward pass, consumed LIFO by the
// backward pass.
struct Saved {
  std::vector<Tensor> tensors;
  std::vector<int> ints;
};

using Tape = std::vector<Saved>;

// Parameter-gradient accumulator keyed by parameter storage address. Each
// worker owns one; buffers are merged in worker order so training stays
// deterministic for a fixed worker count.
class GradAccum {
 public:
  std::vector<double>& for_param(const std::vector<double>& param) {
    auto& g = buf_[&param];
    if (g.size() != param.size()) g.assign(param.size(), 0.0);
    return g;
  }

  const std::vector<double>* find(const std::vector<double>& param) const {
    auto it = buf_.find(&param);
    return it == buf_.end() ? nullptr : &it->second;
  }

  void add(const GradAccum& other) {
    for (const auto& [key, grad] : other.buf_) {
      auto& mine = buf_[key];
      if (mine.size() != grad.size()) mine.assign(grad.size(), 0.0);
      for (size_t i = 0; i < grad.size(); ++i) mine[i] += grad[i];
    }
  }

  void scale(double s) {
    for (auto& [key, grad] : buf_)
      for (auto& g : grad) g *= s;
  }

  void clear() { buf_.clear(); }

 private:
  std::unordered_map<const void*, std::vector<double>> buf_;
};

class Layer {
 public:
  virtual ~Layer() = default;

  // tape == nullptr runs in inference mode.
  virtual Tensor forward(const Tensor& x, Tape* tape) const = 0;
  virtual Tensor backward(const Tensor& dy, Tape& tape, GradAccum& grads) const = 0;

  // Trainable parameters, in a stable order.
  virtual void collect_params(std::vector<std::vector<double>*>& out) {}
  // Parameters plus persistent buffers (moving statistics); serialization order.
  virtual void collect_state(std::vector<std::vector<double>*>& out) { collect_params(out); }

  virtual std::int64_t param_count() const { return 0; }
};

namespace detail {

inline Saved pop(Tape& tape) {
  if (tape.empty()) throw DataError("backward: tape underflow");
  Saved s = std::move(tape.back());
  tape.pop_back();
  return s;
}

struct Pad {
  int top = 0, left = 0;
};

// TensorFlow 'same' convention: total padding splits with the extra pixel at
// the bottom/right.
inline Pad same_pad(int in, int kernel, int stride, int& out) {
  out = (in + stride - 1) / stride;
  const int total = std::max(0, (out - 1) * stride + kernel - in);
  return {total / 2, total / 2};
}

}  // namespace detail

enum class Padding { SAME, VALID };

class Conv2d : public Layer {
 public:
  Conv2d(int in_ch, int out_ch, int kh, int kw, int stride, Padding pad,
         bool bias, Rng& rng)
      : in_ch_(in_ch), out_ch_(out_ch), kh_(kh), kw_(kw), stride_(stride),
        pad_(pad), has_bias_(bias) {
    const int fan_in = in_ch * kh * kw;
    const int fan_out = out_ch * kh * kw;
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    weight_.resize(static_cast<size_t>(out_ch) * fan_in);
    for (auto& w : weight_) w = uniform_in(rng, -limit, limit);
    if (has_bias_) bias_.assign(static_cast<size_t>(out_ch), 0.0);
  }

  Tensor forward(const Tensor& x, Tape* tape) const override {
    if (x.c != in_ch_)
      throw DataError("conv: expected " + std::to_string(in_ch_) + " channels, got " +
                      std::to_string(x.c));
    int oh, ow, pt, pl;
    geometry(x, oh, ow, pt, pl);

    const int K = in_ch_ * kh_ * kw_;
    // cols doubles as the backward cache, so the patch gather runs once
    Tensor cols_t(1, K, oh * ow);
    Eigen::Map<MatrixRM> cols(cols_t.v.data(), K, oh * ow);
    im2col(x, oh, ow, pt, pl, cols);

    Eigen::Map<const MatrixRM> W(weight_.data(), out_ch_, K);
    Tensor y(out_ch_, oh, ow);
    Eigen::Map<MatrixRM> Y(y.v.data(), out_ch_, oh * ow);
    Y.noalias() = W * cols;
    if (has_bias_)
      for (int oc = 0; oc < out_ch_; ++oc) Y.row(oc).array() += bias_[static_cast<size_t>(oc)];

    if (tape) {
      Saved s;
      s.tensors.push_back(std::move(cols_t));
      s.ints = {x.c, x.h, x.w};
      tape->push_back(std::move(s));
    }
    return y;
  }

  Tensor backward(const Tensor& dy, Tape& tape, GradAccum& grads) const override {
    Saved s = detail::pop(tape);
    Tensor dx(s.ints[0], s.ints[1], s.ints[2]);
    int oh, ow, pt, pl;
    geometry(dx, oh, ow, pt, pl);

    const int K = in_ch_ * kh_ * kw_;
    Eigen::Map<const MatrixRM> cols(s.tensors[0].v.data(), K, oh * ow);
    Eigen::Map<const MatrixRM> dY(dy.v.data(), out_ch_, oh * ow);

    auto& dw = grads.for_param(weight_);
    Eigen::Map<MatrixRM> dW(dw.data(), out_ch_, K);
    dW.noalias() += dY * cols.transpose();
    if (has_bias_) {
      auto& db = grads.for_param(bias_);
      for (int oc = 0; oc < out_ch_; ++oc) db[static_cast<size_t>(oc)] += dY.row(oc).sum();
    }

    Eigen::Map<const MatrixRM> W(weight_.data(), out_ch_, K);
    MatrixRM dcols = W.transpose() * dY;
    col2im(dcols, dx, oh, ow, pt, pl, dx);
    return dx;
  }

  void collect_params(std::vector<std::vector<double>*>& out) override {
    out.push_back(&weight_);
    if (has_bias_) out.push_back(&bias_);
  }

  std::int64_t param_count() const override {
    return static_cast<std::int64_t>(weight_.size() + bias_.size());
  }

 private:
  void geometry(const Tensor& x, int& oh, int& ow, int& pt, int& pl) const {
    if (pad_ == Padding::SAME) {
      const auto py = detail::same_pad(x.h, kh_, stride_, oh);
      const auto px = detail::same_pad(x.w, kw_, stride_, ow);
      pt = py.top;
      pl = px.top;
    } else {
      oh = (x.h - kh_) / stride_ + 1;
      ow = (x.w - kw_) / stride_ + 1;
      pt = pl = 0;
      if (oh <= 0 || ow <= 0)
        throw DataError("conv: input smaller than kernel under valid padding");
    }
  }

  template <typename ColsMap>
  void im2col(const Tensor& x, int oh, int ow, int pt, int pl, ColsMap& cols) const {
    cols.setZero();
    for (int ic = 0; ic < in_ch_; ++ic) {
      for (int ky = 0; ky < kh_; ++ky) {
        for (int kx = 0; kx < kw_; ++kx) {
          const int row = (ic * kh_ + ky) * kw_ + kx;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pt + ky;
            if (iy < 0 || iy >= x.h) continue;
            double* dst = cols.row(row).data() + oy * ow;
            const double* src = &x.v[(static_cast<size_t>(ic) * x.h + iy) * x.w];
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pl + kx;
              if (ix >= 0 && ix < x.w) dst[ox] = src[ix];
            }
          }
        }
      }
    }
  }

  void col2im(const MatrixRM& dcols, const Tensor& x, int oh, int ow, int pt, int pl,
              Tensor& dx) const {
    for (int ic = 0; ic < in_ch_; ++ic) {
      for (int ky = 0; ky < kh_; ++ky) {
        for (int kx = 0; kx < kw_; ++kx) {
          const int row = (ic * kh_ + ky) * kw_ + kx;
          for (int oy = 0; oy < oh; ++oy) {
            const int iy = oy * stride_ - pt + ky;
            if (iy < 0 || iy >= x.h) continue;
            const double* src = dcols.row(row).data() + oy * ow;
            double* dst = &dx.v[(static_cast<size_t>(ic) * x.h + iy) * x.w];
            for (int ox = 0; ox < ow; ++ox) {
              const int ix = ox * stride_ - pl + kx;
              if (ix >= 0 && ix < x.w) dst[ix] += src[ox];
            }
          }
        }
      }
    }
  }

  int in_ch_, out_ch_, kh_, kw_, stride_;
  Padding pad_;
  bool has_bias_;
  std::vector<double> weight_;  // [out_ch][in_ch * kh * kw]
  std::vector<double> bias_;
};

enum class Activation { RELU, SILU };

class Act : public Layer {
 public:
  explicit Act(Activation kind) : kind_(kind) {}

  Tensor forward(const Tensor& x, Tape* tape) const override {
    Tensor y = x;
    if (kind_ == Activation::RELU) {
      for (auto& v : y.v) v = v > 0.0 ? v : 0.0;
    } else {
      for (auto& v : y.v) v = v * sigmoid_of(v);
    }
    if (tape) {
      Saved s;
      s.tensors.push_back(x);
      tape->push_back(std::move(s));
    }
    return y;
  }

  Tensor backward(const Tensor& dy, Tape& tape, GradAccum&) const override {
    Saved s = detail::pop(tape);
    const Tensor& x = s.tensors[0];
    Tensor dx = dy;
    if (kind_ == Activation::RELU) {
      for (size_t i = 0; i < dx.v.size(); ++i)
        if (x.v[i] <= 0.0) dx.v[i] = 0.0;
    } else {
      for (size_t i = 0; i < dx.v.size(); ++i) {
        const double sg = sigmoid_of(x.v[i]);
        dx.v[i] *= sg * (1.0 + x.v[i] * (1.0 - sg));
      }
    }
    return dx;
  }

 private:
  static double sigmoid_of(double z) { return 1.0 / (1.0 + std::exp(-z)); }
  Activation kind_;
};

class MaxPool2d : public Layer {
 public:
  MaxPool2d(int k, int stride, Padding pad) : k_(k), stride_(stride), pad_(pad) {}

  Tensor forward(const Tensor& x, Tape* tape) const override {
    int oh, ow, pt, pl;
    geometry(x, oh, ow, pt, pl);
    Tensor y(x.c, oh, ow);
    std::vector<int> argmax(static_cast<size_t>(x.c) * oh * ow, -1);
    for (int c = 0; c < x.c; ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double best = -std::numeric_limits<double>::infinity();
          int best_idx = -1;
          for (int ky = 0; ky < k_; ++ky)
            for (int kx = 0; kx < k_; ++kx) {
              const int iy = oy * stride_ - pt + ky;
              const int ix = ox * stride_ - pl + kx;
              if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
              const double v = x.at(c, iy, ix);
              if (v > best) {
                best = v;
                best_idx = iy * x.w + ix;
              }
            }
          y.at(c, oy, ox) = best;
          argmax[(static_cast<size_t>(c) * oh + oy) * ow + ox] = best_idx;
        }
    if (tape) {
      Saved s;
      s.ints = std::move(argmax);
      s.ints.push_back(x.c);
      s.ints.push_back(x.h);
      s.ints.push_back(x.w);
      tape->push_back(std::move(s));
    }
    return y;
  }

  Tensor backward(const Tensor& dy, Tape& tape, GradAccum&) const override {
    Saved s = detail::pop(tape);
    const int w = s.ints.back(); s.ints.pop_back();
    const int h = s.ints.back(); s.ints.pop_back();
    const int c = s.ints.back(); s.ints.pop_back();
    Tensor dx(c, h, w);
    const size_t plane = static_cast<size_t>(h) * w;
    const size_t per_channel = s.ints.size() / static_cast<size_t>(c);
    for (size_t i = 0; i < s.ints.size(); ++i) {
      const int idx = s.ints[i];
      if (idx < 0) continue;
      const size_t ch = i / per_channel;
      dx.v[ch * plane + static_cast<size_t>(idx)] += dy.v[i];
    }
    return dx;
  }

 private:
  void geometry(const Tensor& x, int& oh, int& ow, int& pt, int& pl) const {
    if (pad_ == Padding::SAME) {
      const auto py = detail::same_pad(x.h, k_, stride_, oh);
      const auto px = detail::same_pad(x.w, k_, stride_, ow);
      pt = py.top;
      pl = px.top;
    } else {
      oh = (x.h - k_) / stride_ + 1;
      ow = (x.w - k_) / stride_ + 1;
      pt = pl = 0;
      if (oh <= 0 || ow <= 0) throw DataError("maxpool: input smaller than window");
    }
  }

  int k_, stride_;
  Padding pad_;
};

// Average pooling that excludes padded cells from the divisor.
class AvgPool2d : public Layer {
 public:
  AvgPool2d(int k, int stride, Padding pad) : k_(k), stride_(stride), pad_(pad) {}

  Tensor forward(const Tensor& x, Tape* tape) const override {
    int oh, ow, pt, pl;
    geometry(x, oh, ow, pt, pl);
    Tensor y(x.c, oh, ow);
    for (int c = 0; c < x.c; ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double sum = 0.0;
          int count = 0;
          for (int ky = 0; ky < k_; ++ky)
            for (int kx = 0; kx < k_; ++kx) {
              const int iy = oy * stride_ - pt + ky;
              const int ix = ox * stride_ - pl + kx;
              if (iy < 0 || iy >= x.h || ix < 0 || ix >= x.w) continue;
              sum += x.at(c, iy, ix);
              ++count;
            }
          y.at(c, oy, ox) = sum / count;
        }
    if (tape) {
      Saved s;
      s.ints = {x.c, x.h, x.w};
      tape->push_back(std::move(s));
    }
    return y;
  }

  Tensor backward(const Tensor& dy, Tape& tape, GradAccum&) const override {
    Saved s = detail::pop(tape);
    Tensor dx(s.ints[0], s.ints[1], s.ints[2]);
    int oh, ow, pt, pl;
    geometry(dx, oh, ow, pt, pl);
    for (int c = 0; c < dx.c; ++c)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          int count = 0;
          for (int ky = 0; ky < k_; ++ky)
            for (int kx = 0; kx < k_; ++kx) {
              const int iy = oy * stride_ - pt + ky;
              const int ix = ox * stride_ - pl + kx;
              if (iy >= 0 && iy < dx.h && ix >= 0 && ix < dx.w) ++count;
            }
          const double g = dy.at(c, oy, ox) / count;
          for (int ky = 0; ky < k_; ++ky)
            for (int kx = 0; kx < k_; ++kx) {
              const int iy = oy * stride_ - pt + ky;
              const int ix = ox * stride_ - pl + kx;
              if (iy >= 0 && iy < dx.h && ix >= 0 && ix < dx.w)
                dx.at(c, iy, ix) += g;
            }
        }
    return dx;
  }

 private:
  void geometry(const Tensor& x, int& oh, int& ow, int& pt, int& pl) const {
    if (pad_ == Padding::SAME) {
      const auto py = detail::same_pad(x.h, k_, stride_, oh);
      const auto px = detail::same_pad(x.w, k_, stride_, ow);
      pt = py.top;
      pl = px.top;
    } else {
      oh = (x.h - k_) / stride_ + 1;
      ow = (x.w - k_) / stride_ + 1;
      pt = pl = 0;
      if (oh <= 0 || ow <= 0) throw DataError("avgpool: input smaller than window");
    }
  }

  int k_, stride_;
  Padding pad_;
};

// Smooth-max spatial pooling: y_c = m + T * ln(mean(exp((x - m)/T))) with m
// the channel maximum. Approaches max pooling as T -> 0 while staying
// differentiable everywhere, which keeps detection heads sensitive to small
// structures without breaking finite-difference gradient checks.
class LogSumExpPool : public Layer {
 public:
  explicit LogSumExpPool(double temperature = 0.5) : t_(temperature) {}

  Tensor forward(const Tensor& x, Tape* tape) const override {
    Tensor y(x.c, 1, 1);
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    for (int c = 0; c < x.c; ++c) {
      const double* v = &x.v[static_cast<size_t>(c) * plane];
      double m = v[0];
      for (size_t i = 1; i < plane; ++i) m = std::max(m, v[i]);
      double sum = 0.0;
      for (size_t i = 0; i < plane; ++i) sum += std::exp((v[i] - m) / t_);
      y.at(c, 0, 0) = m + t_ * std::log(sum / static_cast<double>(plane));
    }
    if (tape) {
      Saved s;
      s.tensors.push_back(x);
      tape->push_back(std::move(s));
    }
    return y;
  }

  Tensor backward(const Tensor& dy, Tape& tape, GradAccum&) const override {
    Saved s = detail::pop(tape);
    const Tensor& x = s.tensors[0];
    Tensor dx(x.c, x.h, x.w);
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    for (int c = 0; c < x.c; ++c) {
      const double* v = &x.v[static_cast<size_t>(c) * plane];
      double* g = &dx.v[static_cast<size_t>(c) * plane];
      double m = v[0];
      for (size_t i = 1; i < plane; ++i) m = std::max(m, v[i]);
      double sum = 0.0;
      for (size_t i = 0; i < plane; ++i) sum += std::exp((v[i] - m) / t_);
      const double scale = dy.at(c, 0, 0) / sum;
      for (size_t i = 0; i < plane; ++i) g[i] = scale * std::exp((v[i] - m) / t_);
    }
    return dx;
  }

 private:
  double t_;
};

class GlobalAvgPool : public Layer {
 public:
  Tensor forward(const Tensor& x, Tape* tape) const override {
    Tensor y(x.c, 1, 1);
    const double inv = 1.0 / (static_cast<double>(x.h) * x.w);
    for (int c = 0; c < x.c; ++c) {
      double sum = 0.0;
      for (int yy = 0; yy < x.h; ++yy)
        for (int xx = 0; xx < x.w; ++xx) sum += x.at(c, yy, xx);
      y.at(c, 0, 0) = sum * inv;
    }
    if (tape) {
      Saved s;
      s.ints = {x.c, x.h, x.w};
      tape->push_back(std::move(s));
    }
    return y;
  }

  Tensor backward(const Tensor& dy, Tape& tape, GradAccum&) const override {
    Saved s = detail::pop(tape);
    Tensor dx(s.ints[0], s.ints[1], s.ints[2]);
    const double inv = 1.0 / (static_cast<double>(dx.h) * dx.w);
    for (int c = 0; c < dx.c; ++c) {
      const double g = dy.at(c, 0, 0) * inv;
      for (int yy = 0; yy < dx.h; ++yy)
        for (int xx = 0; xx < dx.w; ++xx) dx.at(c, yy, xx) = g;
    }
    return dx;
  }
};

class Dense : public Layer {
 public:
  Dense(int in, int out, Rng& rng) : in_(in), out_(out) {
    const double limit = std::sqrt(6.0 / (in + out));
    weight_.resize(static_cast<size_t>(out) * in);
    for (auto& w : weight_) w = uniform_in(rng, -limit, limit);
    bias_.assign(static_cast<size_t>(out), 0.0);
  }

  Tensor forward(const Tensor& x, Tape* tape) const override {
    if (x.size() != in_)
      throw DataError("dense: expected " + std::to_string(in_) + " inputs, got " +
                      std::to_string(x.size()));
    Tensor y(out_, 1, 1);
    Eigen::Map<const MatrixRM> W(weight_.data(), out_, in_);
    Eigen::Map<const Eigen::VectorXd> xv(x.v.data(), in_);
    Eigen::Map<Eigen::VectorXd> yv(y.v.data(), out_);
    yv.noalias() = W * xv;
    for (int o = 0; o < out_; ++o) yv[o] += bias_[static_cast<size_t>(o)];
    if (tape) {
      Saved s;
      s.tensors.push_back(x);
      tape->push_back(std::move(s));
    }
    return y;
  }

  Tensor backward(const Tensor& dy, Tape& tape, GradAccum& grads) const override {
    Saved s = detail::pop(tape);
    const Tensor& x = s.tensors[0];

    auto& dw = grads.for_param(weight_);
    Eigen::Map<MatrixRM> dW(dw.data(), out_, in_);
    Eigen::Map<const Eigen::VectorXd> xv(x.v.data(), in_);
    Eigen::Map<const Eigen::VectorXd> dyv(dy.v.data(), out_);
    dW.noalias() += dyv * xv.transpose();
    auto& db = grads.for_param(bias_);
    for (int o = 0; o < out_; ++o) db[static_cast<size_t>(o)] += dy.v[static_cast<size_t>(o)];

    Tensor dx(x.c, x.h, x.w);
    Eigen::Map<const MatrixRM> W(weight_.data(), out_, in_);
    Eigen::Map<Eigen::VectorXd> dxv(dx.v.data(), in_);
    dxv.noalias() = W.transpose() * dyv;
    return dx;
  }

  void collect_params(std::vector<std::vector<double>*>& out) override {
    out.push_back(&weight_);
    out.push_back(&bias_);
  }

  std::int64_t param_count() const override {
    return static_cast<std::int64_t>(weight_.size() + bias_.size());
  }

  std::vector<double>& weight() { return weight_; }
  std::vector<double>& bias() { return bias_; }

 private:
  int in_, out_;
  std::vector<double> weight_;
  std::vector<double> bias_;
};

// Batch normalization over channels using stored moving statistics (training
// here never updates them; gamma and beta remain trainable).
class BatchNorm2d : public Layer {
 public:
  explicit BatchNorm2d(int channels, double eps = 1e-3)
      : eps_(eps),
        gamma_(static_cast<size_t>(channels), 1.0),
        beta_(static_cast<size_t>(channels), 0.0),
        moving_mean_(static_cast<size_t>(channels), 0.0),
        moving_var_(static_cast<size_t>(channels), 1.0) {}

  Tensor forward(const Tensor& x, Tape* tape) const override {
    Tensor y(x.c, x.h, x.w);
    Tensor xhat(x.c, x.h, x.w);
    const size_t plane = static_cast<size_t>(x.h) * x.w;
    for (int c = 0; c < x.c; ++c) {
      const double inv = 1.0 / std::sqrt(moving_var_[static_cast<size_t>(c)] + eps_);
      const double mean = moving_mean_[static_cast<size_t>(c)];
      const double g = gamma_[static_cast<size_t>(c)];
      const double b = beta_[static_cast<size_t>(c)];
      for (size_t i = 0; i < plane; ++i) {
        const size_t idx = static_cast<size_t>(c) * plane + i;
        const double xh = (x.v[idx] - mean) * inv;
        xhat.v[idx] = xh;
        y.v[idx] = g * xh + b;
      }
    }
    if (tape) {
      Saved s;
      s.tensors.push_back(std::move(xhat));
      tape->push_back(std::move(s));
    }
    return y;
  }

  Tensor backward(const Tensor& dy, Tape& tape, GradAccum& grads) const override {
    Saved s = detail::pop(tape);
    const Tensor& xhat = s.tensors[0];
    Tensor dx(dy.c, dy.h, dy.w);
    auto& dgamma = grads.for_param(gamma_);
    auto& dbeta = grads.for_param(beta_);
    const size_t plane = static_cast<size_t>(dy.h) * dy.w;
    for (int c = 0; c < dy.c; ++c) {
      const double inv = 1.0 / std::sqrt(moving_var_[static_cast<size_t>(c)] + eps_);
      const double g = gamma_[static_cast<size_t>(c)];
      for (size_t i = 0; i < plane; ++i) {
        const size_t idx = static_cast<size_t>(c) * plane + i;
        dgamma[static_cast<size_t>(c)] += dy.v[idx] * xhat.v[idx];
        dbeta[static_cast<size_t>(c)] += dy.v[idx];
        dx.v[idx] = dy.v[idx] * g * inv;
      }
    }
    return dx;
  }

  void collect_params(std::vector<std::vector<double>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
  }

  void collect_state(std::vector<std::vector<double>*>& out) override {
    out.push_back(&gamma_);
    out.push_back(&beta_);
    out.push_back(&moving_mean_);
    out.push_back(&moving_var_);
  }

  std::int64_t param_count() const override {
    return static_cast<std::int64_t>(gamma_.size() + beta_.size());
  }

 private:
  double eps_;
  std::vector<double> gamma_, beta_, moving_mean_, moving_var_;
};

class Sequential : public Layer {
 public:
  Sequential() = default;

  Sequential& add(std::unique_ptr<Layer> layer) {
    layers_.push_back(std::move(layer));
    return *this;
  }

  template <typename L, typename... Args>
  Sequential& emplace(Args&&... args) {
    layers_.push_back(std::make_unique<L>(std::forward<Args>(args)...));
    return *this;
  }

  Tensor forward(const Tensor& x, Tape* tape) const override {
    Tensor cur = x;
    for (const auto& layer : layers_) cur = layer->forward(cur, tape);
    return cur;
  }

  Tensor backward(const Tensor& dy, Tape& tape, GradAccum& grads) const override {
    Tensor cur = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it)
      cur = (*it)->backward(cur, tape, grads);
    return cur;
  }

  void collect_params(std::vector<std::vector<double>*>& out) override {
    for (auto& layer : layers_) layer->collect_params(out);
  }

  void collect_state(std::vector<std::vector<double>*>& out) override {
    for (auto& layer : layers_) layer->collect_state(out);
  }

  std::int64_t param_count() const override {
    std::int64_t n = 0;
    for (const auto& layer : layers_) n += layer->param_count();
    return n;
  }

  bool empty() const { return layers_.empty(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Parallel branches concatenated along the channel dimension.
class Branches : public Layer {
 public:
  Branches& add(std::unique_ptr<Sequential> branch) {
    branches_.push_back(std::move(branch));
    return *this;
  }

  Tensor forward(const Tensor& x, Tape* tape) const override {
    std::vector<Tensor> outs;
    outs.reserve(branches_.size());
    for (const auto& b : branches_) outs.push_back(b->forward(x, tape));
    for (const auto& o : outs)
      if (o.h != outs[0].h || o.w != outs[0].w)
        throw DataError("branches: spatial shapes disagree at concat");

    int total_c = 0;
    for (const auto& o : outs) total_c += o.c;
    Tensor y(total_c, outs[0].h, outs[0].w);
    size_t offset = 0;
    Saved s;
    s.ints = {x.c, x.h, x.w};
    for (const auto& o : outs) {
      std::copy(o.v.begin(), o.v.end(), y.v.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += o.v.size();
      s.ints.push_back(o.c);
    }
    if (tape) tape->push_back(std::move(s));
    return y;
  }

  Tensor backward(const Tensor& dy, Tape& tape, GradAccum& grads) const override {
    Saved s = detail::pop(tape);
    const int xc = s.ints[0], xh = s.ints[1], xw = s.ints[2];
    Tensor dx(xc, xh, xw);
    // Split dy by branch channels; walk branches in reverse so each pops its
    // own tape frames in LIFO order.
    std::vector<int> branch_c(s.ints.begin() + 3, s.ints.end());
    std::vector<size_t> offsets(branches_.size());
    size_t off = 0;
    for (size_t i = 0; i < branches_.size(); ++i) {
      offsets[i] = off;
      off += static_cast<size_t>(branch_c[i]) * dy.h * dy.w;
    }
    for (size_t i = branches_.size(); i-- > 0;) {
      Tensor slice(branch_c[i], dy.h, dy.w);
      std::copy(dy.v.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                dy.v.begin() + static_cast<std::ptrdiff_t>(offsets[i] + slice.v.size()),
                slice.v.begin());
      const Tensor dxi = branches_[i]->backward(slice, tape, grads);
      for (size_t j = 0; j < dx.v.size(); ++j) dx.v[j] += dxi.v[j];
    }
    return dx;
  }

  void collect_params(std::vector<std::vector<double>*>& out) override {
    for (auto& b : branches_) b->collect_params(out);
  }

  void collect_state(std::vector<std::vector<double>*>& out) override {
    for (auto& b : branches_) b->collect_state(out);
  }

  std::int64_t param_count() const override {
    std::int64_t n = 0;
    for (const auto& b : branches_) n += b->param_count();
    return n;
  }

 private:
  std::vector<std::unique_ptr<Sequential>> branches_;
};

// --- loss ---

// Numerically stable binary cross-entropy on a logit.
inline double bce_with_logits(double z, bool label, double pos_weight = 1.0) {
  const double y = label ? 1.0 : 0.0;
  const double loss = std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
  return label ? pos_weight * loss : loss;
}

inline double bce_logit_grad(double z, bool label, double pos_weight = 1.0) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  const double g = s - (label ? 1.0 : 0.0);
  return label ? pos_weight * g : g;
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// --- optimizer ---

class Adam {
 public:
  Adam(std::vector<std::vector<double>*> params, double lr, double beta1 = 0.9,
       double beta2 = 0.999, double eps = 1e-7)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i]->size(), 0.0);
      v_[i].assign(params_[i]->size(), 0.0);
    }
  }

  void step(const GradAccum& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      const auto* g = grads.find(p);
      if (!g) continue;
      for (size_t j = 0; j < p.size(); ++j) {
        const double gj = (*g)[j];
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * gj;
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * gj * gj;
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        p[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  std::vector<std::vector<double>*> params_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

// Static chunked parallel map; deterministic for any worker count when the
// work items are independent.
template <typename Fn>
void parallel_for(size_t n, int workers, Fn&& fn) {
  if (n == 0) return;
  const int t = std::max(1, std::min<int>(workers, static_cast<int>(n)));
  if (t == 1) {
    for (size_t i = 0; i < n; ++i) fn(i, 0);
    return;
  }
  std::vector<std::thread> pool;
  const size_t chunk = (n + static_cast<size_t>(t) - 1) / static_cast<size_t>(t);
  for (int w = 0; w < t; ++w) {
    const size_t lo = static_cast<size_t>(w) * chunk;
    const size_t hi = std::min(n, lo + chunk);
    if (lo >= hi) break;
    pool.emplace_back([lo, hi, w, &fn] {
      for (size_t i = lo; i < hi; ++i) fn(i, w);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace gadet::nn
