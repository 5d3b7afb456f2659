#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace rollgan::nn {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct ShapeMismatch : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense NCHW tensor; channel blocks are contiguous per image, so image n
/// maps onto a column-major (H*W x C) matrix without copying.
template <typename Scalar>
struct Tensor {
  Eigen::Index n = 0, c = 0, h = 0, w = 0;
  Vec<Scalar> data;

  Tensor() = default;
  Tensor(Eigen::Index n_, Eigen::Index c_, Eigen::Index h_, Eigen::Index w_)
      : n(n_), c(c_), h(h_), w(w_), data(Vec<Scalar>::Zero(n_ * c_ * h_ * w_)) {}

  Eigen::Index size() const { return n * c * h * w; }

  Scalar& at(Eigen::Index in, Eigen::Index ic, Eigen::Index iy, Eigen::Index ix) {
    return data[((in * c + ic) * h + iy) * w + ix];
  }
  Scalar at(Eigen::Index in, Eigen::Index ic, Eigen::Index iy, Eigen::Index ix) const {
    return data[((in * c + ic) * h + iy) * w + ix];
  }

  // (H*W x C) view of one image
  Eigen::Map<Mat<Scalar>> image(Eigen::Index in) {
    return {data.data() + in * c * h * w, h * w, c};
  }
  Eigen::Map<const Mat<Scalar>> image(Eigen::Index in) const {
    return {data.data() + in * c * h * w, h * w, c};
  }

  bool same_shape(Eigen::Index n_, Eigen::Index c_, Eigen::Index h_, Eigen::Index w_) const {
    return n == n_ && c == c_ && h == h_ && w == w_;
  }
};

struct ConvGeometry {
  Eigen::Index in_c, in_h, in_w;
  Eigen::Index k, stride, pad;
  Eigen::Index out_h() const { return (in_h + 2 * pad - k) / stride + 1; }
  Eigen::Index out_w() const { return (in_w + 2 * pad - k) / stride + 1; }
};

/// cols is (in_c*k*k) x (out_h*out_w); row (c*k+ky)*k+kx, column oy*out_w+ox.
template <typename Scalar, typename Derived>
void im2col(const Eigen::MatrixBase<Derived>& img, const ConvGeometry& g, Mat<Scalar>& cols) {
  const Eigen::Index oh = g.out_h(), ow = g.out_w();
  cols.resize(g.in_c * g.k * g.k, oh * ow);
  for (Eigen::Index c = 0; c < g.in_c; ++c) {
    for (Eigen::Index ky = 0; ky < g.k; ++ky) {
      for (Eigen::Index kx = 0; kx < g.k; ++kx) {
        const Eigen::Index row = (c * g.k + ky) * g.k + kx;
        for (Eigen::Index oy = 0; oy < oh; ++oy) {
          const Eigen::Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) {
            cols.row(row).segment(oy * ow, ow).setZero();
            continue;
          }
          for (Eigen::Index ox = 0; ox < ow; ++ox) {
            const Eigen::Index ix = ox * g.stride - g.pad + kx;
            cols(row, oy * ow + ox) =
                (ix < 0 || ix >= g.in_w) ? Scalar(0) : img(iy * g.in_w + ix, c);
          }
        }
      }
    }
  }
}

/// Adjoint of im2col: scatter-accumulate columns back into the image.
template <typename Scalar>
void col2im(const Mat<Scalar>& cols, const ConvGeometry& g, Eigen::Map<Mat<Scalar>> img) {
  const Eigen::Index oh = g.out_h(), ow = g.out_w();
  img.setZero();
  for (Eigen::Index c = 0; c < g.in_c; ++c) {
    for (Eigen::Index ky = 0; ky < g.k; ++ky) {
      for (Eigen::Index kx = 0; kx < g.k; ++kx) {
        const Eigen::Index row = (c * g.k + ky) * g.k + kx;
        for (Eigen::Index oy = 0; oy < oh; ++oy) {
          const Eigen::Index iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= g.in_h) continue;
          for (Eigen::Index ox = 0; ox < ow; ++ox) {
            const Eigen::Index ix = ox * g.stride - g.pad + kx;
            if (ix < 0 || ix >= g.in_w) continue;
            img(iy * g.in_w + ix, c) += cols(row, oy * ow + ox);
          }
        }
      }
    }
  }
}

template <typename Scalar>
struct ParamSlot {
  std::string name;
  Scalar* value;
  Scalar* grad;
  Eigen::Index size;
};

template <typename Scalar>
struct BufferSlot {
  std::string name;
  Scalar* value;
  Eigen::Index size;
};

template <typename Scalar>
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) = 0;
  // Accumulates into parameter gradients; returns gradient w.r.t. the input.
  virtual Tensor<Scalar> backward(const Tensor<Scalar>& dy) = 0;
  virtual void collect(const std::string& prefix, std::vector<ParamSlot<Scalar>>& params,
                       std::vector<BufferSlot<Scalar>>& buffers) {}
  virtual void init(std::mt19937& rng) {}
};

template <typename Scalar>
class Conv2d : public Layer<Scalar> {
 public:
  Conv2d(Eigen::Index in_c, Eigen::Index out_c, Eigen::Index k, Eigen::Index stride,
         Eigen::Index pad)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad),
        weight_(Mat<Scalar>::Zero(out_c, in_c * k * k)),
        wgrad_(Mat<Scalar>::Zero(out_c, in_c * k * k)) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
    if (x.c != in_c_) throw ShapeMismatch("conv: channel mismatch");
    geom_ = {in_c_, x.h, x.w, k_, stride_, pad_};
    if (geom_.out_h() < 1 || geom_.out_w() < 1) throw ShapeMismatch("conv: input too small");
    x_ = x;
    Tensor<Scalar> y(x.n, out_c_, geom_.out_h(), geom_.out_w());
    Mat<Scalar> cols;
    for (Eigen::Index i = 0; i < x.n; ++i) {
      im2col<Scalar>(x.image(i), geom_, cols);
      y.image(i).noalias() = cols.transpose() * weight_.transpose();
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
    Tensor<Scalar> dx(x_.n, in_c_, x_.h, x_.w);
    Mat<Scalar> cols, dcols;
    for (Eigen::Index i = 0; i < x_.n; ++i) {
      im2col<Scalar>(x_.image(i), geom_, cols);
      auto dy_img = dy.image(i);  // (OHW x OC)
      wgrad_.noalias() += dy_img.transpose() * cols.transpose();
      dcols.noalias() = weight_.transpose() * dy_img.transpose();
      col2im<Scalar>(dcols, geom_, dx.image(i));
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamSlot<Scalar>>& params,
               std::vector<BufferSlot<Scalar>>& buffers) override {
    params.push_back({prefix + ".weight", weight_.data(), wgrad_.data(), weight_.size()});
  }

  void init(std::mt19937& rng) override {
    std::normal_distribution<double> dist(0.0, 0.02);
    for (Eigen::Index i = 0; i < weight_.size(); ++i)
      weight_.data()[i] = static_cast<Scalar>(dist(rng));
  }

 private:
  Eigen::Index in_c_, out_c_, k_, stride_, pad_;
  Mat<Scalar> weight_, wgrad_;  // (out_c x in_c*k*k)
  ConvGeometry geom_{};
  Tensor<Scalar> x_;
};

template <typename Scalar>
class ConvTranspose2d : public Layer<Scalar> {
 public:
  ConvTranspose2d(Eigen::Index in_c, Eigen::Index out_c, Eigen::Index k, Eigen::Index stride,
                  Eigen::Index pad)
      : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad),
        weight_(Mat<Scalar>::Zero(in_c, out_c * k * k)),
        wgrad_(Mat<Scalar>::Zero(in_c, out_c * k * k)) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
    if (x.c != in_c_) throw ShapeMismatch("conv transpose: channel mismatch");
    const Eigen::Index oh = (x.h - 1) * stride_ + k_ - 2 * pad_;
    const Eigen::Index ow = (x.w - 1) * stride_ + k_ - 2 * pad_;
    if (oh < 1 || ow < 1) throw ShapeMismatch("conv transpose: input too small");
    // the adjoint convolution maps (oh,ow) back to (x.h,x.w)
    geom_ = {out_c_, oh, ow, k_, stride_, pad_};
    x_ = x;
    Tensor<Scalar> y(x.n, out_c_, oh, ow);
    Mat<Scalar> cols;
    for (Eigen::Index i = 0; i < x.n; ++i) {
      cols.noalias() = weight_.transpose() * x.image(i).transpose();
      col2im<Scalar>(cols, geom_, y.image(i));
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
    Tensor<Scalar> dx(x_.n, in_c_, x_.h, x_.w);
    Mat<Scalar> cols;
    for (Eigen::Index i = 0; i < x_.n; ++i) {
      im2col<Scalar>(dy.image(i), geom_, cols);
      wgrad_.noalias() += x_.image(i).transpose() * cols.transpose();
      dx.image(i).noalias() = cols.transpose() * weight_.transpose();
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamSlot<Scalar>>& params,
               std::vector<BufferSlot<Scalar>>& buffers) override {
    params.push_back({prefix + ".weight", weight_.data(), wgrad_.data(), weight_.size()});
  }

  void init(std::mt19937& rng) override {
    std::normal_distribution<double> dist(0.0, 0.02);
    for (Eigen::Index i = 0; i < weight_.size(); ++i)
      weight_.data()[i] = static_cast<Scalar>(dist(rng));
  }

 private:
  Eigen::Index in_c_, out_c_, k_, stride_, pad_;
  Mat<Scalar> weight_, wgrad_;  // (in_c x out_c*k*k)
  ConvGeometry geom_{};
  Tensor<Scalar> x_;
};

template <typename Scalar>
class BatchNorm2d : public Layer<Scalar> {
 public:
  explicit BatchNorm2d(Eigen::Index channels, Scalar momentum = Scalar(0.1),
                       Scalar eps = Scalar(1e-5))
      : c_(channels), momentum_(momentum), eps_(eps),
        gamma_(Vec<Scalar>::Ones(channels)), beta_(Vec<Scalar>::Zero(channels)),
        ggrad_(Vec<Scalar>::Zero(channels)), bgrad_(Vec<Scalar>::Zero(channels)),
        running_mean_(Vec<Scalar>::Zero(channels)), running_var_(Vec<Scalar>::Ones(channels)) {}

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) override {
    if (x.c != c_) throw ShapeMismatch("batch norm: channel mismatch");
    Tensor<Scalar> y(x.n, x.c, x.h, x.w);
    const Eigen::Index hw = x.h * x.w;
    const Eigen::Index m = x.n * hw;
    if (train) {
      mean_.resize(c_);
      invstd_.resize(c_);
      for (Eigen::Index c = 0; c < c_; ++c) {
        double sum = 0, sq = 0;
        for (Eigen::Index i = 0; i < x.n; ++i) {
          auto col = x.image(i).col(c);
          sum += col.template cast<double>().sum();
          sq += col.template cast<double>().squaredNorm();
        }
        double mean = sum / m;
        double var = sq / m - mean * mean;
        if (var < 0) var = 0;
        mean_[c] = static_cast<Scalar>(mean);
        invstd_[c] = static_cast<Scalar>(1.0 / std::sqrt(var + double(eps_)));
        running_mean_[c] = (Scalar(1) - momentum_) * running_mean_[c] +
                           momentum_ * static_cast<Scalar>(mean);
        running_var_[c] =
            (Scalar(1) - momentum_) * running_var_[c] + momentum_ * static_cast<Scalar>(var);
      }
      x_ = x;
      for (Eigen::Index i = 0; i < x.n; ++i)
        for (Eigen::Index c = 0; c < c_; ++c)
          y.image(i).col(c) =
              ((x.image(i).col(c).array() - mean_[c]) * invstd_[c]) * gamma_[c] + beta_[c];
    } else {
      for (Eigen::Index i = 0; i < x.n; ++i)
        for (Eigen::Index c = 0; c < c_; ++c) {
          Scalar invstd = Scalar(1) / std::sqrt(running_var_[c] + eps_);
          y.image(i).col(c) =
              ((x.image(i).col(c).array() - running_mean_[c]) * invstd) * gamma_[c] + beta_[c];
        }
    }
    return y;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
    const Eigen::Index hw = x_.h * x_.w;
    const Eigen::Index m = x_.n * hw;
    Tensor<Scalar> dx(x_.n, x_.c, x_.h, x_.w);
    for (Eigen::Index c = 0; c < c_; ++c) {
      double sum_dy = 0, sum_dy_xhat = 0;
      for (Eigen::Index i = 0; i < x_.n; ++i) {
        auto xhat = ((x_.image(i).col(c).array() - mean_[c]) * invstd_[c]).eval();
        auto dyc = dy.image(i).col(c).array();
        sum_dy += dyc.template cast<double>().sum();
        sum_dy_xhat += (dyc * xhat).template cast<double>().sum();
      }
      ggrad_[c] += static_cast<Scalar>(sum_dy_xhat);
      bgrad_[c] += static_cast<Scalar>(sum_dy);
      const Scalar a = gamma_[c] * invstd_[c] / static_cast<Scalar>(m);
      for (Eigen::Index i = 0; i < x_.n; ++i) {
        auto xhat = ((x_.image(i).col(c).array() - mean_[c]) * invstd_[c]).eval();
        dx.image(i).col(c) =
            a * (static_cast<Scalar>(m) * dy.image(i).col(c).array() -
                 static_cast<Scalar>(sum_dy) - xhat * static_cast<Scalar>(sum_dy_xhat));
      }
    }
    return dx;
  }

  void collect(const std::string& prefix, std::vector<ParamSlot<Scalar>>& params,
               std::vector<BufferSlot<Scalar>>& buffers) override {
    params.push_back({prefix + ".gamma", gamma_.data(), ggrad_.data(), gamma_.size()});
    params.push_back({prefix + ".beta", beta_.data(), bgrad_.data(), beta_.size()});
    buffers.push_back({prefix + ".running_mean", running_mean_.data(), running_mean_.size()});
    buffers.push_back({prefix + ".running_var", running_var_.data(), running_var_.size()});
  }

  void init(std::mt19937& rng) override {
    std::normal_distribution<double> dist(1.0, 0.02);
    for (Eigen::Index c = 0; c < c_; ++c) gamma_[c] = static_cast<Scalar>(dist(rng));
    beta_.setZero();
    running_mean_.setZero();
    running_var_.setOnes();
  }

 private:
  Eigen::Index c_;
  Scalar momentum_, eps_;
  Vec<Scalar> gamma_, beta_, ggrad_, bgrad_;
  Vec<Scalar> running_mean_, running_var_;
  Vec<Scalar> mean_, invstd_;
  Tensor<Scalar> x_;
};

template <typename Scalar>
class ReLU : public Layer<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
    x_ = x;
    Tensor<Scalar> y = x;
    y.data = y.data.cwiseMax(Scalar(0));
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
    Tensor<Scalar> dx = dy;
    for (Eigen::Index i = 0; i < dx.size(); ++i)
      if (x_.data[i] <= Scalar(0)) dx.data[i] = Scalar(0);
    return dx;
  }

 private:
  Tensor<Scalar> x_;
};

template <typename Scalar>
class LeakyReLU : public Layer<Scalar> {
 public:
  explicit LeakyReLU(Scalar slope = Scalar(0.2)) : slope_(slope) {}
  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
    x_ = x;
    Tensor<Scalar> y = x;
    for (Eigen::Index i = 0; i < y.size(); ++i)
      if (y.data[i] < Scalar(0)) y.data[i] *= slope_;
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
    Tensor<Scalar> dx = dy;
    for (Eigen::Index i = 0; i < dx.size(); ++i)
      if (x_.data[i] < Scalar(0)) dx.data[i] *= slope_;
    return dx;
  }

 private:
  Scalar slope_;
  Tensor<Scalar> x_;
};

template <typename Scalar>
class Tanh : public Layer<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
    Tensor<Scalar> y = x;
    y.data = y.data.array().tanh();
    y_ = y;
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
    Tensor<Scalar> dx = dy;
    dx.data.array() *= (Scalar(1) - y_.data.array().square());
    return dx;
  }

 private:
  Tensor<Scalar> y_;
};

template <typename Scalar>
class Sigmoid : public Layer<Scalar> {
 public:
  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool) override {
    // clamped away from 0 and 1 so the output is strictly inside (0,1)
    const Scalar eps = std::is_same_v<Scalar, float> ? Scalar(1e-7) : Scalar(1e-15);
    Tensor<Scalar> y = x;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      Scalar p = Scalar(1) / (Scalar(1) + std::exp(-y.data[i]));
      y.data[i] = std::min(Scalar(1) - eps, std::max(eps, p));
    }
    y_ = y;
    return y;
  }
  Tensor<Scalar> backward(const Tensor<Scalar>& dy) override {
    Tensor<Scalar> dx = dy;
    dx.data.array() *= y_.data.array() * (Scalar(1) - y_.data.array());
    return dx;
  }

 private:
  Tensor<Scalar> y_;
};

template <typename Scalar>
class Sequential {
 public:
  void add(std::unique_ptr<Layer<Scalar>> layer) { layers_.push_back(std::move(layer)); }

  Tensor<Scalar> forward(const Tensor<Scalar>& x, bool train) {
    Tensor<Scalar> h = x;
    for (auto& layer : layers_) h = layer->forward(h, train);
    return h;
  }

  Tensor<Scalar> backward(const Tensor<Scalar>& dy) {
    Tensor<Scalar> g = dy;
    for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
    return g;
  }

  std::vector<ParamSlot<Scalar>> parameters(const std::string& prefix) {
    std::vector<ParamSlot<Scalar>> params;
    std::vector<BufferSlot<Scalar>> buffers;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->collect(prefix + "." + std::to_string(i), params, buffers);
    return params;
  }

  std::vector<BufferSlot<Scalar>> buffers(const std::string& prefix) {
    std::vector<ParamSlot<Scalar>> params;
    std::vector<BufferSlot<Scalar>> buffers;
    for (std::size_t i = 0; i < layers_.size(); ++i)
      layers_[i]->collect(prefix + "." + std::to_string(i), params, buffers);
    return buffers;
  }

  void init(std::mt19937& rng) {
    for (auto& layer : layers_) layer->init(rng);
  }

  void zero_grad() {
    for (auto& p : parameters(""))
      Eigen::Map<Vec<Scalar>>(p.grad, p.size).setZero();
  }

 private:
  std::vector<std::unique_ptr<Layer<Scalar>>> layers_;
};

/// Adam with decoupled slots; state is addressed by slot order.
template <typename Scalar>
class Adam {
 public:
  Adam(Scalar lr = Scalar(2e-4), Scalar beta1 = Scalar(0.5), Scalar beta2 = Scalar(0.999),
       Scalar eps = Scalar(1e-8))
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<ParamSlot<Scalar>>& params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Vec<Scalar>::Zero(p.size));
        v_.push_back(Vec<Scalar>::Zero(p.size));
      }
    }
    ++t_;
    const Scalar bc1 = Scalar(1) - std::pow(beta1_, Scalar(t_));
    const Scalar bc2 = Scalar(1) - std::pow(beta2_, Scalar(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      Eigen::Map<Vec<Scalar>> value(params[i].value, params[i].size);
      Eigen::Map<const Vec<Scalar>> grad(params[i].grad, params[i].size);
      m_[i] = beta1_ * m_[i] + (Scalar(1) - beta1_) * grad;
      v_[i].array() = beta2_ * v_[i].array() + (Scalar(1) - beta2_) * grad.array().square();
      value.array() -=
          lr_ * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + eps_);
    }
  }

  long iterations() const { return t_; }
  std::vector<Vec<Scalar>>& first_moments() { return m_; }
  std::vector<Vec<Scalar>>& second_moments() { return v_; }
  void restore(std::vector<Vec<Scalar>> m, std::vector<Vec<Scalar>> v, long t) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
  }

 private:
  Scalar lr_, beta1_, beta2_, eps_;
  std::vector<Vec<Scalar>> m_, v_;
  long t_ = 0;
};

/// Mean binary cross-entropy against a constant target; returns the loss and
/// writes dL/dp into grad.
template <typename Scalar>
double bce_loss(const Tensor<Scalar>& p, Scalar target, Tensor<Scalar>& grad) {
  const Scalar eps = std::is_same_v<Scalar, float> ? Scalar(1e-7) : Scalar(1e-15);
  grad = Tensor<Scalar>(p.n, p.c, p.h, p.w);
  double loss = 0;
  const Eigen::Index count = p.size();
  for (Eigen::Index i = 0; i < count; ++i) {
    Scalar pi = std::min(Scalar(1) - eps, std::max(eps, p.data[i]));
    loss += -(double(target) * std::log(double(pi)) +
              (1.0 - double(target)) * std::log(1.0 - double(pi)));
    grad.data[i] = (pi - target) / (pi * (Scalar(1) - pi)) / static_cast<Scalar>(count);
  }
  return loss / count;
}

}  // namespace rollgan::nn
