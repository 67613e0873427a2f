#include "rsrep/layers.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>

#include "rsrep/errors.hpp"

namespace rsrep {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void init_uniform(Tensor& t, double bound, Rng& rng) {
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
}

void expect_rank(const Tensor& x, int rank, const char* layer) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(layer) + " expects rank-" + std::to_string(rank) +
                         " input, got " + shape_string(x.shape()));
  }
}

}  // namespace

std::vector<NamedParameter> parameters_of(Module& m, const std::string& prefix) {
  std::vector<NamedParameter> params;
  std::vector<NamedBuffer> buffers;
  m.collect(prefix, params, buffers);
  return params;
}

std::vector<NamedBuffer> buffers_of(Module& m, const std::string& prefix) {
  std::vector<NamedParameter> params;
  std::vector<NamedBuffer> buffers;
  m.collect(prefix, params, buffers);
  return buffers;
}

void zero_grads(Module& m) {
  for (auto& p : parameters_of(m)) p.param->zero_grad();
}

// ---------------------------------------------------------------- Linear

Linear::Linear(int in_features, int out_features, bool bias)
    : in_(in_features), out_(out_features), has_bias_(bias) {
  if (in_ <= 0 || out_ <= 0) throw ConfigError("Linear: widths must be positive");
  weight_ = Parameter({out_, in_});
  if (has_bias_) bias_ = Parameter({out_});
}

Tensor Linear::forward(const Tensor& x, Mode, Cache& cache) {
  expect_rank(x, 2, "Linear");
  if (x.dim(1) != in_) {
    throw DimensionError("Linear expects " + std::to_string(in_) + " input features, got " +
                         std::to_string(x.dim(1)));
  }
  const int n = x.dim(0);
  Tensor y({n, out_});
  ConstMatrixMap xm(x.data(), n, in_);
  ConstMatrixMap wm(weight_.value.data(), out_, in_);
  MatrixMap ym(y.data(), n, out_);
  ym.noalias() = xm * wm.transpose();
  if (has_bias_) {
    Eigen::Map<const Eigen::RowVectorXd> b(bias_.value.data(), out_);
    ym.rowwise() += b;
  }
  cache.saved = {x};
  return y;
}

Tensor Linear::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& x = cache.saved.at(0);
  const int n = x.dim(0);
  expect_shape(grad_out, {n, out_}, "Linear backward");
  ConstMatrixMap g(grad_out.data(), n, out_);
  ConstMatrixMap xm(x.data(), n, in_);
  MatrixMap dw(weight_.grad.data(), out_, in_);
  dw.noalias() += g.transpose() * xm;
  if (has_bias_) {
    Eigen::Map<Eigen::RowVectorXd> db(bias_.grad.data(), out_);
    db += g.colwise().sum();
  }
  Tensor dx({n, in_});
  MatrixMap dxm(dx.data(), n, in_);
  ConstMatrixMap wm(weight_.value.data(), out_, in_);
  dxm.noalias() = g * wm;
  return dx;
}

void Linear::collect(const std::string& prefix, std::vector<NamedParameter>& params,
                     std::vector<NamedBuffer>&) {
  params.push_back({prefix + "weight", &weight_});
  if (has_bias_) params.push_back({prefix + "bias", &bias_});
}

void Linear::initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_));
  init_uniform(weight_.value, bound, rng);
  if (has_bias_) init_uniform(bias_.value, bound, rng);
}

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, int padding, bool bias)
    : in_(in_channels),
      out_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      has_bias_(bias) {
  if (in_ <= 0 || out_ <= 0 || kernel_ <= 0 || stride_ <= 0 || padding_ < 0) {
    throw ConfigError("Conv2d: invalid geometry");
  }
  weight_ = Parameter({out_, in_, kernel_, kernel_});
  if (has_bias_) bias_ = Parameter({out_});
}

int Conv2d::output_extent(int input_extent) const {
  return (input_extent + 2 * padding_ - kernel_) / stride_ + 1;
}

namespace {

struct ConvGeometry {
  int channels, height, width, kernel, stride, padding, out_h, out_w;
  bool identity() const { return kernel == 1 && stride == 1 && padding == 0; }
};

void im2col(const double* img, const ConvGeometry& g, double* col) {
  const int plane = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        double* row = col + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) * plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ki;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kj;
            row[oy * g.out_w + ox] = (iy >= 0 && iy < g.height && ix >= 0 && ix < g.width)
                                         ? img[(c * g.height + iy) * g.width + ix]
                                         : 0.0;
          }
        }
      }
    }
  }
}

void col2im_add(const double* col, const ConvGeometry& g, double* img) {
  const int plane = g.out_h * g.out_w;
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kernel; ++ki) {
      for (int kj = 0; kj < g.kernel; ++kj) {
        const double* row =
            col + static_cast<std::size_t>((c * g.kernel + ki) * g.kernel + kj) * plane;
        for (int oy = 0; oy < g.out_h; ++oy) {
          const int iy = oy * g.stride - g.padding + ki;
          if (iy < 0 || iy >= g.height) continue;
          for (int ox = 0; ox < g.out_w; ++ox) {
            const int ix = ox * g.stride - g.padding + kj;
            if (ix < 0 || ix >= g.width) continue;
            img[(c * g.height + iy) * g.width + ix] += row[oy * g.out_w + ox];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor Conv2d::forward(const Tensor& x, Mode, Cache& cache) {
  expect_rank(x, 4, "Conv2d");
  if (x.dim(1) != in_) {
    throw DimensionError("Conv2d expects " + std::to_string(in_) + " channels, got " +
                         std::to_string(x.dim(1)));
  }
  const int n = x.dim(0);
  const ConvGeometry g{in_,     x.dim(2), x.dim(3),           kernel_,
                       stride_, padding_, output_extent(x.dim(2)), output_extent(x.dim(3))};
  if (g.out_h <= 0 || g.out_w <= 0) {
    throw DimensionError("Conv2d input " + shape_string(x.shape()) + " too small for kernel");
  }
  const int k_rows = in_ * kernel_ * kernel_;
  const int plane = g.out_h * g.out_w;
  Tensor y({n, out_, g.out_h, g.out_w});
  ConstMatrixMap wm(weight_.value.data(), out_, k_rows);
  RowMatrix col;
  if (!g.identity()) col.resize(k_rows, plane);
  const std::size_t in_stride = static_cast<std::size_t>(in_) * g.height * g.width;
  for (int i = 0; i < n; ++i) {
    MatrixMap ym(y.data() + static_cast<std::size_t>(i) * out_ * plane, out_, plane);
    if (g.identity()) {
      ym.noalias() = wm * ConstMatrixMap(x.data() + i * in_stride, in_, plane);
    } else {
      im2col(x.data() + i * in_stride, g, col.data());
      ym.noalias() = wm * col;
    }
    if (has_bias_) {
      for (int o = 0; o < out_; ++o) ym.row(o).array() += bias_.value[o];
    }
  }
  cache.saved = {x};
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& x = cache.saved.at(0);
  const int n = x.dim(0);
  const ConvGeometry g{in_,     x.dim(2), x.dim(3),           kernel_,
                       stride_, padding_, output_extent(x.dim(2)), output_extent(x.dim(3))};
  expect_shape(grad_out, {n, out_, g.out_h, g.out_w}, "Conv2d backward");
  const int k_rows = in_ * kernel_ * kernel_;
  const int plane = g.out_h * g.out_w;
  const std::size_t in_stride = static_cast<std::size_t>(in_) * g.height * g.width;

  Tensor dx(x.shape());
  ConstMatrixMap wm(weight_.value.data(), out_, k_rows);
  MatrixMap dw(weight_.grad.data(), out_, k_rows);
  RowMatrix col;
  RowMatrix dcol;
  if (!g.identity()) {
    col.resize(k_rows, plane);
    dcol.resize(k_rows, plane);
  }
  for (int i = 0; i < n; ++i) {
    ConstMatrixMap gm(grad_out.data() + static_cast<std::size_t>(i) * out_ * plane, out_, plane);
    if (has_bias_) {
      for (int o = 0; o < out_; ++o) bias_.grad[o] += gm.row(o).sum();
    }
    if (g.identity()) {
      ConstMatrixMap xm(x.data() + i * in_stride, in_, plane);
      dw.noalias() += gm * xm.transpose();
      MatrixMap(dx.data() + i * in_stride, in_, plane).noalias() = wm.transpose() * gm;
    } else {
      im2col(x.data() + i * in_stride, g, col.data());
      dw.noalias() += gm * col.transpose();
      dcol.noalias() = wm.transpose() * gm;
      col2im_add(dcol.data(), g, dx.data() + i * in_stride);
    }
  }
  return dx;
}

void Conv2d::collect(const std::string& prefix, std::vector<NamedParameter>& params,
                     std::vector<NamedBuffer>&) {
  params.push_back({prefix + "weight", &weight_});
  if (has_bias_) params.push_back({prefix + "bias", &bias_});
}

void Conv2d::initialize(Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_ * kernel_ * kernel_));
  init_uniform(weight_.value, bound, rng);
  if (has_bias_) init_uniform(bias_.value, bound, rng);
}

// ---------------------------------------------------------------- BatchNorm

BatchNorm::BatchNorm(int channels, bool affine, double eps, double momentum)
    : channels_(channels),
      affine_(affine),
      eps_(eps),
      momentum_(momentum),
      running_mean_({channels}, 0.0),
      running_var_({channels}, 1.0) {
  if (channels_ <= 0) throw ConfigError("BatchNorm: channel count must be positive");
  if (affine_) {
    gamma_ = Parameter({channels_});
    beta_ = Parameter({channels_});
    gamma_.value.fill(1.0);
  }
}

Tensor BatchNorm::forward(const Tensor& x, Mode mode, Cache& cache) {
  if ((x.rank() != 2 && x.rank() != 4) || x.dim(1) != channels_) {
    throw DimensionError("BatchNorm(" + std::to_string(channels_) + ") got " +
                         shape_string(x.shape()));
  }
  const int n = x.dim(0);
  const int spatial = x.rank() == 4 ? x.dim(2) * x.dim(3) : 1;
  const std::size_t count = static_cast<std::size_t>(n) * spatial;
  auto at = [&](int i, int c, int s) -> std::size_t {
    return (static_cast<std::size_t>(i) * channels_ + c) * spatial + s;
  };

  Tensor y(x.shape());
  Tensor xhat(x.shape());
  Tensor inv_std({channels_});
  for (int c = 0; c < channels_; ++c) {
    double mean;
    double var;
    if (mode == Mode::kTrain) {
      if (count < 2) throw DimensionError("BatchNorm in training mode needs more than one value per channel");
      double sum = 0.0;
      for (int i = 0; i < n; ++i)
        for (int s = 0; s < spatial; ++s) sum += x[at(i, c, s)];
      mean = sum / static_cast<double>(count);
      double sq = 0.0;
      for (int i = 0; i < n; ++i)
        for (int s = 0; s < spatial; ++s) {
          const double d = x[at(i, c, s)] - mean;
          sq += d * d;
        }
      var = sq / static_cast<double>(count);
      const double unbiased = sq / static_cast<double>(count - 1);
      running_mean_[c] = (1.0 - momentum_) * running_mean_[c] + momentum_ * mean;
      running_var_[c] = (1.0 - momentum_) * running_var_[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double istd = 1.0 / std::sqrt(var + eps_);
    inv_std[c] = istd;
    const double gamma = affine_ ? gamma_.value[c] : 1.0;
    const double beta = affine_ ? beta_.value[c] : 0.0;
    for (int i = 0; i < n; ++i)
      for (int s = 0; s < spatial; ++s) {
        const std::size_t k = at(i, c, s);
        xhat[k] = (x[k] - mean) * istd;
        y[k] = gamma * xhat[k] + beta;
      }
  }
  cache.saved = {std::move(xhat), std::move(inv_std),
                 Tensor({1}, mode == Mode::kTrain ? 1.0 : 0.0)};
  return y;
}

Tensor BatchNorm::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& xhat = cache.saved.at(0);
  const Tensor& inv_std = cache.saved.at(1);
  const bool batch_stats = cache.saved.at(2)[0] != 0.0;
  expect_shape(grad_out, xhat.shape(), "BatchNorm backward");
  const int n = xhat.dim(0);
  const int spatial = xhat.rank() == 4 ? xhat.dim(2) * xhat.dim(3) : 1;
  const double count = static_cast<double>(n) * spatial;
  auto at = [&](int i, int c, int s) -> std::size_t {
    return (static_cast<std::size_t>(i) * channels_ + c) * spatial + s;
  };

  Tensor dx(xhat.shape());
  for (int c = 0; c < channels_; ++c) {
    double sum_g = 0.0;
    double sum_gx = 0.0;
    for (int i = 0; i < n; ++i)
      for (int s = 0; s < spatial; ++s) {
        const std::size_t k = at(i, c, s);
        sum_g += grad_out[k];
        sum_gx += grad_out[k] * xhat[k];
      }
    const double gamma = affine_ ? gamma_.value[c] : 1.0;
    if (affine_) {
      gamma_.grad[c] += sum_gx;
      beta_.grad[c] += sum_g;
    }
    const double scale = gamma * inv_std[c];
    for (int i = 0; i < n; ++i)
      for (int s = 0; s < spatial; ++s) {
        const std::size_t k = at(i, c, s);
        dx[k] = batch_stats
                    ? scale * (grad_out[k] - sum_g / count - xhat[k] * sum_gx / count)
                    : scale * grad_out[k];
      }
  }
  return dx;
}

void BatchNorm::collect(const std::string& prefix, std::vector<NamedParameter>& params,
                        std::vector<NamedBuffer>& buffers) {
  if (affine_) {
    params.push_back({prefix + "weight", &gamma_});
    params.push_back({prefix + "bias", &beta_});
  }
  buffers.push_back({prefix + "running_mean", &running_mean_});
  buffers.push_back({prefix + "running_var", &running_var_});
}

void BatchNorm::initialize(Rng&) {
  if (affine_) {
    gamma_.value.fill(1.0);
    beta_.value.fill(0.0);
  }
  running_mean_.fill(0.0);
  running_var_.fill(1.0);
}

// ---------------------------------------------------------------- ReLU

Tensor ReLU::forward(const Tensor& x, Mode, Cache& cache) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  cache.saved = {y};
  return y;
}

Tensor ReLU::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& y = cache.saved.at(0);
  expect_shape(grad_out, y.shape(), "ReLU backward");
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (y[i] <= 0.0) dx[i] = 0.0;
  return dx;
}

// ---------------------------------------------------------------- MaxPool2d

MaxPool2d::MaxPool2d(int kernel, int stride, int padding)
    : kernel_(kernel), stride_(stride), padding_(padding) {}

Tensor MaxPool2d::forward(const Tensor& x, Mode, Cache& cache) {
  expect_rank(x, 4, "MaxPool2d");
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int oh = (h + 2 * padding_ - kernel_) / stride_ + 1;
  const int ow = (w + 2 * padding_ - kernel_) / stride_ + 1;
  Tensor y({n, c, oh, ow});
  Tensor argmax({n, c, oh, ow});
  for (int plane = 0; plane < n * c; ++plane) {
    const double* src = x.data() + static_cast<std::size_t>(plane) * h * w;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double best = -std::numeric_limits<double>::infinity();
        int best_idx = -1;
        for (int ki = 0; ki < kernel_; ++ki)
          for (int kj = 0; kj < kernel_; ++kj) {
            const int iy = oy * stride_ - padding_ + ki;
            const int ix = ox * stride_ - padding_ + kj;
            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
            if (src[iy * w + ix] > best) {
              best = src[iy * w + ix];
              best_idx = iy * w + ix;
            }
          }
        const std::size_t k = (static_cast<std::size_t>(plane) * oh + oy) * ow + ox;
        y[k] = best;
        argmax[k] = best_idx;
      }
  }
  cache.saved = {std::move(argmax), Tensor({4}, {double(n), double(c), double(h), double(w)})};
  return y;
}

Tensor MaxPool2d::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& argmax = cache.saved.at(0);
  const Tensor& in_shape = cache.saved.at(1);
  expect_shape(grad_out, argmax.shape(), "MaxPool2d backward");
  const int n = int(in_shape[0]), c = int(in_shape[1]), h = int(in_shape[2]), w = int(in_shape[3]);
  const int per_plane = argmax.dim(2) * argmax.dim(3);
  Tensor dx({n, c, h, w});
  for (int plane = 0; plane < n * c; ++plane)
    for (int k = 0; k < per_plane; ++k) {
      const std::size_t o = static_cast<std::size_t>(plane) * per_plane + k;
      dx[static_cast<std::size_t>(plane) * h * w + static_cast<std::size_t>(argmax[o])] +=
          grad_out[o];
    }
  return dx;
}

// ---------------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, Mode, Cache& cache) {
  expect_rank(x, 4, "GlobalAvgPool");
  const int n = x.dim(0), c = x.dim(1), spatial = x.dim(2) * x.dim(3);
  Tensor y({n, c});
  for (int plane = 0; plane < n * c; ++plane) {
    double sum = 0.0;
    for (int s = 0; s < spatial; ++s) sum += x[static_cast<std::size_t>(plane) * spatial + s];
    y[plane] = sum / spatial;
  }
  cache.saved = {Tensor({4}, {double(n), double(c), double(x.dim(2)), double(x.dim(3))})};
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& s = cache.saved.at(0);
  const int n = int(s[0]), c = int(s[1]), h = int(s[2]), w = int(s[3]);
  expect_shape(grad_out, {n, c}, "GlobalAvgPool backward");
  Tensor dx({n, c, h, w});
  const int spatial = h * w;
  for (int plane = 0; plane < n * c; ++plane)
    for (int k = 0; k < spatial; ++k)
      dx[static_cast<std::size_t>(plane) * spatial + k] = grad_out[plane] / spatial;
  return dx;
}

// ---------------------------------------------------------------- Sequential

Tensor Sequential::forward(const Tensor& x, Mode mode, Cache& cache) {
  cache.children.assign(children_.size(), Cache{});
  Tensor h = x;
  for (std::size_t i = 0; i < children_.size(); ++i) h = children_[i]->forward(h, mode, cache.children[i]);
  return h;
}

Tensor Sequential::backward(const Tensor& grad_out, const Cache& cache) {
  Tensor g = grad_out;
  for (std::size_t i = children_.size(); i-- > 0;) g = children_[i]->backward(g, cache.children.at(i));
  return g;
}

void Sequential::collect(const std::string& prefix, std::vector<NamedParameter>& params,
                         std::vector<NamedBuffer>& buffers) {
  for (std::size_t i = 0; i < children_.size(); ++i)
    children_[i]->collect(prefix + names_[i] + ".", params, buffers);
}

void Sequential::initialize(Rng& rng) {
  for (auto& child : children_) child->initialize(rng);
}

// ---------------------------------------------------------------- Bottleneck

Bottleneck::Bottleneck(int in_channels, int mid_channels, int out_channels, int stride) {
  main_.add("conv1", std::make_unique<Conv2d>(in_channels, mid_channels, 1));
  main_.add("bn1", std::make_unique<BatchNorm>(mid_channels));
  main_.add("relu1", std::make_unique<ReLU>());
  main_.add("conv2", std::make_unique<Conv2d>(mid_channels, mid_channels, 3, stride, 1));
  main_.add("bn2", std::make_unique<BatchNorm>(mid_channels));
  main_.add("relu2", std::make_unique<ReLU>());
  main_.add("conv3", std::make_unique<Conv2d>(mid_channels, out_channels, 1));
  main_.add("bn3", std::make_unique<BatchNorm>(out_channels));
  if (stride != 1 || in_channels != out_channels) {
    shortcut_ = std::make_unique<Sequential>();
    shortcut_->add("0", std::make_unique<Conv2d>(in_channels, out_channels, 1, stride));
    shortcut_->add("1", std::make_unique<BatchNorm>(out_channels));
  }
}

Tensor Bottleneck::forward(const Tensor& x, Mode mode, Cache& cache) {
  cache.children.assign(2, Cache{});
  Tensor y = main_.forward(x, mode, cache.children[0]);
  if (shortcut_) {
    y += shortcut_->forward(x, mode, cache.children[1]);
  } else {
    y += x;
  }
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  cache.saved = {y};
  return y;
}

Tensor Bottleneck::backward(const Tensor& grad_out, const Cache& cache) {
  const Tensor& y = cache.saved.at(0);
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (y[i] <= 0.0) g[i] = 0.0;
  Tensor dx = main_.backward(g, cache.children.at(0));
  if (shortcut_) {
    dx += shortcut_->backward(g, cache.children.at(1));
  } else {
    dx += g;
  }
  return dx;
}

void Bottleneck::collect(const std::string& prefix, std::vector<NamedParameter>& params,
                         std::vector<NamedBuffer>& buffers) {
  main_.collect(prefix, params, buffers);
  if (shortcut_) shortcut_->collect(prefix + "downsample.", params, buffers);
}

void Bottleneck::initialize(Rng& rng) {
  main_.initialize(rng);
  if (shortcut_) shortcut_->initialize(rng);
}

}  // namespace rsrep
