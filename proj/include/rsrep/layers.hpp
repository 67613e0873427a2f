#pragma once

#include <memory>
#include <string>
#include <vector>

#include "rsrep/random.hpp"
#include "rsrep/tensor.hpp"

namespace rsrep {

/// kTrain: batch-norm uses batch statistics and updates its running
/// estimates. kEval: batch-norm uses stored running statistics and nothing
/// in the network mutates.
enum class Mode { kTrain, kEval };

/// A trainable tensor together with its accumulated gradient.
struct Parameter {
  Tensor value;
  Tensor grad;

  Parameter() = default;
  explicit Parameter(std::vector<int> shape) : value(shape), grad(std::move(shape)) {}
  void zero_grad() { grad.fill(0.0); }
};

struct NamedParameter {
  std::string name;
  Parameter* param;
};

struct NamedBuffer {
  std::string name;
  Tensor* tensor;
};

/// Activations saved by one forward call for the matching backward call.
/// Each forward invocation gets its own cache, so a module may be applied to
/// several inputs (e.g. both siamese branches) before any backward pass.
struct Cache {
  std::vector<Tensor> saved;
  std::vector<Cache> children;
};

class Module {
 public:
  virtual ~Module() = default;

  virtual Tensor forward(const Tensor& x, Mode mode, Cache& cache) = 0;

  /// Accumulates parameter gradients and returns the gradient w.r.t. the
  /// input of the forward call that filled `cache`.
  virtual Tensor backward(const Tensor& grad_out, const Cache& cache) = 0;

  virtual void collect(const std::string& /*prefix*/, std::vector<NamedParameter>& /*params*/,
                       std::vector<NamedBuffer>& /*buffers*/) {}

  virtual void initialize(Rng& /*rng*/) {}

  Tensor forward(const Tensor& x, Mode mode) {
    Cache scratch;
    return forward(x, mode, scratch);
  }
};

std::vector<NamedParameter> parameters_of(Module& m, const std::string& prefix = "");
std::vector<NamedBuffer> buffers_of(Module& m, const std::string& prefix = "");
void zero_grads(Module& m);

/// Fully connected layer, weight shape [out, in].
class Linear : public Module {
 public:
  using Module::forward;
  Linear(int in_features, int out_features, bool bias = true);

  Tensor forward(const Tensor& x, Mode mode, Cache& cache) override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect(const std::string& prefix, std::vector<NamedParameter>& params,
               std::vector<NamedBuffer>& buffers) override;
  void initialize(Rng& rng) override;

  int in_features() const { return in_; }
  int out_features() const { return out_; }
  bool has_bias() const { return has_bias_; }
  Parameter& weight() { return weight_; }
  Parameter& bias() { return bias_; }

 private:
  int in_;
  int out_;
  bool has_bias_;
  Parameter weight_;
  Parameter bias_;
};

/// 2-D convolution over NCHW input, weight shape [out, in, k, k].
class Conv2d : public Module {
 public:
  using Module::forward;
  Conv2d(int in_channels, int out_channels, int kernel, int stride = 1, int padding = 0,
         bool bias = false);

  Tensor forward(const Tensor& x, Mode mode, Cache& cache) override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect(const std::string& prefix, std::vector<NamedParameter>& params,
               std::vector<NamedBuffer>& buffers) override;
  void initialize(Rng& rng) override;

  int output_extent(int input_extent) const;

 private:
  int in_;
  int out_;
  int kernel_;
  int stride_;
  int padding_;
  bool has_bias_;
  Parameter weight_;
  Parameter bias_;
};

/// Batch normalization over axis 1 of [N, C] or [N, C, H, W] input.
class BatchNorm : public Module {
 public:
  using Module::forward;
  explicit BatchNorm(int channels, bool affine = true, double eps = 1e-5, double momentum = 0.1);

  Tensor forward(const Tensor& x, Mode mode, Cache& cache) override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect(const std::string& prefix, std::vector<NamedParameter>& params,
               std::vector<NamedBuffer>& buffers) override;
  void initialize(Rng& rng) override;

  bool affine() const { return affine_; }
  Parameter& gamma() { return gamma_; }
  Parameter& beta() { return beta_; }
  Tensor& running_mean() { return running_mean_; }
  Tensor& running_var() { return running_var_; }

 private:
  int channels_;
  bool affine_;
  double eps_;
  double momentum_;
  Parameter gamma_;
  Parameter beta_;
  Tensor running_mean_;
  Tensor running_var_;
};

class ReLU : public Module {
 public:
  using Module::forward;
  Tensor forward(const Tensor& x, Mode mode, Cache& cache) override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
};

class MaxPool2d : public Module {
 public:
  using Module::forward;
  MaxPool2d(int kernel, int stride, int padding);
  Tensor forward(const Tensor& x, Mode mode, Cache& cache) override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;

 private:
  int kernel_;
  int stride_;
  int padding_;
};

/// [N, C, H, W] -> [N, C] spatial mean.
class GlobalAvgPool : public Module {
 public:
  using Module::forward;
  Tensor forward(const Tensor& x, Mode mode, Cache& cache) override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
};

/// Applies child modules in order. Parameter names are "<prefix><child>.<name>".
class Sequential : public Module {
 public:
  using Module::forward;
  Sequential() = default;

  template <typename M>
  M& add(std::string name, std::unique_ptr<M> module) {
    M& ref = *module;
    names_.push_back(std::move(name));
    children_.push_back(std::move(module));
    return ref;
  }

  Tensor forward(const Tensor& x, Mode mode, Cache& cache) override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect(const std::string& prefix, std::vector<NamedParameter>& params,
               std::vector<NamedBuffer>& buffers) override;
  void initialize(Rng& rng) override;

  std::size_t size() const { return children_.size(); }
  Module& at(std::size_t i) { return *children_.at(i); }
  const std::string& name_at(std::size_t i) const { return names_.at(i); }

 private:
  std::vector<std::string> names_;
  std::vector<std::unique_ptr<Module>> children_;
};

/// Residual bottleneck block (1x1 reduce, 3x3 strided, 1x1 expand) with a
/// projection shortcut when the shape changes.
class Bottleneck : public Module {
 public:
  using Module::forward;
  Bottleneck(int in_channels, int mid_channels, int out_channels, int stride);

  Tensor forward(const Tensor& x, Mode mode, Cache& cache) override;
  Tensor backward(const Tensor& grad_out, const Cache& cache) override;
  void collect(const std::string& prefix, std::vector<NamedParameter>& params,
               std::vector<NamedBuffer>& buffers) override;
  void initialize(Rng& rng) override;

 private:
  Sequential main_;
  std::unique_ptr<Sequential> shortcut_;
};

}  // namespace rsrep
