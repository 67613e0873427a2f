#pragma once

#include <string>
#include <vector>

#include "rsrep/layers.hpp"

namespace rsrep {

/// Step-decay schedule: base_lr * gamma^(number of milestones <= iteration).
struct MultiStepSchedule {
  double base_lr = 0.05;
  std::vector<std::int64_t> milestones;
  double gamma = 0.1;

  double lr_at(std::int64_t iteration) const;
};

/// One momentum-SGD update with L2 weight decay folded into the gradient:
///   v <- momentum * v + (grad + weight_decay * param)
///   param <- param - lr * v
/// Throws NumericalError on a non-finite gradient and DimensionError on a
/// shape mismatch.
void momentum_sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
                       double weight_decay);

class MomentumSgd {
 public:
  /// Parameters whose name contains any of `decay_exclude` get no weight decay.
  MomentumSgd(std::vector<NamedParameter> params, double momentum, double weight_decay,
              std::vector<std::string> decay_exclude = {});

  void step(double lr);
  const std::vector<Tensor>& velocities() const { return velocity_; }

 private:
  std::vector<NamedParameter> params_;
  std::vector<Tensor> velocity_;
  std::vector<double> decay_;
  double momentum_;
};

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;

  void validate() const;
  bool operator==(const AdamOptions&) const = default;
};

/// Adam with bias correction; the learning rate may be changed between steps.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamOptions options);

  void step();
  double lr() const { return options_.lr; }
  void set_lr(double lr) { options_.lr = lr; }

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  AdamOptions options_;
  std::int64_t t_ = 0;
};

struct PlateauOptions {
  int patience = 5;
  double factor = 0.1;
  double min_lr = 1e-6;
  /// Relative improvement needed to reset the patience counter.
  double threshold = 1e-4;

  void validate() const;
  bool operator==(const PlateauOptions&) const = default;
};

/// Reduce-on-plateau for a metric that should increase (validation
/// accuracy). An epoch is bad unless metric > best * (1 + threshold); once
/// the bad-epoch count exceeds `patience` the rate is multiplied by `factor`
/// (floored at min_lr) and the count restarts.
class ReduceLrOnPlateau {
 public:
  ReduceLrOnPlateau(double initial_lr, PlateauOptions options);

  /// Feeds one epoch's metric; returns the learning rate for the next epoch.
  double observe(double metric);
  double lr() const { return lr_; }
  int reductions() const { return reductions_; }

 private:
  PlateauOptions options_;
  double lr_;
  double best_;
  bool has_best_ = false;
  int bad_epochs_ = 0;
  int reductions_ = 0;
};

}  // namespace rsrep
