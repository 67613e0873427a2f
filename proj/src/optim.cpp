#include "rsrep/optim.hpp"

#include <algorithm>
#include <cmath>

#include "rsrep/errors.hpp"

namespace rsrep {

double MultiStepSchedule::lr_at(std::int64_t iteration) const {
  double lr = base_lr;
  for (std::int64_t m : milestones)
    if (m <= iteration) lr *= gamma;
  return lr;
}

void momentum_sgd_step(Tensor& param, const Tensor& grad, Tensor& velocity, double lr, double momentum,
                       double weight_decay) {
  if (!param.same_shape(grad) || !param.same_shape(velocity)) {
    throw DimensionError("sgd step: parameter " + shape_string(param.shape()) + ", gradient " +
                         shape_string(grad.shape()) + ", velocity " + shape_string(velocity.shape()));
  }
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i])) throw NumericalError("sgd step: non-finite gradient");
  for (std::size_t i = 0; i < param.size(); ++i) {
    velocity[i] = momentum * velocity[i] + (grad[i] + weight_decay * param[i]);
    param[i] -= lr * velocity[i];
  }
}

MomentumSgd::MomentumSgd(std::vector<NamedParameter> params, double momentum, double weight_decay,
                         std::vector<std::string> decay_exclude)
    : params_(std::move(params)), momentum_(momentum) {
  for (const auto& p : params_) {
    velocity_.emplace_back(p.param->value.shape());
    const bool excluded = std::any_of(decay_exclude.begin(), decay_exclude.end(), [&](const std::string& s) {
      return p.name.find(s) != std::string::npos;
    });
    decay_.push_back(excluded ? 0.0 : weight_decay);
  }
}

void MomentumSgd::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Parameter& p = *params_[i].param;
    try {
      momentum_sgd_step(p.value, p.grad, velocity_[i], lr, momentum_, decay_[i]);
    } catch (const NumericalError&) {
      throw NumericalError("sgd step: non-finite gradient in " + params_[i].name);
    }
  }
}

void AdamOptions::validate() const {
  if (!(lr > 0.0)) throw ConfigError("adam.lr must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("adam.beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("adam.beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw ConfigError("adam.eps must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("adam.weight_decay must be non-negative");
}

Adam::Adam(std::vector<Parameter*> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  options_.validate();
  for (Parameter* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Tensor& w = params_[k]->value;
    const Tensor& g = params_[k]->grad;
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i] + options_.weight_decay * w[i];
      if (!std::isfinite(gi)) throw NumericalError("adam step: non-finite gradient");
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * gi;
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * gi * gi;
      w[i] -= options_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + options_.eps);
    }
  }
}

void PlateauOptions::validate() const {
  if (patience < 1) throw ConfigError("plateau.patience must be at least 1");
  if (!(factor > 0.0 && factor < 1.0)) throw ConfigError("plateau.factor must lie in (0, 1)");
  if (!(min_lr >= 0.0)) throw ConfigError("plateau.min_lr must be non-negative");
  if (!(threshold >= 0.0)) throw ConfigError("plateau.threshold must be non-negative");
}

ReduceLrOnPlateau::ReduceLrOnPlateau(double initial_lr, PlateauOptions options)
    : options_(options), lr_(initial_lr), best_(0.0) {
  options_.validate();
}

double ReduceLrOnPlateau::observe(double metric) {
  if (!has_best_ || metric > best_ * (1.0 + options_.threshold)) {
    best_ = metric;
    has_best_ = true;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
  }
  if (bad_epochs_ > options_.patience) {
    const double next = std::max(lr_ * options_.factor, options_.min_lr);
    if (next < lr_) ++reductions_;
    lr_ = next;
    bad_epochs_ = 0;
  }
  return lr_;
}

}  // namespace rsrep
