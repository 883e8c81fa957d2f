#include "biov/optimizer/optimizer.hpp"

#include <cmath>

namespace biov {

template <typename T>
AdamState<T>::AdamState(const ParamSet<T>& params, AdamHyperparams hyper) : hyper_(hyper) {
  for (const auto& [name, p] : params.params) {
    m_.emplace(name, Tensor<T>(p.shape()));
    v_.emplace(name, Tensor<T>(p.shape()));
  }
}

template <typename T>
const Tensor<T>& AdamState<T>::first_moment(const std::string& name) const {
  auto it = m_.find(name);
  if (it == m_.end()) throw KeyError(name, "no Adam state for parameter");
  return it->second;
}

template <typename T>
const Tensor<T>& AdamState<T>::second_moment(const std::string& name) const {
  auto it = v_.find(name);
  if (it == v_.end()) throw KeyError(name, "no Adam state for parameter");
  return it->second;
}

template <typename T>
void AdamState<T>::step(ParamSet<T>& params, const GradMap<T>& grads, double lr) {
  if (!(lr > 0.0) || !std::isfinite(lr)) throw InvalidArgument("Adam learning rate must be positive and finite");
  for (const auto& [name, _] : params.params) {
    auto it = grads.find(name);
    if (it == grads.end()) throw KeyError(name, "missing gradient");
    if (it->second.shape() != params.params.at(name).shape()) {
      throw ShapeError(name, params.params.at(name).shape(), it->second.shape(), "gradient shape");
    }
    if (!it->second.all_finite()) throw NumericalError(name, "gradient");
    if (!m_.count(name)) throw KeyError(name, "parameter added after optimizer construction");
  }
  for (const auto& [name, _] : grads) {
    if (!params.params.count(name)) throw KeyError(name, "gradient for unknown parameter");
  }

  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(hyper_.beta1, t);
  const double c2 = 1.0 - std::pow(hyper_.beta2, t);
  for (auto& [name, p] : params.params) {
    const Tensor<T>& g = grads.at(name);
    Tensor<T>& m = m_.at(name);
    Tensor<T>& v = v_.at(name);
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      const double mi = hyper_.beta1 * m[i] + (1.0 - hyper_.beta1) * gi;
      const double vi = hyper_.beta2 * v[i] + (1.0 - hyper_.beta2) * gi * gi;
      m[i] = static_cast<T>(mi);
      v[i] = static_cast<T>(vi);
      const double update = lr * (mi / c1) / (std::sqrt(vi / c2) + hyper_.epsilon);
      p[i] = static_cast<T>(p[i] - update);
    }
  }
}

template class AdamState<float>;
template class AdamState<double>;

double lr_at(const StepDecaySchedule& schedule, int epoch) {
  if (epoch < 0) throw InvalidArgument("lr_at: negative epoch " + std::to_string(epoch));
  if (schedule.step_size_epochs <= 0) throw InvalidArgument("lr_at: step size must be positive");
  if (!(schedule.gamma > 0.0) || !(schedule.base_lr >= 0.0)) throw InvalidArgument("lr_at: invalid base_lr or gamma");
  return schedule.base_lr * std::pow(schedule.gamma, epoch / schedule.step_size_epochs);
}

EarlyStopTracker::EarlyStopTracker(int patience) : patience_(patience) {
  if (patience < 1) throw InvalidArgument("early-stop patience must be at least 1");
}

StopDecision EarlyStopTracker::observe(int epoch, double metric) {
  if (last_epoch_ && epoch <= *last_epoch_) {
    throw InvalidArgument("early stop: epoch " + std::to_string(epoch) + " observed after epoch " +
                          std::to_string(*last_epoch_));
  }
  last_epoch_ = epoch;
  if (!best_metric_ || metric > *best_metric_) {
    best_metric_ = metric;
    best_epoch_ = epoch;
  }
  if (epoch - *best_epoch_ >= patience_) stopped_ = true;
  return stopped_ ? StopDecision::stop : StopDecision::keep_going;
}

}  // namespace biov
