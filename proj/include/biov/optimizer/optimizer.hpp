#pragma once

#include <cstdint>
#include <optional>

#include "biov/numkernel/layer.hpp"

namespace biov {

struct AdamHyperparams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // No weight decay.
};

/// Per-parameter first/second moments and the step counter.
template <typename T>
class AdamState {
 public:
  explicit AdamState(const ParamSet<T>& params, AdamHyperparams hyper = {});

  std::uint64_t step_count() const noexcept { return step_; }
  const AdamHyperparams& hyperparams() const noexcept { return hyper_; }
  const Tensor<T>& first_moment(const std::string& name) const;
  const Tensor<T>& second_moment(const std::string& name) const;

  /// Bias-corrected Adam update applied in place to every trainable
  /// parameter. `grads` must have exactly the trainable key set; lr > 0.
  void step(ParamSet<T>& params, const GradMap<T>& grads, double lr);

 private:
  AdamHyperparams hyper_;
  std::uint64_t step_ = 0;
  std::map<std::string, Tensor<T>> m_;
  std::map<std::string, Tensor<T>> v_;
};

template <typename T>
void adam_step(AdamState<T>& state, ParamSet<T>& params, const GradMap<T>& grads, double lr) {
  state.step(params, grads, lr);
}

/// lr(epoch) = base_lr * gamma^floor(epoch / step_size_epochs)
struct StepDecaySchedule {
  double base_lr = 3e-4;
  int step_size_epochs = 5;
  double gamma = 0.1;
};

double lr_at(const StepDecaySchedule& schedule, int epoch);

enum class StopDecision { keep_going, stop };

/// Early stopping on a maximized validation metric. A metric improves the best
/// only when strictly greater. Stops once `patience` epochs have passed
/// without improvement, i.e. when current_epoch - best_epoch >= patience.
class EarlyStopTracker {
 public:
  explicit EarlyStopTracker(int patience);

  StopDecision observe(int epoch, double metric);

  int patience() const noexcept { return patience_; }
  std::optional<int> best_epoch() const noexcept { return best_epoch_; }
  std::optional<double> best_metric() const noexcept { return best_metric_; }
  bool stopped() const noexcept { return stopped_; }

 private:
  int patience_;
  std::optional<int> last_epoch_;
  std::optional<int> best_epoch_;
  std::optional<double> best_metric_;
  bool stopped_ = false;
};

}  // namespace biov
