#pragma once

#include <string>
#include <utility>
#include <vector>

#include "skillnet/tensor.hpp"

namespace skillnet {

// Linear warmup to a peak rate over the first `warmup` steps, then linear
// decay to zero at `total` steps.
struct LrSchedule {
  double peak = 0.0;
  long warmup = 1;
  long total = 2;

  LrSchedule(double peak_rate, long warmup_steps, long total_steps);
  double at(long step) const;  // 0 <= step <= total
};

// AdamW with decoupled weight decay. Moment buffers exist for every
// registered parameter; a step only touches parameters whose gradient was
// populated by the latest backward sweep.
class AdamW {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double weight_decay = 0.01;
  };

  struct StepReport {
    int stepped = 0;
    int skipped = 0;
    std::vector<std::string> skipped_names;
  };

  explicit AdamW(std::vector<std::pair<std::string, Tensor>> params)
      : AdamW(std::move(params), Options{}) {}
  AdamW(std::vector<std::pair<std::string, Tensor>> params, Options opts);

  StepReport step(double lr);
  void zero_grads();
  long step_count() const { return step_count_; }
  const Options& options() const { return opts_; }

 private:
  struct Slot {
    std::string name;
    Tensor param;
    std::vector<double> m;
    std::vector<double> v;
  };
  std::vector<Slot> slots_;
  Options opts_;
  long step_count_ = 0;
};

}  // namespace skillnet
