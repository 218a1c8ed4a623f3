#include "skillnet/optim.hpp"

#include <cmath>

#include "skillnet/errors.hpp"

namespace skillnet {

LrSchedule::LrSchedule(double peak_rate, long warmup_steps, long total_steps)
    : peak(peak_rate), warmup(warmup_steps), total(total_steps) {
  if (peak <= 0.0) throw ConfigError("LrSchedule: peak rate must be positive");
  if (warmup <= 0) throw ConfigError("LrSchedule: warmup must be positive");
  if (total <= warmup) throw ConfigError("LrSchedule: total steps must exceed warmup");
}

double LrSchedule::at(long step) const {
  if (step < 0 || step > total) {
    throw ContractError("LrSchedule: step " + std::to_string(step) + " outside [0," +
                        std::to_string(total) + "]");
  }
  if (step <= warmup) return peak * double(step) / double(warmup);
  return peak * double(total - step) / double(total - warmup);
}

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, Options opts) : opts_(opts) {
  for (auto& [name, t] : params) {
    if (!t.requires_grad()) {
      throw ContractError("AdamW: parameter '" + name + "' is not trainable");
    }
    Slot s;
    s.name = name;
    s.param = t;
    s.m.assign((size_t)(t.size()), 0.0);
    s.v.assign((size_t)(t.size()), 0.0);
    slots_.push_back(std::move(s));
  }
}

AdamW::StepReport AdamW::step(double lr) {
  ++step_count_;
  const double bc1 = 1.0 - std::pow(opts_.beta1, double(step_count_));
  const double bc2 = 1.0 - std::pow(opts_.beta2, double(step_count_));
  StepReport report;
  for (auto& s : slots_) {
    if (!s.param.grad_ready()) {
      ++report.skipped;
      report.skipped_names.push_back(s.name);
      continue;
    }
    ++report.stepped;
    auto& vals = s.param.mutable_values();
    const auto& g = s.param.grad();
    for (size_t i = 0; i < vals.size(); ++i) {
      s.m[i] = opts_.beta1 * s.m[i] + (1.0 - opts_.beta1) * g[i];
      s.v[i] = opts_.beta2 * s.v[i] + (1.0 - opts_.beta2) * g[i] * g[i];
      const double mhat = s.m[i] / bc1;
      const double vhat = s.v[i] / bc2;
      vals[i] -= lr * (mhat / (std::sqrt(vhat) + opts_.epsilon) + opts_.weight_decay * vals[i]);
    }
  }
  return report;
}

void AdamW::zero_grads() {
  for (auto& s : slots_) s.param.zero_grad();
}

}  // namespace skillnet
