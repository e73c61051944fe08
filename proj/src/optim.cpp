#include "multitox/optim.hpp"

#include <cmath>

#include "multitox/errors.hpp"

namespace multitox {

double clip_global_norm(ParamRegistry& params, double max_norm) {
  if (max_norm <= 0.0) throw ConfigError("clip: max_norm must be > 0");
  double sq = 0.0;
  for (auto& e : params.entries()) {
    if (e.frozen) continue;
    for (double g : e.tensor.grad_view()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return 1.0;
  const double factor = max_norm / norm;
  for (auto& e : params.entries()) {
    if (e.frozen || !e.tensor.has_grad()) continue;
    for (double& g : e.tensor.grad()) g *= factor;
  }
  return factor;
}

AdamW::AdamW(const ParamRegistry& params, AdamWConfig cfg) : cfg_(cfg) {
  if (cfg_.beta1 < 0 || cfg_.beta1 >= 1 || cfg_.beta2 < 0 || cfg_.beta2 >= 1) {
    throw ConfigError("adamw: betas must lie in [0, 1)");
  }
  if (cfg_.eps <= 0) throw ConfigError("adamw: eps must be > 0");
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const auto& e : params.entries()) {
    m_.emplace_back(e.tensor.numel(), 0.0);
    v_.emplace_back(e.tensor.numel(), 0.0);
  }
}

void AdamW::step(ParamRegistry& params, double lr_t) {
  if (params.size() != m_.size()) {
    throw ShapeError("adamw: registry size changed since construction");
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < m_.size(); ++p) {
    auto& e = params.entries()[p];
    if (e.frozen) continue;
    if (e.tensor.numel() != m_[p].size()) {
      throw ShapeError("adamw: moment/parameter shape mismatch for '" +
                       e.name + "'");
    }
    auto& theta = e.tensor.values();
    const auto& grad = e.tensor.grad_view();
    const bool decayed =
        cfg_.weight_decay != 0.0 && (!cfg_.decay_filter || e.decay);
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m_[p][i] = cfg_.beta1 * m_[p][i] + (1.0 - cfg_.beta1) * g;
      v_[p][i] = cfg_.beta2 * v_[p][i] + (1.0 - cfg_.beta2) * g * g;
      const double mhat = m_[p][i] / bc1;
      const double vhat = v_[p][i] / bc2;
      double update = mhat / (std::sqrt(vhat) + cfg_.eps);
      if (decayed) update += cfg_.weight_decay * theta[i];
      theta[i] -= lr_t * update;
    }
  }
}

long Schedule::warmup_steps() const {
  return static_cast<long>(warmup_ratio * static_cast<double>(total_steps) +
                           0.5);
}

double Schedule::multiplier(long step) const {
  if (total_steps <= 0) throw ConfigError("schedule: total_steps must be > 0");
  if (step < 0) throw ConfigError("schedule: negative step");
  if (step > total_steps) {
    log_warning("schedule: step " + std::to_string(step) +
                " beyond total_steps, clamping lr to 0");
    return 0.0;
  }
  const long warmup = warmup_steps();
  if (step < warmup) {
    return static_cast<double>(step) / static_cast<double>(warmup);
  }
  const long denom = total_steps - warmup;
  if (denom <= 0) return step >= total_steps ? 0.0 : 1.0;
  return static_cast<double>(total_steps - step) / static_cast<double>(denom);
}

double schedule_lr(long step, const Schedule& schedule, double base_lr) {
  return base_lr * schedule.multiplier(step);
}

}  // namespace multitox
