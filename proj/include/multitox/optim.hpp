#ifndef MULTITOX_OPTIM_HPP
#define MULTITOX_OPTIM_HPP

#include <vector>

#include "multitox/params.hpp"

namespace multitox {

struct AdamWConfig {
  double lr = 1e-5;  // base learning rate
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
  // When set, decay skips entries registered with decay=false (biases,
  // LayerNorm gains/biases).
  bool decay_filter = true;
};

struct ClipConfig {
  double max_norm = 1.0;
};

// Scales all grads of non-frozen params by max_norm/||g||_2 when the global
// norm exceeds max_norm.  Returns the factor applied (1 when unchanged).
double clip_global_norm(ParamRegistry& params, double max_norm);

// AdamW with decoupled weight decay:
//   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
//   theta <- theta - lr_t * (mhat / (sqrt(vhat) + eps) + lambda * theta)
// with decay applied to the pre-update parameter value.
class AdamW {
 public:
  AdamW(const ParamRegistry& params, AdamWConfig cfg);

  // lr_t is the scheduled learning rate for this step.
  void step(ParamRegistry& params, double lr_t);

  long step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  AdamWConfig cfg_;
  long t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

// Linear warmup from 0 to 1 over warmup_steps, then linear decay to 0 at
// total_steps.
struct Schedule {
  long total_steps = 0;
  double warmup_ratio = 0.1;

  long warmup_steps() const;
  double multiplier(long step) const;  // in [0, 1]
};

double schedule_lr(long step, const Schedule& schedule, double base_lr);

}  // namespace multitox

#endif
