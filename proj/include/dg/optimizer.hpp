#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "dg/autodiff.hpp"
#include "dg/config.hpp"
#include "dg/nn.hpp"
#include "dg/tensor.hpp"

namespace dg {

// Adaptive moment optimizer with decoupled weight decay, linear warmup to a
// constant rate, and global gradient-norm clipping. Moment slots live here,
// keyed by parameter name, so a checkpoint can carry them.
class AdamW {
 public:
  explicit AdamW(const RunConfig& cfg);

  // Applies one update from the gradients bound in `cx`. Parameters whose
  // leaf never received a gradient this step (unused branches) keep their
  // moments and skip the decayed update. Returns the pre-clip global norm.
  double step(Ctx& cx);

  int64_t steps_done() const { return t_; }
  double last_lr() const { return last_lr_; }

  struct Slot {
    Tensor m, v;
  };
  std::map<std::string, Slot>& slots() { return slots_; }
  const std::map<std::string, Slot>& slots() const { return slots_; }
  int64_t& step_counter() { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_, decay_, clip_;
  int64_t warmup_;
  int64_t t_ = 0;
  double last_lr_ = 0.0;
  std::map<std::string, Slot> slots_;
};

}  // namespace dg
