#include "dg/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <vector>


namespace dg {

AdamW::AdamW(const RunConfig& cfg)
    : lr_(cfg.lr),
      beta1_(cfg.adam_beta1),
      beta2_(cfg.adam_beta2),
      eps_(cfg.adam_eps),
      decay_(cfg.weight_decay),
      clip_(cfg.grad_clip),
      warmup_(cfg.warmup_steps) {}

double AdamW::step(Ctx& cx) {
  struct Live {
    Param* p;
    const Tensor* g;
  };
  std::vector<Live> live;
  for (auto& [param, var] : cx.bound) {
    if (!param->trainable) continue;
    if (!cx.g.has_grad(var)) continue;  // branch never reached the loss
    live.push_back({const_cast<Param*>(param), &cx.g.grad(var)});
  }
  // cx.bound hashes on heap addresses; summing in that order would make the
  // norm, and so the whole run, nondeterministic.
  std::sort(live.begin(), live.end(),
            [](const Live& a, const Live& b) { return a.p->name < b.p->name; });
  double sq = 0.0;
  for (const auto& lv : live)
    for (double x : lv.g->v) sq += x * x;
  const double norm = std::sqrt(sq);
  const double scale = (clip_ > 0.0 && norm > clip_) ? clip_ / norm : 1.0;

  t_ += 1;
  const double warm = warmup_ > 0 ? std::min(1.0, static_cast<double>(t_) / warmup_) : 1.0;
  const double lr_t = lr_ * warm;
  last_lr_ = lr_t;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));

  for (auto& lv : live) {
    Param& p = *lv.p;
    Slot& s = slots_[p.name];
    if (s.m.v.empty()) {
      s.m = Tensor(p.value.shape);
      s.v = Tensor(p.value.shape);
    }
    require(s.m.v.size() == p.value.v.size(), "optimizer: slot shape mismatch for " + p.name);
    for (size_t i = 0; i < p.value.v.size(); ++i) {
      const double g = lv.g->v[i] * scale;
      s.m.v[i] = beta1_ * s.m.v[i] + (1.0 - beta1_) * g;
      s.v.v[i] = beta2_ * s.v.v[i] + (1.0 - beta2_) * g * g;
      const double mhat = s.m.v[i] / bc1;
      const double vhat = s.v.v[i] / bc2;
      p.value.v[i] -= lr_t * (mhat / (std::sqrt(vhat) + eps_) + decay_ * p.value.v[i]);
    }
  }
  return norm;
}

}  // namespace dg
