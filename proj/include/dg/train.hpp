#pragma once

#include <cstdint>
#include <iosfwd>
#include <vector>

#include "dg/config.hpp"
#include "dg/model.hpp"
#include "dg/optimizer.hpp"
#include "dg/worldgen.hpp"

namespace dg {

struct TrainResult {
  int64_t steps_run = 0;
  std::vector<double> losses;  // one entry per step actually run
};

// Steps configured for a stage (stage1_steps/stage2_steps/stage3_steps).
int64_t stage_steps(const RunConfig& cfg, int stage);

// Runs steps [start_step, stage_steps) of one stage. Every random draw of a
// step comes from a stream keyed by (config seed, stage, step), so a resumed
// run reproduces the uninterrupted loss curve exactly. `log` (optional)
// receives one structured record per step.
TrainResult train_stage(Model& model, AdamW& opt, const Dataset& ds, const RunConfig& cfg,
                        int stage, int64_t start_step, std::ostream* log);

}  // namespace dg
