#pragma once

#include <cstdint>
#include <string>

#include "dg/nn.hpp"
#include "dg/optimizer.hpp"

namespace dg {

// What a checkpoint carries besides tensors. `step` counts completed steps
// within `stage`; the config echo is the full canonical text of the config
// that built the parameters.
struct TrainState {
  int32_t stage = 0;
  int64_t step = 0;
  std::string config_text;
  std::string rng_state;
};

// Versioned binary blob: header, train state, named parameter tensors, then
// optimizer moments when `opt` is given. Deterministic content, no clocks.
void save_checkpoint(const std::string& path, const ParamStore& ps, const AdamW* opt,
                     const TrainState& st);

// Loads tensors into an existing store (the model must already be built, so
// names and shapes are known). Any name or shape mismatch throws. `opt` may
// be null to skip restoring moments even when the file has them.
TrainState load_checkpoint(const std::string& path, ParamStore& ps, AdamW* opt);

// Reads only the embedded config text (for building the model before a full
// load).
std::string peek_checkpoint_config(const std::string& path);

}  // namespace dg
