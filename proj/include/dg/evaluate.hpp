#pragma once

#include <cstdint>
#include <vector>

#include "dg/config.hpp"
#include "dg/metrics.hpp"
#include "dg/model.hpp"
#include "dg/worldgen.hpp"

namespace dg {

// Scores a model over one dataset. Samples run independently (parallel when
// OpenMP is on) against read-only parameters; per-sample randomness (crop
// subsampling) comes from streams keyed by the config seed and the sample
// index, so results do not depend on thread count.
EvalNumbers evaluate_dataset(const Model& model, const Dataset& ds, const RunConfig& cfg,
                             int stage);

// Evaluation dataset for one paragraph length: the eval scenes of `cfg`
// with K-sentence paragraphs. Pure function of (cfg, seed, k).
Dataset eval_dataset_for_k(const RunConfig& cfg, int64_t k);

// Beam-search baseline numbers on the same dataset: per sentence, the model
// proposes ranked candidate boxes from its decoded query slots, and the
// search picks the most concentrated assignment.
EvalNumbers evaluate_beam_baseline(const Model& model, const Dataset& ds, const RunConfig& cfg,
                                   int64_t width, int64_t beam);

}  // namespace dg
