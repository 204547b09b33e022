#pragma once

#include <cstdint>
#include <vector>

#include "dg/config.hpp"
#include "dg/context_queries.hpp"
#include "dg/encoders.hpp"
#include "dg/global_decoder.hpp"
#include "dg/local_decoder.hpp"
#include "dg/nn.hpp"
#include "dg/worldgen.hpp"

namespace dg {

struct ModelOutput {
  std::vector<int64_t> slots;      // valid slot indices in row order
  ad::Var scene_feats;             // M x C encoded scene tokens
  Tensor scene_positions;          // M x 3 token sites
  std::vector<ad::Var> decoded;    // per valid sentence, the (T+1) x C states
  ad::Var init_params;             // K x 6 box parameters on the graph
  std::vector<Box3D> init_boxes;   // decoded values, clamped outside training
  bool refined = false;
  RefineTrace trace;

  const std::vector<Box3D>& final_boxes() const {
    return refined ? trace.boxes.back() : init_boxes;
  }
};

// Ground-truth boxes for the valid sentences of a sample, in slot order.
std::vector<Box3D> sample_targets(const Scene& scene, const DenseSample& sample);

// Full grounding pipeline over one scene/paragraph pair. Stages gate how
// much of it runs: 1 decodes proposals from plain per-sentence queries,
// 2 switches to paragraph-and-scene contextual queries, 3 adds the
// proposal-guided refinement stack.
class Model {
 public:
  Model(ParamStore& ps, const RunConfig& cfg);

  // Ablation switch; when off, every stage falls back to plain queries.
  bool use_cqg;

  ModelOutput operator()(Ctx& cx, const Scene& scene, const DenseSample& sample, int stage,
                         Rng& rng, GlobalProbe* probe = nullptr) const;

  SceneEncoder scene_enc;
  TextEncoder text_enc;
  ContextQueryGen cqg;
  LocalDecoder local;
  GlobalDecoder global;

 private:
  RunConfig cfg_;
};

}  // namespace dg
