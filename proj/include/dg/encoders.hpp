#pragma once

#include <cstdint>
#include <vector>

#include "dg/config.hpp"
#include "dg/nn.hpp"
#include "dg/tensor.hpp"

namespace dg {

// Point tokenizer + masked self-attention stack. Produces M token features
// aligned to M farthest-point-sampled positions.
class SceneEncoder {
 public:
  SceneEncoder(ParamStore& ps, const RunConfig& cfg);

  // points: N x (3+F) raw scene points. Fills `out_positions` (M x 3) and
  // returns the M x C encoded features on the graph.
  ad::Var operator()(Ctx& cx, const Tensor& points, Tensor& out_positions,
                     AttnProbe* probe = nullptr) const;

 private:
  Linear mlp1_, mlp2_;
  std::vector<SelfAttentionBlock> blocks_;
  LayerNorm ln_out_;
  int64_t tokens_, neighbors_, channels_;
  double radius_, locality_;
};

// Shared 3-block sentence encoder. Slot 0 of the output is the trained
// sentence-start embedding's feature, slots 1..T the word features.
class TextEncoder {
 public:
  TextEncoder(ParamStore& ps, const RunConfig& cfg);

  ad::Var operator()(Ctx& cx, const std::vector<int64_t>& tokens,
                     AttnProbe* probe = nullptr) const;

 private:
  Param* table_;
  Param* start_;
  Param* pos_;
  std::vector<SelfAttentionBlock> blocks_;
  LayerNorm ln_out_;
  int64_t max_words_;
};

// Each real word token is independently replaced by the mask id with
// probability p. Pad and mask ids are left alone. Training-time only;
// callers gate on the mode.
std::vector<int64_t> erase_words(const std::vector<int64_t>& tokens, double p, Rng& rng);

}  // namespace dg
