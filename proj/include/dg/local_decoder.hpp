#pragma once

#include <cstdint>
#include <vector>

#include "dg/config.hpp"
#include "dg/nn.hpp"

namespace dg {

// Shared transformer decoder producing initial grounding proposals: per
// sentence, self-attention over the query slots, cross-attention to scene
// tokens, FFN, then an FFN head that reads the sentence-level slot (row 0)
// into a box.
class LocalDecoder {
 public:
  LocalDecoder(ParamStore& ps, const RunConfig& cfg);

  // Scene keys/values shared by every sentence of a sample: features plus
  // sinusoidal embeddings of the token positions.
  ad::Var prepare_scene(Ctx& cx, ad::Var scene_feats, const Tensor& positions) const;

  // (T_k+1) x C decoded features for one sentence.
  ad::Var operator()(Ctx& cx, ad::Var queries, ad::Var scene_kv,
                     AttnProbe* cross_probe = nullptr) const;

  // rows x 6 box parameters: sigmoid-bounded centers in meters, strictly
  // positive sizes via softplus.
  ad::Var ground_head(Ctx& cx, ad::Var feats) const;

 private:
  struct Block {
    LayerNorm ln_self, ln_q, ln_kv, ln_ffn;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ffn;
  };
  std::vector<Block> blocks_;
  Param* q_pos_;
  LayerNorm ln_out_;
  Linear head_fc1_, head_fc2_;
  double room_x_, room_y_, room_z_;
  int64_t channels_;
};

}  // namespace dg
