#pragma once

#include <cstdint>
#include <vector>

#include "dg/config.hpp"
#include "dg/nn.hpp"

namespace dg {

// Captures the bidirectional co-attention maps: stage i contributes
// softmax(A_i) in `set_rows` and softmax(A_i^T) in `enc_rows`.
struct CoAttnProbe {
  std::vector<ad::Var> set_rows;
  std::vector<ad::Var> enc_rows;
};

// Paragraph context aggregation, scene co-attention, and propagation back
// into per-sentence contextual queries.
class ContextQueryGen {
 public:
  ContextQueryGen(ParamStore& ps, const RunConfig& cfg);

  // sentence_feats[k] is the (T_k+1) x C output of the text encoder for
  // slot k, or an invalid Var for padded slots (valid[k] == 0). Returns one
  // (T_k+1) x C query set per valid slot; padded slots stay invalid.
  std::vector<ad::Var> operator()(Ctx& cx, const std::vector<ad::Var>& sentence_feats,
                                  const std::vector<uint8_t>& valid, ad::Var scene_feats,
                                  AttnProbe* probe = nullptr,
                                  CoAttnProbe* co_probe = nullptr) const;

  // Ablation bypass: Q_k = L_k W_q, no paragraph or scene context.
  std::vector<ad::Var> bypass(Ctx& cx, const std::vector<ad::Var>& sentence_feats,
                              const std::vector<uint8_t>& valid) const;

  // Compact-set aggregation alone (exposed for tests): N_s x C.
  ad::Var aggregate(Ctx& cx, const std::vector<ad::Var>& sentence_feats,
                    const std::vector<uint8_t>& valid, AttnProbe* probe = nullptr) const;

  // Three-stage bidirectional fusion (exposed for tests): N_s x C.
  ad::Var co_attend(Ctx& cx, ad::Var f_set, ad::Var f_enc, CoAttnProbe* co_probe = nullptr) const;

 private:
  ad::Var propagate(Ctx& cx, ad::Var sentence_feat, ad::Var f_set_fused,
                    AttnProbe* probe) const;

  Param* q_set_;
  Param* e_p_;
  Linear w_l_, w_q_;
  LayerNorm agg_ln_q_, agg_ln_kv_, prop_ln_q_, prop_ln_kv_;
  MultiHeadAttention agg_attn_, prop_attn_;
  struct Stage {
    Param* w_set;
    Param* w_enc;
    Param* what_set;
    Param* what_enc;
  };
  std::vector<Stage> stages_;
  Param* w_f_;
  int64_t channels_, heads_, max_words_;
};

}  // namespace dg
