#pragma once

#include <cstdint>
#include <vector>

#include "dg/config.hpp"
#include "dg/geometry.hpp"
#include "dg/nn.hpp"

namespace dg {

// Adds independent zero-mean Gaussian noise to each center coordinate and to
// each log-size; identity when train is false or sigma is 0.
std::vector<Box3D> add_proposal_noise(const std::vector<Box3D>& boxes, double sigma, Rng& rng,
                                      bool train);

// Everything a refinement forward leaves behind: the box trajectory (values,
// not graph nodes) and the per-layer offset predictions that the losses
// supervise against residual targets.
struct RefineTrace {
  // boxes[0] is the initial proposal set; boxes[l+1] the output of layer l.
  std::vector<std::vector<Box3D>> boxes;
  // layer_inputs[l] is what layer l actually saw (noised during training).
  std::vector<std::vector<Box3D>> layer_inputs;
  std::vector<ad::Var> d_center;   // per layer, K x 3
  std::vector<ad::Var> d_logsize;  // per layer, K x 3
  ad::Var final_feats;             // K x C
};

struct LayerProbe {
  AttnProbe self_attn, cross_attn;
  ad::Var bias_self, bias_cross;  // combined additive logits, invalid when all terms off
  Tensor focus_bias;              // the focus mask actually applied, empty when off
};

struct GlobalProbe {
  std::vector<LayerProbe> layers;
};

// Proposal-guided refinement stack. Each layer runs self-attention over the
// K proposals and cross-attention to the scene tokens; both attentions are
// biased by learned spatial terms, and a shared head emits per-layer center
// and log-size offsets that move the boxes between layers.
class GlobalDecoder {
 public:
  GlobalDecoder(ParamStore& ps, const RunConfig& cfg);

  // Runtime switches, copied from the config; tests and ablations flip them.
  bool use_explicit_bias, use_implicit_bias, use_focus_mask;
  double focus_tau, eps_box, noise_sigma;
  int64_t crop_max_points;

  // init_feats is K x C; scene_points carries raw xyz in its first three
  // columns. rng drives crop subsampling and (in training) proposal noise.
  RefineTrace operator()(Ctx& cx, ad::Var init_feats, const std::vector<Box3D>& init_boxes,
                         ad::Var scene_feats, const Tensor& scene_positions,
                         const Tensor& scene_points, Rng& rng, GlobalProbe* probe = nullptr) const;

  struct LayerOut {
    ad::Var feats, d_center, d_logsize;
  };
  // One layer on explicit inputs (exposed for tests).
  LayerOut layer_forward(Ctx& cx, size_t l, ad::Var feats, const std::vector<Box3D>& boxes,
                         ad::Var scene_feats, const Tensor& scene_positions,
                         const Tensor& scene_points, Rng& rng, LayerProbe* probe = nullptr) const;

  int64_t layer_count() const { return static_cast<int64_t>(layers_.size()); }

 private:
  // One spatial-bias instance: a learned gate per query picks out the
  // relevant components of the explicit pair geometry, and a pair MLP over
  // pooled crop codes supplies the implicit term.
  struct SpatialBias {
    Linear w_e;                  // C -> 5, no bias
    Linear w_i;                  // C -> C, no bias
    Linear encq_fc1, encq_fc2;   // per-side point-set encoders
    Linear enck_fc1, enck_fc2;
    Param* empty_q;
    Param* empty_k;
    Linear pair_q, pair_k;       // halves of the first pair-MLP layer
    Linear pair_fc2;
  };
  struct Layer {
    Linear w_p;  // 6 -> C location feature
    LayerNorm ln_self, ln_q, ln_kv, ln_ffn;
    MultiHeadAttention self_attn, cross_attn;
    FeedForward ffn;
    SpatialBias self_bias, cross_bias;
  };

  // key_crops is false for cross sites: their keys are single points whose
  // crop is never empty, so no key-side empty code exists there.
  SpatialBias make_bias(ParamStore& ps, const std::string& prefix, bool key_crops) const;
  // K x C pooled codes of the points inside each box, proposal-relative.
  ad::Var crop_codes(Ctx& cx, const SpatialBias& sb, bool query_side,
                     const std::vector<Box3D>& boxes, const Tensor& scene_points,
                     Rng& rng) const;
  ad::Var explicit_term(Ctx& cx, const SpatialBias& sb, ad::Var q_feats, const Tensor& centers_q,
                        const Tensor& centers_k) const;

  std::vector<Layer> layers_;
  LayerNorm ln_head_;
  Linear head_fc1_, head_fc2_;
  int64_t channels_;
};

}  // namespace dg
