#include "dg/context_queries.hpp"

#include <cmath>
#include <string>

namespace dg {

ContextQueryGen::ContextQueryGen(ParamStore& ps, const RunConfig& cfg)
    : w_l_(ps, "cqg.w_l", cfg.channels, cfg.channels, /*bias=*/false),
      w_q_(ps, "cqg.w_q", cfg.channels, cfg.channels, /*bias=*/false),
      agg_ln_q_(ps, "cqg.agg.ln_q", cfg.channels),
      agg_ln_kv_(ps, "cqg.agg.ln_kv", cfg.channels),
      prop_ln_q_(ps, "cqg.prop.ln_q", cfg.channels),
      prop_ln_kv_(ps, "cqg.prop.ln_kv", cfg.channels),
      agg_attn_(ps, "cqg.agg.attn", cfg.channels, cfg.heads),
      prop_attn_(ps, "cqg.prop.attn", cfg.channels, cfg.heads),
      channels_(cfg.channels),
      heads_(cfg.heads),
      max_words_(cfg.max_words) {
  q_set_ = &ps.create("cqg.q_set", {cfg.slot_queries, cfg.channels}, Init::kTinyNormal);
  e_p_ = &ps.create("cqg.e_p", {cfg.max_sentences * (cfg.max_words + 1), cfg.channels},
                    Init::kTinyNormal);
  const int64_t d = cfg.channels / cfg.heads;
  for (int i = 0; i < 3; ++i) {
    const std::string p = "cqg.co" + std::to_string(i);
    stages_.push_back({&ps.create(p + ".w_set", {cfg.channels, d}, Init::kXavier),
                       &ps.create(p + ".w_enc", {cfg.channels, d}, Init::kXavier),
                       &ps.create(p + ".what_set", {d, cfg.channels}, Init::kXavier),
                       &ps.create(p + ".what_enc", {d, cfg.channels}, Init::kXavier)});
  }
  w_f_ = &ps.create("cqg.w_f", {4 * cfg.channels, cfg.channels}, Init::kXavier);
}

ad::Var ContextQueryGen::aggregate(Ctx& cx, const std::vector<ad::Var>& sentence_feats,
                                   const std::vector<uint8_t>& valid, AttnProbe* probe) const {
  ad::Graph& g = cx.g;
  require(sentence_feats.size() == valid.size(), "cqg: feature/valid size mismatch");

  // Concatenate valid sentences; slot k's rows take paragraph-global
  // positions k*(max_words+1) + [0 .. T_k]. Dropping padded slots is exact
  // masking: their keys would get zero weight anyway.
  std::vector<ad::Var> parts;
  std::vector<int64_t> pos_idx;
  for (size_t k = 0; k < sentence_feats.size(); ++k) {
    if (!valid[k]) continue;
    require(sentence_feats[k].valid(), "cqg: valid slot without features");
    parts.push_back(sentence_feats[k]);
    const int64_t rows = g.rows(sentence_feats[k]);
    require(rows <= max_words_ + 1, "cqg: sentence longer than max_words");
    for (int64_t r = 0; r < rows; ++r)
      pos_idx.push_back(static_cast<int64_t>(k) * (max_words_ + 1) + r);
  }
  require(!parts.empty(), "cqg: paragraph has no valid sentences");

  const ad::Var l = g.concat_rows(parts);
  const ad::Var l_prime = g.add(w_l_(cx, l), g.select_rows(cx(*e_p_), pos_idx));
  return agg_attn_(cx, agg_ln_q_(cx, cx(*q_set_)), agg_ln_kv_(cx, l_prime), {}, probe);
}

ad::Var ContextQueryGen::co_attend(Ctx& cx, ad::Var f_set, ad::Var f_enc,
                                   CoAttnProbe* co_probe) const {
  ad::Graph& g = cx.g;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(channels_ / heads_));
  std::vector<ad::Var> set_stages = {f_set};
  for (const Stage& st : stages_) {
    const ad::Var s = g.matmul(f_set, cx(*st.w_set));  // N_s x d
    const ad::Var e = g.matmul(f_enc, cx(*st.w_enc));  // M x d
    const ad::Var a = g.scale(g.matmul_nt(s, e), inv_sqrt_d);
    const ad::Var w_se = g.softmax(a);
    const ad::Var w_es = g.softmax(g.scale(g.matmul_nt(e, s), inv_sqrt_d));
    if (co_probe) {
      co_probe->set_rows.push_back(w_se);
      co_probe->enc_rows.push_back(w_es);
    }
    f_set = g.matmul(g.matmul(w_se, e), cx(*st.what_enc));
    f_enc = g.matmul(g.matmul(w_es, s), cx(*st.what_set));
    set_stages.push_back(f_set);
  }
  return g.matmul(g.concat_cols(set_stages), cx(*w_f_));
}

ad::Var ContextQueryGen::propagate(Ctx& cx, ad::Var sentence_feat, ad::Var f_set_fused,
                                   AttnProbe* probe) const {
  ad::Graph& g = cx.g;
  const ad::Var l_proj = w_q_(cx, sentence_feat);
  const ad::Var attended =
      prop_attn_(cx, prop_ln_q_(cx, l_proj), prop_ln_kv_(cx, f_set_fused), {}, probe);
  return g.add(attended, l_proj);
}

std::vector<ad::Var> ContextQueryGen::operator()(Ctx& cx,
                                                 const std::vector<ad::Var>& sentence_feats,
                                                 const std::vector<uint8_t>& valid,
                                                 ad::Var scene_feats, AttnProbe* probe,
                                                 CoAttnProbe* co_probe) const {
  const ad::Var f_set = aggregate(cx, sentence_feats, valid, probe);
  const ad::Var fused = co_attend(cx, f_set, scene_feats, co_probe);
  std::vector<ad::Var> out(sentence_feats.size());
  for (size_t k = 0; k < sentence_feats.size(); ++k)
    if (valid[k]) out[k] = propagate(cx, sentence_feats[k], fused, probe);
  return out;
}

std::vector<ad::Var> ContextQueryGen::bypass(Ctx& cx,
                                             const std::vector<ad::Var>& sentence_feats,
                                             const std::vector<uint8_t>& valid) const {
  require(sentence_feats.size() == valid.size(), "cqg: feature/valid size mismatch");
  std::vector<ad::Var> out(sentence_feats.size());
  for (size_t k = 0; k < sentence_feats.size(); ++k)
    if (valid[k]) out[k] = w_q_(cx, sentence_feats[k]);
  return out;
}

}  // namespace dg
