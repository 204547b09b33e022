#include "dg/global_decoder.hpp"

#include <cmath>
#include <string>

namespace dg {

std::vector<Box3D> add_proposal_noise(const std::vector<Box3D>& boxes, double sigma, Rng& rng,
                                      bool train) {
  if (!train || sigma == 0.0) return boxes;
  std::vector<Box3D> out = boxes;
  for (Box3D& b : out)
    for (int d = 0; d < 3; ++d) {
      b.center[d] += rng.normal(0.0, sigma);
      b.size[d] *= std::exp(rng.normal(0.0, sigma));
    }
  return out;
}

namespace {

Tensor box_params_tensor(const std::vector<Box3D>& boxes) {
  Tensor t({static_cast<int64_t>(boxes.size()), 6});
  for (size_t i = 0; i < boxes.size(); ++i) {
    const std::array<double, 6> p = boxes[i].params();
    for (int j = 0; j < 6; ++j) t.at(static_cast<int64_t>(i), j) = p[j];
  }
  return t;
}

Tensor centers_tensor(const std::vector<Box3D>& boxes) {
  Tensor t({static_cast<int64_t>(boxes.size()), 3});
  for (size_t i = 0; i < boxes.size(); ++i)
    for (int d = 0; d < 3; ++d) t.at(static_cast<int64_t>(i), d) = boxes[i].center[d];
  return t;
}

}  // namespace

GlobalDecoder::GlobalDecoder(ParamStore& ps, const RunConfig& cfg)
    : use_explicit_bias(cfg.use_explicit_bias),
      use_implicit_bias(cfg.use_implicit_bias),
      use_focus_mask(cfg.use_focus_mask),
      focus_tau(cfg.focus_tau),
      eps_box(cfg.eps_box),
      noise_sigma(cfg.noise_sigma),
      crop_max_points(cfg.crop_max_points),
      ln_head_(ps, "global.ln_head", cfg.channels),
      head_fc1_(ps, "global.head.fc1", cfg.channels, cfg.channels),
      head_fc2_(ps, "global.head.fc2", cfg.channels, 6),
      channels_(cfg.channels) {
  for (int64_t l = 0; l < cfg.global_layers; ++l) {
    const std::string p = "global.layer" + std::to_string(l) + ".";
    Layer lay;
    lay.w_p = Linear(ps, p + "w_p", 6, cfg.channels, false);
    lay.ln_self = LayerNorm(ps, p + "ln_self", cfg.channels);
    lay.ln_q = LayerNorm(ps, p + "ln_q", cfg.channels);
    lay.ln_kv = LayerNorm(ps, p + "ln_kv", cfg.channels);
    lay.ln_ffn = LayerNorm(ps, p + "ln_ffn", cfg.channels);
    lay.self_attn = MultiHeadAttention(ps, p + "self", cfg.channels, cfg.heads);
    lay.cross_attn = MultiHeadAttention(ps, p + "cross", cfg.channels, cfg.heads,
                                        cfg.channels + 6, cfg.channels + 3);
    lay.ffn = FeedForward(ps, p + "ffn", cfg.channels, cfg.channels * cfg.ffn_mult);
    lay.self_bias = make_bias(ps, p + "self.sp.", true);
    lay.cross_bias = make_bias(ps, p + "cross.sp.", false);
    layers_.push_back(lay);
  }
}

GlobalDecoder::SpatialBias GlobalDecoder::make_bias(ParamStore& ps, const std::string& prefix,
                                                    bool key_crops) const {
  SpatialBias sb;
  sb.w_e = Linear(ps, prefix + "w_e", channels_, 5, false);
  sb.w_i = Linear(ps, prefix + "w_i", channels_, channels_, false);
  sb.encq_fc1 = Linear(ps, prefix + "encq.fc1", 3, channels_);
  sb.encq_fc2 = Linear(ps, prefix + "encq.fc2", channels_, channels_);
  sb.enck_fc1 = Linear(ps, prefix + "enck.fc1", 3, channels_);
  sb.enck_fc2 = Linear(ps, prefix + "enck.fc2", channels_, channels_);
  sb.empty_q = &ps.create(prefix + "encq.empty", {1, channels_}, Init::kTinyNormal);
  sb.empty_k = key_crops ? &ps.create(prefix + "enck.empty", {1, channels_}, Init::kTinyNormal)
                         : nullptr;
  sb.pair_q = Linear(ps, prefix + "pair.wq", channels_, channels_, false);
  sb.pair_k = Linear(ps, prefix + "pair.wk", channels_, channels_);
  sb.pair_fc2 = Linear(ps, prefix + "pair.fc2", channels_, channels_);
  return sb;
}

ad::Var GlobalDecoder::crop_codes(Ctx& cx, const SpatialBias& sb, bool query_side,
                                  const std::vector<Box3D>& boxes, const Tensor& scene_points,
                                  Rng& rng) const {
  ad::Graph& g = cx.g;
  const Linear& fc1 = query_side ? sb.encq_fc1 : sb.enck_fc1;
  const Linear& fc2 = query_side ? sb.encq_fc2 : sb.enck_fc2;
  Param* empty = query_side ? sb.empty_q : sb.empty_k;
  std::vector<ad::Var> rows;
  for (const Box3D& b : boxes) {
    const std::vector<int64_t> idx = points_in_box(scene_points, b, crop_max_points, rng);
    if (idx.empty()) {
      require(empty != nullptr, "global decoder: this side has no empty-crop code");
      rows.push_back(cx(*empty));
      continue;
    }
    Tensor rel({static_cast<int64_t>(idx.size()), 3});
    for (size_t r = 0; r < idx.size(); ++r)
      for (int d = 0; d < 3; ++d)
        rel.at(static_cast<int64_t>(r), d) =
            (scene_points.at(idx[r], d) - b.center[d]) / b.size[d];
    const ad::Var enc = g.gelu(fc2(cx, g.gelu(fc1(cx, g.constant(rel)))));
    std::vector<int64_t> all(idx.size());
    for (size_t r = 0; r < idx.size(); ++r) all[r] = static_cast<int64_t>(r);
    rows.push_back(g.group_max(enc, {all}));
  }
  return g.concat_rows(rows);
}

ad::Var GlobalDecoder::explicit_term(Ctx& cx, const SpatialBias& sb, ad::Var q_feats,
                                     const Tensor& centers_q, const Tensor& centers_k) const {
  ad::Graph& g = cx.g;
  const Tensor fe = pairwise_explicit_features(centers_q, centers_k);
  const int64_t nq = centers_q.rows(), nk = centers_k.rows();
  const ad::Var gate = sb.w_e(cx, q_feats);
  std::vector<ad::Var> rows;
  for (int64_t i = 0; i < nq; ++i) {
    Tensor block({nk, 5});
    for (int64_t j = 0; j < nk; ++j)
      for (int64_t c = 0; c < 5; ++c) block.at(j, c) = fe.at(i * nk + j, c);
    rows.push_back(g.matmul_nt(g.slice_rows(gate, i, i + 1), g.constant(block)));
  }
  return g.concat_rows(rows);
}

GlobalDecoder::LayerOut GlobalDecoder::layer_forward(Ctx& cx, size_t l, ad::Var feats,
                                                     const std::vector<Box3D>& boxes,
                                                     ad::Var scene_feats,
                                                     const Tensor& scene_positions,
                                                     const Tensor& scene_points, Rng& rng,
                                                     LayerProbe* probe) const {
  ad::Graph& g = cx.g;
  const Layer& lay = layers_.at(l);
  const int64_t k = static_cast<int64_t>(boxes.size());
  require(k >= 1, "global decoder: need at least one proposal");
  require(g.rows(feats) == k, "global decoder: feature rows must match proposal count");
  const Tensor bp = box_params_tensor(boxes);
  const Tensor cq = centers_tensor(boxes);
  require(scene_positions.cols() == 3, "global decoder: scene positions must be M x 3");
  require(scene_positions.rows() == g.rows(scene_feats),
          "global decoder: scene positions and features disagree on token count");

  ad::Var x = g.add(feats, lay.w_p(cx, g.constant(bp)));

  // self-attention over proposals, biased by pairwise geometry
  ad::Var bias_s;
  if (use_explicit_bias) bias_s = explicit_term(cx, lay.self_bias, x, cq, cq);
  if (use_implicit_bias) {
    const ad::Var codes_q = crop_codes(cx, lay.self_bias, true, boxes, scene_points, rng);
    const ad::Var codes_k = crop_codes(cx, lay.self_bias, false, boxes, scene_points, rng);
    const ad::Var pre = g.pair_sum(lay.self_bias.pair_q(cx, codes_q),
                                   lay.self_bias.pair_k(cx, codes_k));
    const ad::Var fi = lay.self_bias.pair_fc2(cx, g.gelu(pre));
    const ad::Var gate = lay.self_bias.w_i(cx, x);
    std::vector<ad::Var> rows;
    for (int64_t i = 0; i < k; ++i)
      rows.push_back(
          g.matmul_nt(g.slice_rows(gate, i, i + 1), g.slice_rows(fi, i * k, (i + 1) * k)));
    const ad::Var ai = g.concat_rows(rows);
    bias_s = bias_s.valid() ? g.add(bias_s, ai) : ai;
  }
  if (probe) probe->bias_self = bias_s;
  const ad::Var xn = lay.ln_self(cx, x);
  x = g.add(x, lay.self_attn(cx, xn, xn, bias_s, probe ? &probe->self_attn : nullptr));

  // cross-attention to scene tokens; keys are points with epsilon boxes
  ad::Var bias_c;
  if (use_explicit_bias) bias_c = explicit_term(cx, lay.cross_bias, x, cq, scene_positions);
  if (use_implicit_bias) {
    // every epsilon key crops to exactly its own point, which is the origin
    // in box-relative coordinates, so one key code serves all M keys and the
    // pair matrix factors into a single column
    const ad::Var codes_q = crop_codes(cx, lay.cross_bias, true, boxes, scene_points, rng);
    const ad::Var code_k = g.gelu(
        lay.cross_bias.enck_fc2(cx, g.gelu(lay.cross_bias.enck_fc1(cx, g.constant(Tensor({1, 3}))))));
    const ad::Var pre = g.pair_sum(lay.cross_bias.pair_q(cx, codes_q),
                                   lay.cross_bias.pair_k(cx, code_k));
    const ad::Var fi = lay.cross_bias.pair_fc2(cx, g.gelu(pre));  // K x C
    const ad::Var gate = lay.cross_bias.w_i(cx, x);
    Tensor ones_c({channels_, 1});
    for (double& v : ones_c.v) v = 1.0;
    Tensor ones_m({1, scene_positions.rows()});
    for (double& v : ones_m.v) v = 1.0;
    const ad::Var col = g.matmul(g.mul(gate, fi), g.constant(ones_c));
    const ad::Var ai = g.matmul(col, g.constant(ones_m));
    bias_c = bias_c.valid() ? g.add(bias_c, ai) : ai;
  }
  if (use_focus_mask) {
    const FocusedRegion fr = focused_region(cq);
    const std::vector<double> mask = focused_region_mask(fr, focus_tau, scene_positions);
    Tensor af({k, scene_positions.rows()});
    for (int64_t i = 0; i < k; ++i)
      for (int64_t j = 0; j < af.cols(); ++j) af.at(i, j) = mask[static_cast<size_t>(j)];
    if (probe) probe->focus_bias = af;
    bias_c = bias_c.valid() ? g.add_const(bias_c, af) : g.constant(af);
  }
  if (probe) probe->bias_cross = bias_c;
  const ad::Var q_in = g.concat_cols({g.constant(bp), lay.ln_q(cx, x)});
  const ad::Var kv_in =
      g.concat_cols({g.constant(scene_positions), lay.ln_kv(cx, scene_feats)});
  x = g.add(x, lay.cross_attn(cx, q_in, kv_in, bias_c, probe ? &probe->cross_attn : nullptr));

  x = g.add(x, lay.ffn(cx, lay.ln_ffn(cx, x)));

  const ad::Var raw = head_fc2_(cx, g.gelu(head_fc1_(cx, ln_head_(cx, x))));
  return {x, g.slice_cols(raw, 0, 3), g.slice_cols(raw, 3, 6)};
}

RefineTrace GlobalDecoder::operator()(Ctx& cx, ad::Var init_feats,
                                      const std::vector<Box3D>& init_boxes, ad::Var scene_feats,
                                      const Tensor& scene_positions, const Tensor& scene_points,
                                      Rng& rng, GlobalProbe* probe) const {
  ad::Graph& g = cx.g;
  RefineTrace tr;
  tr.boxes.push_back(init_boxes);
  ad::Var x = init_feats;
  std::vector<Box3D> cur = init_boxes;
  for (size_t l = 0; l < layers_.size(); ++l) {
    const std::vector<Box3D> fed = add_proposal_noise(cur, noise_sigma, rng, cx.train);
    tr.layer_inputs.push_back(fed);
    if (probe) probe->layers.emplace_back();
    const LayerOut out = layer_forward(cx, l, x, fed, scene_feats, scene_positions, scene_points,
                                       rng, probe ? &probe->layers.back() : nullptr);
    x = out.feats;
    tr.d_center.push_back(out.d_center);
    tr.d_logsize.push_back(out.d_logsize);
    const Tensor& dc = g.val(out.d_center);
    const Tensor& ds = g.val(out.d_logsize);
    std::vector<Box3D> next = fed;
    for (size_t i = 0; i < next.size(); ++i)
      for (int d = 0; d < 3; ++d) {
        next[i].center[d] += dc.at(static_cast<int64_t>(i), d);
        next[i].size[d] *= std::exp(ds.at(static_cast<int64_t>(i), d));
      }
    tr.boxes.push_back(next);
    cur = next;
  }
  tr.final_feats = x;
  return tr;
}

}  // namespace dg
