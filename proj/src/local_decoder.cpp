#include "dg/local_decoder.hpp"

#include <string>

namespace dg {

LocalDecoder::LocalDecoder(ParamStore& ps, const RunConfig& cfg)
    : q_pos_(&ps.create("local.q_pos", {cfg.max_words + 1, cfg.channels}, Init::kTinyNormal)),
      ln_out_(ps, "local.ln_out", cfg.channels),
      head_fc1_(ps, "local.head.fc1", cfg.channels, cfg.channels),
      head_fc2_(ps, "local.head.fc2", cfg.channels, 6),
      room_x_(cfg.room_x),
      room_y_(cfg.room_y),
      room_z_(cfg.room_z),
      channels_(cfg.channels) {
  for (int64_t b = 0; b < cfg.local_blocks; ++b) {
    const std::string p = "local.block" + std::to_string(b) + ".";
    Block blk;
    blk.ln_self = LayerNorm(ps, p + "ln_self", cfg.channels);
    blk.ln_q = LayerNorm(ps, p + "ln_q", cfg.channels);
    blk.ln_kv = LayerNorm(ps, p + "ln_kv", cfg.channels);
    blk.ln_ffn = LayerNorm(ps, p + "ln_ffn", cfg.channels);
    blk.self_attn = MultiHeadAttention(ps, p + "self", cfg.channels, cfg.heads);
    blk.cross_attn = MultiHeadAttention(ps, p + "cross", cfg.channels, cfg.heads);
    blk.ffn = FeedForward(ps, p + "ffn", cfg.channels, cfg.channels * cfg.ffn_mult);
    blocks_.push_back(blk);
  }
}

ad::Var LocalDecoder::prepare_scene(Ctx& cx, ad::Var scene_feats, const Tensor& positions) const {
  require(positions.rows() == cx.g.rows(scene_feats),
          "local decoder: scene positions and features disagree on token count");
  return cx.g.add_const(scene_feats,
                        sinusoidal_positions(positions, channels_, room_x_, room_y_, room_z_));
}

ad::Var LocalDecoder::operator()(Ctx& cx, ad::Var queries, ad::Var scene_kv,
                                 AttnProbe* cross_probe) const {
  ad::Graph& g = cx.g;
  const int64_t rows = g.rows(queries);
  require(rows <= q_pos_->value.rows(), "local decoder: more query slots than positions");
  std::vector<int64_t> idx(static_cast<size_t>(rows));
  for (int64_t i = 0; i < rows; ++i) idx[static_cast<size_t>(i)] = i;
  ad::Var x = g.add(queries, g.select_rows(cx(*q_pos_), idx));
  for (const Block& blk : blocks_) {
    const ad::Var xn = blk.ln_self(cx, x);
    x = g.add(x, blk.self_attn(cx, xn, xn));
    x = g.add(x, blk.cross_attn(cx, blk.ln_q(cx, x), blk.ln_kv(cx, scene_kv), {}, cross_probe));
    x = g.add(x, blk.ffn(cx, blk.ln_ffn(cx, x)));
  }
  return ln_out_(cx, x);
}

ad::Var LocalDecoder::ground_head(Ctx& cx, ad::Var feats) const {
  ad::Graph& g = cx.g;
  const ad::Var raw = head_fc2_(cx, g.gelu(head_fc1_(cx, feats)));
  const ad::Var c01 = g.sigmoid(g.slice_cols(raw, 0, 3));
  Tensor ext({g.rows(raw), 3});
  for (int64_t i = 0; i < ext.rows(); ++i) {
    ext.at(i, 0) = room_x_;
    ext.at(i, 1) = room_y_;
    ext.at(i, 2) = room_z_;
  }
  const ad::Var center = g.mul_const(c01, ext);
  const ad::Var size = g.softplus(g.slice_cols(raw, 3, 6));
  return g.concat_cols({center, size});
}

}  // namespace dg
