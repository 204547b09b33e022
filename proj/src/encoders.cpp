#include "dg/encoders.hpp"

#include <algorithm>
#include <cmath>

#include "dg/geometry.hpp"
#include "dg/kernels.hpp"
#include "dg/vocab.hpp"

namespace dg {

SceneEncoder::SceneEncoder(ParamStore& ps, const RunConfig& cfg)
    : mlp1_(ps, "scene.tok.mlp1", 3 + cfg.color_channels, cfg.channels),
      mlp2_(ps, "scene.tok.mlp2", cfg.channels, cfg.channels),
      ln_out_(ps, "scene.ln_out", cfg.channels),
      tokens_(cfg.scene_tokens),
      neighbors_(cfg.ball_neighbors),
      channels_(cfg.channels),
      radius_(cfg.ball_radius),
      locality_(cfg.locality_radius) {
  blocks_.reserve(static_cast<size_t>(cfg.enc_blocks));
  for (int64_t b = 0; b < cfg.enc_blocks; ++b)
    blocks_.emplace_back(ps, "scene.block" + std::to_string(b), cfg.channels, cfg.heads,
                         cfg.ffn_mult);
}

ad::Var SceneEncoder::operator()(Ctx& cx, const Tensor& points, Tensor& out_positions,
                                 AttnProbe* probe) const {
  ad::Graph& g = cx.g;
  const int64_t n = points.rows();
  const int64_t f = points.cols() - 3;
  require(f >= 0, "scene encoder: points need xyz columns");
  require(n >= tokens_,
          "scene encoder: scene has fewer points than scene_tokens; lower scene_tokens or "
          "raise points per scene");

  Tensor xyz({n, 3});
  for (int64_t i = 0; i < n; ++i)
    for (int64_t d = 0; d < 3; ++d) xyz.at(i, d) = points.at(i, d);

  const std::vector<int64_t> seeds = kernels::farthest_point_sample(xyz.data(), n, tokens_);
  out_positions = Tensor({tokens_, 3});
  for (int64_t i = 0; i < tokens_; ++i)
    for (int64_t d = 0; d < 3; ++d) out_positions.at(i, d) = points.at(seeds[static_cast<size_t>(i)], d);

  // Ball query: up to `neighbors_` nearest points within the radius, sorted
  // by (distance, index); missing slots stay all-zero rows.
  Tensor sq({tokens_, n});
  kernels::pairwise_sqdist(out_positions.data(), tokens_, xyz.data(), n, sq.data());
  const double r2 = radius_ * radius_;
  Tensor grouped({tokens_ * neighbors_, 3 + f});
  std::vector<std::pair<double, int64_t>> near;
  for (int64_t i = 0; i < tokens_; ++i) {
    near.clear();
    for (int64_t j = 0; j < n; ++j)
      if (sq.at(i, j) <= r2) near.push_back({sq.at(i, j), j});
    std::sort(near.begin(), near.end());
    const int64_t take = std::min<int64_t>(static_cast<int64_t>(near.size()), neighbors_);
    for (int64_t s = 0; s < take; ++s) {
      const int64_t j = near[static_cast<size_t>(s)].second;
      const int64_t row = i * neighbors_ + s;
      for (int64_t d = 0; d < 3; ++d)
        grouped.at(row, d) = points.at(j, d) - out_positions.at(i, d);
      for (int64_t c = 0; c < f; ++c) grouped.at(row, 3 + c) = points.at(j, 3 + c);
    }
  }

  ad::Var per_point = g.gelu(mlp2_(cx, g.gelu(mlp1_(cx, g.constant(grouped)))));
  std::vector<std::vector<int64_t>> groups(static_cast<size_t>(tokens_));
  for (int64_t i = 0; i < tokens_; ++i) {
    groups[static_cast<size_t>(i)].resize(static_cast<size_t>(neighbors_));
    for (int64_t s = 0; s < neighbors_; ++s)
      groups[static_cast<size_t>(i)][static_cast<size_t>(s)] = i * neighbors_ + s;
  }
  ad::Var x = g.group_max(per_point, std::move(groups));

  // Radius mask in the first block only; the seed itself is never masked.
  Tensor mask({tokens_, tokens_});
  Tensor tok_sq({tokens_, tokens_});
  kernels::pairwise_sqdist(out_positions.data(), tokens_, out_positions.data(), tokens_,
                           tok_sq.data());
  const double l2 = locality_ * locality_;
  for (int64_t i = 0; i < tokens_; ++i)
    for (int64_t j = 0; j < tokens_; ++j)
      mask.at(i, j) = tok_sq.at(i, j) < l2 ? 0.0 : kMaskedLogit;

  for (size_t b = 0; b < blocks_.size(); ++b)
    x = blocks_[b](cx, x, b == 0 ? g.constant(mask) : ad::Var{}, probe);
  return ln_out_(cx, x);
}

TextEncoder::TextEncoder(ParamStore& ps, const RunConfig& cfg)
    : ln_out_(ps, "text.ln_out", cfg.channels), max_words_(cfg.max_words) {
  table_ = &ps.create("text.table", {vocab::size(), cfg.channels}, Init::kTinyNormal);
  start_ = &ps.create("text.start", {1, cfg.channels}, Init::kTinyNormal);
  pos_ = &ps.create("text.pos", {cfg.max_words + 1, cfg.channels}, Init::kTinyNormal);
  blocks_.reserve(static_cast<size_t>(cfg.text_blocks));
  for (int64_t b = 0; b < cfg.text_blocks; ++b)
    blocks_.emplace_back(ps, "text.block" + std::to_string(b), cfg.channels, cfg.heads,
                         cfg.ffn_mult);
}

ad::Var TextEncoder::operator()(Ctx& cx, const std::vector<int64_t>& tokens,
                                AttnProbe* probe) const {
  ad::Graph& g = cx.g;
  const int64_t t = static_cast<int64_t>(tokens.size());
  require(t >= 1, "text encoder: empty sentence");
  require(t <= max_words_, "text encoder: sentence longer than max_words");
  for (int64_t id : tokens)
    require(id >= 0 && id < vocab::size(), "text encoder: token id out of vocabulary");

  ad::Var x = g.concat_rows({cx(*start_), g.embed(cx(*table_), tokens)});
  std::vector<int64_t> pos_idx(static_cast<size_t>(t) + 1);
  for (int64_t i = 0; i <= t; ++i) pos_idx[static_cast<size_t>(i)] = i;
  x = g.add(x, g.select_rows(cx(*pos_), pos_idx));
  for (const auto& blk : blocks_) x = blk(cx, x, {}, probe);
  return ln_out_(cx, x);
}

std::vector<int64_t> erase_words(const std::vector<int64_t>& tokens, double p, Rng& rng) {
  require(p >= 0.0 && p < 1.0, "erase_words: p must be in [0,1)");
  std::vector<int64_t> out = tokens;
  for (int64_t& id : out) {
    if (id == vocab::kPad || id == vocab::kMask) continue;
    if (rng.uniform() < p) id = vocab::kMask;
  }
  return out;
}

}  // namespace dg
