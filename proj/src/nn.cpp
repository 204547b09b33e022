#include "dg/nn.hpp"

#include <cmath>

namespace dg {

Param& ParamStore::create(const std::string& name, const std::vector<int64_t>& shape,
                          Init init) {
  require(!name.empty(), "params: empty name");
  require(params_.find(name) == params_.end(), "params: duplicate name '" + name + "'");
  require(shape.size() == 2, "params: '" + name + "' needs a 2-d shape");
  auto p = std::make_unique<Param>();
  p->name = name;
  p->value = Tensor({shape[0], shape[1]});
  Rng rng(fnv1a64(std::to_string(seed_) + "/init/" + name));
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      for (double& x : p->value.v) x = 1.0;
      break;
    case Init::kTinyNormal:
      for (double& x : p->value.v) x = 0.02 * rng.normal();
      break;
    case Init::kXavier: {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (double& x : p->value.v) x = rng.uniform(-limit, limit);
      break;
    }
  }
  Param& ref = *p;
  params_.emplace(name, std::move(p));
  return ref;
}

Param& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  require(it != params_.end(), "params: unknown name '" + name + "'");
  return *it->second;
}

const Param& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  require(it != params_.end(), "params: unknown name '" + name + "'");
  return *it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& kv : params_) out.push_back(kv.first);
  return out;
}

int64_t ParamStore::total_elements() const {
  int64_t n = 0;
  for (const auto& kv : params_)
    n += kv.second->value.rows() * kv.second->value.cols();
  return n;
}

void ParamStore::set_trainable_prefix(const std::string& prefix, bool trainable) {
  bool any = false;
  for (auto& kv : params_)
    if (kv.first.rfind(prefix, 0) == 0) {
      kv.second->trainable = trainable;
      any = true;
    }
  require(any, "params: no parameter matches prefix '" + prefix + "'");
}

void ParamStore::set_all_trainable(bool trainable) {
  for (auto& kv : params_) kv.second->trainable = trainable;
}

Linear::Linear(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out, bool bias) {
  w = &ps.create(prefix + ".w", {in, out}, Init::kXavier);
  if (bias) b = &ps.create(prefix + ".b", {1, out}, Init::kZeros);
}

ad::Var Linear::operator()(Ctx& cx, ad::Var x) const {
  ad::Var y = cx.g.matmul(x, cx(*w));
  if (b) y = cx.g.add_rowvec(y, cx(*b));
  return y;
}

LayerNorm::LayerNorm(ParamStore& ps, const std::string& prefix, int64_t dim) {
  gamma = &ps.create(prefix + ".gamma", {1, dim}, Init::kOnes);
  beta = &ps.create(prefix + ".beta", {1, dim}, Init::kZeros);
}

ad::Var LayerNorm::operator()(Ctx& cx, ad::Var x) const {
  return cx.g.layer_norm(x, cx(*gamma), cx(*beta));
}

MultiHeadAttention::MultiHeadAttention(ParamStore& ps, const std::string& prefix, int64_t dim_,
                                       int64_t heads_)
    : MultiHeadAttention(ps, prefix, dim_, heads_, dim_, dim_) {}

MultiHeadAttention::MultiHeadAttention(ParamStore& ps, const std::string& prefix, int64_t dim_,
                                       int64_t heads_, int64_t q_in, int64_t kv_in)
    : wq(ps, prefix + ".wq", q_in, dim_),
      wk(ps, prefix + ".wk", kv_in, dim_),
      wv(ps, prefix + ".wv", kv_in, dim_),
      wo(ps, prefix + ".wo", dim_, dim_),
      heads(heads_),
      dim(dim_) {
  require(dim_ % heads_ == 0, "attention: heads must divide dim");
}

ad::Var MultiHeadAttention::operator()(Ctx& cx, ad::Var q, ad::Var kv, ad::Var bias,
                                       AttnProbe* probe) const {
  ad::Graph& g = cx.g;
  const int64_t dh = dim / heads;
  const ad::Var Q = wq(cx, q), K = wk(cx, kv), V = wv(cx, kv);
  std::vector<ad::Var> outs;
  outs.reserve(static_cast<size_t>(heads));
  for (int64_t h = 0; h < heads; ++h) {
    const ad::Var qh = g.slice_cols(Q, h * dh, (h + 1) * dh);
    const ad::Var kh = g.slice_cols(K, h * dh, (h + 1) * dh);
    const ad::Var vh = g.slice_cols(V, h * dh, (h + 1) * dh);
    ad::Var logits = g.scale(g.matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
    if (bias.valid()) logits = g.add(logits, bias);
    const ad::Var w = g.softmax(logits);
    if (probe) probe->weights.push_back(w);
    outs.push_back(g.matmul(w, vh));
  }
  return wo(cx, g.concat_cols(outs));
}

FeedForward::FeedForward(ParamStore& ps, const std::string& prefix, int64_t dim, int64_t hidden)
    : fc1(ps, prefix + ".fc1", dim, hidden), fc2(ps, prefix + ".fc2", hidden, dim) {}

ad::Var FeedForward::operator()(Ctx& cx, ad::Var x) const {
  return fc2(cx, cx.g.gelu(fc1(cx, x)));
}

SelfAttentionBlock::SelfAttentionBlock(ParamStore& ps, const std::string& prefix, int64_t dim,
                                       int64_t heads, int64_t ffn_mult)
    : ln_attn(ps, prefix + ".ln_attn", dim),
      ln_ffn(ps, prefix + ".ln_ffn", dim),
      attn(ps, prefix + ".attn", dim, heads),
      ffn(ps, prefix + ".ffn", dim, dim * ffn_mult) {}

ad::Var SelfAttentionBlock::operator()(Ctx& cx, ad::Var x, ad::Var bias,
                                       AttnProbe* probe) const {
  const ad::Var n = ln_attn(cx, x);
  x = cx.g.add(x, attn(cx, n, n, bias, probe));
  return cx.g.add(x, ffn(cx, ln_ffn(cx, x)));
}

CrossAttentionBlock::CrossAttentionBlock(ParamStore& ps, const std::string& prefix, int64_t dim,
                                         int64_t heads, int64_t ffn_mult)
    : ln_q(ps, prefix + ".ln_q", dim),
      ln_kv(ps, prefix + ".ln_kv", dim),
      ln_ffn(ps, prefix + ".ln_ffn", dim),
      attn(ps, prefix + ".attn", dim, heads),
      ffn(ps, prefix + ".ffn", dim, dim * ffn_mult) {}

ad::Var CrossAttentionBlock::operator()(Ctx& cx, ad::Var x, ad::Var kv, ad::Var bias,
                                        AttnProbe* probe) const {
  x = cx.g.add(x, attn(cx, ln_q(cx, x), ln_kv(cx, kv), bias, probe));
  return cx.g.add(x, ffn(cx, ln_ffn(cx, x)));
}

Tensor sinusoidal_positions(const Tensor& xyz, int64_t dim, double extent_x, double extent_y,
                            double extent_z) {
  require(xyz.cols() >= 3, "positions: need xyz columns");
  require(dim > 0, "positions: dim must be positive");
  const double extents[3] = {extent_x, extent_y, extent_z};
  Tensor out({xyz.rows(), dim});
  for (int64_t r = 0; r < xyz.rows(); ++r) {
    for (int64_t j = 0; j < dim; ++j) {
      const int64_t axis = j % 3;
      const int64_t idx = j / 3;  // channel within the axis
      const int64_t octave = idx / 2;
      const double norm = xyz.at(r, axis) / extents[axis];
      const double angle =
          norm * 2.0 * M_PI * static_cast<double>(1LL << std::min<int64_t>(octave, 40));
      out.at(r, j) = (idx % 2 == 0) ? std::sin(angle) : std::cos(angle);
    }
  }
  return out;
}

}  // namespace dg
