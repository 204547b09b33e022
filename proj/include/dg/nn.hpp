#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "dg/autodiff.hpp"
#include "dg/rng.hpp"
#include "dg/tensor.hpp"

namespace dg {

enum class Init { kXavier, kZeros, kOnes, kTinyNormal };

// One named trainable tensor. Clearing `trainable` makes it enter graphs as
// a constant; the optimizer then never sees it.
struct Param {
  std::string name;
  Tensor value;
  bool trainable = true;
};

// Owns every parameter by unique name. Initialization draws from a stream
// keyed by (store seed, name), so values do not depend on creation order.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : seed_(seed) {}

  Param& create(const std::string& name, const std::vector<int64_t>& shape, Init init);
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;
  bool has(const std::string& name) const { return params_.count(name) > 0; }
  std::vector<std::string> names() const;  // sorted
  int64_t total_elements() const;

  // Marks every parameter whose name starts with `prefix`.
  void set_trainable_prefix(const std::string& prefix, bool trainable);
  void set_all_trainable(bool trainable);

 private:
  uint64_t seed_;
  std::map<std::string, std::unique_ptr<Param>> params_;
};

// Per-graph binding of parameters to tape leaves. Binding the same Param
// twice returns the same leaf, so gradients from shared modules accumulate.
struct Ctx {
  explicit Ctx(ad::Graph& graph, bool training = false) : g(graph), train(training) {}
  ad::Graph& g;
  bool train;
  std::unordered_map<const Param*, ad::Var> bound;

  ad::Var operator()(Param& p) {
    auto it = bound.find(&p);
    if (it != bound.end()) return it->second;
    const ad::Var v = g.leaf(p.value, p.trainable);
    bound.emplace(&p, v);
    return v;
  }
};

struct Linear {
  Param* w = nullptr;
  Param* b = nullptr;
  Linear() = default;
  Linear(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out, bool bias = true);
  ad::Var operator()(Ctx& cx, ad::Var x) const;
};

struct LayerNorm {
  Param* gamma = nullptr;
  Param* beta = nullptr;
  LayerNorm() = default;
  LayerNorm(ParamStore& ps, const std::string& prefix, int64_t dim);
  ad::Var operator()(Ctx& cx, ad::Var x) const;
};

// Captures post-softmax attention weights (one Var per head per call) so
// tests can inspect normalization and masking on the live graph.
struct AttnProbe {
  std::vector<ad::Var> weights;
};

struct MultiHeadAttention {
  Linear wq, wk, wv, wo;
  int64_t heads = 1;
  int64_t dim = 0;
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& ps, const std::string& prefix, int64_t dim, int64_t heads);
  // Rectangular variant: queries enter at q_in columns, keys/values at
  // kv_in; projections map both into `dim`.
  MultiHeadAttention(ParamStore& ps, const std::string& prefix, int64_t dim, int64_t heads,
                     int64_t q_in, int64_t kv_in);
  // `bias` (optional) is additive pre-softmax logits, nq x nk, shared by
  // every head. Keys and values both come from `kv`.
  ad::Var operator()(Ctx& cx, ad::Var q, ad::Var kv, ad::Var bias = {},
                     AttnProbe* probe = nullptr) const;
};

struct FeedForward {
  Linear fc1, fc2;
  FeedForward() = default;
  FeedForward(ParamStore& ps, const std::string& prefix, int64_t dim, int64_t hidden);
  ad::Var operator()(Ctx& cx, ad::Var x) const;
};

// Pre-norm residual block: x + Attn(LN(x)), then x + FFN(LN(x)).
struct SelfAttentionBlock {
  LayerNorm ln_attn, ln_ffn;
  MultiHeadAttention attn;
  FeedForward ffn;
  SelfAttentionBlock() = default;
  SelfAttentionBlock(ParamStore& ps, const std::string& prefix, int64_t dim, int64_t heads,
                     int64_t ffn_mult);
  ad::Var operator()(Ctx& cx, ad::Var x, ad::Var bias = {}, AttnProbe* probe = nullptr) const;
};

// Pre-norm residual cross-attention: x + Attn(LN(x), LN(kv)), x + FFN(LN(x)).
struct CrossAttentionBlock {
  LayerNorm ln_q, ln_kv, ln_ffn;
  MultiHeadAttention attn;
  FeedForward ffn;
  CrossAttentionBlock() = default;
  CrossAttentionBlock(ParamStore& ps, const std::string& prefix, int64_t dim, int64_t heads,
                      int64_t ffn_mult);
  ad::Var operator()(Ctx& cx, ad::Var x, ad::Var kv, ad::Var bias = {},
                     AttnProbe* probe = nullptr) const;
};

// Octave-spaced sin/cos features of xyz, normalized by the room extents.
// Uses the first 3 columns of `xyz`; output is rows x dim, values in [-1,1].
Tensor sinusoidal_positions(const Tensor& xyz, int64_t dim, double extent_x, double extent_y,
                            double extent_z);

}  // namespace dg
