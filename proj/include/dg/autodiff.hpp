#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dg/tensor.hpp"

namespace dg::ad {

// Handle into a Graph's tape. Cheap to copy; only valid for the graph that
// produced it.
struct Var {
  int32_t id = -1;
  bool valid() const { return id >= 0; }
};

// Reverse-mode tape over 2-D double tensors. One Graph per forward pass;
// leaves are parameter snapshots or constants, backward() fills leaf grads.
class Graph {
 public:
  Var leaf(const Tensor& value, bool needs_grad = true);
  Var constant(const Tensor& value) { return leaf(value, false); }

  const Tensor& val(Var v) const;
  const Tensor& grad(Var v) const;
  // False when backward never reached v (its grad is identically zero).
  bool has_grad(Var v) const;
  bool requires_grad(Var v) const;
  int64_t rows(Var v) const { return val(v).rows(); }
  int64_t cols(Var v) const { return val(v).cols(); }
  size_t size() const { return nodes_.size(); }

  // Seeds d(loss)/d(loss) = 1 and sweeps the tape backwards. `loss` must be
  // a 1x1 tensor. Grads accumulate; call once per graph.
  void backward(Var loss);

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var add_const(Var a, const Tensor& c);
  Var mul_const(Var a, const Tensor& c);
  Var add_scalar(Var a, double c);
  Var scale(Var a, double c);

  // C = A.B with A [m,k], B [k,n]
  Var matmul(Var a, Var b);
  // C = A.B^T with A [m,k], B [n,k]
  Var matmul_nt(Var a, Var b);
  // C = A^T.B with A [k,m], B [k,n]
  Var matmul_tn(Var a, Var b);

  // x [m,n] + row [1,n] broadcast over rows
  Var add_rowvec(Var x, Var row);

  Var concat_rows(const std::vector<Var>& parts);
  Var concat_cols(const std::vector<Var>& parts);
  Var slice_rows(Var a, int64_t r0, int64_t r1);
  Var slice_cols(Var a, int64_t c0, int64_t c1);
  Var select_rows(Var a, std::vector<int64_t> idx);
  // a [1,c] repeated n times
  Var tile_rows(Var a, int64_t n);

  Var gelu(Var a);
  Var sigmoid(Var a);
  Var softplus(Var a);
  Var log(Var a);
  Var layer_norm(Var x, Var gamma, Var beta);
  Var softmax(Var logits);

  // Gathers rows of `table` at `ids`; grads scatter-add back.
  Var embed(Var table, std::vector<int64_t> ids);

  // out[g] = columnwise max over x rows listed in groups[g]. Groups must be
  // non-empty; ties break to the earliest listed row.
  Var group_max(Var x, std::vector<std::vector<int64_t>> groups);

  // out[i*nk + j] = aq[i] + ak[j]; the cheap half of a pair MLP first layer.
  Var pair_sum(Var aq, Var ak);

  Var sum_all(Var a);
  // sum |a - target|, subgradient 0 at exact equality
  Var l1_loss(Var a, const Tensor& target);
  // pred and target are [K,6] rows of (center, size); sum of (1 - giou_k).
  // Grads for pred come from the closed-form geometry derivatives.
  Var giou_loss(Var pred, const Tensor& target);

 private:
  struct Node {
    Tensor val;
    Tensor grad;  // allocated on first accumulation
    std::function<void(Graph&, int32_t)> back;
    bool needs = false;
  };
  std::vector<Node> nodes_;

  Var push(Tensor val, bool needs, std::function<void(Graph&, int32_t)> back);
  Tensor& grad_slot(int32_t id);
  void check(Var v) const;
};

}  // namespace dg::ad
