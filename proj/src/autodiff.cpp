#include "dg/autodiff.hpp"

#include <cmath>
#include <utility>

#include "dg/geometry.hpp"
#include "dg/kernels.hpp"

namespace dg::ad {

namespace {

constexpr double kInvSqrt2 = 0.7071067811865475244;
constexpr double kInvSqrt2Pi = 0.3989422804014326779;
constexpr double kLnEps = 1e-5;  // layer-norm variance floor

double gelu_fwd(double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); }

double gelu_bwd(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x * kInvSqrt2));
  const double pdf = kInvSqrt2Pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

double sigmoid_fwd(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

double softplus_fwd(double x) {
  if (x > 30.0) return x;
  if (x < -30.0) return std::exp(x);
  return std::log1p(std::exp(x));
}

}  // namespace

void Graph::check(Var v) const {
  require(v.id >= 0 && static_cast<size_t>(v.id) < nodes_.size(), "autodiff: bad var handle");
}

Var Graph::push(Tensor val, bool needs, std::function<void(Graph&, int32_t)> back) {
  Node n;
  n.val = std::move(val);
  n.needs = needs;
  if (needs) n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return Var{static_cast<int32_t>(nodes_.size() - 1)};
}

Var Graph::leaf(const Tensor& value, bool needs_grad) {
  return push(value, needs_grad, nullptr);
}

const Tensor& Graph::val(Var v) const {
  check(v);
  return nodes_[static_cast<size_t>(v.id)].val;
}

Tensor& Graph::grad_slot(int32_t id) {
  Node& n = nodes_[static_cast<size_t>(id)];
  if (n.grad.v.empty() && n.val.numel() > 0) n.grad = Tensor(n.val.shape);
  return n.grad;
}

const Tensor& Graph::grad(Var v) const {
  check(v);
  const Node& n = nodes_[static_cast<size_t>(v.id)];
  require(!n.grad.v.empty(), "autodiff: grad not populated; run backward first");
  return n.grad;
}

bool Graph::has_grad(Var v) const {
  check(v);
  return !nodes_[static_cast<size_t>(v.id)].grad.v.empty();
}

bool Graph::requires_grad(Var v) const {
  check(v);
  return nodes_[static_cast<size_t>(v.id)].needs;
}

void Graph::backward(Var loss) {
  check(loss);
  require(val(loss).numel() == 1, "autodiff: backward needs a scalar loss");
  require(nodes_[static_cast<size_t>(loss.id)].needs, "autodiff: loss does not require grad");
  grad_slot(loss.id).v[0] += 1.0;
  for (int32_t id = loss.id; id >= 0; --id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.needs || !n.back || n.grad.v.empty()) continue;
    n.back(*this, id);
  }
}

// ---- elementwise ----

Var Graph::add(Var a, Var b) {
  check(a);
  check(b);
  require(val(a).same_shape(val(b)), "add: shape mismatch");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += vb.v[i];
  const int32_t ia = a.id, ib = b.id;
  return push(std::move(out), requires_grad(a) || requires_grad(b), [ia, ib](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    if (g.nodes_[static_cast<size_t>(ia)].needs) {
      Tensor& da = g.grad_slot(ia);
      for (size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i];
    }
    if (g.nodes_[static_cast<size_t>(ib)].needs) {
      Tensor& db = g.grad_slot(ib);
      for (size_t i = 0; i < d.v.size(); ++i) db.v[i] += d.v[i];
    }
  });
}

Var Graph::sub(Var a, Var b) {
  check(a);
  check(b);
  require(val(a).same_shape(val(b)), "sub: shape mismatch");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= vb.v[i];
  const int32_t ia = a.id, ib = b.id;
  return push(std::move(out), requires_grad(a) || requires_grad(b), [ia, ib](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    if (g.nodes_[static_cast<size_t>(ia)].needs) {
      Tensor& da = g.grad_slot(ia);
      for (size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i];
    }
    if (g.nodes_[static_cast<size_t>(ib)].needs) {
      Tensor& db = g.grad_slot(ib);
      for (size_t i = 0; i < d.v.size(); ++i) db.v[i] -= d.v[i];
    }
  });
}

Var Graph::mul(Var a, Var b) {
  check(a);
  check(b);
  require(val(a).same_shape(val(b)), "mul: shape mismatch");
  Tensor out = val(a);
  const Tensor& vb = val(b);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= vb.v[i];
  const int32_t ia = a.id, ib = b.id;
  return push(std::move(out), requires_grad(a) || requires_grad(b), [ia, ib](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    const Tensor& va = g.nodes_[static_cast<size_t>(ia)].val;
    const Tensor& vb2 = g.nodes_[static_cast<size_t>(ib)].val;
    if (g.nodes_[static_cast<size_t>(ia)].needs) {
      Tensor& da = g.grad_slot(ia);
      for (size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i] * vb2.v[i];
    }
    if (g.nodes_[static_cast<size_t>(ib)].needs) {
      Tensor& db = g.grad_slot(ib);
      for (size_t i = 0; i < d.v.size(); ++i) db.v[i] += d.v[i] * va.v[i];
    }
  });
}

Var Graph::add_const(Var a, const Tensor& c) {
  check(a);
  require(val(a).same_shape(c), "add_const: shape mismatch");
  Tensor out = val(a);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += c.v[i];
  const int32_t ia = a.id;
  return push(std::move(out), requires_grad(a), [ia](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    Tensor& da = g.grad_slot(ia);
    for (size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i];
  });
}

Var Graph::mul_const(Var a, const Tensor& c) {
  check(a);
  require(val(a).same_shape(c), "mul_const: shape mismatch");
  Tensor out = val(a);
  for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= c.v[i];
  const int32_t ia = a.id;
  Tensor cc = c;
  return push(std::move(out), requires_grad(a), [ia, cc](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    Tensor& da = g.grad_slot(ia);
    for (size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i] * cc.v[i];
  });
}

Var Graph::add_scalar(Var a, double c) {
  check(a);
  Tensor out = val(a);
  for (auto& x : out.v) x += c;
  const int32_t ia = a.id;
  return push(std::move(out), requires_grad(a), [ia](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    Tensor& da = g.grad_slot(ia);
    for (size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i];
  });
}

Var Graph::scale(Var a, double c) {
  check(a);
  Tensor out = val(a);
  for (auto& x : out.v) x *= c;
  const int32_t ia = a.id;
  return push(std::move(out), requires_grad(a), [ia, c](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    Tensor& da = g.grad_slot(ia);
    for (size_t i = 0; i < d.v.size(); ++i) da.v[i] += c * d.v[i];
  });
}

// ---- matmul family ----

Var Graph::matmul(Var a, Var b) {
  check(a);
  check(b);
  const int64_t m = rows(a), k = cols(a), n = cols(b);
  require(val(b).rows() == k, "matmul: inner dim mismatch");
  Tensor out({m, n});
  kernels::matmul_nn(val(a).data(), val(b).data(), out.data(), m, k, n);
  const int32_t ia = a.id, ib = b.id;
  return push(std::move(out), requires_grad(a) || requires_grad(b),
              [ia, ib, m, k, n](Graph& g, int32_t s) {
                const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
                const Tensor& va = g.nodes_[static_cast<size_t>(ia)].val;
                const Tensor& vb = g.nodes_[static_cast<size_t>(ib)].val;
                if (g.nodes_[static_cast<size_t>(ia)].needs) {
                  Tensor t({m, k});
                  kernels::matmul_nt(d.data(), vb.data(), t.data(), m, n, k);
                  Tensor& da = g.grad_slot(ia);
                  for (size_t i = 0; i < t.v.size(); ++i) da.v[i] += t.v[i];
                }
                if (g.nodes_[static_cast<size_t>(ib)].needs) {
                  Tensor t({k, n});
                  kernels::matmul_tn(va.data(), d.data(), t.data(), k, m, n);
                  Tensor& db = g.grad_slot(ib);
                  for (size_t i = 0; i < t.v.size(); ++i) db.v[i] += t.v[i];
                }
              });
}

Var Graph::matmul_nt(Var a, Var b) {
  check(a);
  check(b);
  const int64_t m = rows(a), k = cols(a), n = rows(b);
  require(val(b).cols() == k, "matmul_nt: inner dim mismatch");
  Tensor out({m, n});
  kernels::matmul_nt(val(a).data(), val(b).data(), out.data(), m, k, n);
  const int32_t ia = a.id, ib = b.id;
  return push(std::move(out), requires_grad(a) || requires_grad(b),
              [ia, ib, m, k, n](Graph& g, int32_t s) {
                const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
                const Tensor& va = g.nodes_[static_cast<size_t>(ia)].val;
                const Tensor& vb = g.nodes_[static_cast<size_t>(ib)].val;
                if (g.nodes_[static_cast<size_t>(ia)].needs) {
                  Tensor t({m, k});
                  kernels::matmul_nn(d.data(), vb.data(), t.data(), m, n, k);
                  Tensor& da = g.grad_slot(ia);
                  for (size_t i = 0; i < t.v.size(); ++i) da.v[i] += t.v[i];
                }
                if (g.nodes_[static_cast<size_t>(ib)].needs) {
                  Tensor t({n, k});
                  kernels::matmul_tn(d.data(), va.data(), t.data(), n, m, k);
                  Tensor& db = g.grad_slot(ib);
                  for (size_t i = 0; i < t.v.size(); ++i) db.v[i] += t.v[i];
                }
              });
}

Var Graph::matmul_tn(Var a, Var b) {
  check(a);
  check(b);
  const int64_t k = rows(a), m = cols(a), n = cols(b);
  require(val(b).rows() == k, "matmul_tn: inner dim mismatch");
  Tensor out({m, n});
  kernels::matmul_tn(val(a).data(), val(b).data(), out.data(), m, k, n);
  const int32_t ia = a.id, ib = b.id;
  return push(std::move(out), requires_grad(a) || requires_grad(b),
              [ia, ib, m, k, n](Graph& g, int32_t s) {
                const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
                const Tensor& va = g.nodes_[static_cast<size_t>(ia)].val;
                const Tensor& vb = g.nodes_[static_cast<size_t>(ib)].val;
                if (g.nodes_[static_cast<size_t>(ia)].needs) {
                  Tensor t({k, m});
                  kernels::matmul_nt(vb.data(), d.data(), t.data(), k, n, m);
                  Tensor& da = g.grad_slot(ia);
                  for (size_t i = 0; i < t.v.size(); ++i) da.v[i] += t.v[i];
                }
                if (g.nodes_[static_cast<size_t>(ib)].needs) {
                  Tensor t({k, n});
                  kernels::matmul_nn(va.data(), d.data(), t.data(), k, m, n);
                  Tensor& db = g.grad_slot(ib);
                  for (size_t i = 0; i < t.v.size(); ++i) db.v[i] += t.v[i];
                }
              });
}

// ---- shape ops ----

Var Graph::add_rowvec(Var x, Var row) {
  check(x);
  check(row);
  require(val(row).rows() == 1 && val(row).cols() == cols(x), "add_rowvec: bad row shape");
  Tensor out = val(x);
  const Tensor& r = val(row);
  const int64_t m = out.rows(), n = out.cols();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out.at(i, j) += r.v[static_cast<size_t>(j)];
  const int32_t ix = x.id, ir = row.id;
  return push(std::move(out), requires_grad(x) || requires_grad(row),
              [ix, ir, m, n](Graph& g, int32_t s) {
                const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
                if (g.nodes_[static_cast<size_t>(ix)].needs) {
                  Tensor& dx = g.grad_slot(ix);
                  for (size_t i = 0; i < d.v.size(); ++i) dx.v[i] += d.v[i];
                }
                if (g.nodes_[static_cast<size_t>(ir)].needs) {
                  Tensor& dr = g.grad_slot(ir);
                  for (int64_t i = 0; i < m; ++i)
                    for (int64_t j = 0; j < n; ++j) dr.v[static_cast<size_t>(j)] += d.at(i, j);
                }
              });
}

Var Graph::concat_rows(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_rows: empty");
  const int64_t n = cols(parts[0]);
  int64_t m = 0;
  bool needs = false;
  for (Var p : parts) {
    check(p);
    require(cols(p) == n, "concat_rows: column mismatch");
    m += rows(p);
    needs = needs || requires_grad(p);
  }
  Tensor out({m, n});
  std::vector<int32_t> ids;
  std::vector<int64_t> offsets;
  int64_t r = 0;
  for (Var p : parts) {
    ids.push_back(p.id);
    offsets.push_back(r);
    const Tensor& vp = val(p);
    std::copy(vp.v.begin(), vp.v.end(), out.v.begin() + static_cast<ptrdiff_t>(r * n));
    r += vp.rows();
  }
  return push(std::move(out), needs, [ids, offsets, n](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    for (size_t p = 0; p < ids.size(); ++p) {
      Node& child = g.nodes_[static_cast<size_t>(ids[p])];
      if (!child.needs) continue;
      Tensor& dc = g.grad_slot(ids[p]);
      const size_t base = static_cast<size_t>(offsets[p] * n);
      for (size_t i = 0; i < dc.v.size(); ++i) dc.v[i] += d.v[base + i];
    }
  });
}

Var Graph::concat_cols(const std::vector<Var>& parts) {
  require(!parts.empty(), "concat_cols: empty");
  const int64_t m = rows(parts[0]);
  int64_t n = 0;
  bool needs = false;
  for (Var p : parts) {
    check(p);
    require(rows(p) == m, "concat_cols: row mismatch");
    n += cols(p);
    needs = needs || requires_grad(p);
  }
  Tensor out({m, n});
  std::vector<int32_t> ids;
  std::vector<int64_t> offsets, widths;
  int64_t c = 0;
  for (Var p : parts) {
    ids.push_back(p.id);
    offsets.push_back(c);
    widths.push_back(cols(p));
    const Tensor& vp = val(p);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = 0; j < vp.cols(); ++j) out.at(i, c + j) = vp.at(i, j);
    c += vp.cols();
  }
  return push(std::move(out), needs, [ids, offsets, widths, m](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    for (size_t p = 0; p < ids.size(); ++p) {
      Node& child = g.nodes_[static_cast<size_t>(ids[p])];
      if (!child.needs) continue;
      Tensor& dc = g.grad_slot(ids[p]);
      for (int64_t i = 0; i < m; ++i)
        for (int64_t j = 0; j < widths[p]; ++j) dc.at(i, j) += d.at(i, offsets[p] + j);
    }
  });
}

Var Graph::slice_rows(Var a, int64_t r0, int64_t r1) {
  check(a);
  require(0 <= r0 && r0 < r1 && r1 <= rows(a), "slice_rows: bad range");
  const int64_t n = cols(a);
  Tensor out({r1 - r0, n});
  const Tensor& va = val(a);
  std::copy(va.v.begin() + static_cast<ptrdiff_t>(r0 * n),
            va.v.begin() + static_cast<ptrdiff_t>(r1 * n), out.v.begin());
  const int32_t ia = a.id;
  return push(std::move(out), requires_grad(a), [ia, r0, n](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    Tensor& da = g.grad_slot(ia);
    const size_t base = static_cast<size_t>(r0 * n);
    for (size_t i = 0; i < d.v.size(); ++i) da.v[base + i] += d.v[i];
  });
}

Var Graph::slice_cols(Var a, int64_t c0, int64_t c1) {
  check(a);
  require(0 <= c0 && c0 < c1 && c1 <= cols(a), "slice_cols: bad range");
  const int64_t m = rows(a);
  Tensor out({m, c1 - c0});
  const Tensor& va = val(a);
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = c0; j < c1; ++j) out.at(i, j - c0) = va.at(i, j);
  const int32_t ia = a.id;
  return push(std::move(out), requires_grad(a), [ia, c0, c1, m](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    Tensor& da = g.grad_slot(ia);
    for (int64_t i = 0; i < m; ++i)
      for (int64_t j = c0; j < c1; ++j) da.at(i, j) += d.at(i, j - c0);
  });
}

Var Graph::select_rows(Var a, std::vector<int64_t> idx) {
  check(a);
  const int64_t n = cols(a);
  for (int64_t i : idx) require(0 <= i && i < rows(a), "select_rows: index out of range");
  Tensor out({static_cast<int64_t>(idx.size()), n});
  const Tensor& va = val(a);
  for (size_t r = 0; r < idx.size(); ++r)
    for (int64_t j = 0; j < n; ++j) out.at(static_cast<int64_t>(r), j) = va.at(idx[r], j);
  const int32_t ia = a.id;
  return push(std::move(out), requires_grad(a), [ia, idx, n](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    Tensor& da = g.grad_slot(ia);
    for (size_t r = 0; r < idx.size(); ++r)
      for (int64_t j = 0; j < n; ++j) da.at(idx[r], j) += d.at(static_cast<int64_t>(r), j);
  });
}

Var Graph::tile_rows(Var a, int64_t n) {
  check(a);
  require(rows(a) == 1 && n >= 1, "tile_rows: need a single row");
  const int64_t c = cols(a);
  Tensor out({n, c});
  const Tensor& va = val(a);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t j = 0; j < c; ++j) out.at(i, j) = va.v[static_cast<size_t>(j)];
  const int32_t ia = a.id;
  return push(std::move(out), requires_grad(a), [ia, n, c](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    Tensor& da = g.grad_slot(ia);
    for (int64_t i = 0; i < n; ++i)
      for (int64_t j = 0; j < c; ++j) da.v[static_cast<size_t>(j)] += d.at(i, j);
  });
}

// ---- nonlinearities ----

Var Graph::gelu(Var a) {
  check(a);
  Tensor out = val(a);
  for (auto& x : out.v) x = gelu_fwd(x);
  const int32_t ia = a.id;
  return push(std::move(out), requires_grad(a), [ia](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    const Tensor& va = g.nodes_[static_cast<size_t>(ia)].val;
    Tensor& da = g.grad_slot(ia);
    for (size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i] * gelu_bwd(va.v[i]);
  });
}

Var Graph::sigmoid(Var a) {
  check(a);
  Tensor out = val(a);
  for (auto& x : out.v) x = sigmoid_fwd(x);
  const int32_t ia = a.id;
  return push(std::move(out), requires_grad(a), [ia](Graph& g, int32_t s) {
    const Node& self = g.nodes_[static_cast<size_t>(s)];
    Tensor& da = g.grad_slot(ia);
    for (size_t i = 0; i < self.grad.v.size(); ++i) {
      const double y = self.val.v[i];
      da.v[i] += self.grad.v[i] * y * (1.0 - y);
    }
  });
}

Var Graph::softplus(Var a) {
  check(a);
  Tensor out = val(a);
  for (auto& x : out.v) x = softplus_fwd(x);
  const int32_t ia = a.id;
  return push(std::move(out), requires_grad(a), [ia](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    const Tensor& va = g.nodes_[static_cast<size_t>(ia)].val;
    Tensor& da = g.grad_slot(ia);
    for (size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i] * sigmoid_fwd(va.v[i]);
  });
}

Var Graph::log(Var a) {
  check(a);
  Tensor out = val(a);
  for (auto& x : out.v) {
    require(x > 0.0, "log: non-positive input");
    x = std::log(x);
  }
  const int32_t ia = a.id;
  return push(std::move(out), requires_grad(a), [ia](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    const Tensor& va = g.nodes_[static_cast<size_t>(ia)].val;
    Tensor& da = g.grad_slot(ia);
    for (size_t i = 0; i < d.v.size(); ++i) da.v[i] += d.v[i] / va.v[i];
  });
}

Var Graph::layer_norm(Var x, Var gamma, Var beta) {
  check(x);
  check(gamma);
  check(beta);
  const int64_t m = rows(x), n = cols(x);
  require(val(gamma).rows() == 1 && val(gamma).cols() == n, "layer_norm: bad gamma");
  require(val(beta).rows() == 1 && val(beta).cols() == n, "layer_norm: bad beta");
  Tensor out({m, n});
  const Tensor& vx = val(x);
  const Tensor& vg = val(gamma);
  const Tensor& vb = val(beta);
  for (int64_t i = 0; i < m; ++i) {
    double mean = 0;
    for (int64_t j = 0; j < n; ++j) mean += vx.at(i, j);
    mean /= static_cast<double>(n);
    double var = 0;
    for (int64_t j = 0; j < n; ++j) {
      const double c = vx.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(n);
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    for (int64_t j = 0; j < n; ++j)
      out.at(i, j) = (vx.at(i, j) - mean) * rstd * vg.v[static_cast<size_t>(j)] +
                     vb.v[static_cast<size_t>(j)];
  }
  const int32_t ix = x.id, ig = gamma.id, ib = beta.id;
  const bool needs = requires_grad(x) || requires_grad(gamma) || requires_grad(beta);
  return push(std::move(out), needs, [ix, ig, ib, m, n](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    const Tensor& vx = g.nodes_[static_cast<size_t>(ix)].val;
    const Tensor& vg = g.nodes_[static_cast<size_t>(ig)].val;
    const bool nx = g.nodes_[static_cast<size_t>(ix)].needs;
    const bool ng = g.nodes_[static_cast<size_t>(ig)].needs;
    const bool nb = g.nodes_[static_cast<size_t>(ib)].needs;
    for (int64_t i = 0; i < m; ++i) {
      double mean = 0;
      for (int64_t j = 0; j < n; ++j) mean += vx.at(i, j);
      mean /= static_cast<double>(n);
      double var = 0;
      for (int64_t j = 0; j < n; ++j) {
        const double c = vx.at(i, j) - mean;
        var += c * c;
      }
      var /= static_cast<double>(n);
      const double rstd = 1.0 / std::sqrt(var + kLnEps);
      // dxhat = dy * gamma; dx = rstd*(dxhat - mean(dxhat) - xhat*mean(dxhat*xhat))
      double sum_dxh = 0, sum_dxh_xh = 0;
      for (int64_t j = 0; j < n; ++j) {
        const double xh = (vx.at(i, j) - mean) * rstd;
        const double dxh = d.at(i, j) * vg.v[static_cast<size_t>(j)];
        sum_dxh += dxh;
        sum_dxh_xh += dxh * xh;
      }
      sum_dxh /= static_cast<double>(n);
      sum_dxh_xh /= static_cast<double>(n);
      if (nx) {
        Tensor& dx = g.grad_slot(ix);
        for (int64_t j = 0; j < n; ++j) {
          const double xh = (vx.at(i, j) - mean) * rstd;
          const double dxh = d.at(i, j) * vg.v[static_cast<size_t>(j)];
          dx.at(i, j) += rstd * (dxh - sum_dxh - xh * sum_dxh_xh);
        }
      }
      if (ng) {
        Tensor& dg = g.grad_slot(ig);
        for (int64_t j = 0; j < n; ++j) {
          const double xh = (vx.at(i, j) - mean) * rstd;
          dg.v[static_cast<size_t>(j)] += d.at(i, j) * xh;
        }
      }
      if (nb) {
        Tensor& db = g.grad_slot(ib);
        for (int64_t j = 0; j < n; ++j) db.v[static_cast<size_t>(j)] += d.at(i, j);
      }
    }
  });
}

Var Graph::softmax(Var logits) {
  check(logits);
  const int64_t m = rows(logits), n = cols(logits);
  Tensor out({m, n});
  kernels::softmax_rows(val(logits).data(), out.data(), m, n);
  const int32_t il = logits.id;
  return push(std::move(out), requires_grad(logits), [il, m, n](Graph& g, int32_t s) {
    const Node& self = g.nodes_[static_cast<size_t>(s)];
    Tensor& dl = g.grad_slot(il);
    for (int64_t i = 0; i < m; ++i) {
      double dot = 0;
      for (int64_t j = 0; j < n; ++j) dot += self.grad.at(i, j) * self.val.at(i, j);
      for (int64_t j = 0; j < n; ++j)
        dl.at(i, j) += self.val.at(i, j) * (self.grad.at(i, j) - dot);
    }
  });
}

// ---- gather / pool ----

Var Graph::embed(Var table, std::vector<int64_t> ids) {
  check(table);
  const int64_t n = cols(table);
  for (int64_t i : ids) require(0 <= i && i < rows(table), "embed: id out of range");
  Tensor out({static_cast<int64_t>(ids.size()), n});
  const Tensor& vt = val(table);
  for (size_t r = 0; r < ids.size(); ++r)
    for (int64_t j = 0; j < n; ++j) out.at(static_cast<int64_t>(r), j) = vt.at(ids[r], j);
  const int32_t it = table.id;
  return push(std::move(out), requires_grad(table), [it, ids, n](Graph& g, int32_t s) {
    const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
    Tensor& dt = g.grad_slot(it);
    for (size_t r = 0; r < ids.size(); ++r)
      for (int64_t j = 0; j < n; ++j) dt.at(ids[r], j) += d.at(static_cast<int64_t>(r), j);
  });
}

Var Graph::group_max(Var x, std::vector<std::vector<int64_t>> groups) {
  check(x);
  const int64_t n = cols(x);
  const int64_t gcount = static_cast<int64_t>(groups.size());
  Tensor out({gcount, n});
  std::vector<int64_t> argmax(static_cast<size_t>(gcount * n));
  const Tensor& vx = val(x);
  for (int64_t gi = 0; gi < gcount; ++gi) {
    const auto& grp = groups[static_cast<size_t>(gi)];
    require(!grp.empty(), "group_max: empty group");
    for (int64_t r : grp) require(0 <= r && r < vx.rows(), "group_max: row out of range");
    for (int64_t j = 0; j < n; ++j) {
      double best = vx.at(grp[0], j);
      int64_t arg = grp[0];
      for (size_t t = 1; t < grp.size(); ++t) {
        const double v = vx.at(grp[t], j);
        if (v > best) {
          best = v;
          arg = grp[t];
        }
      }
      out.at(gi, j) = best;
      argmax[static_cast<size_t>(gi * n + j)] = arg;
    }
  }
  const int32_t ix = x.id;
  return push(std::move(out), requires_grad(x),
              [ix, argmax, gcount, n](Graph& g, int32_t s) {
                const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
                Tensor& dx = g.grad_slot(ix);
                for (int64_t gi = 0; gi < gcount; ++gi)
                  for (int64_t j = 0; j < n; ++j)
                    dx.at(argmax[static_cast<size_t>(gi * n + j)], j) += d.at(gi, j);
              });
}

Var Graph::pair_sum(Var aq, Var ak) {
  check(aq);
  check(ak);
  const int64_t nq = rows(aq), nk = rows(ak), h = cols(aq);
  require(cols(ak) == h, "pair_sum: width mismatch");
  Tensor out({nq * nk, h});
  const Tensor& vq = val(aq);
  const Tensor& vk = val(ak);
  for (int64_t i = 0; i < nq; ++i)
    for (int64_t j = 0; j < nk; ++j)
      for (int64_t c = 0; c < h; ++c) out.at(i * nk + j, c) = vq.at(i, c) + vk.at(j, c);
  const int32_t iq = aq.id, ik = ak.id;
  return push(std::move(out), requires_grad(aq) || requires_grad(ak),
              [iq, ik, nq, nk, h](Graph& g, int32_t s) {
                const Tensor& d = g.nodes_[static_cast<size_t>(s)].grad;
                if (g.nodes_[static_cast<size_t>(iq)].needs) {
                  Tensor& dq = g.grad_slot(iq);
                  for (int64_t i = 0; i < nq; ++i)
                    for (int64_t j = 0; j < nk; ++j)
                      for (int64_t c = 0; c < h; ++c) dq.at(i, c) += d.at(i * nk + j, c);
                }
                if (g.nodes_[static_cast<size_t>(ik)].needs) {
                  Tensor& dk = g.grad_slot(ik);
                  for (int64_t i = 0; i < nq; ++i)
                    for (int64_t j = 0; j < nk; ++j)
                      for (int64_t c = 0; c < h; ++c) dk.at(j, c) += d.at(i * nk + j, c);
                }
              });
}

// ---- reductions / losses ----

Var Graph::sum_all(Var a) {
  check(a);
  double s = 0;
  for (double x : val(a).v) s += x;
  Tensor out({1, 1});
  out.v[0] = s;
  const int32_t ia = a.id;
  return push(std::move(out), requires_grad(a), [ia](Graph& g, int32_t s2) {
    const double d = g.nodes_[static_cast<size_t>(s2)].grad.v[0];
    Tensor& da = g.grad_slot(ia);
    for (auto& x : da.v) x += d;
  });
}

Var Graph::l1_loss(Var a, const Tensor& target) {
  check(a);
  require(val(a).same_shape(target), "l1_loss: shape mismatch");
  double s = 0;
  const Tensor& va = val(a);
  for (size_t i = 0; i < va.v.size(); ++i) s += std::fabs(va.v[i] - target.v[i]);
  Tensor out({1, 1});
  out.v[0] = s;
  const int32_t ia = a.id;
  Tensor t = target;
  return push(std::move(out), requires_grad(a), [ia, t](Graph& g, int32_t s2) {
    const double d = g.nodes_[static_cast<size_t>(s2)].grad.v[0];
    const Tensor& va2 = g.nodes_[static_cast<size_t>(ia)].val;
    Tensor& da = g.grad_slot(ia);
    for (size_t i = 0; i < va2.v.size(); ++i) {
      const double diff = va2.v[i] - t.v[i];
      if (diff > 0)
        da.v[i] += d;
      else if (diff < 0)
        da.v[i] -= d;
    }
  });
}

Var Graph::giou_loss(Var pred, const Tensor& target) {
  check(pred);
  require(cols(pred) == 6 && target.cols() == 6 && target.rows() == rows(pred),
          "giou_loss: need matching [K,6] boxes");
  const int64_t kcount = rows(pred);
  const Tensor& vp = val(pred);
  double s = 0;
  for (int64_t i = 0; i < kcount; ++i) {
    const Box3D a = Box3D::from_params(&vp.v[static_cast<size_t>(i * 6)]);
    const Box3D b = Box3D::from_params(&target.v[static_cast<size_t>(i * 6)]);
    s += 1.0 - giou3d(a, b);
  }
  Tensor out({1, 1});
  out.v[0] = s;
  const int32_t ip = pred.id;
  Tensor t = target;
  return push(std::move(out), requires_grad(pred), [ip, t, kcount](Graph& g, int32_t s2) {
    const double d = g.nodes_[static_cast<size_t>(s2)].grad.v[0];
    const Tensor& vp2 = g.nodes_[static_cast<size_t>(ip)].val;
    Tensor& dp = g.grad_slot(ip);
    for (int64_t i = 0; i < kcount; ++i) {
      const Box3D a = Box3D::from_params(&vp2.v[static_cast<size_t>(i * 6)]);
      const Box3D b = Box3D::from_params(&t.v[static_cast<size_t>(i * 6)]);
      std::array<double, 6> da{}, db{};
      giou3d_grad(a, b, da, db);
      for (int j = 0; j < 6; ++j) dp.at(i, j) -= d * da[static_cast<size_t>(j)];
    }
  });
}

}  // namespace dg::ad
