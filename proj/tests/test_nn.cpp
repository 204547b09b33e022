#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dg/nn.hpp"

using namespace dg;

namespace {

Tensor random_tensor(int64_t r, int64_t c, Rng& rng, double scale = 1.0) {
  Tensor t({r, c});
  for (double& x : t.v) x = scale * rng.uniform(-1.0, 1.0);
  return t;
}

bool close(double a, double b) {
  return std::fabs(a - b) < 1e-7 + 1e-4 * std::max(std::fabs(a), std::fabs(b));
}

// Central-difference check of d(loss)/d(param) for every trainable param,
// subsampled to a few dozen elements each. `build` must rebuild the whole
// forward pass from the store's current values.
void fd_check_params(ParamStore& ps,
                     const std::function<ad::Var(Ctx&)>& build) {
  ad::Graph g;
  Ctx cx(g);
  const ad::Var loss = build(cx);
  REQUIRE(g.val(loss).rows() == 1);
  REQUIRE(g.val(loss).cols() == 1);
  g.backward(loss);

  std::map<const Param*, Tensor> analytic;
  for (const auto& kv : cx.bound)
    if (g.requires_grad(kv.second)) analytic[kv.first] = g.grad(kv.second);

  auto run = [&]() {
    ad::Graph g2;
    Ctx cx2(g2);
    return g2.val(build(cx2)).v[0];
  };

  const double h = 1e-6;
  for (const std::string& name : ps.names()) {
    Param& p = ps.at(name);
    if (!p.trainable) continue;
    REQUIRE(analytic.count(&p) == 1);
    const Tensor& ag = analytic[&p];
    const size_t n = p.value.v.size();
    const size_t stride = std::max<size_t>(1, n / 24);
    for (size_t e = 0; e < n; e += stride) {
      const double orig = p.value.v[e];
      p.value.v[e] = orig + h;
      const double lp = run();
      p.value.v[e] = orig - h;
      const double lm = run();
      p.value.v[e] = orig;
      const double fd = (lp - lm) / (2 * h);
      INFO("param ", name, " elem ", e, " fd ", fd, " ad ", ag.v[e]);
      CHECK(close(fd, ag.v[e]));
    }
  }
}

}  // namespace

TEST_CASE("initialization is keyed by name, not creation order") {
  ParamStore a(11), b(11), c(12);
  a.create("x", {3, 4}, Init::kXavier);
  a.create("y", {3, 4}, Init::kXavier);
  b.create("y", {3, 4}, Init::kXavier);
  b.create("x", {3, 4}, Init::kXavier);
  CHECK(a.at("x").value.v == b.at("x").value.v);
  CHECK(a.at("y").value.v == b.at("y").value.v);
  CHECK(a.at("x").value.v != a.at("y").value.v);
  c.create("x", {3, 4}, Init::kXavier);
  CHECK(a.at("x").value.v != c.at("x").value.v);
  CHECK_THROWS_WITH_AS(a.create("x", {2, 2}, Init::kZeros), doctest::Contains("duplicate"),
                       std::runtime_error);
  CHECK_THROWS_WITH_AS(a.at("zz"), doctest::Contains("unknown name"), std::runtime_error);
}

TEST_CASE("linear layer gradients match finite differences") {
  ParamStore ps(3);
  Linear lin(ps, "lin", 5, 4);
  Rng rng(7);
  const Tensor x = random_tensor(6, 5, rng);
  const Tensor w = random_tensor(6, 4, rng);
  fd_check_params(ps, [&](Ctx& cx) {
    return cx.g.sum_all(cx.g.mul_const(lin(cx, cx.g.constant(x)), w));
  });
}

TEST_CASE("shared linear use accumulates gradients correctly") {
  ParamStore ps(4);
  Linear lin(ps, "shared", 4, 4);
  Rng rng(8);
  const Tensor x1 = random_tensor(3, 4, rng);
  const Tensor x2 = random_tensor(5, 4, rng);
  fd_check_params(ps, [&](Ctx& cx) {
    const ad::Var a = cx.g.sum_all(lin(cx, cx.g.constant(x1)));
    const ad::Var b = cx.g.sum_all(lin(cx, cx.g.constant(x2)));
    return cx.g.add(a, b);
  });
}

TEST_CASE("layer norm and feed-forward gradients match finite differences") {
  ParamStore ps(5);
  LayerNorm ln(ps, "ln", 6);
  FeedForward ffn(ps, "ffn", 6, 12);
  Rng rng(9);
  const Tensor x = random_tensor(4, 6, rng);
  const Tensor w = random_tensor(4, 6, rng);
  fd_check_params(ps, [&](Ctx& cx) {
    return cx.g.sum_all(cx.g.mul_const(ffn(cx, ln(cx, cx.g.constant(x))), w));
  });
}

TEST_CASE("attention block gradients match finite differences") {
  ParamStore ps(6);
  SelfAttentionBlock self_block(ps, "self", 8, 2, 2);
  CrossAttentionBlock cross_block(ps, "cross", 8, 2, 2);
  Rng rng(10);
  const Tensor x = random_tensor(4, 8, rng);
  const Tensor kv = random_tensor(5, 8, rng);
  const Tensor bias = random_tensor(4, 5, rng, 0.5);
  const Tensor w = random_tensor(4, 8, rng);
  fd_check_params(ps, [&](Ctx& cx) {
    ad::Var h = self_block(cx, cx.g.constant(x));
    h = cross_block(cx, h, cx.g.constant(kv), cx.g.constant(bias));
    return cx.g.sum_all(cx.g.mul_const(h, w));
  });
}

TEST_CASE("attention weights are row-normalized") {
  ParamStore ps(13);
  MultiHeadAttention mha(ps, "mha", 8, 4);
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    ad::Graph g;
    Ctx cx(g);
    AttnProbe probe;
    const Tensor q = random_tensor(5, 8, rng, 3.0);
    const Tensor kv = random_tensor(7, 8, rng, 3.0);
    mha(cx, g.constant(q), g.constant(kv), {}, &probe);
    REQUIRE(probe.weights.size() == 4);
    for (const ad::Var w : probe.weights) {
      const Tensor& t = g.val(w);
      REQUIRE(t.rows() == 5);
      REQUIRE(t.cols() == 7);
      for (int64_t i = 0; i < t.rows(); ++i) {
        double s = 0;
        for (int64_t j = 0; j < t.cols(); ++j) {
          s += t.at(i, j);
          CHECK(t.at(i, j) >= 0.0);
        }
        CHECK(std::fabs(s - 1.0) < 1e-5);
      }
    }
  }
}

TEST_CASE("masking equals softmax over the unmasked subset") {
  ParamStore ps(14);
  MultiHeadAttention mha(ps, "mha", 8, 2);
  Rng rng(22);
  const Tensor q = random_tensor(4, 8, rng);
  const Tensor kv = random_tensor(6, 8, rng);
  Tensor bias({4, 6});
  std::vector<std::vector<bool>> keep(4, std::vector<bool>(6));
  for (int64_t i = 0; i < 4; ++i) {
    int64_t kept = 0;
    for (int64_t j = 0; j < 6; ++j) {
      keep[static_cast<size_t>(i)][static_cast<size_t>(j)] = rng.uniform() < 0.5;
      kept += keep[static_cast<size_t>(i)][static_cast<size_t>(j)];
    }
    if (kept == 0) keep[static_cast<size_t>(i)][0] = true;  // keep rows non-empty
    for (int64_t j = 0; j < 6; ++j)
      bias.at(i, j) = keep[static_cast<size_t>(i)][static_cast<size_t>(j)] ? 0.0 : -1e9;
  }

  ad::Graph g;
  Ctx cx(g);
  AttnProbe probe;
  mha(cx, g.constant(q), g.constant(kv), g.constant(bias), &probe);

  // masked entries must be exactly zero and rows still normalized
  for (size_t h = 0; h < probe.weights.size(); ++h) {
    const Tensor& w = g.val(probe.weights[h]);
    for (int64_t i = 0; i < 4; ++i) {
      for (int64_t j = 0; j < 6; ++j)
        if (!keep[static_cast<size_t>(i)][static_cast<size_t>(j)])
          CHECK(w.at(i, j) == 0.0);  // exp(-1e9) underflows exactly
      double s = 0;
      for (int64_t j = 0; j < 6; ++j) s += w.at(i, j);
      CHECK(std::fabs(s - 1.0) < 1e-9);
    }
  }

  // brute-force filter: recompute attention with the masked keys deleted
  for (int64_t i = 0; i < 4; ++i) {
    std::vector<int64_t> kept_idx;
    for (int64_t j = 0; j < 6; ++j)
      if (keep[static_cast<size_t>(i)][static_cast<size_t>(j)]) kept_idx.push_back(j);
    ad::Graph g2;
    Ctx cx2(g2);
    AttnProbe probe2;
    Tensor kv2({static_cast<int64_t>(kept_idx.size()), 8});
    for (size_t r = 0; r < kept_idx.size(); ++r)
      for (int64_t c = 0; c < 8; ++c) kv2.at(static_cast<int64_t>(r), c) = kv.at(kept_idx[r], c);
    Tensor q1({1, 8});
    for (int64_t c = 0; c < 8; ++c) q1.at(0, c) = q.at(i, c);
    mha(cx2, g2.constant(q1), g2.constant(kv2), {}, &probe2);
    for (size_t h = 0; h < probe2.weights.size(); ++h) {
      const Tensor& wf = g2.val(probe2.weights[h]);
      const Tensor& wm = g.val(probe.weights[h]);
      for (size_t r = 0; r < kept_idx.size(); ++r)
        CHECK(std::fabs(wf.at(0, static_cast<int64_t>(r)) - wm.at(i, kept_idx[r])) < 1e-12);
    }
  }
}

TEST_CASE("frozen parameters enter the graph as constants") {
  ParamStore ps(15);
  Linear enc(ps, "enc.lin", 4, 4);
  Linear head(ps, "head.lin", 4, 2);
  ps.set_trainable_prefix("enc.", false);
  Rng rng(23);
  const Tensor x = random_tensor(3, 4, rng);

  ad::Graph g;
  Ctx cx(g);
  const ad::Var loss = g.sum_all(head(cx, enc(cx, g.constant(x))));
  g.backward(loss);
  CHECK_FALSE(g.requires_grad(cx(*enc.w)));
  CHECK(g.requires_grad(cx(*head.w)));
  CHECK(g.grad(cx(*head.w)).rows() == 4);

  // finite differences on the still-trainable half
  fd_check_params(ps, [&](Ctx& c2) {
    return c2.g.sum_all(head(c2, enc(c2, c2.g.constant(x))));
  });
  CHECK_THROWS(ps.set_trainable_prefix("nope.", true));
}

TEST_CASE("repeated random forwards stay finite") {
  ParamStore ps(16);
  SelfAttentionBlock blk(ps, "b", 8, 2, 2);
  CrossAttentionBlock xblk(ps, "x", 8, 2, 2);
  Rng rng(24);
  for (int trial = 0; trial < 200; ++trial) {
    ad::Graph g;
    Ctx cx(g);
    const Tensor x = random_tensor(6, 8, rng, 10.0);
    const Tensor kv = random_tensor(9, 8, rng, 10.0);
    ad::Var h = blk(cx, g.constant(x));
    h = xblk(cx, h, g.constant(kv));
    CHECK(all_finite(g.val(h)));
  }
}

TEST_CASE("sinusoidal position features are deterministic and bounded") {
  Rng rng(25);
  Tensor xyz({40, 3});
  for (double& v : xyz.v) v = rng.uniform(0.0, 8.0);
  const Tensor a = sinusoidal_positions(xyz, 64, 8, 8, 3);
  const Tensor b = sinusoidal_positions(xyz, 64, 8, 8, 3);
  CHECK(a.v == b.v);
  CHECK(a.rows() == 40);
  CHECK(a.cols() == 64);
  for (double v : a.v) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  // column 0 is sin of the normalized x coordinate's base octave
  for (int64_t r = 0; r < a.rows(); ++r)
    CHECK(a.at(r, 0) == doctest::Approx(std::sin(2 * M_PI * xyz.at(r, 0) / 8)).epsilon(1e-12));
  // distinct positions map to distinct features
  for (int64_t r = 1; r < a.rows(); ++r) {
    bool same = true;
    for (int64_t c = 0; c < a.cols() && same; ++c) same = a.at(0, c) == a.at(r, c);
    CHECK_FALSE(same);
  }
}
