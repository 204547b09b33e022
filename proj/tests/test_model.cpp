#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dg/evaluate.hpp"
#include "dg/losses.hpp"
#include "dg/model.hpp"

using namespace dg;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.channels = 8;
  cfg.heads = 2;
  cfg.ffn_mult = 2;
  cfg.scene_tokens = 16;
  cfg.slot_queries = 4;
  cfg.enc_blocks = 2;
  cfg.text_blocks = 2;
  cfg.local_blocks = 1;
  cfg.global_layers = 2;
  cfg.max_sentences = 4;
  cfg.max_words = 8;
  cfg.points = 256;
  cfg.ball_neighbors = 8;
  cfg.min_objects = 4;
  cfg.max_objects = 5;
  cfg.train_k_min = 2;
  cfg.train_k_max = 3;
  cfg.eval_k = 3;
  cfg.train_scenes = 2;
  cfg.eval_scenes = 2;
  cfg.validate();
  return cfg;
}

struct World {
  RunConfig cfg;
  Scene scene;
  DenseSample sample;

  explicit World(uint64_t seed = 11, int64_t k = 2) : cfg(tiny_config()) {
    scene = generate_scene(seed, 0, cfg);
    Rng rng(seed + 1);
    sample = sample_paragraph(scene, 0, k, cfg, rng);
  }
};

bool close_e2e(double a, double b) {
  return std::fabs(a - b) < 1e-6 + 1e-3 * std::max(std::fabs(a), std::fabs(b));
}

Tensor random_weights(int64_t r, int64_t c, Rng& rng) {
  Tensor t({r, c});
  for (double& x : t.v) x = rng.uniform(-1.0, 1.0);
  return t;
}

Box3D make_box(double cx, double cy, double cz, double sx, double sy, double sz) {
  Box3D b;
  b.center = {cx, cy, cz};
  b.size = {sx, sy, sz};
  return b;
}

}  // namespace

TEST_CASE("forward produces one state and box per valid sentence") {
  World w;
  ParamStore ps{3};
  Model model(ps, w.cfg);
  Rng rng(5);
  ad::Graph g;
  Ctx cx(g, /*training=*/false);
  ModelOutput out = model(cx, w.scene, w.sample, 3, rng);

  const int64_t k = static_cast<int64_t>(out.slots.size());
  CHECK(k == w.sample.k);
  CHECK(g.rows(out.init_params) == k);
  CHECK(g.cols(out.init_params) == 6);
  CHECK(static_cast<int64_t>(out.init_boxes.size()) == k);
  CHECK(static_cast<int64_t>(out.decoded.size()) == k);
  CHECK(g.rows(out.scene_feats) == w.cfg.scene_tokens);
  CHECK(out.scene_positions.rows() == w.cfg.scene_tokens);
  CHECK(out.refined);
  CHECK(static_cast<int64_t>(out.trace.boxes.size()) == w.cfg.global_layers + 1);
  CHECK(static_cast<int64_t>(out.trace.boxes.back().size()) == k);
  for (size_t i = 0; i < out.decoded.size(); ++i) {
    const int64_t slot = out.slots[i];
    const int64_t words =
        static_cast<int64_t>(w.sample.sentences[static_cast<size_t>(slot)].tokens.size());
    CHECK(g.rows(out.decoded[i]) == words + 1);
  }
}

TEST_CASE("stage 1 equals stage 2 with contextual queries disabled") {
  World w;
  ParamStore ps{3};
  Model model(ps, w.cfg);

  auto run = [&](int stage, bool use_cqg) {
    model.use_cqg = use_cqg;
    Rng rng(5);
    ad::Graph g;
    Ctx cx(g, false);
    ModelOutput out = model(cx, w.scene, w.sample, stage, rng);
    return g.val(out.init_params).v;
  };

  const auto s1 = run(1, true);
  const auto s2_off = run(2, false);
  const auto s2_on = run(2, true);
  CHECK(s1 == s2_off);
  CHECK(s1 != s2_on);

  // Later stages keep the proposal path byte-identical; they only add work.
  const auto s3_prefix = run(3, true);
  CHECK(s2_on == s3_prefix);
}

TEST_CASE("repeated forwards are bit-identical") {
  World w;
  ParamStore ps{9};
  Model model(ps, w.cfg);
  auto run = [&] {
    Rng rng(5);
    ad::Graph g;
    Ctx cx(g, false);
    ModelOutput out = model(cx, w.scene, w.sample, 3, rng);
    std::vector<double> flat;
    for (const Box3D& b : out.final_boxes()) {
      auto p = b.params();
      flat.insert(flat.end(), p.begin(), p.end());
    }
    return flat;
  };
  CHECK(run() == run());
}

TEST_CASE("garbage in padded slots changes nothing") {
  World w;
  ParamStore ps{3};
  Model model(ps, w.cfg);

  DenseSample garbled = w.sample;
  bool saw_padding = false;
  for (size_t s = 0; s < garbled.sentences.size(); ++s) {
    if (garbled.valid[s]) continue;
    saw_padding = true;
    garbled.sentences[s].tokens.assign(5, 3);  // arbitrary live token ids
    garbled.sentences[s].target = 0;
    garbled.sentences[s].text = "noise";
  }
  REQUIRE(saw_padding);

  auto run = [&](const DenseSample& sample) {
    Rng rng(5);
    ad::Graph g;
    Ctx cx(g, true);
    ModelOutput out = model(cx, w.scene, sample, 3, rng);
    std::vector<Box3D> targets = sample_targets(w.scene, sample);
    ad::Var li = initial_loss(g, out.init_params, targets, w.cfg);
    ad::Var loss = total_loss(g, li, refine_loss(g, out.trace, targets, w.cfg), w.cfg);
    return g.val(loss)[0];
  };
  CHECK(run(w.sample) == run(garbled));
}

TEST_CASE("inference clamps proposals into the padded room") {
  World w;
  ParamStore ps{3};
  Model model(ps, w.cfg);
  Rng rng(5);
  ad::Graph g;
  Ctx cx(g, /*training=*/false);
  ModelOutput out = model(cx, w.scene, w.sample, 1, rng);
  const double pad = (w.cfg.clamp_factor - 1.0) / 2.0;
  for (const Box3D& b : out.init_boxes) {
    CHECK(b.lo(0) >= -pad * w.cfg.room_x - 1e-12);
    CHECK(b.hi(0) <= (1.0 + pad) * w.cfg.room_x + 1e-12);
    CHECK(b.lo(1) >= -pad * w.cfg.room_y - 1e-12);
    CHECK(b.hi(1) <= (1.0 + pad) * w.cfg.room_y + 1e-12);
    CHECK(b.lo(2) >= -pad * w.cfg.room_z - 1e-12);
    CHECK(b.hi(2) <= (1.0 + pad) * w.cfg.room_z + 1e-12);
    for (int d = 0; d < 3; ++d) CHECK(b.size[d] > 0.0);
  }
}

TEST_CASE("proposal loss reproduces the separated-cube value") {
  ad::Graph g;
  Tensor pred({1, 6});
  pred.v = {0, 0, 0, 1, 1, 1};
  ad::Var pv = g.leaf(pred, true);
  std::vector<Box3D> gt{make_box(10, 0, 0, 1, 1, 1)};
  RunConfig cfg;
  ad::Var loss = initial_loss(g, pv, gt, cfg);
  CHECK(g.val(loss)[0] == doctest::Approx(1.0 + 9.0 / 11.0 + 10.0).epsilon(1e-12));

  // Perfect prediction scores zero.
  ad::Graph g2;
  Tensor same({1, 6});
  same.v = {10, 0, 0, 1, 1, 1};
  CHECK(g2.val(initial_loss(g2, g2.leaf(same, true), gt, cfg))[0] == 0.0);
}

TEST_CASE("proposal loss averages over sentences") {
  RunConfig cfg;
  ad::Graph g;
  Tensor pred({2, 6});
  pred.v = {0, 0, 0, 1, 1, 1, 10, 0, 0, 1, 1, 1};
  std::vector<Box3D> gt{make_box(10, 0, 0, 1, 1, 1), make_box(10, 0, 0, 1, 1, 1)};
  ad::Var loss = initial_loss(g, g.leaf(pred, true), gt, cfg);
  // One perfect row and one separated-cube row, halved.
  CHECK(g.val(loss)[0] == doctest::Approx((1.0 + 9.0 / 11.0 + 10.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("refinement loss matches hand targets and masks padded slots") {
  RunConfig cfg;
  ad::Graph g;
  RefineTrace tr;
  // Single layer, one proposal whose center is off by (1,0,0), right size.
  tr.layer_inputs.push_back({make_box(1, 2, 1, 0.5, 0.5, 0.5)});
  tr.d_center.push_back(g.leaf(Tensor({1, 3}), true));
  tr.d_logsize.push_back(g.leaf(Tensor({1, 3}), true));
  std::vector<Box3D> gt{make_box(2, 2, 1, 0.5, 0.5, 0.5)};
  CHECK(g.val(refine_loss(g, tr, gt, cfg))[0] == doctest::Approx(1.0).epsilon(1e-12));

  // Exact offsets drive it to zero.
  ad::Graph g2;
  RefineTrace tr2;
  tr2.layer_inputs.push_back({make_box(1, 2, 1, 0.25, 0.5, 0.5)});
  Tensor dc({1, 3});
  dc.v = {1, 0, 0};
  Tensor dsz({1, 3});
  dsz.v = {std::log(2.0), 0, 0};
  tr2.d_center.push_back(g2.leaf(dc, true));
  tr2.d_logsize.push_back(g2.leaf(dsz, true));
  CHECK(g2.val(refine_loss(g2, tr2, gt, cfg))[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("total loss applies the declared weighting") {
  RunConfig cfg;
  ad::Graph g;
  Tensor a({1, 1}), b({1, 1});
  a.v = {2.0};
  b.v = {3.0};
  ad::Var total = total_loss(g, g.leaf(a, false), g.leaf(b, false), cfg);
  CHECK(g.val(total)[0] == doctest::Approx(cfg.w_refine * 3.0 + cfg.w_init * 2.0).epsilon(1e-12));
  CHECK(cfg.w_init == 0.05);
  CHECK(cfg.w_refine == 1.0);
}

TEST_CASE("stage losses stay finite and non-negative on random worlds") {
  RunConfig cfg = tiny_config();
  cfg.global_layers = 1;
  ParamStore ps{21};
  Model model(ps, cfg);
  for (int trial = 0; trial < 30; ++trial) {
    Scene scene = generate_scene(1000 + trial, trial, cfg);
    Rng rng(2000 + trial);
    DenseSample sample = sample_paragraph(scene, trial, 2 + trial % 2, cfg, rng);
    ad::Graph g;
    Ctx cx(g, /*training=*/true);
    ModelOutput out = model(cx, scene, sample, 3, rng);
    std::vector<Box3D> targets = sample_targets(scene, sample);
    const double li = g.val(initial_loss(g, out.init_params, targets, cfg))[0];
    const double lr = g.val(refine_loss(g, out.trace, targets, cfg))[0];
    ad::Var tv = total_loss(g, initial_loss(g, out.init_params, targets, cfg),
                            refine_loss(g, out.trace, targets, cfg), cfg);
    const double lt = g.val(tv)[0];
    CHECK(std::isfinite(li));
    CHECK(std::isfinite(lr));
    CHECK(li >= 0.0);
    CHECK(lr >= 0.0);
    CHECK(lt >= 0.0);
  }
}

TEST_CASE("stage 3 gradients reach both phases") {
  World w;
  ParamStore ps{3};
  Model model(ps, w.cfg);
  Rng rng(5);
  ad::Graph g;
  Ctx cx(g, true);
  ModelOutput out = model(cx, w.scene, w.sample, 3, rng);
  std::vector<Box3D> targets = sample_targets(w.scene, w.sample);
  ad::Var loss = total_loss(g, initial_loss(g, out.init_params, targets, w.cfg),
                            refine_loss(g, out.trace, targets, w.cfg), w.cfg);
  g.backward(loss);

  auto grad_norm = [&](const std::string& name) {
    const Param& p = ps.at(name);
    auto it = cx.bound.find(&p);
    REQUIRE(it != cx.bound.end());
    if (!g.has_grad(it->second)) return 0.0;
    double s = 0;
    for (double x : g.grad(it->second).v) s += x * x;
    return std::sqrt(s);
  };
  CHECK(grad_norm("scene.tok.mlp1.w") > 0.0);
  CHECK(grad_norm("text.block0.attn.wq.w") > 0.0);
  CHECK(grad_norm("cqg.w_q.w") > 0.0);
  CHECK(grad_norm("local.head.fc2.w") > 0.0);
  CHECK(grad_norm("global.head.fc2.w") > 0.0);
  CHECK(grad_norm("global.layer0.self.sp.pair.wq.w") > 0.0);
}

TEST_CASE("end-to-end gradients agree with finite differences") {
  RunConfig cfg = tiny_config();
  cfg.points = 128;
  cfg.scene_tokens = 8;
  cfg.global_layers = 1;
  cfg.crop_max_points = 4096;  // no crop subsampling, keeps FD smooth
  cfg.validate();

  Scene scene = generate_scene(31, 0, cfg);
  Rng srng(32);
  DenseSample sample = sample_paragraph(scene, 0, 2, cfg, srng);
  ParamStore ps{33};
  Model model(ps, cfg);
  std::vector<Box3D> targets = sample_targets(scene, sample);

  // Fixed proposals for the refinement pass: two populated object boxes and
  // one far-off empty box so the learned empty codes participate too.
  std::vector<Box3D> fixed = {scene.objects[0].box, scene.objects[1].box,
                              make_box(9, 9, 2, 0.3, 0.3, 0.3)};
  std::vector<Box3D> fixed_gt = {scene.objects[1].box, scene.objects[0].box,
                                 scene.objects[2].box};

  auto build = [&](Ctx& cx) -> ad::Var {
    ad::Graph& g = cx.g;
    Rng rng(99);
    ModelOutput out = model(cx, scene, sample, 2, rng);
    ad::Var loss = initial_loss(g, out.init_params, targets, cfg);
    // Refinement on constant proposals: every detached input stays fixed,
    // so finite differences see the same function the tape differentiates.
    RefineTrace tr = model.global(cx, cx.g.slice_rows(out.scene_feats, 0, 3), fixed,
                                  out.scene_feats, out.scene_positions, scene.points, rng);
    return g.add(loss, refine_loss(g, tr, fixed_gt, cfg));
  };

  ad::Graph g;
  Ctx cx(g);
  ad::Var loss = build(cx);
  g.backward(loss);
  std::map<const Param*, Tensor> analytic;
  for (const auto& kv : cx.bound) {
    if (!g.requires_grad(kv.second)) continue;
    analytic[kv.first] =
        g.has_grad(kv.second) ? g.grad(kv.second) : Tensor(g.val(kv.second).shape);
  }

  auto run = [&]() {
    ad::Graph g2;
    Ctx cx2(g2);
    return g2.val(build(cx2)).v[0];
  };
  const double h = 1e-6;
  int checked = 0;
  for (const std::string& name : ps.names()) {
    Param& p = ps.at(name);
    REQUIRE(analytic.count(&p) == 1);
    const Tensor& ag = analytic[&p];
    const size_t n = p.value.v.size();
    const size_t stride = std::max<size_t>(1, n / 2);
    for (size_t e = 0; e < n; e += stride) {
      const double orig = p.value.v[e];
      p.value.v[e] = orig + h;
      const double lp = run();
      p.value.v[e] = orig - h;
      const double lm = run();
      p.value.v[e] = orig;
      const double fd = (lp - lm) / (2 * h);
      INFO("param ", name, " elem ", e, " fd ", fd, " ad ", ag.v[e]);
      CHECK(close_e2e(fd, ag.v[e]));
      checked += 1;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("evaluation counts partition and repeat exactly") {
  RunConfig cfg = tiny_config();
  cfg.global_layers = 1;
  Dataset ds = generate_dataset(cfg, cfg.seed, 2, /*eval_split=*/true);
  ParamStore ps{41};
  Model model(ps, cfg);

  EvalNumbers a = evaluate_dataset(model, ds, cfg, 3);
  EvalNumbers b = evaluate_dataset(model, ds, cfg, 3);
  CHECK(a.overall.total == b.overall.total);
  CHECK(a.overall.hit25 == b.overall.hit25);
  CHECK(a.overall.hit50 == b.overall.hit50);
  CHECK(a.unique.total + a.multiple.total == a.overall.total);
  CHECK(a.unique.hit25 + a.multiple.hit25 == a.overall.hit25);
  CHECK(a.unique.hit50 + a.multiple.hit50 == a.overall.hit50);
  CHECK(a.overall.acc25() >= 0.0);
  CHECK(a.overall.acc25() <= 1.0);
  int64_t sentences = 0;
  for (const auto& s : ds.samples) sentences += s.k;
  CHECK(a.overall.total == sentences);

  // The weighted mean of the split accuracies is the overall accuracy.
  if (a.unique.total > 0 && a.multiple.total > 0) {
    const double mixed = (a.unique.acc25() * a.unique.total +
                          a.multiple.acc25() * a.multiple.total) /
                         a.overall.total;
    CHECK(a.overall.acc25() == doctest::Approx(mixed).epsilon(1e-12));
  }

  // Garbage in padded slots must not move any metric.
  Dataset garbled = ds;
  for (auto& sample : garbled.samples) {
    for (size_t s = 0; s < sample.sentences.size(); ++s) {
      if (sample.valid[s]) continue;
      sample.sentences[s].tokens.assign(4, 7);
    }
  }
  EvalNumbers c = evaluate_dataset(model, garbled, cfg, 3);
  CHECK(c.overall.hit25 == a.overall.hit25);
  CHECK(c.overall.hit50 == a.overall.hit50);
}

TEST_CASE("k sweep datasets reuse the same scenes") {
  RunConfig cfg = tiny_config();
  Dataset d2 = eval_dataset_for_k(cfg, 2);
  Dataset d3 = eval_dataset_for_k(cfg, 3);
  REQUIRE(d2.scenes.size() == d3.scenes.size());
  for (size_t i = 0; i < d2.scenes.size(); ++i) {
    CHECK(d2.scenes[i].points.v == d3.scenes[i].points.v);
    CHECK(d2.scenes[i].objects.size() == d3.scenes[i].objects.size());
  }
  for (const auto& s : d2.samples) CHECK(s.k <= 2);
  bool saw_three = false;
  for (const auto& s : d3.samples) saw_three = saw_three || s.k == 3;
  CHECK(saw_three);
}

TEST_CASE("beam baseline evaluates deterministically") {
  RunConfig cfg = tiny_config();
  Dataset ds = generate_dataset(cfg, cfg.seed, 2, /*eval_split=*/true);
  ParamStore ps{43};
  Model model(ps, cfg);
  EvalNumbers a = evaluate_beam_baseline(model, ds, cfg, 12, 12);
  EvalNumbers b = evaluate_beam_baseline(model, ds, cfg, 12, 12);
  CHECK(a.overall.total == b.overall.total);
  CHECK(a.overall.hit25 == b.overall.hit25);
  int64_t sentences = 0;
  for (const auto& s : ds.samples) sentences += s.k;
  CHECK(a.overall.total == sentences);
}
