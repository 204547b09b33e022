#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "dg/beam.hpp"
#include "dg/checkpoint.hpp"
#include "dg/dataset_io.hpp"
#include "dg/evaluate.hpp"
#include "dg/losses.hpp"
#include "dg/metrics.hpp"
#include "dg/train.hpp"

using namespace dg;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.channels = 8;
  cfg.heads = 2;
  cfg.ffn_mult = 2;
  cfg.scene_tokens = 16;
  cfg.slot_queries = 4;
  cfg.enc_blocks = 1;
  cfg.text_blocks = 1;
  cfg.local_blocks = 1;
  cfg.global_layers = 1;
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
  cfg.stage1_steps = 4;
  cfg.stage2_steps = 4;
  cfg.stage3_steps = 4;
  cfg.warmup_steps = 2;
  cfg.validate();
  return cfg;
}

std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

Box3D at_center(double x, double y, double z) {
  Box3D b;
  b.center = {x, y, z};
  b.size = {0.4, 0.4, 0.4};
  return b;
}

// Reference enumeration for the concentration objective.
std::vector<int64_t> exhaustive_best(const std::vector<std::vector<ScoredBox>>& cands) {
  std::vector<int64_t> best, cur(cands.size(), 0);
  double best_var = 0, best_score = 0;
  bool first = true;
  const size_t k = cands.size();
  while (true) {
    double mean[3] = {0, 0, 0};
    for (size_t i = 0; i < k; ++i)
      for (int d = 0; d < 3; ++d)
        mean[d] += cands[i][static_cast<size_t>(cur[i])].box.center[d] / static_cast<double>(k);
    double var = 0;
    for (size_t i = 0; i < k; ++i)
      for (int d = 0; d < 3; ++d) {
        const double dx = cands[i][static_cast<size_t>(cur[i])].box.center[d] - mean[d];
        var += dx * dx / static_cast<double>(k);
      }
    double score = 0;
    for (size_t i = 0; i < k; ++i) score += cands[i][static_cast<size_t>(cur[i])].score;
    const bool take = first || var < best_var ||
                      (var == best_var && (score > best_score ||
                                           (score == best_score && cur < best)));
    if (take) {
      best = cur;
      best_var = var;
      best_score = score;
      first = false;
    }
    size_t pos = 0;
    while (pos < k) {
      cur[pos] += 1;
      if (cur[pos] < static_cast<int64_t>(cands[pos].size())) break;
      cur[pos] = 0;
      pos += 1;
    }
    if (pos == k) break;
  }
  return best;
}

}  // namespace

TEST_CASE("optimizer walks a parameter toward its target") {
  RunConfig cfg;
  cfg.lr = 0.05;
  cfg.warmup_steps = 0;
  cfg.weight_decay = 0.0;
  ParamStore ps{1};
  Param& p = ps.create("p", {1, 1}, Init::kZeros);
  AdamW opt(cfg);

  Tensor target({1, 1});
  target.v = {3.0};
  for (int i = 0; i < 200; ++i) {
    ad::Graph g;
    Ctx cx(g);
    ad::Var loss = g.l1_loss(cx(p), target);
    g.backward(loss);
    opt.step(cx);
  }
  CHECK(std::fabs(p.value.v[0] - 3.0) < 0.2);
  CHECK(opt.steps_done() == 200);
}

TEST_CASE("warmup ramps the rate linearly and then holds") {
  RunConfig cfg;
  cfg.lr = 1e-3;
  cfg.warmup_steps = 4;
  ParamStore ps{1};
  Param& p = ps.create("p", {1, 1}, Init::kOnes);
  AdamW opt(cfg);
  Tensor target({1, 1});
  std::vector<double> rates;
  for (int i = 0; i < 6; ++i) {
    ad::Graph g;
    Ctx cx(g);
    g.backward(g.l1_loss(cx(p), target));
    opt.step(cx);
    rates.push_back(opt.last_lr());
  }
  CHECK(rates[0] == doctest::Approx(0.25e-3));
  CHECK(rates[1] == doctest::Approx(0.5e-3));
  CHECK(rates[2] == doctest::Approx(0.75e-3));
  CHECK(rates[3] == doctest::Approx(1e-3));
  CHECK(rates[4] == doctest::Approx(1e-3));
  CHECK(rates[5] == doctest::Approx(1e-3));
}

TEST_CASE("untouched parameters skip update and decay") {
  RunConfig cfg;
  cfg.lr = 0.01;
  cfg.weight_decay = 0.1;
  cfg.warmup_steps = 0;
  ParamStore ps{1};
  Param& used = ps.create("used", {1, 2}, Init::kOnes);
  Param& idle = ps.create("idle", {1, 2}, Init::kOnes);
  const std::vector<double> idle_before = idle.value.v;
  AdamW opt(cfg);

  ad::Graph g;
  Ctx cx(g);
  cx(idle);  // bound but never reached by the loss
  Tensor target({1, 2});
  g.backward(g.l1_loss(cx(used), target));
  opt.step(cx);

  CHECK(idle.value.v == idle_before);
  CHECK(used.value.v != std::vector<double>{1.0, 1.0});
}

TEST_CASE("gradient norm is reported before clipping") {
  RunConfig cfg;
  cfg.lr = 1e-3;
  cfg.warmup_steps = 0;
  cfg.grad_clip = 1.0;
  ParamStore ps{1};
  Param& p = ps.create("p", {1, 4}, Init::kZeros);
  AdamW opt(cfg);
  ad::Graph g;
  Ctx cx(g);
  Tensor target({1, 4});
  target.v = {100, 100, 100, 100};
  g.backward(g.l1_loss(cx(p), target));  // grad is -1 per element
  const double norm = opt.step(cx);
  CHECK(norm == doctest::Approx(2.0));  // sqrt(4 * 1)
}

TEST_CASE("decoupled decay shrinks a parameter with zero gradient") {
  RunConfig cfg;
  cfg.lr = 0.5;
  cfg.weight_decay = 0.1;
  cfg.warmup_steps = 0;
  ParamStore ps{1};
  Param& p = ps.create("p", {1, 1}, Init::kOnes);
  AdamW opt(cfg);
  ad::Graph g;
  Ctx cx(g);
  // Loss touches the parameter but is flat in it: grad 0 at the tie.
  Tensor target({1, 1});
  target.v = {1.0};
  g.backward(g.l1_loss(cx(p), target));
  opt.step(cx);
  // Update term vanishes (m = 0), decay term remains: 1 - lr*decay*1.
  CHECK(p.value.v[0] == doctest::Approx(1.0 - 0.5 * 0.1).epsilon(1e-9));
}

TEST_CASE("training is bit-deterministic in the seed") {
  RunConfig cfg = tiny_config();
  Dataset ds = generate_dataset(cfg, cfg.seed, cfg.train_scenes, false);

  auto run = [&] {
    ParamStore ps(cfg.seed);
    Model model(ps, cfg);
    AdamW opt(cfg);
    return train_stage(model, opt, ds, cfg, 1, 0, nullptr).losses;
  };
  const auto a = run();
  const auto b = run();
  REQUIRE(a.size() == 4);
  CHECK(a == b);

  RunConfig other = cfg;
  other.seed = cfg.seed + 1;
  ParamStore ps(other.seed);
  Model model(ps, other);
  AdamW opt(other);
  const auto c = train_stage(model, opt, ds, other, 1, 0, nullptr).losses;
  CHECK(a != c);
}

TEST_CASE("checkpoint round-trips parameters, moments, and behavior") {
  RunConfig cfg = tiny_config();
  Dataset ds = generate_dataset(cfg, cfg.seed, cfg.train_scenes, false);
  const std::string path = tmp_path("dg_ckpt_roundtrip.bin");

  ParamStore ps(cfg.seed);
  Model model(ps, cfg);
  AdamW opt(cfg);
  train_stage(model, opt, ds, cfg, 1, 0, nullptr);

  TrainState st;
  st.stage = 1;
  st.step = 4;
  st.config_text = cfg.to_text();
  st.rng_state = Rng(cfg.seed).state_string();
  save_checkpoint(path, ps, &opt, st);

  // A store with a different init seed must be fully overwritten.
  ParamStore ps2(cfg.seed + 17);
  Model model2(ps2, cfg);
  AdamW opt2(cfg);
  TrainState back = load_checkpoint(path, ps2, &opt2);
  CHECK(back.stage == 1);
  CHECK(back.step == 4);
  CHECK(back.config_text == cfg.to_text());
  for (const std::string& name : ps.names()) {
    CHECK(ps2.at(name).value.v == ps.at(name).value.v);
  }
  CHECK(opt2.steps_done() == opt.steps_done());
  REQUIRE(opt2.slots().size() == opt.slots().size());
  for (const auto& [name, slot] : opt.slots()) {
    CHECK(opt2.slots().at(name).m.v == slot.m.v);
    CHECK(opt2.slots().at(name).v.v == slot.v.v);
  }

  // Same bytes when saved again from the restored state.
  const std::string path2 = tmp_path("dg_ckpt_roundtrip2.bin");
  save_checkpoint(path2, ps2, &opt2, back);
  CHECK(read_text_file(path2) == read_text_file(path));

  // And identical eval behavior.
  EvalNumbers a = evaluate_dataset(model, ds, cfg, 1);
  EvalNumbers b = evaluate_dataset(model2, ds, cfg, 1);
  CHECK(a.overall.hit25 == b.overall.hit25);
  CHECK(a.overall.hit50 == b.overall.hit50);

  std::filesystem::remove(path);
  std::filesystem::remove(path2);
}

TEST_CASE("resumed training reproduces the uninterrupted curve exactly") {
  RunConfig cfg = tiny_config();
  cfg.stage1_steps = 6;
  Dataset ds = generate_dataset(cfg, cfg.seed, cfg.train_scenes, false);
  const std::string path = tmp_path("dg_ckpt_resume.bin");

  ParamStore ps_a(cfg.seed);
  Model model_a(ps_a, cfg);
  AdamW opt_a(cfg);
  const auto full = train_stage(model_a, opt_a, ds, cfg, 1, 0, nullptr).losses;
  REQUIRE(full.size() == 6);

  RunConfig half = cfg;
  half.stage1_steps = 3;
  ParamStore ps_b(cfg.seed);
  Model model_b(ps_b, cfg);
  AdamW opt_b(cfg);
  const auto head = train_stage(model_b, opt_b, ds, half, 1, 0, nullptr).losses;
  TrainState st;
  st.stage = 1;
  st.step = 3;
  st.config_text = cfg.to_text();
  save_checkpoint(path, ps_b, &opt_b, st);

  ParamStore ps_c(cfg.seed + 99);
  Model model_c(ps_c, cfg);
  AdamW opt_c(cfg);
  load_checkpoint(path, ps_c, &opt_c);
  const auto tail = train_stage(model_c, opt_c, ds, cfg, 1, 3, nullptr).losses;

  std::vector<double> stitched = head;
  stitched.insert(stitched.end(), tail.begin(), tail.end());
  CHECK(stitched == full);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint loading rejects mismatched models and bad files") {
  RunConfig cfg = tiny_config();
  ParamStore ps(cfg.seed);
  Model model(ps, cfg);
  const std::string path = tmp_path("dg_ckpt_mismatch.bin");
  TrainState st;
  st.config_text = cfg.to_text();
  save_checkpoint(path, ps, nullptr, st);

  // Different channel width: same names, different shapes.
  RunConfig wide = cfg;
  wide.channels = 16;
  ParamStore ps_wide(cfg.seed);
  Model model_wide(ps_wide, wide);
  CHECK_THROWS(load_checkpoint(path, ps_wide, nullptr));

  // Different depth: different parameter count.
  RunConfig deep = cfg;
  deep.local_blocks = 2;
  ParamStore ps_deep(cfg.seed);
  Model model_deep(ps_deep, deep);
  CHECK_THROWS(load_checkpoint(path, ps_deep, nullptr));

  write_text_file(path, "not a checkpoint");
  CHECK_THROWS(load_checkpoint(path, ps, nullptr));
  CHECK_THROWS(peek_checkpoint_config(path));
  CHECK_THROWS(load_checkpoint(tmp_path("dg_missing_ckpt.bin"), ps, nullptr));
  std::filesystem::remove(path);
}

TEST_CASE("step log emits one parseable record per step") {
  RunConfig cfg = tiny_config();
  Dataset ds = generate_dataset(cfg, cfg.seed, cfg.train_scenes, false);
  ParamStore ps(cfg.seed);
  Model model(ps, cfg);
  AdamW opt(cfg);
  std::ostringstream log;
  train_stage(model, opt, ds, cfg, 1, 0, &log);

  std::istringstream lines(log.str());
  std::string line;
  int count = 0;
  while (std::getline(lines, line)) {
    CHECK(line.find("{\"stage\":1,\"step\":") == 0);
    CHECK(line.find("\"loss\":") != std::string::npos);
    CHECK(line.find("\"lr\":") != std::string::npos);
    CHECK(line.find("\"grad_norm\":") != std::string::npos);
    CHECK(line.back() == '}');
    count += 1;
  }
  CHECK(count == 4);
}

TEST_CASE("stage-1 loss halves on a small training world") {
  RunConfig cfg = tiny_config();
  cfg.channels = 16;
  cfg.train_scenes = 4;
  cfg.stage1_steps = 800;
  cfg.warmup_steps = 25;
  cfg.lr = 3e-3;
  Dataset ds = generate_dataset(cfg, cfg.seed, cfg.train_scenes, false);
  ParamStore ps(cfg.seed);
  Model model(ps, cfg);
  AdamW opt(cfg);
  const auto losses = train_stage(model, opt, ds, cfg, 1, 0, nullptr).losses;
  const double early =
      std::accumulate(losses.begin(), losses.begin() + 20, 0.0) / 20.0;
  const double late = std::accumulate(losses.end() - 20, losses.end(), 0.0) / 20.0;
  INFO("early ", early, " late ", late);
  CHECK(late < 0.5 * early);
}

TEST_CASE("beam search equals exhaustive enumeration when wide enough") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const int64_t k = 1 + rng.uniform_int(4);
    const int64_t w = 1 + rng.uniform_int(3);
    std::vector<std::vector<ScoredBox>> cands(static_cast<size_t>(k));
    for (auto& list : cands) {
      for (int64_t j = 0; j < w; ++j) {
        ScoredBox sb;
        sb.box = at_center(rng.uniform(0, 8), rng.uniform(0, 8), rng.uniform(0, 3));
        sb.score = rng.uniform(0, 1);
        list.push_back(sb);
      }
    }
    int64_t beam = 1;
    for (int64_t i = 0; i < k; ++i) beam *= w;
    const auto got = beam_search_assign(cands, beam);
    const auto want = exhaustive_best(cands);
    CHECK(got == want);
  }
}

TEST_CASE("beam search handles degenerate inputs deterministically") {
  // Width 1: the only assignment.
  std::vector<std::vector<ScoredBox>> one(3);
  for (auto& l : one) l.push_back({at_center(1, 1, 1), 0.5});
  CHECK(beam_search_assign(one, 4) == std::vector<int64_t>{0, 0, 0});

  // Identical candidates: ties break to the lowest indices.
  std::vector<std::vector<ScoredBox>> same(2);
  for (auto& l : same) {
    l.push_back({at_center(2, 2, 1), 0.3});
    l.push_back({at_center(2, 2, 1), 0.3});
  }
  CHECK(beam_search_assign(same, 8) == std::vector<int64_t>{0, 0});

  // Equal variance, different scores: the higher total score wins.
  std::vector<std::vector<ScoredBox>> scored(1);
  scored[0].push_back({at_center(1, 1, 1), 0.2});
  scored[0].push_back({at_center(5, 5, 1), 0.9});
  CHECK(beam_search_assign(scored, 4) == std::vector<int64_t>{1});

  CHECK_THROWS(beam_search_assign({}, 4));
  std::vector<std::vector<ScoredBox>> has_empty(2);
  has_empty[0].push_back({at_center(1, 1, 1), 0.1});
  CHECK_THROWS(beam_search_assign(has_empty, 4));
  CHECK_THROWS(beam_search_assign(one, 0));
}

TEST_CASE("a narrow beam can miss the optimum that a full beam finds") {
  // Sentence 1 offers a decoy that looks concentrated early.
  std::vector<std::vector<ScoredBox>> cands(2);
  cands[0].push_back({at_center(0, 0, 0), 0.0});
  cands[0].push_back({at_center(4, 4, 0), 0.0});
  cands[1].push_back({at_center(4, 4, 0.2), 0.0});
  const auto full = beam_search_assign(cands, 4);
  CHECK(full == std::vector<int64_t>{1, 0});
}

TEST_CASE("accuracy counts strictly above the threshold") {
  Box3D pred = at_center(1, 1, 1);
  pred.size = {1, 1, 1};
  Box3D gt = pred;
  gt.size = {1, 1, 2};  // IoU exactly 0.5
  CHECK(iou3d(pred, gt) == 0.5);
  CHECK(acc_at_iou({pred}, {gt}, 0.5) == 0.0);
  CHECK(acc_at_iou({pred}, {gt}, 0.25) == 1.0);

  // Nudging the size across the boundary flips exactly that one count.
  Box3D gt2 = pred;
  gt2.size = {1, 1, 1.9};
  CHECK(acc_at_iou({pred, pred}, {gt, gt2}, 0.5) == 0.5);

  CHECK(acc_at_iou({pred}, {pred}, 0.5) == 1.0);
  CHECK_THROWS(acc_at_iou({}, {}, 0.5));
}

TEST_CASE("accuracy equals a per-sample recount on random boxes") {
  Rng rng(5);
  std::vector<Box3D> preds, gts;
  for (int i = 0; i < 500; ++i) {
    Box3D p = at_center(rng.uniform(0, 8), rng.uniform(0, 8), rng.uniform(0, 3));
    p.size = {rng.uniform(0.2, 2), rng.uniform(0.2, 2), rng.uniform(0.2, 2)};
    Box3D q = p;
    if (i % 3 == 0) q.center[0] += rng.uniform(0, 2);
    if (i % 4 == 0) q.size[1] *= rng.uniform(0.5, 2.0);
    preds.push_back(p);
    gts.push_back(q);
  }
  for (double m : {0.25, 0.5}) {
    int64_t hand = 0;
    for (size_t i = 0; i < preds.size(); ++i)
      if (iou3d(preds[i], gts[i]) > m) hand += 1;
    CHECK(acc_at_iou(preds, gts, m) ==
          doctest::Approx(static_cast<double>(hand) / preds.size()).epsilon(1e-15));
  }
}
