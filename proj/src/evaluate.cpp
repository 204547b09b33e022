#include "dg/evaluate.hpp"

#include <algorithm>
#include <string>

#include "dg/beam.hpp"

namespace dg {

namespace {

// IoUs for one sample plus the per-sentence uniqueness flags.
struct SampleScores {
  std::vector<double> ious;
  std::vector<bool> unique;
};

SampleScores score_sample(const Scene& scene, const DenseSample& sample,
                          const std::vector<Box3D>& preds) {
  std::vector<Box3D> gts = sample_targets(scene, sample);
  require(preds.size() == gts.size(), "evaluate: prediction count mismatch");
  SampleScores s;
  size_t row = 0;
  for (size_t k = 0; k < sample.sentences.size(); ++k) {
    if (!sample.valid[k]) continue;
    s.ious.push_back(iou3d(preds[row], gts[row]));
    s.unique.push_back(is_unique_target(scene, sample.sentences[k].target));
    row += 1;
  }
  return s;
}

void bucket(EvalNumbers& n, const SampleScores& s) {
  for (size_t i = 0; i < s.ious.size(); ++i) {
    n.overall.add(s.ious[i]);
    (s.unique[i] ? n.unique : n.multiple).add(s.ious[i]);
  }
}

}  // namespace

EvalNumbers evaluate_dataset(const Model& model, const Dataset& ds, const RunConfig& cfg,
                             int stage) {
  require(!ds.samples.empty(), "evaluate: dataset has no samples");
  EvalNumbers nums;
  nums.scenes = static_cast<int64_t>(ds.scenes.size());
  const int64_t n = static_cast<int64_t>(ds.samples.size());
  std::vector<SampleScores> scores(static_cast<size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < n; ++i) {
    const DenseSample& sample = ds.samples[static_cast<size_t>(i)];
    const Scene& scene = ds.scenes[static_cast<size_t>(sample.scene_index)];
    Rng rng = Rng(cfg.seed).child("eval-sample/" + std::to_string(i));
    ad::Graph g;
    Ctx cx(g, /*training=*/false);
    ModelOutput out = model(cx, scene, sample, stage, rng);
    scores[static_cast<size_t>(i)] = score_sample(scene, sample, out.final_boxes());
  }
  for (const auto& s : scores) bucket(nums, s);
  for (const auto& sample : ds.samples) nums.k = std::max(nums.k, sample.k);
  return nums;
}

Dataset eval_dataset_for_k(const RunConfig& cfg, int64_t k) {
  require(k >= 1 && k <= cfg.max_sentences, "evaluate: k out of range");
  RunConfig c = cfg;
  c.eval_k = k;
  return generate_dataset(c, cfg.seed, cfg.eval_scenes, /*eval_split=*/true);
}

EvalNumbers evaluate_beam_baseline(const Model& model, const Dataset& ds, const RunConfig& cfg,
                                   int64_t width, int64_t beam) {
  require(!ds.samples.empty(), "evaluate: dataset has no samples");
  require(width >= 1, "evaluate: baseline width must be positive");
  EvalNumbers nums;
  nums.scenes = static_cast<int64_t>(ds.scenes.size());
  const int64_t n = static_cast<int64_t>(ds.samples.size());
  std::vector<SampleScores> scores(static_cast<size_t>(n));
#pragma omp parallel for schedule(dynamic)
  for (int64_t i = 0; i < n; ++i) {
    const DenseSample& sample = ds.samples[static_cast<size_t>(i)];
    const Scene& scene = ds.scenes[static_cast<size_t>(sample.scene_index)];
    Rng rng = Rng(cfg.seed).child("eval-sample/" + std::to_string(i));
    ad::Graph g;
    Ctx cx(g, /*training=*/false);
    // Proposals come from the pre-refinement path; the search replaces the
    // refinement stack as the cross-sentence reasoner.
    ModelOutput out = model(cx, scene, sample, /*stage=*/2, rng);

    std::vector<std::vector<ScoredBox>> cands(out.decoded.size());
    for (size_t s = 0; s < out.decoded.size(); ++s) {
      // Ranked alternates read off the decoded slots, sentence slot first.
      ad::Var params = model.local.ground_head(cx, out.decoded[s]);
      const Tensor& pv = g.val(params);
      const int64_t w = std::min<int64_t>(width, pv.rows());
      for (int64_t r = 0; r < w; ++r) {
        Box3D b = Box3D::from_params(&pv.data()[r * 6]);
        b = clamp_box(b, cfg.room_x, cfg.room_y, cfg.room_z, cfg.clamp_factor);
        cands[s].push_back({b, -static_cast<double>(r)});
      }
    }
    scores[static_cast<size_t>(i)] = score_sample(scene, sample, beam_search_boxes(cands, beam));
  }
  for (const auto& s : scores) bucket(nums, s);
  for (const auto& sample : ds.samples) nums.k = std::max(nums.k, sample.k);
  return nums;
}

}  // namespace dg
