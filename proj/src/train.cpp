#include "dg/train.hpp"

#include <cinttypes>
#include <cstdio>
#include <ostream>
#include <string>

#include "dg/encoders.hpp"
#include "dg/losses.hpp"

namespace dg {

int64_t stage_steps(const RunConfig& cfg, int stage) {
  switch (stage) {
    case 1:
      return cfg.stage1_steps;
    case 2:
      return cfg.stage2_steps;
    case 3:
      return cfg.stage3_steps;
    default:
      require(false, "stage_steps: stage must be 1, 2, or 3");
      return 0;
  }
}

TrainResult train_stage(Model& model, AdamW& opt, const Dataset& ds, const RunConfig& cfg,
                        int stage, int64_t start_step, std::ostream* log) {
  require(!ds.samples.empty(), "train: dataset has no samples");
  require(start_step >= 0, "train: negative start step");
  const int64_t total = stage_steps(cfg, stage);
  const Rng stage_root = Rng(cfg.seed).child("train-stage" + std::to_string(stage));

  TrainResult res;
  for (int64_t step = start_step; step < total; ++step) {
    Rng srng = stage_root.child("step" + std::to_string(step));
    ad::Graph g;
    Ctx cx(g, /*training=*/true);
    ad::Var batch_loss;
    for (int64_t b = 0; b < cfg.batch; ++b) {
      const DenseSample& picked =
          ds.samples[static_cast<size_t>(srng.uniform_int(static_cast<int64_t>(ds.samples.size())))];
      require(picked.scene_index >= 0 &&
                  picked.scene_index < static_cast<int64_t>(ds.scenes.size()),
              "train: sample references missing scene");
      Scene scene = ds.scenes[static_cast<size_t>(picked.scene_index)];
      DenseSample sample = picked;
      if (cfg.rot_augment) rotate_scene(scene, cfg, static_cast<int>(srng.uniform_int(4)));
      for (size_t k = 0; k < sample.sentences.size(); ++k) {
        if (!sample.valid[k]) continue;
        sample.sentences[k].tokens = erase_words(sample.sentences[k].tokens, cfg.p_erase, srng);
      }

      ModelOutput out = model(cx, scene, sample, stage, srng);
      std::vector<Box3D> targets = sample_targets(scene, sample);
      ad::Var li = initial_loss(g, out.init_params, targets, cfg);
      ad::Var loss =
          (stage == 3) ? total_loss(g, li, refine_loss(g, out.trace, targets, cfg), cfg) : li;
      batch_loss = (b == 0) ? loss : g.add(batch_loss, loss);
    }
    batch_loss = g.scale(batch_loss, 1.0 / static_cast<double>(cfg.batch));
    g.backward(batch_loss);
    const double grad_norm = opt.step(cx);
    const double loss_val = g.val(batch_loss)[0];

    res.steps_run += 1;
    res.losses.push_back(loss_val);
    if (log) {
      char line[256];
      std::snprintf(line, sizeof(line),
                    "{\"stage\":%d,\"step\":%" PRId64 ",\"loss\":%.17g,\"lr\":%.17g,"
                    "\"grad_norm\":%.17g}\n",
                    stage, step, loss_val, opt.last_lr(), grad_norm);
      (*log) << line;
    }
  }
  return res;
}

}  // namespace dg
