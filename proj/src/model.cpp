#include "dg/model.hpp"


namespace dg {

std::vector<Box3D> sample_targets(const Scene& scene, const DenseSample& sample) {
  std::vector<Box3D> out;
  for (size_t k = 0; k < sample.sentences.size(); ++k) {
    if (!sample.valid[k]) continue;
    const int64_t t = sample.sentences[k].target;
    require(t >= 0 && t < static_cast<int64_t>(scene.objects.size()),
            "sample_targets: target out of range");
    out.push_back(scene.objects[static_cast<size_t>(t)].box);
  }
  return out;
}

Model::Model(ParamStore& ps, const RunConfig& cfg)
    : use_cqg(cfg.use_cqg),
      scene_enc(ps, cfg),
      text_enc(ps, cfg),
      cqg(ps, cfg),
      local(ps, cfg),
      global(ps, cfg),
      cfg_(cfg) {}

ModelOutput Model::operator()(Ctx& cx, const Scene& scene, const DenseSample& sample, int stage,
                              Rng& rng, GlobalProbe* probe) const {
  require(stage >= 1 && stage <= 3, "model: stage must be 1, 2, or 3");
  require(sample.valid.size() == sample.sentences.size(), "model: sample slot mismatch");
  ModelOutput out;

  Tensor positions;
  ad::Var scene_feats = scene_enc(cx, scene.points, positions);
  out.scene_feats = scene_feats;
  out.scene_positions = positions;

  std::vector<ad::Var> sent_feats(sample.sentences.size());
  for (size_t k = 0; k < sample.sentences.size(); ++k) {
    if (!sample.valid[k]) continue;
    sent_feats[k] = text_enc(cx, sample.sentences[k].tokens);
    out.slots.push_back(static_cast<int64_t>(k));
  }
  require(!out.slots.empty(), "model: sample has no valid sentences");

  std::vector<ad::Var> queries = (stage >= 2 && use_cqg)
                                     ? cqg(cx, sent_feats, sample.valid, scene_feats)
                                     : cqg.bypass(cx, sent_feats, sample.valid);

  ad::Var scene_kv = local.prepare_scene(cx, scene_feats, positions);
  std::vector<ad::Var> slot0;
  for (int64_t k : out.slots) {
    ad::Var dec = local(cx, queries[static_cast<size_t>(k)], scene_kv);
    out.decoded.push_back(dec);
    slot0.push_back(cx.g.slice_rows(dec, 0, 1));
  }
  // Sentence-level states, one row per valid sentence. They double as the
  // initial proposal features for refinement.
  ad::Var sent_states = cx.g.concat_rows(slot0);
  out.init_params = local.ground_head(cx, sent_states);

  const Tensor& ip = cx.g.val(out.init_params);
  for (int64_t i = 0; i < ip.rows(); ++i) {
    Box3D b = Box3D::from_params(&ip.data()[i * 6]);
    if (!cx.train) b = clamp_box(b, cfg_.room_x, cfg_.room_y, cfg_.room_z, cfg_.clamp_factor);
    out.init_boxes.push_back(b);
  }

  if (stage >= 3) {
    out.trace =
        global(cx, sent_states, out.init_boxes, scene_feats, positions, scene.points, rng, probe);
    out.refined = true;
  }
  return out;
}

}  // namespace dg
