#include "dg/losses.hpp"

#include <cmath>


namespace dg {

Tensor box_params(const std::vector<Box3D>& boxes) {
  Tensor out({static_cast<int64_t>(boxes.size()), 6});
  for (size_t i = 0; i < boxes.size(); ++i) {
    auto p = boxes[i].params();
    for (int j = 0; j < 6; ++j) out.at(static_cast<int64_t>(i), j) = p[j];
  }
  return out;
}

ad::Var initial_loss(ad::Graph& g, ad::Var pred, const std::vector<Box3D>& targets,
                     const RunConfig& cfg) {
  const int64_t k = static_cast<int64_t>(targets.size());
  require(k > 0, "initial_loss: no targets");
  require(g.rows(pred) == k && g.cols(pred) == 6, "initial_loss: pred shape mismatch");
  Tensor t = box_params(targets);
  ad::Var giou = g.giou_loss(pred, t);
  ad::Var l1 = g.l1_loss(pred, t);
  ad::Var sum = g.add(g.scale(giou, cfg.w_iou), g.scale(l1, cfg.w_l1));
  return g.scale(sum, 1.0 / static_cast<double>(k));
}

ad::Var refine_loss(ad::Graph& g, const RefineTrace& trace, const std::vector<Box3D>& targets,
                    const RunConfig& cfg) {
  const int64_t k = static_cast<int64_t>(targets.size());
  require(k > 0, "refine_loss: no targets");
  const size_t layers = trace.d_center.size();
  require(trace.d_logsize.size() == layers && trace.layer_inputs.size() == layers,
          "refine_loss: trace size mismatch");
  ad::Var acc;
  for (size_t l = 0; l < layers; ++l) {
    const auto& fed = trace.layer_inputs[l];
    require(fed.size() == targets.size(), "refine_loss: layer input count mismatch");
    Tensor tc({k, 3}), ts({k, 3});
    for (int64_t i = 0; i < k; ++i) {
      const Box3D& in = fed[static_cast<size_t>(i)];
      const Box3D& gt = targets[static_cast<size_t>(i)];
      for (int j = 0; j < 3; ++j) {
        tc.at(i, j) = gt.center[j] - in.center[j];
        ts.at(i, j) = std::log(gt.size[j]) - std::log(in.size[j]);
      }
    }
    ad::Var part = g.add(g.scale(g.l1_loss(trace.d_center[l], tc), cfg.w_cent),
                         g.scale(g.l1_loss(trace.d_logsize[l], ts), cfg.w_size));
    acc = (l == 0) ? part : g.add(acc, part);
  }
  return g.scale(acc, 1.0 / static_cast<double>(k));
}

ad::Var total_loss(ad::Graph& g, ad::Var init_part, ad::Var refine_part, const RunConfig& cfg) {
  return g.add(g.scale(refine_part, cfg.w_refine), g.scale(init_part, cfg.w_init));
}

}  // namespace dg
