#include "dg/metrics.hpp"

#include "dg/tensor.hpp"

namespace dg {

double acc_at_iou(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts, double m) {
  require(!preds.empty(), "acc_at_iou: empty prediction list");
  require(preds.size() == gts.size(), "acc_at_iou: length mismatch");
  int64_t hits = 0;
  for (size_t i = 0; i < preds.size(); ++i) {
    if (iou3d(preds[i], gts[i]) > m) hits += 1;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

}  // namespace dg
