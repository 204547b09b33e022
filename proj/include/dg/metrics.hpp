#pragma once

#include <cstdint>
#include <vector>

#include "dg/geometry.hpp"

namespace dg {

// Fraction of aligned pairs whose IoU is strictly above m. Empty input is
// an error.
double acc_at_iou(const std::vector<Box3D>& preds, const std::vector<Box3D>& gts, double m);

// Hit counters at the two reported thresholds.
struct SplitCounts {
  int64_t total = 0;
  int64_t hit25 = 0;
  int64_t hit50 = 0;

  void add(double iou) {
    total += 1;
    if (iou > 0.25) hit25 += 1;
    if (iou > 0.5) hit50 += 1;
  }
  void merge(const SplitCounts& o) {
    total += o.total;
    hit25 += o.hit25;
    hit50 += o.hit50;
  }
  double acc25() const { return total ? static_cast<double>(hit25) / total : 0.0; }
  double acc50() const { return total ? static_cast<double>(hit50) / total : 0.0; }
};

// One evaluation's numbers for a fixed paragraph length. Sentences whose
// target class appears exactly once in the scene land in `unique`, the rest
// in `multiple`; `overall` is their sum.
struct EvalNumbers {
  int64_t k = 0;
  int64_t scenes = 0;
  SplitCounts overall, unique, multiple;
};

}  // namespace dg
