#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "dg/rng.hpp"
#include "dg/tensor.hpp"

namespace dg {

// Axis-aligned box, center + size in meters. Object boxes have strictly
// positive sizes; scene points used as attention keys get size = epsilon.
struct Box3D {
  std::array<double, 3> center{0, 0, 0};
  std::array<double, 3> size{1, 1, 1};

  double volume() const { return size[0] * size[1] * size[2]; }
  double lo(int d) const { return center[d] - 0.5 * size[d]; }
  double hi(int d) const { return center[d] + 0.5 * size[d]; }
  bool contains(double x, double y, double z) const;  // closed boundary

  // Flattened as (cx, cy, cz, sx, sy, sz).
  std::array<double, 6> params() const {
    return {center[0], center[1], center[2], size[0], size[1], size[2]};
  }
  static Box3D from_params(const double* p) {
    return Box3D{{p[0], p[1], p[2]}, {p[3], p[4], p[5]}};
  }
};

// Centroid + max-distance radius of a set of proposal centers.
struct FocusedRegion {
  std::array<double, 3> center{0, 0, 0};
  double radius = 0.0;
};

// Additive logit for masked keys; large enough that the softmax weight
// underflows to exactly zero against any in-range logit.
inline constexpr double kMaskedLogit = -1e9;

// Radius floor so a single-proposal region does not mask every key.
inline constexpr double kMinFocusRadius = 0.5;

double iou3d(const Box3D& a, const Box3D& b);
double giou3d(const Box3D& a, const Box3D& b);

// Value plus d/d(cx,cy,cz,sx,sy,sz) for both boxes. Subgradient convention
// at min/max ties picks the first argument.
double iou3d_grad(const Box3D& a, const Box3D& b, std::array<double, 6>& da,
                  std::array<double, 6>& db);
double giou3d_grad(const Box3D& a, const Box3D& b, std::array<double, 6>& da,
                   std::array<double, 6>& db);

// [nq*nk, 5] rows of [d, sin/cos azimuth, sin/cos elevation], direction
// query -> key. Coincident centers produce [0, 0, 1, 0, 1].
Tensor pairwise_explicit_features(const Tensor& centers_q, const Tensor& centers_k);

// Throws on an empty center set. Radius is floored at kMinFocusRadius.
FocusedRegion focused_region(const Tensor& centers_q);

// Additive bias per key: 0 where dist(center, key) < tau * radius, else
// kMaskedLogit. If every key would be masked the bias falls back to all
// zeros and the module-level fallback counter is bumped.
std::vector<double> focused_region_mask(const FocusedRegion& fr, double tau,
                                        const Tensor& points_k);
uint64_t focused_mask_fallback_count();
void reset_focused_mask_fallback_count();

// Indices of points inside the closed box, subsampled uniformly at random
// to max_points when more exist. `points` has xyz in its first 3 columns.
std::vector<int64_t> points_in_box(const Tensor& points, const Box3D& box, int64_t max_points,
                                   Rng& rng);

// The k nearest object indices to `focus` by center distance, ascending,
// ties broken by lower index. Throws if k exceeds the number of others.
std::vector<int64_t> k_nearest_objects(const Tensor& centers, int64_t focus, int64_t k);

// Clamps the box into a padded room [-(f-1)/2*ext, (1+(f-1)/2)*ext] per axis
// so the clamped box lies fully inside the padded bounds. Size floor 1e-4.
Box3D clamp_box(const Box3D& b, double ext_x, double ext_y, double ext_z, double factor);

}  // namespace dg
