#include "dg/geometry.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>

#include "dg/kernels.hpp"

namespace dg {

namespace {

std::atomic<uint64_t> g_focus_fallbacks{0};

void check_box(const Box3D& b, const char* who) {
  for (int d = 0; d < 3; ++d)
    require(b.size[d] > 0.0, std::string(who) + ": box size must be positive");
}

struct OverlapTerms {
  double I = 0, Va = 0, Vb = 0, U = 0, H = 0;
  double w[3]{}, h[3]{};
  bool overlap = false;
};

OverlapTerms overlap_terms(const Box3D& a, const Box3D& b) {
  OverlapTerms t;
  t.Va = a.volume();
  t.Vb = b.volume();
  t.I = 1.0;
  t.H = 1.0;
  t.overlap = true;
  for (int d = 0; d < 3; ++d) {
    const double w = std::min(a.hi(d), b.hi(d)) - std::max(a.lo(d), b.lo(d));
    const double h = std::max(a.hi(d), b.hi(d)) - std::min(a.lo(d), b.lo(d));
    t.w[d] = w;
    t.h[d] = h;
    if (w <= 0.0) {
      t.overlap = false;
      t.I = 0.0;
    } else if (t.overlap) {
      t.I *= w;
    }
    t.H *= h;
  }
  t.U = t.Va + t.Vb - t.I;
  return t;
}

}  // namespace

bool Box3D::contains(double x, double y, double z) const {
  return x >= lo(0) && x <= hi(0) && y >= lo(1) && y <= hi(1) && z >= lo(2) && z <= hi(2);
}

double iou3d(const Box3D& a, const Box3D& b) {
  check_box(a, "iou3d");
  check_box(b, "iou3d");
  const OverlapTerms t = overlap_terms(a, b);
  return t.I / t.U;
}

double giou3d(const Box3D& a, const Box3D& b) {
  check_box(a, "giou3d");
  check_box(b, "giou3d");
  const OverlapTerms t = overlap_terms(a, b);
  return t.I / t.U - (t.H - t.U) / t.H;
}

namespace {

// Accumulates dI, dU, dH w.r.t. both boxes' 6 parameters, then maps through
// the quotient rules. Index layout: 0..2 center, 3..5 size.
struct GeoGrads {
  std::array<double, 6> dI_a{}, dI_b{}, dU_a{}, dU_b{}, dH_a{}, dH_b{};
  OverlapTerms t;
};

GeoGrads overlap_grads(const Box3D& a, const Box3D& b) {
  GeoGrads g;
  g.t = overlap_terms(a, b);
  const OverlapTerms& t = g.t;

  for (int d = 0; d < 3; ++d) {
    // min(a.hi, b.hi): derivative goes to the smaller side (ties to a).
    const bool a_hi_min = a.hi(d) <= b.hi(d);
    const bool a_lo_max = a.lo(d) >= b.lo(d);

    if (t.overlap) {
      const double scale = t.I / t.w[d];
      // dw/d(center) = [hi from this box] - [lo from this box]
      // dw/d(size)   = 0.5 * ([hi from this box] + [lo from this box])
      g.dI_a[d] += scale * ((a_hi_min ? 1.0 : 0.0) - (a_lo_max ? 1.0 : 0.0));
      g.dI_a[3 + d] += scale * 0.5 * ((a_hi_min ? 1.0 : 0.0) + (a_lo_max ? 1.0 : 0.0));
      g.dI_b[d] += scale * ((a_hi_min ? 0.0 : 1.0) - (a_lo_max ? 0.0 : 1.0));
      g.dI_b[3 + d] += scale * 0.5 * ((a_hi_min ? 0.0 : 1.0) + (a_lo_max ? 0.0 : 1.0));
    }

    const double hscale = t.H / t.h[d];
    g.dH_a[d] += hscale * ((a_hi_min ? 0.0 : 1.0) - (a_lo_max ? 0.0 : 1.0));
    g.dH_a[3 + d] += hscale * 0.5 * ((a_hi_min ? 0.0 : 1.0) + (a_lo_max ? 0.0 : 1.0));
    g.dH_b[d] += hscale * ((a_hi_min ? 1.0 : 0.0) - (a_lo_max ? 1.0 : 0.0));
    g.dH_b[3 + d] += hscale * 0.5 * ((a_hi_min ? 1.0 : 0.0) + (a_lo_max ? 1.0 : 0.0));
  }

  for (int d = 0; d < 3; ++d) {
    g.dU_a[3 + d] = t.Va / a.size[static_cast<size_t>(d)];
    g.dU_b[3 + d] = t.Vb / b.size[static_cast<size_t>(d)];
  }
  for (int i = 0; i < 6; ++i) {
    g.dU_a[static_cast<size_t>(i)] += -g.dI_a[static_cast<size_t>(i)];
    g.dU_b[static_cast<size_t>(i)] += -g.dI_b[static_cast<size_t>(i)];
  }
  return g;
}

}  // namespace

double iou3d_grad(const Box3D& a, const Box3D& b, std::array<double, 6>& da,
                  std::array<double, 6>& db) {
  check_box(a, "iou3d_grad");
  check_box(b, "iou3d_grad");
  const GeoGrads g = overlap_grads(a, b);
  const double U2 = g.t.U * g.t.U;
  for (int i = 0; i < 6; ++i) {
    const auto k = static_cast<size_t>(i);
    da[k] = (g.dI_a[k] * g.t.U - g.t.I * g.dU_a[k]) / U2;
    db[k] = (g.dI_b[k] * g.t.U - g.t.I * g.dU_b[k]) / U2;
  }
  return g.t.I / g.t.U;
}

double giou3d_grad(const Box3D& a, const Box3D& b, std::array<double, 6>& da,
                   std::array<double, 6>& db) {
  check_box(a, "giou3d_grad");
  check_box(b, "giou3d_grad");
  const GeoGrads g = overlap_grads(a, b);
  const double U2 = g.t.U * g.t.U;
  const double H2 = g.t.H * g.t.H;
  for (int i = 0; i < 6; ++i) {
    const auto k = static_cast<size_t>(i);
    const double diou_a = (g.dI_a[k] * g.t.U - g.t.I * g.dU_a[k]) / U2;
    const double diou_b = (g.dI_b[k] * g.t.U - g.t.I * g.dU_b[k]) / U2;
    // giou = iou - 1 + U/H
    da[k] = diou_a + (g.dU_a[k] * g.t.H - g.t.U * g.dH_a[k]) / H2;
    db[k] = diou_b + (g.dU_b[k] * g.t.H - g.t.U * g.dH_b[k]) / H2;
  }
  return g.t.I / g.t.U - (g.t.H - g.t.U) / g.t.H;
}

Tensor pairwise_explicit_features(const Tensor& centers_q, const Tensor& centers_k) {
  require(centers_q.cols() == 3 && centers_k.cols() == 3,
          "pairwise_explicit_features: centers must be Nx3");
  const int64_t nq = centers_q.rows();
  const int64_t nk = centers_k.rows();
  Tensor out({nq * nk, 5});
  kernels::pairwise_offset_features(centers_q.data(), nq, centers_k.data(), nk, out.data());
  return out;
}

FocusedRegion focused_region(const Tensor& centers_q) {
  require(centers_q.rows() >= 1 && centers_q.cols() == 3, "focused_region: need at least one center");
  FocusedRegion fr;
  const int64_t n = centers_q.rows();
  for (int64_t i = 0; i < n; ++i)
    for (int d = 0; d < 3; ++d) fr.center[static_cast<size_t>(d)] += centers_q.at(i, d);
  for (int d = 0; d < 3; ++d) fr.center[static_cast<size_t>(d)] /= static_cast<double>(n);
  double r = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (int d = 0; d < 3; ++d) {
      const double dd = fr.center[static_cast<size_t>(d)] - centers_q.at(i, d);
      s += dd * dd;
    }
    r = std::max(r, std::sqrt(s));
  }
  fr.radius = std::max(r, kMinFocusRadius);
  return fr;
}

std::vector<double> focused_region_mask(const FocusedRegion& fr, double tau,
                                        const Tensor& points_k) {
  require(tau > 0.0, "focused_region_mask: tau must be positive");
  const int64_t nk = points_k.rows();
  std::vector<double> bias(static_cast<size_t>(nk), 0.0);
  const double thresh = tau * fr.radius;
  bool any_open = false;
  for (int64_t j = 0; j < nk; ++j) {
    double s = 0.0;
    for (int d = 0; d < 3; ++d) {
      const double dd = fr.center[static_cast<size_t>(d)] - points_k.at(j, d);
      s += dd * dd;
    }
    if (std::sqrt(s) < thresh) {
      any_open = true;
    } else {
      bias[static_cast<size_t>(j)] = kMaskedLogit;
    }
  }
  if (!any_open && nk > 0) {
    std::fill(bias.begin(), bias.end(), 0.0);
    g_focus_fallbacks.fetch_add(1, std::memory_order_relaxed);
  }
  return bias;
}

uint64_t focused_mask_fallback_count() { return g_focus_fallbacks.load(); }
void reset_focused_mask_fallback_count() { g_focus_fallbacks.store(0); }

std::vector<int64_t> points_in_box(const Tensor& points, const Box3D& box, int64_t max_points,
                                   Rng& rng) {
  require(max_points >= 1, "points_in_box: max_points must be >= 1");
  require(points.cols() >= 3, "points_in_box: points need xyz columns");
  std::vector<int64_t> in;
  const int64_t n = points.rows();
  for (int64_t i = 0; i < n; ++i)
    if (box.contains(points.at(i, 0), points.at(i, 1), points.at(i, 2))) in.push_back(i);
  if (static_cast<int64_t>(in.size()) <= max_points) return in;
  // Partial Fisher-Yates: the first max_points entries are a uniform subset.
  for (int64_t i = 0; i < max_points; ++i) {
    const int64_t j = i + rng.uniform_int(static_cast<int64_t>(in.size()) - i);
    std::swap(in[static_cast<size_t>(i)], in[static_cast<size_t>(j)]);
  }
  in.resize(static_cast<size_t>(max_points));
  return in;
}

std::vector<int64_t> k_nearest_objects(const Tensor& centers, int64_t focus, int64_t k) {
  const int64_t n = centers.rows();
  require(focus >= 0 && focus < n, "k_nearest_objects: focus out of range");
  require(k >= 0 && k <= n - 1, "k_nearest_objects: k exceeds object count - 1");
  std::vector<std::pair<double, int64_t>> by_dist;
  by_dist.reserve(static_cast<size_t>(n - 1));
  for (int64_t i = 0; i < n; ++i) {
    if (i == focus) continue;
    double s = 0.0;
    for (int d = 0; d < 3; ++d) {
      const double dd = centers.at(i, d) - centers.at(focus, d);
      s += dd * dd;
    }
    by_dist.emplace_back(s, i);
  }
  std::sort(by_dist.begin(), by_dist.end());
  std::vector<int64_t> out;
  out.reserve(static_cast<size_t>(k));
  for (int64_t i = 0; i < k; ++i) out.push_back(by_dist[static_cast<size_t>(i)].second);
  return out;
}

Box3D clamp_box(const Box3D& b, double ext_x, double ext_y, double ext_z, double factor) {
  require(factor >= 1.0, "clamp_box: factor must be >= 1");
  const double ext[3] = {ext_x, ext_y, ext_z};
  Box3D out = b;
  for (int d = 0; d < 3; ++d) {
    const double pad = 0.5 * (factor - 1.0) * ext[d];
    out.size[d] = std::clamp(out.size[d], 1e-4, factor * ext[d]);
    const double half = 0.5 * out.size[d];
    out.center[d] = std::clamp(out.center[d], -pad + half, ext[d] + pad - half);
  }
  return out;
}

}  // namespace dg
