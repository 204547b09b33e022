#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "dg/geometry.hpp"
#include "dg/rng.hpp"

using namespace dg;

namespace {

Box3D cube(double cx, double cy, double cz, double s) {
  return Box3D{{cx, cy, cz}, {s, s, s}};
}

Box3D random_box(Rng& rng) {
  Box3D b;
  for (int d = 0; d < 3; ++d) {
    b.center[d] = rng.uniform(-1.5, 1.5);
    b.size[d] = rng.uniform(0.3, 2.5);
  }
  return b;
}

// Monte-Carlo volume oracle: sample the enclosing hull uniformly and count
// membership. Independent of the closed-form intersection path.
void mc_iou_giou(const Box3D& a, const Box3D& b, Rng& rng, int n, double& iou_mc,
                 double& giou_mc) {
  double lo[3], hi[3];
  for (int d = 0; d < 3; ++d) {
    lo[d] = std::min(a.lo(d), b.lo(d));
    hi[d] = std::max(a.hi(d), b.hi(d));
  }
  int64_t in_both = 0, in_either = 0;
  for (int i = 0; i < n; ++i) {
    const double x = rng.uniform(lo[0], hi[0]);
    const double y = rng.uniform(lo[1], hi[1]);
    const double z = rng.uniform(lo[2], hi[2]);
    const bool ia = a.contains(x, y, z);
    const bool ib = b.contains(x, y, z);
    if (ia && ib) ++in_both;
    if (ia || ib) ++in_either;
  }
  iou_mc = in_either ? static_cast<double>(in_both) / static_cast<double>(in_either) : 0.0;
  giou_mc = iou_mc - static_cast<double>(n - in_either) / static_cast<double>(n);
}

}  // namespace

TEST_CASE("iou3d closed-form cases") {
  const Box3D u = cube(0, 0, 0, 1);
  CHECK(iou3d(u, u) == doctest::Approx(1.0).epsilon(1e-12));

  const Box3D a = cube(0, 0, 0, 2);
  const Box3D b = cube(1, 0, 0, 2);
  CHECK(std::fabs(iou3d(a, b) - 1.0 / 3.0) < 1e-9);

  CHECK(iou3d(cube(0, 0, 0, 1), cube(5, 0, 0, 1)) == 0.0);
}

TEST_CASE("giou3d closed-form cases") {
  const Box3D u = cube(0, 0, 0, 1);
  CHECK(giou3d(u, u) == doctest::Approx(1.0).epsilon(1e-12));

  // Unit cubes 10 m apart: hull 11, union 2, iou 0.
  CHECK(std::fabs(giou3d(cube(0, 0, 0, 1), cube(10, 0, 0, 1)) - (-9.0 / 11.0)) < 1e-9);

  // Containment: hull equals the outer box, so giou == iou.
  const Box3D outer = cube(0, 0, 0, 4);
  const Box3D inner = cube(0.5, 0.2, -0.3, 1);
  CHECK(giou3d(outer, inner) == doctest::Approx(iou3d(outer, inner)).epsilon(1e-12));
}

TEST_CASE("invalid boxes are rejected") {
  Box3D bad = cube(0, 0, 0, 1);
  bad.size[1] = 0.0;
  CHECK_THROWS(iou3d(bad, cube(0, 0, 0, 1)));
  CHECK_THROWS(giou3d(cube(0, 0, 0, 1), bad));
}

TEST_CASE("iou/giou invariants on random pairs") {
  Rng rng(7);
  for (int t = 0; t < 200; ++t) {
    const Box3D a = random_box(rng);
    const Box3D b = random_box(rng);
    const double iab = iou3d(a, b);
    CHECK(iou3d(b, a) == doctest::Approx(iab).epsilon(1e-12));
    const double g = giou3d(a, b);
    CHECK(g <= iab + 1e-12);
    CHECK(g >= -1.0 - 1e-12);
    CHECK(iab <= 1.0 + 1e-12);
  }
}

TEST_CASE("iou/giou match the Monte-Carlo volume oracle") {
  Rng rng(11);
  for (int t = 0; t < 100; ++t) {
    const Box3D a = random_box(rng);
    const Box3D b = random_box(rng);
    double iou_mc, giou_mc;
    mc_iou_giou(a, b, rng, 120000, iou_mc, giou_mc);
    CHECK(std::fabs(iou_mc - iou3d(a, b)) < 0.01);
    CHECK(std::fabs(giou_mc - giou3d(a, b)) < 0.01);
  }
}

TEST_CASE("iou/giou gradients match central finite differences") {
  Rng rng(13);
  int tested = 0;
  while (tested < 40) {
    const Box3D a = random_box(rng);
    const Box3D b = random_box(rng);
    // Keep away from min/max ties and overlap sign changes.
    bool degenerate = false;
    for (int d = 0; d < 3; ++d) {
      if (std::fabs(a.hi(d) - b.hi(d)) < 1e-3 || std::fabs(a.lo(d) - b.lo(d)) < 1e-3)
        degenerate = true;
      const double w = std::min(a.hi(d), b.hi(d)) - std::max(a.lo(d), b.lo(d));
      if (std::fabs(w) < 1e-3) degenerate = true;
    }
    if (degenerate) continue;
    ++tested;

    std::array<double, 6> da{}, db{};
    giou3d_grad(a, b, da, db);
    std::array<double, 6> dia{}, dib{};
    iou3d_grad(a, b, dia, dib);

    const double h = 1e-6;
    auto params_a = a.params();
    auto params_b = b.params();
    for (int i = 0; i < 12; ++i) {
      auto pa = params_a;
      auto pb = params_b;
      double* slot = i < 6 ? &pa[i] : &pb[i - 6];
      *slot += h;
      const Box3D ap = Box3D::from_params(pa.data());
      const Box3D bp = Box3D::from_params(pb.data());
      *slot -= 2 * h;
      const Box3D am = Box3D::from_params(pa.data());
      const Box3D bm = Box3D::from_params(pb.data());

      // Relative error 1e-4 once the derivative is above the central-difference
      // noise floor (~1e-10 for h = 1e-6); the absolute term absorbs that noise.
      const double fd_g = (giou3d(ap, bp) - giou3d(am, bm)) / (2 * h);
      const double ad_g = i < 6 ? da[i] : db[i - 6];
      CHECK(std::fabs(fd_g - ad_g) < 1e-7 + 1e-4 * std::max(std::fabs(fd_g), std::fabs(ad_g)));

      const double fd_i = (iou3d(ap, bp) - iou3d(am, bm)) / (2 * h);
      const double ad_i = i < 6 ? dia[i] : dib[i - 6];
      CHECK(std::fabs(fd_i - ad_i) < 1e-7 + 1e-4 * std::max(std::fabs(fd_i), std::fabs(ad_i)));
    }
  }
}

TEST_CASE("pairwise explicit features: known values") {
  Tensor q({1, 3});
  Tensor k({1, 3});
  k.v = {1, 0, 0};
  Tensor f = pairwise_explicit_features(q, k);
  CHECK(f.v[0] == doctest::Approx(1.0));
  CHECK(f.v[1] == doctest::Approx(0.0));
  CHECK(f.v[2] == doctest::Approx(1.0));
  CHECK(f.v[3] == doctest::Approx(0.0));
  CHECK(f.v[4] == doctest::Approx(1.0));

  k.v = {1, 1, std::sqrt(2.0)};
  f = pairwise_explicit_features(q, k);
  const double r = std::sqrt(0.5);
  CHECK(std::fabs(f.v[0] - 2.0) < 1e-6);
  CHECK(std::fabs(f.v[1] - r) < 1e-6);
  CHECK(std::fabs(f.v[2] - r) < 1e-6);
  CHECK(std::fabs(f.v[3] - r) < 1e-6);
  CHECK(std::fabs(f.v[4] - r) < 1e-6);

  k.v = {0, 0, 0};
  f = pairwise_explicit_features(q, k);
  CHECK(f.v == std::vector<double>{0, 0, 1, 0, 1});
}

TEST_CASE("pairwise explicit features: trig identities and antisymmetry") {
  Rng rng(3);
  const int n = 12;
  Tensor c({n, 3});
  for (auto& x : c.v) x = rng.uniform(-4, 4);
  Tensor f = pairwise_explicit_features(c, c);
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < n; ++j) {
      const double* fij = &f.v[static_cast<size_t>((i * n + j) * 5)];
      const double* fji = &f.v[static_cast<size_t>((j * n + i) * 5)];
      CHECK(fij[0] >= 0.0);
      CHECK(std::fabs(fij[1] * fij[1] + fij[2] * fij[2] - 1.0) < 1e-6);
      CHECK(std::fabs(fij[3] * fij[3] + fij[4] * fij[4] - 1.0) < 1e-6);
      if (i == j) continue;
      // Reversed direction: azimuth shifts by pi, elevation negates.
      CHECK(fji[0] == doctest::Approx(fij[0]).epsilon(1e-12));
      CHECK(fji[1] == doctest::Approx(-fij[1]).epsilon(1e-9));
      CHECK(fji[2] == doctest::Approx(-fij[2]).epsilon(1e-9));
      CHECK(fji[3] == doctest::Approx(-fij[3]).epsilon(1e-9));
      CHECK(fji[4] == doctest::Approx(fij[4]).epsilon(1e-9));
    }
  }
}

TEST_CASE("focused region") {
  Tensor c({3, 3});
  c.v = {0, 0, 0, 2, 0, 0, 1, 0, 0};
  FocusedRegion fr = focused_region(c);
  CHECK(fr.center[0] == doctest::Approx(1.0));
  CHECK(fr.center[1] == doctest::Approx(0.0));
  CHECK(fr.radius == doctest::Approx(1.0));

  Tensor one({1, 3});
  one.v = {0.3, -0.2, 1.0};
  fr = focused_region(one);
  CHECK(fr.center[0] == doctest::Approx(0.3));
  CHECK(fr.radius == doctest::Approx(kMinFocusRadius));

  Tensor same({4, 3});
  for (int64_t i = 0; i < 4; ++i) {
    same.at(i, 0) = 1;
    same.at(i, 1) = 2;
    same.at(i, 2) = 0.5;
  }
  CHECK(focused_region(same).radius == doctest::Approx(kMinFocusRadius));

  Tensor empty({0, 3});
  CHECK_THROWS(focused_region(empty));
}

TEST_CASE("focused region mask: threshold and fallback") {
  FocusedRegion fr;
  fr.center = {1, 0, 0};
  fr.radius = 1.0;
  Tensor keys({3, 3});
  keys.v = {2.5, 0, 0, 4, 0, 0, 3, 0, 0};  // distances 1.5, 3, 2
  auto bias = focused_region_mask(fr, 2.0, keys);
  CHECK(bias[0] == 0.0);
  CHECK(bias[1] == kMaskedLogit);
  CHECK(bias[2] == kMaskedLogit);  // exactly tau*R: strict '<' masks it

  reset_focused_mask_fallback_count();
  Tensor far({2, 3});
  far.v = {100, 0, 0, 0, 100, 0};
  bias = focused_region_mask(fr, 2.0, far);
  CHECK(bias == std::vector<double>{0.0, 0.0});
  CHECK(focused_mask_fallback_count() == 1);
}

TEST_CASE("focused region mask agrees with brute-force filtering") {
  Rng rng(21);
  for (int t = 0; t < 50; ++t) {
    const int64_t nq = 1 + rng.uniform_int(6);
    const int64_t nk = 1 + rng.uniform_int(40);
    Tensor q({nq, 3}), k({nk, 3});
    for (auto& x : q.v) x = rng.uniform(-4, 4);
    for (auto& x : k.v) x = rng.uniform(-8, 8);
    const double tau = rng.uniform(0.5, 3.0);
    const FocusedRegion fr = focused_region(q);
    const auto bias = focused_region_mask(fr, tau, k);

    bool any = false;
    for (int64_t j = 0; j < nk; ++j) {
      double s = 0;
      for (int d = 0; d < 3; ++d) {
        const double dd = fr.center[d] - k.at(j, d);
        s += dd * dd;
      }
      if (std::sqrt(s) < tau * fr.radius) any = true;
    }
    for (int64_t j = 0; j < nk; ++j) {
      double s = 0;
      for (int d = 0; d < 3; ++d) {
        const double dd = fr.center[d] - k.at(j, d);
        s += dd * dd;
      }
      const bool open = std::sqrt(s) < tau * fr.radius;
      if (!any)
        CHECK(bias[static_cast<size_t>(j)] == 0.0);
      else
        CHECK(bias[static_cast<size_t>(j)] == (open ? 0.0 : kMaskedLogit));
    }
  }
}

TEST_CASE("points_in_box") {
  Rng rng(5);
  const Box3D u = cube(0, 0, 0, 1);
  Tensor pts({4, 3});
  pts.v = {0, 0, 0,          // center
           0.5, 0, 0,        // on a face: closed box includes it
           0.5, 0.5, 0.5,    // corner
           0.51, 0, 0};      // outside
  auto idx = points_in_box(pts, u, 10, rng);
  CHECK(idx == std::vector<int64_t>{0, 1, 2});

  Tensor none({2, 3});
  none.v = {5, 5, 5, -3, 0, 0};
  CHECK(points_in_box(none, u, 10, rng).empty());

  // Subsampling caps the count and stays within the member set.
  Tensor many({100, 3});
  for (auto& x : many.v) x = rng.uniform(-0.4, 0.4);
  auto sub = points_in_box(many, u, 16, rng);
  CHECK(sub.size() == 16);
  for (auto i : sub) CHECK(u.contains(many.at(i, 0), many.at(i, 1), many.at(i, 2)));
}

TEST_CASE("k nearest objects") {
  Tensor c({3, 3});
  c.v = {0, 0, 0, 1, 0, 0, 5, 0, 0};
  CHECK(k_nearest_objects(c, 0, 1) == std::vector<int64_t>{1});
  CHECK(k_nearest_objects(c, 0, 0).empty());
  CHECK(k_nearest_objects(c, 0, 2) == std::vector<int64_t>{1, 2});
  CHECK_THROWS(k_nearest_objects(c, 0, 3));

  // Equidistant neighbors: lower index first.
  Tensor t({3, 3});
  t.v = {0, 0, 0, 2, 0, 0, -2, 0, 0};
  CHECK(k_nearest_objects(t, 0, 2) == std::vector<int64_t>{1, 2});
}
