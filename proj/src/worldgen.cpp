#include "dg/worldgen.hpp"

#include <algorithm>
#include <cmath>

#include "dg/vocab.hpp"

namespace dg {

namespace {

struct ClassShape {
  double sx, sy, sz;
};

// Base footprints in meters, jittered +-20% per dimension at placement.
const ClassShape kShapes[10] = {
    {0.5, 0.5, 0.9},   // chair
    {1.2, 0.8, 0.75},  // table
    {1.8, 0.9, 0.8},   // sofa
    {2.0, 1.6, 0.5},   // bed
    {0.3, 0.3, 1.5},   // lamp
    {0.8, 0.3, 1.8},   // shelf
    {0.9, 0.5, 1.2},   // cabinet
    {0.4, 0.4, 1.0},   // plant
    {1.4, 0.7, 0.75},  // desk
    {0.6, 0.15, 0.4},  // monitor
};

const double kColors[10][3] = {
    {0.85, 0.25, 0.25}, {0.60, 0.40, 0.20}, {0.25, 0.45, 0.80}, {0.90, 0.90, 0.95},
    {0.95, 0.85, 0.30}, {0.50, 0.30, 0.60}, {0.35, 0.35, 0.40}, {0.20, 0.70, 0.30},
    {0.55, 0.55, 0.25}, {0.15, 0.15, 0.20},
};

constexpr double kWallGap = 0.05;     // objects stay clear of walls
constexpr double kSeparation = 0.05;  // min horizontal gap between boxes
constexpr double kDistMargin = 0.3;   // distance-relation decision margin
constexpr double kSideMargin = 0.3;   // directional-relation margin (target side)
constexpr double kSideSlack = 0.05;   // competitors must be at most this far onto the side
constexpr double kWallMargin = 0.2;
constexpr double kVolumeRatio = 1.15;
constexpr int kObjectTries = 200;
constexpr int kSceneTries = 50;

bool separated(const Box3D& a, const Box3D& b) {
  for (int d = 0; d < 2; ++d) {
    if (a.hi(d) + kSeparation <= b.lo(d) || b.hi(d) + kSeparation <= a.lo(d)) return true;
  }
  // same-floor boxes always overlap in z, so horizontal separation is required
  return false;
}

bool try_place(Rng& rng, const RunConfig& cfg, std::vector<SceneObject>& objects) {
  const int64_t count =
      cfg.min_objects + rng.uniform_int(cfg.max_objects - cfg.min_objects + 1);
  objects.clear();
  for (int64_t i = 0; i < count; ++i) {
    bool placed = false;
    for (int t = 0; t < kObjectTries && !placed; ++t) {
      SceneObject o;
      o.class_id = rng.uniform_int(vocab::num_classes());
      const ClassShape& s = kShapes[o.class_id];
      o.box.size = {s.sx * rng.uniform(0.8, 1.2), s.sy * rng.uniform(0.8, 1.2),
                    s.sz * rng.uniform(0.8, 1.2)};
      const double hx = o.box.size[0] / 2, hy = o.box.size[1] / 2;
      if (2 * hx + 2 * kWallGap >= cfg.room_x || 2 * hy + 2 * kWallGap >= cfg.room_y)
        continue;
      o.box.center = {rng.uniform(hx + kWallGap, cfg.room_x - hx - kWallGap),
                      rng.uniform(hy + kWallGap, cfg.room_y - hy - kWallGap),
                      o.box.size[2] / 2};
      bool ok = true;
      for (const auto& other : objects)
        if (!separated(o.box, other.box)) {
          ok = false;
          break;
        }
      if (ok) {
        objects.push_back(o);
        placed = true;
      }
    }
    if (!placed) return false;
  }
  return true;
}

// Uniform point on the surface of a box, faces weighted by area.
void surface_point(Rng& rng, const Box3D& b, double* out) {
  const double sx = b.size[0], sy = b.size[1], sz = b.size[2];
  const double axy = sx * sy, axz = sx * sz, ayz = sy * sz;
  const double total = 2 * (axy + axz + ayz);
  double r = rng.uniform() * total;
  int face;
  if (r < 2 * axy)
    face = r < axy ? 0 : 1;  // bottom / top
  else if (r < 2 * axy + 2 * axz)
    face = (r - 2 * axy) < axz ? 2 : 3;  // front / back (y faces)
  else
    face = (r - 2 * axy - 2 * axz) < ayz ? 4 : 5;  // left / right (x faces)
  const double u = rng.uniform(), v = rng.uniform();
  switch (face) {
    case 0:
    case 1:
      out[0] = b.lo(0) + u * sx;
      out[1] = b.lo(1) + v * sy;
      out[2] = face == 0 ? b.lo(2) : b.hi(2);
      break;
    case 2:
    case 3:
      out[0] = b.lo(0) + u * sx;
      out[1] = face == 2 ? b.lo(1) : b.hi(1);
      out[2] = b.lo(2) + v * sz;
      break;
    default:
      out[0] = face == 4 ? b.lo(0) : b.hi(0);
      out[1] = b.lo(1) + u * sy;
      out[2] = b.lo(2) + v * sz;
      break;
  }
}

double xy_dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1];
  return std::sqrt(dx * dx + dy * dy);
}

double center_dist(const SceneObject& a, const SceneObject& b) {
  double s = 0;
  for (int d = 0; d < 3; ++d) {
    const double dd = a.box.center[d] - b.box.center[d];
    s += dd * dd;
  }
  return std::sqrt(s);
}

double wall_dist(const SceneObject& o, const RunConfig& cfg) {
  const double cx = o.box.center[0], cy = o.box.center[1];
  return std::min(std::min(cx, cfg.room_x - cx), std::min(cy, cfg.room_y - cy));
}

}  // namespace

Tensor Scene::object_centers() const {
  Tensor c({static_cast<int64_t>(objects.size()), 3});
  for (size_t i = 0; i < objects.size(); ++i)
    for (int d = 0; d < 3; ++d) c.at(static_cast<int64_t>(i), d) = objects[i].box.center[d];
  return c;
}

Scene generate_scene(uint64_t seed, int64_t scene_id, const RunConfig& cfg) {
  Rng root(seed);
  Scene scene;
  scene.id = scene_id;

  bool ok = false;
  for (int attempt = 0; attempt < kSceneTries && !ok; ++attempt) {
    Rng rng = root.child("attempt/" + std::to_string(attempt));
    ok = try_place(rng, cfg, scene.objects);
    if (ok) {
      // Points from the same attempt stream so the scene stays a pure
      // function of (seed, config).
      const int64_t n = cfg.points;
      const int64_t f = cfg.color_channels;
      const int64_t count = static_cast<int64_t>(scene.objects.size());
      require(n >= count * 24 + 8, "worldgen: points too few for object count");
      double total_area = 0;
      std::vector<double> area(scene.objects.size());
      for (size_t i = 0; i < scene.objects.size(); ++i) {
        const auto& s = scene.objects[i].box.size;
        area[i] = 2 * (s[0] * s[1] + s[0] * s[2] + s[1] * s[2]);
        total_area += area[i];
      }
      const int64_t object_budget = n - std::max<int64_t>(n / 4, 8);
      std::vector<int64_t> alloc(scene.objects.size());
      int64_t used = 0;
      for (size_t i = 0; i < scene.objects.size(); ++i) {
        alloc[i] = std::max<int64_t>(
            24, static_cast<int64_t>(static_cast<double>(object_budget) * area[i] / total_area));
        used += alloc[i];
      }
      while (used > object_budget) {
        // trim the biggest allocation; minimum of 24 points is kept
        size_t big = 0;
        for (size_t i = 1; i < alloc.size(); ++i)
          if (alloc[i] > alloc[big]) big = i;
        if (alloc[big] <= 24) break;
        --alloc[big];
        --used;
      }

      scene.points = Tensor({n, 3 + f});
      int64_t row = 0;
      for (size_t i = 0; i < scene.objects.size(); ++i) {
        const SceneObject& o = scene.objects[i];
        for (int64_t p = 0; p < alloc[i]; ++p, ++row) {
          double xyz[3];
          surface_point(rng, o.box, xyz);
          for (int d = 0; d < 3; ++d) scene.points.at(row, d) = xyz[d];
          for (int64_t c = 0; c < f; ++c) {
            const double base = kColors[o.class_id][c % 3];
            scene.points.at(row, 3 + c) =
                std::clamp(base + rng.uniform(-0.1, 0.1), 0.0, 1.0);
          }
        }
      }
      for (; row < n; ++row) {
        scene.points.at(row, 0) = rng.uniform(0.0, cfg.room_x);
        scene.points.at(row, 1) = rng.uniform(0.0, cfg.room_y);
        scene.points.at(row, 2) = 0.0;
        for (int64_t c = 0; c < f; ++c)
          scene.points.at(row, 3 + c) = std::clamp(0.5 + rng.uniform(-0.05, 0.05), 0.0, 1.0);
      }
    }
  }
  require(ok, "worldgen: placement failed for seed " + std::to_string(seed));
  return scene;
}

namespace {

struct Candidate {
  std::string text;
};

void collect_candidates(const Scene& scene, int64_t target, const RunConfig& cfg,
                        int64_t prev_target, std::vector<Candidate>& out) {
  const auto& objs = scene.objects;
  const SceneObject& tgt = objs[static_cast<size_t>(target)];
  const std::string cls = vocab::class_names()[static_cast<size_t>(tgt.class_id)];

  std::vector<int64_t> comps;
  for (size_t i = 0; i < objs.size(); ++i)
    if (static_cast<int64_t>(i) != target && objs[i].class_id == tgt.class_id)
      comps.push_back(static_cast<int64_t>(i));

  if (comps.empty()) {
    out.push_back({"the " + cls + " ."});
    return;
  }

  // volume superlatives
  double max_comp_vol = 0, min_comp_vol = 1e300;
  for (int64_t c : comps) {
    const double v = objs[static_cast<size_t>(c)].box.volume();
    max_comp_vol = std::max(max_comp_vol, v);
    min_comp_vol = std::min(min_comp_vol, v);
  }
  const double tv = tgt.box.volume();
  if (tv >= kVolumeRatio * max_comp_vol) out.push_back({"the largest " + cls + " ."});
  if (kVolumeRatio * tv <= min_comp_vol) out.push_back({"the smallest " + cls + " ."});

  // anchor-relative relations; anchors are unique-class objects
  for (size_t a = 0; a < objs.size(); ++a) {
    if (static_cast<int64_t>(a) == target) continue;
    bool unique = true;
    for (size_t j = 0; j < objs.size(); ++j)
      if (j != a && objs[j].class_id == objs[a].class_id) unique = false;
    if (!unique) continue;
    const SceneObject& anc = objs[a];
    const std::string acls = vocab::class_names()[static_cast<size_t>(anc.class_id)];

    const double dt = center_dist(tgt, anc);
    double dmin = 1e300, dmax = 0;
    for (int64_t c : comps) {
      const double d = center_dist(objs[static_cast<size_t>(c)], anc);
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
    }
    if (dt + kDistMargin <= dmin) out.push_back({"the " + cls + " closest to the " + acls + " ."});
    if (dt >= dmax + kDistMargin)
      out.push_back({"the " + cls + " farthest from the " + acls + " ."});

    // directions from a viewer at the room center looking at the anchor;
    // invariant under rigid rotations about the room center
    const double ox = cfg.room_x / 2, oy = cfg.room_y / 2;
    double fx = anc.box.center[0] - ox, fy = anc.box.center[1] - oy;
    const double flen = std::sqrt(fx * fx + fy * fy);
    if (flen < 0.5) continue;
    fx /= flen;
    fy /= flen;
    const double lx = -fy, ly = fx;
    auto side = [&](const SceneObject& o, double ax, double ay) {
      return (o.box.center[0] - anc.box.center[0]) * ax +
             (o.box.center[1] - anc.box.center[1]) * ay;
    };
    const double t_l = side(tgt, lx, ly), t_f = side(tgt, fx, fy);
    double cmax_l = -1e300, cmin_l = 1e300, cmax_f = -1e300, cmin_f = 1e300;
    for (int64_t c : comps) {
      const double sl = side(objs[static_cast<size_t>(c)], lx, ly);
      const double sf = side(objs[static_cast<size_t>(c)], fx, fy);
      cmax_l = std::max(cmax_l, sl);
      cmin_l = std::min(cmin_l, sl);
      cmax_f = std::max(cmax_f, sf);
      cmin_f = std::min(cmin_f, sf);
    }
    if (t_l >= kSideMargin && cmax_l <= kSideSlack)
      out.push_back({"the " + cls + " left of the " + acls + " ."});
    if (t_l <= -kSideMargin && cmin_l >= -kSideSlack)
      out.push_back({"the " + cls + " right of the " + acls + " ."});
    if (t_f >= kSideMargin && cmax_f <= kSideSlack)
      out.push_back({"the " + cls + " behind the " + acls + " ."});
    if (t_f <= -kSideMargin && cmin_f >= -kSideSlack)
      out.push_back({"the " + cls + " in front of the " + acls + " ."});
  }

  // room-relative superlatives
  {
    const double ox = cfg.room_x / 2, oy = cfg.room_y / 2;
    const std::array<double, 3> center = {ox, oy, 0};
    auto dc = [&](const SceneObject& o) {
      std::array<double, 3> c = o.box.center;
      c[2] = 0;
      return xy_dist(c, center);
    };
    double best = 1e300;
    for (int64_t c : comps) best = std::min(best, dc(objs[static_cast<size_t>(c)]));
    if (dc(tgt) + kDistMargin <= best)
      out.push_back({"the " + cls + " nearest the room center ."});

    double bestw = 1e300;
    for (int64_t c : comps) bestw = std::min(bestw, wall_dist(objs[static_cast<size_t>(c)], cfg));
    if (wall_dist(tgt, cfg) + kWallMargin <= bestw)
      out.push_back({"the " + cls + " nearest the wall ."});
  }

  // anaphora to the previous sentence's object
  if (prev_target >= 0 && prev_target != target) {
    const SceneObject& prev = objs[static_cast<size_t>(prev_target)];
    const double dt = center_dist(tgt, prev);
    double dmin = 1e300;
    for (int64_t c : comps)
      if (c != prev_target) dmin = std::min(dmin, center_dist(objs[static_cast<size_t>(c)], prev));
    if (dt + kDistMargin <= dmin) out.push_back({"the " + cls + " closest to it ."});
  }
}

// Last resort: best-gap distance superlative against any unique-class anchor
// (or the room center), even when the margin is too small to disambiguate.
Candidate fallback_candidate(const Scene& scene, int64_t target, const RunConfig& cfg) {
  const auto& objs = scene.objects;
  const SceneObject& tgt = objs[static_cast<size_t>(target)];
  const std::string cls = vocab::class_names()[static_cast<size_t>(tgt.class_id)];

  std::vector<int64_t> comps;
  for (size_t i = 0; i < objs.size(); ++i)
    if (static_cast<int64_t>(i) != target && objs[i].class_id == tgt.class_id)
      comps.push_back(static_cast<int64_t>(i));

  double best_gap = -1e300;
  std::string best_text = "the " + cls + " nearest the room center .";
  {
    const std::array<double, 3> center = {cfg.room_x / 2, cfg.room_y / 2, 0};
    std::array<double, 3> tc = tgt.box.center;
    tc[2] = 0;
    double dmin = 1e300;
    for (int64_t c : comps) {
      std::array<double, 3> cc = objs[static_cast<size_t>(c)].box.center;
      cc[2] = 0;
      dmin = std::min(dmin, xy_dist(cc, center));
    }
    best_gap = dmin - xy_dist(tc, center);
  }
  for (size_t a = 0; a < objs.size(); ++a) {
    if (static_cast<int64_t>(a) == target) continue;
    bool unique = true;
    for (size_t j = 0; j < objs.size(); ++j)
      if (j != a && objs[j].class_id == objs[a].class_id) unique = false;
    if (!unique) continue;
    const SceneObject& anc = objs[a];
    const std::string acls = vocab::class_names()[static_cast<size_t>(anc.class_id)];
    const double dt = center_dist(tgt, anc);
    double dmin = 1e300, dmax = -1e300;
    for (int64_t c : comps) {
      const double d = center_dist(objs[static_cast<size_t>(c)], anc);
      dmin = std::min(dmin, d);
      dmax = std::max(dmax, d);
    }
    if (dmin - dt > best_gap) {
      best_gap = dmin - dt;
      best_text = "the " + cls + " closest to the " + acls + " .";
    }
    if (dt - dmax > best_gap) {
      best_gap = dt - dmax;
      best_text = "the " + cls + " farthest from the " + acls + " .";
    }
  }
  return {best_text};
}

}  // namespace

Sentence generate_sentence(const Scene& scene, int64_t target, const RunConfig& cfg, Rng& rng,
                           int64_t prev_target) {
  require(target >= 0 && target < static_cast<int64_t>(scene.objects.size()),
          "worldgen: bad sentence target");
  std::vector<Candidate> cands;
  collect_candidates(scene, target, cfg, prev_target, cands);

  Sentence s;
  s.target = target;
  if (!cands.empty()) {
    s.text = cands[static_cast<size_t>(rng.uniform_int(
                       static_cast<int64_t>(cands.size())))]
                 .text;
  } else {
    s.text = fallback_candidate(scene, target, cfg).text;
    s.flagged = true;
  }
  s.tokens = vocab::encode(s.text);
  require(static_cast<int64_t>(s.tokens.size()) <= cfg.max_words,
          "worldgen: sentence exceeds max_words");
  return s;
}

bool is_unique_target(const Scene& scene, int64_t target) {
  const int64_t cls = scene.objects[static_cast<size_t>(target)].class_id;
  for (size_t i = 0; i < scene.objects.size(); ++i)
    if (static_cast<int64_t>(i) != target && scene.objects[i].class_id == cls) return false;
  return true;
}

DenseSample sample_paragraph(const Scene& scene, int64_t scene_index, int64_t k,
                             const RunConfig& cfg, Rng& rng) {
  const int64_t n = static_cast<int64_t>(scene.objects.size());
  const int64_t k_eff = std::min(k, n);
  require(k_eff >= 2, "worldgen: paragraph needs k >= 2 after clamping to object count");
  require(k_eff <= cfg.max_sentences, "worldgen: k exceeds max_sentences");

  const int64_t focus = rng.uniform_int(n);
  const Tensor centers = scene.object_centers();
  std::vector<int64_t> concerned = {focus};
  for (int64_t i : k_nearest_objects(centers, focus, k_eff - 1)) concerned.push_back(i);

  // Order by successive proximity-weighted draws without replacement.
  std::vector<double> weight(concerned.size());
  for (size_t i = 0; i < concerned.size(); ++i) {
    double s = 0;
    for (int64_t d = 0; d < 3; ++d) {
      const double dd = centers.at(concerned[i], d) - centers.at(focus, d);
      s += dd * dd;
    }
    weight[i] = std::exp(-std::sqrt(s) / cfg.order_sigma);
  }
  std::vector<int64_t> order;
  std::vector<bool> taken(concerned.size(), false);
  for (int64_t step = 0; step < k_eff; ++step) {
    double total = 0;
    for (size_t i = 0; i < concerned.size(); ++i)
      if (!taken[i]) total += weight[i];
    double r = rng.uniform() * total;
    size_t pick = 0;
    for (size_t i = 0; i < concerned.size(); ++i) {
      if (taken[i]) continue;
      pick = i;  // last untaken wins if r runs past the total
      if (r < weight[i]) break;
      r -= weight[i];
    }
    taken[pick] = true;
    order.push_back(concerned[pick]);
  }

  DenseSample sample;
  sample.scene_index = scene_index;
  sample.k = k_eff;
  sample.sentences.resize(static_cast<size_t>(cfg.max_sentences));
  sample.valid.assign(static_cast<size_t>(cfg.max_sentences), 0);
  int64_t prev = -1;
  for (int64_t i = 0; i < k_eff; ++i) {
    sample.sentences[static_cast<size_t>(i)] =
        generate_sentence(scene, order[static_cast<size_t>(i)], cfg, rng, prev);
    sample.valid[static_cast<size_t>(i)] = 1;
    prev = order[static_cast<size_t>(i)];
  }
  for (int64_t i = k_eff; i < cfg.max_sentences; ++i) {
    Sentence pad;
    pad.tokens.assign(static_cast<size_t>(cfg.max_words), vocab::kPad);
    pad.target = -1;
    sample.sentences[static_cast<size_t>(i)] = pad;
  }
  return sample;
}

Dataset generate_dataset(const RunConfig& cfg, uint64_t seed, int64_t num_scenes,
                         bool eval_split) {
  Dataset ds;
  ds.config_text = cfg.to_text();
  const std::string prefix = eval_split ? "eval" : "train";
  Rng root(fnv1a64(std::to_string(seed) + "/" + prefix));
  for (int64_t i = 0; i < num_scenes; ++i) {
    const uint64_t scene_seed =
        fnv1a64(std::to_string(seed) + "/" + prefix + "/scene/" + std::to_string(i));
    ds.scenes.push_back(generate_scene(scene_seed, i, cfg));
    Rng para = root.child("para/" + std::to_string(i));
    int64_t k;
    if (eval_split) {
      k = cfg.eval_k;
    } else {
      k = cfg.train_k_min + para.uniform_int(cfg.train_k_max - cfg.train_k_min + 1);
    }
    k = std::min<int64_t>(k, static_cast<int64_t>(ds.scenes.back().objects.size()));
    ds.samples.push_back(sample_paragraph(ds.scenes.back(), i, k, cfg, para));
  }
  return ds;
}

void rotate_scene(Scene& scene, const RunConfig& cfg, int quarter_turns) {
  const int q = ((quarter_turns % 4) + 4) % 4;
  if (q == 0) return;
  require(q == 2 || cfg.room_x == cfg.room_y,
          "worldgen: quarter rotations need a square room");
  const double ox = cfg.room_x / 2, oy = cfg.room_y / 2;
  auto rot = [&](double& x, double& y) {
    const double rx = x - ox, ry = y - oy;
    switch (q) {
      case 1:
        x = ox - ry;
        y = oy + rx;
        break;
      case 2:
        x = ox - rx;
        y = oy - ry;
        break;
      default:
        x = ox + ry;
        y = oy - rx;
        break;
    }
  };
  for (int64_t i = 0; i < scene.points.rows(); ++i) {
    double x = scene.points.at(i, 0), y = scene.points.at(i, 1);
    rot(x, y);
    scene.points.at(i, 0) = x;
    scene.points.at(i, 1) = y;
  }
  for (auto& o : scene.objects) {
    rot(o.box.center[0], o.box.center[1]);
    if (q % 2 == 1) std::swap(o.box.size[0], o.box.size[1]);
  }
}

}  // namespace dg
