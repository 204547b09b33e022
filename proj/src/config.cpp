#include "dg/config.hpp"

#include <cctype>
#include <cstddef>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "dg/rng.hpp"
#include "dg/tensor.hpp"

namespace dg {

namespace {

enum class Kind { I64, U64, F64, B };

struct Field {
  const char* name;
  Kind kind;
  size_t off;
};

#define DG_FIELD(kind, member) {#member, Kind::kind, offsetof(RunConfig, member)}

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      DG_FIELD(I64, channels),
      DG_FIELD(I64, heads),
      DG_FIELD(I64, scene_tokens),
      DG_FIELD(I64, slot_queries),
      DG_FIELD(I64, enc_blocks),
      DG_FIELD(I64, text_blocks),
      DG_FIELD(I64, local_blocks),
      DG_FIELD(I64, global_layers),
      DG_FIELD(I64, ffn_mult),
      DG_FIELD(I64, max_sentences),
      DG_FIELD(I64, max_words),
      DG_FIELD(F64, focus_tau),
      DG_FIELD(F64, eps_box),
      DG_FIELD(F64, ball_radius),
      DG_FIELD(I64, ball_neighbors),
      DG_FIELD(F64, locality_radius),
      DG_FIELD(F64, clamp_factor),
      DG_FIELD(I64, crop_max_points),
      DG_FIELD(I64, points),
      DG_FIELD(I64, color_channels),
      DG_FIELD(F64, room_x),
      DG_FIELD(F64, room_y),
      DG_FIELD(F64, room_z),
      DG_FIELD(I64, min_objects),
      DG_FIELD(I64, max_objects),
      DG_FIELD(F64, order_sigma),
      DG_FIELD(I64, train_scenes),
      DG_FIELD(I64, eval_scenes),
      DG_FIELD(I64, train_k_min),
      DG_FIELD(I64, train_k_max),
      DG_FIELD(I64, eval_k),
      DG_FIELD(F64, lr),
      DG_FIELD(I64, batch),
      DG_FIELD(I64, warmup_steps),
      DG_FIELD(I64, stage1_steps),
      DG_FIELD(I64, stage2_steps),
      DG_FIELD(I64, stage3_steps),
      DG_FIELD(F64, weight_decay),
      DG_FIELD(F64, adam_beta1),
      DG_FIELD(F64, adam_beta2),
      DG_FIELD(F64, adam_eps),
      DG_FIELD(F64, grad_clip),
      DG_FIELD(F64, noise_sigma),
      DG_FIELD(F64, p_erase),
      DG_FIELD(B, rot_augment),
      DG_FIELD(U64, seed),
      DG_FIELD(F64, w_iou),
      DG_FIELD(F64, w_l1),
      DG_FIELD(F64, w_cent),
      DG_FIELD(F64, w_size),
      DG_FIELD(F64, w_refine),
      DG_FIELD(F64, w_init),
      DG_FIELD(B, use_cqg),
      DG_FIELD(B, use_explicit_bias),
      DG_FIELD(B, use_implicit_bias),
      DG_FIELD(B, use_focus_mask),
  };
  return f;
}

#undef DG_FIELD

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

int64_t parse_i64(const std::string& key, const std::string& v) {
  size_t pos = 0;
  int64_t r = 0;
  try {
    r = std::stoll(v, &pos);
  } catch (...) {
    throw std::runtime_error("config: bad integer for '" + key + "': " + v);
  }
  require(pos == v.size(), "config: trailing junk in integer for '" + key + "': " + v);
  return r;
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
  size_t pos = 0;
  uint64_t r = 0;
  try {
    r = std::stoull(v, &pos);
  } catch (...) {
    throw std::runtime_error("config: bad unsigned integer for '" + key + "': " + v);
  }
  require(pos == v.size(), "config: trailing junk in integer for '" + key + "': " + v);
  return r;
}

double parse_f64(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double r = 0;
  try {
    r = std::stod(v, &pos);
  } catch (...) {
    throw std::runtime_error("config: bad number for '" + key + "': " + v);
  }
  require(pos == v.size(), "config: trailing junk in number for '" + key + "': " + v);
  return r;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::runtime_error("config: bad bool for '" + key + "' (want true/false/1/0): " + v);
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  char* base = reinterpret_cast<char*>(this);
  for (const Field& f : fields()) {
    if (key != f.name) continue;
    switch (f.kind) {
      case Kind::I64:
        *reinterpret_cast<int64_t*>(base + f.off) = parse_i64(key, value);
        return;
      case Kind::U64:
        *reinterpret_cast<uint64_t*>(base + f.off) = parse_u64(key, value);
        return;
      case Kind::F64:
        *reinterpret_cast<double*>(base + f.off) = parse_f64(key, value);
        return;
      case Kind::B:
        *reinterpret_cast<bool*>(base + f.off) = parse_bool(key, value);
        return;
    }
  }
  throw std::runtime_error("config: unknown key '" + key + "'");
}

void RunConfig::load_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    require(eq != std::string::npos,
            "config: " + origin + ":" + std::to_string(lineno) + ": expected key=value");
    set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  load_text(buf.str(), path);
}

RunConfig RunConfig::from_file(const std::string& path) {
  RunConfig c;
  c.load_file(path);
  return c;
}

void RunConfig::apply_env() {
  for (const Field& f : fields()) {
    std::string name = "DG_";
    for (const char* p = f.name; *p; ++p)
      name += static_cast<char>(std::toupper(static_cast<unsigned char>(*p)));
    if (const char* v = std::getenv(name.c_str())) set(f.name, v);
  }
}

std::string RunConfig::to_text() const {
  const char* base = reinterpret_cast<const char*>(this);
  std::ostringstream out;
  char buf[64];
  for (const Field& f : fields()) {
    out << f.name << " = ";
    switch (f.kind) {
      case Kind::I64:
        out << *reinterpret_cast<const int64_t*>(base + f.off);
        break;
      case Kind::U64:
        out << *reinterpret_cast<const uint64_t*>(base + f.off);
        break;
      case Kind::F64:
        std::snprintf(buf, sizeof(buf), "%.17g", *reinterpret_cast<const double*>(base + f.off));
        out << buf;
        break;
      case Kind::B:
        out << (*reinterpret_cast<const bool*>(base + f.off) ? "true" : "false");
        break;
    }
    out << "\n";
  }
  return out.str();
}

uint64_t RunConfig::hash() const { return fnv1a64(to_text()); }

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.name);
  return out;
}

void RunConfig::validate() const {
  auto bad = [](const std::string& what) {
    throw std::runtime_error("config: invalid value: " + what);
  };
  if (channels < 4) bad("channels must be >= 4");
  if (heads < 1 || channels % heads != 0) bad("heads must divide channels");
  if (scene_tokens < 1) bad("scene_tokens must be >= 1");
  if (points < scene_tokens) bad("points must be >= scene_tokens");
  if (slot_queries < 1) bad("slot_queries must be >= 1");
  if (enc_blocks < 1 || text_blocks < 1 || local_blocks < 1) bad("block counts must be >= 1");
  if (global_layers < 0) bad("global_layers must be >= 0");
  if (ffn_mult < 1) bad("ffn_mult must be >= 1");
  if (max_sentences < 2 || max_sentences > 12) bad("max_sentences must be in [2,12]");
  if (max_words < 4) bad("max_words must be >= 4 (longest template)");
  if (focus_tau <= 0) bad("focus_tau must be > 0");
  if (eps_box <= 0) bad("eps_box must be > 0");
  if (ball_radius <= 0 || ball_neighbors < 1) bad("ball query needs radius > 0, neighbors >= 1");
  if (locality_radius <= 0) bad("locality_radius must be > 0");
  if (clamp_factor < 1.0) bad("clamp_factor must be >= 1");
  if (crop_max_points < 1) bad("crop_max_points must be >= 1");
  if (color_channels < 1) bad("color_channels must be >= 1");
  if (room_x <= 0 || room_y <= 0 || room_z <= 0) bad("room extents must be > 0");
  if (min_objects < 1 || max_objects < min_objects) bad("object count range");
  if (order_sigma <= 0) bad("order_sigma must be > 0");
  if (train_scenes < 1 || eval_scenes < 1) bad("scene counts must be >= 1");
  if (train_k_min < 2 || train_k_max < train_k_min || train_k_max > max_sentences)
    bad("train k range must satisfy 2 <= min <= max <= max_sentences");
  if (eval_k < 2 || eval_k > max_sentences) bad("eval_k must be in [2,max_sentences]");
  if (lr <= 0) bad("lr must be > 0");
  if (batch < 1) bad("batch must be >= 1");
  if (warmup_steps < 0 || stage1_steps < 0 || stage2_steps < 0 || stage3_steps < 0)
    bad("step counts must be >= 0");
  if (weight_decay < 0) bad("weight_decay must be >= 0");
  if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1)
    bad("adam betas must be in [0,1)");
  if (adam_eps <= 0) bad("adam_eps must be > 0");
  if (grad_clip < 0) bad("grad_clip must be >= 0 (0 disables)");
  if (noise_sigma < 0) bad("noise_sigma must be >= 0");
  if (p_erase < 0 || p_erase >= 1) bad("p_erase must be in [0,1)");
  if (w_iou < 0 || w_l1 < 0 || w_cent < 0 || w_size < 0 || w_refine < 0 || w_init < 0)
    bad("loss weights must be >= 0");
}

}  // namespace dg
