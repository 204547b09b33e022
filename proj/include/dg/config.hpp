#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dg {

// Every knob in one flat struct. Field names double as config-file keys and
// (uppercased, DG_ prefixed) environment override names.
struct RunConfig {
  // model dims
  int64_t channels = 64;
  int64_t heads = 4;
  int64_t scene_tokens = 256;
  int64_t slot_queries = 64;
  int64_t enc_blocks = 4;
  int64_t text_blocks = 3;
  int64_t local_blocks = 4;
  int64_t global_layers = 4;
  int64_t ffn_mult = 4;
  int64_t max_sentences = 12;
  int64_t max_words = 12;

  // attention geometry
  double focus_tau = 2.0;
  double eps_box = 0.01;
  double ball_radius = 0.4;
  int64_t ball_neighbors = 16;
  double locality_radius = 2.0;
  double clamp_factor = 1.2;
  int64_t crop_max_points = 64;

  // synthetic world
  int64_t points = 4096;
  int64_t color_channels = 3;
  double room_x = 8.0;
  double room_y = 8.0;
  double room_z = 3.0;
  int64_t min_objects = 4;
  int64_t max_objects = 16;
  double order_sigma = 4.0;
  int64_t train_scenes = 256;
  int64_t eval_scenes = 64;
  int64_t train_k_min = 2;
  int64_t train_k_max = 12;
  int64_t eval_k = 12;

  // optimization
  double lr = 5e-4;
  int64_t batch = 2;
  int64_t warmup_steps = 50;
  int64_t stage1_steps = 3000;
  int64_t stage2_steps = 3000;
  int64_t stage3_steps = 3000;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;
  double noise_sigma = 0.05;
  double p_erase = 0.15;
  bool rot_augment = true;
  uint64_t seed = 1;

  // loss weights
  double w_iou = 1.0;
  double w_l1 = 1.0;
  double w_cent = 1.0;
  double w_size = 1.0;
  double w_refine = 1.0;
  double w_init = 0.05;

  // ablation switches
  bool use_cqg = true;
  bool use_explicit_bias = true;
  bool use_implicit_bias = true;
  bool use_focus_mask = true;

  // Assign one key from its text form. Unknown key or malformed value throws.
  void set(const std::string& key, const std::string& value);
  // key=value lines, '#' comments, blank lines ignored.
  static RunConfig from_file(const std::string& path);
  void load_file(const std::string& path);
  void load_text(const std::string& text, const std::string& origin = "<text>");
  // DG_<UPPERCASE_KEY> environment variables, applied over current values.
  void apply_env();
  // Canonical text form: every key, declaration order, full double precision.
  std::string to_text() const;
  uint64_t hash() const;
  // Range/consistency checks; throws with the offending key.
  void validate() const;
  static std::vector<std::string> keys();
};

}  // namespace dg
