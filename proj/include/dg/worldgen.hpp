#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dg/config.hpp"
#include "dg/geometry.hpp"
#include "dg/rng.hpp"
#include "dg/tensor.hpp"

namespace dg {

struct SceneObject {
  Box3D box;
  int64_t class_id = 0;
};

struct Scene {
  int64_t id = 0;
  Tensor points;  // N x (3 + color channels)
  std::vector<SceneObject> objects;
  Tensor object_centers() const;  // n x 3
};

struct Sentence {
  std::vector<int64_t> tokens;
  int64_t target = -1;
  std::string text;
  bool flagged = false;  // fallback template, may not uniquely identify
};

// One paragraph: K valid sentences in padded slots; padded slots carry
// all-pad token sequences and valid = 0.
struct DenseSample {
  int64_t scene_index = 0;
  int64_t k = 0;
  std::vector<Sentence> sentences;  // max_sentences slots
  std::vector<uint8_t> valid;       // max_sentences flags
};

struct Dataset {
  std::string config_text;
  std::vector<Scene> scenes;
  std::vector<DenseSample> samples;
};

Scene generate_scene(uint64_t seed, int64_t scene_id, const RunConfig& cfg);

// prev_target < 0 means no antecedent; enables the anaphoric template.
Sentence generate_sentence(const Scene& scene, int64_t target, const RunConfig& cfg, Rng& rng,
                           int64_t prev_target = -1);

DenseSample sample_paragraph(const Scene& scene, int64_t scene_index, int64_t k,
                             const RunConfig& cfg, Rng& rng);

// true iff the sentence's target class has no same-class distractor.
bool is_unique_target(const Scene& scene, int64_t target);

Dataset generate_dataset(const RunConfig& cfg, uint64_t seed, int64_t num_scenes, bool eval_split);

// Right-angle rotation about the room's vertical axis: quarter_turns in
// {0,1,2,3}. Rotates points and boxes rigidly; relations expressed by the
// grammar (viewer at room center) are preserved exactly.
void rotate_scene(Scene& scene, const RunConfig& cfg, int quarter_turns);

}  // namespace dg
