#pragma once

#include <cstdint>
#include <string>

#include "dg/worldgen.hpp"

namespace dg {

// Versioned little-endian binary container for generated datasets.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

// Plain-text manifest describing a generated dataset pair. Deterministic:
// same config and seed produce identical bytes.
std::string dataset_manifest(const RunConfig& cfg, uint64_t seed, int64_t train_scenes,
                             int64_t eval_scenes);

void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace dg
