#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dg {

// Accuracy-vs-paragraph-length curves (both IoU thresholds) as a standalone
// SVG document. Deterministic bytes for fixed inputs.
std::string accuracy_curve_svg(const std::vector<int64_t>& ks, const std::vector<double>& acc25,
                               const std::vector<double>& acc50);

}  // namespace dg
