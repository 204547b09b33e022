#pragma once

#include <string>
#include <vector>

#include "dg/config.hpp"
#include "dg/metrics.hpp"

namespace dg {

// Human-readable report: key = value lines, one block per paragraph length,
// followed by the full config echo. Deterministic bytes for fixed inputs.
std::string report_text(const RunConfig& cfg, const std::vector<EvalNumbers>& per_k,
                        const std::string& label);

// The same numbers as a machine-readable document.
std::string report_json(const RunConfig& cfg, const std::vector<EvalNumbers>& per_k,
                        const std::string& label);

}  // namespace dg
