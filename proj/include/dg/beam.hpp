#pragma once

#include <cstdint>
#include <vector>

#include "dg/geometry.hpp"

namespace dg {

struct ScoredBox {
  Box3D box;
  double score = 0.0;
};

// Sequential beam search choosing one candidate per sentence so that the
// chosen centers are most concentrated: partial assignments are ranked by
// the trace of the empirical covariance of their centers (ascending), ties
// broken by total candidate score (descending), then by candidate indices
// (lexicographic). Returns one candidate index per sentence. beam >= W^K
// degenerates to exhaustive search.
std::vector<int64_t> beam_search_assign(const std::vector<std::vector<ScoredBox>>& candidates,
                                        int64_t beam);

// Convenience wrapper returning the chosen boxes.
std::vector<Box3D> beam_search_boxes(const std::vector<std::vector<ScoredBox>>& candidates,
                                     int64_t beam);

}  // namespace dg
