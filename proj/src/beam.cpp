#include "dg/beam.hpp"

#include <algorithm>

#include "dg/tensor.hpp"

namespace dg {

namespace {

double center_variance_trace(const std::vector<std::vector<ScoredBox>>& cands,
                             const std::vector<int64_t>& idx) {
  const size_t n = idx.size();
  double trace = 0.0;
  for (int d = 0; d < 3; ++d) {
    double mean = 0.0;
    for (size_t i = 0; i < n; ++i) mean += cands[i][static_cast<size_t>(idx[i])].box.center[d];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (size_t i = 0; i < n; ++i) {
      const double dx = cands[i][static_cast<size_t>(idx[i])].box.center[d] - mean;
      var += dx * dx;
    }
    trace += var / static_cast<double>(n);
  }
  return trace;
}

struct Partial {
  std::vector<int64_t> idx;
  double var = 0.0;
  double score = 0.0;
};

bool better(const Partial& a, const Partial& b) {
  if (a.var != b.var) return a.var < b.var;
  if (a.score != b.score) return a.score > b.score;
  return a.idx < b.idx;
}

}  // namespace

std::vector<int64_t> beam_search_assign(const std::vector<std::vector<ScoredBox>>& candidates,
                                        int64_t beam) {
  require(!candidates.empty(), "beam search: no sentences");
  require(beam >= 1, "beam search: beam must be positive");
  for (const auto& c : candidates) require(!c.empty(), "beam search: empty candidate list");

  std::vector<Partial> beams{Partial{}};
  for (size_t k = 0; k < candidates.size(); ++k) {
    std::vector<Partial> next;
    next.reserve(beams.size() * candidates[k].size());
    for (const auto& p : beams) {
      for (size_t w = 0; w < candidates[k].size(); ++w) {
        Partial q;
        q.idx = p.idx;
        q.idx.push_back(static_cast<int64_t>(w));
        q.var = center_variance_trace(candidates, q.idx);
        q.score = p.score + candidates[k][w].score;
        next.push_back(std::move(q));
      }
    }
    std::sort(next.begin(), next.end(), better);
    if (static_cast<int64_t>(next.size()) > beam) next.resize(static_cast<size_t>(beam));
    beams = std::move(next);
  }
  return beams.front().idx;
}

std::vector<Box3D> beam_search_boxes(const std::vector<std::vector<ScoredBox>>& candidates,
                                     int64_t beam) {
  auto idx = beam_search_assign(candidates, beam);
  std::vector<Box3D> out;
  out.reserve(idx.size());
  for (size_t k = 0; k < idx.size(); ++k)
    out.push_back(candidates[k][static_cast<size_t>(idx[k])].box);
  return out;
}

}  // namespace dg
