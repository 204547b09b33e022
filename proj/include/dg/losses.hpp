#pragma once

#include <vector>

#include "dg/autodiff.hpp"
#include "dg/config.hpp"
#include "dg/geometry.hpp"
#include "dg/global_decoder.hpp"
#include "dg/tensor.hpp"

namespace dg {

// K x 6 parameter matrix for a proposal set, row order preserved.
Tensor box_params(const std::vector<Box3D>& boxes);

// Proposal loss: GIoU term plus parameter L1, averaged over the K rows.
// pred is K x 6 on the graph; targets supplies the matching ground truth.
ad::Var initial_loss(ad::Graph& g, ad::Var pred, const std::vector<Box3D>& targets,
                     const RunConfig& cfg);

// Refinement loss: each layer's predicted offsets regress the residual
// between ground truth and that layer's actual (possibly noised) input,
// center in meters and size in log space. Summed over layers, averaged
// over the K proposals.
ad::Var refine_loss(ad::Graph& g, const RefineTrace& trace, const std::vector<Box3D>& targets,
                    const RunConfig& cfg);

// Stage-3 objective: weighted sum of the two parts.
ad::Var total_loss(ad::Graph& g, ad::Var init_part, ad::Var refine_part, const RunConfig& cfg);

}  // namespace dg
