#pragma once

#include "idforge/mlp.hpp"
#include "idforge/world.hpp"

#include <cstddef>
#include <utility>
#include <vector>

namespace idforge {

// Dynamic sample selection: simulate one SGD step on a mixed batch, score
// every synthetic candidate by how its classification loss changes under
// that virtual update, and keep the candidates whose loss drops the most.

struct SelectionConfig {
    double keep_fraction = 0.5; // in (0, 1]
    double virtual_lr = 0.1;
    bool include_candidates = true; // candidates join the virtual batch
};

struct SelectionReport {
    std::vector<double> deltas;            // per candidate, input order
    std::vector<std::size_t> kept_indices; // ascending
    double loss_before = 0.0;              // virtual batch, current params
    double loss_after = 0.0;               // virtual batch, stepped params
};

// One simulated SGD step on `batch`. Pure: the input network is untouched.
Mlp virtual_step(const Mlp& net, const std::vector<LabeledSample>& batch, double virtual_lr);

// Change in the candidate's loss caused by the virtual update; negative
// means the update helped this candidate. Rejects real-origin candidates.
double utility_delta(const Mlp& net, const Mlp& stepped, const LabeledSample& candidate);

// Indices of the ceil(keep_fraction * n) smallest values, ties broken by
// original index; returned ascending.
std::vector<std::size_t> smallest_indices(const std::vector<double>& deltas, double keep_fraction);

// Scores all candidates against one shared virtual step over
// base_batch (+ candidates unless config says held-out) and keeps the
// smallest-delta subset in their original order.
std::pair<std::vector<LabeledSample>, SelectionReport>
select(const Mlp& net, const std::vector<LabeledSample>& candidates,
       const std::vector<LabeledSample>& base_batch, const SelectionConfig& config);

} // namespace idforge
