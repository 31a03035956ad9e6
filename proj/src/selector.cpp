#include "idforge/selector.hpp"

#include "idforge/downstream.hpp"
#include "idforge/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace idforge {

Mlp virtual_step(const Mlp& net, const std::vector<LabeledSample>& batch, double virtual_lr) {
    if (batch.empty()) throw ArgumentError("virtual_step: empty batch");
    if (!(virtual_lr >= 0.0)) throw ArgumentError("virtual_step: learning rate must be >= 0");
    const IdLossResult r = id_loss(net, batch);
    return sgd_step(net, r.grads, virtual_lr);
}

double utility_delta(const Mlp& net, const Mlp& stepped, const LabeledSample& candidate) {
    if (candidate.origin != Origin::Synthetic)
        throw ArgumentError("utility_delta: candidate must be synthetic");
    const std::vector<LabeledSample> one = {candidate};
    return id_loss_value(stepped, one) - id_loss_value(net, one);
}

std::vector<std::size_t> smallest_indices(const std::vector<double>& deltas, double keep_fraction) {
    if (deltas.empty()) throw ArgumentError("smallest_indices: empty deltas");
    if (!(keep_fraction > 0.0 && keep_fraction <= 1.0))
        throw ArgumentError("smallest_indices: keep_fraction must lie in (0, 1]");
    const std::size_t n = deltas.size();
    const auto k =
        static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n)));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    // stable_sort on the value alone leaves equal deltas in index order.
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return deltas[a] < deltas[b]; });
    order.resize(std::min(k, n));
    std::sort(order.begin(), order.end());
    return order;
}

std::pair<std::vector<LabeledSample>, SelectionReport>
select(const Mlp& net, const std::vector<LabeledSample>& candidates,
       const std::vector<LabeledSample>& base_batch, const SelectionConfig& config) {
    if (candidates.empty()) throw ArgumentError("select: no candidates");
    if (!(config.virtual_lr > 0.0)) throw ArgumentError("select: virtual_lr must be positive");
    if (!(config.keep_fraction > 0.0 && config.keep_fraction <= 1.0))
        throw ArgumentError("select: keep_fraction must lie in (0, 1]");

    std::vector<LabeledSample> virtual_batch = base_batch;
    if (config.include_candidates)
        virtual_batch.insert(virtual_batch.end(), candidates.begin(), candidates.end());
    if (virtual_batch.empty()) throw ArgumentError("select: empty virtual batch");

    const Mlp stepped = virtual_step(net, virtual_batch, config.virtual_lr);

    SelectionReport report;
    report.loss_before = id_loss_value(net, virtual_batch);
    report.loss_after = id_loss_value(stepped, virtual_batch);
    report.deltas.reserve(candidates.size());
    for (const LabeledSample& c : candidates)
        report.deltas.push_back(utility_delta(net, stepped, c));
    report.kept_indices = smallest_indices(report.deltas, config.keep_fraction);

    std::vector<LabeledSample> kept;
    kept.reserve(report.kept_indices.size());
    for (std::size_t i : report.kept_indices) kept.push_back(candidates[i]);
    return {std::move(kept), std::move(report)};
}

} // namespace idforge
