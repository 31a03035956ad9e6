#include "idforge/downstream.hpp"

#include "idforge/errors.hpp"
#include "idforge/io.hpp"
#include "idforge/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

namespace idforge {

namespace {

double ce_from_logits(const Vec& logits, std::size_t y, Vec* probs_out) {
    const double m = *std::max_element(logits.begin(), logits.end());
    double z = 0.0;
    for (double v : logits) z += std::exp(v - m);
    if (probs_out) {
        probs_out->resize(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i)
            (*probs_out)[i] = std::exp(logits[i] - m) / z;
    }
    return std::log(z) - (logits[y] - m);
}

void check_batch(const Mlp& net, const std::vector<LabeledSample>& batch, const char* who) {
    if (batch.empty()) throw ArgumentError(std::string(who) + ": empty batch");
    for (const LabeledSample& s : batch) {
        if (s.y >= net.output_dim()) throw LabelError(std::string(who) + ": label out of range");
        if (s.x.size() != net.input_dim())
            throw DimensionError(std::string(who) + ": sample dimension mismatch");
    }
}

std::size_t argmax_index(const Vec& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

} // namespace

IdLossResult id_loss(const Mlp& net, const std::vector<LabeledSample>& batch) {
    check_batch(net, batch, "id_loss");
    IdLossResult out;
    out.grads = zero_grads(net);
    const double scale = 1.0 / static_cast<double>(batch.size());
    Vec probs;
    for (const LabeledSample& s : batch) {
        MlpTape tape;
        const Vec logits = mlp_forward(net, s.x, &tape);
        out.loss += scale * ce_from_logits(logits, s.y, &probs);
        Vec grad_out = probs;
        grad_out[s.y] -= 1.0;
        accumulate(out.grads, mlp_backward(net, tape, grad_out), scale);
    }
    if (!std::isfinite(out.loss)) throw NumericError("id_loss: non-finite loss");
    return out;
}

double id_loss_value(const Mlp& net, const std::vector<LabeledSample>& batch) {
    check_batch(net, batch, "id_loss");
    double loss = 0.0;
    for (const LabeledSample& s : batch)
        loss += ce_from_logits(mlp_forward(net, s.x), s.y, nullptr);
    loss /= static_cast<double>(batch.size());
    if (!std::isfinite(loss)) throw NumericError("id_loss: non-finite loss");
    return loss;
}

Vec penultimate_features(const Mlp& net, const Vec& x) {
    if (x.size() != net.input_dim())
        throw DimensionError("penultimate_features: dimension mismatch");
    if (net.layers.size() == 1) return x;
    MlpTape tape;
    mlp_forward(net, x, &tape);
    return tape.outputs[net.layers.size() - 2];
}

TrainResult train_classifier(const std::vector<LabeledSample>& real_data,
                             const std::vector<LabeledSample>& synth_pool,
                             std::size_t num_classes, const TrainConfig& config,
                             const EvalData* eval) {
    if (real_data.empty()) throw ArgumentError("train_classifier: no real data");
    if (num_classes < 2) throw ArgumentError("train_classifier: need at least two classes");
    if (config.identities_per_batch == 0 || config.samples_per_identity == 0)
        throw ArgumentError("train_classifier: batch composition must be positive");
    if (!(config.synth_ratio >= 0.0 && config.synth_ratio <= 1.0))
        throw ArgumentError("train_classifier: synth_ratio must lie in [0, 1]");
    if (!(config.learning_rate > 0.0))
        throw ArgumentError("train_classifier: learning rate must be positive");
    if (config.use_selector &&
        !(config.selection.keep_fraction > 0.0 && config.selection.keep_fraction <= 1.0))
        throw ArgumentError("train_classifier: keep_fraction must lie in (0, 1]");

    const std::size_t obs_dim = real_data.front().x.size();
    std::map<std::size_t, std::vector<std::size_t>> real_by_id;
    for (std::size_t i = 0; i < real_data.size(); ++i) {
        const LabeledSample& s = real_data[i];
        if (s.origin != Origin::Real)
            throw ArgumentError("train_classifier: real pool contains synthetic samples");
        if (s.y >= num_classes) throw LabelError("train_classifier: real label out of range");
        if (s.x.size() != obs_dim)
            throw DimensionError("train_classifier: inconsistent sample dimensions");
        real_by_id[s.y].push_back(i);
    }

    const std::size_t n_per_id = config.samples_per_identity;
    const auto n_synth = std::min<std::size_t>(
        n_per_id, static_cast<std::size_t>(std::llround(config.synth_ratio *
                                                        static_cast<double>(n_per_id))));
    // With the selector on, candidates are oversampled so that after keeping
    // keep_fraction of the block the surviving synthetic share still matches
    // the configured ratio. keep_fraction == 1 degenerates to the plain draw.
    const std::size_t n_cand =
        config.use_selector && n_synth > 0
            ? static_cast<std::size_t>(std::ceil(static_cast<double>(n_synth) /
                                                 config.selection.keep_fraction))
            : n_synth;

    std::map<std::size_t, std::vector<std::size_t>> synth_by_id;
    if (n_synth > 0) {
        if (synth_pool.empty())
            throw ArgumentError("train_classifier: synth_ratio > 0 with an empty pool");
        for (std::size_t i = 0; i < synth_pool.size(); ++i) {
            const LabeledSample& s = synth_pool[i];
            if (s.origin != Origin::Synthetic)
                throw ArgumentError("train_classifier: synthetic pool contains real samples");
            if (s.y >= num_classes)
                throw LabelError("train_classifier: synthetic label out of range");
            if (s.x.size() != obs_dim)
                throw DimensionError("train_classifier: inconsistent sample dimensions");
            synth_by_id[s.y].push_back(i);
        }
    }

    std::vector<std::size_t> ids;
    for (const auto& [y, idx] : real_by_id) ids.push_back(y);
    const std::size_t pick = std::min(config.identities_per_batch, ids.size());

    Rng root(config.seed);
    Rng init_rng = root.child("init");
    std::vector<std::size_t> dims = {obs_dim};
    dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
    dims.push_back(num_classes);
    TrainResult out;
    out.model = make_mlp(dims, Activation::Tanh, Activation::Identity, init_rng);

    Rng batch_rng = root.child("batches");
    const std::size_t batch_budget = pick * n_per_id;
    const std::size_t steps_per_epoch =
        std::max<std::size_t>(1, (real_data.size() + batch_budget - 1) / batch_budget);
    const std::size_t total_steps = config.epochs * steps_per_epoch;

    std::vector<std::size_t> pool = ids;
    for (std::size_t step = 0; step < total_steps; ++step) {
        // P distinct identities via a partial shuffle.
        for (std::size_t i = 0; i < pick; ++i) {
            const std::size_t j = i + batch_rng.uniform_index(pool.size() - i);
            std::swap(pool[i], pool[j]);
        }

        std::vector<LabeledSample> real_part;
        std::vector<LabeledSample> cands;
        for (std::size_t i = 0; i < pick; ++i) {
            const std::size_t y = pool[i];
            const auto& ridx = real_by_id.at(y);
            for (std::size_t k = 0; k < n_per_id - n_synth; ++k)
                real_part.push_back(real_data[ridx[batch_rng.uniform_index(ridx.size())]]);
            if (n_synth > 0) {
                auto it = synth_by_id.find(y);
                if (it == synth_by_id.end() || it->second.empty())
                    throw ArgumentError("train_classifier: no synthetic samples for identity " +
                                        std::to_string(y));
                for (std::size_t k = 0; k < n_cand; ++k)
                    cands.push_back(synth_pool[it->second[batch_rng.uniform_index(it->second.size())]]);
            }
        }

        std::vector<LabeledSample> batch = real_part;
        if (config.use_selector && !cands.empty()) {
            // Selection runs per identity so every identity retains its share
            // of the synthetic budget; utilities are still measured against
            // the real part of the whole batch.
            SelectionReport merged;
            std::size_t groups = 0;
            for (std::size_t base = 0; base < cands.size(); base += n_cand) {
                const std::vector<LabeledSample> group(cands.begin() + base,
                                                       cands.begin() + base + n_cand);
                auto [kept, report] = select(out.model, group, real_part, config.selection);
                batch.insert(batch.end(), kept.begin(), kept.end());
                for (double d : report.deltas) merged.deltas.push_back(d);
                for (std::size_t idx : report.kept_indices)
                    merged.kept_indices.push_back(base + idx);
                merged.loss_before += report.loss_before;
                merged.loss_after += report.loss_after;
                ++groups;
            }
            merged.loss_before /= static_cast<double>(groups);
            merged.loss_after /= static_cast<double>(groups);
            out.selections.push_back({step, std::move(merged)});
        } else {
            batch.insert(batch.end(), cands.begin(), cands.end());
        }

        const IdLossResult r = id_loss(out.model, batch);
        out.curve.push_back({step, r.loss});
        out.model = sgd_step(out.model, r.grads, config.learning_rate);

        if (eval && config.eval_every > 0 && (step + 1) % config.eval_every == 0) {
            out.evals.push_back({step + 1, evaluate(out.model, eval->heldout_seen,
                                                    eval->novel_exemplars, eval->novel_queries)});
        }
    }

    if (eval && (out.evals.empty() || out.evals.back().step != total_steps)) {
        out.evals.push_back({total_steps, evaluate(out.model, eval->heldout_seen,
                                                   eval->novel_exemplars, eval->novel_queries)});
    }
    return out;
}

EvalReport evaluate(const Mlp& model, const std::vector<LabeledSample>& heldout_seen,
                    const std::vector<LabeledSample>& novel_exemplars,
                    const std::vector<LabeledSample>& novel_queries) {
    const std::size_t num_classes = model.output_dim();
    EvalReport report;
    std::map<std::size_t, std::pair<std::size_t, std::size_t>> tallies; // id -> (hits, total)

    std::size_t closed_hits = 0;
    for (const LabeledSample& s : heldout_seen) {
        if (s.y >= num_classes)
            throw LabelError("evaluate: held-out label outside the classifier head");
        const std::size_t pred = argmax_index(mlp_forward(model, s.x));
        auto& t = tallies[s.y];
        t.second += 1;
        if (pred == s.y) {
            t.first += 1;
            ++closed_hits;
        }
    }
    report.closed_set_accuracy =
        heldout_seen.empty() ? 0.0
                             : static_cast<double>(closed_hits) /
                                   static_cast<double>(heldout_seen.size());

    for (const LabeledSample& s : novel_exemplars)
        if (s.y < num_classes)
            throw ProtocolError("evaluate: novel exemplar label overlaps seen identities");
    for (const LabeledSample& s : novel_queries)
        if (s.y < num_classes)
            throw ProtocolError("evaluate: novel query label overlaps seen identities");

    if (!novel_queries.empty()) {
        if (novel_exemplars.empty())
            throw ArgumentError("evaluate: novel queries without exemplars");
        std::map<std::size_t, Vec> proto;
        std::map<std::size_t, std::size_t> proto_count;
        for (const LabeledSample& s : novel_exemplars) {
            const Vec f = penultimate_features(model, s.x);
            auto [it, fresh] = proto.try_emplace(s.y, Vec(f.size(), 0.0));
            (void)fresh;
            for (std::size_t i = 0; i < f.size(); ++i) it->second[i] += f[i];
            proto_count[s.y] += 1;
        }
        for (auto& [y, v] : proto)
            for (double& x : v) x /= static_cast<double>(proto_count.at(y));

        std::size_t novel_hits = 0;
        for (const LabeledSample& s : novel_queries) {
            if (!proto.count(s.y))
                throw ProtocolError("evaluate: query identity has no exemplars");
            const Vec f = penultimate_features(model, s.x);
            std::size_t pred = 0;
            double best = std::numeric_limits<double>::infinity();
            for (const auto& [y, p] : proto) {
                const double d = sq_dist(f, p);
                if (d < best) { // strict: ties keep the lower id
                    best = d;
                    pred = y;
                }
            }
            auto& t = tallies[s.y];
            t.second += 1;
            if (pred == s.y) {
                t.first += 1;
                ++novel_hits;
            }
        }
        report.novel_accuracy =
            static_cast<double>(novel_hits) / static_cast<double>(novel_queries.size());
    }

    for (const auto& [y, t] : tallies)
        report.per_identity_accuracy[y] =
            static_cast<double>(t.first) / static_cast<double>(t.second);
    return report;
}

std::vector<std::string> train_curve_csv_header() { return {"step", "loss"}; }

std::vector<std::string> train_curve_csv_row(const CurvePoint& p) {
    return {std::to_string(p.step), format_double(p.loss)};
}

std::vector<std::string> selection_csv_header() {
    return {"step", "candidate", "delta", "kept"};
}

std::vector<std::vector<std::string>> selection_csv_rows(const StepSelection& s) {
    std::set<std::size_t> kept(s.report.kept_indices.begin(), s.report.kept_indices.end());
    std::vector<std::vector<std::string>> rows;
    rows.reserve(s.report.deltas.size());
    for (std::size_t i = 0; i < s.report.deltas.size(); ++i) {
        rows.push_back({std::to_string(s.step), std::to_string(i),
                        format_double(s.report.deltas[i]), kept.count(i) ? "1" : "0"});
    }
    return rows;
}

} // namespace idforge
