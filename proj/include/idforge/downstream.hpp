#pragma once

#include "idforge/mlp.hpp"
#include "idforge/selector.hpp"
#include "idforge/world.hpp"

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace idforge {

struct IdLossResult {
    double loss = 0.0;
    MlpGrads grads;
};

// Mean softmax cross-entropy over identity labels, with exact gradients.
IdLossResult id_loss(const Mlp& net, const std::vector<LabeledSample>& batch);

// Loss only; cheaper path for scoring.
double id_loss_value(const Mlp& net, const std::vector<LabeledSample>& batch);

// Activations feeding the final linear layer (the raw input for a
// single-layer net). Used as the embedding for novel-identity matching.
Vec penultimate_features(const Mlp& net, const Vec& x);

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t identities_per_batch = 4; // P
    std::size_t samples_per_identity = 4; // N
    double synth_ratio = 0.5;             // synthetic share of each identity's N
    double learning_rate = 0.05;
    // When on, each identity's candidate draw is oversampled by
    // 1/keep_fraction and the most useful candidates are kept per identity,
    // so the surviving synthetic share still matches synth_ratio.
    bool use_selector = false;
    SelectionConfig selection;
    std::vector<std::size_t> hidden_dims = {32};
    std::size_t eval_every = 0; // snapshot cadence in steps; 0 = final only
    std::uint64_t seed = 0;
};

struct EvalReport {
    double closed_set_accuracy = 0.0;
    double novel_accuracy = 0.0;
    std::map<std::size_t, double> per_identity_accuracy;
};

struct EvalData {
    std::vector<LabeledSample> heldout_seen;
    std::vector<LabeledSample> novel_exemplars;
    std::vector<LabeledSample> novel_queries;
};

struct CurvePoint {
    std::size_t step = 0;
    double loss = 0.0;
};

struct EvalSnapshot {
    std::size_t step = 0;
    EvalReport report;
};

struct StepSelection {
    std::size_t step = 0;
    SelectionReport report;
};

struct TrainResult {
    Mlp model;
    std::vector<CurvePoint> curve;
    std::vector<EvalSnapshot> evals;
    std::vector<StepSelection> selections;
};

// Trains an identity classifier on mixed real/synthetic batches composed as
// P identities x N samples. Deterministic in config.seed. When eval data is
// supplied, snapshots are recorded every eval_every steps plus once at the
// end.
TrainResult train_classifier(const std::vector<LabeledSample>& real_data,
                             const std::vector<LabeledSample>& synth_pool,
                             std::size_t num_classes, const TrainConfig& config,
                             const EvalData* eval = nullptr);

// Closed-set accuracy via the classifier head on held-out seen identities,
// plus nearest-prototype accuracy on novel identities using penultimate
// features (prototypes averaged over the labeled exemplars). Pure.
EvalReport evaluate(const Mlp& model, const std::vector<LabeledSample>& heldout_seen,
                    const std::vector<LabeledSample>& novel_exemplars,
                    const std::vector<LabeledSample>& novel_queries);

std::vector<std::string> train_curve_csv_header();
std::vector<std::string> train_curve_csv_row(const CurvePoint& p);
std::vector<std::string> selection_csv_header();
std::vector<std::vector<std::string>> selection_csv_rows(const StepSelection& s);

} // namespace idforge
