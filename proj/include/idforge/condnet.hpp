#pragma once

#include "idforge/mlp.hpp"

#include <cstdint>

namespace idforge {

// Class- and timestep-conditioned network: trunk input is
// concat(state, sinusoidal time features, class embedding row).
// Used as the denoiser parameter set; the embedding table is the part the
// cold-start stage resets and retrains.
struct CondNet {
    Mlp trunk;
    Mat class_embed; // rows = number of classes
    std::size_t state_dim = 0;
    std::size_t time_feat_dim = 0;
    std::size_t t_max = 0;

    std::size_t num_classes() const { return class_embed.rows; }
    std::size_t param_count() const { return trunk.param_count() + class_embed.data.size(); }
};

struct CondGrads {
    MlpGrads trunk;
    Mat class_embed;
};

struct CondTape {
    MlpTape trunk_tape;
    std::size_t t = 0;
    std::size_t class_id = 0;
};

// Transformer-style sinusoidal features of the raw timestep index.
Vec time_features(std::size_t t, std::size_t dim);

CondNet make_cond_net(std::size_t state_dim, std::size_t time_feat_dim, std::size_t embed_dim,
                      std::size_t num_classes, const std::vector<std::size_t>& hidden_dims,
                      std::size_t t_max, Rng& rng);

// Throws LabelError for class_id outside the table, ArgumentError for t
// outside [1, t_max].
Vec cond_forward(const CondNet& net, const Vec& state, std::size_t t, std::size_t class_id,
                 CondTape* tape = nullptr);

// Gradient of a scalar loss through the trunk and into the used embedding
// row. grad_state receives d loss / d state when non-null.
CondGrads cond_backward(const CondNet& net, const CondTape& tape, const Vec& grad_output,
                        Vec* grad_state = nullptr);

CondGrads zero_grads(const CondNet& net);
void accumulate(CondGrads& into, const CondGrads& g, double scale = 1.0);
double grad_norm(const CondNet& net, const CondGrads& g);

// params - lr * grads, embedding table included. freeze_trunk limits the
// update to the class-embedding table.
CondNet sgd_step(const CondNet& net, const CondGrads& grads, double lr,
                 bool freeze_trunk = false);

class CondSgdMomentum {
  public:
    CondSgdMomentum(double lr, double momentum, bool freeze_trunk = false)
        : lr_(lr), momentum_(momentum), freeze_trunk_(freeze_trunk) {}
    CondNet step(const CondNet& net, const CondGrads& grads);

  private:
    double lr_;
    double momentum_;
    bool freeze_trunk_;
    CondGrads velocity_;
    bool has_velocity_ = false;
};

// Replaces the class-embedding table with a zero-initialized one sized for a
// new label space.
CondNet reset_class_embedding(const CondNet& net, std::size_t num_classes);

Vec flatten_params(const CondNet& net);
void unflatten_params(CondNet& net, const Vec& flat);
Vec flatten_grads(const CondNet& net, const CondGrads& g);

} // namespace idforge
