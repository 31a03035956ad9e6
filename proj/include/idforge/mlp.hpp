#pragma once

#include "idforge/rng.hpp"
#include "idforge/tensor.hpp"

#include <cstdint>
#include <vector>

namespace idforge {

enum class Activation { Tanh, Identity };

struct Layer {
    Mat w;
    Vec b;
    Activation act = Activation::Identity;
};

// Fixed-topology feed-forward network with hand-rolled reverse mode.
// `uid` identifies a parameter lineage; `generation` increments on every
// update so a tape recorded against stale parameters is rejected.
struct Mlp {
    std::vector<Layer> layers;
    std::uint64_t uid = 0;
    std::uint64_t generation = 0;

    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::size_t param_count() const;
};

struct MlpGrads {
    std::vector<Mat> w;
    std::vector<Vec> b;
};

// Activation record from one forward pass: the input plus each layer's
// post-activation output. Enough for the exact backward pass.
struct MlpTape {
    Vec input;
    std::vector<Vec> outputs;
    std::uint64_t net_uid = 0;
    std::uint64_t net_generation = 0;
};

// Validates the layer chain; throws DimensionError when shapes do not chain.
void check_topology(const Mlp& net);

Mlp make_mlp(const std::vector<std::size_t>& dims, Activation hidden_act, Activation output_act,
             Rng& rng, double weight_scale = 0.0); // 0 => 1/sqrt(fan_in)

// Forward pass; writes an activation record when tape != nullptr.
// Rejects non-finite inputs and outputs.
Vec mlp_forward(const Mlp& net, const Vec& x, MlpTape* tape = nullptr);

// Exact gradients of a scalar loss L given dL/doutput. Gradients carry the
// same shapes as the parameters; input gradient is returned through
// grad_input when non-null. Throws StateError when the tape does not match
// the network's current parameters.
MlpGrads mlp_backward(const Mlp& net, const MlpTape& tape, const Vec& grad_output,
                      Vec* grad_input = nullptr);

MlpGrads zero_grads(const Mlp& net);
void accumulate(MlpGrads& into, const MlpGrads& g, double scale = 1.0);
double grad_sumsq(const MlpGrads& g);

// params' = params - lr * grads. Pure: the input network is untouched; the
// result keeps the uid and bumps the generation.
Mlp sgd_step(const Mlp& net, const MlpGrads& grads, double lr);

// Classic momentum: v <- mu*v + g; p <- p - lr*v. Velocity lives here.
class SgdMomentum {
  public:
    SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}
    Mlp step(const Mlp& net, const MlpGrads& grads);
    double lr() const { return lr_; }

  private:
    double lr_;
    double momentum_;
    MlpGrads velocity_;
    bool has_velocity_ = false;
};

// Flat parameter views for finite-difference oracles and norm reports.
Vec flatten_params(const Mlp& net);
void unflatten_params(Mlp& net, const Vec& flat);
Vec flatten_grads(const Mlp& net, const MlpGrads& g);

// mean + std * z, z ~ N(0, I). std = 0 returns mean exactly (still consumes
// the same number of draws, keeping streams aligned).
Vec gaussian_sample(Rng& rng, const Vec& mean, double std_dev);

} // namespace idforge
