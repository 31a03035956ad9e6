#include "idforge/condnet.hpp"

#include <cmath>

namespace idforge {

Vec time_features(std::size_t t, std::size_t dim) {
    if (dim == 0 || dim % 2 != 0) throw ArgumentError("time_features: dim must be even, > 0");
    const std::size_t half = dim / 2;
    Vec out(dim);
    for (std::size_t i = 0; i < half; ++i) {
        const double denom = half > 1 ? static_cast<double>(half - 1) : 1.0;
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / denom);
        out[2 * i] = std::sin(static_cast<double>(t) * freq);
        out[2 * i + 1] = std::cos(static_cast<double>(t) * freq);
    }
    return out;
}

CondNet make_cond_net(std::size_t state_dim, std::size_t time_feat_dim, std::size_t embed_dim,
                      std::size_t num_classes, const std::vector<std::size_t>& hidden_dims,
                      std::size_t t_max, Rng& rng) {
    CondNet net;
    net.state_dim = state_dim;
    net.time_feat_dim = time_feat_dim;
    net.t_max = t_max;

    std::vector<std::size_t> dims;
    dims.push_back(state_dim + time_feat_dim + embed_dim);
    dims.insert(dims.end(), hidden_dims.begin(), hidden_dims.end());
    dims.push_back(state_dim);
    Rng trunk_rng = rng.child("trunk");
    net.trunk = make_mlp(dims, Activation::Tanh, Activation::Identity, trunk_rng);

    net.class_embed = Mat(num_classes, embed_dim);
    Rng embed_rng = rng.child("class_embed");
    const double scale = 1.0 / std::sqrt(static_cast<double>(embed_dim));
    for (auto& v : net.class_embed.data) v = scale * embed_rng.normal();
    return net;
}

Vec cond_forward(const CondNet& net, const Vec& state, std::size_t t, std::size_t class_id,
                 CondTape* tape) {
    check_dim(state.size(), net.state_dim, "cond_forward state");
    if (t < 1 || t > net.t_max) throw ArgumentError("cond_forward: t outside [1, T]");
    if (class_id >= net.class_embed.rows) throw LabelError("cond_forward: unknown class_id");

    Vec input;
    input.reserve(net.trunk.input_dim());
    input.insert(input.end(), state.begin(), state.end());
    const Vec tf = time_features(t, net.time_feat_dim);
    input.insert(input.end(), tf.begin(), tf.end());
    const double* row = net.class_embed.row(class_id);
    input.insert(input.end(), row, row + net.class_embed.cols);

    if (tape) {
        tape->t = t;
        tape->class_id = class_id;
        return mlp_forward(net.trunk, input, &tape->trunk_tape);
    }
    return mlp_forward(net.trunk, input);
}

CondGrads cond_backward(const CondNet& net, const CondTape& tape, const Vec& grad_output,
                        Vec* grad_state) {
    CondGrads g;
    Vec grad_input;
    g.trunk = mlp_backward(net.trunk, tape.trunk_tape, grad_output, &grad_input);
    g.class_embed = Mat(net.class_embed.rows, net.class_embed.cols);

    // Input layout: [state | time features | class embedding row].
    const std::size_t embed_off = net.state_dim + net.time_feat_dim;
    double* embed_row = g.class_embed.row(tape.class_id);
    for (std::size_t i = 0; i < net.class_embed.cols; ++i) {
        embed_row[i] = grad_input[embed_off + i];
    }
    if (grad_state) grad_state->assign(grad_input.begin(), grad_input.begin() + net.state_dim);
    return g;
}

CondGrads zero_grads(const CondNet& net) {
    CondGrads g;
    g.trunk = zero_grads(net.trunk);
    g.class_embed = Mat(net.class_embed.rows, net.class_embed.cols);
    return g;
}

void accumulate(CondGrads& into, const CondGrads& g, double scale) {
    accumulate(into.trunk, g.trunk, scale);
    if (!into.class_embed.same_shape(g.class_embed)) {
        throw DimensionError("accumulate: class_embed shape mismatch");
    }
    kern::axpy(scale, g.class_embed.data.data(), into.class_embed.data.data(),
               g.class_embed.data.size());
}

double grad_norm(const CondNet&, const CondGrads& g) {
    double acc = grad_sumsq(g.trunk);
    acc += kern::sumsq(g.class_embed.data.data(), g.class_embed.data.size());
    return std::sqrt(acc);
}

CondNet sgd_step(const CondNet& net, const CondGrads& grads, double lr, bool freeze_trunk) {
    CondNet out = net;
    if (freeze_trunk) {
        out.trunk.generation = net.trunk.generation + 1;
    } else {
        out.trunk = sgd_step(net.trunk, grads.trunk, lr);
    }
    check_finite(grads.class_embed, "sgd_step class_embed grads");
    if (!out.class_embed.same_shape(grads.class_embed)) {
        throw DimensionError("sgd_step: class_embed shape mismatch");
    }
    kern::axpy(-lr, grads.class_embed.data.data(), out.class_embed.data.data(),
               grads.class_embed.data.size());
    return out;
}

CondNet CondSgdMomentum::step(const CondNet& net, const CondGrads& grads) {
    if (momentum_ == 0.0) return sgd_step(net, grads, lr_, freeze_trunk_);
    if (!has_velocity_) {
        velocity_ = zero_grads(net);
        has_velocity_ = true;
    }
    for (std::size_t i = 0; i < velocity_.trunk.w.size(); ++i) {
        kern::scal(momentum_, velocity_.trunk.w[i].data.data(), velocity_.trunk.w[i].data.size());
        kern::scal(momentum_, velocity_.trunk.b[i].data(), velocity_.trunk.b[i].size());
    }
    kern::scal(momentum_, velocity_.class_embed.data.data(), velocity_.class_embed.data.size());
    accumulate(velocity_, grads);
    return sgd_step(net, velocity_, lr_, freeze_trunk_);
}

CondNet reset_class_embedding(const CondNet& net, std::size_t num_classes) {
    CondNet out = net;
    out.class_embed = Mat(num_classes, net.class_embed.cols);
    out.trunk.generation = net.trunk.generation + 1;
    return out;
}

Vec flatten_params(const CondNet& net) {
    Vec flat = flatten_params(net.trunk);
    flat.insert(flat.end(), net.class_embed.data.begin(), net.class_embed.data.end());
    return flat;
}

void unflatten_params(CondNet& net, const Vec& flat) {
    check_dim(flat.size(), net.param_count(), "unflatten_params(cond)");
    const std::size_t trunk_n = net.trunk.param_count();
    Vec trunk_flat(flat.begin(), flat.begin() + trunk_n);
    unflatten_params(net.trunk, trunk_flat);
    std::copy(flat.begin() + trunk_n, flat.end(), net.class_embed.data.begin());
}

Vec flatten_grads(const CondNet& net, const CondGrads& g) {
    Vec flat = flatten_grads(net.trunk, g.trunk);
    flat.insert(flat.end(), g.class_embed.data.begin(), g.class_embed.data.end());
    return flat;
}

} // namespace idforge
