#include "idforge/mlp.hpp"

#include <atomic>
#include <cmath>

namespace idforge {

namespace {

std::uint64_t next_uid() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1);
}

void apply_activation(Vec& v, Activation act) {
    if (act == Activation::Tanh) {
        for (auto& x : v) x = std::tanh(x);
    }
}

} // namespace

std::size_t Mlp::input_dim() const { return layers.empty() ? 0 : layers.front().w.cols; }

std::size_t Mlp::output_dim() const { return layers.empty() ? 0 : layers.back().w.rows; }

std::size_t Mlp::param_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.w.data.size() + l.b.size();
    return n;
}

void check_topology(const Mlp& net) {
    if (net.layers.empty()) throw DimensionError("mlp: no layers");
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = net.layers[i];
        if (l.b.size() != l.w.rows) throw DimensionError("mlp: bias/weight row mismatch");
        if (i > 0 && l.w.cols != net.layers[i - 1].w.rows) {
            throw DimensionError("mlp: layer shapes do not chain");
        }
    }
}

Mlp make_mlp(const std::vector<std::size_t>& dims, Activation hidden_act, Activation output_act,
             Rng& rng, double weight_scale) {
    if (dims.size() < 2) throw ArgumentError("make_mlp: need at least input and output dims");
    Mlp net;
    net.uid = next_uid();
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        Layer l;
        l.w = Mat(dims[i + 1], dims[i]);
        l.b = Vec(dims[i + 1], 0.0);
        const double scale =
            weight_scale > 0.0 ? weight_scale : 1.0 / std::sqrt(static_cast<double>(dims[i]));
        for (auto& v : l.w.data) v = scale * rng.normal();
        l.act = (i + 2 < dims.size()) ? hidden_act : output_act;
        net.layers.push_back(std::move(l));
    }
    check_topology(net);
    return net;
}

Vec mlp_forward(const Mlp& net, const Vec& x, MlpTape* tape) {
    check_topology(net);
    check_dim(x.size(), net.input_dim(), "mlp_forward input");
    check_finite(x, "mlp_forward input");

    if (tape) {
        tape->input = x;
        tape->outputs.clear();
        tape->outputs.reserve(net.layers.size());
        tape->net_uid = net.uid;
        tape->net_generation = net.generation;
    }

    Vec cur = x;
    for (const auto& l : net.layers) {
        Vec z = matvec(l.w, cur);
        kern::axpy(1.0, l.b.data(), z.data(), z.size());
        apply_activation(z, l.act);
        if (tape) tape->outputs.push_back(z);
        cur = std::move(z);
    }
    check_finite(cur, "mlp_forward output");
    return cur;
}

MlpGrads mlp_backward(const Mlp& net, const MlpTape& tape, const Vec& grad_output,
                      Vec* grad_input) {
    if (tape.net_uid != net.uid || tape.net_generation != net.generation) {
        throw StateError("mlp_backward: tape is stale for this network");
    }
    if (tape.outputs.size() != net.layers.size()) {
        throw StateError("mlp_backward: tape layer count mismatch");
    }
    check_dim(grad_output.size(), net.output_dim(), "mlp_backward grad_output");
    check_finite(grad_output, "mlp_backward grad_output");

    MlpGrads grads = zero_grads(net);
    Vec delta = grad_output;
    for (std::size_t li = net.layers.size(); li-- > 0;) {
        const Layer& l = net.layers[li];
        const Vec& out = tape.outputs[li];
        if (l.act == Activation::Tanh) {
            // d tanh(z)/dz = 1 - tanh(z)^2, and out already holds tanh(z).
            for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= 1.0 - out[i] * out[i];
        }
        const Vec& in = (li == 0) ? tape.input : tape.outputs[li - 1];
        kern::ger(1.0, delta.data(), l.w.rows, in.data(), l.w.cols, grads.w[li].data.data());
        kern::axpy(1.0, delta.data(), grads.b[li].data(), delta.size());

        Vec prev(l.w.cols);
        kern::matvec_t(l.w.data.data(), l.w.rows, l.w.cols, delta.data(), prev.data());
        delta = std::move(prev);
    }
    if (grad_input) {
        check_finite(delta, "mlp_backward input grad");
        *grad_input = std::move(delta);
    }
    for (const auto& gw : grads.w) check_finite(gw, "mlp_backward weight grad");
    return grads;
}

MlpGrads zero_grads(const Mlp& net) {
    MlpGrads g;
    for (const auto& l : net.layers) {
        g.w.emplace_back(l.w.rows, l.w.cols);
        g.b.emplace_back(l.b.size(), 0.0);
    }
    return g;
}

void accumulate(MlpGrads& into, const MlpGrads& g, double scale) {
    if (into.w.size() != g.w.size()) throw DimensionError("accumulate: layer count mismatch");
    for (std::size_t i = 0; i < g.w.size(); ++i) {
        if (!into.w[i].same_shape(g.w[i])) throw DimensionError("accumulate: shape mismatch");
        kern::axpy(scale, g.w[i].data.data(), into.w[i].data.data(), g.w[i].data.size());
        kern::axpy(scale, g.b[i].data(), into.b[i].data(), g.b[i].size());
    }
}

double grad_sumsq(const MlpGrads& g) {
    double acc = 0.0;
    for (const auto& m : g.w) acc += kern::sumsq(m.data.data(), m.data.size());
    for (const auto& b : g.b) acc += kern::sumsq(b.data(), b.size());
    return acc;
}

Mlp sgd_step(const Mlp& net, const MlpGrads& grads, double lr) {
    if (!(lr >= 0.0)) throw ArgumentError("sgd_step: lr must be >= 0");
    if (grads.w.size() != net.layers.size()) throw DimensionError("sgd_step: grads mismatch");
    for (const auto& m : grads.w) check_finite(m, "sgd_step grads");
    for (const auto& b : grads.b) check_finite(b, "sgd_step grads");

    Mlp out = net;
    out.generation = net.generation + 1;
    for (std::size_t i = 0; i < out.layers.size(); ++i) {
        if (!out.layers[i].w.same_shape(grads.w[i])) {
            throw DimensionError("sgd_step: weight shape mismatch");
        }
        kern::axpy(-lr, grads.w[i].data.data(), out.layers[i].w.data.data(),
                   grads.w[i].data.size());
        kern::axpy(-lr, grads.b[i].data(), out.layers[i].b.data(), grads.b[i].size());
    }
    return out;
}

Mlp SgdMomentum::step(const Mlp& net, const MlpGrads& grads) {
    if (momentum_ == 0.0) return sgd_step(net, grads, lr_);
    if (!has_velocity_) {
        velocity_ = zero_grads(net);
        has_velocity_ = true;
    }
    for (std::size_t i = 0; i < velocity_.w.size(); ++i) {
        kern::scal(momentum_, velocity_.w[i].data.data(), velocity_.w[i].data.size());
        kern::scal(momentum_, velocity_.b[i].data(), velocity_.b[i].size());
    }
    accumulate(velocity_, grads);
    return sgd_step(net, velocity_, lr_);
}

Vec flatten_params(const Mlp& net) {
    Vec flat;
    flat.reserve(net.param_count());
    for (const auto& l : net.layers) {
        flat.insert(flat.end(), l.w.data.begin(), l.w.data.end());
        flat.insert(flat.end(), l.b.begin(), l.b.end());
    }
    return flat;
}

void unflatten_params(Mlp& net, const Vec& flat) {
    check_dim(flat.size(), net.param_count(), "unflatten_params");
    std::size_t pos = 0;
    for (auto& l : net.layers) {
        std::copy(flat.begin() + pos, flat.begin() + pos + l.w.data.size(), l.w.data.begin());
        pos += l.w.data.size();
        std::copy(flat.begin() + pos, flat.begin() + pos + l.b.size(), l.b.begin());
        pos += l.b.size();
    }
    net.generation += 1;
}

Vec flatten_grads(const Mlp& net, const MlpGrads& g) {
    Vec flat;
    flat.reserve(net.param_count());
    for (std::size_t i = 0; i < g.w.size(); ++i) {
        flat.insert(flat.end(), g.w[i].data.begin(), g.w[i].data.end());
        flat.insert(flat.end(), g.b[i].begin(), g.b[i].end());
    }
    return flat;
}

Vec gaussian_sample(Rng& rng, const Vec& mean, double std_dev) {
    if (!(std_dev >= 0.0)) throw ArgumentError("gaussian_sample: std must be >= 0");
    Vec out(mean.size());
    for (std::size_t i = 0; i < mean.size(); ++i) {
        const double z = rng.normal();
        out[i] = std_dev == 0.0 ? mean[i] : mean[i] + std_dev * z;
    }
    return out;
}

} // namespace idforge
