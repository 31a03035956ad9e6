#include "idforge/serialize.hpp"

#include "idforge/errors.hpp"

namespace idforge {

nlohmann::json mlp_to_json_obj(const Mlp& net) {
    nlohmann::json j;
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& layer : net.layers) {
        layers.push_back({{"rows", layer.w.rows},
                          {"cols", layer.w.cols},
                          {"w", layer.w.data},
                          {"b", layer.b},
                          {"act", layer.act == Activation::Tanh ? "tanh" : "identity"}});
    }
    j["layers"] = std::move(layers);
    return j;
}

Mlp mlp_from_json_obj(const nlohmann::json& j, Rng& uid_source) {
    std::vector<std::size_t> dims;
    const auto& layers = j.at("layers");
    dims.push_back(layers.at(0).at("cols").get<std::size_t>());
    for (const auto& l : layers) dims.push_back(l.at("rows").get<std::size_t>());
    Activation out_act = layers.back().at("act").get<std::string>() == "tanh"
                             ? Activation::Tanh
                             : Activation::Identity;
    Mlp net = make_mlp(dims, Activation::Tanh, out_act, uid_source);
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const auto& l = layers.at(i);
        net.layers[i].w.data = l.at("w").get<Vec>();
        net.layers[i].b = l.at("b").get<Vec>();
        net.layers[i].act =
            l.at("act").get<std::string>() == "tanh" ? Activation::Tanh : Activation::Identity;
        if (net.layers[i].w.data.size() != net.layers[i].w.rows * net.layers[i].w.cols ||
            net.layers[i].b.size() != net.layers[i].w.rows) {
            throw ProtocolError("checkpoint layer shape mismatch");
        }
    }
    net.generation += 1;
    return net;
}

} // namespace idforge
