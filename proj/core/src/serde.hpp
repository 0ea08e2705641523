#pragma once

// Internal JSON (de)serialization helpers. Not installed; public headers stay
// free of the JSON dependency.

#include <json.hpp>

#include "synthvit/errors.hpp"
#include "synthvit/vit.hpp"

namespace synthvit::serde {

using json = nlohmann::ordered_json;

inline nlohmann::json vit_config_to_json(const ViTConfig& cfg) {
    return {
        {"kind", "vit"},
        {"image_size", cfg.image_size},
        {"patch_size", cfg.patch_size},
        {"channels", cfg.channels},
        {"hidden_dim", cfg.hidden_dim},
        {"num_layers", cfg.num_layers},
        {"num_heads", cfg.num_heads},
        {"mlp_dim", cfg.mlp_dim},
        {"head_hidden", cfg.head_hidden},
        {"num_classes", cfg.num_classes},
        {"attention_dropout", cfg.attention_dropout},
        {"layer_norm_eps", cfg.layer_norm_eps},
    };
}

inline ViTConfig vit_config_from_json(const nlohmann::json& j) {
    ViTConfig cfg;
    try {
        cfg.image_size = j.at("image_size").get<std::size_t>();
        cfg.patch_size = j.at("patch_size").get<std::size_t>();
        cfg.channels = j.at("channels").get<std::size_t>();
        cfg.hidden_dim = j.at("hidden_dim").get<std::size_t>();
        cfg.num_layers = j.at("num_layers").get<std::size_t>();
        cfg.num_heads = j.at("num_heads").get<std::size_t>();
        cfg.mlp_dim = j.at("mlp_dim").get<std::size_t>();
        cfg.head_hidden = j.at("head_hidden").get<std::size_t>();
        cfg.num_classes = j.at("num_classes").get<std::size_t>();
        cfg.attention_dropout = j.at("attention_dropout").get<double>();
        cfg.layer_norm_eps = j.at("layer_norm_eps").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("vit config: ") + e.what());
    }
    cfg.validate();
    return cfg;
}

}  // namespace synthvit::serde
