#include "neuron_steer/intervene.hpp"

#include "neuron_steer/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace neuron_steer {

using ordered_json = nlohmann::ordered_json;

const char *to_string(SteerDirection direction) {
    return direction == SteerDirection::Enhance ? "enhance" : "suppress";
}

const char *to_string(InterventionMode mode) { return mode == InterventionMode::Uniform ? "uniform" : "weighted"; }

SteerDirection parse_steer_direction(std::string_view text) {
    if (text == "enhance") return SteerDirection::Enhance;
    if (text == "suppress") return SteerDirection::Suppress;
    throw ValidationError("direction must be enhance or suppress, got '" + std::string(text) + "'");
}

InterventionMode parse_intervention_mode(std::string_view text) {
    if (text == "uniform") return InterventionMode::Uniform;
    if (text == "weighted") return InterventionMode::Weighted;
    throw ValidationError("mode must be uniform or weighted, got '" + std::string(text) + "'");
}

const LayerEdits *InterventionConfig::find_layer(int layer_index) const {
    for (const auto &l : layers)
        if (l.layer_index == layer_index) return &l;
    return nullptr;
}

void InterventionConfig::validate() const {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be a finite value >= 0");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].layer_index < 0) throw ValidationError("negative layer index in config");
        if (i > 0 && layers[i].layer_index <= layers[i - 1].layer_index)
            throw ValidationError("config layers must be strictly ascending");
        const auto &edits = layers[i].edits;
        for (std::size_t j = 0; j < edits.size(); ++j) {
            if (j > 0 && edits[j].index <= edits[j - 1].index)
                throw ValidationError("config edits must have sorted, unique indices (layer " +
                                      std::to_string(layers[i].layer_index) + ")");
            if (!std::isfinite(edits[j].delta)) throw ValidationError("non-finite delta in config");
        }
    }
}

WeightAssignment assign_weights(const NeuronSelection &selection) {
    if (selection.total_high + selection.total_low == 0) {
        bool any = false;
        for (const auto &l : selection.layers) any = any || l.size() > 0;
        if (!any) throw ValidationError("cannot assign weights: selection is empty in every layer");
    }
    WeightAssignment out;
    for (const auto &layer : selection.layers) {
        std::vector<SelectedNeuron> ranked;
        ranked.insert(ranked.end(), layer.high.begin(), layer.high.end());
        ranked.insert(ranked.end(), layer.low.begin(), layer.low.end());
        std::sort(ranked.begin(), ranked.end(), [](const SelectedNeuron &a, const SelectedNeuron &b) {
            const double da = std::abs(a.d), db = std::abs(b.d);
            if (da != db) return da > db;
            return a.index < b.index;
        });
        auto &weights = out.layers[layer.layer_index];
        const std::size_t m = ranked.size();
        for (std::size_t r = 0; r < m; ++r) {
            const double w = m == 1 ? kMaxWeight
                                    : kMaxWeight - (kMaxWeight - kMinWeight) * static_cast<double>(r) /
                                                       static_cast<double>(m - 1);
            weights[ranked[r].index] = w;
        }
    }
    return out;
}

std::map<int, std::vector<double>> steering_by_layer(std::span<const LayerStats> stats) {
    std::map<int, std::vector<double>> out;
    for (const auto &st : stats) out[st.layer_index] = st.steering;
    return out;
}

InterventionConfig build_config(const NeuronSelection &selection,
                                const std::map<int, std::vector<double>> &steering, double gamma,
                                InterventionMode mode, SteerDirection direction) {
    if (!(gamma >= 0.0) || !std::isfinite(gamma)) throw ValidationError("gamma must be a finite value >= 0");
    WeightAssignment weights;
    if (mode == InterventionMode::Weighted) weights = assign_weights(selection);
    const double sign = direction == SteerDirection::Enhance ? 1.0 : -1.0;

    InterventionConfig config;
    config.trait = selection.trait;
    config.direction = direction;
    config.mode = mode;
    config.gamma = gamma;
    for (const auto &layer : selection.layers) {
        auto it = steering.find(layer.layer_index);
        if (it == steering.end())
            throw ValidationError("no steering vector for selected layer " + std::to_string(layer.layer_index));
        const auto &s = it->second;
        LayerEdits edits;
        edits.layer_index = layer.layer_index;
        for (std::size_t idx : layer.union_indices()) {
            if (idx >= s.size())
                throw ValidationError("selected neuron " + std::to_string(idx) + " outside steering vector of layer " +
                                      std::to_string(layer.layer_index));
            double delta = sign * gamma * s[idx];
            if (mode == InterventionMode::Weighted) delta *= weights.layers.at(layer.layer_index).at(idx);
            edits.edits.push_back({idx, delta});
        }
        config.layers.push_back(std::move(edits));
    }
    std::sort(config.layers.begin(), config.layers.end(),
              [](const LayerEdits &a, const LayerEdits &b) { return a.layer_index < b.layer_index; });
    return config;
}

void apply_edits_in_place(std::span<double> hidden, const LayerEdits &edits) {
    for (const auto &e : edits.edits) {
        if (e.index >= hidden.size())
            throw ValidationError("edit index " + std::to_string(e.index) + " out of range for width " +
                                  std::to_string(hidden.size()));
    }
    for (const auto &e : edits.edits) hidden[e.index] += e.delta;
}

std::vector<double> apply_edits(std::span<const double> hidden, const LayerEdits &edits) {
    std::vector<double> out(hidden.begin(), hidden.end());
    apply_edits_in_place(out, edits);
    return out;
}

std::string config_to_json(const InterventionConfig &config) {
    ordered_json layers = ordered_json::array();
    for (const auto &l : config.layers) {
        ordered_json edits = ordered_json::array();
        for (const auto &e : l.edits) edits.push_back(ordered_json{{"idx", e.index}, {"delta", e.delta}});
        layers.push_back(ordered_json{{"layer", l.layer_index}, {"edits", std::move(edits)}});
    }
    ordered_json j{{"trait", config.trait},
                   {"direction", to_string(config.direction)},
                   {"mode", to_string(config.mode)},
                   {"gamma", config.gamma},
                   {"layers", std::move(layers)}};
    return j.dump(2) + "\n";
}

InterventionConfig config_from_json(std::string_view text) {
    InterventionConfig config;
    try {
        const auto j = ordered_json::parse(text);
        config.trait = j.at("trait").get<std::string>();
        config.direction = parse_steer_direction(j.at("direction").get<std::string>());
        config.mode = parse_intervention_mode(j.at("mode").get<std::string>());
        config.gamma = j.at("gamma").get<double>();
        for (const auto &l : j.at("layers")) {
            LayerEdits edits;
            edits.layer_index = l.at("layer").get<int>();
            for (const auto &e : l.at("edits"))
                edits.edits.push_back({e.at("idx").get<std::size_t>(), e.at("delta").get<double>()});
            config.layers.push_back(std::move(edits));
        }
    } catch (const nlohmann::json::exception &ex) {
        throw ValidationError(std::string("config JSON: ") + ex.what());
    }
    config.validate();
    return config;
}

} // namespace neuron_steer
