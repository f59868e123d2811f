#include "neuron_steer/select.hpp"

#include "neuron_steer/error.hpp"
#include "neuron_steer/parallel.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

namespace neuron_steer {

using ordered_json = nlohmann::ordered_json;

void SelectionParams::validate(bool require_layers) const {
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("q must lie in (0, 1)");
    if (!(tau_d > 0.0)) throw ValidationError("tau_d must be positive");
    if (!require_layers) return;
    if (target_layers.empty()) throw ValidationError("target_layers must not be empty");
    for (std::size_t i = 0; i < target_layers.size(); ++i) {
        if (target_layers[i] < 0) throw ValidationError("target layers must be non-negative");
        if (i > 0 && target_layers[i] <= target_layers[i - 1])
            throw ValidationError("target_layers must be strictly ascending");
    }
}

double SelectedNeuron::abs_s() const { return std::abs(s); }

std::vector<std::size_t> LayerSelection::union_indices() const {
    std::vector<std::size_t> out;
    out.reserve(size());
    for (const auto &n : high) out.push_back(n.index);
    for (const auto &n : low) out.push_back(n.index);
    std::sort(out.begin(), out.end());
    return out;
}

const LayerSelection *NeuronSelection::find_layer(int layer_index) const {
    for (const auto &l : layers)
        if (l.layer_index == layer_index) return &l;
    return nullptr;
}

double quantile_threshold(std::span<const double> magnitudes, double q) {
    if (magnitudes.empty()) throw ValidationError("quantile of an empty vector");
    if (!(q > 0.0 && q < 1.0)) throw ValidationError("q must lie in (0, 1)");
    std::vector<double> sorted(magnitudes.begin(), magnitudes.end());
    std::sort(sorted.begin(), sorted.end());
    const double p = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(p));
    if (lo + 1 >= sorted.size()) return sorted[lo];
    const double frac = p - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

LayerSelection select_layer(const LayerStats &stats, const SelectionParams &params) {
    params.validate(false);
    if (stats.n_neurons < 2) throw ValidationError("selection needs at least 2 neurons per layer");
    if (stats.steering.size() != stats.n_neurons || stats.cohens_d.size() != stats.n_neurons)
        throw ValidationError("layer stats vectors do not match n_neurons");

    std::vector<double> magnitudes(stats.n_neurons);
    for (std::size_t k = 0; k < stats.n_neurons; ++k) magnitudes[k] = std::abs(stats.steering[k]);

    LayerSelection sel;
    sel.layer_index = stats.layer_index;
    sel.magnitude_threshold = quantile_threshold(magnitudes, params.q);
    for (std::size_t k = 0; k < stats.n_neurons; ++k) {
        if (!(magnitudes[k] > sel.magnitude_threshold)) continue;
        const double d = stats.cohens_d[k];
        if (d > params.tau_d)
            sel.high.push_back({k, d, stats.steering[k]});
        else if (d < -params.tau_d)
            sel.low.push_back({k, d, stats.steering[k]});
    }
    return sel;
}

NeuronSelection select_all(std::span<const LayerStats> stats_by_layer, const SelectionParams &params,
                           std::string trait) {
    params.validate();
    std::vector<const LayerStats *> ordered;
    for (int layer : params.target_layers) {
        auto it = std::find_if(stats_by_layer.begin(), stats_by_layer.end(),
                               [&](const LayerStats &s) { return s.layer_index == layer; });
        if (it == stats_by_layer.end()) throw ValidationError("no stats for target layer " + std::to_string(layer));
        ordered.push_back(&*it);
    }

    NeuronSelection out;
    out.trait = std::move(trait);
    out.params = params;
    out.layers.resize(ordered.size());
    parallel_for(ordered.size(), [&](std::size_t i) { out.layers[i] = select_layer(*ordered[i], params); });
    for (const auto &l : out.layers) {
        out.total_high += l.high.size();
        out.total_low += l.low.size();
    }
    return out;
}

namespace {

ordered_json neurons_to_json(const std::vector<SelectedNeuron> &neurons) {
    ordered_json arr = ordered_json::array();
    for (const auto &n : neurons) arr.push_back(ordered_json{{"idx", n.index}, {"d", n.d}, {"s", n.s}});
    return arr;
}

std::vector<SelectedNeuron> neurons_from_json(const ordered_json &arr) {
    std::vector<SelectedNeuron> out;
    for (const auto &n : arr)
        out.push_back({n.at("idx").get<std::size_t>(), n.at("d").get<double>(), n.at("s").get<double>()});
    return out;
}

} // namespace

std::string selection_to_json(const NeuronSelection &selection) {
    ordered_json layers = ordered_json::array();
    for (const auto &l : selection.layers) {
        layers.push_back(ordered_json{{"layer", l.layer_index},
                                      {"threshold", l.magnitude_threshold},
                                      {"high", neurons_to_json(l.high)},
                                      {"low", neurons_to_json(l.low)}});
    }
    ordered_json j{{"trait", selection.trait},
                   {"params",
                    ordered_json{{"tau_d", selection.params.tau_d},
                                 {"q", selection.params.q},
                                 {"target_layers", selection.params.target_layers}}},
                   {"layers", std::move(layers)},
                   {"totals",
                    ordered_json{{"high", selection.total_high},
                                 {"low", selection.total_low},
                                 {"total", selection.total_high + selection.total_low}}}};
    return j.dump(2) + "\n";
}

NeuronSelection selection_from_json(std::string_view text) {
    NeuronSelection sel;
    try {
        const auto j = ordered_json::parse(text);
        sel.trait = j.at("trait").get<std::string>();
        const auto &p = j.at("params");
        sel.params.tau_d = p.at("tau_d").get<double>();
        sel.params.q = p.at("q").get<double>();
        sel.params.target_layers = p.at("target_layers").get<std::vector<int>>();
        for (const auto &l : j.at("layers")) {
            LayerSelection ls;
            ls.layer_index = l.at("layer").get<int>();
            ls.magnitude_threshold = l.value("threshold", 0.0);
            ls.high = neurons_from_json(l.at("high"));
            ls.low = neurons_from_json(l.at("low"));
            sel.total_high += ls.high.size();
            sel.total_low += ls.low.size();
            sel.layers.push_back(std::move(ls));
        }
    } catch (const nlohmann::json::exception &ex) {
        throw ValidationError(std::string("selection JSON: ") + ex.what());
    }
    sel.params.validate();
    for (const auto &l : sel.layers) {
        auto check = [&](const std::vector<SelectedNeuron> &set, bool high) {
            for (std::size_t i = 0; i < set.size(); ++i) {
                if (i > 0 && set[i].index <= set[i - 1].index)
                    throw ValidationError("selection JSON: indices must be sorted and unique");
                if (high ? !(set[i].d > sel.params.tau_d) : !(set[i].d < -sel.params.tau_d))
                    throw ValidationError("selection JSON: neuron " + std::to_string(set[i].index) +
                                          " violates the effect-size criterion");
            }
        };
        check(l.high, true);
        check(l.low, false);
        const auto u = l.union_indices();
        if (std::adjacent_find(u.begin(), u.end()) != u.end())
            throw ValidationError("selection JSON: high and low sets overlap in layer " +
                                  std::to_string(l.layer_index));
    }
    return sel;
}

} // namespace neuron_steer
