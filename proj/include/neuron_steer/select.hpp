#pragma once

#include "neuron_steer/stats.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace neuron_steer {

struct SelectionParams {
    double tau_d = 0.8;  // effect-size threshold on |d|
    double q = 0.995;    // quantile level of |s| within a layer
    std::vector<int> target_layers;

    // Throws ValidationError unless 0 < q < 1, tau_d > 0 and target_layers is
    // non-empty and strictly ascending. select_layer only needs the first two.
    void validate(bool require_layers = true) const;
};

struct SelectedNeuron {
    std::size_t index = 0;
    double d = 0.0;
    double s = 0.0;

    double abs_s() const;
};

struct LayerSelection {
    int layer_index = 0;
    double magnitude_threshold = 0.0;
    std::vector<SelectedNeuron> high; // ascending index
    std::vector<SelectedNeuron> low;  // ascending index

    std::size_t size() const { return high.size() + low.size(); }
    // Ascending indices of high ∪ low.
    std::vector<std::size_t> union_indices() const;
};

struct NeuronSelection {
    std::string trait;
    SelectionParams params;
    std::vector<LayerSelection> layers; // ascending layer_index
    std::size_t total_high = 0;
    std::size_t total_low = 0;

    const LayerSelection *find_layer(int layer_index) const;
};

// Linear-interpolation quantile of the values at level q:
// sorted v, p = q (K - 1), v[floor p] + frac(p) (v[floor p + 1] - v[floor p]).
double quantile_threshold(std::span<const double> magnitudes, double q);

// Neurons with |s| strictly above the layer's |s| quantile and d > tau_d
// (high) or d < -tau_d (low).
LayerSelection select_layer(const LayerStats &stats, const SelectionParams &params);

// select_layer over every target layer; stats must cover all of them.
NeuronSelection select_all(std::span<const LayerStats> stats_by_layer, const SelectionParams &params,
                           std::string trait);

std::string selection_to_json(const NeuronSelection &selection);
NeuronSelection selection_from_json(std::string_view text);

} // namespace neuron_steer
