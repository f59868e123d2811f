#pragma once

#include "neuron_steer/select.hpp"
#include "neuron_steer/stats.hpp"

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace neuron_steer {

enum class SteerDirection { Enhance, Suppress };
enum class InterventionMode { Uniform, Weighted };

const char *to_string(SteerDirection direction);
const char *to_string(InterventionMode mode);
SteerDirection parse_steer_direction(std::string_view text);
InterventionMode parse_intervention_mode(std::string_view text);

inline constexpr double kMinWeight = 0.75;
inline constexpr double kMaxWeight = 1.0;

struct NeuronEdit {
    std::size_t index = 0;
    double delta = 0.0;
};

struct LayerEdits {
    int layer_index = 0;
    std::vector<NeuronEdit> edits; // ascending, unique indices
};

// Sparse edit plan with precomputed deltas: sign * gamma * s[idx] (* w[idx]).
struct InterventionConfig {
    std::string trait;
    SteerDirection direction = SteerDirection::Enhance;
    InterventionMode mode = InterventionMode::Uniform;
    double gamma = 0.0;
    std::vector<LayerEdits> layers; // ascending layer_index

    const LayerEdits *find_layer(int layer_index) const;
    void validate() const;
};

// Per layer, neuron index -> weight in [0.75, 1.0].
struct WeightAssignment {
    std::map<int, std::map<std::size_t, double>> layers;
};

// Linear in |d| rank over high ∪ low: rank r of m gets 1 - 0.25 r / (m - 1),
// a lone neuron gets 1. Ties go to the lower neuron index.
WeightAssignment assign_weights(const NeuronSelection &selection);

std::map<int, std::vector<double>> steering_by_layer(std::span<const LayerStats> stats);

InterventionConfig build_config(const NeuronSelection &selection,
                                const std::map<int, std::vector<double>> &steering, double gamma,
                                InterventionMode mode, SteerDirection direction);

// out[k] = hidden[k] + delta[k] on edited positions; the input is untouched.
std::vector<double> apply_edits(std::span<const double> hidden, const LayerEdits &edits);
void apply_edits_in_place(std::span<double> hidden, const LayerEdits &edits);

std::string config_to_json(const InterventionConfig &config);
InterventionConfig config_from_json(std::string_view text);

} // namespace neuron_steer
