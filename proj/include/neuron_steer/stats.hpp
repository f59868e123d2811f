#pragma once

#include "neuron_steer/dump.hpp"

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

namespace neuron_steer {

// Cohen's d assigned to a zero-variance neuron whose means differ.
inline constexpr double kCohensDMax = 1e6;

// Per-neuron summary of one layer's contrastive activations. All vectors have
// length n_neurons. Standard deviations use ddof = 1.
struct LayerStats {
    int layer_index = 0;
    std::size_t n_neurons = 0;
    std::vector<double> mean_high;
    std::vector<double> mean_low;
    std::vector<double> std_high;
    std::vector<double> std_low;
    std::vector<double> steering; // mean_high - mean_low
    std::vector<double> cohens_d;
    // Not carried by the stats CSV; 0 after read_stats_csv.
    std::size_t n_samples_high = 0;
    std::size_t n_samples_low = 0;
};

// Elementwise mean(high) - mean(low), accumulated in f64.
std::vector<double> build_steering_vector(const ActivationMatrix &high, const ActivationMatrix &low);

// Per-neuron (mean_high - mean_low) / sqrt((var_high + var_low) / 2).
// A zero pooled std yields 0 for equal means and +/-kCohensDMax otherwise.
std::vector<double> cohens_d(const ActivationMatrix &high, const ActivationMatrix &low);

LayerStats compute_layer_stats(const ActivationDump &dump, int layer_index);

// Stats for each requested layer (all dump layers when empty), computed in
// parallel and returned in the order requested.
std::vector<LayerStats> compute_all_stats(const ActivationDump &dump, std::span<const int> layers = {});

// layer,neuron,mean_high,mean_low,std_high,std_low,s,d
// Values are written in shortest round-trip form, so reading back is exact.
void write_stats_csv(std::ostream &out, std::span<const LayerStats> stats);
std::vector<LayerStats> read_stats_csv(std::istream &in);

} // namespace neuron_steer
