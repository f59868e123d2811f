#pragma once

#include "neuron_steer/dump.hpp"
#include "neuron_steer/intervene.hpp"
#include "neuron_steer/select.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace neuron_steer {

struct ToyModelConfig {
    int n_layers = 4;
    int d_model = 32;
    int d_mlp = 128; // K, width of the down-projection input
    int vocab = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ForwardResult {
    std::vector<double> logits; // last position, length vocab
    // Per layer, the down-projection input at the last position, after edits.
    std::vector<std::vector<double>> captures;
    // Same point before edits were added. Equal to captures on unedited layers.
    std::vector<std::vector<double>> pre_edit;
};

// Miniature decoder: token embedding, then per layer a causal mean-pooling
// mixer and a gated MLP (silu(W_gate x) * (W_up x) -> W_down), pre-RMSNorm
// residual blocks, and an unembedding on the final position. Weights are a
// pure function of the seed and immutable after construction.
class ToyModel {
public:
    explicit ToyModel(ToyModelConfig config);

    const ToyModelConfig &config() const { return config_; }

    ForwardResult forward(std::span<const int> tokens) const;
    // Edits are added at every position of each configured layer, right
    // before the down-projection reads the gated hidden state.
    ForwardResult forward_intervened(std::span<const int> tokens, const InterventionConfig &config) const;
    std::vector<std::vector<double>> forward_capture(std::span<const int> tokens) const;

private:
    struct Weights;
    ToyModelConfig config_;
    std::shared_ptr<const Weights> weights_;
};

struct PromptPair {
    std::vector<int> high;
    std::vector<int> low;
};

// Contrastive token prompts for the toy model: a shared random "question"
// preceded by a trait marker drawn from disjoint high/low token pools.
std::vector<PromptPair> make_toy_prompts(const ToyModelConfig &config, std::size_t n_pairs, std::uint64_t seed);

// Runs every prompt through the model and stores the last-position
// down-projection inputs of the requested layers (all when empty).
ActivationDump capture_dump(const ToyModel &model, std::span<const PromptPair> prompts, std::string trait,
                            std::span<const int> layers = {});

using NeuronSite = std::pair<int, std::size_t>; // (layer, neuron)

struct PlantSpec {
    std::set<NeuronSite> planted_high;
    std::set<NeuronSite> planted_low;
    double shift = 4.0;
    double noise_std = 1.0;
    std::size_t n_pairs = 1000;
    std::size_t n_neurons = 512;
    std::vector<int> layers;
    std::uint64_t seed = 0;
    std::string trait = "openness";
    std::string model_id = "synthetic";

    void validate() const;
};

// Gaussian dump with known trait neurons: high samples ~ N(0, noise) plus
// +shift on planted_high and -shift on planted_low; low samples mirrored.
ActivationDump plant(const PlantSpec &spec);

// Spec with n_high + n_low distinct planted neurons per layer chosen from the seed.
PlantSpec random_plant_spec(std::size_t n_neurons, std::vector<int> layers, std::size_t n_high,
                            std::size_t n_low, double shift, double noise_std, std::size_t n_pairs,
                            std::uint64_t seed);

// How well a selection recovers the planted neurons of a spec.
struct RecoveryReport {
    std::size_t planted_high = 0;
    std::size_t recovered_high = 0; // planted high found in the high set
    std::size_t planted_low = 0;
    std::size_t recovered_low = 0;  // planted low found in the low set
    std::size_t unplanted_total = 0;
    std::size_t max_unplanted_per_layer = 0;

    double high_rate() const;
    double low_rate() const;
    double overall_rate() const;
};

RecoveryReport evaluate_recovery(const PlantSpec &spec, const NeuronSelection &selection);

std::string plant_spec_to_json(const PlantSpec &spec);
PlantSpec plant_spec_from_json(std::string_view text);

} // namespace neuron_steer
