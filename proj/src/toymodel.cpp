#include "neuron_steer/toymodel.hpp"

#include "neuron_steer/error.hpp"
#include "neuron_steer/parallel.hpp"

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace neuron_steer {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) { return splitmix64(seed ^ splitmix64(stream)); }

Eigen::MatrixXd random_matrix(std::mt19937_64 &rng, int rows, int cols) {
    std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(static_cast<double>(cols)));
    Eigen::MatrixXd m(rows, cols);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = normal(rng);
    return m;
}

Eigen::VectorXd rms_norm(const Eigen::VectorXd &x) {
    const double ms = x.squaredNorm() / static_cast<double>(x.size());
    return x / std::sqrt(ms + 1e-6);
}

double silu(double x) { return x / (1.0 + std::exp(-x)); }

} // namespace

void ToyModelConfig::validate() const {
    if (n_layers < 1 || d_model < 1 || d_mlp < 1 || vocab < 1)
        throw ValidationError("toy model dimensions must all be >= 1");
}

struct ToyModel::Weights {
    Eigen::MatrixXd embedding; // vocab x d_model
    struct Block {
        Eigen::MatrixXd mix;  // d_model x d_model
        Eigen::MatrixXd gate; // d_mlp x d_model
        Eigen::MatrixXd up;   // d_mlp x d_model
        Eigen::MatrixXd down; // d_model x d_mlp
    };
    std::vector<Block> blocks;
    Eigen::MatrixXd unembed; // vocab x d_model
};

ToyModel::ToyModel(ToyModelConfig config) : config_(config) {
    config_.validate();
    std::mt19937_64 rng(derive_seed(config_.seed, 0));
    auto w = std::make_shared<Weights>();
    std::normal_distribution<double> unit(0.0, 1.0);
    w->embedding.resize(config_.vocab, config_.d_model);
    for (int r = 0; r < config_.vocab; ++r)
        for (int c = 0; c < config_.d_model; ++c) w->embedding(r, c) = unit(rng);
    for (int l = 0; l < config_.n_layers; ++l) {
        Weights::Block b;
        b.mix = random_matrix(rng, config_.d_model, config_.d_model);
        b.gate = random_matrix(rng, config_.d_mlp, config_.d_model);
        b.up = random_matrix(rng, config_.d_mlp, config_.d_model);
        b.down = random_matrix(rng, config_.d_model, config_.d_mlp);
        w->blocks.push_back(std::move(b));
    }
    w->unembed = random_matrix(rng, config_.vocab, config_.d_model);
    weights_ = std::move(w);
}

ForwardResult ToyModel::forward(std::span<const int> tokens) const { return forward_intervened(tokens, {}); }

ForwardResult ToyModel::forward_intervened(std::span<const int> tokens, const InterventionConfig &config) const {
    if (tokens.empty()) throw ValidationError("token sequence must not be empty");
    for (int t : tokens) {
        if (t < 0 || t >= config_.vocab)
            throw ValidationError("token " + std::to_string(t) + " outside vocabulary of " +
                                  std::to_string(config_.vocab));
    }
    for (const auto &layer : config.layers) {
        if (layer.layer_index < 0 || layer.layer_index >= config_.n_layers)
            throw ValidationError("config layer " + std::to_string(layer.layer_index) + " outside model depth " +
                                  std::to_string(config_.n_layers));
        for (const auto &e : layer.edits) {
            if (e.index >= static_cast<std::size_t>(config_.d_mlp))
                throw ValidationError("config neuron " + std::to_string(e.index) + " out of range for MLP width " +
                                      std::to_string(config_.d_mlp));
        }
    }

    const auto &w = *weights_;
    const std::size_t n = tokens.size();
    std::vector<Eigen::VectorXd> x(n);
    for (std::size_t t = 0; t < n; ++t) x[t] = w.embedding.row(tokens[t]).transpose();

    ForwardResult result;
    result.captures.resize(config_.n_layers);
    result.pre_edit.resize(config_.n_layers);
    std::vector<double> hidden(config_.d_mlp);
    for (int l = 0; l < config_.n_layers; ++l) {
        const auto &b = w.blocks[l];
        const LayerEdits *edits = config.find_layer(l);

        Eigen::VectorXd running = Eigen::VectorXd::Zero(config_.d_model);
        for (std::size_t t = 0; t < n; ++t) {
            running += rms_norm(x[t]);
            x[t] += b.mix * (running / static_cast<double>(t + 1));
        }
        for (std::size_t t = 0; t < n; ++t) {
            const Eigen::VectorXd m = rms_norm(x[t]);
            const Eigen::VectorXd g = b.gate * m;
            const Eigen::VectorXd u = b.up * m;
            for (int k = 0; k < config_.d_mlp; ++k) hidden[k] = silu(g[k]) * u[k];
            if (t + 1 == n) result.pre_edit[l] = hidden;
            if (edits) apply_edits_in_place(hidden, *edits);
            if (t + 1 == n) result.captures[l] = hidden;
            x[t] += b.down * Eigen::Map<const Eigen::VectorXd>(hidden.data(), config_.d_mlp);
        }
    }
    const Eigen::VectorXd logits = w.unembed * rms_norm(x[n - 1]);
    result.logits.assign(logits.data(), logits.data() + logits.size());
    return result;
}

std::vector<std::vector<double>> ToyModel::forward_capture(std::span<const int> tokens) const {
    return forward(tokens).captures;
}

std::vector<PromptPair> make_toy_prompts(const ToyModelConfig &config, std::size_t n_pairs, std::uint64_t seed) {
    config.validate();
    if (config.vocab < 8) throw ValidationError("toy prompts need a vocabulary of at least 8 tokens");
    // Tokens [0, v/4) are high markers, [v/4, v/2) low markers, the rest question text.
    const int quarter = config.vocab / 4;
    std::mt19937_64 rng(derive_seed(seed, 1));
    std::uniform_int_distribution<int> high_marker(0, quarter - 1);
    std::uniform_int_distribution<int> low_marker(quarter, 2 * quarter - 1);
    std::uniform_int_distribution<int> text(2 * quarter, config.vocab - 1);
    std::uniform_int_distribution<int> length(4, 12);

    std::vector<PromptPair> out(n_pairs);
    for (auto &pair : out) {
        for (int i = 0; i < 3; ++i) {
            pair.high.push_back(high_marker(rng));
            pair.low.push_back(low_marker(rng));
        }
        const int len = length(rng);
        for (int i = 0; i < len; ++i) {
            const int tok = text(rng);
            pair.high.push_back(tok);
            pair.low.push_back(tok);
        }
    }
    return out;
}

ActivationDump capture_dump(const ToyModel &model, std::span<const PromptPair> prompts, std::string trait,
                            std::span<const int> layers) {
    const auto &cfg = model.config();
    std::vector<int> wanted(layers.begin(), layers.end());
    if (wanted.empty()) {
        wanted.resize(cfg.n_layers);
        std::iota(wanted.begin(), wanted.end(), 0);
    }
    for (int l : wanted) {
        if (l < 0 || l >= cfg.n_layers) throw ValidationError("capture layer " + std::to_string(l) + " out of range");
    }

    const std::size_t n = prompts.size();
    const auto k = static_cast<std::size_t>(cfg.d_mlp);
    std::vector<std::vector<std::vector<double>>> high(n), low(n);
    parallel_for(n, [&](std::size_t i) {
        high[i] = model.forward_capture(prompts[i].high);
        low[i] = model.forward_capture(prompts[i].low);
    });

    ActivationDump dump;
    dump.model_id = "toy-seed-" + std::to_string(cfg.seed);
    dump.trait = std::move(trait);
    for (int l : wanted) {
        LayerActivations layer;
        layer.layer_index = l;
        layer.high = ActivationMatrix(l, TraitDirection::High, n, k);
        layer.low = ActivationMatrix(l, TraitDirection::Low, n, k);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                layer.high.at(i, j) = static_cast<float>(high[i][l][j]);
                layer.low.at(i, j) = static_cast<float>(low[i][l][j]);
            }
        }
        dump.layers.push_back(std::move(layer));
    }
    std::sort(dump.layers.begin(), dump.layers.end(),
              [](const LayerActivations &a, const LayerActivations &b) { return a.layer_index < b.layer_index; });
    validate_dump(dump);
    return dump;
}

void PlantSpec::validate() const {
    if (!(noise_std > 0.0)) throw ValidationError("noise_std must be positive");
    if (!(shift >= 0.0)) throw ValidationError("shift must be non-negative");
    if (n_pairs < 2) throw ValidationError("n_pairs must be at least 2");
    if (n_neurons < 1) throw ValidationError("n_neurons must be at least 1");
    if (!is_big_five_trait(trait)) throw ValidationError("trait must be a Big Five trait name");
    for (std::size_t i = 0; i < layers.size(); ++i) {
        if (layers[i] < 0 || (i > 0 && layers[i] <= layers[i - 1]))
            throw ValidationError("plant layers must be non-negative and strictly ascending");
    }
    auto check_site = [&](const NeuronSite &site) {
        if (!std::binary_search(layers.begin(), layers.end(), site.first))
            throw ValidationError("planted layer " + std::to_string(site.first) + " not among the dump layers");
        if (site.second >= n_neurons)
            throw ValidationError("planted neuron " + std::to_string(site.second) + " out of range");
    };
    for (const auto &site : planted_high) check_site(site);
    for (const auto &site : planted_low) {
        check_site(site);
        if (planted_high.count(site))
            throw ValidationError("neuron planted in both directions: layer " + std::to_string(site.first) +
                                  " neuron " + std::to_string(site.second));
    }
}

ActivationDump plant(const PlantSpec &spec) {
    spec.validate();
    ActivationDump dump;
    dump.model_id = spec.model_id;
    dump.trait = spec.trait;
    dump.layers.resize(spec.layers.size());
    parallel_for(spec.layers.size(), [&](std::size_t li) {
        const int layer_index = spec.layers[li];
        std::vector<double> offset(spec.n_neurons, 0.0);
        for (const auto &[l, k] : spec.planted_high)
            if (l == layer_index) offset[k] = spec.shift;
        for (const auto &[l, k] : spec.planted_low)
            if (l == layer_index) offset[k] = -spec.shift;

        std::mt19937_64 rng(derive_seed(spec.seed, 1000 + static_cast<std::uint64_t>(layer_index)));
        std::normal_distribution<double> noise(0.0, spec.noise_std);
        auto &layer = dump.layers[li];
        layer.layer_index = layer_index;
        layer.high = ActivationMatrix(layer_index, TraitDirection::High, spec.n_pairs, spec.n_neurons);
        layer.low = ActivationMatrix(layer_index, TraitDirection::Low, spec.n_pairs, spec.n_neurons);
        for (std::size_t i = 0; i < spec.n_pairs; ++i)
            for (std::size_t k = 0; k < spec.n_neurons; ++k)
                layer.high.at(i, k) = static_cast<float>(noise(rng) + offset[k]);
        for (std::size_t i = 0; i < spec.n_pairs; ++i)
            for (std::size_t k = 0; k < spec.n_neurons; ++k)
                layer.low.at(i, k) = static_cast<float>(noise(rng) - offset[k]);
    });
    return dump;
}

PlantSpec random_plant_spec(std::size_t n_neurons, std::vector<int> layers, std::size_t n_high, std::size_t n_low,
                            double shift, double noise_std, std::size_t n_pairs, std::uint64_t seed) {
    if (n_high + n_low > n_neurons) throw ValidationError("more planted neurons than neurons per layer");
    PlantSpec spec;
    spec.shift = shift;
    spec.noise_std = noise_std;
    spec.n_pairs = n_pairs;
    spec.n_neurons = n_neurons;
    spec.layers = std::move(layers);
    spec.seed = seed;
    std::vector<std::size_t> order(n_neurons);
    for (int layer : spec.layers) {
        std::iota(order.begin(), order.end(), 0);
        std::mt19937_64 rng(derive_seed(seed, 500000 + static_cast<std::uint64_t>(layer)));
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t i = 0; i < n_high; ++i) spec.planted_high.insert({layer, order[i]});
        for (std::size_t i = n_high; i < n_high + n_low; ++i) spec.planted_low.insert({layer, order[i]});
    }
    spec.validate();
    return spec;
}

double RecoveryReport::high_rate() const {
    return planted_high == 0 ? 1.0 : static_cast<double>(recovered_high) / static_cast<double>(planted_high);
}

double RecoveryReport::low_rate() const {
    return planted_low == 0 ? 1.0 : static_cast<double>(recovered_low) / static_cast<double>(planted_low);
}

double RecoveryReport::overall_rate() const {
    const std::size_t planted = planted_high + planted_low;
    return planted == 0 ? 1.0 : static_cast<double>(recovered_high + recovered_low) / static_cast<double>(planted);
}

RecoveryReport evaluate_recovery(const PlantSpec &spec, const NeuronSelection &selection) {
    RecoveryReport report;
    for (const auto &layer : selection.layers) {
        std::size_t unplanted = 0;
        for (const auto &n : layer.high) {
            const NeuronSite site{layer.layer_index, n.index};
            if (spec.planted_high.count(site)) ++report.recovered_high;
            else if (!spec.planted_low.count(site)) ++unplanted;
        }
        for (const auto &n : layer.low) {
            const NeuronSite site{layer.layer_index, n.index};
            if (spec.planted_low.count(site)) ++report.recovered_low;
            else if (!spec.planted_high.count(site)) ++unplanted;
        }
        report.unplanted_total += unplanted;
        report.max_unplanted_per_layer = std::max(report.max_unplanted_per_layer, unplanted);
    }
    // Only planted sites on selected layers count toward the denominators.
    for (const auto &[l, k] : spec.planted_high)
        if (selection.find_layer(l)) ++report.planted_high;
    for (const auto &[l, k] : spec.planted_low)
        if (selection.find_layer(l)) ++report.planted_low;
    return report;
}

std::string plant_spec_to_json(const PlantSpec &spec) {
    using ordered_json = nlohmann::ordered_json;
    ordered_json planted = ordered_json::array();
    for (int layer : spec.layers) {
        std::vector<std::size_t> high, low;
        for (const auto &[l, k] : spec.planted_high)
            if (l == layer) high.push_back(k);
        for (const auto &[l, k] : spec.planted_low)
            if (l == layer) low.push_back(k);
        planted.push_back(ordered_json{{"layer", layer}, {"high", high}, {"low", low}});
    }
    ordered_json j{{"trait", spec.trait},       {"model_id", spec.model_id},   {"seed", spec.seed},
                   {"shift", spec.shift},       {"noise_std", spec.noise_std}, {"n_pairs", spec.n_pairs},
                   {"n_neurons", spec.n_neurons}, {"layers", spec.layers},     {"planted", std::move(planted)}};
    return j.dump(2) + "\n";
}

PlantSpec plant_spec_from_json(std::string_view text) {
    PlantSpec spec;
    try {
        const auto j = nlohmann::json::parse(text);
        spec.trait = j.at("trait").get<std::string>();
        spec.model_id = j.at("model_id").get<std::string>();
        spec.seed = j.at("seed").get<std::uint64_t>();
        spec.shift = j.at("shift").get<double>();
        spec.noise_std = j.at("noise_std").get<double>();
        spec.n_pairs = j.at("n_pairs").get<std::size_t>();
        spec.n_neurons = j.at("n_neurons").get<std::size_t>();
        spec.layers = j.at("layers").get<std::vector<int>>();
        for (const auto &p : j.at("planted")) {
            const int layer = p.at("layer").get<int>();
            for (auto k : p.at("high").get<std::vector<std::size_t>>()) spec.planted_high.insert({layer, k});
            for (auto k : p.at("low").get<std::vector<std::size_t>>()) spec.planted_low.insert({layer, k});
        }
    } catch (const nlohmann::json::exception &ex) {
        throw ValidationError(std::string("plant oracle JSON: ") + ex.what());
    }
    spec.validate();
    return spec;
}

} // namespace neuron_steer
