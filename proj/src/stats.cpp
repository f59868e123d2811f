#include "neuron_steer/stats.hpp"

#include "neuron_steer/error.hpp"
#include "neuron_steer/parallel.hpp"
#include "neuron_steer/text.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

namespace neuron_steer {

namespace {

struct Moments {
    std::vector<double> mean;
    std::vector<double> var; // ddof = 1; empty when fewer than 2 samples
};

// Two-pass: mean first, then centered sum of squares.
Moments moments(const ActivationMatrix &m, bool with_variance) {
    const std::size_t k = m.n_neurons;
    Moments out;
    out.mean.assign(k, 0.0);
    for (std::size_t i = 0; i < m.n_samples; ++i) {
        const auto row = m.row(i);
        for (std::size_t j = 0; j < k; ++j) out.mean[j] += static_cast<double>(row[j]);
    }
    const double n = static_cast<double>(m.n_samples);
    for (auto &v : out.mean) v /= n;
    if (!with_variance) return out;

    out.var.assign(k, 0.0);
    for (std::size_t i = 0; i < m.n_samples; ++i) {
        const auto row = m.row(i);
        for (std::size_t j = 0; j < k; ++j) {
            const double dev = static_cast<double>(row[j]) - out.mean[j];
            out.var[j] += dev * dev;
        }
    }
    for (auto &v : out.var) v /= (n - 1.0);
    return out;
}

void check_shapes(const ActivationMatrix &high, const ActivationMatrix &low, std::size_t min_samples) {
    if (high.n_neurons != low.n_neurons)
        throw ValidationError("shape mismatch: high has " + std::to_string(high.n_neurons) + " neurons, low has " +
                              std::to_string(low.n_neurons));
    if (high.n_samples < min_samples || low.n_samples < min_samples)
        throw ValidationError("need at least " + std::to_string(min_samples) + " samples per direction (got " +
                              std::to_string(high.n_samples) + " high, " + std::to_string(low.n_samples) + " low)");
}

double effect_size(double diff, double var_high, double var_low) {
    const double pooled = std::sqrt((var_high + var_low) / 2.0);
    if (pooled == 0.0) {
        if (diff == 0.0) return 0.0;
        return diff > 0.0 ? kCohensDMax : -kCohensDMax;
    }
    const double d = diff / pooled;
    if (!std::isfinite(d)) return diff > 0.0 ? kCohensDMax : -kCohensDMax;
    return d;
}

} // namespace

std::vector<double> build_steering_vector(const ActivationMatrix &high, const ActivationMatrix &low) {
    check_shapes(high, low, 1);
    const auto mh = moments(high, false);
    const auto ml = moments(low, false);
    std::vector<double> s(high.n_neurons);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = mh.mean[k] - ml.mean[k];
    return s;
}

std::vector<double> cohens_d(const ActivationMatrix &high, const ActivationMatrix &low) {
    check_shapes(high, low, 2);
    const auto mh = moments(high, true);
    const auto ml = moments(low, true);
    std::vector<double> d(high.n_neurons);
    for (std::size_t k = 0; k < d.size(); ++k) d[k] = effect_size(mh.mean[k] - ml.mean[k], mh.var[k], ml.var[k]);
    return d;
}

LayerStats compute_layer_stats(const ActivationDump &dump, int layer_index) {
    const auto &layer = dump.layer(layer_index);
    check_shapes(layer.high, layer.low, 2);
    const auto mh = moments(layer.high, true);
    const auto ml = moments(layer.low, true);

    LayerStats st;
    st.layer_index = layer_index;
    st.n_neurons = layer.high.n_neurons;
    st.n_samples_high = layer.high.n_samples;
    st.n_samples_low = layer.low.n_samples;
    st.mean_high = mh.mean;
    st.mean_low = ml.mean;
    st.std_high.resize(st.n_neurons);
    st.std_low.resize(st.n_neurons);
    st.steering.resize(st.n_neurons);
    st.cohens_d.resize(st.n_neurons);
    for (std::size_t k = 0; k < st.n_neurons; ++k) {
        st.std_high[k] = std::sqrt(mh.var[k]);
        st.std_low[k] = std::sqrt(ml.var[k]);
        st.steering[k] = mh.mean[k] - ml.mean[k];
        st.cohens_d[k] = effect_size(st.steering[k], mh.var[k], ml.var[k]);
    }
    return st;
}

std::vector<LayerStats> compute_all_stats(const ActivationDump &dump, std::span<const int> layers) {
    std::vector<int> wanted(layers.begin(), layers.end());
    if (wanted.empty()) wanted = dump.layer_indices();
    for (int l : wanted) (void)dump.layer(l); // fail early on absent layers
    std::vector<LayerStats> out(wanted.size());
    parallel_for(wanted.size(), [&](std::size_t i) { out[i] = compute_layer_stats(dump, wanted[i]); });
    return out;
}

void write_stats_csv(std::ostream &out, std::span<const LayerStats> stats) {
    out << "layer,neuron,mean_high,mean_low,std_high,std_low,s,d\n";
    for (const auto &st : stats) {
        for (std::size_t k = 0; k < st.n_neurons; ++k) {
            out << st.layer_index << ',' << k << ',' << format_double(st.mean_high[k]) << ','
                << format_double(st.mean_low[k]) << ',' << format_double(st.std_high[k]) << ','
                << format_double(st.std_low[k]) << ',' << format_double(st.steering[k]) << ','
                << format_double(st.cohens_d[k]) << '\n';
        }
    }
}

std::vector<LayerStats> read_stats_csv(std::istream &in) {
    std::string line;
    if (!std::getline(in, line) || line != "layer,neuron,mean_high,mean_low,std_high,std_low,s,d")
        throw ValidationError("stats CSV: missing or unexpected header");
    std::vector<LayerStats> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split(line, ',');
        if (fields.size() != 8)
            throw ValidationError("stats CSV line " + std::to_string(line_no) + ": expected 8 fields");
        const int layer = static_cast<int>(parse_int(fields[0]));
        const auto neuron = parse_int(fields[1]);
        if (out.empty() || out.back().layer_index != layer) {
            if (!out.empty() && layer <= out.back().layer_index)
                throw ValidationError("stats CSV line " + std::to_string(line_no) + ": layers must ascend");
            out.emplace_back().layer_index = layer;
        }
        auto &st = out.back();
        if (neuron != static_cast<long long>(st.n_neurons))
            throw ValidationError("stats CSV line " + std::to_string(line_no) + ": neurons must be listed 0..K-1");
        st.mean_high.push_back(parse_double(fields[2]));
        st.mean_low.push_back(parse_double(fields[3]));
        st.std_high.push_back(parse_double(fields[4]));
        st.std_low.push_back(parse_double(fields[5]));
        st.steering.push_back(parse_double(fields[6]));
        st.cohens_d.push_back(parse_double(fields[7]));
        ++st.n_neurons;
    }
    for (const auto &st : out) {
        if (st.n_neurons != out.front().n_neurons)
            throw ValidationError("stats CSV: layers have different neuron counts");
    }
    return out;
}

} // namespace neuron_steer
