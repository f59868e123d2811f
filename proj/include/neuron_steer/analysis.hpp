#pragma once

#include "neuron_steer/dump.hpp"
#include "neuron_steer/select.hpp"
#include "neuron_steer/stats.hpp"

#include <array>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace neuron_steer {

// Covariance: eigendecomposition of the K x K sample covariance.
// Gram: eigendecomposition of the N x N Gram matrix, mapped back to K space.
// Auto picks whichever matrix is smaller.
enum class PcaMethod { Auto, Covariance, Gram };

struct ProjectedPoint {
    double pc1 = 0.0;
    double pc2 = 0.0;
    TraitDirection label = TraitDirection::High;
};

struct PcaResult {
    int layer_index = 0;
    std::array<std::vector<double>, 2> components; // orthonormal, length K
    std::array<double, 2> explained_variance_ratio{};
    std::vector<ProjectedPoint> projections; // high samples first, then low
};

// Top-2 PCA of the combined, mean-centred high and low samples. Each
// component is signed so its largest-magnitude entry is positive.
PcaResult pca_layer(const ActivationMatrix &high, const ActivationMatrix &low, PcaMethod method = PcaMethod::Auto);

// Distance between the two label centroids in PC space divided by the mean
// distance of points to their own centroid.
double separation_score(const PcaResult &result);

struct CensusRow {
    double threshold = 0.0;
    std::size_t count = 0; // neurons with |d| > threshold
    double fraction = 0.0;
};

std::vector<CensusRow> census(std::span<const double> d, std::span<const double> thresholds);
// One line per row: "|d| > 0.8 → 5,799 (40.5%)".
std::string render_census(std::span<const CensusRow> rows);

enum class ScatterCategory { Both, OnlyQuantile, OnlyEffectSize, Neither };
const char *to_string(ScatterCategory category);

struct ScatterPoint {
    std::size_t index = 0;
    double abs_s = 0.0;
    double abs_d = 0.0;
    ScatterCategory category = ScatterCategory::Neither;
};

struct DualScatter {
    int layer_index = 0;
    double magnitude_threshold = 0.0;
    double tau_d = 0.0;
    std::vector<ScatterPoint> points; // one per neuron, ascending index
    std::array<std::size_t, 4> counts{}; // indexed by ScatterCategory

    std::size_t count(ScatterCategory c) const { return counts[static_cast<std::size_t>(c)]; }
};

DualScatter dual_scatter(const LayerStats &stats, const SelectionParams &params);

void write_pca_csv(std::ostream &out, const PcaResult &result);
void write_pca_svg(std::ostream &out, const PcaResult &result);
void write_scatter_csv(std::ostream &out, const DualScatter &scatter);
void write_scatter_svg(std::ostream &out, const DualScatter &scatter);

} // namespace neuron_steer
