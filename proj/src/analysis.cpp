#include "neuron_steer/analysis.hpp"

#include "neuron_steer/error.hpp"
#include "neuron_steer/text.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

namespace neuron_steer {

namespace {

// Components whose eigenvalue falls below this fraction of the total
// variance are treated as numerically zero.
constexpr double kZeroVariance = 1e-12;

Eigen::MatrixXd stack_centered(const ActivationMatrix &high, const ActivationMatrix &low) {
    const auto n = static_cast<Eigen::Index>(high.n_samples + low.n_samples);
    const auto k = static_cast<Eigen::Index>(high.n_neurons);
    Eigen::MatrixXd x(n, k);
    Eigen::Index r = 0;
    for (const auto *m : {&high, &low}) {
        for (std::size_t i = 0; i < m->n_samples; ++i, ++r) {
            const auto row = m->row(i);
            for (Eigen::Index j = 0; j < k; ++j) x(r, j) = static_cast<double>(row[j]);
        }
    }
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    return x;
}

void fix_sign(Eigen::VectorXd &v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best])) best = i;
    if (v[best] < 0.0) v = -v;
}

// Unit vector orthogonal to v built from the least-aligned basis vector.
Eigen::VectorXd orthogonal_fallback(const Eigen::VectorXd &v) {
    Eigen::Index j = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) < std::abs(v[j])) j = i;
    Eigen::VectorXd e = Eigen::VectorXd::Unit(v.size(), j);
    e -= e.dot(v) * v;
    return e.normalized();
}

struct TopTwo {
    Eigen::VectorXd v1, v2;
    double lambda1 = 0.0, lambda2 = 0.0;
};

TopTwo top_two_covariance(const Eigen::MatrixXd &x) {
    const double denom = static_cast<double>(x.rows() - 1);
    const Eigen::MatrixXd cov = (x.transpose() * x) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw Error("covariance eigendecomposition failed");
    const auto k = cov.rows();
    TopTwo out;
    out.lambda1 = solver.eigenvalues()[k - 1];
    out.lambda2 = solver.eigenvalues()[k - 2];
    out.v1 = solver.eigenvectors().col(k - 1);
    out.v2 = solver.eigenvectors().col(k - 2);
    return out;
}

TopTwo top_two_gram(const Eigen::MatrixXd &x) {
    const double denom = static_cast<double>(x.rows() - 1);
    const Eigen::MatrixXd gram = (x * x.transpose()) / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success) throw Error("Gram eigendecomposition failed");
    const auto n = gram.rows();
    TopTwo out;
    out.lambda1 = solver.eigenvalues()[n - 1];
    out.lambda2 = solver.eigenvalues()[n - 2];
    // X^T u is an eigenvector of the covariance with the same eigenvalue.
    out.v1 = (x.transpose() * solver.eigenvectors().col(n - 1)).normalized();
    Eigen::VectorXd v2 = x.transpose() * solver.eigenvectors().col(n - 2);
    v2 -= v2.dot(out.v1) * out.v1;
    const double norm = v2.norm();
    out.v2 = norm > 0.0 ? Eigen::VectorXd(v2 / norm) : Eigen::VectorXd::Zero(x.cols());
    return out;
}

} // namespace

PcaResult pca_layer(const ActivationMatrix &high, const ActivationMatrix &low, PcaMethod method) {
    if (high.n_neurons != low.n_neurons) throw ValidationError("PCA: high and low neuron counts differ");
    if (high.n_samples + low.n_samples < 3) throw ValidationError("PCA needs at least 3 samples in total");
    if (high.n_neurons < 2) throw ValidationError("PCA needs at least 2 neurons");

    const Eigen::MatrixXd x = stack_centered(high, low);
    const double total = x.squaredNorm() / static_cast<double>(x.rows() - 1);
    if (!(total > 0.0)) throw ValidationError("PCA: degenerate input, all samples are identical");

    if (method == PcaMethod::Auto) method = x.cols() <= x.rows() ? PcaMethod::Covariance : PcaMethod::Gram;
    TopTwo top = method == PcaMethod::Covariance ? top_two_covariance(x) : top_two_gram(x);

    top.lambda1 = std::max(top.lambda1, 0.0);
    top.lambda2 = std::max(top.lambda2, 0.0);
    fix_sign(top.v1);
    if (top.lambda2 <= kZeroVariance * total) {
        top.lambda2 = 0.0;
        top.v2 = orthogonal_fallback(top.v1);
    }
    fix_sign(top.v2);

    PcaResult result;
    result.layer_index = high.layer_index;
    result.components[0].assign(top.v1.data(), top.v1.data() + top.v1.size());
    result.components[1].assign(top.v2.data(), top.v2.data() + top.v2.size());
    result.explained_variance_ratio = {std::min(1.0, top.lambda1 / total), std::min(1.0, top.lambda2 / total)};

    const Eigen::VectorXd p1 = x * top.v1;
    const Eigen::VectorXd p2 = x * top.v2;
    result.projections.reserve(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const auto label = static_cast<std::size_t>(r) < high.n_samples ? TraitDirection::High : TraitDirection::Low;
        result.projections.push_back({p1[r], p2[r], label});
    }
    return result;
}

double separation_score(const PcaResult &result) {
    std::array<double, 2> cx{}, cy{};
    std::array<std::size_t, 2> n{};
    for (const auto &p : result.projections) {
        const auto g = static_cast<std::size_t>(p.label);
        cx[g] += p.pc1;
        cy[g] += p.pc2;
        ++n[g];
    }
    if (n[0] == 0 || n[1] == 0) throw ValidationError("separation score needs both High and Low points");
    for (std::size_t g = 0; g < 2; ++g) {
        cx[g] /= static_cast<double>(n[g]);
        cy[g] /= static_cast<double>(n[g]);
    }
    double within = 0.0;
    for (const auto &p : result.projections) {
        const auto g = static_cast<std::size_t>(p.label);
        within += std::hypot(p.pc1 - cx[g], p.pc2 - cy[g]);
    }
    within /= static_cast<double>(result.projections.size());
    const double between = std::hypot(cx[0] - cx[1], cy[0] - cy[1]);
    if (within == 0.0) return between == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return between / within;
}

std::vector<CensusRow> census(std::span<const double> d, std::span<const double> thresholds) {
    if (!std::is_sorted(thresholds.begin(), thresholds.end()))
        throw ValidationError("census thresholds must be sorted ascending");
    std::vector<CensusRow> rows;
    for (double t : thresholds) {
        CensusRow row;
        row.threshold = t;
        row.count = static_cast<std::size_t>(
            std::count_if(d.begin(), d.end(), [t](double v) { return std::abs(v) > t; }));
        row.fraction = d.empty() ? 0.0 : static_cast<double>(row.count) / static_cast<double>(d.size());
        rows.push_back(row);
    }
    return rows;
}

std::string render_census(std::span<const CensusRow> rows) {
    std::string out;
    for (const auto &row : rows) {
        char pct[32];
        std::snprintf(pct, sizeof(pct), "%.1f%%", 100.0 * row.fraction);
        out += "|d| > " + format_double(row.threshold) + " → " +
               group_thousands(static_cast<long long>(row.count)) + " (" + pct + ")\n";
    }
    return out;
}

const char *to_string(ScatterCategory category) {
    switch (category) {
    case ScatterCategory::Both: return "both";
    case ScatterCategory::OnlyQuantile: return "only_quantile";
    case ScatterCategory::OnlyEffectSize: return "only_effect_size";
    case ScatterCategory::Neither: return "neither";
    }
    return "?";
}

DualScatter dual_scatter(const LayerStats &stats, const SelectionParams &params) {
    // tau_d = 0 is allowed here: it is the criterion-free reference view.
    if (!(params.q > 0.0 && params.q < 1.0)) throw ValidationError("q must lie in (0, 1)");
    if (!(params.tau_d >= 0.0)) throw ValidationError("tau_d must be non-negative");
    if (stats.n_neurons < 2) throw ValidationError("scatter needs at least 2 neurons per layer");
    std::vector<double> magnitudes(stats.n_neurons);
    for (std::size_t k = 0; k < stats.n_neurons; ++k) magnitudes[k] = std::abs(stats.steering[k]);

    DualScatter out;
    out.layer_index = stats.layer_index;
    out.tau_d = params.tau_d;
    out.magnitude_threshold = quantile_threshold(magnitudes, params.q);
    out.points.reserve(stats.n_neurons);
    for (std::size_t k = 0; k < stats.n_neurons; ++k) {
        const double abs_d = std::abs(stats.cohens_d[k]);
        const bool by_quantile = magnitudes[k] > out.magnitude_threshold;
        const bool by_effect = abs_d > params.tau_d;
        const auto cat = by_quantile ? (by_effect ? ScatterCategory::Both : ScatterCategory::OnlyQuantile)
                                     : (by_effect ? ScatterCategory::OnlyEffectSize : ScatterCategory::Neither);
        out.points.push_back({k, magnitudes[k], abs_d, cat});
        ++out.counts[static_cast<std::size_t>(cat)];
    }
    return out;
}

void write_pca_csv(std::ostream &out, const PcaResult &result) {
    out << "layer,label,pc1,pc2\n";
    for (const auto &p : result.projections)
        out << result.layer_index << ',' << to_string(p.label) << ',' << format_double(p.pc1) << ','
            << format_double(p.pc2) << '\n';
}

namespace {

struct Frame {
    double x0, x1, y0, y1;
    static constexpr double size = 480.0, pad = 40.0;

    double sx(double x) const { return pad + (x1 > x0 ? (x - x0) / (x1 - x0) : 0.5) * (size - 2 * pad); }
    double sy(double y) const { return size - pad - (y1 > y0 ? (y - y0) / (y1 - y0) : 0.5) * (size - 2 * pad); }
};

void svg_open(std::ostream &out, const std::string &title, const std::string &xlabel, const std::string &ylabel) {
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"480\" height=\"480\" viewBox=\"0 0 480 480\">\n"
        << "<rect width=\"480\" height=\"480\" fill=\"white\"/>\n"
        << "<text x=\"240\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n"
        << "<text x=\"240\" y=\"472\" text-anchor=\"middle\" font-size=\"12\">" << xlabel << "</text>\n"
        << "<text x=\"12\" y=\"240\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 12 240)\">"
        << ylabel << "</text>\n"
        << "<rect x=\"40\" y=\"40\" width=\"400\" height=\"400\" fill=\"none\" stroke=\"black\"/>\n";
}

void svg_point(std::ostream &out, double x, double y, const char *color) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2\" fill=\"%s\" fill-opacity=\"0.6\"/>\n", x,
                  y, color);
    out << buf;
}

} // namespace

void write_pca_svg(std::ostream &out, const PcaResult &result) {
    Frame f{0, 0, 0, 0};
    if (!result.projections.empty()) {
        f = {result.projections[0].pc1, result.projections[0].pc1, result.projections[0].pc2,
             result.projections[0].pc2};
    }
    for (const auto &p : result.projections) {
        f.x0 = std::min(f.x0, p.pc1);
        f.x1 = std::max(f.x1, p.pc1);
        f.y0 = std::min(f.y0, p.pc2);
        f.y1 = std::max(f.y1, p.pc2);
    }
    char xl[64], yl[64];
    std::snprintf(xl, sizeof(xl), "PC1 (%.1f%%)", 100.0 * result.explained_variance_ratio[0]);
    std::snprintf(yl, sizeof(yl), "PC2 (%.1f%%)", 100.0 * result.explained_variance_ratio[1]);
    svg_open(out, "Layer " + std::to_string(result.layer_index), xl, yl);
    for (const auto &p : result.projections)
        svg_point(out, f.sx(p.pc1), f.sy(p.pc2), p.label == TraitDirection::High ? "red" : "blue");
    out << "</svg>\n";
}

void write_scatter_csv(std::ostream &out, const DualScatter &scatter) {
    out << "layer,neuron,abs_s,abs_d,category\n";
    for (const auto &p : scatter.points)
        out << scatter.layer_index << ',' << p.index << ',' << format_double(p.abs_s) << ','
            << format_double(p.abs_d) << ',' << to_string(p.category) << '\n';
}

void write_scatter_svg(std::ostream &out, const DualScatter &scatter) {
    Frame f{0, scatter.magnitude_threshold, 0, scatter.tau_d};
    for (const auto &p : scatter.points) {
        f.x1 = std::max(f.x1, p.abs_s);
        f.y1 = std::max(f.y1, std::min(p.abs_d, 10.0 * std::max(1.0, scatter.tau_d)));
    }
    svg_open(out, "Layer " + std::to_string(scatter.layer_index) + " dual-criterion selection", "|s|",
             "|Cohen's d|");
    char line[256];
    std::snprintf(line, sizeof(line),
                  "<line x1=\"%.2f\" y1=\"40\" x2=\"%.2f\" y2=\"440\" stroke=\"black\" stroke-dasharray=\"4 4\"/>\n"
                  "<line x1=\"40\" y1=\"%.2f\" x2=\"440\" y2=\"%.2f\" stroke=\"black\" stroke-dasharray=\"4 4\"/>\n",
                  f.sx(scatter.magnitude_threshold), f.sx(scatter.magnitude_threshold), f.sy(scatter.tau_d),
                  f.sy(scatter.tau_d));
    out << line;
    for (const auto &p : scatter.points) {
        const char *color = "gray";
        switch (p.category) {
        case ScatterCategory::Both: color = "green"; break;
        case ScatterCategory::OnlyQuantile: color = "red"; break;
        case ScatterCategory::OnlyEffectSize: color = "orange"; break;
        case ScatterCategory::Neither: break;
        }
        svg_point(out, f.sx(p.abs_s), f.sy(std::min(p.abs_d, f.y1)), color);
    }
    out << "</svg>\n";
}

} // namespace neuron_steer
