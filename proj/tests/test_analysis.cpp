#include <doctest.h>

#include "neuron_steer/analysis.hpp"
#include "neuron_steer/error.hpp"
#include "neuron_steer/toymodel.hpp"
#include "oracle.hpp"

#include <cmath>
#include <sstream>

using namespace neuron_steer;

namespace {

double dot(const std::vector<double> &a, const std::vector<double> &b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void check_orthonormal(const PcaResult &r) {
    CHECK(std::abs(dot(r.components[0], r.components[0]) - 1.0) <= 1e-8);
    CHECK(std::abs(dot(r.components[1], r.components[1]) - 1.0) <= 1e-8);
    CHECK(std::abs(dot(r.components[0], r.components[1])) <= 1e-8);
}

void check_sign_convention(const std::vector<double> &v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i)
        if (std::abs(v[i]) > std::abs(v[best])) best = i;
    CHECK(v[best] > 0.0);
}

// Cosine between PC1 of a planted layer and the planted mean-difference direction.
double planted_alignment(const PlantSpec &spec, int layer) {
    const auto dump = plant(spec);
    const auto &l = dump.layer(layer);
    const auto r = pca_layer(l.high, l.low);
    std::vector<double> dir(spec.n_neurons, 0.0);
    for (const auto &[pl, k] : spec.planted_high)
        if (pl == layer) dir[k] = 1.0;
    for (const auto &[pl, k] : spec.planted_low)
        if (pl == layer) dir[k] = -1.0;
    return std::abs(dot(r.components[0], dir)) / std::sqrt(dot(dir, dir));
}

} // namespace

TEST_CASE("single-direction data has one component") {
    std::mt19937_64 rng(4);
    std::normal_distribution<float> normal(0.0f, 1.0f);
    ActivationMatrix high(0, TraitDirection::High, 10, 6), low(0, TraitDirection::Low, 10, 6);
    for (auto *m : {&high, &low})
        for (std::size_t i = 0; i < 10; ++i) {
            for (std::size_t k = 0; k < 6; ++k) m->at(i, k) = 1.0f;
            m->at(i, 3) = normal(rng);
        }
    for (auto method : {PcaMethod::Covariance, PcaMethod::Gram}) {
        const auto r = pca_layer(high, low, method);
        CHECK(r.components[0][3] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::abs(r.explained_variance_ratio[0] - 1.0) <= 1e-8);
        CHECK(r.explained_variance_ratio[1] <= 1e-8);
        check_orthonormal(r);
        check_sign_convention(r.components[1]);
        CHECK(r.projections.size() == 20);
    }
}

TEST_CASE("covariance and Gram routes agree") {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 4 + rng() % 20;
        auto high = oracle::random_matrix(rng, 0, TraitDirection::High, 5 + rng() % 15, k);
        auto low = oracle::random_matrix(rng, 0, TraitDirection::Low, 5 + rng() % 15, k);
        // Anisotropic scales keep the top two eigenvalues well separated.
        for (auto *m : {&high, &low})
            for (std::size_t i = 0; i < m->n_samples; ++i)
                for (std::size_t j = 0; j < k; ++j) m->at(i, j) *= static_cast<float>(std::pow(1.6, j));
        const auto a = pca_layer(high, low, PcaMethod::Covariance);
        const auto b = pca_layer(high, low, PcaMethod::Gram);
        for (int c = 0; c < 2; ++c) {
            CHECK(a.explained_variance_ratio[c] == doctest::Approx(b.explained_variance_ratio[c]).epsilon(1e-6));
            for (std::size_t j = 0; j < k; ++j) CHECK(std::abs(a.components[c][j] - b.components[c][j]) <= 1e-6);
        }
        check_orthonormal(a);
        check_orthonormal(b);
        CHECK(a.explained_variance_ratio[0] >= a.explained_variance_ratio[1]);
        CHECK(a.explained_variance_ratio[0] + a.explained_variance_ratio[1] <= 1.0 + 1e-8);
    }
}

TEST_CASE("PCA is deterministic and rejects degenerate input") {
    std::mt19937_64 rng(6);
    const auto high = oracle::random_matrix(rng, 2, TraitDirection::High, 8, 5);
    const auto low = oracle::random_matrix(rng, 2, TraitDirection::Low, 8, 5);
    const auto a = pca_layer(high, low);
    const auto b = pca_layer(high, low);
    CHECK(a.components == b.components);
    CHECK(a.layer_index == 2);
    check_sign_convention(a.components[0]);

    ActivationMatrix same_h(0, TraitDirection::High, 4, 3), same_l(0, TraitDirection::Low, 4, 3);
    CHECK_THROWS_AS(pca_layer(same_h, same_l), ValidationError);
    CHECK_THROWS_AS(pca_layer(ActivationMatrix(0, TraitDirection::High, 1, 3),
                              ActivationMatrix(0, TraitDirection::Low, 1, 3)),
                    ValidationError);
}

TEST_CASE("planted clusters align PC1 with the planted direction") {
    const auto spec = random_plant_spec(128, {0}, 5, 5, 4.0, 1.0, 300, 17);
    CHECK(planted_alignment(spec, 0) >= 0.95);
}

TEST_CASE("separation score") {
    std::mt19937_64 rng(2);
    const auto high = oracle::random_matrix(rng, 0, TraitDirection::High, 12, 6);
    auto low = high;
    low.direction = TraitDirection::Low;
    CHECK(separation_score(pca_layer(high, low)) == 0.0);

    double previous = -1.0;
    for (double shift : {0.0, 1.0, 2.0, 4.0}) {
        auto spec = random_plant_spec(64, {0}, 4, 4, shift, 1.0, 200, 23);
        const auto dump = plant(spec);
        const double score = separation_score(pca_layer(dump.layers[0].high, dump.layers[0].low));
        CHECK(score > previous);
        previous = score;
        if (shift == 4.0) CHECK(score > 2.0);
    }

    PcaResult one_sided;
    one_sided.projections = {{0, 0, TraitDirection::High}, {1, 1, TraitDirection::High}};
    CHECK_THROWS_AS(separation_score(one_sided), ValidationError);
}

TEST_CASE("census counts") {
    const std::vector<double> d{0.4, 0.9, -1.2};
    const std::vector<double> t{0.5, 0.8, 1.0};
    const auto rows = census(d, t);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].count == 2);
    CHECK(rows[1].count == 2);
    CHECK(rows[2].count == 1);
    CHECK(rows[2].fraction == doctest::Approx(1.0 / 3.0));

    const std::vector<double> zeros(10, 0.0);
    for (const auto &row : census(zeros, t)) CHECK(row.count == 0);

    const std::vector<double> unsorted{1.0, 0.5};
    CHECK_THROWS_AS(census(d, unsorted), ValidationError);
}

TEST_CASE("census rendering follows the thousands/percent row format") {
    std::vector<double> d(14336, 0.0);
    for (std::size_t i = 0; i < 5799; ++i) d[i] = (i % 2 ? -1.0 : 1.0);
    const std::vector<double> t{0.8};
    CHECK(render_census(census(d, t)) == "|d| > 0.8 → 5,799 (40.5%)\n");
}

TEST_CASE("dual scatter partitions neurons and matches selection") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        LayerStats st;
        st.n_neurons = 2 + rng() % 100;
        for (std::size_t k = 0; k < st.n_neurons; ++k) {
            st.steering.push_back(normal(rng));
            st.cohens_d.push_back(2.0 * normal(rng));
        }
        SelectionParams p;
        p.tau_d = 0.8;
        p.q = std::uniform_real_distribution<double>(0.1, 0.99)(rng);
        const auto sc = dual_scatter(st, p);
        CHECK(sc.points.size() == st.n_neurons);
        CHECK(sc.counts[0] + sc.counts[1] + sc.counts[2] + sc.counts[3] == st.n_neurons);

        std::vector<std::size_t> both;
        for (const auto &pt : sc.points)
            if (pt.category == ScatterCategory::Both) both.push_back(pt.index);
        CHECK(both == select_layer(st, p).union_indices());

        SelectionParams free = p;
        free.tau_d = 0.0;
        CHECK(dual_scatter(st, free).count(ScatterCategory::OnlyQuantile) == 0);
    }
}

TEST_CASE("renderers emit CSV and SVG") {
    std::mt19937_64 rng(1);
    const auto r = pca_layer(oracle::random_matrix(rng, 5, TraitDirection::High, 4, 3),
                             oracle::random_matrix(rng, 5, TraitDirection::Low, 4, 3));
    std::ostringstream csv, svg;
    write_pca_csv(csv, r);
    write_pca_svg(svg, r);
    CHECK(csv.str().rfind("layer,label,pc1,pc2\n5,high,", 0) == 0);
    CHECK(svg.str().find("fill=\"red\"") != std::string::npos);
    CHECK(svg.str().find("fill=\"blue\"") != std::string::npos);
}
