#include <doctest.h>

#include "neuron_steer/error.hpp"
#include "neuron_steer/stats.hpp"
#include "oracle.hpp"

#include <sstream>

using namespace neuron_steer;
using oracle::from_rows;

namespace {

const auto H = TraitDirection::High;
const auto L = TraitDirection::Low;

double max_abs_diff(const std::vector<double> &a, const std::vector<double> &b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

} // namespace

TEST_CASE("steering vector examples") {
    const auto high = from_rows(0, H, {{1, 0}, {3, 0}});
    const auto low = from_rows(0, L, {{0, 0}, {2, 0}});
    CHECK(build_steering_vector(high, low) == std::vector<double>{1.0, 0.0});
    CHECK(build_steering_vector(high, from_rows(0, L, {{1, 0}, {3, 0}})) == std::vector<double>{0.0, 0.0});

    CHECK_THROWS_AS(build_steering_vector(high, from_rows(0, L, {{1, 2, 3}})), ValidationError);
    CHECK_THROWS_AS(build_steering_vector(high, ActivationMatrix(0, L, 0, 2)), ValidationError);
}

TEST_CASE("steering vector accepts LLaMA-scale shapes") {
    ActivationMatrix high(12, H, 1000, 14336), low(12, L, 1000, 14336);
    high.at(999, 14335) = 1000.0f;
    const auto s = build_steering_vector(high, low);
    CHECK(s.size() == 14336);
    CHECK(s[14335] == doctest::Approx(1.0));
}

TEST_CASE("Cohen's d examples") {
    const auto high = from_rows(0, H, {{1, 0}, {3, 0}});
    const auto low = from_rows(0, L, {{0, 0}, {2, 0}});
    const auto d = cohens_d(high, low);
    // neuron 0: diff 1, both variances 2, pooled sqrt(2)
    CHECK(d[0] == doctest::Approx(0.70710678118654752).epsilon(1e-15));
    CHECK(d[1] == 0.0);

    CHECK(cohens_d(high, high) == std::vector<double>{0.0, 0.0});

    const auto sevens = from_rows(0, H, {{7}, {7}, {7}});
    const auto fives = from_rows(0, L, {{5}, {5}});
    CHECK(cohens_d(sevens, fives)[0] == kCohensDMax);
    CHECK(cohens_d(fives, sevens)[0] == -kCohensDMax);

    CHECK_THROWS_AS(cohens_d(from_rows(0, H, {{1, 2}}), low), ValidationError);
}

TEST_CASE("layer stats match hand-computed values") {
    ActivationDump dump;
    dump.trait = "extraversion";
    LayerActivations layer;
    layer.layer_index = 3;
    layer.high = from_rows(3, H, {{1, 2, 0.5f}, {3, 1, 0.5f}, {2, 6, 0.5f}});
    layer.low = from_rows(3, L, {{0, 1, 0.5f}, {2, 3, 0.5f}, {1, 2, 0.5f}});
    dump.layers.push_back(layer);

    // Frozen from an independent numpy evaluation.
    const auto st = compute_layer_stats(dump, 3);
    CHECK(st.layer_index == 3);
    CHECK(st.n_neurons == 3);
    CHECK(st.n_samples_high == 3);
    CHECK(st.mean_high == std::vector<double>{2.0, 3.0, 0.5});
    CHECK(st.mean_low == std::vector<double>{1.0, 2.0, 0.5});
    CHECK(st.std_high[0] == doctest::Approx(1.0));
    CHECK(st.std_high[1] == doctest::Approx(2.6457513110645907));
    CHECK(st.std_high[2] == 0.0);
    CHECK(st.std_low[1] == doctest::Approx(1.0));
    CHECK(st.steering == std::vector<double>{1.0, 1.0, 0.0});
    CHECK(st.cohens_d[0] == doctest::Approx(1.0));
    CHECK(st.cohens_d[1] == doctest::Approx(0.5));
    CHECK(st.cohens_d[2] == 0.0);

    CHECK_THROWS_AS(compute_layer_stats(dump, 4), ValidationError);
}

TEST_CASE("identical directions give zero steering and zero d") {
    std::mt19937_64 rng(3);
    ActivationDump dump;
    dump.trait = "openness";
    LayerActivations layer;
    layer.layer_index = 0;
    layer.high = oracle::random_matrix(rng, 0, H, 5, 7);
    layer.low = layer.high;
    layer.low.direction = L;
    dump.layers.push_back(layer);
    const auto st = compute_layer_stats(dump, 0);
    for (std::size_t k = 0; k < 7; ++k) {
        CHECK(st.steering[k] == 0.0);
        CHECK(st.cohens_d[k] == 0.0);
    }
}

TEST_CASE("all LLaMA target layers produce stats") {
    std::mt19937_64 rng(5);
    ActivationDump dump;
    dump.trait = "conscientiousness";
    for (int l = 12; l <= 31; ++l) {
        LayerActivations layer;
        layer.layer_index = l;
        layer.high = oracle::random_matrix(rng, l, H, 4, 64);
        layer.low = oracle::random_matrix(rng, l, L, 4, 64);
        dump.layers.push_back(std::move(layer));
    }
    const auto all = compute_all_stats(dump);
    REQUIRE(all.size() == 20);
    CHECK(all.front().layer_index == 12);
    CHECK(all.back().layer_index == 31);
    const int wanted[] = {31, 12};
    const auto some = compute_all_stats(dump, wanted);
    CHECK(some[0].layer_index == 31);
    CHECK(some[1].steering == all[0].steering);
}

TEST_CASE("property: oracle equivalence, antisymmetry, shift and scale") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng() % 7, k = 1 + rng() % 16;
        const auto high = oracle::random_grid_matrix(rng, 0, H, n, k);
        const auto low = oracle::random_grid_matrix(rng, 0, L, 2 + rng() % 7, k);

        const auto s = build_steering_vector(high, low);
        const auto d = cohens_d(high, low);
        CHECK(max_abs_diff(s, oracle::steering(high, low)) <= 1e-12);
        CHECK(max_abs_diff(d, oracle::cohens_d(high, low)) <= 1e-12);

        const auto s_swap = build_steering_vector(low, high);
        const auto d_swap = cohens_d(low, high);
        for (std::size_t j = 0; j < k; ++j) {
            CHECK(s_swap[j] == -s[j]);
            CHECK(d_swap[j] == -d[j]);
        }

        // Shift by a constant row; grid values keep the f32 storage exact.
        auto hs = high, ls = low;
        for (std::size_t j = 0; j < k; ++j) {
            const float c = static_cast<float>(static_cast<int>(rng() % 9) - 4) * 0.5f;
            for (std::size_t i = 0; i < hs.n_samples; ++i) hs.at(i, j) += c;
            for (std::size_t i = 0; i < ls.n_samples; ++i) ls.at(i, j) += c;
        }
        CHECK(max_abs_diff(cohens_d(hs, ls), d) <= 1e-9);

        auto hc = high, lc = low;
        const float c = 4.0f;
        for (auto &v : hc.data) v *= c;
        for (auto &v : lc.data) v *= c;
        const auto sc = build_steering_vector(hc, lc);
        const auto dc = cohens_d(hc, lc);
        for (std::size_t j = 0; j < k; ++j) CHECK(sc[j] == doctest::Approx(c * s[j]).epsilon(1e-12));
        CHECK(max_abs_diff(dc, d) <= 1e-9);
    }
}

TEST_CASE("stats CSV round-trips exactly") {
    std::mt19937_64 rng(8);
    ActivationDump dump;
    dump.trait = "agreeableness";
    for (int l : {2, 5}) {
        LayerActivations layer;
        layer.layer_index = l;
        layer.high = oracle::random_matrix(rng, l, H, 6, 5);
        layer.low = oracle::random_matrix(rng, l, L, 6, 5);
        dump.layers.push_back(std::move(layer));
    }
    const auto stats = compute_all_stats(dump);
    std::stringstream csv;
    write_stats_csv(csv, stats);
    const auto back = read_stats_csv(csv);
    REQUIRE(back.size() == 2);
    for (std::size_t i = 0; i < 2; ++i) {
        CHECK(back[i].layer_index == stats[i].layer_index);
        CHECK(back[i].steering == stats[i].steering);
        CHECK(back[i].cohens_d == stats[i].cohens_d);
        CHECK(back[i].std_low == stats[i].std_low);
    }

    std::istringstream bad("layer,neuron,mean_high,mean_low,std_high,std_low,s,d\n0,1,1,1,1,1,1,1\n");
    CHECK_THROWS_AS(read_stats_csv(bad), ValidationError);
}
