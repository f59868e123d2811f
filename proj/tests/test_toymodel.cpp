#include <doctest.h>

#include "neuron_steer/error.hpp"
#include "neuron_steer/select.hpp"
#include "neuron_steer/toymodel.hpp"

#include <cmath>
#include <cstring>

using namespace neuron_steer;

namespace {

bool same_bits(const std::vector<double> &a, const std::vector<double> &b) {
    return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

InterventionConfig single_edit(int layer, std::size_t idx, double delta) {
    InterventionConfig c;
    c.trait = "openness";
    c.gamma = 1.0;
    c.layers.push_back({layer, {{idx, delta}}});
    return c;
}

} // namespace

TEST_CASE("toy model forward is deterministic and shaped") {
    const ToyModel model({4, 32, 128, 64, 7});
    const std::vector<int> tokens{1, 5, 9, 33, 2};
    const auto a = model.forward_capture(tokens);
    const auto b = ToyModel({4, 32, 128, 64, 7}).forward_capture(tokens);
    REQUIRE(a.size() == 4);
    for (std::size_t l = 0; l < 4; ++l) {
        CHECK(a[l].size() == 128);
        CHECK(same_bits(a[l], b[l]));
    }
    CHECK_FALSE(same_bits(a[0], ToyModel({4, 32, 128, 64, 8}).forward_capture(tokens)[0]));
}

TEST_CASE("toy model rejects bad input") {
    const ToyModel model({2, 8, 16, 16, 1});
    CHECK_THROWS_AS(model.forward(std::vector<int>{}), ValidationError);
    CHECK_THROWS_AS(model.forward(std::vector<int>{16}), ValidationError);
    CHECK_THROWS_AS(model.forward_intervened(std::vector<int>{1}, single_edit(0, 16, 1.0)), ValidationError);
    CHECK_THROWS_AS(model.forward_intervened(std::vector<int>{1}, single_edit(2, 0, 1.0)), ValidationError);
    CHECK_THROWS_AS(ToyModel({0, 8, 16, 16, 1}), ValidationError);
}

TEST_CASE("empty and zero-gamma configs leave logits bitwise unchanged") {
    const ToyModel model({4, 32, 128, 64, 11});
    const std::vector<int> tokens{3, 40, 41, 60};
    const auto plain = model.forward(tokens);

    InterventionConfig empty;
    CHECK(same_bits(model.forward_intervened(tokens, empty).logits, plain.logits));

    InterventionConfig zero;
    zero.layers.push_back({1, {{7, 0.0}, {9, 0.0}}});
    const auto z = model.forward_intervened(tokens, zero);
    CHECK(same_bits(z.logits, plain.logits));
}

TEST_CASE("single-neuron edit shows up exactly at the capture point") {
    const ToyModel model({4, 32, 128, 64, 11});
    const std::vector<int> tokens{3, 40, 41, 60, 12};
    const auto plain = model.forward(tokens);
    const auto edited = model.forward_intervened(tokens, single_edit(1, 7, 3.0));

    CHECK(same_bits(edited.captures[0], plain.captures[0]));
    CHECK(same_bits(edited.pre_edit[1], plain.captures[1]));
    for (std::size_t k = 0; k < 128; ++k) {
        if (k == 7)
            CHECK(edited.captures[1][k] == plain.captures[1][k] + 3.0);
        else
            CHECK(edited.captures[1][k] == plain.captures[1][k]);
    }
    CHECK_FALSE(same_bits(edited.logits, plain.logits));
}

TEST_CASE("captured activations equal apply(pre-edit, config) on every configured layer") {
    const ToyModel model({4, 32, 128, 64, 21});
    InterventionConfig config;
    config.layers.push_back({0, {{1, 0.5}, {64, -1.25}}});
    config.layers.push_back({2, {{3, 2.0}, {127, 0.75}}});
    const std::vector<int> tokens{17, 2, 55, 54};
    const auto r = model.forward_intervened(tokens, config);
    for (const auto &layer : config.layers)
        CHECK(same_bits(r.captures[layer.layer_index], apply_edits(r.pre_edit[layer.layer_index], layer)));
    CHECK(same_bits(r.captures[1], r.pre_edit[1]));
}

TEST_CASE("enhance raises the dot product with the restricted steering vector") {
    const ToyModel model({4, 32, 128, 64, 5});
    const std::vector<int> tokens{1, 2, 3, 50};
    const std::vector<double> s{0.3, -0.2, 0.7};
    LayerEdits edits{2, {}};
    const double gamma = 1.5;
    for (std::size_t i = 0; i < s.size(); ++i) edits.edits.push_back({10 + i, gamma * s[i]});
    InterventionConfig config;
    config.gamma = gamma;
    config.layers.push_back(edits);

    const auto r = model.forward_intervened(tokens, config);
    double before = 0.0, after = 0.0, norm2 = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        before += s[i] * r.pre_edit[2][10 + i];
        after += s[i] * r.captures[2][10 + i];
        norm2 += s[i] * s[i];
    }
    CHECK(after > before);
    CHECK(after - before == doctest::Approx(gamma * norm2).epsilon(1e-12));
}

TEST_CASE("toy prompts and capture dump") {
    const ToyModelConfig cfg{3, 16, 24, 32, 4};
    const ToyModel model(cfg);
    const auto prompts = make_toy_prompts(cfg, 6, 9);
    REQUIRE(prompts.size() == 6);
    for (const auto &p : prompts) {
        CHECK(p.high.size() == p.low.size());
        CHECK(p.high[0] < 8);
        CHECK(p.low[0] >= 8);
        CHECK(p.low[0] < 16);
        CHECK(std::equal(p.high.begin() + 3, p.high.end(), p.low.begin() + 3));
    }
    const int layers[] = {0, 2};
    const auto dump = capture_dump(model, prompts, "extraversion", layers);
    CHECK(dump.layers.size() == 2);
    CHECK(dump.n_neurons() == 24);
    CHECK(dump.layers[1].high.n_samples == 6);
    CHECK(dump.layers[1].high.at(2, 5) == static_cast<float>(model.forward_capture(prompts[2].high)[2][5]));
    CHECK(bitwise_equal(decode_dump(encode_dump(dump)), dump));
}

TEST_CASE("plant produces mirrored planted means and validates its spec") {
    PlantSpec spec;
    spec.layers = {0, 3};
    spec.n_neurons = 16;
    spec.n_pairs = 400;
    spec.planted_high = {{3, 2}};
    spec.planted_low = {{3, 5}};
    spec.seed = 1;
    const auto dump = plant(spec);
    REQUIRE(dump.layers.size() == 2);
    const auto &l3 = dump.layer(3);
    auto mean = [](const ActivationMatrix &m, std::size_t k) {
        double s = 0;
        for (std::size_t i = 0; i < m.n_samples; ++i) s += m.at(i, k);
        return s / static_cast<double>(m.n_samples);
    };
    CHECK(mean(l3.high, 2) == doctest::Approx(4.0).epsilon(0.05));
    CHECK(mean(l3.low, 2) == doctest::Approx(-4.0).epsilon(0.05));
    CHECK(mean(l3.high, 5) == doctest::Approx(-4.0).epsilon(0.05));
    CHECK(std::abs(mean(l3.high, 0)) < 0.25);
    CHECK(bitwise_equal(plant(spec), dump));

    auto overlap = spec;
    overlap.planted_low.insert({3, 2});
    CHECK_THROWS_AS(plant(overlap), ValidationError);
    auto outside = spec;
    outside.planted_high.insert({1, 0});
    CHECK_THROWS_AS(plant(outside), ValidationError);
}

TEST_CASE("null plant selects nothing at tau_d 0.8") {
    auto spec = random_plant_spec(128, {0, 1}, 5, 5, 0.0, 1.0, 1000, 3);
    const auto dump = plant(spec);
    SelectionParams p;
    p.tau_d = 0.8;
    p.q = 0.9;
    p.target_layers = {0, 1};
    const auto sel = select_all(compute_all_stats(dump), p, "openness");
    CHECK(sel.total_high + sel.total_low == 0);
}

TEST_CASE("random plant spec is seeded and disjoint") {
    const auto a = random_plant_spec(64, {1, 2}, 4, 3, 4.0, 1.0, 10, 99);
    const auto b = random_plant_spec(64, {1, 2}, 4, 3, 4.0, 1.0, 10, 99);
    CHECK(a.planted_high == b.planted_high);
    CHECK(a.planted_low == b.planted_low);
    CHECK(a.planted_high.size() == 8);
    CHECK(a.planted_low.size() == 6);
    CHECK_THROWS_AS(random_plant_spec(4, {0}, 3, 3, 4.0, 1.0, 10, 1), ValidationError);
}

TEST_CASE("recovery evaluation and oracle JSON") {
    PlantSpec spec;
    spec.layers = {0, 1};
    spec.n_neurons = 10;
    spec.planted_high = {{0, 1}, {0, 2}, {1, 4}};
    spec.planted_low = {{0, 3}};

    NeuronSelection sel;
    LayerSelection l0;
    l0.layer_index = 0;
    l0.high = {{1, 2.0, 1.0}, {5, 2.0, 1.0}};   // 1 recovered, 5 unplanted
    l0.low = {{2, -2.0, -1.0}, {3, -2.0, -1.0}}; // 2 is misdirected, 3 recovered
    sel.layers.push_back(l0);
    const auto r = evaluate_recovery(spec, sel);
    CHECK(r.planted_high == 2); // layer 1 not selected
    CHECK(r.recovered_high == 1);
    CHECK(r.planted_low == 1);
    CHECK(r.recovered_low == 1);
    CHECK(r.unplanted_total == 1);
    CHECK(r.max_unplanted_per_layer == 1);
    CHECK(r.overall_rate() == doctest::Approx(2.0 / 3.0));

    const auto back = plant_spec_from_json(plant_spec_to_json(spec));
    CHECK(back.planted_high == spec.planted_high);
    CHECK(back.planted_low == spec.planted_low);
    CHECK(back.layers == spec.layers);
}
