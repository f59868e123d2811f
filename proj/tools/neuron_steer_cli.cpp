// neuron-steer: file-based pipeline stages over the neuron_steer library.
//
//   gen-synthetic | toy-capture   -> DPNA dump
//   build-vectors                 dump -> stats CSV
//   select                        stats CSV -> selection JSON
//   make-config                   selection JSON + stats CSV -> config JSON
//   intervene                     dump + config -> dump
//   toy-run                       tokens (+ config) -> logits/captures JSON
//   pca | census | scatter        diagnostics
//   report                        selection/census/separation bundle
//
// Exit codes: 0 success, 1 usage error, 2 validation error, 3 I/O error.

#include "manifest.hpp"

#include "neuron_steer/analysis.hpp"
#include "neuron_steer/dump.hpp"
#include "neuron_steer/error.hpp"
#include "neuron_steer/intervene.hpp"
#include "neuron_steer/select.hpp"
#include "neuron_steer/stats.hpp"
#include "neuron_steer/text.hpp"
#include "neuron_steer/toymodel.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace neuron_steer;
using cli::RunManifest;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitIo = 3;

// "12-31", "0,2,5-7"
std::vector<int> parse_layers(const std::string &text) {
    std::vector<int> out;
    for (auto part : split(text, ',')) {
        if (part.empty()) continue;
        const auto dash = part.find('-', 1);
        if (dash == std::string_view::npos) {
            out.push_back(static_cast<int>(parse_int(part)));
            continue;
        }
        const auto a = parse_int(part.substr(0, dash));
        const auto b = parse_int(part.substr(dash + 1));
        if (b < a) throw ValidationError("bad layer range '" + std::string(part) + "'");
        for (auto l = a; l <= b; ++l) out.push_back(static_cast<int>(l));
    }
    std::sort(out.begin(), out.end());
    if (std::adjacent_find(out.begin(), out.end()) != out.end())
        throw ValidationError("duplicate layers in '" + text + "'");
    return out;
}

std::vector<double> parse_doubles(const std::string &text) {
    std::vector<double> out;
    for (auto part : split(text, ','))
        if (!part.empty()) out.push_back(parse_double(part));
    return out;
}

std::string read_text(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path &path, const std::string &text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("failed writing " + path.string());
}

std::vector<LayerStats> load_stats(const fs::path &path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return read_stats_csv(in);
}

std::string fmt(double v) { return format_double(v); }

std::string fixed(double v, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
    return buf;
}

std::string join_layers(const std::vector<int> &layers) {
    std::string out;
    for (std::size_t i = 0; i < layers.size(); ++i) out += (i ? "," : "") + std::to_string(layers[i]);
    return out;
}

struct ToyFlags {
    int n_layers = 4;
    int d_model = 32;
    int d_mlp = 128;
    int vocab = 64;
    std::uint64_t seed = 0;

    void add_to(CLI::App *cmd) {
        cmd->add_option("--seed", seed, "Model weight seed")->capture_default_str();
        cmd->add_option("--n-layers", n_layers, "Number of blocks")->capture_default_str();
        cmd->add_option("--d-model", d_model, "Residual width")->capture_default_str();
        cmd->add_option("--d-mlp", d_mlp, "MLP width (neurons per layer)")->capture_default_str();
        cmd->add_option("--vocab", vocab, "Vocabulary size")->capture_default_str();
    }
    ToyModelConfig config() const { return {n_layers, d_model, d_mlp, vocab, seed}; }
    void record(RunManifest &m) const {
        m.params["seed"] = std::to_string(seed);
        m.params["n_layers"] = std::to_string(n_layers);
        m.params["d_model"] = std::to_string(d_model);
        m.params["d_mlp"] = std::to_string(d_mlp);
        m.params["vocab"] = std::to_string(vocab);
    }
};

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Dual-criterion neuron selection and sparse activation steering"};
    app.require_subcommand(1);
    app.set_version_flag("--version", NEURON_STEER_VERSION);

    // gen-synthetic ---------------------------------------------------------
    struct {
        std::string out, oracle, layers = "0-3", trait = "openness", model_id = "synthetic";
        std::uint64_t seed = 0;
        std::size_t pairs = 1000, neurons = 512, planted_high = 10, planted_low = 10;
        double shift = 4.0, noise = 1.0;
    } gen;
    auto *gen_cmd = app.add_subcommand("gen-synthetic", "Write a planted-neuron synthetic dump and its oracle");
    gen_cmd->add_option("--out", gen.out, "Output DPNA dump")->required();
    gen_cmd->add_option("--oracle", gen.oracle, "Planted-set oracle JSON (default: <out>.oracle.json)");
    gen_cmd->add_option("--seed", gen.seed)->capture_default_str();
    gen_cmd->add_option("--pairs", gen.pairs, "Samples per direction")->capture_default_str();
    gen_cmd->add_option("--neurons", gen.neurons, "Neurons per layer (K)")->capture_default_str();
    gen_cmd->add_option("--layers", gen.layers, "Layers, e.g. 12-31")->capture_default_str();
    gen_cmd->add_option("--planted-high", gen.planted_high, "Planted high neurons per layer")->capture_default_str();
    gen_cmd->add_option("--planted-low", gen.planted_low, "Planted low neurons per layer")->capture_default_str();
    gen_cmd->add_option("--shift", gen.shift, "Mean offset on planted neurons")->capture_default_str();
    gen_cmd->add_option("--noise", gen.noise, "Noise standard deviation")->capture_default_str();
    gen_cmd->add_option("--trait", gen.trait)->capture_default_str();
    gen_cmd->add_option("--model-id", gen.model_id)->capture_default_str();
    gen_cmd->callback([&] {
        auto spec = random_plant_spec(gen.neurons, parse_layers(gen.layers), gen.planted_high, gen.planted_low,
                                      gen.shift, gen.noise, gen.pairs, gen.seed);
        spec.trait = gen.trait;
        spec.model_id = gen.model_id;
        spec.validate();
        const fs::path oracle = gen.oracle.empty() ? fs::path(gen.out + ".oracle.json") : fs::path(gen.oracle);
        write_dump(gen.out, plant(spec));
        write_text(oracle, plant_spec_to_json(spec));

        RunManifest m{"gen-synthetic", {}, {}, {gen.out, oracle}};
        m.params = {{"seed", std::to_string(gen.seed)}, {"pairs", std::to_string(gen.pairs)},
                    {"neurons", std::to_string(gen.neurons)}, {"layers", join_layers(spec.layers)},
                    {"planted_high", std::to_string(gen.planted_high)},
                    {"planted_low", std::to_string(gen.planted_low)}, {"shift", fmt(gen.shift)},
                    {"noise", fmt(gen.noise)}, {"trait", gen.trait}};
        m.write(gen.out);
    });

    // toy-capture -----------------------------------------------------------
    ToyFlags toy_cap;
    struct {
        std::string out, layers, trait = "openness";
        std::size_t pairs = 1000;
        std::uint64_t prompt_seed = 1;
    } cap;
    auto *cap_cmd = app.add_subcommand("toy-capture", "Capture a contrastive dump from the toy model");
    toy_cap.add_to(cap_cmd);
    cap_cmd->add_option("--out", cap.out, "Output DPNA dump")->required();
    cap_cmd->add_option("--pairs", cap.pairs, "Prompt pairs")->capture_default_str();
    cap_cmd->add_option("--prompt-seed", cap.prompt_seed)->capture_default_str();
    cap_cmd->add_option("--layers", cap.layers, "Layers to capture (default: all)");
    cap_cmd->add_option("--trait", cap.trait)->capture_default_str();
    cap_cmd->callback([&] {
        const ToyModel model(toy_cap.config());
        const auto prompts = make_toy_prompts(model.config(), cap.pairs, cap.prompt_seed);
        const auto layers = cap.layers.empty() ? std::vector<int>{} : parse_layers(cap.layers);
        write_dump(cap.out, capture_dump(model, prompts, cap.trait, layers));
        RunManifest m{"toy-capture", {}, {}, {cap.out}};
        toy_cap.record(m);
        m.params["pairs"] = std::to_string(cap.pairs);
        m.params["prompt_seed"] = std::to_string(cap.prompt_seed);
        m.params["layers"] = cap.layers.empty() ? "all" : cap.layers;
        m.params["trait"] = cap.trait;
        m.write(cap.out);
    });

    // build-vectors ---------------------------------------------------------
    struct {
        std::string dump, out, layers;
    } bv;
    auto *bv_cmd = app.add_subcommand("build-vectors", "Steering vectors and Cohen's d per layer -> stats CSV");
    bv_cmd->add_option("--dump", bv.dump, "Input DPNA dump")->required();
    bv_cmd->add_option("--out", bv.out, "Output stats CSV")->required();
    bv_cmd->add_option("--layers", bv.layers, "Layers (default: all in dump)");
    bv_cmd->callback([&] {
        const auto dump = read_dump(bv.dump);
        const auto layers = bv.layers.empty() ? std::vector<int>{} : parse_layers(bv.layers);
        const auto stats = compute_all_stats(dump, layers);
        std::ostringstream csv;
        write_stats_csv(csv, stats);
        write_text(bv.out, csv.str());
        RunManifest m{"build-vectors", {{"layers", bv.layers.empty() ? "all" : bv.layers}}, {bv.dump}, {bv.out}};
        m.write(bv.out);
    });

    // select ----------------------------------------------------------------
    struct {
        std::string stats, out, layers, trait;
        double q = 0.995, tau_d = 0.8;
    } sel;
    auto *sel_cmd = app.add_subcommand("select", "Dual-criterion neuron selection -> selection JSON");
    sel_cmd->add_option("--stats", sel.stats, "Stats CSV from build-vectors")->required();
    sel_cmd->add_option("--out", sel.out, "Output selection JSON")->required();
    sel_cmd->add_option("--trait", sel.trait, "Trait name recorded in the selection")->required();
    sel_cmd->add_option("--q", sel.q, "Quantile level of |s| per layer")->capture_default_str();
    sel_cmd->add_option("--tau-d", sel.tau_d, "Cohen's d threshold")->capture_default_str();
    sel_cmd->add_option("--layers", sel.layers, "Target layers (default: all in stats)");
    sel_cmd->callback([&] {
        if (!is_big_five_trait(sel.trait)) throw ValidationError("trait must be a Big Five trait name");
        const auto stats = load_stats(sel.stats);
        SelectionParams params;
        params.q = sel.q;
        params.tau_d = sel.tau_d;
        if (sel.layers.empty())
            for (const auto &s : stats) params.target_layers.push_back(s.layer_index);
        else
            params.target_layers = parse_layers(sel.layers);
        write_text(sel.out, selection_to_json(select_all(stats, params, sel.trait)));
        RunManifest m{"select",
                      {{"q", fmt(sel.q)}, {"tau_d", fmt(sel.tau_d)}, {"layers", join_layers(params.target_layers)},
                       {"trait", sel.trait}},
                      {sel.stats},
                      {sel.out}};
        m.write(sel.out);
    });

    // make-config -----------------------------------------------------------
    struct {
        std::string selection, stats, out, mode = "uniform", direction = "enhance";
        double gamma = 1.0;
    } mc;
    auto *mc_cmd = app.add_subcommand("make-config", "Sparse intervention config from a selection");
    mc_cmd->add_option("--selection", mc.selection, "Selection JSON")->required();
    mc_cmd->add_option("--stats", mc.stats, "Stats CSV (steering vectors)")->required();
    mc_cmd->add_option("--out", mc.out, "Output config JSON")->required();
    mc_cmd->add_option("--gamma", mc.gamma, "Intervention strength")->capture_default_str();
    mc_cmd->add_option("--mode", mc.mode, "uniform | weighted")->capture_default_str();
    mc_cmd->add_option("--direction", mc.direction, "enhance | suppress")->capture_default_str();
    mc_cmd->callback([&] {
        const auto selection = selection_from_json(read_text(mc.selection));
        const auto stats = load_stats(mc.stats);
        const auto config = build_config(selection, steering_by_layer(stats), mc.gamma,
                                         parse_intervention_mode(mc.mode), parse_steer_direction(mc.direction));
        write_text(mc.out, config_to_json(config));
        RunManifest m{"make-config",
                      {{"gamma", fmt(mc.gamma)}, {"mode", mc.mode}, {"direction", mc.direction}},
                      {mc.selection, mc.stats},
                      {mc.out}};
        m.write(mc.out);
    });

    // intervene -------------------------------------------------------------
    struct {
        std::string dump, config, out;
    } iv;
    auto *iv_cmd = app.add_subcommand("intervene", "Apply a config to every sample of a dump");
    iv_cmd->add_option("--dump", iv.dump, "Input DPNA dump")->required();
    iv_cmd->add_option("--config", iv.config, "Config JSON")->required();
    iv_cmd->add_option("--out", iv.out, "Output DPNA dump")->required();
    iv_cmd->callback([&] {
        auto dump = read_dump(iv.dump);
        const auto config = config_from_json(read_text(iv.config));
        std::vector<double> row;
        for (auto &layer : dump.layers) {
            const auto *edits = config.find_layer(layer.layer_index);
            if (!edits) continue;
            for (auto *m : {&layer.high, &layer.low}) {
                for (std::size_t i = 0; i < m->n_samples; ++i) {
                    auto values = m->row(i);
                    row.assign(values.begin(), values.end());
                    apply_edits_in_place(row, *edits);
                    for (std::size_t k = 0; k < row.size(); ++k) values[k] = static_cast<float>(row[k]);
                }
            }
        }
        for (const auto &l : config.layers)
            if (!dump.find_layer(l.layer_index))
                std::cerr << "warning: config layer " << l.layer_index << " is not in the dump\n";
        write_dump(iv.out, dump);
        RunManifest m{"intervene", {}, {iv.dump, iv.config}, {iv.out}};
        m.write(iv.out);
    });

    // toy-run ---------------------------------------------------------------
    ToyFlags toy_run;
    struct {
        std::string tokens, config, out;
    } tr;
    auto *tr_cmd = app.add_subcommand("toy-run", "Toy-model forward pass with an optional config");
    toy_run.add_to(tr_cmd);
    tr_cmd->add_option("--tokens", tr.tokens, "Comma-separated token ids")->required();
    tr_cmd->add_option("--config", tr.config, "Config JSON");
    tr_cmd->add_option("--out", tr.out, "Output JSON")->required();
    tr_cmd->callback([&] {
        std::vector<int> tokens;
        for (auto t : split(tr.tokens, ','))
            if (!t.empty()) tokens.push_back(static_cast<int>(parse_int(t)));
        const ToyModel model(toy_run.config());
        const InterventionConfig config = tr.config.empty() ? InterventionConfig{} : config_from_json(read_text(tr.config));
        const auto result = model.forward_intervened(tokens, config);
        nlohmann::ordered_json j{{"tokens", tokens},
                                 {"logits", result.logits},
                                 {"captures", result.captures},
                                 {"pre_edit", result.pre_edit}};
        write_text(tr.out, j.dump() + "\n");
        RunManifest m{"toy-run", {}, {}, {tr.out}};
        toy_run.record(m);
        m.params["tokens"] = tr.tokens;
        if (!tr.config.empty()) m.inputs.push_back(tr.config);
        m.write(tr.out);
    });

    // pca -------------------------------------------------------------------
    struct {
        std::string dump, out_prefix, layers, method = "auto";
    } pc;
    auto *pc_cmd = app.add_subcommand("pca", "Top-2 PCA per layer: CSV, SVG and separation summary");
    pc_cmd->add_option("--dump", pc.dump, "Input DPNA dump")->required();
    pc_cmd->add_option("--out-prefix", pc.out_prefix, "Output path prefix")->required();
    pc_cmd->add_option("--layers", pc.layers, "Layers (default: all in dump)");
    pc_cmd->add_option("--method", pc.method, "auto | covariance | gram")->capture_default_str();
    pc_cmd->callback([&] {
        PcaMethod method = PcaMethod::Auto;
        if (pc.method == "covariance") method = PcaMethod::Covariance;
        else if (pc.method == "gram") method = PcaMethod::Gram;
        else if (pc.method != "auto") throw ValidationError("method must be auto, covariance or gram");
        const auto dump = read_dump(pc.dump);
        const auto layers = pc.layers.empty() ? dump.layer_indices() : parse_layers(pc.layers);

        RunManifest m{"pca", {{"layers", join_layers(layers)}, {"method", pc.method}}, {pc.dump}, {}};
        std::ostringstream summary;
        summary << "layer,explained_variance_pc1,explained_variance_pc2,separation\n";
        for (int l : layers) {
            const auto &layer = dump.layer(l);
            const auto r = pca_layer(layer.high, layer.low, method);
            const std::string base = pc.out_prefix + "_layer" + std::to_string(l);
            std::ostringstream csv, svg;
            write_pca_csv(csv, r);
            write_pca_svg(svg, r);
            write_text(base + ".csv", csv.str());
            write_text(base + ".svg", svg.str());
            m.outputs.push_back(base + ".csv");
            m.outputs.push_back(base + ".svg");
            const double score = separation_score(r);
            summary << l << ',' << fmt(r.explained_variance_ratio[0]) << ',' << fmt(r.explained_variance_ratio[1])
                    << ',' << fmt(score) << '\n';
            std::cout << "layer " << l << ": PC1 " << fixed(100 * r.explained_variance_ratio[0], 1) << "%, PC2 "
                      << fixed(100 * r.explained_variance_ratio[1], 1) << "%, separation " << fixed(score, 3)
                      << '\n';
        }
        const std::string summary_path = pc.out_prefix + "_summary.csv";
        write_text(summary_path, summary.str());
        m.outputs.insert(m.outputs.begin(), summary_path);
        m.write(summary_path);
    });

    // census ----------------------------------------------------------------
    struct {
        std::string stats, out, layers, thresholds = "0.5,0.8,1.0";
    } cs;
    auto *cs_cmd = app.add_subcommand("census", "Count neurons above |d| thresholds");
    cs_cmd->add_option("--stats", cs.stats, "Stats CSV")->required();
    cs_cmd->add_option("--out", cs.out, "Output text table")->required();
    cs_cmd->add_option("--thresholds", cs.thresholds, "Ascending thresholds")->capture_default_str();
    cs_cmd->add_option("--layers", cs.layers, "Layers (default: all in stats)");
    cs_cmd->callback([&] {
        const auto stats = load_stats(cs.stats);
        const auto thresholds = parse_doubles(cs.thresholds);
        const auto layers = cs.layers.empty() ? std::vector<int>{} : parse_layers(cs.layers);
        std::string text;
        for (const auto &st : stats) {
            if (!layers.empty() && !std::binary_search(layers.begin(), layers.end(), st.layer_index)) continue;
            text += "layer " + std::to_string(st.layer_index) + " (" + group_thousands(static_cast<long long>(st.n_neurons)) +
                    " neurons)\n";
            text += render_census(census(st.cohens_d, thresholds));
        }
        write_text(cs.out, text);
        std::cout << text;
        RunManifest m{"census", {{"thresholds", cs.thresholds}, {"layers", cs.layers.empty() ? "all" : cs.layers}},
                      {cs.stats}, {cs.out}};
        m.write(cs.out);
    });

    // scatter ---------------------------------------------------------------
    struct {
        std::string stats, out_prefix;
        int layer = 0;
        double q = 0.995, tau_d = 0.8;
    } sc;
    auto *sc_cmd = app.add_subcommand("scatter", "Dual-criterion categorisation of one layer: CSV and SVG");
    sc_cmd->add_option("--stats", sc.stats, "Stats CSV")->required();
    sc_cmd->add_option("--layer", sc.layer, "Layer")->required();
    sc_cmd->add_option("--out-prefix", sc.out_prefix, "Output path prefix")->required();
    sc_cmd->add_option("--q", sc.q)->capture_default_str();
    sc_cmd->add_option("--tau-d", sc.tau_d)->capture_default_str();
    sc_cmd->callback([&] {
        const auto stats = load_stats(sc.stats);
        auto it = std::find_if(stats.begin(), stats.end(), [&](const LayerStats &s) { return s.layer_index == sc.layer; });
        if (it == stats.end()) throw ValidationError("layer " + std::to_string(sc.layer) + " not in stats");
        SelectionParams params;
        params.q = sc.q;
        params.tau_d = sc.tau_d;
        const auto scatter = dual_scatter(*it, params);
        std::ostringstream csv, svg;
        write_scatter_csv(csv, scatter);
        write_scatter_svg(svg, scatter);
        write_text(sc.out_prefix + ".csv", csv.str());
        write_text(sc.out_prefix + ".svg", svg.str());
        for (auto c : {ScatterCategory::Both, ScatterCategory::OnlyQuantile, ScatterCategory::OnlyEffectSize,
                       ScatterCategory::Neither})
            std::cout << to_string(c) << ": " << scatter.count(c) << '\n';
        RunManifest m{"scatter", {{"layer", std::to_string(sc.layer)}, {"q", fmt(sc.q)}, {"tau_d", fmt(sc.tau_d)}},
                      {sc.stats}, {sc.out_prefix + ".csv", sc.out_prefix + ".svg"}};
        m.write(sc.out_prefix + ".csv");
    });

    // report ----------------------------------------------------------------
    struct {
        std::string stats, selection, dump, oracle, out, thresholds = "0.5,0.8,1.0";
        double baseline = 20000;
    } rp;
    auto *rp_cmd = app.add_subcommand("report", "Selection totals, census and separation in one bundle");
    rp_cmd->add_option("--stats", rp.stats, "Stats CSV")->required();
    rp_cmd->add_option("--selection", rp.selection, "Selection JSON")->required();
    rp_cmd->add_option("--out", rp.out, "Output report (text); a CSV is written alongside")->required();
    rp_cmd->add_option("--dump", rp.dump, "Dump for PCA separation scores");
    rp_cmd->add_option("--oracle", rp.oracle, "Plant oracle JSON for recovery figures");
    rp_cmd->add_option("--thresholds", rp.thresholds, "Census thresholds")->capture_default_str();
    rp_cmd->add_option("--baseline", rp.baseline, "Reference edited-neuron count per direction")
        ->capture_default_str();
    rp_cmd->callback([&] {
        const auto stats = load_stats(rp.stats);
        const auto selection = selection_from_json(read_text(rp.selection));
        const auto thresholds = parse_doubles(rp.thresholds);
        if (!(rp.baseline > 0)) throw ValidationError("baseline must be positive");
        RunManifest m{"report", {{"thresholds", rp.thresholds}, {"baseline", fmt(rp.baseline)}},
                      {rp.stats, rp.selection}, {}};

        std::optional<ActivationDump> dump;
        if (!rp.dump.empty()) {
            dump = read_dump(rp.dump);
            m.inputs.push_back(rp.dump);
        }

        std::ostringstream txt, csv;
        txt << "trait: " << selection.trait << "\nq = " << fmt(selection.params.q)
            << ", tau_d = " << fmt(selection.params.tau_d) << "\n\n";
        txt << "Selected neurons per layer\nlayer\tN+\tN-\ttotal\t|s| threshold";
        if (dump) txt << "\tseparation";
        txt << '\n';
        csv << "layer,n_high,n_low,total,magnitude_threshold";
        for (double t : thresholds) csv << ",census_gt_" << fmt(t);
        if (dump) csv << ",separation";
        csv << '\n';

        for (const auto &layer : selection.layers) {
            auto st = std::find_if(stats.begin(), stats.end(),
                                   [&](const LayerStats &s) { return s.layer_index == layer.layer_index; });
            if (st == stats.end())
                throw ValidationError("selection layer " + std::to_string(layer.layer_index) + " missing from stats");
            double separation = 0.0;
            if (dump) {
                const auto &l = dump->layer(layer.layer_index);
                separation = separation_score(pca_layer(l.high, l.low));
            }
            txt << layer.layer_index << '\t' << layer.high.size() << '\t' << layer.low.size() << '\t' << layer.size()
                << '\t' << fixed(layer.magnitude_threshold, 6);
            if (dump) txt << '\t' << fixed(separation, 3);
            txt << '\n';
            csv << layer.layer_index << ',' << layer.high.size() << ',' << layer.low.size() << ',' << layer.size()
                << ',' << fmt(layer.magnitude_threshold);
            for (const auto &row : census(st->cohens_d, thresholds)) csv << ',' << row.count;
            if (dump) csv << ',' << fmt(separation);
            csv << '\n';
        }
        const double n_layers = std::max<std::size_t>(1, selection.layers.size());
        txt << "Average\t" << fixed(selection.total_high / n_layers, 1) << '\t'
            << fixed(selection.total_low / n_layers, 1) << '\t'
            << fixed((selection.total_high + selection.total_low) / n_layers, 1) << "\n\n";

        const double reduction =
            1.0 - static_cast<double>(selection.total_high + selection.total_low) / (2.0 * rp.baseline);
        txt << "Totals\nN+ " << group_thousands(static_cast<long long>(selection.total_high)) << ", N- "
            << group_thousands(static_cast<long long>(selection.total_low)) << ", reference "
            << group_thousands(static_cast<long long>(rp.baseline)) << " per direction, reduction "
            << fixed(100.0 * reduction, 1) << "%\n\n";

        txt << "Cohen's d census\n";
        for (const auto &layer : selection.layers) {
            const auto &st = *std::find_if(stats.begin(), stats.end(),
                                           [&](const LayerStats &s) { return s.layer_index == layer.layer_index; });
            txt << "layer " << layer.layer_index << '\n' << render_census(census(st.cohens_d, thresholds));
        }

        if (!rp.oracle.empty()) {
            const auto spec = plant_spec_from_json(read_text(rp.oracle));
            m.inputs.push_back(rp.oracle);
            const auto rec = evaluate_recovery(spec, selection);
            txt << "\nPlanted recovery\nhigh " << rec.recovered_high << '/' << rec.planted_high << " ("
                << fixed(100.0 * rec.high_rate(), 1) << "%), low " << rec.recovered_low << '/' << rec.planted_low
                << " (" << fixed(100.0 * rec.low_rate(), 1) << "%), overall " << fixed(100.0 * rec.overall_rate(), 1)
                << "%\nunplanted selected: " << rec.unplanted_total << " total, at most "
                << rec.max_unplanted_per_layer << " per layer\n";
        }

        const std::string csv_path = rp.out + ".csv";
        write_text(rp.out, txt.str());
        write_text(csv_path, csv.str());
        std::cout << txt.str();
        m.outputs = {rp.out, csv_path};
        m.write(rp.out);
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    } catch (const IoError &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitIo;
    } catch (const Error &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    } catch (const std::exception &e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return 0;
}
