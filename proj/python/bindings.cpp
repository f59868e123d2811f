#include "neuron_steer/analysis.hpp"
#include "neuron_steer/dump.hpp"
#include "neuron_steer/error.hpp"
#include "neuron_steer/intervene.hpp"
#include "neuron_steer/select.hpp"
#include "neuron_steer/stats.hpp"
#include "neuron_steer/toymodel.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <sstream>

namespace py = pybind11;
using namespace neuron_steer;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

ActivationMatrix to_matrix(const FloatArray &a, int layer, TraitDirection dir) {
    if (a.ndim() != 2) throw ValidationError("activation arrays must be 2-D (samples x neurons)");
    ActivationMatrix m(layer, dir, static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)));
    if (!m.data.empty()) std::memcpy(m.data.data(), a.data(), m.data.size() * sizeof(float));
    return m;
}

py::array_t<float> to_array(const ActivationMatrix &m) {
    py::array_t<float> a({m.n_samples, m.n_neurons});
    if (!m.data.empty()) std::memcpy(a.mutable_data(), m.data.data(), m.data.size() * sizeof(float));
    return a;
}

py::array_t<double> to_array(const std::vector<double> &v) {
    return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

std::vector<double> to_vector(const DoubleArray &a) {
    if (a.ndim() != 1) throw ValidationError("expected a 1-D array");
    return {a.data(), a.data() + a.size()};
}

py::array_t<double> to_array(const std::vector<std::vector<double>> &rows) {
    const std::size_t cols = rows.empty() ? 0 : rows[0].size();
    py::array_t<double> a({rows.size(), cols});
    auto view = a.mutable_unchecked<2>();
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols; ++j) view(i, j) = rows[i][j];
    return a;
}

py::dict forward_to_dict(const ForwardResult &r) {
    py::dict out;
    out["logits"] = to_array(r.logits);
    out["captures"] = to_array(r.captures);
    out["pre_edit"] = to_array(r.pre_edit);
    return out;
}

PcaMethod parse_method(const std::string &m) {
    if (m == "auto") return PcaMethod::Auto;
    if (m == "covariance") return PcaMethod::Covariance;
    if (m == "gram") return PcaMethod::Gram;
    throw ValidationError("method must be auto, covariance or gram");
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Dual-criterion neuron selection and sparse activation steering";

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    auto validation = py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<DumpError>(m, "DumpError", validation.ptr());
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    (void)error;

    // dumps
    py::class_<ActivationDump>(m, "ActivationDump")
        .def(py::init([](std::string model_id, std::string trait, const py::dict &layers) {
                 ActivationDump d;
                 d.model_id = std::move(model_id);
                 d.trait = std::move(trait);
                 for (const auto &[key, value] : layers) {
                     const int l = key.cast<int>();
                     const auto pair = value.cast<py::tuple>();
                     if (pair.size() != 2) throw ValidationError("each layer needs a (high, low) pair");
                     d.layers.push_back({l, to_matrix(pair[0].cast<FloatArray>(), l, TraitDirection::High),
                                         to_matrix(pair[1].cast<FloatArray>(), l, TraitDirection::Low)});
                 }
                 std::sort(d.layers.begin(), d.layers.end(),
                           [](const auto &a, const auto &b) { return a.layer_index < b.layer_index; });
                 validate_dump(d);
                 return d;
             }),
             py::arg("model_id"), py::arg("trait"), py::arg("layers"),
             "layers maps layer index to a (high, low) pair of float32 arrays")
        .def_readonly("model_id", &ActivationDump::model_id)
        .def_readonly("trait", &ActivationDump::trait)
        .def_property_readonly("layers", &ActivationDump::layer_indices)
        .def_property_readonly("n_neurons", &ActivationDump::n_neurons)
        .def("high", [](const ActivationDump &d, int l) { return to_array(d.layer(l).high); })
        .def("low", [](const ActivationDump &d, int l) { return to_array(d.layer(l).low); })
        .def("to_bytes",
             [](const ActivationDump &d) {
                 const auto b = encode_dump(d);
                 return py::bytes(reinterpret_cast<const char *>(b.data()), b.size());
             })
        .def_static("from_bytes",
                    [](const py::bytes &b) {
                        const std::string s = b;
                        return decode_dump(std::span(reinterpret_cast<const std::uint8_t *>(s.data()), s.size()));
                    })
        .def("__eq__", [](const ActivationDump &a, const ActivationDump &b) { return bitwise_equal(a, b); });

    m.def("read_dump", &read_dump, py::arg("path"));
    m.def("write_dump", &write_dump, py::arg("path"), py::arg("dump"));

    // stats
    py::class_<LayerStats>(m, "LayerStats")
        .def_readonly("layer_index", &LayerStats::layer_index)
        .def_readonly("n_neurons", &LayerStats::n_neurons)
        .def_property_readonly("mean_high", [](const LayerStats &s) { return to_array(s.mean_high); })
        .def_property_readonly("mean_low", [](const LayerStats &s) { return to_array(s.mean_low); })
        .def_property_readonly("std_high", [](const LayerStats &s) { return to_array(s.std_high); })
        .def_property_readonly("std_low", [](const LayerStats &s) { return to_array(s.std_low); })
        .def_property_readonly("steering", [](const LayerStats &s) { return to_array(s.steering); })
        .def_property_readonly("cohens_d", [](const LayerStats &s) { return to_array(s.cohens_d); });

    m.def("steering_vector", [](const FloatArray &high, const FloatArray &low) {
        return to_array(build_steering_vector(to_matrix(high, 0, TraitDirection::High),
                                              to_matrix(low, 0, TraitDirection::Low)));
    });
    m.def("cohens_d", [](const FloatArray &high, const FloatArray &low) {
        return to_array(cohens_d(to_matrix(high, 0, TraitDirection::High), to_matrix(low, 0, TraitDirection::Low)));
    });
    m.def(
        "compute_stats",
        [](const ActivationDump &d, const std::vector<int> &layers) { return compute_all_stats(d, layers); },
        py::arg("dump"), py::arg("layers") = std::vector<int>{}, py::call_guard<py::gil_scoped_release>());
    m.def("stats_to_csv", [](const std::vector<LayerStats> &stats) {
        std::ostringstream out;
        write_stats_csv(out, stats);
        return out.str();
    });
    m.def("stats_from_csv", [](const std::string &text) {
        std::istringstream in(text);
        return read_stats_csv(in);
    });

    // selection
    m.def(
        "quantile_threshold",
        [](const DoubleArray &values, double q) { return quantile_threshold(to_vector(values), q); },
        py::arg("values"), py::arg("q"));

    py::class_<NeuronSelection>(m, "NeuronSelection")
        .def_readonly("trait", &NeuronSelection::trait)
        .def_readonly("total_high", &NeuronSelection::total_high)
        .def_readonly("total_low", &NeuronSelection::total_low)
        .def_property_readonly("q", [](const NeuronSelection &s) { return s.params.q; })
        .def_property_readonly("tau_d", [](const NeuronSelection &s) { return s.params.tau_d; })
        .def_property_readonly("layers",
                               [](const NeuronSelection &s) {
                                   std::vector<int> out;
                                   for (const auto &l : s.layers) out.push_back(l.layer_index);
                                   return out;
                               })
        .def("high",
             [](const NeuronSelection &s, int layer) {
                 const auto *l = s.find_layer(layer);
                 if (!l) throw ValidationError("layer " + std::to_string(layer) + " not in selection");
                 std::vector<std::size_t> out;
                 for (const auto &n : l->high) out.push_back(n.index);
                 return out;
             })
        .def("low",
             [](const NeuronSelection &s, int layer) {
                 const auto *l = s.find_layer(layer);
                 if (!l) throw ValidationError("layer " + std::to_string(layer) + " not in selection");
                 std::vector<std::size_t> out;
                 for (const auto &n : l->low) out.push_back(n.index);
                 return out;
             })
        .def("threshold",
             [](const NeuronSelection &s, int layer) {
                 const auto *l = s.find_layer(layer);
                 if (!l) throw ValidationError("layer " + std::to_string(layer) + " not in selection");
                 return l->magnitude_threshold;
             })
        .def("to_json", &selection_to_json)
        .def_static("from_json", [](const std::string &text) { return selection_from_json(text); });

    m.def(
        "select",
        [](const std::vector<LayerStats> &stats, const std::string &trait, double q, double tau_d,
           std::vector<int> layers) {
            SelectionParams p;
            p.q = q;
            p.tau_d = tau_d;
            if (layers.empty())
                for (const auto &s : stats) layers.push_back(s.layer_index);
            p.target_layers = std::move(layers);
            return select_all(stats, p, trait);
        },
        py::arg("stats"), py::arg("trait"), py::arg("q") = 0.995, py::arg("tau_d") = 0.8,
        py::arg("layers") = std::vector<int>{});

    // intervention
    m.def(
        "assign_weights", [](const NeuronSelection &s) { return assign_weights(s).layers; }, py::arg("selection"));

    py::class_<InterventionConfig>(m, "InterventionConfig")
        .def(py::init<>())
        .def_readonly("trait", &InterventionConfig::trait)
        .def_readonly("gamma", &InterventionConfig::gamma)
        .def_property_readonly("direction", [](const InterventionConfig &c) { return to_string(c.direction); })
        .def_property_readonly("mode", [](const InterventionConfig &c) { return to_string(c.mode); })
        .def_property_readonly("layers",
                               [](const InterventionConfig &c) {
                                   std::vector<int> out;
                                   for (const auto &l : c.layers) out.push_back(l.layer_index);
                                   return out;
                               })
        .def("edits",
             [](const InterventionConfig &c, int layer) {
                 std::map<std::size_t, double> out;
                 if (const auto *l = c.find_layer(layer))
                     for (const auto &e : l->edits) out[e.index] = e.delta;
                 return out;
             })
        .def("to_json", &config_to_json)
        .def_static("from_json", [](const std::string &text) { return config_from_json(text); });

    m.def(
        "build_config",
        [](const NeuronSelection &sel, const std::vector<LayerStats> &stats, double gamma, const std::string &mode,
           const std::string &direction) {
            return build_config(sel, steering_by_layer(stats), gamma, parse_intervention_mode(mode),
                                parse_steer_direction(direction));
        },
        py::arg("selection"), py::arg("stats"), py::arg("gamma"), py::arg("mode") = "uniform",
        py::arg("direction") = "enhance");
    m.def(
        "apply_edits",
        [](const DoubleArray &hidden, const InterventionConfig &config, int layer) {
            const auto h = to_vector(hidden);
            const auto *edits = config.find_layer(layer);
            return to_array(edits ? apply_edits(h, *edits) : h);
        },
        py::arg("hidden"), py::arg("config"), py::arg("layer"));

    // toy model
    py::class_<ToyModel>(m, "ToyModel")
        .def(py::init([](int n_layers, int d_model, int d_mlp, int vocab, std::uint64_t seed) {
                 return ToyModel({n_layers, d_model, d_mlp, vocab, seed});
             }),
             py::arg("n_layers") = 4, py::arg("d_model") = 32, py::arg("d_mlp") = 128, py::arg("vocab") = 64,
             py::arg("seed") = 0)
        .def("forward", [](const ToyModel &model, const std::vector<int> &tokens) {
            return forward_to_dict(model.forward(tokens));
        })
        .def(
            "forward_intervened",
            [](const ToyModel &model, const std::vector<int> &tokens, const InterventionConfig &config) {
                return forward_to_dict(model.forward_intervened(tokens, config));
            },
            py::arg("tokens"), py::arg("config"))
        .def("forward_capture",
             [](const ToyModel &model, const std::vector<int> &tokens) {
                 return to_array(model.forward_capture(tokens));
             })
        .def(
            "capture_dump",
            [](const ToyModel &model, std::size_t n_pairs, std::uint64_t prompt_seed, std::string trait,
               const std::vector<int> &layers) {
                const auto prompts = make_toy_prompts(model.config(), n_pairs, prompt_seed);
                return capture_dump(model, prompts, std::move(trait), layers);
            },
            py::arg("n_pairs"), py::arg("prompt_seed") = 1, py::arg("trait") = "openness",
            py::arg("layers") = std::vector<int>{});

    m.def(
        "plant",
        [](std::size_t n_neurons, std::vector<int> layers, std::size_t n_high, std::size_t n_low, double shift,
           double noise_std, std::size_t n_pairs, std::uint64_t seed, std::string trait) {
            auto spec = random_plant_spec(n_neurons, std::move(layers), n_high, n_low, shift, noise_std, n_pairs, seed);
            spec.trait = std::move(trait);
            return py::make_tuple(plant(spec), plant_spec_to_json(spec));
        },
        py::arg("n_neurons"), py::arg("layers"), py::arg("n_high") = 10, py::arg("n_low") = 10,
        py::arg("shift") = 4.0, py::arg("noise_std") = 1.0, py::arg("n_pairs") = 1000, py::arg("seed") = 0,
        py::arg("trait") = "openness", "Returns (dump, oracle_json)");
    m.def(
        "evaluate_recovery",
        [](const std::string &oracle_json, const NeuronSelection &selection) {
            const auto r = evaluate_recovery(plant_spec_from_json(oracle_json), selection);
            py::dict out;
            out["planted_high"] = r.planted_high;
            out["recovered_high"] = r.recovered_high;
            out["planted_low"] = r.planted_low;
            out["recovered_low"] = r.recovered_low;
            out["unplanted_total"] = r.unplanted_total;
            out["max_unplanted_per_layer"] = r.max_unplanted_per_layer;
            out["overall_rate"] = r.overall_rate();
            return out;
        },
        py::arg("oracle_json"), py::arg("selection"));

    // analysis
    m.def(
        "pca_layer",
        [](const ActivationDump &d, int layer, const std::string &method) {
            const auto &l = d.layer(layer);
            const auto r = pca_layer(l.high, l.low, parse_method(method));
            std::vector<std::vector<double>> pts;
            std::vector<std::string> labels;
            for (const auto &p : r.projections) {
                pts.push_back({p.pc1, p.pc2});
                labels.push_back(to_string(p.label));
            }
            py::dict out;
            out["components"] = to_array(std::vector<std::vector<double>>{r.components[0], r.components[1]});
            out["explained_variance_ratio"] = py::make_tuple(r.explained_variance_ratio[0], r.explained_variance_ratio[1]);
            out["projections"] = to_array(pts);
            out["labels"] = labels;
            out["separation"] = separation_score(r);
            return out;
        },
        py::arg("dump"), py::arg("layer"), py::arg("method") = "auto");
    m.def(
        "census",
        [](const DoubleArray &d, const std::vector<double> &thresholds) {
            std::vector<py::tuple> out;
            for (const auto &row : census(to_vector(d), thresholds))
                out.push_back(py::make_tuple(row.threshold, row.count, row.fraction));
            return out;
        },
        py::arg("d"), py::arg("thresholds"), "List of (threshold, count, fraction)");
    m.def(
        "render_census",
        [](const DoubleArray &d, const std::vector<double> &thresholds) {
            return render_census(census(to_vector(d), thresholds));
        },
        py::arg("d"), py::arg("thresholds"));
}
