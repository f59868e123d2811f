// In-process composition of build-vectors -> select -> make-config, used to
// check that the chained CLI produces the same bytes.
//
// usage: pipeline_reference DUMP TRAIT Q TAU_D GAMMA MODE DIRECTION OUT_DIR

#include "neuron_steer/dump.hpp"
#include "neuron_steer/intervene.hpp"
#include "neuron_steer/select.hpp"
#include "neuron_steer/stats.hpp"
#include "neuron_steer/text.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>

using namespace neuron_steer;

int main(int argc, char **argv) {
    if (argc != 9) {
        std::cerr << "usage: pipeline_reference DUMP TRAIT Q TAU_D GAMMA MODE DIRECTION OUT_DIR\n";
        return 1;
    }
    const std::filesystem::path out_dir = argv[8];
    const auto dump = read_dump(argv[1]);
    const auto stats = compute_all_stats(dump);
    SelectionParams params;
    params.q = parse_double(argv[3]);
    params.tau_d = parse_double(argv[4]);
    params.target_layers = dump.layer_indices();
    const auto selection = select_all(stats, params, argv[2]);
    const auto config = build_config(selection, steering_by_layer(stats), parse_double(argv[5]),
                                     parse_intervention_mode(argv[6]), parse_steer_direction(argv[7]));

    std::ofstream(out_dir / "stats.csv", std::ios::binary) << [&] {
        std::ostringstream s;
        write_stats_csv(s, stats);
        return s.str();
    }();
    std::ofstream(out_dir / "selection.json", std::ios::binary) << selection_to_json(selection);
    std::ofstream(out_dir / "config.json", std::ios::binary) << config_to_json(config);
    return 0;
}
