#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace neuron_steer::cli {

std::string sha256_file(const std::filesystem::path &path);

// One per stage, written as <primary output>.manifest.json. Only the
// timestamp differs between reruns with unchanged inputs.
struct RunManifest {
    std::string command;
    std::map<std::string, std::string> params;
    std::vector<std::filesystem::path> inputs;
    std::vector<std::filesystem::path> outputs;

    // Hashes every input and output file at call time.
    void write(const std::filesystem::path &primary_output) const;
};

std::filesystem::path manifest_path(const std::filesystem::path &primary_output);

} // namespace neuron_steer::cli
