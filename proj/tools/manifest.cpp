#include "manifest.hpp"

#include "neuron_steer/error.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <array>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <memory>

#ifndef NEURON_STEER_VERSION
#define NEURON_STEER_VERSION "dev"
#endif

namespace neuron_steer::cli {

std::string sha256_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string() + " for hashing");
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr);
    std::array<char, 1 << 16> buf;
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), digest.data(), &len);
    std::string hex;
    char byte[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(byte, sizeof(byte), "%02x", digest[i]);
        hex += byte;
    }
    return hex;
}

std::filesystem::path manifest_path(const std::filesystem::path &primary_output) {
    return std::filesystem::path(primary_output.string() + ".manifest.json");
}

void RunManifest::write(const std::filesystem::path &primary_output) const {
    using ordered_json = nlohmann::ordered_json;
    auto files = [](const std::vector<std::filesystem::path> &paths) {
        ordered_json arr = ordered_json::array();
        for (const auto &p : paths) arr.push_back(ordered_json{{"path", p.string()}, {"sha256", sha256_file(p)}});
        return arr;
    };
    ordered_json p = ordered_json::object();
    for (const auto &[k, v] : params) p[k] = v;

    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm utc{};
    gmtime_r(&now, &utc);
    char stamp[32];
    std::strftime(stamp, sizeof(stamp), "%Y-%m-%dT%H:%M:%SZ", &utc);

    const ordered_json j{{"command", command},
                         {"params", std::move(p)},
                         {"inputs", files(inputs)},
                         {"outputs", files(outputs)},
                         {"tool_version", NEURON_STEER_VERSION},
                         {"timestamp", stamp}};
    const auto path = manifest_path(primary_output);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << j.dump(2) << '\n';
}

} // namespace neuron_steer::cli
