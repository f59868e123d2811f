#include "neuron_steer/dump.hpp"

#include "neuron_steer/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

namespace neuron_steer {

using ordered_json = nlohmann::ordered_json;

const char *to_string(DumpErrorCode code) {
    switch (code) {
    case DumpErrorCode::BadMagic: return "bad magic";
    case DumpErrorCode::UnsupportedVersion: return "unsupported version";
    case DumpErrorCode::OffsetOutOfBounds: return "offset out of bounds";
    case DumpErrorCode::NonFinite: return "non-finite value";
    case DumpErrorCode::BadMetadata: return "bad metadata";
    case DumpErrorCode::InvariantViolation: return "invariant violation";
    }
    return "unknown dump error";
}

const char *to_string(TraitDirection direction) {
    return direction == TraitDirection::High ? "high" : "low";
}

bool is_big_five_trait(std::string_view trait) {
    return std::find(kBigFiveTraits.begin(), kBigFiveTraits.end(), trait) != kBigFiveTraits.end();
}

std::size_t ActivationDump::n_neurons() const {
    return layers.empty() ? 0 : layers.front().high.n_neurons;
}

std::vector<int> ActivationDump::layer_indices() const {
    std::vector<int> out;
    out.reserve(layers.size());
    for (const auto &l : layers) out.push_back(l.layer_index);
    return out;
}

const LayerActivations *ActivationDump::find_layer(int layer_index) const {
    auto it = std::lower_bound(layers.begin(), layers.end(), layer_index,
                               [](const LayerActivations &l, int idx) { return l.layer_index < idx; });
    if (it == layers.end() || it->layer_index != layer_index) return nullptr;
    return &*it;
}

const LayerActivations &ActivationDump::layer(int layer_index) const {
    const auto *found = find_layer(layer_index);
    if (!found) throw ValidationError("layer " + std::to_string(layer_index) + " not present in dump");
    return *found;
}

namespace {

[[noreturn]] void fail(DumpErrorCode code, const std::string &msg) { throw DumpError(code, msg); }

void check_matrix(const ActivationMatrix &m, int layer_index, TraitDirection dir, std::size_t n_neurons) {
    const std::string where = "layer " + std::to_string(layer_index) + " (" + to_string(dir) + ")";
    if (m.layer_index != layer_index) fail(DumpErrorCode::InvariantViolation, where + ": matrix layer_index mismatch");
    if (m.direction != dir) fail(DumpErrorCode::InvariantViolation, where + ": matrix direction mismatch");
    if (m.n_neurons != n_neurons) fail(DumpErrorCode::InvariantViolation, where + ": n_neurons differs across the dump");
    if (m.data.size() != m.n_samples * m.n_neurons)
        fail(DumpErrorCode::InvariantViolation, where + ": data size does not match n_samples x n_neurons");
    for (std::size_t i = 0; i < m.n_samples; ++i) {
        for (std::size_t k = 0; k < m.n_neurons; ++k) {
            if (!std::isfinite(m.at(i, k))) {
                fail(DumpErrorCode::NonFinite, where + " sample " + std::to_string(i) + " neuron " + std::to_string(k));
            }
        }
    }
}

ordered_json metadata_to_json(const DumpMetadata &meta) {
    ordered_json entries = ordered_json::array();
    for (const auto &e : meta.layer_entries) {
        entries.push_back(ordered_json{{"layer_index", e.layer_index},
                                       {"n_samples_high", e.n_samples_high},
                                       {"n_samples_low", e.n_samples_low},
                                       {"n_neurons", e.n_neurons},
                                       {"byte_offset_high", e.byte_offset_high},
                                       {"byte_offset_low", e.byte_offset_low}});
    }
    return ordered_json{{"model_id", meta.model_id},
                        {"trait", meta.trait},
                        {"num_layers", meta.num_layers},
                        {"dtype", meta.dtype},
                        {"token_position", meta.token_position},
                        {"layer_entries", std::move(entries)}};
}

DumpMetadata metadata_from_json(const ordered_json &j) {
    DumpMetadata meta;
    try {
        meta.model_id = j.at("model_id").get<std::string>();
        meta.trait = j.at("trait").get<std::string>();
        meta.num_layers = j.at("num_layers").get<std::uint64_t>();
        meta.dtype = j.at("dtype").get<std::string>();
        meta.token_position = j.at("token_position").get<std::string>();
        for (const auto &e : j.at("layer_entries")) {
            LayerEntry entry;
            entry.layer_index = e.at("layer_index").get<int>();
            entry.n_samples_high = e.at("n_samples_high").get<std::uint64_t>();
            entry.n_samples_low = e.at("n_samples_low").get<std::uint64_t>();
            entry.n_neurons = e.at("n_neurons").get<std::uint64_t>();
            entry.byte_offset_high = e.at("byte_offset_high").get<std::uint64_t>();
            entry.byte_offset_low = e.at("byte_offset_low").get<std::uint64_t>();
            meta.layer_entries.push_back(entry);
        }
    } catch (const nlohmann::json::exception &ex) {
        fail(DumpErrorCode::BadMetadata, ex.what());
    }
    return meta;
}

void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t> &out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t *p) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
    return v;
}

std::uint64_t get_u64(const std::uint8_t *p) {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
    return v;
}

void put_floats(std::vector<std::uint8_t> &out, const std::vector<float> &values) {
    const std::size_t start = out.size();
    out.resize(start + values.size() * sizeof(float));
    if constexpr (std::endian::native == std::endian::little) {
        if (!values.empty()) std::memcpy(out.data() + start, values.data(), values.size() * sizeof(float));
    } else {
        std::uint8_t *p = out.data() + start;
        for (float f : values) {
            const auto bits = std::bit_cast<std::uint32_t>(f);
            for (int i = 0; i < 4; ++i) *p++ = static_cast<std::uint8_t>(bits >> (8 * i));
        }
    }
}

void get_floats(const std::uint8_t *p, std::vector<float> &values) {
    if constexpr (std::endian::native == std::endian::little) {
        if (!values.empty()) std::memcpy(values.data(), p, values.size() * sizeof(float));
    } else {
        for (auto &f : values) {
            f = std::bit_cast<float>(get_u32(p));
            p += 4;
        }
    }
}

std::uint64_t tensor_bytes(std::uint64_t n_samples, std::uint64_t n_neurons) {
    return n_samples * n_neurons * sizeof(float);
}

} // namespace

void validate_dump(const ActivationDump &dump) {
    if (!is_big_five_trait(dump.trait))
        fail(DumpErrorCode::InvariantViolation, "trait '" + dump.trait + "' is not a Big Five trait name");
    const std::size_t n_neurons = dump.n_neurons();
    int previous = -1;
    for (const auto &layer : dump.layers) {
        if (layer.layer_index < 0) fail(DumpErrorCode::InvariantViolation, "negative layer index");
        if (layer.layer_index <= previous)
            fail(DumpErrorCode::InvariantViolation, "layers must be strictly ascending without duplicates");
        previous = layer.layer_index;
        check_matrix(layer.high, layer.layer_index, TraitDirection::High, n_neurons);
        check_matrix(layer.low, layer.layer_index, TraitDirection::Low, n_neurons);
    }
}

DumpMetadata describe_dump(const ActivationDump &dump) {
    DumpMetadata meta;
    meta.model_id = dump.model_id;
    meta.trait = dump.trait;
    meta.num_layers = dump.layers.size();
    for (const auto &layer : dump.layers) {
        LayerEntry e;
        e.layer_index = layer.layer_index;
        e.n_samples_high = layer.high.n_samples;
        e.n_samples_low = layer.low.n_samples;
        e.n_neurons = layer.high.n_neurons;
        meta.layer_entries.push_back(e);
    }
    // Offsets are absolute, so the metadata length depends on the offsets it
    // records. Iterate until the serialized length stops changing; lengths
    // only grow, so this terminates after a few rounds.
    std::size_t meta_len = 0;
    for (;;) {
        std::uint64_t cursor = kDumpHeaderSize + meta_len;
        for (auto &e : meta.layer_entries) {
            e.byte_offset_high = cursor;
            cursor += tensor_bytes(e.n_samples_high, e.n_neurons);
            e.byte_offset_low = cursor;
            cursor += tensor_bytes(e.n_samples_low, e.n_neurons);
        }
        const std::size_t len = metadata_to_json(meta).dump().size();
        if (len == meta_len) break;
        meta_len = len;
    }
    return meta;
}

std::vector<std::uint8_t> encode_dump(const ActivationDump &dump) {
    validate_dump(dump);
    const DumpMetadata meta = describe_dump(dump);
    const std::string text = metadata_to_json(meta).dump();

    std::vector<std::uint8_t> out;
    std::uint64_t total = kDumpHeaderSize + text.size();
    for (const auto &e : meta.layer_entries)
        total += tensor_bytes(e.n_samples_high, e.n_neurons) + tensor_bytes(e.n_samples_low, e.n_neurons);
    out.reserve(total);
    out.insert(out.end(), kDumpMagic.begin(), kDumpMagic.end());
    put_u32(out, kDumpVersion);
    put_u64(out, text.size());
    out.insert(out.end(), text.begin(), text.end());
    for (const auto &layer : dump.layers) {
        put_floats(out, layer.high.data);
        put_floats(out, layer.low.data);
    }
    return out;
}

DumpMetadata decode_dump_metadata(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < kDumpMagic.size() ||
        !std::equal(kDumpMagic.begin(), kDumpMagic.end(), bytes.begin(),
                    [](char c, std::uint8_t b) { return static_cast<std::uint8_t>(c) == b; }))
        fail(DumpErrorCode::BadMagic, "file does not start with \"DPNA\"");
    if (bytes.size() < kDumpHeaderSize) fail(DumpErrorCode::OffsetOutOfBounds, "truncated header");
    const std::uint32_t version = get_u32(bytes.data() + 4);
    if (version != kDumpVersion) fail(DumpErrorCode::UnsupportedVersion, "version " + std::to_string(version));
    const std::uint64_t meta_len = get_u64(bytes.data() + 8);
    if (meta_len > bytes.size() - kDumpHeaderSize)
        fail(DumpErrorCode::OffsetOutOfBounds, "metadata block extends past end of file");

    ordered_json j;
    try {
        j = ordered_json::parse(bytes.begin() + kDumpHeaderSize, bytes.begin() + kDumpHeaderSize + meta_len);
    } catch (const nlohmann::json::exception &ex) {
        fail(DumpErrorCode::BadMetadata, ex.what());
    }
    DumpMetadata meta = metadata_from_json(j);

    if (meta.dtype != kDumpDtype) fail(DumpErrorCode::BadMetadata, "dtype must be \"f32le\", got \"" + meta.dtype + "\"");
    if (meta.token_position != kDumpTokenPosition)
        fail(DumpErrorCode::BadMetadata, "token_position must be \"last_prefill\"");
    if (meta.num_layers != meta.layer_entries.size())
        fail(DumpErrorCode::InvariantViolation, "num_layers does not match layer_entries");
    if (!is_big_five_trait(meta.trait))
        fail(DumpErrorCode::InvariantViolation, "trait '" + meta.trait + "' is not a Big Five trait name");

    const std::uint64_t data_start = kDumpHeaderSize + meta_len;
    const std::uint64_t file_size = bytes.size();
    struct Region {
        std::uint64_t begin, end;
    };
    std::vector<Region> regions;
    int previous = -1;
    for (const auto &e : meta.layer_entries) {
        const std::string where = "layer " + std::to_string(e.layer_index);
        if (e.layer_index < 0 || e.layer_index <= previous)
            fail(DumpErrorCode::InvariantViolation, "layer entries must be strictly ascending");
        previous = e.layer_index;
        if (e.n_neurons != meta.layer_entries.front().n_neurons)
            fail(DumpErrorCode::InvariantViolation, where + ": n_neurons differs across the dump");
        for (auto [offset, samples] : {std::pair{e.byte_offset_high, e.n_samples_high},
                                       std::pair{e.byte_offset_low, e.n_samples_low}}) {
            if (e.n_neurons != 0 && samples > (file_size / sizeof(float)) / e.n_neurons)
                fail(DumpErrorCode::OffsetOutOfBounds, where + ": tensor larger than file");
            const std::uint64_t size = tensor_bytes(samples, e.n_neurons);
            if (offset < data_start || offset > file_size || size > file_size - offset)
                fail(DumpErrorCode::OffsetOutOfBounds, where + ": tensor region outside the file");
            regions.push_back({offset, offset + size});
        }
    }
    std::sort(regions.begin(), regions.end(), [](const Region &a, const Region &b) { return a.begin < b.begin; });
    for (std::size_t i = 1; i < regions.size(); ++i) {
        if (regions[i].begin < regions[i - 1].end)
            fail(DumpErrorCode::InvariantViolation, "tensor regions overlap");
    }
    return meta;
}

ActivationDump decode_dump(std::span<const std::uint8_t> bytes) {
    const DumpMetadata meta = decode_dump_metadata(bytes);
    ActivationDump dump;
    dump.model_id = meta.model_id;
    dump.trait = meta.trait;
    dump.layers.reserve(meta.layer_entries.size());
    for (const auto &e : meta.layer_entries) {
        LayerActivations layer;
        layer.layer_index = e.layer_index;
        layer.high = ActivationMatrix(e.layer_index, TraitDirection::High, e.n_samples_high, e.n_neurons);
        layer.low = ActivationMatrix(e.layer_index, TraitDirection::Low, e.n_samples_low, e.n_neurons);
        get_floats(bytes.data() + e.byte_offset_high, layer.high.data);
        get_floats(bytes.data() + e.byte_offset_low, layer.low.data);
        dump.layers.push_back(std::move(layer));
    }
    // Finiteness and the remaining structural checks.
    validate_dump(dump);
    return dump;
}

void write_dump(const std::filesystem::path &path, const ActivationDump &dump) {
    const auto bytes = encode_dump(dump);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

ActivationDump read_dump(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("failed reading " + path.string());
    return decode_dump(bytes);
}

void write_dump_csv(std::ostream &out, const ActivationDump &dump) {
    out << "layer,direction,sample";
    for (std::size_t k = 0; k < dump.n_neurons(); ++k) out << ",n" << k;
    out << '\n';
    auto emit = [&](const ActivationMatrix &m) {
        for (std::size_t i = 0; i < m.n_samples; ++i) {
            out << m.layer_index << ',' << to_string(m.direction) << ',' << i;
            for (float v : m.row(i)) out << ',' << v;
            out << '\n';
        }
    };
    for (const auto &layer : dump.layers) {
        emit(layer.high);
        emit(layer.low);
    }
}

bool bitwise_equal(const ActivationMatrix &a, const ActivationMatrix &b) {
    return a.layer_index == b.layer_index && a.direction == b.direction && a.n_samples == b.n_samples &&
           a.n_neurons == b.n_neurons && a.data.size() == b.data.size() &&
           (a.data.empty() || std::memcmp(a.data.data(), b.data.data(), a.data.size() * sizeof(float)) == 0);
}

bool bitwise_equal(const ActivationDump &a, const ActivationDump &b) {
    if (a.model_id != b.model_id || a.trait != b.trait || a.layers.size() != b.layers.size()) return false;
    for (std::size_t i = 0; i < a.layers.size(); ++i) {
        if (a.layers[i].layer_index != b.layers[i].layer_index) return false;
        if (!bitwise_equal(a.layers[i].high, b.layers[i].high) || !bitwise_equal(a.layers[i].low, b.layers[i].low))
            return false;
    }
    return true;
}

} // namespace neuron_steer
