#pragma once

// DPNA activation-dump container.
//
// Layout (all integers little-endian):
//   bytes 0..3    magic "DPNA"
//   bytes 4..7    u32 format version (1)
//   bytes 8..15   u64 byte length of the JSON metadata block
//   bytes 16..    UTF-8 JSON metadata
//   then, per layer in ascending order, the high matrix followed by the low
//   matrix as raw f32le values, sample-major. Offsets recorded in the
//   metadata are absolute file offsets.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace neuron_steer {

inline constexpr std::array<char, 4> kDumpMagic{'D', 'P', 'N', 'A'};
inline constexpr std::uint32_t kDumpVersion = 1;
inline constexpr std::size_t kDumpHeaderSize = 16;
inline constexpr std::string_view kDumpDtype = "f32le";
inline constexpr std::string_view kDumpTokenPosition = "last_prefill";

inline constexpr std::array<std::string_view, 5> kBigFiveTraits{
    "openness", "conscientiousness", "extraversion", "agreeableness", "neuroticism"};

bool is_big_five_trait(std::string_view trait);

enum class TraitDirection { High, Low };

const char *to_string(TraitDirection direction);

// n_samples x n_neurons activations for one layer and one trait direction.
struct ActivationMatrix {
    int layer_index = 0;
    TraitDirection direction = TraitDirection::High;
    std::size_t n_samples = 0;
    std::size_t n_neurons = 0;
    std::vector<float> data; // sample-major

    ActivationMatrix() = default;
    ActivationMatrix(int layer, TraitDirection dir, std::size_t samples, std::size_t neurons)
        : layer_index(layer), direction(dir), n_samples(samples), n_neurons(neurons),
          data(samples * neurons, 0.0f) {}

    float &at(std::size_t sample, std::size_t neuron) { return data[sample * n_neurons + neuron]; }
    float at(std::size_t sample, std::size_t neuron) const { return data[sample * n_neurons + neuron]; }

    std::span<float> row(std::size_t sample) {
        return {data.data() + sample * n_neurons, n_neurons};
    }
    std::span<const float> row(std::size_t sample) const {
        return {data.data() + sample * n_neurons, n_neurons};
    }
};

struct LayerActivations {
    int layer_index = 0;
    ActivationMatrix high;
    ActivationMatrix low;
};

struct ActivationDump {
    std::string model_id;
    std::string trait;
    std::vector<LayerActivations> layers; // ascending layer_index

    // Neuron count shared by all layers; 0 for an empty dump.
    std::size_t n_neurons() const;
    std::vector<int> layer_indices() const;
    const LayerActivations *find_layer(int layer_index) const;
    // Throws ValidationError when the layer is absent.
    const LayerActivations &layer(int layer_index) const;
};

struct LayerEntry {
    int layer_index = 0;
    std::uint64_t n_samples_high = 0;
    std::uint64_t n_samples_low = 0;
    std::uint64_t n_neurons = 0;
    std::uint64_t byte_offset_high = 0;
    std::uint64_t byte_offset_low = 0;
};

struct DumpMetadata {
    std::string model_id;
    std::string trait;
    std::uint64_t num_layers = 0;
    std::vector<LayerEntry> layer_entries;
    std::string dtype{kDumpDtype};
    std::string token_position{kDumpTokenPosition};
};

// Throws DumpError(InvariantViolation / NonFinite) on the first violated invariant.
void validate_dump(const ActivationDump &dump);

// Metadata as it will be written, with final absolute offsets.
DumpMetadata describe_dump(const ActivationDump &dump);

std::vector<std::uint8_t> encode_dump(const ActivationDump &dump);
ActivationDump decode_dump(std::span<const std::uint8_t> bytes);
// Parses only the header and metadata block.
DumpMetadata decode_dump_metadata(std::span<const std::uint8_t> bytes);

void write_dump(const std::filesystem::path &path, const ActivationDump &dump);
ActivationDump read_dump(const std::filesystem::path &path);

// Lossy decimal export, one row per sample: layer,direction,sample,n0..nK-1.
void write_dump_csv(std::ostream &out, const ActivationDump &dump);

bool bitwise_equal(const ActivationMatrix &a, const ActivationMatrix &b);
bool bitwise_equal(const ActivationDump &a, const ActivationDump &b);

} // namespace neuron_steer
