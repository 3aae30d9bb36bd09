#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saife/specgen.hpp"

namespace saife::ingest {

// --- normalization ------------------------------------------------------

// Global affine map (x - mean) / stddev, fitted on the training split only.
struct NormStats {
    double mean = 0.0;
    double stddev = 1.0;

    float apply(float db) const { return static_cast<float>((db - mean) / stddev); }
    float invert(float v) const { return static_cast<float>(v * stddev + mean); }
};

NormStats fit_normalizer(const specgen::Dataset& ds);              // over train_indices
NormStats fit_normalizer(std::span<const float> values);          // over every value
std::vector<float> normalize(std::span<const float> db, const NormStats& stats);
std::vector<float> denormalize(std::span<const float> values, const NormStats& stats);

// --- dataset files ------------------------------------------------------

inline constexpr std::uint32_t kDatasetVersion = 1;

void write_dataset(const specgen::Dataset& ds, const std::filesystem::path& path);
specgen::Dataset read_dataset(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_dataset(const specgen::Dataset& ds);
specgen::Dataset decode_dataset(std::span<const std::uint8_t> bytes);

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

// --- band metadata ------------------------------------------------------

struct BandSpec {
    int band_id = 0;
    double freq_start_mhz = 0.0;
    double freq_stop_mhz = 0.0;
    double bin_resolution_khz = 100.0;
    std::string name;

    std::size_t bins() const;
    void validate() const;  // ConfigError unless stop > start and resolution > 0
};

// Frequency bands of the HackRF sweep and Electrosense sensor datasets.
const std::vector<BandSpec>& sdr_bands();
const std::vector<BandSpec>& electrosense_bands();

// --- key/value config files ---------------------------------------------

// Lines of `key = value`; `#` starts a comment; blank lines are ignored.
class KeyValueFile {
public:
    static KeyValueFile parse(const std::string& text);
    static KeyValueFile load(const std::filesystem::path& path);

    std::optional<std::string> get(const std::string& key) const;
    std::string get_or(const std::string& key, const std::string& fallback) const;
    double get_double(const std::string& key, double fallback) const;
    long get_long(const std::string& key, long fallback) const;
    void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
    const std::map<std::string, std::string>& values() const { return values_; }
    std::string serialize() const;

private:
    std::map<std::string, std::string> values_;
};

}  // namespace saife::ingest
