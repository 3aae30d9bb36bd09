#pragma once

// Seeded synthetic PSD frames: four "normal" signal families, four anomaly
// families, and dataset assembly with a seeded train/test split.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace saife::specgen {

enum class Family { single_cont, single_rshort, mult_cont, dethop };
enum class AnomalyKind { none, scont, randpulses, wpulse, oclass };

std::string_view to_string(Family f);
std::string_view to_string(AnomalyKind k);
Family parse_family(std::string_view name);         // ConfigError on unknown names
AnomalyKind parse_anomaly(std::string_view name);   // ConfigError on unknown names
const std::vector<Family>& all_families();

// T x F power values in dB. Rows are time, columns frequency bins.
struct PsdFrame {
    std::size_t rows = 0, cols = 0;
    std::vector<float> db;
    int band_id = 0;

    float at(std::size_t r, std::size_t c) const { return db[r * cols + c]; }
    float& at(std::size_t r, std::size_t c) { return db[r * cols + c]; }
};

struct SignalLabel {
    int class_id = 0;
    float center_freq = 0.5f;  // fraction of the band
    float bandwidth = 0.0f;    // fraction of the band
    float snr_db = 0.0f;
};

struct AnomalyMask {
    AnomalyKind kind = AnomalyKind::none;
    std::size_t rows = 0, cols = 0;
    std::vector<std::uint8_t> cells;

    std::size_t count() const;
    bool empty() const { return count() == 0; }
    bool at(std::size_t r, std::size_t c) const { return cells[r * cols + c] != 0; }
};

struct GenConfig {
    std::size_t rows = 6;
    std::size_t cols = 64;
    double noise_floor_db = -90.0;
    // Relative standard deviation of the linear-power noise around its mean.
    double noise_rel_std = 0.05;
    double snr_min_db = 5.0;
    double snr_max_db = 20.0;
    double bandwidth_min = 0.05;
    double bandwidth_max = 0.4;
    double mult_bandwidth_min = 0.05;
    double mult_bandwidth_max = 0.2;
    int mult_count_min = 2;
    int mult_count_max = 4;
    double anomaly_snr_min_db = -20.0;
    double anomaly_snr_max_db = 20.0;
    double scont_bandwidth_min = 0.05;
    double scont_bandwidth_max = 0.25;
    int pulses_min = 1;
    int pulses_max = 4;
    std::size_t pulse_bins_min = 2;
    std::size_t pulse_bins_max = 8;

    // Bins a dethop signal moves per row: ceil(F / T).
    std::size_t hop_stride() const { return (cols + rows - 1) / rows; }
    double noise_mean_linear() const;
    void validate() const;
};

struct GeneratedSignal {
    PsdFrame frame;
    SignalLabel label;
    // Cells that received signal energy (full band plus the rolloff bins).
    std::vector<std::uint8_t> occupancy;
    // Signal-only linear power per cell, before noise.
    std::vector<double> signal_linear;
};

// `class_id` is written into the label and the frame's band_id.
GeneratedSignal gen_signal(Family family, std::uint64_t seed, const GenConfig& config, int class_id = -1);

// Frame holding only the noise floor.
PsdFrame noise_frame(std::uint64_t seed, const GenConfig& config);

struct Injected {
    PsdFrame frame;
    AnomalyMask mask;
};

// Adds (or, for oclass, substitutes) an anomaly. Cells outside the returned
// mask are bit-identical to the input. oclass picks a library entry whose
// class differs from frame.band_id and ignores snr_db.
Injected inject_anomaly(const PsdFrame& frame, AnomalyKind kind, double snr_db, std::uint64_t seed,
                        std::span<const GeneratedSignal> library, const GenConfig& config);

// Fresh frames of every family, tagged with their index in `families`.
std::vector<GeneratedSignal> make_library(std::span<const Family> families, std::size_t per_family,
                                          std::uint64_t seed, const GenConfig& config);

struct DatasetConfig {
    GenConfig gen;
    std::vector<Family> families = all_families();
    std::size_t train_count = 6000;
    std::size_t test_count = 6000;
    double label_fraction = 0.2;
    std::uint64_t seed = 1;
};

// Frames are stored flat (count x rows x cols, dB). Masks are optional.
struct Dataset {
    std::size_t rows = 0, cols = 0;
    std::vector<std::string> class_names;
    std::vector<float> frames;
    std::vector<SignalLabel> labels;
    std::vector<int> band_ids;
    std::vector<std::uint8_t> labeled;
    bool has_masks = false;
    std::vector<AnomalyKind> mask_kinds;
    std::vector<std::uint8_t> masks;  // count x rows x cols
    std::vector<std::uint32_t> train_indices;
    std::vector<std::uint32_t> test_indices;

    std::size_t count() const { return labels.size(); }
    std::size_t frame_size() const { return rows * cols; }
    std::size_t class_count() const { return class_names.size(); }
    std::span<const float> frame(std::size_t i) const {
        return {frames.data() + i * frame_size(), frame_size()};
    }
    PsdFrame frame_copy(std::size_t i) const;
    AnomalyMask mask(std::size_t i) const;
    std::size_t labeled_count() const;
};

Dataset build_dataset(const DatasetConfig& config);

// Copies the frames listed in `indices` and injects `kind` at `snr_db` into
// a seeded `fraction` of them; masks mark which frames were altered. The
// result's train split is empty and its test split covers every frame.
Dataset build_anomaly_set(const Dataset& base, std::span<const std::uint32_t> indices, AnomalyKind kind,
                          double snr_db, double fraction, std::uint64_t seed, const GenConfig& gen);

}  // namespace saife::specgen
