#pragma once

// Per-frame anomaly decisions, localization maps and streaming detection.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saife/model.hpp"
#include "saife/specgen.hpp"
#include "saife/trainer.hpp"

namespace saife::detector {

enum Trigger : unsigned {
    kRecon = 1u << 0,
    kDiscCont = 1u << 1,
    kDiscCat = 1u << 2,
    kClass = 1u << 3,
};

std::vector<std::string> trigger_names(unsigned triggers);
unsigned parse_triggers(std::span<const std::string> names);  // InputError on unknown names

struct AnomalyReport {
    std::size_t index = 0;  // position in the scored sequence
    int band = -1;
    double r_l = 0.0;
    double d_lcont = 0.0;
    double d_lcat = 0.0;
    int predicted_class = 0;
    int expected_class = -1;  // negative: class trigger disabled
    bool is_anomalous = false;
    unsigned triggers = 0;
    std::size_t rows = 0, cols = 0;
    std::vector<float> localization;  // rows x cols, |x_hat - x| in normalized units

    // One JSON object; the map is embedded as base64 little-endian float32
    // when `with_map` is set and a map is present.
    std::string to_json(bool with_map = true) const;
    static AnomalyReport from_json(const std::string& line);
};

// Threshold logic alone: recon one-sided above mu + n sigma, each
// discriminator loss outside [mu - n sigma, mu + n sigma], class on argmax
// mismatch when expected_class >= 0.
unsigned evaluate_triggers(const trainer::FrameLosses& losses, int expected_class,
                           const trainer::ThresholdStats& stats);

// Continuous score for ROC sweeps: the largest training-set z-score over the
// three losses (recon one-sided, discriminators absolute), +inf on a class
// mismatch. score > n exactly when a threshold trigger fires at n.
double composite_score(const trainer::FrameLosses& losses, int expected_class,
                       const trainer::ThresholdStats& stats);

// Throws ConfigError when stats were calibrated for another model.
void check_compatible(const model::ParameterStore& store, const trainer::ThresholdStats& stats);

std::vector<float> localize(std::span<const float> frame, std::span<const float> reconstruction);

// frame_db is raw dB; stats.norm normalizes it.
AnomalyReport score_frame(std::span<const float> frame_db, int expected_class, model::ParameterStore& store,
                          const trainer::ThresholdStats& stats);

// n frames back to back (dB). expected: one entry per frame, or a single
// entry applied to all.
std::vector<AnomalyReport> score_frames(std::span<const float> frames_db, std::span<const int> expected,
                                        model::ParameterStore& store, const trainer::ThresholdStats& stats,
                                        std::size_t batch = 256);

struct WindowConfig {
    std::size_t window = 100;  // frames per count window
    std::size_t batch = 256;   // frames scored per inference batch
};

struct WindowCount {
    std::size_t window = 0;
    std::size_t first_frame = 0;
    std::size_t frames = 0;
    std::size_t anomalous = 0;
};

struct StreamSummary {
    std::size_t frames = 0;
    std::size_t flagged = 0;
    std::size_t windows = 0;
};

// Pulls frames from `next` until it returns false, scoring them in batches.
// Window counts and flagged reports go to the sinks in input order; memory
// use is bounded by the batch size.
StreamSummary stream_detect(const std::function<bool(specgen::PsdFrame&)>& next, int expected_class,
                            model::ParameterStore& store, const trainer::ThresholdStats& stats,
                            const WindowConfig& window, const std::function<void(const WindowCount&)>& on_window,
                            const std::function<void(const AnomalyReport&)>& on_flagged);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(const std::string& text);  // InputError on bad input

}  // namespace saife::detector
