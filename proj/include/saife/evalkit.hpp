#pragma once

// ROC/AUC, confusion matrices, compression ratios and evaluation drivers.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saife/detector.hpp"
#include "saife/model.hpp"
#include "saife/specgen.hpp"
#include "saife/trainer.hpp"

namespace saife::evalkit {

struct RocPoint {
    double threshold;  // frames with score >= threshold are flagged
    double fpr;
    double tpr;
};

struct RocCurve {
    std::vector<RocPoint> points;  // from (0,0) at +inf to (1,1), FPR nondecreasing
    double auc = 0.0;              // trapezoid over the points
};

struct ScoredLabel {
    double score;
    bool positive;
};

// Thresholds at each distinct score; tied scores move FPR and TPR together.
// Throws PreconditionError unless both labels occur, InputError on NaN.
RocCurve roc(std::span<const ScoredLabel> samples);

struct ConfusionMatrix {
    std::size_t k = 0;
    std::vector<std::size_t> counts;  // k x k, rows true, columns predicted
    double accuracy = 0.0;

    std::size_t at(std::size_t truth, std::size_t predicted) const { return counts[truth * k + predicted]; }
    std::size_t row_sum(std::size_t truth) const;
    std::size_t total() const;
};

struct ClassPair {
    int truth;
    int predicted;
};

// Throws InputError on a class outside [0, k).
ConfusionMatrix confusion(std::span<const ClassPair> pairs, std::size_t k);

// Exact ratio (rows * cols) / d in lowest terms.
struct CompressionRatio {
    std::uint64_t numerator = 0;
    std::uint64_t denominator = 1;

    double value() const { return static_cast<double>(numerator) / static_cast<double>(denominator); }
    // Shortest decimal that represents the ratio exactly, or rounded to
    // `max_places` when it does not terminate.
    std::string decimal(int max_places = 6) const;
};

CompressionRatio compression_ratio(std::size_t rows, std::size_t cols, std::size_t d);  // PreconditionError if d == 0

// Share of the map's total mass that falls on cells set in `mask`; 0 when
// the map is all zero.
double mass_in_mask(std::span<const float> map, std::span<const std::uint8_t> mask);

// --- evaluation drivers --------------------------------------------------------

struct AnomalyEvalConfig {
    int band = 0;  // class index whose test frames host the anomalies
    specgen::AnomalyKind kind = specgen::AnomalyKind::wpulse;
    double snr_db = 10.0;
    double fraction = 0.5;      // share of frames that receive the anomaly
    std::size_t max_frames = 0;  // 0: every test frame of the band
    std::uint64_t seed = 1;
    specgen::GenConfig gen;
};

struct AnomalyEval {
    RocCurve curve;
    std::vector<detector::AnomalyReport> reports;  // one per evaluated frame
    std::vector<double> scores;
    specgen::Dataset frames;                       // the evaluated set, with masks
};

AnomalyEval evaluate_anomaly(model::ParameterStore& store, const trainer::ThresholdStats& stats,
                             const specgen::Dataset& dataset, const AnomalyEvalConfig& config);

struct ClassificationEval {
    ConfusionMatrix matrix;
    double mean_reconstruction_error = 0.0;  // mean over frames of sum |x - x_hat| (normalized units)
};

// Classifies every test frame and measures reconstruction error.
ClassificationEval evaluate_classification(model::ParameterStore& store, const trainer::ThresholdStats& stats,
                                           const specgen::Dataset& dataset);

struct SweepRow {
    std::size_t features = 0;
    std::vector<double> snr_db;
    std::vector<double> auc;  // aligned with snr_db
    double mean_reconstruction_error = 0.0;
};

struct SweepConfig {
    std::vector<std::size_t> features = {5, 10, 20};
    std::vector<double> snr_db = {-20, -10, 0, 10, 20};
    AnomalyEvalConfig anomaly;
    trainer::TrainConfig train;
};

// One model per d with the shared seed. Training errors are re-raised with
// the offending d in the message.
std::vector<SweepRow> feature_sweep(const specgen::Dataset& dataset, const SweepConfig& config);

// --- output ----------------------------------------------------------------------

// Header row `threshold,fpr,tpr`.
void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path);
std::string roc_csv(const RocCurve& curve);
std::string confusion_csv(const ConfusionMatrix& m, std::span<const std::string> names);
std::string sweep_csv(std::span<const SweepRow> rows);
// Character-grid plot of the curve (FPR on x, TPR on y).
std::string roc_ascii(const RocCurve& curve, std::size_t width = 40, std::size_t height = 16);

}  // namespace saife::evalkit
