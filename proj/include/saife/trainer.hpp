#pragma once

// Three-phase training (reconstruction, adversarial regularization,
// semi-supervised) and n-sigma threshold calibration.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "saife/adam.hpp"
#include "saife/ingest.hpp"
#include "saife/model.hpp"
#include "saife/specgen.hpp"

namespace saife::trainer {

enum class Phase { reconstruction, regularization, semisupervised };

struct LossWeights {
    double reconstruction = 1.0;
    double adversarial = 1.0;  // 0 skips the regularization phase
    double semisupervised = 1.0;
    double position = 1.0;     // z[0] regression inside the semi-supervised loss
    double bandwidth = 1.0;    // z[1] regression
};

struct TrainConfig {
    double lr = 0.001;
    std::size_t batch_size = 64;
    std::size_t epochs = 50;
    double n_sigma = 3.0;
    double label_fraction = 0.2;
    std::size_t features = 20;
    LossWeights weights;
    std::array<Phase, 3> order = {Phase::reconstruction, Phase::regularization, Phase::semisupervised};
    std::uint64_t seed = 1;
    double divergence_limit = 1e6;
    // Architecture override; by default derived from the dataset extents.
    std::optional<model::ModelConfig> model;
    // When set, the last good parameters are written here on divergence.
    std::optional<std::filesystem::path> recovery_dir;

    void validate() const;  // ConfigError
    std::string canonical() const;
};

struct LossStats {
    double mean = 0.0;
    double stddev = 0.0;  // population
};

struct ThresholdStats {
    LossStats recon, disc_cont, disc_cat;
    double n_sigma = 3.0;
    std::uint64_t config_hash = 0;         // ModelConfig::hash of the calibrated model
    std::uint64_t params_fingerprint = 0;  // ParameterStore::fingerprint
    ingest::NormStats norm;                // input normalization used in training
    std::size_t frames = 0;

    std::string serialize() const;
    static ThresholdStats parse(const std::string& text);  // ConfigError on missing/bad fields
    void save(const std::filesystem::path& path) const;
    static ThresholdStats load(const std::filesystem::path& path);  // ConfigError when absent
};

struct EpochLog {
    std::size_t epoch = 0;
    double recon = 0.0, disc = 0.0, gen = 0.0, semi = 0.0;  // per-batch means
    double seconds = 0.0;
    std::string timestamp;  // ISO-8601 UTC

    std::string to_json() const;
};

// Per-frame losses used for thresholds and detection.
struct FrameLosses {
    double r_l = 0.0;     // sum |x - x_hat| in normalized units
    double d_cont = 0.0;  // sigmoid CE of the continuous discriminator vs target 1
    double d_cat = 0.0;
    int predicted_class = 0;
};

// `frames` holds n normalized frames back to back.
std::vector<FrameLosses> frame_losses(model::ParameterStore& store, std::span<const float> frames,
                                      std::size_t batch = 256);
// Also returns the reconstructions (n x frame_size) in `reconstruction`.
std::vector<FrameLosses> frame_losses(model::ParameterStore& store, std::span<const float> frames,
                                      std::vector<float>& reconstruction, std::size_t batch = 256);

// Frames are normalized dataset frames; fewer than 2 raises PreconditionError.
ThresholdStats calibrate_thresholds(model::ParameterStore& store, std::span<const float> frames, double n_sigma,
                                    const ingest::NormStats& norm);
ThresholdStats calibrate_from_losses(const std::vector<FrameLosses>& losses, double n_sigma);

// Holds the optimizers for one training context. The store must outlive it.
class Trainer {
public:
    Trainer(model::ParameterStore& store, const TrainConfig& config);

    // Each performs the forward pass, backward pass and one Adam step and
    // returns the unweighted loss. `batch` is [B x T*F], normalized.
    double phase_reconstruction(const nn::Tensor& batch);
    std::pair<double, double> phase_regularization(const nn::Tensor& batch, Rng& rng);  // (disc, gen)
    double phase_semisupervised(const nn::Tensor& batch, std::span<const specgen::SignalLabel> labels);

    // Batch index reported by DivergenceError.
    void set_batch_index(long index) { batch_index_ = index; }

private:
    void check(double loss, const char* phase) const;

    model::ParameterStore& store_;
    TrainConfig config_;
    nn::Adam ae_, disc_, gen_, semi_;
    long batch_index_ = 0;
};

struct TrainResult {
    model::ParameterStore params;
    ThresholdStats stats;
    std::vector<EpochLog> log;
    ingest::NormStats norm;
};

// Runs the phases per batch in `config.order` for `config.epochs`, then
// calibrates thresholds over every training frame.
TrainResult train(const specgen::Dataset& dataset, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch = {});

// Normalized copy of dataset frames `indices`, back to back.
std::vector<float> normalized_frames(const specgen::Dataset& ds, std::span<const std::uint32_t> indices,
                                     const ingest::NormStats& norm);

}  // namespace saife::trainer
