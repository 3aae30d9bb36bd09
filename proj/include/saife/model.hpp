#pragma once

// The adversarial autoencoder: LSTM encoder with a softmax class head and a
// linear feature head, transposed-convolution decoder fed with (y, z), and
// one discriminator per latent code.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "saife/autograd.hpp"
#include "saife/rng.hpp"

namespace saife::model {

struct DecoderLayer {
    std::size_t out_channels;
    std::size_t kernel_h, kernel_w;
    std::size_t stride_h, stride_w;

    friend bool operator==(const DecoderLayer&, const DecoderLayer&) = default;
};

struct ModelConfig {
    std::size_t rows = 6;
    std::size_t cols = 64;
    std::size_t classes = 4;
    std::size_t features = 20;
    std::size_t lstm_hidden = 512;
    std::size_t disc_hidden = 256;
    std::size_t disc_layers = 2;
    std::size_t decoder_hidden = 256;
    // Spatial seed the dense layers project onto before the transposed convs.
    std::size_t seed_channels = 64, seed_h = 3, seed_w = 7;
    std::vector<DecoderLayer> decoder = {{32, 2, 3, 1, 2}, {16, 2, 3, 1, 2}, {1, 2, 4, 1, 2}};

    // Derives a decoder stack that lands exactly on rows x cols.
    static ModelConfig for_frame(std::size_t rows, std::size_t cols, std::size_t classes,
                                 std::size_t features = 20);

    std::size_t frame_size() const { return rows * cols; }
    // Throws ConfigError when any extent is zero or the decoder geometry
    // does not produce a rows x cols frame.
    void validate() const;
    std::string canonical() const;
    // Inverse of canonical(); throws IntegrityError on malformed text.
    static ModelConfig from_canonical(const std::string& text);
    std::uint64_t hash() const;
    std::string hash_hex() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Probability vector over classes plus continuous features for one frame.
struct LatentCode {
    std::vector<float> y;
    std::vector<float> z;
};

enum Group : unsigned {
    kEncoder = 1u << 0,
    kDecoder = 1u << 1,
    kDiscCat = 1u << 2,
    kDiscCont = 1u << 3,
    kAllGroups = 0xfu,
};

// Every trainable tensor of the model plus the metadata needed to
// reproduce it. Parameter addresses are stable for the store's lifetime.
class ParameterStore {
public:
    static ParameterStore initialize(const ModelConfig& config, std::uint64_t seed);

    ParameterStore() = default;
    ParameterStore(const ParameterStore& other);
    ParameterStore& operator=(const ParameterStore& other);
    ParameterStore(ParameterStore&&) noexcept = default;
    ParameterStore& operator=(ParameterStore&&) noexcept = default;

    const ModelConfig& config() const { return config_; }
    std::uint64_t seed() const { return seed_; }
    const std::string& init_scheme() const { return init_scheme_; }
    int threads() const { return threads_; }
    void set_threads(int n) { threads_ = n; }

    nn::Parameter& at(const std::string& name);
    const nn::Parameter& at(const std::string& name) const;
    std::vector<nn::Parameter>& tensors() { return tensors_; }
    const std::vector<nn::Parameter>& tensors() const { return tensors_; }
    std::vector<nn::Parameter*> group(unsigned groups);
    Group group_of(const std::string& name) const;

    // FNV-1a over every tensor's bytes in store order.
    std::uint64_t fingerprint() const;

    friend class CheckpointIo;

private:
    void index();

    ModelConfig config_;
    std::uint64_t seed_ = 0;
    std::string init_scheme_;
    int threads_ = 1;
    std::vector<nn::Parameter> tensors_;
    std::map<std::string, std::size_t> by_name_;
};

struct EncoderOutput {
    nn::Var logits;  // [B x classes]
    nn::Var y;       // softmax(logits)
    nn::Var z;       // [B x features]
    nn::Var hidden;  // final LSTM state feeding both heads
};

// Builds the model's graph on a tape. Parameters outside `grad_groups` are
// bound as constants, so no gradient is computed for them.
class Forward {
public:
    Forward(nn::Tape& tape, ParameterStore& store, unsigned grad_groups);

    // frames: [B x rows*cols] normalized values, row-major per frame.
    EncoderOutput encode(nn::Var frames);
    nn::Var decode(nn::Var y, nn::Var z);  // -> [B x rows*cols]
    nn::Var discriminate_cont(nn::Var z);  // -> [B x 1] logits
    nn::Var discriminate_cat(nn::Var y);   // -> [B x 1] logits

    nn::Tape& tape() { return tape_; }

private:
    nn::Var bind(const std::string& name);
    nn::Var discriminate(const std::string& prefix, nn::Var in);

    nn::Tape& tape_;
    ParameterStore& store_;
    unsigned grad_groups_;
    std::map<std::string, nn::Var> bound_;
};

// Inference helpers on a frozen store (no gradients). Inputs are
// [B x rows*cols] normalized frames.
struct Inference {
    nn::Tensor logits, y, z, reconstruction;
    nn::Tensor disc_cont, disc_cat;  // [B x 1] logits
};
Inference run_inference(ParameterStore& store, const nn::Tensor& frames);

LatentCode encode(ParameterStore& store, std::span<const float> frame);
std::vector<float> decode(ParameterStore& store, const LatentCode& code);
float discriminate_cont(ParameterStore& store, std::span<const float> z);
float discriminate_cat(ParameterStore& store, std::span<const float> y);

// y: one-hot draw from a uniform categorical, z: standard normal.
LatentCode sample_prior(std::size_t classes, std::size_t features, Rng& rng);
// Batched draw: returns ([B x classes] one-hot, [B x features]).
std::pair<nn::Tensor, nn::Tensor> sample_prior_batch(std::size_t batch, std::size_t classes,
                                                     std::size_t features, Rng& rng);

// --- checkpoints -----------------------------------------------------------
//
// A checkpoint directory holds `manifest.txt` (key = value lines: format
// version, seed, thread count, init scheme, every config field, config hash
// and one `tensor.N = name shape offset fnv1a64` entry per tensor) and
// `tensors.bin` (little-endian float32, row-major, in manifest order).

inline constexpr int kCheckpointVersion = 1;

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& dir);
// With `expected`, a differing config hash raises ConfigError.
ParameterStore load_checkpoint(const std::filesystem::path& dir,
                               const std::optional<ModelConfig>& expected = std::nullopt);

class CheckpointIo {
public:
    static std::string manifest(const ParameterStore& store);
    static std::vector<std::uint8_t> blob(const ParameterStore& store);
    static ParameterStore parse(const std::string& manifest, std::span<const std::uint8_t> blob,
                                const std::optional<ModelConfig>& expected);
};

}  // namespace saife::model
