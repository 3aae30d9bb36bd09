#include "saife/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "saife/errors.hpp"
#include "saife/kernels.hpp"

namespace saife::trainer {

using model::Forward;
using model::ParameterStore;
using nn::Tape;
using nn::Tensor;
using nn::Var;

// --- config -------------------------------------------------------------------

void TrainConfig::validate() const {
    if (!(lr > 0.0)) throw ConfigError("train: lr must be positive");
    if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
    if (!(label_fraction > 0.0 && label_fraction <= 1.0)) throw ConfigError("train: label_fraction must be in (0, 1]");
    if (!(n_sigma >= 0.0)) throw ConfigError("train: n_sigma must be non-negative");
    if (features == 0) throw ConfigError("train: features must be positive");
    for (double w : {weights.reconstruction, weights.adversarial, weights.semisupervised, weights.position,
                     weights.bandwidth})
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("train: loss weights must be finite and >= 0");
    auto sorted = order;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ConfigError("train: phase order must name each phase once");
}

std::string TrainConfig::canonical() const {
    auto phase = [](Phase p) {
        switch (p) {
            case Phase::reconstruction: return "reconstruction";
            case Phase::regularization: return "regularization";
            default: return "semisupervised";
        }
    };
    std::ostringstream os;
    os << std::setprecision(17) << "lr=" << lr << ";batch=" << batch_size << ";epochs=" << epochs
       << ";n_sigma=" << n_sigma << ";label_fraction=" << label_fraction << ";features=" << features
       << ";w=" << weights.reconstruction << ',' << weights.adversarial << ',' << weights.semisupervised << ','
       << weights.position << ',' << weights.bandwidth << ";order=" << phase(order[0]) << ',' << phase(order[1])
       << ',' << phase(order[2]) << ";seed=" << seed;
    return os.str();
}

// --- threshold stats -----------------------------------------------------------

namespace {

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

}  // namespace

std::string ThresholdStats::serialize() const {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "format_version = 1\n"
       << "n_sigma = " << n_sigma << '\n'
       << "frames = " << frames << '\n'
       << "recon.mean = " << recon.mean << '\n'
       << "recon.std = " << recon.stddev << '\n'
       << "disc_cont.mean = " << disc_cont.mean << '\n'
       << "disc_cont.std = " << disc_cont.stddev << '\n'
       << "disc_cat.mean = " << disc_cat.mean << '\n'
       << "disc_cat.std = " << disc_cat.stddev << '\n'
       << "norm.mean = " << norm.mean << '\n'
       << "norm.std = " << norm.stddev << '\n'
       << "config_hash = " << hex64(config_hash) << '\n'
       << "params_fingerprint = " << hex64(params_fingerprint) << '\n';
    return os.str();
}

ThresholdStats ThresholdStats::parse(const std::string& text) {
    const auto kv = ingest::KeyValueFile::parse(text);
    auto num = [&](const std::string& key) {
        if (!kv.get(key)) throw ConfigError("threshold stats: missing " + key);
        return kv.get_double(key, 0.0);
    };
    auto hex = [&](const std::string& key) {
        auto v = kv.get(key);
        if (!v) throw ConfigError("threshold stats: missing " + key);
        try {
            return static_cast<std::uint64_t>(std::stoull(*v, nullptr, 16));
        } catch (const std::exception&) {
            throw ConfigError("threshold stats: malformed " + key);
        }
    };
    ThresholdStats s;
    s.n_sigma = num("n_sigma");
    s.frames = static_cast<std::size_t>(num("frames"));
    s.recon = {num("recon.mean"), num("recon.std")};
    s.disc_cont = {num("disc_cont.mean"), num("disc_cont.std")};
    s.disc_cat = {num("disc_cat.mean"), num("disc_cat.std")};
    s.norm = {num("norm.mean"), num("norm.std")};
    s.config_hash = hex("config_hash");
    s.params_fingerprint = hex("params_fingerprint");
    return s;
}

void ThresholdStats::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    out << serialize();
    if (!out) throw IoError("cannot write threshold stats to " + path.string());
}

ThresholdStats ThresholdStats::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("threshold stats file not found: " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

std::string EpochLog::to_json() const {
    nlohmann::ordered_json j;
    j["epoch"] = epoch;
    j["recon"] = recon;
    j["disc"] = disc;
    j["gen"] = gen;
    j["semi"] = semi;
    j["seconds"] = seconds;
    j["timestamp"] = timestamp;
    return j.dump();
}

// --- losses and calibration --------------------------------------------------------

std::vector<FrameLosses> frame_losses(ParameterStore& store, std::span<const float> frames,
                                      std::vector<float>& reconstruction, std::size_t batch) {
    const std::size_t fs = store.config().frame_size();
    if (frames.size() % fs != 0)
        throw DimensionError("frame_losses: " + std::to_string(frames.size()) +
                             " values is not a whole number of frames of " + std::to_string(fs));
    const std::size_t n = frames.size() / fs;
    std::vector<FrameLosses> out(n);
    reconstruction.assign(frames.size(), 0.0f);
    batch = std::max<std::size_t>(batch, 1);
    for (std::size_t start = 0; start < n; start += batch) {
        const std::size_t b = std::min(batch, n - start);
        Tensor x({b, fs}, std::vector<float>(frames.begin() + static_cast<std::ptrdiff_t>(start * fs),
                                             frames.begin() + static_cast<std::ptrdiff_t>((start + b) * fs)));
        const auto inf = model::run_inference(store, x);
        const std::size_t k = store.config().classes;
        for (std::size_t i = 0; i < b; ++i) {
            auto& r = out[start + i];
            double sum = 0.0;
            for (std::size_t j = 0; j < fs; ++j) {
                const float rec = inf.reconstruction[i * fs + j];
                reconstruction[(start + i) * fs + j] = rec;
                sum += std::fabs(static_cast<double>(x[i * fs + j]) - rec);
            }
            r.r_l = sum;
            r.d_cont = nn::sigmoid_cross_entropy_value(inf.disc_cont[i], 1.0f);
            r.d_cat = nn::sigmoid_cross_entropy_value(inf.disc_cat[i], 1.0f);
            const float* y = inf.y.data() + i * k;
            r.predicted_class = static_cast<int>(std::max_element(y, y + k) - y);
        }
    }
    return out;
}

std::vector<FrameLosses> frame_losses(ParameterStore& store, std::span<const float> frames, std::size_t batch) {
    std::vector<float> unused;
    return frame_losses(store, frames, unused, batch);
}

ThresholdStats calibrate_from_losses(const std::vector<FrameLosses>& losses, double n_sigma) {
    if (losses.size() < 2)
        throw PreconditionError("calibrate_thresholds: need at least 2 frames, got " + std::to_string(losses.size()));
    auto stats = [&](auto field) {
        double mean = 0.0;
        for (const auto& l : losses) mean += field(l);
        mean /= static_cast<double>(losses.size());
        double var = 0.0;
        for (const auto& l : losses) var += (field(l) - mean) * (field(l) - mean);
        return LossStats{mean, std::sqrt(var / static_cast<double>(losses.size()))};
    };
    ThresholdStats s;
    s.recon = stats([](const FrameLosses& l) { return l.r_l; });
    s.disc_cont = stats([](const FrameLosses& l) { return l.d_cont; });
    s.disc_cat = stats([](const FrameLosses& l) { return l.d_cat; });
    s.n_sigma = n_sigma;
    s.frames = losses.size();
    return s;
}

ThresholdStats calibrate_thresholds(ParameterStore& store, std::span<const float> frames, double n_sigma,
                                    const ingest::NormStats& norm) {
    auto s = calibrate_from_losses(frame_losses(store, frames), n_sigma);
    s.config_hash = store.config().hash();
    s.params_fingerprint = store.fingerprint();
    s.norm = norm;
    return s;
}

// --- phases ------------------------------------------------------------------------

Trainer::Trainer(ParameterStore& store, const TrainConfig& config) : store_(store), config_(config) {
    config_.validate();
    const nn::AdamConfig adam{static_cast<float>(config.lr)};
    ae_ = nn::Adam(store_.group(model::kEncoder | model::kDecoder), adam);
    disc_ = nn::Adam(store_.group(model::kDiscCat | model::kDiscCont), adam);
    gen_ = nn::Adam(store_.group(model::kEncoder), adam);
    semi_ = nn::Adam(store_.group(model::kEncoder), adam);
}

void Trainer::check(double loss, const char* phase) const {
    if (!std::isfinite(loss) || loss > config_.divergence_limit) {
        std::ostringstream os;
        os << phase << " loss diverged (" << loss << ") at batch " << batch_index_;
        throw DivergenceError(os.str(), batch_index_);
    }
}

double Trainer::phase_reconstruction(const Tensor& batch) {
    ae_.zero_grad();
    Tape tape;
    Forward fwd(tape, store_, model::kEncoder | model::kDecoder);
    Var x = tape.constant(batch);
    auto enc = fwd.encode(x);
    Var loss = nn::mse(fwd.decode(enc.y, enc.z), x);
    const double value = loss.value()[0];
    check(value, "reconstruction");
    tape.backward(nn::scale(loss, static_cast<float>(config_.weights.reconstruction)));
    ae_.step();
    return value;
}

std::pair<double, double> Trainer::phase_regularization(const Tensor& batch, Rng& rng) {
    const auto& cfg = store_.config();
    const std::size_t b = batch.dim(0);
    const float w = static_cast<float>(config_.weights.adversarial);
    const Tensor ones({b, 1}, 1.0f), zeros({b, 1}, 0.0f);

    // The discriminator step leaves the encoder untouched, so one encoder pass
    // serves both steps: its values feed the discriminators as constants, and
    // the generator step later backpropagates through it.
    Tape gen_tape;
    Forward gen_fwd(gen_tape, store_, model::kEncoder);
    auto enc = gen_fwd.encode(gen_tape.constant(batch));

    double disc_value = 0.0;
    {
        disc_.zero_grad();
        Tape tape;
        Forward fwd(tape, store_, model::kDiscCat | model::kDiscCont);
        auto [yp, zp] = model::sample_prior_batch(b, cfg.classes, cfg.features, rng);
        Var t1 = tape.constant(ones), t0 = tape.constant(zeros);
        Var cont = nn::add(nn::sigmoid_cross_entropy(fwd.discriminate_cont(tape.constant(zp)), t1),
                           nn::sigmoid_cross_entropy(fwd.discriminate_cont(tape.constant(enc.z.value())), t0));
        Var cat = nn::add(nn::sigmoid_cross_entropy(fwd.discriminate_cat(tape.constant(yp)), t1),
                          nn::sigmoid_cross_entropy(fwd.discriminate_cat(tape.constant(enc.y.value())), t0));
        Var loss = nn::scale(nn::add(cont, cat), 0.25f);
        disc_value = loss.value()[0];
        check(disc_value, "discriminator");
        tape.backward(nn::scale(loss, w));
        disc_.step();
    }
    gen_.zero_grad();
    Var t1 = gen_tape.constant(ones);
    Var loss = nn::scale(nn::add(nn::sigmoid_cross_entropy(gen_fwd.discriminate_cont(enc.z), t1),
                                 nn::sigmoid_cross_entropy(gen_fwd.discriminate_cat(enc.y), t1)),
                         0.5f);
    const double gen_value = loss.value()[0];
    check(gen_value, "generator");
    if (gen_tape.requires_grad(loss.id())) {
        gen_tape.backward(nn::scale(loss, w));
        gen_.step();
    }
    return {disc_value, gen_value};
}

double Trainer::phase_semisupervised(const Tensor& batch, std::span<const specgen::SignalLabel> labels) {
    const auto& cfg = store_.config();
    const std::size_t b = batch.rank() == 2 ? batch.dim(0) : 0;
    if (b == 0) throw PreconditionError("semi-supervised phase: empty labeled batch");
    if (labels.size() != b)
        throw DimensionError("semi-supervised phase: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(b) + " frames");
    Tensor onehot({b, cfg.classes}), center({b, 1}), width({b, 1});
    for (std::size_t i = 0; i < b; ++i) {
        const int c = labels[i].class_id;
        if (c < 0 || static_cast<std::size_t>(c) >= cfg.classes)
            throw InputError("semi-supervised phase: class " + std::to_string(c) + " outside [0, " +
                             std::to_string(cfg.classes) + ")");
        onehot[i * cfg.classes + static_cast<std::size_t>(c)] = 1.0f;
        center[i] = labels[i].center_freq;
        width[i] = labels[i].bandwidth;
    }

    semi_.zero_grad();
    Tape tape;
    Forward fwd(tape, store_, model::kEncoder);
    auto enc = fwd.encode(tape.constant(batch));
    Var loss = nn::softmax_cross_entropy(enc.logits, tape.constant(onehot));
    if (config_.weights.position > 0.0)
        loss = nn::add(loss, nn::scale(nn::mse(nn::slice_cols(enc.z, 0, 1), tape.constant(center)),
                                       static_cast<float>(config_.weights.position)));
    if (cfg.features > 1 && config_.weights.bandwidth > 0.0)
        loss = nn::add(loss, nn::scale(nn::mse(nn::slice_cols(enc.z, 1, 1), tape.constant(width)),
                                       static_cast<float>(config_.weights.bandwidth)));
    const double value = loss.value()[0];
    check(value, "semi-supervised");
    if (tape.requires_grad(loss.id())) {
        tape.backward(nn::scale(loss, static_cast<float>(config_.weights.semisupervised)));
        semi_.step();
    }
    return value;
}

// --- training loop -----------------------------------------------------------------

std::vector<float> normalized_frames(const specgen::Dataset& ds, std::span<const std::uint32_t> indices,
                                     const ingest::NormStats& norm) {
    const std::size_t fs = ds.frame_size();
    std::vector<float> out(indices.size() * fs);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        const auto f = ds.frame(indices[i]);
        for (std::size_t j = 0; j < fs; ++j) out[i * fs + j] = norm.apply(f[j]);
    }
    return out;
}

namespace {

std::string utc_now() {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

Tensor gather(const std::vector<float>& frames, std::size_t fs, std::span<const std::size_t> rows) {
    Tensor t({rows.size(), fs});
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(frames.data() + rows[i] * fs, fs, t.data() + i * fs);
    return t;
}

}  // namespace

TrainResult train(const specgen::Dataset& ds, const TrainConfig& config,
                  const std::function<void(const EpochLog&)>& on_epoch) {
    config.validate();
    if (ds.train_indices.size() < 2) throw PreconditionError("train: dataset has no usable train split");
    auto mc = config.model ? *config.model
                           : model::ModelConfig::for_frame(ds.rows, ds.cols, ds.class_count(), config.features);
    if (mc.rows != ds.rows || mc.cols != ds.cols || mc.classes != ds.class_count())
        throw ConfigError("train: model expects " + std::to_string(mc.rows) + "x" + std::to_string(mc.cols) +
                          " frames and " + std::to_string(mc.classes) + " classes, dataset has " +
                          std::to_string(ds.rows) + "x" + std::to_string(ds.cols) + " and " +
                          std::to_string(ds.class_count()));
    mc.validate();

    const auto norm = ingest::fit_normalizer(ds);
    const std::size_t fs = ds.frame_size();
    const std::size_t n = ds.train_indices.size();
    const auto x = normalized_frames(ds, ds.train_indices, norm);

    // Labeled pool: the dataset's flags when they match the requested
    // fraction, otherwise a seeded draw of that many training frames.
    const auto want = static_cast<std::size_t>(std::floor(config.label_fraction * static_cast<double>(n)));
    std::vector<std::size_t> pool;
    for (std::size_t i = 0; i < n; ++i)
        if (!ds.labeled.empty() && ds.labeled[ds.train_indices[i]]) pool.push_back(i);
    if (pool.size() != want) {
        pool.resize(n);
        std::iota(pool.begin(), pool.end(), std::size_t{0});
        Rng rng(derive_seed(config.seed, Stream::labels));
        std::shuffle(pool.begin(), pool.end(), rng.engine());
        pool.resize(std::max<std::size_t>(want, 1));
        std::sort(pool.begin(), pool.end());
    }

    TrainResult result{ParameterStore::initialize(mc, config.seed), {}, {}, norm};
    auto& store = result.params;
    store.set_threads(kernels::thread_count());
    Trainer trainer(store, config);

    std::vector<std::size_t> order(n), labeled_order = pool;
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t labeled_cursor = labeled_order.size();
    long batch_index = 0;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto started = std::chrono::steady_clock::now();
        const ParameterStore last_good = store;
        Rng shuffle(derive_seed(config.seed, Stream::shuffle, epoch));
        Rng prior(derive_seed(config.seed, Stream::prior, epoch));
        std::shuffle(order.begin(), order.end(), shuffle.engine());
        EpochLog log;
        log.epoch = epoch + 1;
        std::size_t batches = 0;
        try {
            for (std::size_t start = 0; start < n; start += config.batch_size, ++batch_index) {
                trainer.set_batch_index(batch_index);
                const std::size_t b = std::min(config.batch_size, n - start);
                const Tensor batch = gather(x, fs, {order.data() + start, b});
                for (Phase phase : config.order) {
                    if (phase == Phase::reconstruction && config.weights.reconstruction > 0.0) {
                        log.recon += trainer.phase_reconstruction(batch);
                    } else if (phase == Phase::regularization && config.weights.adversarial > 0.0) {
                        auto [d, g] = trainer.phase_regularization(batch, prior);
                        log.disc += d;
                        log.gen += g;
                    } else if (phase == Phase::semisupervised && config.weights.semisupervised > 0.0) {
                        std::vector<std::size_t> rows(b);
                        std::vector<specgen::SignalLabel> labels(b);
                        for (std::size_t i = 0; i < b; ++i) {
                            if (labeled_cursor == labeled_order.size()) {
                                std::shuffle(labeled_order.begin(), labeled_order.end(), shuffle.engine());
                                labeled_cursor = 0;
                            }
                            rows[i] = labeled_order[labeled_cursor++];
                            labels[i] = ds.labels[ds.train_indices[rows[i]]];
                        }
                        log.semi += trainer.phase_semisupervised(gather(x, fs, rows), labels);
                    }
                }
                ++batches;
            }
        } catch (const DivergenceError&) {
            store = last_good;
            if (config.recovery_dir) model::save_checkpoint(store, *config.recovery_dir);
            throw;
        }
        const double inv = 1.0 / static_cast<double>(std::max<std::size_t>(batches, 1));
        log.recon *= inv;
        log.disc *= inv;
        log.gen *= inv;
        log.semi *= inv;
        log.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        log.timestamp = utc_now();
        result.log.push_back(log);
        if (on_epoch) on_epoch(log);
    }

    result.stats = calibrate_thresholds(store, x, config.n_sigma, norm);
    return result;
}

}  // namespace saife::trainer
