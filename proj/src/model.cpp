#include "saife/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <iomanip>
#include <sstream>

#include "saife/errors.hpp"
#include "saife/ingest.hpp"

namespace saife::model {

using nn::Parameter;
using nn::Shape;
using nn::Tensor;
using nn::Var;

// --- config -----------------------------------------------------------------

ModelConfig ModelConfig::for_frame(std::size_t rows, std::size_t cols, std::size_t classes,
                                   std::size_t features) {
    ModelConfig c;
    c.rows = rows;
    c.cols = cols;
    c.classes = classes;
    c.features = features;
    const std::size_t channels[3] = {32, 16, 1};
    // Heights grow by kernel_h - 1 per layer at stride 1.
    std::size_t kh[3] = {1, 1, 1};
    if (rows >= 4) {
        c.seed_h = rows - 3;
        kh[0] = kh[1] = kh[2] = 2;
    } else {
        c.seed_h = 1;
        for (std::size_t extra = rows - 1, i = 0; extra > 0; --extra, i = (i + 1) % 3) ++kh[i];
    }
    // Widths: walk back from the output, halving while the extent allows.
    std::size_t width = cols;
    DecoderLayer layers[3];
    for (int i = 2; i >= 0; --i) {
        DecoderLayer l{channels[i], kh[i], 1, 1, 1};
        if (width >= 4) {
            l.kernel_w = (width % 2 == 0) ? 4 : 3;
            l.stride_w = 2;
            width = (width - l.kernel_w) / 2 + 1;
        }
        layers[i] = l;
    }
    c.seed_w = width;
    c.decoder.assign(std::begin(layers), std::end(layers));
    return c;
}

void ModelConfig::validate() const {
    if (rows == 0 || cols == 0 || classes == 0 || features == 0 || lstm_hidden == 0 || disc_hidden == 0 ||
        disc_layers == 0 || decoder_hidden == 0 || seed_channels == 0 || seed_h == 0 || seed_w == 0)
        throw ConfigError("model config: every extent must be positive");
    if (decoder.empty() || decoder.back().out_channels != 1)
        throw ConfigError("model config: decoder must end in a single output channel");
    std::size_t h = seed_h, w = seed_w;
    for (const auto& l : decoder) {
        if (l.out_channels == 0 || l.kernel_h == 0 || l.kernel_w == 0 || l.stride_h == 0 || l.stride_w == 0)
            throw ConfigError("model config: decoder layer with zero extent");
        h = (h - 1) * l.stride_h + l.kernel_h;
        w = (w - 1) * l.stride_w + l.kernel_w;
    }
    if (h != rows || w != cols)
        throw ConfigError("model config: decoder produces " + std::to_string(h) + "x" + std::to_string(w) +
                          " but frames are " + std::to_string(rows) + "x" + std::to_string(cols));
}

std::string ModelConfig::canonical() const {
    std::ostringstream os;
    os << "rows=" << rows << ";cols=" << cols << ";classes=" << classes << ";features=" << features
       << ";lstm_hidden=" << lstm_hidden << ";disc_hidden=" << disc_hidden << ";disc_layers=" << disc_layers
       << ";decoder_hidden=" << decoder_hidden << ";seed=" << seed_channels << 'x' << seed_h << 'x' << seed_w
       << ";decoder=";
    for (std::size_t i = 0; i < decoder.size(); ++i) {
        const auto& l = decoder[i];
        if (i) os << ',';
        os << l.out_channels << ':' << l.kernel_h << 'x' << l.kernel_w << ':' << l.stride_h << 'x' << l.stride_w;
    }
    return os.str();
}

std::uint64_t ModelConfig::hash() const {
    const auto s = canonical();
    return ingest::fnv1a64({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
}

std::string ModelConfig::hash_hex() const {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << hash();
    return os.str();
}

ModelConfig ModelConfig::from_canonical(const std::string& s) {
    ModelConfig c;
    std::map<std::string, std::string> kv;
    std::istringstream in(s);
    std::string item;
    while (std::getline(in, item, ';')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) throw IntegrityError("checkpoint: malformed config entry '" + item + "'");
        kv[item.substr(0, eq)] = item.substr(eq + 1);
    }
    auto num = [&](const char* key) -> std::size_t {
        auto it = kv.find(key);
        if (it == kv.end()) throw IntegrityError(std::string("checkpoint: config lacks ") + key);
        try {
            return std::stoul(it->second);
        } catch (const std::exception&) {
            throw IntegrityError(std::string("checkpoint: config field ") + key + " is not a number");
        }
    };
    c.rows = num("rows");
    c.cols = num("cols");
    c.classes = num("classes");
    c.features = num("features");
    c.lstm_hidden = num("lstm_hidden");
    c.disc_hidden = num("disc_hidden");
    c.disc_layers = num("disc_layers");
    c.decoder_hidden = num("decoder_hidden");
    if (std::sscanf(kv["seed"].c_str(), "%zux%zux%zu", &c.seed_channels, &c.seed_h, &c.seed_w) != 3)
        throw IntegrityError("checkpoint: malformed decoder seed");
    c.decoder.clear();
    std::istringstream layers(kv["decoder"]);
    while (std::getline(layers, item, ',')) {
        DecoderLayer l{};
        if (std::sscanf(item.c_str(), "%zu:%zux%zu:%zux%zu", &l.out_channels, &l.kernel_h, &l.kernel_w,
                        &l.stride_h, &l.stride_w) != 5)
            throw IntegrityError("checkpoint: malformed decoder layer '" + item + "'");
        c.decoder.push_back(l);
    }
    return c;
}

// --- parameter store ----------------------------------------------------------

namespace {

void fill_uniform(Tensor& t, float limit, std::uint64_t seed) {
    Rng rng(seed);
    for (auto& v : t.storage()) v = static_cast<float>(rng.uniform(-limit, limit));
}

float glorot(std::size_t fan_in, std::size_t fan_out) {
    return static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
}

}  // namespace

ParameterStore ParameterStore::initialize(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ParameterStore s;
    s.config_ = config;
    s.seed_ = seed;
    s.init_scheme_ = "dense/conv glorot-uniform; lstm uniform(1/sqrt(H)); forget bias 1; disc output zero";
    std::uint64_t counter = 0;
    auto add = [&](std::string name, Shape shape, float limit) {
        Tensor t(std::move(shape));
        if (limit > 0.0f) fill_uniform(t, limit, derive_seed(seed, Stream::init, counter));
        ++counter;
        s.tensors_.emplace_back(std::move(name), std::move(t));
    };
    auto dense = [&](const std::string& name, std::size_t in, std::size_t out, bool zero = false) {
        add(name + ".w", {in, out}, zero ? 0.0f : glorot(in, out));
        add(name + ".b", {out}, 0.0f);
    };

    const std::size_t H = config.lstm_hidden;
    add("enc.lstm.w", {config.cols + H, 4 * H}, static_cast<float>(1.0 / std::sqrt(static_cast<double>(H))));
    add("enc.lstm.b", {4 * H}, 0.0f);
    for (std::size_t j = H; j < 2 * H; ++j) s.tensors_.back().value[j] = 1.0f;  // forget gate
    dense("enc.class", H, config.classes);
    dense("enc.feature", H, config.features);

    const std::size_t seed_size = config.seed_channels * config.seed_h * config.seed_w;
    dense("dec.fc1", config.classes + config.features, config.decoder_hidden);
    dense("dec.fc2", config.decoder_hidden, seed_size);
    std::size_t in_ch = config.seed_channels;
    for (std::size_t i = 0; i < config.decoder.size(); ++i) {
        const auto& l = config.decoder[i];
        const std::size_t area = l.kernel_h * l.kernel_w;
        add("dec.conv" + std::to_string(i) + ".w", {in_ch, l.out_channels, l.kernel_h, l.kernel_w},
            glorot(in_ch * area, l.out_channels * area));
        add("dec.conv" + std::to_string(i) + ".b", {l.out_channels}, 0.0f);
        in_ch = l.out_channels;
    }

    for (const char* prefix : {"dcat", "dcont"}) {
        std::size_t in = std::string(prefix) == "dcat" ? config.classes : config.features;
        for (std::size_t layer = 0; layer < config.disc_layers; ++layer) {
            dense(std::string(prefix) + ".h" + std::to_string(layer), in, config.disc_hidden);
            in = config.disc_hidden;
        }
        dense(std::string(prefix) + ".out", in, 1, true);
    }
    s.index();
    return s;
}

ParameterStore::ParameterStore(const ParameterStore& other)
    : config_(other.config_),
      seed_(other.seed_),
      init_scheme_(other.init_scheme_),
      threads_(other.threads_),
      tensors_(other.tensors_) {
    index();
}

ParameterStore& ParameterStore::operator=(const ParameterStore& other) {
    if (this != &other) {
        config_ = other.config_;
        seed_ = other.seed_;
        init_scheme_ = other.init_scheme_;
        threads_ = other.threads_;
        tensors_ = other.tensors_;
        index();
    }
    return *this;
}

void ParameterStore::index() {
    by_name_.clear();
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (!by_name_.emplace(tensors_[i].name, i).second)
            throw IntegrityError("parameter store: duplicate tensor name " + tensors_[i].name);
    }
}

Parameter& ParameterStore::at(const std::string& name) {
    auto it = by_name_.find(name);
    if (it == by_name_.end()) throw PreconditionError("parameter store: no tensor named " + name);
    return tensors_[it->second];
}

const Parameter& ParameterStore::at(const std::string& name) const {
    return const_cast<ParameterStore*>(this)->at(name);
}

Group ParameterStore::group_of(const std::string& name) const {
    if (name.starts_with("enc.")) return kEncoder;
    if (name.starts_with("dec.")) return kDecoder;
    if (name.starts_with("dcat.")) return kDiscCat;
    return kDiscCont;
}

std::vector<Parameter*> ParameterStore::group(unsigned groups) {
    std::vector<Parameter*> out;
    for (auto& p : tensors_)
        if (group_of(p.name) & groups) out.push_back(&p);
    return out;
}

std::uint64_t ParameterStore::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& p : tensors_)
        h = ingest::fnv1a64({reinterpret_cast<const std::uint8_t*>(p.value.data()), p.value.size() * 4}, h);
    return h;
}

// --- forward ------------------------------------------------------------------

Forward::Forward(nn::Tape& tape, ParameterStore& store, unsigned grad_groups)
    : tape_(tape), store_(store), grad_groups_(grad_groups) {}

Var Forward::bind(const std::string& name) {
    if (auto it = bound_.find(name); it != bound_.end()) return it->second;
    Parameter& p = store_.at(name);
    Var v = (store_.group_of(name) & grad_groups_) ? tape_.leaf(p) : tape_.constant(p.value);
    bound_.emplace(name, v);
    return v;
}

EncoderOutput Forward::encode(Var frames) {
    const auto& cfg = store_.config();
    const auto& fv = frames.value();
    if (fv.rank() != 2 || fv.dim(1) != cfg.frame_size())
        throw DimensionError("encode: expected [B x " + std::to_string(cfg.frame_size()) + "] frames, got " +
                             nn::shape_str(fv.shape()));
    const std::size_t batch = fv.dim(0), H = cfg.lstm_hidden;
    Var w = bind("enc.lstm.w"), b = bind("enc.lstm.b");
    Var h = tape_.constant(Tensor::zeros({batch, H}));
    Var c = tape_.constant(Tensor::zeros({batch, H}));
    // Time rows are the sequence; each row of F bins is one input vector.
    for (std::size_t t = 0; t < cfg.rows; ++t) {
        auto [hn, cn] = nn::lstm_step(nn::slice_cols(frames, t * cfg.cols, cfg.cols), h, c, w, b);
        h = hn;
        c = cn;
    }
    EncoderOutput out;
    out.hidden = h;
    out.logits = nn::dense(h, bind("enc.class.w"), bind("enc.class.b"));
    out.y = nn::softmax(out.logits);
    out.z = nn::dense(h, bind("enc.feature.w"), bind("enc.feature.b"));
    return out;
}

Var Forward::decode(Var y, Var z) {
    const auto& cfg = store_.config();
    if (y.value().rank() != 2 || y.value().dim(1) != cfg.classes || z.value().rank() != 2 ||
        z.value().dim(1) != cfg.features)
        throw DimensionError("decode: expected y [B x " + std::to_string(cfg.classes) + "] and z [B x " +
                             std::to_string(cfg.features) + "], got " + nn::shape_str(y.shape()) + " and " +
                             nn::shape_str(z.shape()));
    const std::size_t batch = y.value().dim(0);
    Var x = nn::concat_cols(y, z);
    x = nn::relu(nn::dense(x, bind("dec.fc1.w"), bind("dec.fc1.b")));
    x = nn::relu(nn::dense(x, bind("dec.fc2.w"), bind("dec.fc2.b")));
    x = nn::reshape(x, {batch, cfg.seed_channels, cfg.seed_h, cfg.seed_w});
    for (std::size_t i = 0; i < cfg.decoder.size(); ++i) {
        const auto& l = cfg.decoder[i];
        const auto base = "dec.conv" + std::to_string(i);
        x = nn::conv_transpose2d(x, bind(base + ".w"), bind(base + ".b"), l.stride_h, l.stride_w);
        if (i + 1 < cfg.decoder.size()) x = nn::relu(x);
    }
    return nn::reshape(x, {batch, cfg.frame_size()});
}

Var Forward::discriminate(const std::string& prefix, Var in) {
    const auto& cfg = store_.config();
    Var x = in;
    for (std::size_t layer = 0; layer < cfg.disc_layers; ++layer) {
        const auto base = prefix + ".h" + std::to_string(layer);
        x = nn::relu(nn::dense(x, bind(base + ".w"), bind(base + ".b")));
    }
    return nn::dense(x, bind(prefix + ".out.w"), bind(prefix + ".out.b"));
}

Var Forward::discriminate_cont(Var z) {
    if (z.value().rank() != 2 || z.value().dim(1) != store_.config().features)
        throw DimensionError("discriminate_cont: expected [B x " + std::to_string(store_.config().features) +
                             "], got " + nn::shape_str(z.shape()));
    return discriminate("dcont", z);
}

Var Forward::discriminate_cat(Var y) {
    if (y.value().rank() != 2 || y.value().dim(1) != store_.config().classes)
        throw DimensionError("discriminate_cat: expected [B x " + std::to_string(store_.config().classes) +
                             "], got " + nn::shape_str(y.shape()));
    return discriminate("dcat", y);
}

Inference run_inference(ParameterStore& store, const Tensor& frames) {
    nn::Tape tape;
    Forward fwd(tape, store, 0);
    auto enc = fwd.encode(tape.constant(frames));
    Var rec = fwd.decode(enc.y, enc.z);
    Var dz = fwd.discriminate_cont(enc.z);
    Var dy = fwd.discriminate_cat(enc.y);
    return {enc.logits.value(), enc.y.value(), enc.z.value(), rec.value(), dz.value(), dy.value()};
}

LatentCode encode(ParameterStore& store, std::span<const float> frame) {
    const auto n = store.config().frame_size();
    if (frame.size() != n)
        throw DimensionError("encode: frame has " + std::to_string(frame.size()) + " values, model expects " +
                             std::to_string(n));
    nn::Tape tape;
    Forward fwd(tape, store, 0);
    auto enc = fwd.encode(tape.constant(Tensor({1, n}, std::vector<float>(frame.begin(), frame.end()))));
    return {enc.y.value().storage(), enc.z.value().storage()};
}

std::vector<float> decode(ParameterStore& store, const LatentCode& code) {
    nn::Tape tape;
    Forward fwd(tape, store, 0);
    Var y = tape.constant(Tensor({1, code.y.size()}, code.y));
    Var z = tape.constant(Tensor({1, code.z.size()}, code.z));
    return fwd.decode(y, z).value().storage();
}

float discriminate_cont(ParameterStore& store, std::span<const float> z) {
    nn::Tape tape;
    Forward fwd(tape, store, 0);
    return fwd.discriminate_cont(tape.constant(Tensor({1, z.size()}, std::vector<float>(z.begin(), z.end()))))
        .value()[0];
}

float discriminate_cat(ParameterStore& store, std::span<const float> y) {
    nn::Tape tape;
    Forward fwd(tape, store, 0);
    return fwd.discriminate_cat(tape.constant(Tensor({1, y.size()}, std::vector<float>(y.begin(), y.end()))))
        .value()[0];
}

LatentCode sample_prior(std::size_t classes, std::size_t features, Rng& rng) {
    LatentCode c;
    c.y.assign(classes, 0.0f);
    c.y[static_cast<std::size_t>(rng.integer(0, static_cast<long>(classes) - 1))] = 1.0f;
    c.z.resize(features);
    for (auto& v : c.z) v = static_cast<float>(rng.normal());
    return c;
}

std::pair<Tensor, Tensor> sample_prior_batch(std::size_t batch, std::size_t classes, std::size_t features,
                                             Rng& rng) {
    Tensor y({batch, classes}), z({batch, features});
    for (std::size_t b = 0; b < batch; ++b) {
        auto code = sample_prior(classes, features, rng);
        std::copy(code.y.begin(), code.y.end(), y.data() + b * classes);
        std::copy(code.z.begin(), code.z.end(), z.data() + b * features);
    }
    return {std::move(y), std::move(z)};
}

}  // namespace saife::model
