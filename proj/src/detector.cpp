#include "saife/detector.hpp"

#include <bit>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "saife/errors.hpp"

namespace saife::detector {

namespace {

constexpr const char* kTriggerNames[] = {"recon", "disc_cont", "disc_cat", "class"};

double z_score(double value, const trainer::LossStats& s) {
    const double diff = value - s.mean;
    if (s.stddev > 0.0) return diff / s.stddev;
    if (diff == 0.0) return 0.0;
    return diff > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
}

}  // namespace

std::vector<std::string> trigger_names(unsigned triggers) {
    std::vector<std::string> out;
    for (unsigned i = 0; i < 4; ++i)
        if (triggers & (1u << i)) out.emplace_back(kTriggerNames[i]);
    return out;
}

unsigned parse_triggers(std::span<const std::string> names) {
    unsigned out = 0;
    for (const auto& n : names) {
        unsigned bit = 0;
        for (unsigned i = 0; i < 4; ++i)
            if (n == kTriggerNames[i]) bit = 1u << i;
        if (!bit) throw InputError("unknown trigger '" + n + "'");
        out |= bit;
    }
    return out;
}

unsigned evaluate_triggers(const trainer::FrameLosses& l, int expected_class, const trainer::ThresholdStats& s) {
    const double n = s.n_sigma;
    unsigned t = 0;
    if (l.r_l > s.recon.mean + n * s.recon.stddev) t |= kRecon;
    auto outside = [n](double v, const trainer::LossStats& st) {
        return v < st.mean - n * st.stddev || v > st.mean + n * st.stddev;
    };
    if (outside(l.d_cont, s.disc_cont)) t |= kDiscCont;
    if (outside(l.d_cat, s.disc_cat)) t |= kDiscCat;
    if (expected_class >= 0 && l.predicted_class != expected_class) t |= kClass;
    return t;
}

double composite_score(const trainer::FrameLosses& l, int expected_class, const trainer::ThresholdStats& s) {
    if (expected_class >= 0 && l.predicted_class != expected_class) return std::numeric_limits<double>::infinity();
    return std::max({z_score(l.r_l, s.recon), std::fabs(z_score(l.d_cont, s.disc_cont)),
                     std::fabs(z_score(l.d_cat, s.disc_cat))});
}

void check_compatible(const model::ParameterStore& store, const trainer::ThresholdStats& stats) {
    if (stats.config_hash != store.config().hash())
        throw ConfigError("threshold stats were calibrated for another model config (checkpoint config hash " +
                          store.config().hash_hex() + ")");
    if (stats.params_fingerprint != store.fingerprint())
        throw ConfigError("threshold stats were calibrated with different parameters than the checkpoint");
}

std::vector<float> localize(std::span<const float> frame, std::span<const float> reconstruction) {
    if (frame.size() != reconstruction.size())
        throw DimensionError("localize: frame has " + std::to_string(frame.size()) + " cells, reconstruction " +
                             std::to_string(reconstruction.size()));
    std::vector<float> out(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) out[i] = std::fabs(reconstruction[i] - frame[i]);
    return out;
}

std::vector<AnomalyReport> score_frames(std::span<const float> frames_db, std::span<const int> expected,
                                        model::ParameterStore& store, const trainer::ThresholdStats& stats,
                                        std::size_t batch) {
    check_compatible(store, stats);
    const auto& cfg = store.config();
    const std::size_t fs = cfg.frame_size();
    if (frames_db.size() % fs != 0)
        throw DimensionError("score_frames: " + std::to_string(frames_db.size()) +
                             " values is not a whole number of " + std::to_string(cfg.rows) + "x" +
                             std::to_string(cfg.cols) + " frames");
    const std::size_t n = frames_db.size() / fs;
    if (expected.size() != n && expected.size() != 1 && n > 0)
        throw DimensionError("score_frames: " + std::to_string(expected.size()) + " expected classes for " +
                             std::to_string(n) + " frames");
    std::vector<float> x(frames_db.size());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = stats.norm.apply(frames_db[i]);
    std::vector<float> rec;
    const auto losses = trainer::frame_losses(store, x, rec, batch);

    std::vector<AnomalyReport> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& r = out[i];
        r.index = i;
        r.expected_class = expected.size() == 1 ? expected[0] : expected[i];
        r.r_l = losses[i].r_l;
        r.d_lcont = losses[i].d_cont;
        r.d_lcat = losses[i].d_cat;
        r.predicted_class = losses[i].predicted_class;
        r.triggers = evaluate_triggers(losses[i], r.expected_class, stats);
        r.is_anomalous = r.triggers != 0;
        r.rows = cfg.rows;
        r.cols = cfg.cols;
        r.localization = localize({x.data() + i * fs, fs}, {rec.data() + i * fs, fs});
    }
    return out;
}

AnomalyReport score_frame(std::span<const float> frame_db, int expected_class, model::ParameterStore& store,
                          const trainer::ThresholdStats& stats) {
    const auto fs = store.config().frame_size();
    if (frame_db.size() != fs)
        throw DimensionError("score_frame: frame has " + std::to_string(frame_db.size()) + " cells, model expects " +
                             std::to_string(fs));
    const int e[1] = {expected_class};
    return score_frames(frame_db, e, store, stats).front();
}

StreamSummary stream_detect(const std::function<bool(specgen::PsdFrame&)>& next, int expected_class,
                            model::ParameterStore& store, const trainer::ThresholdStats& stats,
                            const WindowConfig& window, const std::function<void(const WindowCount&)>& on_window,
                            const std::function<void(const AnomalyReport&)>& on_flagged) {
    check_compatible(store, stats);
    const std::size_t fs = store.config().frame_size();
    const std::size_t batch = std::max<std::size_t>(window.batch, 1);
    const std::size_t win = std::max<std::size_t>(window.window, 1);
    StreamSummary summary;
    WindowCount current;
    std::vector<float> buffer;
    std::vector<int> bands;
    buffer.reserve(batch * fs);
    const int e[1] = {expected_class};

    auto flush = [&] {
        if (buffer.empty()) return;
        auto reports = score_frames(buffer, e, store, stats, batch);
        for (std::size_t i = 0; i < reports.size(); ++i) {
            auto& r = reports[i];
            r.index = summary.frames;
            r.band = bands[i];
            ++summary.frames;
            ++current.frames;
            if (r.is_anomalous) {
                ++summary.flagged;
                ++current.anomalous;
                if (on_flagged) on_flagged(r);
            }
            if (current.frames == win) {
                if (on_window) on_window(current);
                ++summary.windows;
                current = WindowCount{current.window + 1, summary.frames, 0, 0};
            }
        }
        buffer.clear();
        bands.clear();
    };

    specgen::PsdFrame frame;
    while (next(frame)) {
        if (frame.db.size() != fs)
            throw DimensionError("stream_detect: frame " + std::to_string(summary.frames + bands.size()) + " has " +
                                 std::to_string(frame.db.size()) + " cells, model expects " + std::to_string(fs));
        buffer.insert(buffer.end(), frame.db.begin(), frame.db.end());
        bands.push_back(frame.band_id);
        if (bands.size() == batch) flush();
    }
    flush();
    if (current.frames > 0) {
        if (on_window) on_window(current);
        ++summary.windows;
    }
    return summary;
}

// --- serialization -----------------------------------------------------------------

std::string AnomalyReport::to_json(bool with_map) const {
    nlohmann::ordered_json j;
    j["index"] = index;
    j["band"] = band;
    j["r_l"] = r_l;
    j["d_lcont"] = d_lcont;
    j["d_lcat"] = d_lcat;
    j["predicted_class"] = predicted_class;
    j["expected_class"] = expected_class;
    j["is_anomalous"] = is_anomalous;
    j["triggers"] = trigger_names(triggers);
    if (with_map && !localization.empty()) {
        std::vector<std::uint8_t> bytes;
        bytes.reserve(localization.size() * 4);
        for (float v : localization) {
            const auto u = std::bit_cast<std::uint32_t>(v);
            for (int b = 0; b < 4; ++b) bytes.push_back(static_cast<std::uint8_t>(u >> (8 * b)));
        }
        j["localization"] = {{"rows", rows}, {"cols", cols}, {"encoding", "base64-f32le"},
                             {"data", base64_encode(bytes)}};
    }
    return j.dump();
}

AnomalyReport AnomalyReport::from_json(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
        AnomalyReport r;
        r.index = j.at("index").get<std::size_t>();
        r.band = j.at("band").get<int>();
        r.r_l = j.at("r_l").get<double>();
        r.d_lcont = j.at("d_lcont").get<double>();
        r.d_lcat = j.at("d_lcat").get<double>();
        r.predicted_class = j.at("predicted_class").get<int>();
        r.expected_class = j.at("expected_class").get<int>();
        r.is_anomalous = j.at("is_anomalous").get<bool>();
        r.triggers = parse_triggers(j.at("triggers").get<std::vector<std::string>>());
        if (j.contains("localization")) {
            const auto& m = j["localization"];
            r.rows = m.at("rows").get<std::size_t>();
            r.cols = m.at("cols").get<std::size_t>();
            const auto bytes = base64_decode(m.at("data").get<std::string>());
            if (bytes.size() != r.rows * r.cols * 4)
                throw InputError("anomaly report: localization map size does not match its extents");
            r.localization.resize(r.rows * r.cols);
            for (std::size_t i = 0; i < r.localization.size(); ++i) {
                std::uint32_t u = 0;
                for (int b = 0; b < 4; ++b) u |= static_cast<std::uint32_t>(bytes[i * 4 + static_cast<std::size_t>(b)]) << (8 * b);
                r.localization[i] = std::bit_cast<float>(u);
            }
        }
        return r;
    } catch (const nlohmann::json::exception& e) {
        throw InputError(std::string("anomaly report: ") + e.what());
    }
}

namespace {
constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::span<const std::uint8_t> in) {
    std::string out;
    out.reserve((in.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < in.size(); i += 3) {
        const std::uint32_t v = (in[i] << 16) | (in[i + 1] << 8) | in[i + 2];
        for (int s = 18; s >= 0; s -= 6) out += kAlphabet[(v >> s) & 63];
    }
    if (const auto rest = in.size() - i; rest > 0) {
        std::uint32_t v = in[i] << 16;
        if (rest == 2) v |= in[i + 1] << 8;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(const std::string& text) {
    if (text.size() % 4 != 0) throw InputError("base64: length is not a multiple of 4");
    auto value = [](char c) -> int {
        if (c >= 'A' && c <= 'Z') return c - 'A';
        if (c >= 'a' && c <= 'z') return c - 'a' + 26;
        if (c >= '0' && c <= '9') return c - '0' + 52;
        if (c == '+') return 62;
        if (c == '/') return 63;
        return -1;
    };
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        const bool last = i + 4 == text.size();
        const int pad = last ? (text[i + 3] == '=') + (text[i + 2] == '=') : 0;
        std::uint32_t v = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + static_cast<std::size_t>(k)];
            const int d = (k >= 4 - pad) ? 0 : value(c);
            if (d < 0) throw InputError("base64: invalid character");
            v = (v << 6) | static_cast<std::uint32_t>(d);
        }
        out.push_back(static_cast<std::uint8_t>(v >> 16));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
    }
    return out;
}

}  // namespace saife::detector
