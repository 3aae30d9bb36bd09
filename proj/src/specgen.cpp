#include "saife/specgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "saife/errors.hpp"
#include "saife/rng.hpp"

namespace saife::specgen {

namespace {

constexpr std::string_view kFamilyNames[] = {"single-cont", "single-rshort", "mult-cont", "dethop"};
constexpr std::string_view kAnomalyNames[] = {"none", "scont", "randpulses", "wpulse", "oclass"};

// Linear power canvas for one frame.
struct Canvas {
    std::size_t rows, cols;
    std::vector<double> power;
    std::vector<std::uint8_t> touched;

    Canvas(std::size_t r, std::size_t c) : rows(r), cols(c), power(r * c, 0.0), touched(r * c, 0) {}

    void add(std::size_t r, long bin, double amp, bool wrap) {
        if (wrap) {
            const long n = static_cast<long>(cols);
            bin = ((bin % n) + n) % n;
        } else if (bin < 0 || bin >= static_cast<long>(cols)) {
            return;
        }
        const std::size_t i = r * cols + static_cast<std::size_t>(bin);
        power[i] += amp;
        touched[i] = 1;
    }

    // Flat band of `width` bins at `amp` with a one-bin raised-cosine
    // rolloff on each side (half amplitude at the half-bin point).
    void band(std::size_t r, long start, long width, double amp, bool wrap = false) {
        for (long b = 0; b < width; ++b) add(r, start + b, amp, wrap);
        add(r, start - 1, 0.5 * amp, wrap);
        add(r, start + width, 0.5 * amp, wrap);
    }
};

double amplitude(const GenConfig& cfg, double snr_db) {
    return cfg.noise_mean_linear() * std::pow(10.0, snr_db / 10.0);
}

std::vector<double> noise_linear(Rng& rng, const GenConfig& cfg) {
    const double mean = cfg.noise_mean_linear();
    std::vector<double> n(cfg.rows * cfg.cols);
    for (auto& v : n) v = std::max(mean * (1.0 + cfg.noise_rel_std * rng.normal()), mean * 1e-3);
    return n;
}

float to_db(double linear) { return static_cast<float>(10.0 * std::log10(linear)); }

long bins_for(double bandwidth, std::size_t cols) {
    return std::max(1L, std::lround(bandwidth * static_cast<double>(cols)));
}

// Random placement of a `width`-bin band fully inside the frame.
long random_start(Rng& rng, long width, std::size_t cols) {
    return rng.integer(0, static_cast<long>(cols) - width);
}

}  // namespace

std::string_view to_string(Family f) { return kFamilyNames[static_cast<int>(f)]; }
std::string_view to_string(AnomalyKind k) { return kAnomalyNames[static_cast<int>(k)]; }

Family parse_family(std::string_view name) {
    for (int i = 0; i < 4; ++i)
        if (kFamilyNames[i] == name) return static_cast<Family>(i);
    throw ConfigError("unknown signal family '" + std::string(name) +
                      "' (expected single-cont, single-rshort, mult-cont or dethop)");
}

AnomalyKind parse_anomaly(std::string_view name) {
    for (int i = 1; i < 5; ++i)
        if (kAnomalyNames[i] == name) return static_cast<AnomalyKind>(i);
    throw ConfigError("unknown anomaly kind '" + std::string(name) +
                      "' (expected scont, randpulses, wpulse or oclass)");
}

const std::vector<Family>& all_families() {
    static const std::vector<Family> f{Family::single_cont, Family::single_rshort, Family::mult_cont,
                                       Family::dethop};
    return f;
}

std::size_t AnomalyMask::count() const {
    return static_cast<std::size_t>(std::count(cells.begin(), cells.end(), std::uint8_t{1}));
}

double GenConfig::noise_mean_linear() const { return std::pow(10.0, noise_floor_db / 10.0); }

void GenConfig::validate() const {
    if (rows < 2 || cols < 8) throw ConfigError("generator: frame must be at least 2 x 8");
    if (!(snr_min_db <= snr_max_db)) throw ConfigError("generator: empty SNR range");
    if (!(bandwidth_min > 0.0 && bandwidth_min <= bandwidth_max && bandwidth_max <= 1.0))
        throw ConfigError("generator: bandwidth range must lie in (0, 1]");
    if (!(mult_bandwidth_min > 0.0 && mult_bandwidth_min <= mult_bandwidth_max && mult_bandwidth_max <= 1.0))
        throw ConfigError("generator: mult-cont bandwidth range must lie in (0, 1]");
    if (mult_count_min < 1 || mult_count_min > mult_count_max)
        throw ConfigError("generator: invalid mult-cont signal count range");
    if (noise_rel_std < 0.0) throw ConfigError("generator: noise spread must be non-negative");
}

GeneratedSignal gen_signal(Family family, std::uint64_t seed, const GenConfig& cfg, int class_id) {
    cfg.validate();
    if (static_cast<int>(family) < 0 || static_cast<int>(family) > 3)
        throw ConfigError("gen_signal: invalid family");
    Rng rng(seed);
    const std::size_t rows = cfg.rows, cols = cfg.cols;
    Canvas canvas(rows, cols);
    SignalLabel label;
    label.class_id = class_id >= 0 ? class_id : static_cast<int>(family);
    const auto draw_snr = [&] { return rng.uniform(cfg.snr_min_db, cfg.snr_max_db); };
    const double fcols = static_cast<double>(cols);

    switch (family) {
        case Family::single_cont:
        case Family::single_rshort: {
            const long width = bins_for(rng.uniform(cfg.bandwidth_min, cfg.bandwidth_max), cols);
            const long start = random_start(rng, width, cols);
            const double snr = draw_snr();
            std::size_t r0 = 0, r1 = rows;
            if (family == Family::single_rshort) {
                const auto len = static_cast<std::size_t>(rng.integer(1, static_cast<long>(rows) - 1));
                r0 = static_cast<std::size_t>(rng.integer(0, static_cast<long>(rows - len)));
                r1 = r0 + len;
            }
            for (std::size_t r = r0; r < r1; ++r) canvas.band(r, start, width, amplitude(cfg, snr));
            label.center_freq = static_cast<float>((start + width / 2.0) / fcols);
            label.bandwidth = static_cast<float>(width / fcols);
            label.snr_db = static_cast<float>(snr);
            break;
        }
        case Family::mult_cont: {
            const long n = rng.integer(cfg.mult_count_min, cfg.mult_count_max);
            long lo = static_cast<long>(cols), hi = 0;
            double snr_sum = 0.0;
            for (long s = 0; s < n; ++s) {
                const long width = bins_for(rng.uniform(cfg.mult_bandwidth_min, cfg.mult_bandwidth_max), cols);
                const long start = random_start(rng, width, cols);
                const double snr = draw_snr();
                for (std::size_t r = 0; r < rows; ++r) canvas.band(r, start, width, amplitude(cfg, snr));
                lo = std::min(lo, start);
                hi = std::max(hi, start + width);
                snr_sum += snr;
            }
            // Position and bandwidth describe the span of all components.
            label.center_freq = static_cast<float>((lo + hi) / 2.0 / fcols);
            label.bandwidth = static_cast<float>((hi - lo) / fcols);
            label.snr_db = static_cast<float>(snr_sum / static_cast<double>(n));
            break;
        }
        case Family::dethop: {
            const long width = bins_for(rng.uniform(cfg.bandwidth_min, cfg.bandwidth_max), cols);
            const long start = random_start(rng, width, cols);
            const double snr = draw_snr();
            const long stride = static_cast<long>(cfg.hop_stride());
            for (std::size_t r = 0; r < rows; ++r)
                canvas.band(r, start + static_cast<long>(r) * stride, width, amplitude(cfg, snr), true);
            label.center_freq = static_cast<float>((start + width / 2.0) / fcols);
            label.bandwidth = static_cast<float>(width / fcols);
            label.snr_db = static_cast<float>(snr);
            break;
        }
    }

    const auto noise = noise_linear(rng, cfg);
    GeneratedSignal out;
    out.frame.rows = rows;
    out.frame.cols = cols;
    out.frame.band_id = label.class_id;
    out.frame.db.resize(rows * cols);
    for (std::size_t i = 0; i < rows * cols; ++i) out.frame.db[i] = to_db(noise[i] + canvas.power[i]);
    out.label = label;
    out.occupancy = std::move(canvas.touched);
    out.signal_linear = std::move(canvas.power);
    return out;
}

PsdFrame noise_frame(std::uint64_t seed, const GenConfig& cfg) {
    cfg.validate();
    Rng rng(seed);
    const auto noise = noise_linear(rng, cfg);
    PsdFrame f{cfg.rows, cfg.cols, std::vector<float>(noise.size()), 0};
    for (std::size_t i = 0; i < noise.size(); ++i) f.db[i] = to_db(noise[i]);
    return f;
}

Injected inject_anomaly(const PsdFrame& frame, AnomalyKind kind, double snr_db, std::uint64_t seed,
                        std::span<const GeneratedSignal> library, const GenConfig& cfg) {
    if (frame.rows != cfg.rows || frame.cols != cfg.cols)
        throw DimensionError("inject_anomaly: frame is " + std::to_string(frame.rows) + "x" +
                             std::to_string(frame.cols) + ", generator expects " +
                             std::to_string(cfg.rows) + "x" + std::to_string(cfg.cols));
    if (kind != AnomalyKind::oclass && (snr_db < cfg.anomaly_snr_min_db || snr_db > cfg.anomaly_snr_max_db))
        throw ConfigError("inject_anomaly: SNR " + std::to_string(snr_db) + " dB outside [" +
                          std::to_string(cfg.anomaly_snr_min_db) + ", " +
                          std::to_string(cfg.anomaly_snr_max_db) + "]");
    Rng rng(seed);
    const std::size_t rows = frame.rows, cols = frame.cols;
    Injected out;
    out.mask.kind = kind;
    out.mask.rows = rows;
    out.mask.cols = cols;

    if (kind == AnomalyKind::none) {
        out.frame = frame;
        out.mask.cells.assign(rows * cols, 0);
        return out;
    }

    if (kind == AnomalyKind::oclass) {
        std::vector<std::size_t> candidates;
        for (std::size_t i = 0; i < library.size(); ++i)
            if (library[i].label.class_id != frame.band_id) candidates.push_back(i);
        if (candidates.empty())
            throw PreconditionError("inject_anomaly: oclass needs library frames of a class other than " +
                                    std::to_string(frame.band_id));
        const auto& pick = library[candidates[static_cast<std::size_t>(
            rng.integer(0, static_cast<long>(candidates.size()) - 1))]];
        if (pick.frame.rows != rows || pick.frame.cols != cols)
            throw DimensionError("inject_anomaly: library frame extents differ from the target frame");
        out.frame = pick.frame;
        out.frame.band_id = frame.band_id;
        out.mask.cells = pick.occupancy;
        return out;
    }

    Canvas canvas(rows, cols);
    const double amp = amplitude(cfg, snr_db);
    switch (kind) {
        case AnomalyKind::scont: {
            const long width = bins_for(rng.uniform(cfg.scont_bandwidth_min, cfg.scont_bandwidth_max), cols);
            const long start = random_start(rng, width, cols);
            for (std::size_t r = 0; r < rows; ++r) canvas.band(r, start, width, amp);
            break;
        }
        case AnomalyKind::randpulses: {
            const long n = rng.integer(cfg.pulses_min, cfg.pulses_max);
            for (long p = 0; p < n; ++p) {
                const long len = rng.integer(1, std::min(2L, static_cast<long>(rows)));
                const auto r0 = static_cast<std::size_t>(rng.integer(0, static_cast<long>(rows) - len));
                const long width = rng.integer(static_cast<long>(cfg.pulse_bins_min),
                                               static_cast<long>(cfg.pulse_bins_max));
                const long start = random_start(rng, width, cols);
                for (std::size_t r = r0; r < r0 + static_cast<std::size_t>(len); ++r)
                    canvas.band(r, start, width, amp);
            }
            break;
        }
        case AnomalyKind::wpulse: {
            const long max_rows = std::max(1L, static_cast<long>(rows) / 2);
            const long n = rng.integer(1, max_rows);
            std::vector<std::size_t> order(rows);
            std::iota(order.begin(), order.end(), std::size_t{0});
            std::shuffle(order.begin(), order.end(), rng.engine());
            for (long i = 0; i < n; ++i)
                for (std::size_t c = 0; c < cols; ++c) canvas.add(order[static_cast<std::size_t>(i)],
                                                                  static_cast<long>(c), amp, false);
            break;
        }
        default:
            break;
    }

    out.frame = frame;
    out.mask.cells = canvas.touched;
    for (std::size_t i = 0; i < rows * cols; ++i)
        if (canvas.touched[i]) {
            const double before = std::pow(10.0, static_cast<double>(frame.db[i]) / 10.0);
            out.frame.db[i] = to_db(before + canvas.power[i]);
        }
    return out;
}

std::vector<GeneratedSignal> make_library(std::span<const Family> families, std::size_t per_family,
                                          std::uint64_t seed, const GenConfig& config) {
    std::vector<GeneratedSignal> lib;
    lib.reserve(families.size() * per_family);
    for (std::size_t f = 0; f < families.size(); ++f)
        for (std::size_t i = 0; i < per_family; ++i)
            lib.push_back(gen_signal(families[f], derive_seed(seed, Stream::library, f * per_family + i),
                                     config, static_cast<int>(f)));
    return lib;
}

PsdFrame Dataset::frame_copy(std::size_t i) const {
    auto f = frame(i);
    return PsdFrame{rows, cols, std::vector<float>(f.begin(), f.end()), band_ids[i]};
}

AnomalyMask Dataset::mask(std::size_t i) const {
    AnomalyMask m;
    m.rows = rows;
    m.cols = cols;
    if (!has_masks) {
        m.cells.assign(frame_size(), 0);
        return m;
    }
    m.kind = mask_kinds[i];
    m.cells.assign(masks.begin() + static_cast<long>(i * frame_size()),
                   masks.begin() + static_cast<long>((i + 1) * frame_size()));
    return m;
}

std::size_t Dataset::labeled_count() const {
    return static_cast<std::size_t>(std::count(labeled.begin(), labeled.end(), std::uint8_t{1}));
}

Dataset build_dataset(const DatasetConfig& config) {
    config.gen.validate();
    if (config.families.empty()) throw ConfigError("dataset: at least one signal family required");
    if (config.train_count < 1 || config.test_count < 1)
        throw ConfigError("dataset: train and test counts must be at least 1");
    if (!(config.label_fraction > 0.0 && config.label_fraction <= 1.0))
        throw ConfigError("dataset: label fraction must lie in (0, 1]");

    const std::size_t total = config.train_count + config.test_count;
    const std::size_t k = config.families.size();
    Dataset ds;
    ds.rows = config.gen.rows;
    ds.cols = config.gen.cols;
    for (auto f : config.families) ds.class_names.emplace_back(to_string(f));
    ds.frames.resize(total * ds.frame_size());
    ds.labels.resize(total);
    ds.band_ids.resize(total);

    // Frame i belongs to class i mod k, which keeps family counts balanced.
    const long n = static_cast<long>(total);
#pragma omp parallel for schedule(static)
    for (long i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const int cls = static_cast<int>(idx % k);
        auto sig = gen_signal(config.families[static_cast<std::size_t>(cls)],
                              derive_seed(config.seed, Stream::frames, idx), config.gen, cls);
        std::copy(sig.frame.db.begin(), sig.frame.db.end(), ds.frames.begin() + static_cast<long>(idx * ds.frame_size()));
        ds.labels[idx] = sig.label;
        ds.band_ids[idx] = cls;
    }

    // Seeded permutation; the first train_count indices form the training split.
    std::vector<std::uint32_t> perm(total);
    std::iota(perm.begin(), perm.end(), 0u);
    Rng split_rng(derive_seed(config.seed, Stream::split));
    std::shuffle(perm.begin(), perm.end(), split_rng.engine());
    ds.train_indices.assign(perm.begin(), perm.begin() + static_cast<long>(config.train_count));
    ds.test_indices.assign(perm.begin() + static_cast<long>(config.train_count), perm.end());
    std::sort(ds.train_indices.begin(), ds.train_indices.end());
    std::sort(ds.test_indices.begin(), ds.test_indices.end());

    ds.labeled.assign(total, 0);
    const auto n_labeled = static_cast<std::size_t>(
        std::floor(config.label_fraction * static_cast<double>(config.train_count) + 1e-9));
    std::vector<std::uint32_t> pool = ds.train_indices;
    Rng label_rng(derive_seed(config.seed, Stream::labels));
    std::shuffle(pool.begin(), pool.end(), label_rng.engine());
    for (std::size_t i = 0; i < n_labeled; ++i) ds.labeled[pool[i]] = 1;
    return ds;
}

Dataset build_anomaly_set(const Dataset& base, std::span<const std::uint32_t> indices, AnomalyKind kind,
                          double snr_db, double fraction, std::uint64_t seed, const GenConfig& gen) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ConfigError("anomaly set: fraction must lie in [0, 1]");
    Dataset out;
    out.rows = base.rows;
    out.cols = base.cols;
    out.class_names = base.class_names;
    out.has_masks = true;
    const std::size_t n = indices.size();
    out.frames.resize(n * base.frame_size());
    out.labels.resize(n);
    out.band_ids.resize(n);
    out.labeled.assign(n, 0);
    out.mask_kinds.assign(n, AnomalyKind::none);
    out.masks.assign(n * base.frame_size(), 0);

    std::vector<Family> families;
    for (const auto& name : base.class_names) families.push_back(parse_family(name));
    std::vector<GeneratedSignal> library;
    if (kind == AnomalyKind::oclass) library = make_library(families, 64, seed, gen);

    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    Rng pick(derive_seed(seed, Stream::anomaly));
    std::shuffle(order.begin(), order.end(), pick.engine());
    const auto n_anom = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(n) + 1e-9));
    std::vector<std::uint8_t> inject(n, 0);
    for (std::size_t i = 0; i < n_anom; ++i) inject[order[i]] = 1;

    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t src = indices[i];
        out.labels[i] = base.labels[src];
        out.band_ids[i] = base.band_ids[src];
        PsdFrame f = base.frame_copy(src);
        if (inject[i]) {
            auto inj = inject_anomaly(f, kind, snr_db, derive_seed(seed, Stream::anomaly, i + 1), library, gen);
            f = std::move(inj.frame);
            out.mask_kinds[i] = kind;
            std::copy(inj.mask.cells.begin(), inj.mask.cells.end(),
                      out.masks.begin() + static_cast<long>(i * base.frame_size()));
        }
        std::copy(f.db.begin(), f.db.end(), out.frames.begin() + static_cast<long>(i * base.frame_size()));
    }
    out.test_indices.resize(n);
    std::iota(out.test_indices.begin(), out.test_indices.end(), 0u);
    return out;
}

}  // namespace saife::specgen
