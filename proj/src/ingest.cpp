#include "saife/ingest.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "bytes.hpp"
#include "saife/errors.hpp"

namespace saife {

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write to '" + path + "' failed");
}

}  // namespace detail

namespace ingest {

using specgen::AnomalyKind;
using specgen::Dataset;

// --- normalization ----------------------------------------------------------

NormStats fit_normalizer(std::span<const float> values) {
    if (values.empty()) throw PreconditionError("normalizer: no values to fit");
    double sum = 0.0;
    for (float v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sq = 0.0;
    for (float v : values) sq += (v - mean) * (v - mean);
    const double stddev = std::sqrt(sq / static_cast<double>(values.size()));
    if (!(stddev > 0.0)) throw ConfigError("normalizer: zero standard deviation");
    return {mean, stddev};
}

NormStats fit_normalizer(const Dataset& ds) {
    if (ds.train_indices.empty()) throw PreconditionError("normalizer: dataset has no training split");
    std::vector<float> values;
    values.reserve(ds.train_indices.size() * ds.frame_size());
    for (auto i : ds.train_indices) {
        auto f = ds.frame(i);
        values.insert(values.end(), f.begin(), f.end());
    }
    return fit_normalizer(values);
}

std::vector<float> normalize(std::span<const float> db, const NormStats& stats) {
    if (!(stats.stddev > 0.0)) throw ConfigError("normalize: zero standard deviation");
    std::vector<float> out(db.size());
    for (std::size_t i = 0; i < db.size(); ++i) out[i] = stats.apply(db[i]);
    return out;
}

std::vector<float> denormalize(std::span<const float> values, const NormStats& stats) {
    std::vector<float> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = stats.invert(values[i]);
    return out;
}

// --- dataset files ------------------------------------------------------------
//
// header (48 bytes):
//   "SAIFEDS\0" | u32 version | u32 rows | u32 cols | u32 count | u32 classes
//   | u32 flags | u64 payload fnv1a64 | u64 sidecar fnv1a64
// payload: count*rows*cols float32
// sidecars: class names (u16 length + bytes) | labels | masks | split

namespace {

constexpr char kMagic[8] = {'S', 'A', 'I', 'F', 'E', 'D', 'S', '\0'};
constexpr std::uint32_t kHasLabels = 1, kHasMasks = 2, kHasSplit = 4;
constexpr std::size_t kHeaderSize = 48;

}  // namespace

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes, std::uint64_t h) {
    for (auto b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
    const std::size_t n = ds.count();
    if (ds.frames.size() != n * ds.frame_size())
        throw DimensionError("write_dataset: frame payload does not match label count");
    detail::ByteWriter w;
    for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u32(kDatasetVersion);
    w.u32(static_cast<std::uint32_t>(ds.rows));
    w.u32(static_cast<std::uint32_t>(ds.cols));
    w.u32(static_cast<std::uint32_t>(n));
    w.u32(static_cast<std::uint32_t>(ds.class_count()));
    const bool has_split = !ds.train_indices.empty() || !ds.test_indices.empty();
    w.u32(kHasLabels | (ds.has_masks ? kHasMasks : 0u) | (has_split ? kHasSplit : 0u));
    w.u64(0);
    w.u64(0);
    for (float v : ds.frames) w.f32(v);
    const std::size_t sidecar_start = w.size();
    for (const auto& name : ds.class_names) w.str16(name);
    for (std::size_t i = 0; i < n; ++i) {
        const auto& l = ds.labels[i];
        w.i32(l.class_id);
        w.f32(l.center_freq);
        w.f32(l.bandwidth);
        w.f32(l.snr_db);
        w.i32(ds.band_ids[i]);
        w.u8(ds.labeled.empty() ? 0 : ds.labeled[i]);
    }
    if (ds.has_masks) {
        for (std::size_t i = 0; i < n; ++i) {
            w.u8(static_cast<std::uint8_t>(ds.mask_kinds[i]));
            w.bytes({ds.masks.data() + i * ds.frame_size(), ds.frame_size()});
        }
    }
    if (has_split) {
        w.u32(static_cast<std::uint32_t>(ds.train_indices.size()));
        for (auto i : ds.train_indices) w.u32(i);
        w.u32(static_cast<std::uint32_t>(ds.test_indices.size()));
        for (auto i : ds.test_indices) w.u32(i);
    }
    auto& buf = w.buffer();
    const std::span<const std::uint8_t> all(buf);
    w.patch_u64(32, fnv1a64(all.subspan(kHeaderSize, sidecar_start - kHeaderSize)));
    w.patch_u64(40, fnv1a64(all.subspan(sidecar_start)));
    return std::move(buf);
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
    detail::ByteReader r(bytes, "dataset");
    auto magic = r.bytes(8);
    if (!std::equal(magic.begin(), magic.end(), reinterpret_cast<const std::uint8_t*>(kMagic)))
        throw IntegrityError("dataset: bad magic, not a dataset file");
    const auto version = r.u32();
    if (version != kDatasetVersion)
        throw VersionError("dataset: file version " + std::to_string(version) + ", reader supports " +
                           std::to_string(kDatasetVersion));
    Dataset ds;
    ds.rows = r.u32();
    ds.cols = r.u32();
    const std::size_t n = r.u32();
    const std::size_t k = r.u32();
    const auto flags = r.u32();
    const auto payload_sum = r.u64();
    const auto sidecar_sum = r.u64();
    const std::size_t payload_bytes = n * ds.frame_size() * 4;
    if (r.remaining() < payload_bytes)
        throw IntegrityError("dataset: payload holds " + std::to_string(r.remaining()) + " bytes, header needs " +
                             std::to_string(payload_bytes));
    if (fnv1a64(bytes.subspan(kHeaderSize, payload_bytes)) != payload_sum)
        throw IntegrityError("dataset: payload checksum mismatch");
    if (fnv1a64(bytes.subspan(kHeaderSize + payload_bytes)) != sidecar_sum)
        throw IntegrityError("dataset: sidecar checksum mismatch");
    ds.frames.resize(n * ds.frame_size());
    for (auto& v : ds.frames) v = r.f32();
    for (std::size_t c = 0; c < k; ++c) ds.class_names.push_back(r.str16());
    ds.labels.resize(n);
    ds.band_ids.assign(n, 0);
    ds.labeled.assign(n, 0);
    if (flags & kHasLabels) {
        for (std::size_t i = 0; i < n; ++i) {
            auto& l = ds.labels[i];
            l.class_id = r.i32();
            l.center_freq = r.f32();
            l.bandwidth = r.f32();
            l.snr_db = r.f32();
            ds.band_ids[i] = r.i32();
            ds.labeled[i] = r.u8();
        }
    }
    if (flags & kHasMasks) {
        ds.has_masks = true;
        ds.mask_kinds.resize(n);
        ds.masks.resize(n * ds.frame_size());
        for (std::size_t i = 0; i < n; ++i) {
            const auto kind = r.u8();
            if (kind > static_cast<std::uint8_t>(AnomalyKind::oclass))
                throw IntegrityError("dataset: unknown anomaly kind " + std::to_string(kind));
            ds.mask_kinds[i] = static_cast<AnomalyKind>(kind);
            auto m = r.bytes(ds.frame_size());
            std::copy(m.begin(), m.end(), ds.masks.begin() + static_cast<long>(i * ds.frame_size()));
        }
    }
    if (flags & kHasSplit) {
        ds.train_indices.resize(r.u32());
        for (auto& i : ds.train_indices) i = r.u32();
        ds.test_indices.resize(r.u32());
        for (auto& i : ds.test_indices) i = r.u32();
        for (auto i : ds.train_indices)
            if (i >= n) throw IntegrityError("dataset: split index out of range");
        for (auto i : ds.test_indices)
            if (i >= n) throw IntegrityError("dataset: split index out of range");
    }
    if (r.remaining() != 0) throw IntegrityError("dataset: trailing bytes after sidecars");
    return ds;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
    detail::write_file(path.string(), encode_dataset(ds));
}

Dataset read_dataset(const std::filesystem::path& path) {
    return decode_dataset(detail::read_file(path.string()));
}

// --- bands --------------------------------------------------------------------

std::size_t BandSpec::bins() const {
    return static_cast<std::size_t>(std::llround((freq_stop_mhz - freq_start_mhz) * 1000.0 / bin_resolution_khz));
}

void BandSpec::validate() const {
    if (!(freq_stop_mhz > freq_start_mhz))
        throw ConfigError("band " + std::to_string(band_id) + ": stop frequency must exceed start");
    if (!(bin_resolution_khz > 0.0)) throw ConfigError("band " + std::to_string(band_id) + ": bad resolution");
}

namespace {

std::vector<BandSpec> make_bands(const char* prefix, std::initializer_list<std::pair<double, double>> ranges) {
    std::vector<BandSpec> out;
    int id = 0;
    for (auto [lo, hi] : ranges) {
        std::ostringstream name;
        name << prefix << '-' << id;
        out.push_back({id++, lo, hi, 100.0, name.str()});
    }
    return out;
}

}  // namespace

const std::vector<BandSpec>& sdr_bands() {
    static const auto bands = make_bands(
        "sdr", {{80, 107}, {109, 115.5}, {117, 140}, {166, 172}, {196, 208}, {212.5, 217.5}, {220, 227.5},
                {388, 396}, {422, 427}, {640, 660}, {790, 800}, {920, 960}});
    return bands;
}

const std::vector<BandSpec>& electrosense_bands() {
    static const auto bands = make_bands(
        "electrosense", {{86, 108}, {192, 197}, {790, 801}, {801, 810}, {811, 821}, {933, 935}, {955, 960}});
    return bands;
}

// --- key/value files ------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text) {
    KeyValueFile kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
        const auto key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        kv.values_[key] = trim(line.substr(eq + 1));
    }
    return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
    auto bytes = detail::read_file(path.string());
    return parse(std::string(bytes.begin(), bytes.end()));
}

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::string KeyValueFile::get_or(const std::string& key, const std::string& fallback) const {
    return get(key).value_or(fallback);
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        double d = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument(key);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + *v + "' is not a number");
    }
}

long KeyValueFile::get_long(const std::string& key, long fallback) const {
    auto v = get(key);
    if (!v) return fallback;
    try {
        std::size_t used = 0;
        long d = std::stol(*v, &used);
        if (used != v->size()) throw std::invalid_argument(key);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': '" + *v + "' is not an integer");
    }
}

std::string KeyValueFile::serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << '\n';
    return os.str();
}

}  // namespace ingest
}  // namespace saife
