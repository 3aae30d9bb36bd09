#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "bytes.hpp"
#include "saife/errors.hpp"
#include "saife/ingest.hpp"
#include "saife/model.hpp"

namespace saife::model {

namespace {

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

std::uint64_t tensor_checksum(const nn::Tensor& t) {
    detail::ByteWriter w;
    for (float v : t.storage()) w.f32(v);
    return ingest::fnv1a64(w.buffer());
}

std::string shape_text(const nn::Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out;
}

nn::Shape parse_shape(const std::string& text, const std::string& name) {
    nn::Shape s;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, 'x')) {
        try {
            s.push_back(std::stoul(part));
        } catch (const std::exception&) {
            throw IntegrityError("checkpoint: tensor " + name + " has malformed shape '" + text + "'");
        }
    }
    if (s.empty()) throw IntegrityError("checkpoint: tensor " + name + " has empty shape");
    return s;
}

}  // namespace

std::string CheckpointIo::manifest(const ParameterStore& store) {
    std::ostringstream os;
    os << "format_version = " << kCheckpointVersion << '\n'
       << "seed = " << store.seed_ << '\n'
       << "threads = " << store.threads_ << '\n'
       << "init_scheme = " << store.init_scheme_ << '\n'
       << "config = " << store.config_.canonical() << '\n'
       << "config_hash = " << store.config_.hash_hex() << '\n'
       << "tensor_count = " << store.tensors_.size() << '\n';
    std::size_t offset = 0;
    for (std::size_t i = 0; i < store.tensors_.size(); ++i) {
        const auto& p = store.tensors_[i];
        os << "tensor." << i << " = " << p.name << ' ' << shape_text(p.value.shape()) << ' ' << offset << ' '
           << hex64(tensor_checksum(p.value)) << '\n';
        offset += p.value.size() * 4;
    }
    return os.str();
}

std::vector<std::uint8_t> CheckpointIo::blob(const ParameterStore& store) {
    detail::ByteWriter w;
    for (const auto& p : store.tensors_)
        for (float v : p.value.storage()) w.f32(v);
    return std::move(w.buffer());
}

ParameterStore CheckpointIo::parse(const std::string& manifest_text, std::span<const std::uint8_t> blob,
                                   const std::optional<ModelConfig>& expected) {
    const auto kv = ingest::KeyValueFile::parse(manifest_text);
    auto require = [&](const std::string& key) {
        auto v = kv.get(key);
        if (!v) throw IntegrityError("checkpoint: manifest lacks " + key);
        return *v;
    };
    const long version = kv.get_long("format_version", -1);
    if (version != kCheckpointVersion)
        throw VersionError("checkpoint: format version " + std::to_string(version) + ", this build reads " +
                           std::to_string(kCheckpointVersion));

    ParameterStore store;
    store.config_ = ModelConfig::from_canonical(require("config"));
    if (store.config_.hash_hex() != require("config_hash"))
        throw IntegrityError("checkpoint: config hash does not match the recorded config");
    if (expected && expected->hash() != store.config_.hash())
        throw ConfigError("checkpoint: config hash " + store.config_.hash_hex() + " differs from expected " +
                          expected->hash_hex());
    store.config_.validate();

    try {
        store.seed_ = std::stoull(require("seed"));
    } catch (const std::invalid_argument&) {
        throw IntegrityError("checkpoint: malformed seed");
    }
    store.threads_ = static_cast<int>(kv.get_long("threads", 1));
    store.init_scheme_ = kv.get_or("init_scheme", "");

    // Cross-check against a fresh layout so renamed or missing tensors surface.
    const auto layout = ParameterStore::initialize(store.config_, 0);
    const long count = kv.get_long("tensor_count", -1);
    if (count != static_cast<long>(layout.tensors_.size()))
        throw IntegrityError("checkpoint: manifest lists " + std::to_string(count) + " tensors, config needs " +
                             std::to_string(layout.tensors_.size()));

    std::size_t expected_offset = 0;
    for (std::size_t i = 0; i < layout.tensors_.size(); ++i) {
        std::istringstream entry(require("tensor." + std::to_string(i)));
        std::string name, shape, checksum;
        std::size_t offset = 0;
        if (!(entry >> name >> shape >> offset >> checksum))
            throw IntegrityError("checkpoint: malformed entry tensor." + std::to_string(i));
        const auto& want = layout.tensors_[i];
        if (name != want.name)
            throw IntegrityError("checkpoint: tensor " + std::to_string(i) + " is " + name + ", expected " +
                                 want.name);
        const auto s = parse_shape(shape, name);
        if (s != want.value.shape())
            throw IntegrityError("checkpoint: tensor " + name + " has shape " + shape + ", expected " +
                                 shape_text(want.value.shape()));
        if (offset != expected_offset)
            throw IntegrityError("checkpoint: tensor " + name + " has offset " + std::to_string(offset) +
                                 ", expected " + std::to_string(expected_offset));
        const std::size_t n = nn::shape_numel(s);
        if (offset + n * 4 > blob.size())
            throw IntegrityError("checkpoint: tensor " + name + " is truncated (" +
                                 std::to_string(blob.size() > offset ? blob.size() - offset : 0) + " of " +
                                 std::to_string(n * 4) + " bytes present)");
        detail::ByteReader r(blob.subspan(offset, n * 4), "checkpoint tensor " + name);
        std::vector<float> values(n);
        for (auto& v : values) v = r.f32();
        nn::Tensor t(s, std::move(values));
        if (hex64(tensor_checksum(t)) != checksum)
            throw IntegrityError("checkpoint: checksum mismatch in tensor " + name);
        store.tensors_.emplace_back(name, std::move(t));
        expected_offset += n * 4;
    }
    if (expected_offset != blob.size())
        throw IntegrityError("checkpoint: " + std::to_string(blob.size() - expected_offset) +
                             " trailing bytes after the last tensor");
    store.index();
    return store;
}

void save_checkpoint(const ParameterStore& store, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create checkpoint directory " + dir.string() + ": " + ec.message());
    const auto manifest = CheckpointIo::manifest(store);
    detail::write_file((dir / "tensors.bin").string(), CheckpointIo::blob(store));
    detail::write_file((dir / "manifest.txt").string(),
                       {reinterpret_cast<const std::uint8_t*>(manifest.data()), manifest.size()});
}

ParameterStore load_checkpoint(const std::filesystem::path& dir, const std::optional<ModelConfig>& expected) {
    if (!std::filesystem::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir.string());
    const auto manifest = detail::read_file((dir / "manifest.txt").string());
    const auto blob = detail::read_file((dir / "tensors.bin").string());
    return CheckpointIo::parse(std::string(manifest.begin(), manifest.end()), blob, expected);
}

}  // namespace saife::model
