#include <cmath>
#include <fstream>
#include <numeric>

#include <gtest/gtest.h>

#include "saife/errors.hpp"
#include "saife/ingest.hpp"
#include "test_util.hpp"

using namespace saife;
using namespace saife::ingest;

namespace {

const specgen::Dataset& small_dataset() {
    static const auto ds = specgen::build_dataset(testkit::tiny_dataset_config(40, 24));
    return ds;
}

}  // namespace

TEST(Normalizer, KnownMoments) {
    const std::vector<float> v = {1, 2, 3, 4};
    const auto s = fit_normalizer(v);
    EXPECT_DOUBLE_EQ(s.mean, 2.5);
    EXPECT_NEAR(s.stddev, std::sqrt(1.25), 1e-12);
}

TEST(Normalizer, ConstantOffsetCancels) {
    const std::vector<float> v = {-80, -75, -90, -60, -72};
    std::vector<float> shifted(v);
    for (auto& x : shifted) x += 30.0f;
    const auto a = normalize(v, fit_normalizer(v));
    const auto b = normalize(shifted, fit_normalizer(shifted));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-5);
}

TEST(Normalizer, RoundTrip) {
    const auto& ds = small_dataset();
    const auto stats = fit_normalizer(ds);
    const auto back = denormalize(normalize(ds.frames, stats), stats);
    for (std::size_t i = 0; i < back.size(); ++i)
        ASSERT_NEAR(back[i], ds.frames[i], 1e-5 * std::max(1.0f, std::abs(ds.frames[i])));
}

TEST(Normalizer, FittedOnTrainOnly) {
    const auto& ds = small_dataset();
    const auto stats = fit_normalizer(ds);
    double total = 0.0;
    std::size_t n = 0;
    for (auto i : ds.test_indices)
        for (float v : ds.frame(i)) {
            total += stats.apply(v);
            ++n;
        }
    EXPECT_NEAR(total / static_cast<double>(n), 0.0, 0.5);
}

TEST(Normalizer, Errors) {
    const std::vector<float> flat(10, -70.0f);
    EXPECT_THROW(fit_normalizer(flat), ConfigError);
    EXPECT_THROW(fit_normalizer(std::span<const float>{}), PreconditionError);
    EXPECT_THROW(normalize(flat, NormStats{0.0, 0.0}), ConfigError);
    specgen::Dataset empty;
    EXPECT_THROW(fit_normalizer(empty), PreconditionError);
}

TEST(DatasetFile, WriteReadWriteIsByteIdentical) {
    testkit::TempDir dir("ingest");
    write_dataset(small_dataset(), dir / "a.saife");
    const auto back = read_dataset(dir / "a.saife");
    EXPECT_EQ(back.frames, small_dataset().frames);
    EXPECT_EQ(back.class_names, small_dataset().class_names);
    EXPECT_EQ(back.train_indices, small_dataset().train_indices);
    EXPECT_EQ(back.test_indices, small_dataset().test_indices);
    EXPECT_EQ(encode_dataset(back), encode_dataset(small_dataset()));
}

TEST(DatasetFile, MasksSurvive) {
    const auto& base = small_dataset();
    const auto anomalous = specgen::build_anomaly_set(base, base.test_indices, specgen::AnomalyKind::wpulse, 10.0,
                                                      0.5, 9, testkit::tiny_dataset_config().gen);
    ASSERT_TRUE(anomalous.has_masks);
    const auto back = decode_dataset(encode_dataset(anomalous));
    EXPECT_TRUE(back.has_masks);
    EXPECT_EQ(back.masks, anomalous.masks);
    EXPECT_EQ(back.mask_kinds, anomalous.mask_kinds);
    EXPECT_EQ(encode_dataset(back), encode_dataset(anomalous));
}

TEST(DatasetFile, WithoutMasks) {
    const auto back = decode_dataset(encode_dataset(small_dataset()));
    EXPECT_FALSE(back.has_masks);
    EXPECT_TRUE(back.masks.empty());
}

TEST(DatasetFile, FlippedPayloadByteIsCaught) {
    auto bytes = encode_dataset(small_dataset());
    bytes[48 + 100] ^= 0x01;
    EXPECT_THROW(decode_dataset(bytes), IntegrityError);
}

TEST(DatasetFile, VersionMismatch) {
    auto bytes = encode_dataset(small_dataset());
    bytes[8] = static_cast<std::uint8_t>(kDatasetVersion + 1);
    EXPECT_THROW(decode_dataset(bytes), VersionError);
}

TEST(DatasetFile, BadMagicAndTruncation) {
    auto bytes = encode_dataset(small_dataset());
    auto bad = bytes;
    bad[0] = 'X';
    EXPECT_THROW(decode_dataset(bad), IntegrityError);
    bytes.resize(bytes.size() / 2);
    EXPECT_THROW(decode_dataset(bytes), IntegrityError);
    EXPECT_THROW(decode_dataset(std::span<const std::uint8_t>(bytes.data(), 10)), IntegrityError);
}

TEST(DatasetFile, MissingFile) {
    testkit::TempDir dir("ingest");
    EXPECT_THROW(read_dataset(dir / "absent.saife"), IoError);
}

TEST(Fnv1a, ReferenceVectors) {
    const std::string a = "a";
    EXPECT_EQ(fnv1a64({}), 0xcbf29ce484222325ULL);
    EXPECT_EQ(fnv1a64({reinterpret_cast<const std::uint8_t*>(a.data()), a.size()}), 0xaf63dc4c8601ec8cULL);
}

TEST(Bands, WidthsAndIds) {
    const auto& sdr = sdr_bands();
    ASSERT_EQ(sdr.size(), 12u);
    EXPECT_EQ(sdr[0].bins(), 270u);
    EXPECT_EQ(sdr[1].bins(), 65u);
    EXPECT_EQ(electrosense_bands().size(), 7u);
    for (std::size_t i = 0; i < sdr.size(); ++i) {
        EXPECT_EQ(sdr[i].band_id, static_cast<int>(i));
        EXPECT_NO_THROW(sdr[i].validate());
    }
    BandSpec bad{0, 100.0, 90.0, 100.0, "bad"};
    EXPECT_THROW(bad.validate(), ConfigError);
}

TEST(KeyValue, ParsesCommentsAndBlanks) {
    const auto kv = KeyValueFile::parse("# header\n\nlr = 0.001   # trailing\n  epochs=50\nname = saife run \n");
    EXPECT_DOUBLE_EQ(kv.get_double("lr", 0), 0.001);
    EXPECT_EQ(kv.get_long("epochs", 0), 50);
    EXPECT_EQ(kv.get_or("name", ""), "saife run");
    EXPECT_FALSE(kv.get("missing"));
    EXPECT_EQ(kv.get_long("missing", 7), 7);
}

TEST(KeyValue, Errors) {
    EXPECT_THROW(KeyValueFile::parse("no equals sign"), ConfigError);
    EXPECT_THROW(KeyValueFile::parse(" = 3"), ConfigError);
    const auto kv = KeyValueFile::parse("a = 1.5x\nb = 2.5");
    EXPECT_THROW(kv.get_double("a", 0), ConfigError);
    EXPECT_THROW(kv.get_long("b", 0), ConfigError);
}

TEST(KeyValue, SerializeRoundTrip) {
    KeyValueFile kv;
    kv.set("mean", "-71.25");
    kv.set("stddev", "8.5");
    const auto back = KeyValueFile::parse(kv.serialize());
    EXPECT_EQ(back.values(), kv.values());
}
