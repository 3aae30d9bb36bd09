#include <cmath>

#include <gtest/gtest.h>

#include "saife/errors.hpp"
#include "saife/trainer.hpp"
#include "test_util.hpp"

using namespace saife;
using namespace saife::trainer;

namespace {

const specgen::Dataset& tiny_data() {
    static const auto ds = specgen::build_dataset(testkit::tiny_dataset_config(64, 32));
    return ds;
}

TrainConfig tiny_train(std::size_t epochs = 1) {
    TrainConfig c;
    c.model = testkit::tiny_config();
    c.features = 4;
    c.epochs = epochs;
    c.batch_size = 16;
    return c;
}

nn::Tensor random_batch(std::size_t b, std::size_t fs, std::uint64_t seed) {
    Rng rng(seed);
    nn::Tensor t({b, fs});
    for (auto& v : t.storage()) v = static_cast<float>(rng.normal());
    return t;
}

}  // namespace

TEST(Phases, PerfectPredictionsGiveNearZeroSemiLoss) {
    // Zero the heads' weights and put the answer in their biases.
    auto store = model::ParameterStore::initialize(testkit::tiny_config(), 1);
    for (const char* w : {"enc.class.w", "enc.feature.w"}) store.at(w).value.fill(0.0f);
    store.at("enc.class.b").value = nn::Tensor::from({4}, {40.0f, 0.0f, 0.0f, 0.0f});
    store.at("enc.feature.b").value = nn::Tensor::from({4}, {0.25f, 0.125f, 0.0f, 0.0f});
    Trainer t(store, tiny_train());
    const std::vector<specgen::SignalLabel> labels(3, {0, 0.25f, 0.125f, 10.0f});
    EXPECT_NEAR(t.phase_semisupervised(random_batch(3, store.config().frame_size(), 2), labels), 0.0, 1e-6);
}

TEST(Phases, SemiRejectsEmptyAndMismatchedBatches) {
    auto store = model::ParameterStore::initialize(testkit::tiny_config(), 1);
    Trainer t(store, tiny_train());
    EXPECT_THROW(t.phase_semisupervised(nn::Tensor(), {}), PreconditionError);
    const std::vector<specgen::SignalLabel> one(1);
    EXPECT_THROW(t.phase_semisupervised(random_batch(2, store.config().frame_size(), 1), one), DimensionError);
    const std::vector<specgen::SignalLabel> bad(2, {7, 0.5f, 0.1f, 0.0f});
    EXPECT_THROW(t.phase_semisupervised(random_batch(2, store.config().frame_size(), 1), bad), InputError);
}

TEST(Phases, DiscriminatorLossIsLn2WhenUndecided) {
    // Untrained discriminators output logit 0 on every input: the optimum
    // against identical distributions.
    auto store = model::ParameterStore::initialize(testkit::tiny_config(), 1);
    Trainer t(store, tiny_train());
    Rng rng(3);
    const auto [disc, gen] = t.phase_regularization(random_batch(8, store.config().frame_size(), 4), rng);
    EXPECT_NEAR(disc, std::log(2.0), 1e-6);
    // The generator step sees the discriminators after their first update.
    EXPECT_NEAR(gen, std::log(2.0), 1e-2);
}

TEST(Phases, ReconstructionOnlyTouchesAutoencoder) {
    auto store = model::ParameterStore::initialize(testkit::tiny_config(), 1);
    const auto disc_before = store.at("dcont.out.w").value;
    const auto dec_before = store.at("dec.fc1.w").value;
    Trainer t(store, tiny_train());
    const auto batch = random_batch(8, store.config().frame_size(), 5);
    const double first = t.phase_reconstruction(batch);
    EXPECT_EQ(store.at("dcont.out.w").value, disc_before);
    EXPECT_NE(store.at("dec.fc1.w").value, dec_before);
    double last = first;
    for (int i = 0; i < 30; ++i) last = t.phase_reconstruction(batch);
    EXPECT_LT(last, first);
}

TEST(Calibration, PopulationMoments) {
    std::vector<FrameLosses> losses = {{1, 0.5, 0.1, 0}, {2, 0.5, 0.2, 1}, {3, 0.5, 0.3, 2}};
    const auto s = calibrate_from_losses(losses, 3.0);
    EXPECT_DOUBLE_EQ(s.recon.mean, 2.0);
    EXPECT_NEAR(s.recon.stddev, std::sqrt(2.0 / 3.0), 1e-12);
    EXPECT_DOUBLE_EQ(s.disc_cont.mean, 0.5);
    EXPECT_DOUBLE_EQ(s.disc_cont.stddev, 0.0);
    EXPECT_NEAR(s.disc_cat.mean, 0.2, 1e-12);
    EXPECT_EQ(s.frames, 3u);
    EXPECT_EQ(s.n_sigma, 3.0);
}

TEST(Calibration, NeedsTwoFrames) {
    EXPECT_THROW(calibrate_from_losses({}, 3.0), PreconditionError);
    EXPECT_THROW(calibrate_from_losses({{1, 1, 1, 0}}, 3.0), PreconditionError);
}

TEST(Calibration, RecordsModelIdentity) {
    auto store = model::ParameterStore::initialize(testkit::tiny_config(), 1);
    const auto x = random_batch(5, store.config().frame_size(), 6);
    const auto s = calibrate_thresholds(store, x.values(), 2.0, {-70.0, 5.0});
    EXPECT_EQ(s.config_hash, store.config().hash());
    EXPECT_EQ(s.params_fingerprint, store.fingerprint());
    EXPECT_EQ(s.norm.mean, -70.0);
    EXPECT_EQ(s.frames, 5u);
}

TEST(ThresholdStats, SerializeParseRoundTrip) {
    ThresholdStats s;
    s.recon = {12.5, 1.25};
    s.disc_cont = {0.7, 0.01};
    s.disc_cat = {0.69, 0.002};
    s.n_sigma = 2.5;
    s.config_hash = 0xfeedbeefcafe1234ULL;
    s.params_fingerprint = 42;
    s.norm = {-71.5, 6.25};
    s.frames = 6000;
    const auto back = ThresholdStats::parse(s.serialize());
    EXPECT_EQ(back.serialize(), s.serialize());
    EXPECT_EQ(back.config_hash, s.config_hash);
    EXPECT_EQ(back.recon.stddev, 1.25);
    EXPECT_THROW(ThresholdStats::parse("n_sigma = 3\n"), ConfigError);
}

TEST(ThresholdStats, MissingFileIsConfigError) {
    testkit::TempDir dir("trainer");
    EXPECT_THROW(ThresholdStats::load(dir / "stats.txt"), ConfigError);
}

TEST(TrainConfig, Validation) {
    auto c = tiny_train();
    EXPECT_NO_THROW(c.validate());
    c.lr = 0;
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_train();
    c.order = {Phase::reconstruction, Phase::reconstruction, Phase::semisupervised};
    EXPECT_THROW(c.validate(), ConfigError);
    c = tiny_train();
    c.weights.adversarial = -1;
    EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Train, ZeroEpochsStillCalibrates) {
    const auto r = train(tiny_data(), tiny_train(0));
    EXPECT_TRUE(r.log.empty());
    EXPECT_EQ(r.stats.frames, tiny_data().train_indices.size());
    EXPECT_EQ(r.stats.params_fingerprint,
              model::ParameterStore::initialize(testkit::tiny_config(), 1).fingerprint());
}

TEST(Train, SameSeedSameModel) {
    const auto a = train(tiny_data(), tiny_train(2));
    const auto b = train(tiny_data(), tiny_train(2));
    EXPECT_EQ(a.params.fingerprint(), b.params.fingerprint());
    EXPECT_EQ(a.stats.serialize(), b.stats.serialize());
    ASSERT_EQ(a.log.size(), 2u);
    EXPECT_EQ(a.log[1].recon, b.log[1].recon);
    auto c = tiny_train(2);
    c.seed = 2;
    EXPECT_NE(train(tiny_data(), c).params.fingerprint(), a.params.fingerprint());
}

TEST(Train, ReportsDivergenceAndSavesRecovery) {
    testkit::TempDir dir("trainer");
    auto c = tiny_train(1);
    c.divergence_limit = 1e-9;
    c.recovery_dir = dir / "recovery";
    try {
        train(tiny_data(), c);
        FAIL() << "expected DivergenceError";
    } catch (const DivergenceError& e) {
        EXPECT_EQ(e.batch_index(), 0);
    }
    const auto rec = model::load_checkpoint(dir / "recovery");
    EXPECT_EQ(rec.fingerprint(), model::ParameterStore::initialize(testkit::tiny_config(), 1).fingerprint());
}

TEST(Train, RejectsMismatchedModel) {
    auto c = tiny_train();
    c.model = testkit::tiny_config(3);
    EXPECT_THROW(train(tiny_data(), c), ConfigError);
}

TEST(EpochLog, JsonFields) {
    EpochLog l;
    l.epoch = 3;
    l.recon = 0.5;
    l.timestamp = "2026-01-01T00:00:00Z";
    const auto j = l.to_json();
    EXPECT_NE(j.find("\"epoch\":3"), std::string::npos) << j;
    EXPECT_NE(j.find("2026-01-01T00:00:00Z"), std::string::npos);
}
