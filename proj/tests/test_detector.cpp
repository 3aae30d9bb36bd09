#include <cmath>
#include <limits>

#include <gtest/gtest.h>

#include "saife/detector.hpp"
#include "saife/errors.hpp"
#include "test_util.hpp"

using namespace saife;
using namespace saife::detector;
using trainer::FrameLosses;
using trainer::ThresholdStats;

namespace {

ThresholdStats simple_stats() {
    ThresholdStats s;
    s.recon = {10.0, 2.0};
    s.disc_cont = {0.7, 0.1};
    s.disc_cat = {0.6, 0.05};
    s.n_sigma = 3.0;
    return s;
}

// A small untrained model with thresholds calibrated on its own training data.
struct Fixture {
    specgen::Dataset ds = specgen::build_dataset(testkit::tiny_dataset_config(48, 24));
    model::ParameterStore store = model::ParameterStore::initialize(testkit::tiny_config(), 5);
    ThresholdStats stats;
    Fixture() {
        const auto norm = ingest::fit_normalizer(ds);
        stats = trainer::calibrate_thresholds(store, trainer::normalized_frames(ds, ds.train_indices, norm), 2.0, norm);
    }
};

}  // namespace

TEST(Triggers, Recon) {
    const auto s = simple_stats();
    EXPECT_EQ(evaluate_triggers({16.0, 0.7, 0.6, 0}, -1, s), 0u);
    EXPECT_EQ(evaluate_triggers({16.01, 0.7, 0.6, 0}, -1, s), unsigned(kRecon));
    // One-sided: unusually good reconstructions are not anomalies.
    EXPECT_EQ(evaluate_triggers({0.0, 0.7, 0.6, 0}, -1, s), 0u);
}

TEST(Triggers, DiscriminatorsAreTwoSided) {
    const auto s = simple_stats();
    EXPECT_EQ(evaluate_triggers({10, 1.01, 0.6, 0}, -1, s), unsigned(kDiscCont));
    EXPECT_EQ(evaluate_triggers({10, 0.39, 0.6, 0}, -1, s), unsigned(kDiscCont));
    EXPECT_EQ(evaluate_triggers({10, 0.7, 0.76, 0}, -1, s), unsigned(kDiscCat));
    EXPECT_EQ(evaluate_triggers({10, 0.7, 0.44, 0}, -1, s), unsigned(kDiscCat));
    EXPECT_EQ(evaluate_triggers({10, 0.7, 0.46, 0}, -1, s), 0u);
}

TEST(Triggers, ClassMismatch) {
    const auto s = simple_stats();
    EXPECT_EQ(evaluate_triggers({10, 0.7, 0.6, 2}, 1, s), unsigned(kClass));
    EXPECT_EQ(evaluate_triggers({10, 0.7, 0.6, 1}, 1, s), 0u);
    EXPECT_EQ(evaluate_triggers({10, 0.7, 0.6, 2}, -1, s), 0u);
    EXPECT_EQ(evaluate_triggers({20, 2.0, 0.6, 2}, 1, s), unsigned(kRecon | kDiscCont | kClass));
}

TEST(Triggers, Names) {
    EXPECT_EQ(trigger_names(kRecon | kClass), (std::vector<std::string>{"recon", "class"}));
    const std::vector<std::string> names = {"disc_cat", "disc_cont"};
    EXPECT_EQ(parse_triggers(names), unsigned(kDiscCat | kDiscCont));
    const std::vector<std::string> bad = {"bogus"};
    EXPECT_THROW(parse_triggers(bad), InputError);
}

TEST(CompositeScore, LargestZScore) {
    const auto s = simple_stats();
    EXPECT_DOUBLE_EQ(composite_score({14.0, 0.7, 0.6, 0}, -1, s), 2.0);
    EXPECT_NEAR(composite_score({10.0, 0.3, 0.6, 0}, -1, s), 4.0, 1e-12);
    EXPECT_NEAR(composite_score({4.0, 0.7, 0.6, 0}, -1, s), 0.0, 1e-12);
    EXPECT_EQ(composite_score({10, 0.7, 0.6, 3}, 1, s), std::numeric_limits<double>::infinity());
}

TEST(CompositeScore, ExceedsNExactlyWhenTriggered) {
    const auto s = simple_stats();
    Rng rng(1);
    for (int i = 0; i < 2000; ++i) {
        const FrameLosses l{rng.uniform(0, 25), rng.uniform(0.2, 1.2), rng.uniform(0.4, 0.8),
                            static_cast<int>(rng.uniform() * 4)};
        const int expected = i % 2 ? 1 : -1;
        EXPECT_EQ(composite_score(l, expected, s) > s.n_sigma, evaluate_triggers(l, expected, s) != 0u);
    }
}

TEST(CompositeScore, ZeroSpread) {
    auto s = simple_stats();
    s.disc_cont.stddev = 0.0;
    EXPECT_EQ(composite_score({10, 0.7, 0.6, 0}, -1, s), 0.0);
    EXPECT_TRUE(std::isinf(composite_score({10, 0.71, 0.6, 0}, -1, s)));
}

TEST(Localize, AbsoluteDifference) {
    const std::vector<float> x = {1, 2, 3}, xh = {1.5f, 2, 1};
    EXPECT_EQ(localize(x, xh), (std::vector<float>{0.5f, 0.0f, 2.0f}));
    EXPECT_THROW(localize(x, std::vector<float>{1}), DimensionError);
}

TEST(Base64, KnownVectors) {
    auto enc = [](const std::string& s) {
        return base64_encode({reinterpret_cast<const std::uint8_t*>(s.data()), s.size()});
    };
    EXPECT_EQ(enc(""), "");
    EXPECT_EQ(enc("f"), "Zg==");
    EXPECT_EQ(enc("fo"), "Zm8=");
    EXPECT_EQ(enc("foobar"), "Zm9vYmFy");
    const auto d = base64_decode("Zm9vYg==");
    EXPECT_EQ(std::string(d.begin(), d.end()), "foob");
    EXPECT_THROW(base64_decode("abc"), InputError);
    EXPECT_THROW(base64_decode("ab!="), InputError);
}

TEST(AnomalyReport, JsonRoundTrip) {
    AnomalyReport r;
    r.index = 17;
    r.band = 2;
    r.r_l = 12.25;
    r.d_lcont = 0.5;
    r.d_lcat = 0.75;
    r.predicted_class = 3;
    r.expected_class = 1;
    r.is_anomalous = true;
    r.triggers = kRecon | kClass;
    r.rows = 2;
    r.cols = 3;
    r.localization = {0.0f, 1.5f, -0.0f, 3.25f, 1e-7f, 100.0f};
    const auto back = AnomalyReport::from_json(r.to_json());
    EXPECT_EQ(back.to_json(), r.to_json());
    EXPECT_EQ(back.localization, r.localization);
    EXPECT_EQ(back.triggers, r.triggers);
    const auto bare = AnomalyReport::from_json(r.to_json(false));
    EXPECT_TRUE(bare.localization.empty());
    EXPECT_THROW(AnomalyReport::from_json("{"), InputError);
}

TEST(Compatibility, RejectsOtherModel) {
    Fixture f;
    EXPECT_NO_THROW(check_compatible(f.store, f.stats));
    auto other = model::ParameterStore::initialize(testkit::tiny_config(), 6);
    EXPECT_THROW(check_compatible(other, f.stats), ConfigError);
    auto stats = f.stats;
    stats.config_hash ^= 1;
    EXPECT_THROW(check_compatible(f.store, stats), ConfigError);
}

TEST(ScoreFrames, AgreesWithFrameLosses) {
    Fixture f;
    const auto idx = f.ds.test_indices;
    const auto x = trainer::normalized_frames(f.ds, idx, f.stats.norm);
    std::vector<float> recon;
    const auto losses = trainer::frame_losses(f.store, x, recon);
    const int all[1] = {-1};
    std::vector<float> raw;
    for (auto i : idx) raw.insert(raw.end(), f.ds.frame(i).begin(), f.ds.frame(i).end());
    const auto reports = score_frames(raw, all, f.store, f.stats);
    ASSERT_EQ(reports.size(), idx.size());
    const std::size_t fs = f.ds.frame_size();
    for (std::size_t i = 0; i < reports.size(); ++i) {
        EXPECT_NEAR(reports[i].r_l, losses[i].r_l, 1e-4 * std::max(1.0, losses[i].r_l));
        EXPECT_EQ(reports[i].is_anomalous, reports[i].triggers != 0u);
        const FrameLosses own{reports[i].r_l, reports[i].d_lcont, reports[i].d_lcat, reports[i].predicted_class};
        EXPECT_EQ(reports[i].triggers, evaluate_triggers(own, -1, f.stats));
        ASSERT_EQ(reports[i].localization.size(), fs);
        EXPECT_NEAR(reports[i].localization[3], std::abs(recon[i * fs + 3] - x[i * fs + 3]), 1e-5);
    }
    const auto single = score_frame(f.ds.frame(idx[0]), -1, f.store, f.stats);
    EXPECT_NEAR(single.r_l, reports[0].r_l, 1e-4 * std::max(1.0, single.r_l));
    EXPECT_THROW(score_frame(std::vector<float>(3), -1, f.store, f.stats), DimensionError);
}

TEST(Stream, WindowsAndFlags) {
    Fixture f;
    const std::size_t n = 24;
    std::size_t cursor = 0;
    auto next = [&](specgen::PsdFrame& frame) {
        if (cursor == n) return false;
        frame = f.ds.frame_copy(f.ds.test_indices[cursor++]);
        return true;
    };
    std::vector<WindowCount> windows;
    std::vector<AnomalyReport> flagged;
    const auto summary = stream_detect(next, 2, f.store, f.stats, {10, 4},
                                       [&](const WindowCount& w) { windows.push_back(w); },
                                       [&](const AnomalyReport& r) { flagged.push_back(r); });
    EXPECT_EQ(summary.frames, n);
    EXPECT_EQ(summary.windows, 3u);
    ASSERT_EQ(windows.size(), 3u);
    EXPECT_EQ(windows[2].first_frame, 20u);
    EXPECT_EQ(windows[2].frames, 4u);
    std::size_t total = 0;
    for (const auto& w : windows) total += w.anomalous;
    EXPECT_EQ(total, summary.flagged);
    EXPECT_EQ(flagged.size(), summary.flagged);
    for (std::size_t i = 1; i < flagged.size(); ++i) EXPECT_LT(flagged[i - 1].index, flagged[i].index);

    // Same decisions as scoring the frames in one call.
    std::vector<float> raw;
    for (std::size_t i = 0; i < n; ++i)
        raw.insert(raw.end(), f.ds.frame(f.ds.test_indices[i]).begin(), f.ds.frame(f.ds.test_indices[i]).end());
    const int two[1] = {2};
    std::size_t direct = 0;
    for (const auto& r : score_frames(raw, two, f.store, f.stats)) direct += r.is_anomalous;
    EXPECT_EQ(direct, summary.flagged);
}

TEST(Stream, Empty) {
    Fixture f;
    std::size_t windows = 0;
    const auto s = stream_detect([](specgen::PsdFrame&) { return false; }, -1, f.store, f.stats, {},
                                 [&](const WindowCount&) { ++windows; }, {});
    EXPECT_EQ(s.frames, 0u);
    EXPECT_EQ(s.windows, 0u);
    EXPECT_EQ(windows, 0u);
}
