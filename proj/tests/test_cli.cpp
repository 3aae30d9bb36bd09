#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "saife/cli.hpp"
#include "saife/ingest.hpp"
#include "saife/model.hpp"
#include "test_util.hpp"

using namespace saife;

namespace {

struct Run {
    int code;
    std::string out, err;
};

Run saife_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "saife");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
}

// Small dataset shared by the train/detect tests.
const std::filesystem::path& small_dataset() {
    static testkit::TempDir dir("cli_data");
    static const bool made = [] {
        const auto r = saife_cli({"--out", dir.path().string(), "generate", "--train", "128", "--test", "64"});
        return r.code == 0;
    }();
    EXPECT_TRUE(made);
    static const auto path = dir / "dataset.saife";
    return path;
}

}  // namespace

TEST(Cli, GenerateDefaults) {
    testkit::TempDir dir("cli");
    const auto r = saife_cli({"--out", dir.path().string(), "generate"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ds = ingest::read_dataset(dir / "dataset.saife");
    EXPECT_EQ(ds.train_indices.size(), 6000u);
    EXPECT_EQ(ds.test_indices.size(), 6000u);
    EXPECT_EQ(ds.class_count(), 4u);
    EXPECT_EQ(ds.rows, 6u);
    EXPECT_EQ(ds.cols, 64u);
    EXPECT_NE(r.out.find("1200 labeled"), std::string::npos) << r.out;
    EXPECT_TRUE(std::filesystem::exists(dir / "run_generate.ini"));
}

TEST(Cli, GenerateSingleClassWithAnomalies) {
    testkit::TempDir dir("cli");
    const auto r = saife_cli({"--out", dir.path().string(), "generate", "--classes", "dethop", "--train", "40",
                              "--test", "40", "--anomaly", "wpulse", "--snr", "5"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ds = ingest::read_dataset(dir / "dataset.saife");
    EXPECT_EQ(ds.class_count(), 1u);
    const auto an = ingest::read_dataset(dir / "anomalies.saife");
    EXPECT_TRUE(an.has_masks);
    EXPECT_EQ(an.count(), 40u);
}

TEST(Cli, UsageErrors) {
    testkit::TempDir dir("cli");
    EXPECT_EQ(saife_cli({"--out", dir.path().string(), "generate", "--classes", "nonsense"}).code, 2);
    EXPECT_EQ(saife_cli({"--out", dir.path().string(), "generate", "--anomaly", "nonsense"}).code, 2);
    EXPECT_EQ(saife_cli({"--out", dir.path().string(), "generate", "--bogus-flag"}).code, 2);
    EXPECT_EQ(saife_cli({"--out", dir.path().string()}).code, 2);
    EXPECT_EQ(saife_cli({"--out", dir.path().string(), "train", "--epochs", "x"}).code, 2);
}

TEST(Cli, TrainZeroEpochs) {
    testkit::TempDir dir("cli");
    const auto r = saife_cli({"--out", dir.path().string(), "train", "--data", small_dataset().string(), "--epochs", "0"});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(std::filesystem::exists(dir / "checkpoint" / "manifest.txt"));
    EXPECT_TRUE(std::filesystem::exists(dir / "stats.txt"));
    EXPECT_EQ(slurp(dir / "train_log.jsonl"), "");
    EXPECT_NO_THROW(model::load_checkpoint(dir / "checkpoint"));
}

TEST(Cli, SameSeedSameStats) {
    testkit::TempDir a("cli"), b("cli");
    for (const auto* d : {&a, &b}) {
        const auto r = saife_cli({"--seed", "7", "--out", d->path().string(), "train", "--data",
                                  small_dataset().string(), "--epochs", "1", "--batch-size", "32"});
        ASSERT_EQ(r.code, 0) << r.err;
    }
    EXPECT_EQ(slurp(a / "stats.txt"), slurp(b / "stats.txt"));
    EXPECT_EQ(slurp(a / "checkpoint" / "tensors.bin"), slurp(b / "checkpoint" / "tensors.bin"));
}

TEST(Cli, DetectNeedsStats) {
    testkit::TempDir dir("cli");
    ASSERT_EQ(saife_cli({"--out", dir.path().string(), "train", "--data", small_dataset().string(), "--epochs", "0"}).code, 0);
    std::filesystem::remove(dir / "stats.txt");
    const auto r = saife_cli({"--out", (dir / "det").string(), "detect", "--data", small_dataset().string(), "--model",
                              dir.path().string()});
    EXPECT_EQ(r.code, 6) << r.err;
}

TEST(Cli, DetectWritesReports) {
    testkit::TempDir dir("cli");
    ASSERT_EQ(saife_cli({"--out", dir.path().string(), "train", "--data", small_dataset().string(), "--epochs", "0"}).code, 0);
    const auto r = saife_cli({"--out", (dir / "det").string(), "detect", "--data", small_dataset().string(), "--model",
                              dir.path().string(), "--max-frames", "10", "--maps"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto text = slurp(dir / "det" / "reports.jsonl");
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 10);
    EXPECT_NE(text.find("base64-f32le"), std::string::npos);
}

TEST(Cli, CorruptDatasetIsIntegrityError) {
    testkit::TempDir dir("cli");
    auto bytes = slurp(small_dataset());
    bytes[200] ^= 0x20;
    std::ofstream(dir / "bad.saife", std::ios::binary) << bytes;
    const auto r = saife_cli({"--out", dir.path().string(), "train", "--data", (dir / "bad.saife").string()});
    EXPECT_EQ(r.code, 4) << r.err;
}

TEST(Cli, MissingCheckpointIsIoError) {
    testkit::TempDir dir("cli");
    const auto r = saife_cli({"--out", dir.path().string(), "detect", "--data", small_dataset().string(), "--model",
                              (dir / "nothing").string()});
    EXPECT_EQ(r.code, 3) << r.err;
}

TEST(Cli, ConfigFileSuppliesDefaults) {
    testkit::TempDir dir("cli");
    std::ofstream(dir / "run.ini") << "[generate]\ntrain = 20\ntest = 12\n";
    const auto r = saife_cli({"--config", (dir / "run.ini").string(), "--out", dir.path().string(), "generate"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto ds = ingest::read_dataset(dir / "dataset.saife");
    EXPECT_EQ(ds.train_indices.size(), 20u);
    EXPECT_EQ(ds.test_indices.size(), 12u);
}
