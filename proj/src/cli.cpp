#include "saife/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "saife/detector.hpp"
#include "saife/errors.hpp"
#include "saife/evalkit.hpp"
#include "saife/ingest.hpp"
#include "saife/kernels.hpp"
#include "saife/model.hpp"
#include "saife/psd_client.hpp"
#include "saife/specgen.hpp"
#include "saife/trainer.hpp"

namespace saife::cli {

namespace fs = std::filesystem;

namespace {

struct Options {
    // shared
    std::uint64_t seed = 1;
    int threads = 0;
    std::string out = "out";
    std::string data;
    std::string model_dir;
    std::string stats_path;
    // generate
    std::vector<std::string> classes;
    std::size_t train_count = 6000, test_count = 6000;
    double label_fraction = 0.2;
    // train
    std::size_t epochs = 50, features = 20, batch = 64;
    double lr = 0.001;
    double n_sigma = 3.0;
    double adversarial_weight = 1.0;
    // detect / stream / evaluate
    int band = -1;
    std::string anomaly = "none";
    double snr = 10.0;
    std::vector<double> snrs = {-20, -10, 0, 10, 20};
    double fraction = 0.5;
    std::string split = "test";
    std::size_t window = 100;
    bool maps = false;
    bool preview = false;
    std::size_t max_frames = 0;
    // sweep
    std::vector<std::size_t> sweep_features = {5, 10, 20};
    // fetch
    std::string url = "http://127.0.0.1:8080";
    std::string api_path = "/api/v1/spectrum/aggregated";
    std::string sensor;
    std::int64_t start = 0, stop = 0;
    std::size_t rows = 6;
    int attempts = 4;
    int timeout_ms = 10000;
};

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    f << text;
    if (!f) throw IoError("cannot write " + path.string());
}

fs::path checkpoint_dir(const Options& o) { return fs::path(o.model_dir) / "checkpoint"; }
fs::path stats_file(const Options& o) {
    return o.stats_path.empty() ? fs::path(o.model_dir) / "stats.txt" : fs::path(o.stats_path);
}

specgen::Dataset load_data(const Options& o) {
    if (o.data.empty()) throw ConfigError("--data is required");
    return ingest::read_dataset(o.data);
}

std::vector<std::uint32_t> select_frames(const specgen::Dataset& ds, const Options& o) {
    std::vector<std::uint32_t> pool;
    if (o.split == "test") {
        pool = ds.test_indices;
    } else if (o.split == "train") {
        pool = ds.train_indices;
    } else {
        pool.resize(ds.count());
        for (std::uint32_t i = 0; i < pool.size(); ++i) pool[i] = i;
    }
    std::vector<std::uint32_t> out;
    for (auto i : pool) {
        if (o.band >= 0 && ds.labels[i].class_id != o.band) continue;
        out.push_back(i);
        if (o.max_frames && out.size() == o.max_frames) break;
    }
    return out;
}

std::string fmt(double v, int places = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(places) << v;
    return os.str();
}

// --- subcommands --------------------------------------------------------------------

int cmd_generate(const Options& o, std::ostream& out) {
    specgen::DatasetConfig cfg;
    cfg.seed = o.seed;
    cfg.train_count = o.train_count;
    cfg.test_count = o.test_count;
    cfg.label_fraction = o.label_fraction;
    if (!o.classes.empty()) {
        cfg.families.clear();
        for (const auto& name : o.classes) cfg.families.push_back(specgen::parse_family(name));
    }
    const auto ds = specgen::build_dataset(cfg);
    ensure_dir(o.out);
    ingest::write_dataset(ds, fs::path(o.out) / "dataset.saife");

    std::map<int, std::size_t> per_class;
    double lo = 1e300, hi = -1e300;
    for (const auto& l : ds.labels) {
        ++per_class[l.class_id];
        lo = std::min<double>(lo, l.snr_db);
        hi = std::max<double>(hi, l.snr_db);
    }
    out << "wrote " << (fs::path(o.out) / "dataset.saife").string() << ": " << ds.train_indices.size() << " train + "
        << ds.test_indices.size() << " test frames of " << ds.rows << "x" << ds.cols << ", "
        << ds.labeled_count() << " labeled, seed " << o.seed << '\n';
    for (const auto& [c, n] : per_class) out << "  class " << c << " " << ds.class_names[static_cast<std::size_t>(c)] << ": " << n << " frames\n";
    out << "  signal SNR range: " << fmt(lo, 2) << " .. " << fmt(hi, 2) << " dB\n";

    if (o.anomaly != "none") {
        const auto kind = specgen::parse_anomaly(o.anomaly);
        const auto idx = select_frames(ds, o);
        const auto set = specgen::build_anomaly_set(ds, idx, kind, o.snr, o.fraction, o.seed, cfg.gen);
        ingest::write_dataset(set, fs::path(o.out) / "anomalies.saife");
        out << "wrote " << (fs::path(o.out) / "anomalies.saife").string() << ": " << set.count() << " frames, "
            << std::count(set.mask_kinds.begin(), set.mask_kinds.end(), kind) << " with " << o.anomaly << " at "
            << o.snr << " dB\n";
    }
    return kOk;
}

int cmd_train(const Options& o, std::ostream& out) {
    const auto ds = load_data(o);
    trainer::TrainConfig tc;
    tc.seed = o.seed;
    tc.epochs = o.epochs;
    tc.features = o.features;
    tc.batch_size = o.batch;
    tc.lr = o.lr;
    tc.n_sigma = o.n_sigma;
    tc.label_fraction = o.label_fraction;
    tc.weights.adversarial = o.adversarial_weight;
    tc.recovery_dir = fs::path(o.out) / "recovery_checkpoint";
    ensure_dir(o.out);

    std::ofstream log(fs::path(o.out) / "train_log.jsonl", std::ios::binary);
    if (!log) throw IoError("cannot write " + (fs::path(o.out) / "train_log.jsonl").string());
    auto result = trainer::train(ds, tc, [&](const trainer::EpochLog& e) {
        log << e.to_json() << '\n' << std::flush;
        out << "epoch " << e.epoch << "/" << tc.epochs << "  recon " << fmt(e.recon) << "  disc " << fmt(e.disc)
            << "  gen " << fmt(e.gen) << "  semi " << fmt(e.semi) << "  (" << fmt(e.seconds, 1) << " s)\n"
            << std::flush;
    });
    model::save_checkpoint(result.params, fs::path(o.out) / "checkpoint");
    result.stats.save(fs::path(o.out) / "stats.txt");
    out << "wrote checkpoint, stats and log to " << o.out << " (seed " << o.seed << ", config "
        << result.params.config().hash_hex() << ")\n";
    return kOk;
}

struct Loaded {
    model::ParameterStore store;
    trainer::ThresholdStats stats;
};

Loaded load_model(const Options& o, const CLI::App& sub) {
    if (o.model_dir.empty()) throw ConfigError("--model is required");
    Loaded l{model::load_checkpoint(checkpoint_dir(o)), trainer::ThresholdStats::load(stats_file(o))};
    if (sub.count("--n-sigma")) l.stats.n_sigma = o.n_sigma;
    return l;
}

specgen::Dataset frames_for_detection(const specgen::Dataset& ds, const Options& o) {
    const auto idx = select_frames(ds, o);
    if (o.anomaly == "none") return specgen::build_anomaly_set(ds, idx, specgen::AnomalyKind::none, o.snr, 0.0, o.seed, {});
    return specgen::build_anomaly_set(ds, idx, specgen::parse_anomaly(o.anomaly), o.snr, o.fraction, o.seed, {});
}

int cmd_detect(const Options& o, const CLI::App& sub, std::ostream& out) {
    auto [store, stats] = load_model(o, sub);
    const auto ds = load_data(o);
    const auto set = frames_for_detection(ds, o);
    std::vector<int> expected(set.count());
    for (std::size_t i = 0; i < set.count(); ++i) expected[i] = o.band >= 0 ? o.band : set.labels[i].class_id;
    auto reports = detector::score_frames(set.frames, expected, store, stats);

    ensure_dir(o.out);
    std::ofstream f(fs::path(o.out) / "reports.jsonl", std::ios::binary);
    std::size_t flagged = 0, tp = 0, fp = 0, pos = 0;
    std::map<std::string, std::size_t> per_trigger;
    for (std::size_t i = 0; i < reports.size(); ++i) {
        auto& r = reports[i];
        r.band = set.band_ids[i];
        f << r.to_json(o.maps) << '\n';
        const bool injected = set.mask_kinds[i] != specgen::AnomalyKind::none;
        pos += injected;
        if (r.is_anomalous) {
            ++flagged;
            (injected ? tp : fp) += 1;
        }
        for (const auto& t : detector::trigger_names(r.triggers)) ++per_trigger[t];
    }
    if (!f) throw IoError("cannot write " + (fs::path(o.out) / "reports.jsonl").string());
    const double n = static_cast<double>(std::max<std::size_t>(reports.size(), 1));
    out << "scored " << reports.size() << " frames at n=" << stats.n_sigma << ": " << flagged << " flagged ("
        << fmt(100.0 * static_cast<double>(flagged) / n, 2) << "%)\n";
    for (const auto& [t, c] : per_trigger) out << "  trigger " << t << ": " << c << '\n';
    if (pos > 0 && pos < reports.size())
        out << "  injected " << o.anomaly << " at " << o.snr << " dB: TPR "
            << fmt(static_cast<double>(tp) / static_cast<double>(pos)) << ", FPR "
            << fmt(static_cast<double>(fp) / static_cast<double>(reports.size() - pos)) << '\n';
    return kOk;
}

int cmd_stream(const Options& o, const CLI::App& sub, std::ostream& out) {
    auto [store, stats] = load_model(o, sub);
    const auto ds = load_data(o);
    const auto set = frames_for_detection(ds, o);
    const int expected = o.band;
    std::size_t cursor = 0;
    auto next = [&](specgen::PsdFrame& frame) {
        if (cursor == set.count()) return false;
        frame = set.frame_copy(cursor++);
        return true;
    };
    ensure_dir(o.out);
    std::ofstream windows(fs::path(o.out) / "windows.csv", std::ios::binary);
    std::ofstream flagged(fs::path(o.out) / "flagged.jsonl", std::ios::binary);
    windows << "window,first_frame,frames,anomalous\n";
    const auto summary = detector::stream_detect(
        next, expected, store, stats, {o.window, 256},
        [&](const detector::WindowCount& w) {
            windows << w.window << ',' << w.first_frame << ',' << w.frames << ',' << w.anomalous << '\n';
        },
        [&](const detector::AnomalyReport& r) { flagged << r.to_json(o.maps) << '\n'; });
    if (!windows || !flagged) throw IoError("cannot write stream outputs under " + o.out);
    out << "streamed " << summary.frames << " frames in " << summary.windows << " windows: " << summary.flagged
        << " flagged ("
        << fmt(100.0 * static_cast<double>(summary.flagged) /
                   static_cast<double>(std::max<std::size_t>(summary.frames, 1)),
               2)
        << "%)\n";
    return kOk;
}

int cmd_evaluate(const Options& o, const CLI::App& sub, std::ostream& out) {
    auto [store, stats] = load_model(o, sub);
    const auto ds = load_data(o);
    ensure_dir(o.out);

    const auto cls = evalkit::evaluate_classification(store, stats, ds);
    write_text(fs::path(o.out) / "confusion.csv", evalkit::confusion_csv(cls.matrix, ds.class_names));
    out << "classification accuracy " << fmt(cls.matrix.accuracy) << " over " << cls.matrix.total()
        << " test frames\nmean reconstruction error per frame " << fmt(cls.mean_reconstruction_error)
        << " (normalized units)\n";

    const int band = std::max(o.band, 0);
    const auto kind = specgen::parse_anomaly(o.anomaly == "none" ? "wpulse" : o.anomaly);
    std::ostringstream table;
    table << "band,anomaly,snr_db,auc\n";
    for (double snr : o.snrs) {
        evalkit::AnomalyEvalConfig ac;
        ac.band = band;
        ac.kind = kind;
        ac.snr_db = snr;
        ac.fraction = o.fraction;
        ac.seed = o.seed;
        ac.max_frames = o.max_frames;
        const auto ev = evalkit::evaluate_anomaly(store, stats, ds, ac);
        std::ostringstream name;
        name << "roc_" << ds.class_names[static_cast<std::size_t>(band)] << '_' << specgen::to_string(kind) << '_'
             << snr << "dB.csv";
        evalkit::write_roc_csv(ev.curve, fs::path(o.out) / name.str());
        table << ds.class_names[static_cast<std::size_t>(band)] << ',' << specgen::to_string(kind) << ',' << snr
              << ',' << ev.curve.auc << '\n';
        out << "  " << ds.class_names[static_cast<std::size_t>(band)] << " / " << specgen::to_string(kind) << " @ "
            << snr << " dB: AUC " << fmt(ev.curve.auc) << '\n';
        if (o.preview) out << evalkit::roc_ascii(ev.curve);
    }
    write_text(fs::path(o.out) / "evaluation.csv", table.str());
    return kOk;
}

int cmd_sweep(const Options& o, std::ostream& out) {
    const auto ds = load_data(o);
    evalkit::SweepConfig sc;
    sc.features = o.sweep_features;
    sc.snr_db = o.snrs;
    sc.anomaly.band = std::max(o.band, 0);
    sc.anomaly.kind = specgen::parse_anomaly(o.anomaly == "none" ? "wpulse" : o.anomaly);
    sc.anomaly.fraction = o.fraction;
    sc.anomaly.seed = o.seed;
    sc.anomaly.max_frames = o.max_frames;
    sc.train.seed = o.seed;
    sc.train.epochs = o.epochs;
    sc.train.batch_size = o.batch;
    sc.train.lr = o.lr;
    sc.train.n_sigma = o.n_sigma;
    sc.train.label_fraction = o.label_fraction;
    const auto rows = evalkit::feature_sweep(ds, sc);
    ensure_dir(o.out);
    write_text(fs::path(o.out) / "sweep.csv", evalkit::sweep_csv(rows));
    out << evalkit::sweep_csv(rows);
    return kOk;
}

int cmd_fetch(const Options& o, std::ostream& out, std::ostream& err) {
    const auto& bands = ingest::electrosense_bands();
    const auto it = std::find_if(bands.begin(), bands.end(), [&](const auto& b) { return b.band_id == o.band; });
    if (it == bands.end()) throw ConfigError("--band " + std::to_string(o.band) + " is not a known sensor band");
    if (o.sensor.empty()) throw ConfigError("--sensor is required");
    ingest::ClientConfig cc;
    cc.base_url = o.url;
    cc.path = o.api_path;
    cc.token = ingest::token_from_env();
    cc.max_attempts = o.attempts;
    cc.timeout = std::chrono::milliseconds(o.timeout_ms);
    cc.log = [&](const std::string& line) { err << line << '\n'; };
    ingest::HttplibTransport transport(o.url);
    const auto res = ingest::fetch_psd(cc, transport, o.sensor, *it, {o.start, o.stop}, o.rows);

    specgen::Dataset ds;
    ds.rows = o.rows;
    ds.cols = it->bins();
    ds.class_names = {it->name};
    for (const auto& f : res.frames) {
        ds.frames.insert(ds.frames.end(), f.db.begin(), f.db.end());
        ds.labels.push_back({0, 0.5f, 0.0f, 0.0f});
        ds.band_ids.push_back(it->band_id);
        ds.labeled.push_back(0);
        ds.test_indices.push_back(static_cast<std::uint32_t>(ds.test_indices.size()));
    }
    ensure_dir(o.out);
    ingest::write_dataset(ds, fs::path(o.out) / "fetched.saife");
    out << "fetched " << res.frames.size() << " frames of " << ds.rows << "x" << ds.cols << " from " << res.pages
        << " page(s), " << res.retries << " retries, " << res.leftover_rows << " leftover rows\n";
    return kOk;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Options o;
    CLI::App app{"Spectrum anomaly detection with an adversarial autoencoder", "saife"};
    app.set_config("--config", "", "INI-style key = value file; command-line flags take precedence");
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.add_option("--seed", o.seed, "Run seed; every random draw derives from it")->capture_default_str();
    app.add_option("--threads", o.threads, "OpenMP threads (0: runtime default)");
    app.add_option("--out", o.out, "Output directory")->capture_default_str();

    auto data_opt = [&](CLI::App* s) { s->add_option("--data", o.data, "Dataset file")->check(CLI::ExistingFile); };
    auto model_opts = [&](CLI::App* s) {
        s->add_option("--model", o.model_dir, "Directory written by `saife train`")->required();
        s->add_option("--stats", o.stats_path, "Threshold stats file (default: <model>/stats.txt)");
        s->add_option("--n-sigma", o.n_sigma, "Detection threshold multiplier")->check(CLI::NonNegativeNumber);
    };
    auto frame_opts = [&](CLI::App* s) {
        s->add_option("--band", o.band, "Class index the frames are expected to belong to (-1: their labels)");
        s->add_option("--anomaly", o.anomaly, "Inject this anomaly kind (none, scont, randpulses, wpulse, oclass)")
            ->capture_default_str();
        s->add_option("--fraction", o.fraction, "Share of frames that receive the anomaly")->check(CLI::Range(0.0, 1.0));
        s->add_option("--split", o.split, "Frames to use")->check(CLI::IsMember({"test", "train", "all"}));
        s->add_option("--max-frames", o.max_frames, "Cap on the number of frames (0: all)");
        s->add_flag("--maps", o.maps, "Embed localization maps in reports");
    };

    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset");
    gen->add_option("--classes", o.classes, "Signal families, comma separated")->delimiter(',');
    gen->add_option("--train", o.train_count, "Training frames")->capture_default_str();
    gen->add_option("--test", o.test_count, "Test frames")->capture_default_str();
    gen->add_option("--label-fraction", o.label_fraction, "Share of training frames with labels");
    gen->add_option("--snr", o.snr, "Anomaly SNR in dB (with --anomaly)");
    frame_opts(gen);

    auto* train = app.add_subcommand("train", "Train a model and calibrate thresholds");
    data_opt(train);
    train->add_option("--epochs", o.epochs, "Training epochs")->capture_default_str();
    train->add_option("--features", o.features, "Continuous latent dimensions")->check(CLI::PositiveNumber);
    train->add_option("--batch-size", o.batch, "Batch size")->check(CLI::PositiveNumber);
    train->add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    train->add_option("--n-sigma", o.n_sigma, "Threshold multiplier stored with the stats");
    train->add_option("--label-fraction", o.label_fraction, "Share of training frames used for supervision");
    train->add_option("--adversarial-weight", o.adversarial_weight, "Weight of the regularization phase (0 skips it)");

    auto* detect = app.add_subcommand("detect", "Score frames and write anomaly reports");
    data_opt(detect);
    model_opts(detect);
    frame_opts(detect);
    detect->add_option("--snr", o.snr, "Anomaly SNR in dB");

    auto* stream = app.add_subcommand("stream", "Streaming detection with per-window counts");
    data_opt(stream);
    model_opts(stream);
    frame_opts(stream);
    stream->add_option("--snr", o.snr, "Anomaly SNR in dB");
    stream->add_option("--window", o.window, "Frames per count window")->check(CLI::PositiveNumber);

    auto* evaluate = app.add_subcommand("evaluate", "ROC tables and confusion matrix");
    data_opt(evaluate);
    model_opts(evaluate);
    frame_opts(evaluate);
    evaluate->add_option("--snr", o.snrs, "Anomaly SNRs in dB, comma separated")->delimiter(',');
    evaluate->add_flag("--preview", o.preview, "Print character-grid ROC plots");

    auto* sweep = app.add_subcommand("sweep", "Train one model per feature count and compare");
    data_opt(sweep);
    frame_opts(sweep);
    sweep->add_option("--features", o.sweep_features, "Feature counts, comma separated")->delimiter(',');
    sweep->add_option("--snr", o.snrs, "Anomaly SNRs in dB, comma separated")->delimiter(',');
    sweep->add_option("--epochs", o.epochs, "Training epochs per model");
    sweep->add_option("--batch-size", o.batch, "Batch size")->check(CLI::PositiveNumber);
    sweep->add_option("--lr", o.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    sweep->add_option("--n-sigma", o.n_sigma, "Threshold multiplier");

    auto* fetch = app.add_subcommand("fetch", "Download PSD frames from a sensor API (token in SAIFE_API_TOKEN)");
    fetch->add_option("--url", o.url, "API base URL")->capture_default_str();
    fetch->add_option("--path", o.api_path, "Aggregated PSD endpoint path")->capture_default_str();
    fetch->add_option("--sensor", o.sensor, "Sensor id");
    fetch->add_option("--band", o.band, "Sensor band id");
    fetch->add_option("--start", o.start, "Start time, Unix seconds");
    fetch->add_option("--stop", o.stop, "Stop time, Unix seconds");
    fetch->add_option("--rows", o.rows, "Sweeps per frame")->check(CLI::PositiveNumber);
    fetch->add_option("--attempts", o.attempts, "Attempts per page")->check(CLI::PositiveNumber);
    fetch->add_option("--timeout-ms", o.timeout_ms, "Per-request timeout")->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::FileError& e) {
        err << "error: " << e.what() << '\n';
        return kConfig;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    }

    try {
        if (o.threads > 0) kernels::set_thread_count(o.threads);
        CLI::App* sub = app.get_subcommands().front();
        if (sub == gen) {
            for (const auto& c : o.classes) {
                try {
                    specgen::parse_family(c);
                } catch (const ConfigError& e) {
                    err << "error: " << e.what() << '\n';
                    return kUsage;
                }
            }
        }
        if (o.anomaly != "none") {
            try {
                specgen::parse_anomaly(o.anomaly);
            } catch (const ConfigError& e) {
                err << "error: " << e.what() << '\n';
                return kUsage;
            }
        }
        ensure_dir(o.out);
        write_text(fs::path(o.out) / ("run_" + sub->get_name() + ".ini"), app.config_to_str(true, false));

        if (sub == gen) return cmd_generate(o, out);
        if (sub == train) return cmd_train(o, out);
        if (sub == detect) return cmd_detect(o, *sub, out);
        if (sub == stream) return cmd_stream(o, *sub, out);
        if (sub == evaluate) return cmd_evaluate(o, *sub, out);
        if (sub == sweep) return cmd_sweep(o, out);
        return cmd_fetch(o, out, err);
    } catch (const IoError& e) {
        err << "I/O error: " << e.what() << '\n';
        return kIo;
    } catch (const IntegrityError& e) {
        err << "integrity error: " << e.what() << '\n';
        return kIntegrity;
    } catch (const VersionError& e) {
        err << "version error: " << e.what() << '\n';
        return kIntegrity;
    } catch (const DivergenceError& e) {
        err << "training diverged: " << e.what() << '\n';
        return kDivergence;
    } catch (const ConfigError& e) {
        err << "configuration error: " << e.what() << '\n';
        return kConfig;
    } catch (const FetchError& e) {
        err << "fetch error: " << e.what() << '\n';
        return kFetch;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

}  // namespace saife::cli
