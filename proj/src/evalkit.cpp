#include "saife/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

#include "saife/errors.hpp"

namespace saife::evalkit {

RocCurve roc(std::span<const ScoredLabel> samples) {
    std::size_t pos = 0, neg = 0;
    for (const auto& s : samples) {
        if (std::isnan(s.score)) throw InputError("roc: NaN score");
        (s.positive ? pos : neg) += 1;
    }
    if (pos == 0 || neg == 0) throw PreconditionError("roc: need both positive and negative samples");

    std::vector<ScoredLabel> sorted(samples.begin(), samples.end());
    std::sort(sorted.begin(), sorted.end(), [](const ScoredLabel& a, const ScoredLabel& b) { return a.score > b.score; });

    RocCurve c;
    c.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
    std::size_t tp = 0, fp = 0;
    for (std::size_t i = 0; i < sorted.size();) {
        const double threshold = sorted[i].score;
        for (; i < sorted.size() && sorted[i].score == threshold; ++i) (sorted[i].positive ? tp : fp) += 1;
        c.points.push_back({threshold, static_cast<double>(fp) / static_cast<double>(neg),
                            static_cast<double>(tp) / static_cast<double>(pos)});
    }
    for (std::size_t i = 1; i < c.points.size(); ++i) {
        const auto& a = c.points[i - 1];
        const auto& b = c.points[i];
        c.auc += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
    }
    return c;
}

std::size_t ConfusionMatrix::row_sum(std::size_t truth) const {
    return std::accumulate(counts.begin() + static_cast<long>(truth * k),
                           counts.begin() + static_cast<long>((truth + 1) * k), std::size_t{0});
}

std::size_t ConfusionMatrix::total() const { return std::accumulate(counts.begin(), counts.end(), std::size_t{0}); }

ConfusionMatrix confusion(std::span<const ClassPair> pairs, std::size_t k) {
    ConfusionMatrix m;
    m.k = k;
    m.counts.assign(k * k, 0);
    std::size_t correct = 0;
    for (const auto& p : pairs) {
        if (p.truth < 0 || p.predicted < 0 || static_cast<std::size_t>(p.truth) >= k ||
            static_cast<std::size_t>(p.predicted) >= k)
            throw InputError("confusion: class pair (" + std::to_string(p.truth) + ", " + std::to_string(p.predicted) +
                             ") outside [0, " + std::to_string(k) + ")");
        ++m.counts[static_cast<std::size_t>(p.truth) * k + static_cast<std::size_t>(p.predicted)];
        correct += p.truth == p.predicted;
    }
    m.accuracy = pairs.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(pairs.size());
    return m;
}

CompressionRatio compression_ratio(std::size_t rows, std::size_t cols, std::size_t d) {
    if (d == 0) throw PreconditionError("compression_ratio: d must be at least 1");
    const std::uint64_t num = static_cast<std::uint64_t>(rows) * cols;
    const std::uint64_t g = std::gcd(num, static_cast<std::uint64_t>(d));
    return {num / (g ? g : 1), d / (g ? g : 1)};
}

std::string CompressionRatio::decimal(int max_places) const {
    std::string out = std::to_string(numerator / denominator);
    std::uint64_t rem = numerator % denominator;
    if (rem == 0) return out;
    out += '.';
    for (int place = 0; place < max_places && rem != 0; ++place) {
        rem *= 10;
        out += static_cast<char>('0' + rem / denominator);
        rem %= denominator;
    }
    if (rem == 0) return out;
    std::ostringstream os;
    os << std::fixed << std::setprecision(max_places) << value();
    return os.str();
}

double mass_in_mask(std::span<const float> map, std::span<const std::uint8_t> mask) {
    if (map.size() != mask.size())
        throw DimensionError("mass_in_mask: map has " + std::to_string(map.size()) + " cells, mask " +
                             std::to_string(mask.size()));
    double total = 0.0, inside = 0.0;
    for (std::size_t i = 0; i < map.size(); ++i) {
        total += map[i];
        if (mask[i]) inside += map[i];
    }
    return total > 0.0 ? inside / total : 0.0;
}

// --- drivers ---------------------------------------------------------------------

namespace {

trainer::FrameLosses losses_of(const detector::AnomalyReport& r) {
    return {r.r_l, r.d_lcont, r.d_lcat, r.predicted_class};
}

}  // namespace

AnomalyEval evaluate_anomaly(model::ParameterStore& store, const trainer::ThresholdStats& stats,
                             const specgen::Dataset& ds, const AnomalyEvalConfig& cfg) {
    if (cfg.band < 0 || static_cast<std::size_t>(cfg.band) >= ds.class_count())
        throw ConfigError("evaluate_anomaly: band " + std::to_string(cfg.band) + " outside the dataset's " +
                          std::to_string(ds.class_count()) + " classes");
    std::vector<std::uint32_t> indices;
    for (auto i : ds.test_indices) {
        if (ds.labels[i].class_id != cfg.band) continue;
        indices.push_back(i);
        if (cfg.max_frames && indices.size() == cfg.max_frames) break;
    }
    AnomalyEval out;
    out.frames = specgen::build_anomaly_set(ds, indices, cfg.kind, cfg.snr_db, cfg.fraction, cfg.seed, cfg.gen);
    const int expected[1] = {cfg.band};
    out.reports = detector::score_frames(out.frames.frames, expected, store, stats);
    std::vector<ScoredLabel> samples(out.reports.size());
    out.scores.resize(out.reports.size());
    for (std::size_t i = 0; i < out.reports.size(); ++i) {
        out.reports[i].band = out.frames.band_ids[i];
        out.scores[i] = detector::composite_score(losses_of(out.reports[i]), cfg.band, stats);
        samples[i] = {out.scores[i], out.frames.mask_kinds[i] != specgen::AnomalyKind::none};
    }
    out.curve = roc(samples);
    return out;
}

ClassificationEval evaluate_classification(model::ParameterStore& store, const trainer::ThresholdStats& stats,
                                           const specgen::Dataset& ds) {
    detector::check_compatible(store, stats);
    const auto x = trainer::normalized_frames(ds, ds.test_indices, stats.norm);
    const auto losses = trainer::frame_losses(store, x);
    std::vector<ClassPair> pairs(losses.size());
    double recon = 0.0;
    for (std::size_t i = 0; i < losses.size(); ++i) {
        pairs[i] = {ds.labels[ds.test_indices[i]].class_id, losses[i].predicted_class};
        recon += losses[i].r_l;
    }
    ClassificationEval out;
    out.matrix = confusion(pairs, ds.class_count());
    out.mean_reconstruction_error = losses.empty() ? 0.0 : recon / static_cast<double>(losses.size());
    return out;
}

std::vector<SweepRow> feature_sweep(const specgen::Dataset& ds, const SweepConfig& config) {
    std::vector<SweepRow> rows;
    for (std::size_t d : config.features) {
        if (d == 0) throw ConfigError("feature_sweep: feature counts must be at least 1");
        auto tc = config.train;
        tc.features = d;
        if (tc.model) tc.model->features = d;
        const auto tag = "feature_sweep d=" + std::to_string(d) + ": ";
        trainer::TrainResult trained;
        try {
            trained = trainer::train(ds, tc);
        } catch (const DivergenceError& e) {
            throw DivergenceError(tag + e.what(), e.batch_index());
        } catch (const ConfigError& e) {
            throw ConfigError(tag + e.what());
        } catch (const PreconditionError& e) {
            throw PreconditionError(tag + e.what());
        }
        SweepRow row;
        row.features = d;
        row.mean_reconstruction_error =
            evaluate_classification(trained.params, trained.stats, ds).mean_reconstruction_error;
        for (double snr : config.snr_db) {
            auto ac = config.anomaly;
            ac.snr_db = snr;
            row.snr_db.push_back(snr);
            row.auc.push_back(evaluate_anomaly(trained.params, trained.stats, ds, ac).curve.auc);
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

// --- output ------------------------------------------------------------------------

std::string roc_csv(const RocCurve& curve) {
    std::ostringstream os;
    os << "threshold,fpr,tpr\n" << std::setprecision(10);
    for (const auto& p : curve.points) os << p.threshold << ',' << p.fpr << ',' << p.tpr << '\n';
    return os.str();
}

void write_roc_csv(const RocCurve& curve, const std::filesystem::path& path) {
    std::ofstream out(path);
    out << roc_csv(curve);
    if (!out) throw IoError("cannot write ROC table to " + path.string());
}

std::string confusion_csv(const ConfusionMatrix& m, std::span<const std::string> names) {
    std::ostringstream os;
    os << "true\\predicted";
    for (std::size_t j = 0; j < m.k; ++j) os << ',' << (j < names.size() ? names[j] : std::to_string(j));
    os << '\n';
    for (std::size_t i = 0; i < m.k; ++i) {
        os << (i < names.size() ? names[i] : std::to_string(i));
        for (std::size_t j = 0; j < m.k; ++j) os << ',' << m.at(i, j);
        os << '\n';
    }
    return os.str();
}

std::string sweep_csv(std::span<const SweepRow> rows) {
    std::ostringstream os;
    os << "features";
    if (!rows.empty())
        for (double snr : rows.front().snr_db) os << ",auc_snr_" << snr;
    os << ",mean_reconstruction_error\n" << std::setprecision(10);
    for (const auto& r : rows) {
        os << r.features;
        for (double a : r.auc) os << ',' << a;
        os << ',' << r.mean_reconstruction_error << '\n';
    }
    return os.str();
}

std::string roc_ascii(const RocCurve& curve, std::size_t width, std::size_t height) {
    width = std::max<std::size_t>(width, 2);
    height = std::max<std::size_t>(height, 2);
    std::vector<std::string> grid(height, std::string(width, ' '));
    for (std::size_t i = 0; i < std::min(width, height); ++i) {
        // chance diagonal
        const auto x = i * (width - 1) / (std::min(width, height) - 1);
        grid[height - 1 - i * (height - 1) / (std::min(width, height) - 1)][x] = '.';
    }
    for (std::size_t i = 1; i < curve.points.size(); ++i) {
        const auto& a = curve.points[i - 1];
        const auto& b = curve.points[i];
        const int steps = static_cast<int>(width + height);
        for (int s = 0; s <= steps; ++s) {
            const double t = static_cast<double>(s) / steps;
            const double fx = a.fpr + (b.fpr - a.fpr) * t, fy = a.tpr + (b.tpr - a.tpr) * t;
            const auto x = static_cast<std::size_t>(std::lround(fx * static_cast<double>(width - 1)));
            const auto y = static_cast<std::size_t>(std::lround(fy * static_cast<double>(height - 1)));
            grid[height - 1 - y][x] = '*';
        }
    }
    std::ostringstream os;
    os << "TPR\n";
    for (const auto& row : grid) os << '|' << row << '\n';
    os << '+' << std::string(width, '-') << " FPR   AUC=" << std::fixed << std::setprecision(4) << curve.auc << '\n';
    return os.str();
}

}  // namespace saife::evalkit
