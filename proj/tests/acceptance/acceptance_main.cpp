// Acceptance suite: one PASS/FAIL line per criterion. Criteria 3-6 and 8 need
// the MNIST IDX files (data_dir, or $NNFORGET_DATA_DIR); without them those
// lines read SKIP and the process exits with 77.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "nnforget/config.hpp"
#include "nnforget/io_util.hpp"
#include "nnforget/memfit.hpp"
#include "nnforget/nn.hpp"
#include "nnforget/pipeline.hpp"
#include "nnforget/retention.hpp"
#include "nnforget/scheduler.hpp"

using namespace nnforget;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    int failed = 0;
    int skipped = 0;
};
Outcome outcome;

class Timer {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

void report(const std::string& id, bool pass, const std::string& detail) {
    std::printf("%s criterion %s: %s\n", pass ? "PASS" : "FAIL", id.c_str(), detail.c_str());
    std::fflush(stdout);
    if (!pass) ++outcome.failed;
}

void skip(const std::string& id, const std::string& why) {
    std::printf("SKIP criterion %s: %s\n", id.c_str(), why.c_str());
    std::fflush(stdout);
    ++outcome.skipped;
}

void info(const std::string& text) {
    std::printf("     %s\n", text.c_str());
    std::fflush(stdout);
}

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), f, args...);
    return buf;
}

// ---------------------------------------------------------------- criterion 1

// Direct softmax without max-subtraction, fine for the alpha range used here.
double naive_recall(const Eigen::VectorXd& h, const PrototypeStore& s, int cls) {
    double num = 0.0, den = 0.0;
    for (int c = 0; c < s.num_classes(); ++c) {
        const Eigen::VectorXd& p = s.prototypes[c];
        const double sim = h.dot(p) / (h.norm() * p.norm());
        const double e = std::exp(s.alpha * sim);
        den += e;
        if (c == cls) num = e;
    }
    return num / den;
}

void criterion_metric() {
    Timer timer;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0.0, 1.0);
    std::uniform_real_distribution<double> alpha_dist(0.5, 40.0);
    std::uniform_real_distribution<double> log_k(-4.0, 4.0);
    double worst_sum = 0.0, worst_scale = 0.0, worst_oracle = 0.0;
    int uniform_bad = 0, monotone_bad = 0;
    for (int i = 0; i < 1000; ++i) {
        const int width = 8 + i % 57;
        PrototypeStore s;
        s.alpha = alpha_dist(rng);
        for (int c = 0; c < kNumClasses; ++c) {
            Eigen::VectorXd p(width);
            for (int k = 0; k < width; ++k) p[k] = std::max(0.0, g(rng));
            p[c % width] += 0.1;
            s.prototypes.push_back(p);
        }
        s.initial_recall.assign(kNumClasses, 0.5);
        Eigen::VectorXd h(width);
        for (int k = 0; k < width; ++k) h[k] = std::max(0.0, g(rng)) + 1e-3;
        const int target = i % kNumClasses;

        double total = 0.0;
        for (int c = 0; c < kNumClasses; ++c) {
            const double p = recall_probability(h, s, c);
            total += p;
            worst_oracle = std::max(worst_oracle, std::abs(p - naive_recall(h, s, c)));
        }
        worst_sum = std::max(worst_sum, std::abs(total - 1.0));

        const double k = std::pow(10.0, log_k(rng));
        worst_scale = std::max(worst_scale,
                               std::abs(recall_probability(k * h, s, target) - recall_probability(h, s, target)));

        auto flat = s;
        flat.alpha = 0.0;
        for (int c = 0; c < kNumClasses; ++c) uniform_bad += recall_probability(h, flat, c) != 0.1;

        // Monotonicity is checked on the similarity vector itself.
        Eigen::VectorXd sims(kNumClasses);
        for (int c = 0; c < kNumClasses; ++c) sims[c] = cosine_similarity(h, s.prototypes[c]);
        const double before = softmax_scaled(sims, s.alpha)[target];
        sims[target] += (1.0 - sims[target]) * 0.5 + 1e-6;
        monotone_bad += !(softmax_scaled(sims, s.alpha)[target] > before);
    }
    const double secs = timer.seconds();
    const bool pass = worst_sum < 1e-9 && worst_scale < 1e-12 && uniform_bad == 0 && monotone_bad == 0 &&
                      worst_oracle < 1e-12 && secs < 1.0;
    report("1 (recall metric)", pass,
           fmt("1000 instances; max |sum-1| %.2e (<1e-9), max scale drift %.2e (<1e-12), "
               "alpha=0 misses %d, monotonicity misses %d, max |lib-oracle| %.2e; %.3f s (<1 s)",
               worst_sum, worst_scale, uniform_bad, monotone_bad, worst_oracle, secs));
}

// ---------------------------------------------------------------- criterion 2

void criterion_gradients() {
    Timer timer;
    double worst = 0.0;
    const double h = 1e-5;
    for (std::uint64_t inst = 0; inst < 20; ++inst) {
        DenseNet net = init_network({20, 16, 16, 10}, 1000 + inst);
        std::mt19937_64 rng(inst);
        std::normal_distribution<double> g(0.0, 1.0);
        for (auto& b : net.biases)
            for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = 0.1 * g(rng);
        Eigen::MatrixXd x(20, 8);
        for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = g(rng);
        std::vector<int> y(8);
        for (auto& v : y) v = static_cast<int>(rng() % 10);

        const auto grads = loss_and_gradients(net, x, y).gradients;
        auto probe = [&](double& param, double analytic) {
            const double keep = param;
            param = keep + h;
            const double up = loss_and_gradients(net, x, y).loss;
            param = keep - h;
            const double down = loss_and_gradients(net, x, y).loss;
            param = keep;
            const double numeric = (up - down) / (2 * h);
            worst = std::max(worst, std::abs(numeric - analytic) /
                                        std::max({std::abs(numeric), std::abs(analytic), 1e-7}));
        };
        for (std::size_t l = 0; l < net.layer_count(); ++l) {
            for (Eigen::Index i = 0; i < net.weights[l].size(); ++i)
                probe(net.weights[l].data()[i], grads.weights[l].data()[i]);
            for (Eigen::Index i = 0; i < net.biases[l].size(); ++i) probe(net.biases[l][i], grads.biases[l][i]);
        }
    }
    const double secs = timer.seconds();
    report("2 (gradient check)", worst < 1e-4 && secs < 10.0,
           fmt("dims [20,16,16,10], batch 8, 20 instances; max relative error %.2e (<1e-4); %.2f s (<10 s)",
               worst, secs));
}

// ---------------------------------------------------------------- criterion 7

void criterion_fit_recovery() {
    Timer timer;
    const std::vector<CurveModel> truths{
        {CurveFamily::Exponential, {0.5, 10.0, 0.2}},
        {CurveFamily::PowerLaw, {0.5, 0.7, 0.1}},
        {CurveFamily::Logarithmic, {0.6, 0.1}},
        {CurveFamily::SummedExponential, {0.3, 3.0, 0.3, 30.0, 0.1}},
    };
    bool pass = true;
    std::string detail;
    for (const auto& truth : truths) {
        CurvePoints clean, noisy;
        std::mt19937_64 rng(static_cast<std::uint64_t>(truth.family) + 11);
        std::normal_distribution<double> noise(0.0, 0.01);
        for (int t = 0; t < 80; ++t) {
            const double y = eval_model(truth, t);
            clean.t.push_back(t);
            clean.y.push_back(y);
            noisy.t.push_back(t);
            noisy.y.push_back(y + noise(rng));
        }
        const auto fit = fit_curve(truth.family, clean);
        double worst_rel = 0.0;
        for (std::size_t i = 0; i < truth.params.size(); ++i) {
            worst_rel = std::max(worst_rel, std::abs(fit.model.params[i] - truth.params[i]) / std::abs(truth.params[i]));
        }
        const auto noisy_fit = fit_curve(truth.family, noisy);
        const bool ok = worst_rel < 1e-2 && fit.r_squared >= 1.0 - 1e-6 && noisy_fit.r_squared >= 0.95;
        pass = pass && ok;
        detail += fmt("%s rel %.1e R2 1-%.1e noisy R2 %.4f; ", std::string(family_name(truth.family)).c_str(),
                      worst_rel, 1.0 - fit.r_squared, noisy_fit.r_squared);
    }
    const double secs = timer.seconds();
    report("7 (fit recovery)", pass && secs < 30.0,
           detail + fmt("limits rel<1e-2, R2>=1-1e-6, noisy R2>=0.95; %.1f s (<30 s)", secs));
}

// ---------------------------------------------------------- data-driven runs

struct BaselineRun {
    ExperimentConfig config;
    RetentionSeries series;
    std::optional<double> test_accuracy;
    double seconds = 0.0;
    double pretrain_seconds = 0.0;
};

ExperimentConfig baseline_config(const fs::path& data_dir, const fs::path& out, std::uint64_t seed) {
    ExperimentConfig c;
    c.data_dir = data_dir.string();
    c.seed = seed;
    c.continuation_epochs = 80;
    c.reviews_enabled = false;
    c.output_dir = out.string();
    c.validate();
    return c;
}

BaselineRun run_baseline(const ExperimentConfig& config) {
    Timer timer;
    const RunManifest m = run_pipeline(config);
    BaselineRun run{config, RetentionSeries::from_csv(read_file_text(ArtifactPaths::in(config.output_dir).retention_csv)),
                    m.pretrain_test_accuracy, timer.seconds(), 0.0};
    for (const auto& t : m.timings)
        if (t.phase == "pretrain") run.pretrain_seconds = t.seconds;
    return run;
}

double smoothed(const RetentionSeries& s, int epoch, int cls) { return s.at(epoch, cls).value().recall_smoothed; }

void criterion_convergence(const std::vector<BaselineRun>& runs) {
    const auto& r = runs.front();
    const double acc = r.test_accuracy.value_or(-1.0);
    std::string others;
    for (std::size_t i = 1; i < runs.size(); ++i)
        others += fmt(" seed %llu: %.4f;", static_cast<unsigned long long>(runs[i].config.seed),
                      runs[i].test_accuracy.value_or(-1.0));
    report("3 (baseline convergence)", acc >= 0.97 && r.pretrain_seconds < 1200.0,
           fmt("seed 0 test accuracy %.4f after %d epochs (>=0.97); pretrain %.0f s (<1200 s);", acc,
               r.config.pretrain_epochs, r.pretrain_seconds) +
               (others.empty() ? "" : " other seeds:" + others));
}

void criterion_forgetting(const BaselineRun& r) {
    const int cls = 8;
    const double initial = smoothed(r.series, 0, cls);
    const double at20 = smoothed(r.series, 20, cls);
    const double final_v = smoothed(r.series, 80, cls);
    const double share_early = (initial - at20) / (initial - final_v);
    const bool a = final_v < 0.85 * initial;
    const bool b = initial > final_v && share_early >= 0.5;
    const bool c = final_v >= 0.1;
    report("4 (forgetting curve)", a && b && c && r.seconds < 2700.0,
           fmt("class 8 smoothed recall %.4f -> %.4f over 80 epochs; (a) final < 0.85*initial=%.4f %s; "
               "(b) share of decline by epoch 20 %.2f (>=0.5) %s; (c) final >= 0.1 %s; run %.0f s (<2700 s)",
               initial, final_v, 0.85 * initial, a ? "yes" : "no", share_early, b ? "yes" : "no",
               c ? "yes" : "no", r.seconds));
}

void criterion_powerlaw(const std::vector<BaselineRun>& runs) {
    Timer timer;
    double primary_r2 = -1.0;
    bool ranked_above_somewhere = false;
    std::string detail;
    for (const auto& r : runs) {
        CurvePoints pts;
        for (const auto& rec : r.series.records_of(8)) {
            pts.t.push_back(rec.epoch);
            pts.y.push_back(rec.recall_raw);
        }
        const auto ranked = compare_models(pts);
        int pl_rank = -1, ex_rank = -1;
        double pl_r2 = -1.0;
        for (std::size_t i = 0; i < ranked.size(); ++i) {
            if (ranked[i].model.family == CurveFamily::PowerLaw) {
                pl_rank = static_cast<int>(i);
                pl_r2 = ranked[i].r_squared;
            }
            if (ranked[i].model.family == CurveFamily::Exponential) ex_rank = static_cast<int>(i);
        }
        if (&r == &runs.front()) primary_r2 = pl_r2;
        const bool above = pl_rank >= 0 && ranked[pl_rank].ok() && pl_rank < ex_rank;
        ranked_above_somewhere = ranked_above_somewhere || above;
        detail += fmt("seed %llu: PowerLaw R2 %.4f rank %d, Exponential rank %d, best %s; ",
                      static_cast<unsigned long long>(r.config.seed), pl_r2, pl_rank + 1, ex_rank + 1,
                      std::string(family_name(ranked.front().model.family)).c_str());
    }
    const double secs = timer.seconds();
    report("5 (power-law fit)", primary_r2 >= 0.85 && ranked_above_somewhere && runs.size() == 3 && secs < 60.0,
           detail + fmt("need seed-0 R2 >= 0.85 and PowerLaw above Exponential on >= 1 of 3 seeds; %.1f s (<60 s)", secs));
}

struct ReviewRun {
    RetentionSeries series;
    std::vector<ReviewEvent> events;
    double seconds = 0.0;
};

ReviewRun run_reviews(const BaselineRun& base, const fs::path& out) {
    Timer timer;
    ExperimentConfig c = base.config;
    c.reviews_enabled = true;
    c.theta = 0.8;
    c.continuation_epochs = 100;
    c.output_dir = out.string();
    fs::create_directories(out);
    const auto from = ArtifactPaths::in(base.config.output_dir);
    const auto to = ArtifactPaths::in(out);
    fs::copy_file(from.model, to.model, fs::copy_options::overwrite_existing);
    fs::copy_file(from.prototypes, to.prototypes, fs::copy_options::overwrite_existing);
    fs::remove(to.manifest);
    cmd_continue(c);
    return {RetentionSeries::from_csv(read_file_text(to.retention_csv)),
            events_from_jsonl(read_file_text(to.events_jsonl)), timer.seconds()};
}

std::string describe_events(const std::vector<ReviewEvent>& events) {
    std::string out;
    for (const auto& e : events) {
        out += fmt("[%d-%d%s peak %.3f post %.3f] ", e.trigger_epoch, e.end_epoch, e.truncated ? " truncated" : "",
                   e.target_peak, e.post_recall);
    }
    return out.empty() ? "none" : out;
}

void criterion_reviews(const ReviewRun& r) {
    const int n = static_cast<int>(r.events.size());
    const bool a = n >= 3 && n <= 8;

    bool b = true;
    for (const auto& e : r.events) {
        if (!e.truncated) b = b && smoothed(r.series, e.end_epoch, e.cls) >= e.target_peak;
    }

    std::vector<int> gaps;
    int last_end = 0;
    for (const auto& e : r.events) {
        gaps.push_back(e.trigger_epoch - last_end);
        last_end = e.end_epoch;
    }
    const bool c = gaps.size() >= 2 && gaps.back() > gaps.front();

    double worst_shift = 0.0;
    for (const auto& e : r.events) {
        double total = 0.0;
        int count = 0;
        for (int k = 0; k < kNumClasses; ++k) {
            if (k == e.cls) continue;
            total += std::abs(smoothed(r.series, e.end_epoch, k) - smoothed(r.series, e.trigger_epoch, k));
            ++count;
        }
        worst_shift = std::max(worst_shift, total / count);
    }
    const bool d = !r.events.empty() && worst_shift < 0.05;

    std::string gap_text;
    for (int g : gaps) gap_text += std::to_string(g) + " ";
    report("6 (spaced review)", a && b && c && d && r.seconds < 3600.0,
           fmt("(a) %d reviews, need 3..8 %s; (b) recovered events reach target %s; "
               "(c) gaps before reviews [ %s] last > first %s; (d) max mean |shift| of other classes %.4f (<0.05) %s; "
               "%.0f s (<3600 s)",
               n, a ? "yes" : "no", b ? "yes" : "no", gap_text.c_str(), c ? "yes" : "no", worst_shift,
               d ? "yes" : "no", r.seconds));
    info("seed 0 events: " + describe_events(r.events));
}

void criterion_determinism(const BaselineRun& first, const fs::path& out) {
    ExperimentConfig again = first.config;
    again.output_dir = out.string();
    Timer timer;
    run_pipeline(again);
    const auto a = ArtifactPaths::in(first.config.output_dir);
    const auto b = ArtifactPaths::in(out);
    const bool csv = read_file_text(a.retention_csv) == read_file_text(b.retention_csv);
    const bool jsonl = read_file_text(a.events_jsonl) == read_file_text(b.events_jsonl);
    const bool fits = read_file_text(a.fits_json) == read_file_text(b.fits_json);
    report("8 (determinism)", csv && jsonl,
           fmt("repeat of the seed-0 baseline run: retention CSV %s, events JSONL %s, fits JSON %s; %.0f s",
               csv ? "identical" : "DIFFERENT", jsonl ? "identical" : "DIFFERENT", fits ? "identical" : "DIFFERENT",
               timer.seconds()));
}

bool has_mnist(const fs::path& dir) {
    for (const char* base : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte"}) {
        if (!fs::exists(dir / base) && !fs::exists(dir / (std::string(base) + ".gz"))) return false;
    }
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"nnforget acceptance suite"};
    std::string data_dir;
    std::string work_dir = "acceptance_work";
    bool extra_review_seeds = true;
    app.add_option("--data-dir", data_dir, "MNIST IDX directory (default: $NNFORGET_DATA_DIR, then data/mnist)");
    app.add_option("--work-dir", work_dir, "Scratch directory for run artifacts");
    app.add_flag("!--no-extra-review-seeds", extra_review_seeds,
                 "Skip the informational review runs on seeds 1 and 2");
    CLI11_PARSE(app, argc, argv);

    ExperimentConfig probe;
    probe.data_dir = data_dir;
    const fs::path data = probe.resolved_data_dir();
    const fs::path work = fs::absolute(work_dir);

    try {
        criterion_metric();
        criterion_gradients();

        if (!has_mnist(data)) {
            for (const char* id : {"3 (baseline convergence)", "4 (forgetting curve)", "5 (power-law fit)",
                                   "6 (spaced review)", "8 (determinism)"}) {
                skip(id, "MNIST IDX files not found in " + data.string());
            }
        } else {
            std::vector<BaselineRun> baselines;
            for (std::uint64_t seed = 0; seed < 3; ++seed) {
                baselines.push_back(run_baseline(baseline_config(data, work / ("baseline_seed" + std::to_string(seed)), seed)));
                info(fmt("baseline seed %llu finished in %.0f s", static_cast<unsigned long long>(seed),
                         baselines.back().seconds));
                if (seed == 0) {
                    criterion_convergence(baselines);
                    criterion_forgetting(baselines.front());
                }
            }
            for (std::size_t i = 1; i < baselines.size(); ++i) {
                const auto& s = baselines[i].series;
                info(fmt("seed %llu: test accuracy %.4f, class 8 smoothed %.4f -> %.4f",
                         static_cast<unsigned long long>(baselines[i].config.seed),
                         baselines[i].test_accuracy.value_or(-1.0), smoothed(s, 0, 8), smoothed(s, 80, 8)));
            }
            criterion_powerlaw(baselines);

            criterion_reviews(run_reviews(baselines.front(), work / "review_seed0"));
            if (extra_review_seeds) {
                for (std::size_t i = 1; i < baselines.size(); ++i) {
                    const auto r = run_reviews(baselines[i], work / ("review_seed" + std::to_string(i)));
                    info(fmt("seed %zu review run (informational): %zu events ", i, r.events.size()) +
                         describe_events(r.events));
                }
            }
            criterion_determinism(baselines.front(), work / "baseline_seed0_repeat");
        }
        criterion_fit_recovery();
    } catch (const std::exception& e) {
        std::printf("FAIL acceptance suite aborted: %s\n", e.what());
        return 1;
    }

    std::printf("summary: %d failed, %d skipped\n", outcome.failed, outcome.skipped);
    if (outcome.failed > 0) return 1;
    return outcome.skipped > 0 ? 77 : 0;
}
