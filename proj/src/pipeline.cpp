#include "nnforget/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <set>

#include "json.hpp"

#include "nnforget/errors.hpp"
#include "nnforget/io_util.hpp"
#include "nnforget/svg_plot.hpp"
#include "nnforget/train.hpp"

#ifndef NNFORGET_VERSION
#define NNFORGET_VERSION "0.0.0"
#endif
#ifndef NNFORGET_GIT_REVISION
#define NNFORGET_GIT_REVISION "unknown"
#endif

namespace nnforget {

using Json = nlohmann::ordered_json;
namespace fs = std::filesystem;

namespace {

void say(const LogFn& log, const std::string& msg) {
    if (log) log(msg);
}

std::string fixed(double v, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

fs::path find_idx(const fs::path& dir, const std::string& base) {
    for (const auto& name : {base, base + ".gz"}) {
        if (fs::exists(dir / name)) return dir / name;
    }
    return {};
}

std::vector<int> fitted_classes(const ExperimentConfig& config) {
    if (!config.excluded_classes.empty()) {
        std::set<int> sorted(config.excluded_classes.begin(), config.excluded_classes.end());
        return {sorted.begin(), sorted.end()};
    }
    std::vector<int> all;
    for (int c = 0; c < kNumClasses; ++c) all.push_back(c);
    return all;
}

class Stopwatch {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

// Loads the manifest already in output_dir (if any) so subcommands extend it.
RunManifest load_manifest(const ExperimentConfig& config, const ArtifactPaths& paths) {
    RunManifest m;
    m.config_json = config.to_json();
    m.version = library_version();
    if (!fs::exists(paths.manifest)) return m;
    try {
        const auto j = Json::parse(read_file_text(paths.manifest));
        if (j.contains("timings")) {
            for (const auto& [phase, secs] : j.at("timings").items()) {
                m.timings.push_back({phase, secs.get<double>()});
            }
        }
        if (j.contains("artifacts")) {
            for (const auto& [role, path] : j.at("artifacts").items()) {
                m.artifacts[role] = path.get<std::string>();
            }
        }
        if (j.contains("pretrain")) {
            const auto& p = j.at("pretrain");
            if (p.contains("test_accuracy") && p.at("test_accuracy").is_number()) {
                m.pretrain_test_accuracy = p.at("test_accuracy").get<double>();
            }
            if (p.contains("proto_eval_accuracy") && p.at("proto_eval_accuracy").is_number()) {
                m.pretrain_proto_eval_accuracy = p.at("proto_eval_accuracy").get<double>();
            }
        }
    } catch (const nlohmann::json::exception&) {
        // An unreadable manifest is replaced rather than merged.
        m.timings.clear();
        m.artifacts.clear();
    }
    return m;
}

void record_timing(RunManifest& m, const std::string& phase, double seconds) {
    for (auto& t : m.timings) {
        if (t.phase == phase) {
            t.seconds = seconds;
            return;
        }
    }
    m.timings.push_back({phase, seconds});
}

void save_manifest(RunManifest& m, const ArtifactPaths& paths) {
    m.artifacts["manifest"] = paths.manifest.string();
    write_file_atomic(paths.manifest, m.to_json());
}

template <typename Fn>
auto in_phase(const std::string& phase, Fn&& fn) {
    try {
        return fn();
    } catch (const std::exception& e) {
        throw PhaseError(phase, e.what());
    }
}

std::string snapshots_to_json(const PretrainResult& r) {
    Json j = Json::object();
    for (const auto& [cls, proto] : r.plateau_prototypes) {
        Json entry;
        entry["epoch"] = r.plateau_epochs.at(cls);
        entry["prototype"] = std::vector<double>(proto.data(), proto.data() + proto.size());
        j[std::to_string(cls)] = entry;
    }
    return Json{{"classes", j}}.dump(1) + "\n";
}

std::map<int, Eigen::VectorXd> snapshots_from_json(const std::string& text) {
    std::map<int, Eigen::VectorXd> out;
    try {
        const auto j = Json::parse(text);
        for (const auto& [key, entry] : j.at("classes").items()) {
            const auto v = entry.at("prototype").get<std::vector<double>>();
            out[std::stoi(key)] =
                Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        }
    } catch (const std::exception& e) {
        throw FormatError(std::string("malformed prototype snapshot file: ") + e.what());
    }
    return out;
}

}  // namespace

PhaseError::PhaseError(std::string phase, const std::string& message)
    : Error("phase '" + phase + "' failed: " + message), phase_(std::move(phase)) {}

LogFn stderr_logger() {
    return [](const std::string& msg) {
        std::fprintf(stderr, "%s\n", msg.c_str());
        std::fflush(stderr);
    };
}

std::string library_version() { return std::string(NNFORGET_VERSION) + "+" + NNFORGET_GIT_REVISION; }

ArtifactPaths ArtifactPaths::in(const fs::path& dir) {
    return {dir / "model.bin",     dir / "prototypes.json", dir / "prototype_snapshots.json",
            dir / "retention.csv", dir / "events.jsonl",    dir / "fits.json",
            dir / "retention.svg", dir / "manifest.json"};
}

ExperimentData load_experiment_data(const ExperimentConfig& config) {
    const fs::path dir = config.resolved_data_dir();
    const auto train_images = find_idx(dir, "train-images-idx3-ubyte");
    const auto train_labels = find_idx(dir, "train-labels-idx1-ubyte");
    if (train_images.empty() || train_labels.empty()) {
        throw IoError("MNIST training files not found in " + dir.string() +
                      " (expected train-images-idx3-ubyte[.gz] and train-labels-idx1-ubyte[.gz])");
    }
    const ImageDataset source = load_idx(train_images, train_labels);
    auto splits = make_splits(source, config.split_spec());

    ExperimentData data{std::move(splits.pretrain), std::move(splits.continuation),
                        std::move(splits.proto_eval), std::nullopt};
    const auto test_images = find_idx(dir, "t10k-images-idx3-ubyte");
    const auto test_labels = find_idx(dir, "t10k-labels-idx1-ubyte");
    if (!test_images.empty() && !test_labels.empty()) data.test = load_idx(test_images, test_labels);
    return data;
}

PretrainResult run_pretrain(const ExperimentConfig& config, const ExperimentData& data,
                            const LogFn& log) {
    PretrainResult result;
    result.net = init_network(config.layer_dims, config.seed + seed_offset::kInit);
    if (result.net.input_size() != data.pretrain.feature_count()) {
        throw ConfigError("config key 'layer_dims': input size " +
                          std::to_string(result.net.input_size()) + " does not match the " +
                          std::to_string(data.pretrain.feature_count()) + "-pixel images");
    }
    OptimState opt = OptimState::for_network(result.net);
    WeightedSampler sampler(data.pretrain, config.seed + seed_offset::kPretrainSampler);
    sampler.set_augmentation(config.augment);
    const TrainConfig train = config.train_config(config.pretrain_epochs, seed_offset::kPretrainSampler);

    const bool plateau_mode = config.prototype_timing == "plateau";
    PlateauTracker tracker;
    for (int epoch = 1; epoch <= config.pretrain_epochs; ++epoch) {
        const EpochStats stats = train_epoch(result.net, opt, sampler, data.pretrain, train);
        result.epochs.push_back(stats);
        std::string line = "pretrain epoch " + std::to_string(epoch) + "/" +
                           std::to_string(config.pretrain_epochs) + " loss " +
                           fixed(stats.mean_loss, 5);
        if (data.test) line += " test_acc " + fixed(evaluate_accuracy(result.net, *data.test), 4);
        say(log, line);

        if (plateau_mode) {
            const auto acc = per_class_accuracy(result.net, data.proto_eval);
            const auto newly = tracker.update(acc);
            if (!newly.empty()) {
                const auto means = class_mean_hidden(result.net, data.proto_eval, kNumClasses);
                for (int c : newly) {
                    result.plateau_prototypes[c] = means[static_cast<std::size_t>(c)];
                    result.plateau_epochs[c] = epoch;
                    say(log, "class " + std::to_string(c) + " plateaued at epoch " + std::to_string(epoch));
                }
            }
        }
    }
    result.proto_eval_accuracy = evaluate_accuracy(result.net, data.proto_eval);
    if (data.test) result.test_accuracy = evaluate_accuracy(result.net, *data.test);
    return result;
}

PrototypeStore build_prototypes(const ExperimentConfig& config, const DenseNet& net,
                                const ImageDataset& proto_eval,
                                const std::map<int, Eigen::VectorXd>& plateau_prototypes) {
    if (config.prototype_timing != "plateau" || plateau_prototypes.empty()) {
        return collect_prototypes(net, proto_eval, config.alpha);
    }
    PrototypeStore store;
    store.alpha = config.alpha;
    store.prototypes = class_mean_hidden(net, proto_eval, net.class_count());
    for (const auto& [cls, proto] : plateau_prototypes) {
        if (proto.size() != store.width()) throw ShapeError("snapshot prototype width mismatch");
        store.prototypes.at(static_cast<std::size_t>(cls)) = proto;
    }
    store.validate();
    store.initial_recall = all_class_recall(net, proto_eval, store);
    return store;
}

ContinuationResult run_continuation_phase(const ExperimentConfig& config, DenseNet& net,
                                          const PrototypeStore& store, const ExperimentData& data,
                                          const LogFn& log) {
    WeightedSampler sampler(data.continuation, config.seed + seed_offset::kContinuationSampler);
    sampler.set_augmentation(config.augment);
    for (int c : config.excluded_classes) sampler.set_class_weight(c, 0.0);

    RetentionSeries series(kNumClasses, config.smoothing_window);
    measure_epoch(net, data.proto_eval, store, 0, series);

    OptimState opt = OptimState::for_network(net);
    const TrainConfig train =
        config.train_config(config.continuation_epochs, seed_offset::kContinuationSampler);
    ContinuationHooks hooks;
    hooks.on_epoch_end = [&](int epoch, const EpochStats& stats, const RetentionSeries& s) {
        std::string line = "continue epoch " + std::to_string(epoch) + "/" +
                           std::to_string(config.continuation_epochs) + " loss " +
                           fixed(stats.mean_loss, 5);
        for (int c : config.excluded_classes) {
            const auto r = s.latest(c);
            line += " recall[" + std::to_string(c) + "] " + fixed(r->recall_raw, 4) + " (smoothed " +
                    fixed(r->recall_smoothed, 4) + ")";
        }
        say(log, line);
    };
    return run_continuation(net, opt, sampler, data.continuation, data.proto_eval, store,
                            config.review_policy(), train, std::move(series), hooks);
}

CurvePoints series_points(const RetentionSeries& series, int cls, bool smoothed) {
    CurvePoints pts;
    for (const auto& r : series.records_of(cls)) {
        pts.t.push_back(static_cast<double>(r.epoch));
        pts.y.push_back(smoothed ? r.recall_smoothed : r.recall_raw);
    }
    return pts;
}

std::vector<ClassFit> fit_retention(const ExperimentConfig& config, const RetentionSeries& series) {
    std::vector<ClassFit> out;
    for (int c : fitted_classes(config)) {
        out.push_back({c, compare_models(series_points(series, c, config.fit_smoothed))});
    }
    return out;
}

std::string fits_to_json(const std::vector<ClassFit>& fits, bool smoothed) {
    Json j;
    j["series"] = smoothed ? "smoothed" : "raw";
    j["classes"] = Json::array();
    for (const auto& f : fits) {
        Json entry;
        entry["class"] = f.cls;
        const auto report = Json::parse(fit_report_json(f.ranked));
        entry["families"] = report.at("families");
        entry["selected"] = report.at("selected");
        j["classes"].push_back(entry);
    }
    return j.dump(2) + "\n";
}

std::map<int, CurveModel> best_models_from_json(const std::string& text) {
    std::map<int, CurveModel> out;
    try {
        const auto j = Json::parse(text);
        for (const auto& entry : j.at("classes")) {
            if (entry.at("selected").is_null()) continue;
            const auto family = family_from_name(entry.at("selected").get<std::string>());
            for (const auto& fam : entry.at("families")) {
                if (fam.at("family").get<std::string>() != family_name(family)) continue;
                CurveModel model{family, {}};
                for (auto name : parameter_names(family)) {
                    model.params.push_back(fam.at("parameters").at(std::string(name)).get<double>());
                }
                out[entry.at("class").get<int>()] = model;
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed fits file: ") + e.what());
    }
    return out;
}

void write_plot(const ExperimentConfig& config, const RetentionSeries& series,
                const std::vector<ReviewEvent>& events, const std::map<int, CurveModel>& fits,
                const fs::path& path) {
    PlotOptions options;
    options.classes = fitted_classes(config);
    options.timestamp_comment = config.svg_timestamp;
    std::string names;
    for (int c : options.classes) names += (names.empty() ? "" : ", ") + std::to_string(c);
    options.title = std::string(config.reviews_enabled && config.theta > 0 ? "Smoothed recall" : "Recall") +
                    " probability of class " + names + " over " +
                    std::to_string(config.continuation_epochs) + " epochs";
    render_svg_plot(series, events, fits, path, options);
}

std::string RunManifest::to_json() const {
    Json j;
    j["version"] = version;
    j["config"] = Json::parse(config_json);
    Json timings_json = Json::object();
    for (const auto& t : timings) timings_json[t.phase] = t.seconds;
    j["timings"] = timings_json;
    Json pre = Json::object();
    pre["test_accuracy"] = pretrain_test_accuracy ? Json(*pretrain_test_accuracy) : Json(nullptr);
    pre["proto_eval_accuracy"] =
        pretrain_proto_eval_accuracy ? Json(*pretrain_proto_eval_accuracy) : Json(nullptr);
    j["pretrain"] = pre;
    Json arts = Json::object();
    for (const auto& [role, path] : artifacts) arts[role] = path;
    j["artifacts"] = arts;
    return j.dump(2) + "\n";
}

RunManifest cmd_pretrain(const ExperimentConfig& config, const LogFn& log) {
    const auto paths = ArtifactPaths::in(config.output_dir);
    RunManifest m = load_manifest(config, paths);
    Stopwatch sw;
    const auto data = in_phase("load-data", [&] { return load_experiment_data(config); });
    const auto result = in_phase("pretrain", [&] { return run_pretrain(config, data, log); });
    in_phase("pretrain", [&] {
        save_network(result.net, paths.model);
        if (config.prototype_timing == "plateau") {
            write_file_atomic(paths.prototype_snapshots, snapshots_to_json(result));
            m.artifacts["prototype_snapshots"] = paths.prototype_snapshots.string();
        }
        return 0;
    });
    m.artifacts["model"] = paths.model.string();
    m.pretrain_test_accuracy = result.test_accuracy;
    m.pretrain_proto_eval_accuracy = result.proto_eval_accuracy;
    record_timing(m, "pretrain", sw.seconds());
    if (result.test_accuracy) say(log, "pretrain test accuracy " + fixed(*result.test_accuracy, 4));
    save_manifest(m, paths);
    return m;
}

RunManifest cmd_prototypes(const ExperimentConfig& config, const LogFn& log) {
    const auto paths = ArtifactPaths::in(config.output_dir);
    RunManifest m = load_manifest(config, paths);
    Stopwatch sw;
    in_phase("prototypes", [&] {
        const auto data = load_experiment_data(config);
        const DenseNet net = load_network(paths.model);
        std::map<int, Eigen::VectorXd> snapshots;
        if (config.prototype_timing == "plateau" && fs::exists(paths.prototype_snapshots)) {
            snapshots = snapshots_from_json(read_file_text(paths.prototype_snapshots));
        }
        const auto store = build_prototypes(config, net, data.proto_eval, snapshots);
        write_file_atomic(paths.prototypes, prototypes_to_json(store));
        std::string line = "initial recall:";
        for (double r : store.initial_recall) line += " " + fixed(r, 4);
        say(log, line);
        return 0;
    });
    m.artifacts["prototypes"] = paths.prototypes.string();
    record_timing(m, "prototypes", sw.seconds());
    save_manifest(m, paths);
    return m;
}

RunManifest cmd_continue(const ExperimentConfig& config, const LogFn& log) {
    const auto paths = ArtifactPaths::in(config.output_dir);
    RunManifest m = load_manifest(config, paths);
    Stopwatch sw;
    in_phase("continue", [&] {
        const auto data = load_experiment_data(config);
        DenseNet net = load_network(paths.model);
        const auto store = prototypes_from_json(read_file_text(paths.prototypes));
        const auto result = run_continuation_phase(config, net, store, data, log);
        write_file_atomic(paths.retention_csv, result.series.to_csv());
        write_file_atomic(paths.events_jsonl, events_to_jsonl(result.events));
        say(log, std::to_string(result.events.size()) + " review events");
        return 0;
    });
    m.artifacts["retention_csv"] = paths.retention_csv.string();
    m.artifacts["events_jsonl"] = paths.events_jsonl.string();
    record_timing(m, "continue", sw.seconds());
    save_manifest(m, paths);
    return m;
}

RunManifest cmd_fit(const ExperimentConfig& config, const LogFn& log) {
    const auto paths = ArtifactPaths::in(config.output_dir);
    RunManifest m = load_manifest(config, paths);
    Stopwatch sw;
    in_phase("fit", [&] {
        const auto series = RetentionSeries::from_csv(read_file_text(paths.retention_csv),
                                                      kNumClasses, config.smoothing_window);
        const auto fits = fit_retention(config, series);
        write_file_atomic(paths.fits_json, fits_to_json(fits, config.fit_smoothed));
        for (const auto& f : fits) {
            if (!f.ranked.empty() && f.ranked.front().ok()) {
                say(log, "class " + std::to_string(f.cls) + ": best fit " +
                             std::string(family_name(f.ranked.front().model.family)) + " (R^2 " +
                             fixed(f.ranked.front().r_squared, 4) + ")");
            }
        }
        return 0;
    });
    m.artifacts["fits_json"] = paths.fits_json.string();
    record_timing(m, "fit", sw.seconds());
    save_manifest(m, paths);
    return m;
}

RunManifest cmd_plot(const ExperimentConfig& config, const LogFn& log) {
    const auto paths = ArtifactPaths::in(config.output_dir);
    RunManifest m = load_manifest(config, paths);
    Stopwatch sw;
    in_phase("plot", [&] {
        const auto series = RetentionSeries::from_csv(read_file_text(paths.retention_csv),
                                                      kNumClasses, config.smoothing_window);
        std::vector<ReviewEvent> events;
        if (fs::exists(paths.events_jsonl)) events = events_from_jsonl(read_file_text(paths.events_jsonl));
        std::map<int, CurveModel> fits;
        if (fs::exists(paths.fits_json)) fits = best_models_from_json(read_file_text(paths.fits_json));
        write_plot(config, series, events, fits, paths.plot_svg);
        say(log, "wrote " + paths.plot_svg.string());
        return 0;
    });
    m.artifacts["plot_svg"] = paths.plot_svg.string();
    record_timing(m, "plot", sw.seconds());
    save_manifest(m, paths);
    return m;
}

RunManifest run_pipeline(const ExperimentConfig& config, const LogFn& log) {
    config.validate();
    const auto paths = ArtifactPaths::in(config.output_dir);
    std::error_code ec;
    fs::remove(paths.manifest, ec);
    cmd_pretrain(config, log);
    cmd_prototypes(config, log);
    cmd_continue(config, log);
    cmd_fit(config, log);
    return cmd_plot(config, log);
}

}  // namespace nnforget
