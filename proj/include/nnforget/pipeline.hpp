#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nnforget/config.hpp"
#include "nnforget/data.hpp"
#include "nnforget/memfit.hpp"
#include "nnforget/nn.hpp"
#include "nnforget/retention.hpp"
#include "nnforget/scheduler.hpp"

namespace nnforget {

/// Seed offsets from the master seed, one per randomized consumer.
namespace seed_offset {
inline constexpr std::uint64_t kInit = 0;
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kPretrainSampler = 2;
inline constexpr std::uint64_t kContinuationSampler = 3;
}  // namespace seed_offset

using LogFn = std::function<void(const std::string&)>;

/// Writes progress lines to stderr.
LogFn stderr_logger();

struct ArtifactPaths {
    std::filesystem::path model;
    std::filesystem::path prototypes;
    std::filesystem::path prototype_snapshots;
    std::filesystem::path retention_csv;
    std::filesystem::path events_jsonl;
    std::filesystem::path fits_json;
    std::filesystem::path plot_svg;
    std::filesystem::path manifest;

    static ArtifactPaths in(const std::filesystem::path& output_dir);
};

struct ExperimentData {
    ImageDataset pretrain;
    ImageDataset continuation;
    ImageDataset proto_eval;
    std::optional<ImageDataset> test;
};

/// Loads train-{images,labels} (and t10k-* when present) from the data
/// directory, raw or .gz, and cuts the three splits.
ExperimentData load_experiment_data(const ExperimentConfig& config);

struct PretrainResult {
    DenseNet net;
    std::vector<EpochStats> epochs;
    double proto_eval_accuracy = 0.0;
    std::optional<double> test_accuracy;
    // Filled in "plateau" mode: the prototype captured for each class when
    // its validation accuracy plateaued (missing entries use the final net).
    std::map<int, Eigen::VectorXd> plateau_prototypes;
    std::map<int, int> plateau_epochs;
};

PretrainResult run_pretrain(const ExperimentConfig& config, const ExperimentData& data,
                            const LogFn& log = {});

/// Builds the store from the converged net, or, in plateau mode, from the
/// captured snapshots where available. Initial recall is measured with `net`.
PrototypeStore build_prototypes(const ExperimentConfig& config, const DenseNet& net,
                                const ImageDataset& proto_eval,
                                const std::map<int, Eigen::VectorXd>& plateau_prototypes = {});

/// Epoch-0 measurement followed by continuation_epochs of training with the
/// configured exclusion and review policy. `net` is updated in place.
ContinuationResult run_continuation_phase(const ExperimentConfig& config, DenseNet& net,
                                          const PrototypeStore& store, const ExperimentData& data,
                                          const LogFn& log = {});

struct ClassFit {
    int cls = 0;
    std::vector<FitResult> ranked;
};

/// Fits the excluded classes (every class when nothing is excluded), using
/// raw recall unless fit_smoothed is set. t is the epoch number.
std::vector<ClassFit> fit_retention(const ExperimentConfig& config, const RetentionSeries& series);
CurvePoints series_points(const RetentionSeries& series, int cls, bool smoothed);
std::string fits_to_json(const std::vector<ClassFit>& fits, bool smoothed);

/// Best-fitting model per class from a fits JSON document.
std::map<int, CurveModel> best_models_from_json(const std::string& text);

void write_plot(const ExperimentConfig& config, const RetentionSeries& series,
                const std::vector<ReviewEvent>& events, const std::map<int, CurveModel>& fits,
                const std::filesystem::path& path);

struct PhaseTiming {
    std::string phase;
    double seconds = 0.0;
};

struct RunManifest {
    std::string config_json;
    std::string version;
    std::vector<PhaseTiming> timings;
    std::map<std::string, std::string> artifacts;  // role -> path
    std::optional<double> pretrain_test_accuracy;
    std::optional<double> pretrain_proto_eval_accuracy;

    std::string to_json() const;
};

/// Subcommands; each reads what earlier phases wrote to output_dir and
/// merges its entries into manifest.json.
RunManifest cmd_pretrain(const ExperimentConfig& config, const LogFn& log = {});
RunManifest cmd_prototypes(const ExperimentConfig& config, const LogFn& log = {});
RunManifest cmd_continue(const ExperimentConfig& config, const LogFn& log = {});
RunManifest cmd_fit(const ExperimentConfig& config, const LogFn& log = {});
RunManifest cmd_plot(const ExperimentConfig& config, const LogFn& log = {});

/// pretrain -> prototypes -> continue -> fit -> plot, all artifacts written
/// to output_dir.
RunManifest run_pipeline(const ExperimentConfig& config, const LogFn& log = {});

std::string library_version();

}  // namespace nnforget
