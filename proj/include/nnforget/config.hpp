#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nnforget/data.hpp"
#include "nnforget/nn.hpp"
#include "nnforget/scheduler.hpp"

namespace nnforget {

/// Every knob of an experiment. JSON keys and CLI flags use the member names.
struct ExperimentConfig {
    std::string data_dir;  // empty: $NNFORGET_DATA_DIR, then "data/mnist"
    std::uint64_t seed = 0;
    std::vector<int> layer_dims{784, 256, 256, 256, 10};
    double learning_rate = 1e-4;
    int batch_size = 64;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int pretrain_epochs = 20;
    int continuation_epochs = 100;
    std::size_t pretrain_count = 45000;
    std::size_t continuation_count = 10000;
    std::size_t proto_eval_count = 5000;
    double alpha = 10.0;
    std::vector<int> excluded_classes{8};
    double theta = 0.8;
    double review_fraction = 0.5;
    int max_review_epochs = 20;
    bool reviews_enabled = true;
    int smoothing_window = 5;
    std::string prototype_timing = "converged";  // or "plateau"
    bool fit_smoothed = false;
    bool augment = false;
    bool svg_timestamp = false;
    std::string output_dir = "runs/default";

    bool operator==(const ExperimentConfig&) const = default;

    /// Throws ConfigError naming the offending key.
    void validate() const;

    std::string to_json() const;

    std::filesystem::path resolved_data_dir() const;
    TrainConfig train_config(int epochs, std::uint64_t seed_offset) const;
    ReviewPolicy review_policy() const;
    SplitSpec split_spec() const;
};

/// Names of every accepted key, in serialization order.
std::vector<std::string> config_keys();

/// Parses a JSON document (strict: unknown keys rejected) on top of defaults.
ExperimentConfig parse_config_json(const std::string& text);

/// Applies "--key value" style overrides; values are parsed by the key's type.
/// List keys take JSON arrays or comma-separated integers.
ExperimentConfig apply_overrides(ExperimentConfig config,
                                 const std::vector<std::pair<std::string, std::string>>& overrides);

/// File (optional) then overrides, then validation.
ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides = {});

}  // namespace nnforget
