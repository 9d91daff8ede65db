#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "nnforget/data.hpp"
#include "nnforget/nn.hpp"
#include "nnforget/retention.hpp"
#include "nnforget/train.hpp"

namespace nnforget {

struct ReviewPolicy {
    double theta = 0.8;           // trigger when smoothed recall < theta * initial recall
    double review_fraction = 0.5; // expected share of the reviewed class in each batch
    int max_review_epochs = 20;
    std::set<int> excluded_classes;
    bool reviews_enabled = true;

    /// Reviews can fire only when enabled, theta > 0 and something is excluded.
    bool active() const { return reviews_enabled && theta > 0.0 && !excluded_classes.empty(); }
    void validate() const;
};

struct ReviewEvent {
    int cls = 0;
    int trigger_epoch = 0;
    int end_epoch = 0;
    double pre_recall = 0.0;
    double post_recall = 0.0;
    double target_peak = 0.0;
    bool truncated = false;

    bool operator==(const ReviewEvent&) const = default;
};

/// A review in progress; `saved_weight` is restored when it ends.
struct ActiveReview {
    int cls = 0;
    int trigger_epoch = 0;
    double pre_recall = 0.0;
    double target_peak = 0.0;
    double saved_weight = 0.0;
};

/// Excluded classes, not already under review, whose latest smoothed recall
/// is strictly below theta * initial_recall.
std::set<int> check_trigger(const RetentionSeries& series, const PrototypeStore& store,
                            const ReviewPolicy& policy, const std::set<int>& in_review);

/// max(initial_recall[cls], every smoothed value of cls so far).
double prior_peak(const RetentionSeries& series, const PrototypeStore& store, int class_index);

/// Weight that gives `class_index` an expected batch share of review_fraction
/// against the other classes that currently have positive weight and examples.
double review_weight(const WeightedSampler& sampler, const ReviewPolicy& policy, int class_index);

/// Applies review_weight to the sampler and returns the weight it replaced.
double review_step(WeightedSampler& sampler, const ReviewPolicy& policy, int class_index);

/// Restores the pre-review weight.
void end_review(WeightedSampler& sampler, const ActiveReview& review);

struct ContinuationHooks {
    // Called before training each epoch (1-based), with the active reviews.
    std::function<void(int epoch, const WeightedSampler&, const std::map<int, ActiveReview>&)>
        on_epoch_start;
    std::function<void(int epoch, const Batch&)> on_batch;
    std::function<void(int epoch, const EpochStats&, const RetentionSeries&)> on_epoch_end;
};

struct ContinuationResult {
    RetentionSeries series;
    std::vector<ReviewEvent> events;
    std::vector<EpochStats> epoch_stats;
};

/// Continued training with threshold-triggered review sessions. Each epoch:
/// train, measure every class, close reviews that recovered (or ran out of
/// epochs), then open reviews for newly triggered classes. `series` may
/// already hold earlier measurements (e.g. the epoch-0 baseline); training
/// epochs are numbered after its last epoch.
ContinuationResult run_continuation(DenseNet& net, OptimState& opt, WeightedSampler& sampler,
                                    const ImageDataset& continuation_set,
                                    const ImageDataset& proto_eval, const PrototypeStore& store,
                                    const ReviewPolicy& policy, const TrainConfig& config,
                                    RetentionSeries series, const ContinuationHooks& hooks = {});

/// One JSON object per line: class, trigger_epoch, end_epoch, pre_recall,
/// post_recall, target_peak, truncated.
std::string events_to_jsonl(const std::vector<ReviewEvent>& events);
std::vector<ReviewEvent> events_from_jsonl(const std::string& text);

}  // namespace nnforget
