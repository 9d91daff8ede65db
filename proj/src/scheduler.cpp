#include "nnforget/scheduler.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "json.hpp"

#include "nnforget/errors.hpp"

namespace nnforget {

void ReviewPolicy::validate() const {
    if (!(theta >= 0.0 && theta <= 1.0)) throw ConfigError("theta must lie in (0, 1] (0 disables reviews)");
    if (!(review_fraction > 0.0 && review_fraction < 1.0)) {
        throw ConfigError("review_fraction must lie in (0, 1)");
    }
    if (max_review_epochs < 1) throw ConfigError("max_review_epochs must be >= 1");
    for (int c : excluded_classes) {
        if (c < 0 || c >= kNumClasses) {
            throw ConfigError("excluded_classes entry " + std::to_string(c) + " out of range");
        }
    }
}

std::set<int> check_trigger(const RetentionSeries& series, const PrototypeStore& store,
                            const ReviewPolicy& policy, const std::set<int>& in_review) {
    std::set<int> out;
    if (!policy.active()) return out;
    for (int c : policy.excluded_classes) {
        if (in_review.contains(c)) continue;
        const auto last = series.latest(c);
        if (!last) continue;
        const double threshold = policy.theta * store.initial_recall.at(static_cast<std::size_t>(c));
        if (last->recall_smoothed < threshold) out.insert(c);
    }
    return out;
}

double prior_peak(const RetentionSeries& series, const PrototypeStore& store, int class_index) {
    double peak = store.initial_recall.at(static_cast<std::size_t>(class_index));
    for (const auto& r : series.records()) {
        if (r.cls == class_index) peak = std::max(peak, r.recall_smoothed);
    }
    return peak;
}

double review_weight(const WeightedSampler& sampler, const ReviewPolicy& policy, int class_index) {
    double others = 0.0;
    for (int c = 0; c < sampler.num_classes(); ++c) {
        if (c == class_index || sampler.class_size(c) == 0) continue;
        others += sampler.class_weight(c);
    }
    if (!(others > 0.0)) {
        throw ConfigError("cannot review class " + std::to_string(class_index) +
                          ": no other class is active in the sampler");
    }
    return policy.review_fraction / (1.0 - policy.review_fraction) * others;
}

double review_step(WeightedSampler& sampler, const ReviewPolicy& policy, int class_index) {
    const double previous = sampler.class_weight(class_index);
    sampler.set_class_weight(class_index, review_weight(sampler, policy, class_index));
    return previous;
}

void end_review(WeightedSampler& sampler, const ActiveReview& review) {
    sampler.set_class_weight(review.cls, review.saved_weight);
}

ContinuationResult run_continuation(DenseNet& net, OptimState& opt, WeightedSampler& sampler,
                                    const ImageDataset& continuation_set,
                                    const ImageDataset& proto_eval, const PrototypeStore& store,
                                    const ReviewPolicy& policy, const TrainConfig& config,
                                    RetentionSeries series, const ContinuationHooks& hooks) {
    policy.validate();
    config.validate();
    store.validate();
    for (int c : policy.excluded_classes) {
        if (sampler.class_weight(c) != 0.0) {
            throw ConfigError("excluded class " + std::to_string(c) + " has a nonzero sampler weight");
        }
    }

    int epoch = 0;
    for (const auto& r : series.records()) epoch = std::max(epoch, r.epoch);
    if (series.empty()) epoch = 0;

    ContinuationResult result{std::move(series), {}, {}};
    std::map<int, ActiveReview> active;

    for (int step = 0; step < config.epochs; ++step) {
        ++epoch;
        if (hooks.on_epoch_start) hooks.on_epoch_start(epoch, sampler, active);

        std::function<void(const Batch&)> observer;
        if (hooks.on_batch) observer = [&](const Batch& b) { hooks.on_batch(epoch, b); };
        const EpochStats stats = train_epoch(net, opt, sampler, continuation_set, config, observer);
        result.epoch_stats.push_back(stats);

        measure_epoch(net, proto_eval, store, epoch, result.series);

        for (auto it = active.begin(); it != active.end();) {
            const ActiveReview& review = it->second;
            const double now = result.series.latest(review.cls)->recall_smoothed;
            const bool recovered = now >= review.target_peak;
            const bool expired = epoch - review.trigger_epoch >= policy.max_review_epochs;
            if (recovered || expired) {
                end_review(sampler, review);
                result.events.push_back({review.cls, review.trigger_epoch, epoch, review.pre_recall,
                                         now, review.target_peak, !recovered});
                it = active.erase(it);
            } else {
                ++it;
            }
        }

        std::set<int> in_review;
        for (const auto& [c, _] : active) in_review.insert(c);
        for (int c : check_trigger(result.series, store, policy, in_review)) {
            ActiveReview review;
            review.cls = c;
            review.trigger_epoch = epoch;
            review.pre_recall = result.series.latest(c)->recall_smoothed;
            review.target_peak = prior_peak(result.series, store, c);
            review.saved_weight = review_step(sampler, policy, c);
            active.emplace(c, review);
        }

        if (hooks.on_epoch_end) hooks.on_epoch_end(epoch, stats, result.series);
    }

    // Reviews still open at the end stay out of the event log: they have
    // neither recovered nor hit the epoch cap. Their weights are restored.
    for (const auto& [c, review] : active) end_review(sampler, review);
    return result;
}

std::string events_to_jsonl(const std::vector<ReviewEvent>& events) {
    std::string out;
    for (const auto& e : events) {
        nlohmann::ordered_json j;
        j["class"] = e.cls;
        j["trigger_epoch"] = e.trigger_epoch;
        j["end_epoch"] = e.end_epoch;
        j["pre_recall"] = e.pre_recall;
        j["post_recall"] = e.post_recall;
        j["target_peak"] = e.target_peak;
        j["truncated"] = e.truncated;
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<ReviewEvent> events_from_jsonl(const std::string& text) {
    std::vector<ReviewEvent> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            ReviewEvent e;
            e.cls = j.at("class").get<int>();
            e.trigger_epoch = j.at("trigger_epoch").get<int>();
            e.end_epoch = j.at("end_epoch").get<int>();
            e.pre_recall = j.at("pre_recall").get<double>();
            e.post_recall = j.at("post_recall").get<double>();
            e.target_peak = j.at("target_peak").get<double>();
            e.truncated = j.at("truncated").get<bool>();
            out.push_back(e);
        } catch (const nlohmann::json::exception& ex) {
            throw FormatError(std::string("malformed events line: ") + ex.what());
        }
    }
    return out;
}

}  // namespace nnforget
