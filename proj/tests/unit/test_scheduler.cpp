#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "nnforget/errors.hpp"
#include "nnforget/scheduler.hpp"
#include "nnforget/train.hpp"
#include "support.hpp"

using namespace nnforget;

namespace {

PrototypeStore store_with_initial(double initial) {
    PrototypeStore s;
    for (int c = 0; c < kNumClasses; ++c) s.prototypes.push_back(Eigen::VectorXd::Unit(10, c));
    s.initial_recall.assign(kNumClasses, initial);
    return s;
}

ReviewPolicy policy_excluding(int cls, double theta = 0.8) {
    ReviewPolicy p;
    p.theta = theta;
    p.excluded_classes = {cls};
    return p;
}

std::vector<int> cyclic_labels(int n) {
    std::vector<int> v;
    for (int i = 0; i < n; ++i) v.push_back(i % kNumClasses);
    return v;
}

struct SmallWorld {
    // Class 8 shares most of class 3's centre, so training without it erodes its recall.
    ImageDataset train = testing::blob_dataset(40, 24, 1, 0.25, 3);
    ImageDataset proto = testing::blob_dataset(10, 24, 1, 0.25, 3, 77);
    DenseNet net;
    PrototypeStore store;

    SmallWorld() {
        net = init_network({24, 16, 16, 10}, 3);
        auto opt = OptimState::for_network(net);
        WeightedSampler sampler(train, 4);
        TrainConfig cfg;
        cfg.learning_rate = 3e-3;
        cfg.batch_size = 16;
        for (int e = 0; e < 15; ++e) train_epoch(net, opt, sampler, train, cfg);
        store = collect_prototypes(net, proto, 10.0);
    }
};

}  // namespace

TEST_CASE("trigger threshold is strict") {
    const auto store = store_with_initial(0.30);
    const auto policy = policy_excluding(8);
    RetentionSeries s(kNumClasses, 1);
    s.append(1, 8, 0.235);
    CHECK(check_trigger(s, store, policy, {}) == std::set<int>{8});
    CHECK(check_trigger(s, store, policy, {8}).empty());

    RetentionSeries at(kNumClasses, 1);
    at.append(1, 8, 0.8 * 0.30);
    CHECK(check_trigger(at, store, policy, {}).empty());

    // Non-excluded classes never trigger.
    RetentionSeries other(kNumClasses, 1);
    other.append(1, 3, 0.01);
    CHECK(check_trigger(other, store, policy, {}).empty());

    auto disabled = policy;
    disabled.reviews_enabled = false;
    CHECK(check_trigger(s, store, disabled, {}).empty());
}

TEST_CASE("prior peak covers the initial score and smoothed history") {
    const auto store = store_with_initial(0.29);
    RetentionSeries empty(kNumClasses, 1);
    CHECK(prior_peak(empty, store, 8) == 0.29);

    RetentionSeries s(kNumClasses, 1);
    s.append(1, 8, 0.25);
    s.append(2, 8, 0.31);
    s.append(3, 8, 0.20);
    CHECK(prior_peak(s, store, 8) == 0.31);

    RetentionSeries low(kNumClasses, 1);
    low.append(1, 8, 0.2);
    low.append(2, 8, 0.1);
    CHECK(prior_peak(low, store, 8) == 0.29);
}

TEST_CASE("review weights give the requested batch share") {
    WeightedSampler sampler(cyclic_labels(100), 0);
    sampler.set_class_weight(8, 0.0);
    ReviewPolicy half = policy_excluding(8);
    CHECK(review_weight(sampler, half, 8) == doctest::Approx(9.0));
    ReviewPolicy tenth = half;
    tenth.review_fraction = 0.1;
    CHECK(review_weight(sampler, tenth, 8) == doctest::Approx(1.0));

    const double saved = review_step(sampler, half, 8);
    CHECK(saved == 0.0);
    CHECK(sampler.class_weight(8) == doctest::Approx(9.0));
    for (int c = 0; c < kNumClasses; ++c)
        if (c != 8) CHECK(sampler.class_weight(c) == 1.0);
    ActiveReview review;
    review.cls = 8;
    review.saved_weight = saved;
    end_review(sampler, review);
    CHECK(sampler.class_weight(8) == 0.0);

    WeightedSampler lonely(cyclic_labels(100), 0);
    for (int c = 0; c < kNumClasses; ++c) lonely.set_class_weight(c, 0.0);
    CHECK_THROWS_AS(review_weight(lonely, half, 8), ConfigError);
}

TEST_CASE("policy validation") {
    ReviewPolicy p;
    p.review_fraction = 1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.review_fraction = 0.5;
    p.theta = 1.5;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p.theta = 0.8;
    p.max_review_epochs = 0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("disabled reviews produce the plain forgetting baseline") {
    SmallWorld w;
    auto net = w.net;
    auto opt = OptimState::for_network(net);
    WeightedSampler sampler(w.train, 5);
    sampler.set_class_weight(8, 0.0);
    auto policy = policy_excluding(8);
    policy.reviews_enabled = false;
    TrainConfig cfg;
    cfg.epochs = 6;
    cfg.batch_size = 16;
    const auto weights_before = sampler.weights();
    ContinuationHooks hooks;
    int eights = 0;
    hooks.on_batch = [&](int, const Batch& b) {
        for (int y : b.labels) eights += y == 8;
    };
    const auto result = run_continuation(net, opt, sampler, w.train, w.proto, w.store, policy, cfg,
                                         RetentionSeries{}, hooks);
    CHECK(result.series.size() == 6 * 10);
    CHECK(result.events.empty());
    CHECK(eights == 0);
    CHECK(sampler.weights() == weights_before);
    CHECK(result.series.records().front().epoch == 1);
}

TEST_CASE("epochs continue after an existing baseline measurement") {
    SmallWorld w;
    auto net = w.net;
    auto opt = OptimState::for_network(net);
    WeightedSampler sampler(w.train, 5);
    sampler.set_class_weight(8, 0.0);
    RetentionSeries series;
    measure_epoch(net, w.proto, w.store, 0, series);
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    auto policy = policy_excluding(8);
    policy.reviews_enabled = false;
    const auto r = run_continuation(net, opt, sampler, w.train, w.proto, w.store, policy, cfg, series);
    CHECK(r.series.size() == 30);
    CHECK(r.series.latest(8)->epoch == 2);
}

TEST_CASE("excluded class is drawn only during review sessions") {
    SmallWorld w;
    auto net = w.net;
    auto opt = OptimState::for_network(net);
    WeightedSampler sampler(w.train, 6);
    sampler.set_class_weight(8, 0.0);
    // A theta near 1 makes reviews fire readily on this small problem.
    auto policy = policy_excluding(8, 0.98);
    policy.max_review_epochs = 4;
    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 16;
    cfg.learning_rate = 3e-3;

    std::map<int, bool> reviewing;
    int leaked = 0, reviewed_draws = 0;
    ContinuationHooks hooks;
    hooks.on_epoch_start = [&](int epoch, const WeightedSampler&, const std::map<int, ActiveReview>& a) {
        reviewing[epoch] = a.contains(8);
    };
    hooks.on_batch = [&](int epoch, const Batch& b) {
        for (int y : b.labels) {
            if (y != 8) continue;
            if (reviewing[epoch]) ++reviewed_draws;
            else ++leaked;
        }
    };
    const auto r = run_continuation(net, opt, sampler, w.train, w.proto, w.store, policy, cfg,
                                    RetentionSeries{}, hooks);
    CHECK(leaked == 0);
    REQUIRE_FALSE(r.events.empty());
    CHECK(reviewed_draws > 0);
    CHECK(sampler.class_weight(8) == 0.0);

    for (const auto& e : r.events) {
        CHECK(e.end_epoch >= e.trigger_epoch);
        CHECK(e.end_epoch - e.trigger_epoch <= policy.max_review_epochs);
        const auto at_trigger = r.series.at(e.trigger_epoch, 8);
        REQUIRE(at_trigger.has_value());
        CHECK(at_trigger->recall_smoothed < policy.theta * w.store.initial_recall[8]);
        if (!e.truncated) CHECK(e.post_recall >= e.target_peak);
    }
    for (std::size_t i = 1; i < r.events.size(); ++i) {
        CHECK(r.events[i].trigger_epoch >= r.events[i - 1].end_epoch);
    }
}

TEST_CASE("continuation is deterministic") {
    SmallWorld w;
    auto run = [&] {
        auto net = w.net;
        auto opt = OptimState::for_network(net);
        WeightedSampler sampler(w.train, 7);
        sampler.set_class_weight(8, 0.0);
        auto policy = policy_excluding(8, 0.98);
        TrainConfig cfg;
        cfg.epochs = 8;
        cfg.batch_size = 16;
        cfg.learning_rate = 3e-3;
        return run_continuation(net, opt, sampler, w.train, w.proto, w.store, policy, cfg, RetentionSeries{});
    };
    const auto a = run();
    const auto b = run();
    CHECK(a.series.to_csv() == b.series.to_csv());
    CHECK(events_to_jsonl(a.events) == events_to_jsonl(b.events));
}

TEST_CASE("excluded class with weight is rejected") {
    SmallWorld w;
    auto net = w.net;
    auto opt = OptimState::for_network(net);
    WeightedSampler sampler(w.train, 8);
    TrainConfig cfg;
    CHECK_THROWS_AS(run_continuation(net, opt, sampler, w.train, w.proto, w.store,
                                     policy_excluding(8), cfg, RetentionSeries{}),
                    ConfigError);
}

TEST_CASE("events JSONL round-trip") {
    std::vector<ReviewEvent> events{{8, 4, 9, 0.21, 0.3, 0.29, false}, {8, 40, 60, 0.2, 0.25, 0.3, true}};
    const auto text = events_to_jsonl(events);
    CHECK(text.rfind("{\"class\":8,\"trigger_epoch\":4,", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 2);
    CHECK(events_from_jsonl(text) == events);
    CHECK(events_from_jsonl("").empty());
}
