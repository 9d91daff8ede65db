#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "nnforget/data.hpp"
#include "nnforget/nn.hpp"

namespace nnforget {

/// Stored per-class anchors for the recall metric: one mean hidden vector per
/// class, the recall each class had when the anchors were taken, and the
/// similarity scale alpha.
struct PrototypeStore {
    std::vector<Eigen::VectorXd> prototypes;
    std::vector<double> initial_recall;
    double alpha = 10.0;

    int num_classes() const { return static_cast<int>(prototypes.size()); }
    int width() const { return prototypes.empty() ? 0 : static_cast<int>(prototypes.front().size()); }
    void validate() const;

    bool operator==(const PrototypeStore&) const = default;
};

/// dot(u, v) / (|u| |v|); 0 when either vector has zero norm.
double cosine_similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v);

/// Softmax over alpha-scaled cosine similarities between `h` and every
/// prototype. Entry c is the recall probability of class c.
Eigen::VectorXd recall_distribution(const Eigen::VectorXd& h, const PrototypeStore& store);

/// Same softmax, from precomputed similarities.
Eigen::VectorXd softmax_scaled(const Eigen::VectorXd& similarities, double alpha);

double recall_probability(const Eigen::VectorXd& h, const PrototypeStore& store, int correct_class);

/// Prototype c = mean last-hidden activation over the examples labelled c;
/// initial_recall is then measured against the freshly built store.
PrototypeStore collect_prototypes(const DenseNet& net, const ImageDataset& proto_eval, double alpha);

/// Mean last-hidden activation per class (throws DataError on a missing class).
std::vector<Eigen::VectorXd> class_mean_hidden(const DenseNet& net, const ImageDataset& proto_eval,
                                               int num_classes);

/// Mean recall probability over the examples of one class.
double class_recall(const DenseNet& net, const ImageDataset& proto_eval,
                    const PrototypeStore& store, int class_index);

/// class_recall for every class from a single pass over the set.
std::vector<double> all_class_recall(const DenseNet& net, const ImageDataset& proto_eval,
                                     const PrototypeStore& store);

struct RetentionRecord {
    int epoch = 0;
    int cls = 0;
    double recall_raw = 0.0;
    double recall_smoothed = 0.0;

    bool operator==(const RetentionRecord&) const = default;
};

/// Per-class recall over time. The smoothed value is the trailing mean of the
/// last min(window, available) raw values of the same class.
class RetentionSeries {
public:
    explicit RetentionSeries(int num_classes = kNumClasses, int window = 5);

    /// Appends a raw measurement and returns the stored record. Epochs must
    /// be strictly increasing per class.
    const RetentionRecord& append(int epoch, int cls, double recall_raw);

    int num_classes() const { return num_classes_; }
    int window() const { return window_; }
    const std::vector<RetentionRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }

    std::vector<RetentionRecord> records_of(int cls) const;
    std::optional<RetentionRecord> latest(int cls) const;
    /// Record of `cls` at `epoch`, if one was measured.
    std::optional<RetentionRecord> at(int epoch, int cls) const;

    /// CSV with header epoch,class,recall_raw,recall_smoothed, rows ordered by
    /// (epoch, class).
    std::string to_csv() const;
    static RetentionSeries from_csv(const std::string& text, int num_classes = kNumClasses,
                                    int window = 5);

private:
    int num_classes_;
    int window_;
    std::vector<RetentionRecord> records_;
    std::vector<std::vector<double>> raw_by_class_;
    std::vector<int> last_epoch_;
};

/// Measures every class and appends one record each.
void measure_epoch(const DenseNet& net, const ImageDataset& proto_eval,
                   const PrototypeStore& store, int epoch, RetentionSeries& series);

/// Detects per-class validation-accuracy plateaus: a class plateaus once its
/// accuracy has improved by less than `min_delta` for `patience` consecutive
/// epochs.
class PlateauTracker {
public:
    explicit PlateauTracker(int num_classes = kNumClasses, double min_delta = 0.002,
                            int patience = 3);

    /// Feeds one epoch of per-class accuracy; returns the classes that reach
    /// their plateau on this epoch.
    std::vector<int> update(const std::vector<double>& class_accuracy);
    bool plateaued(int cls) const { return plateaued_.at(static_cast<std::size_t>(cls)); }

private:
    double min_delta_;
    int patience_;
    std::vector<std::optional<double>> previous_;
    std::vector<int> streak_;
    std::vector<bool> plateaued_;
};

/// Prototypes file: {"alpha": a, "prototypes": [[...], ...], "initial_recall": [...]}.
std::string prototypes_to_json(const PrototypeStore& store);
PrototypeStore prototypes_from_json(const std::string& text);

}  // namespace nnforget
