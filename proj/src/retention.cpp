#include "nnforget/retention.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "json.hpp"

#include "nnforget/errors.hpp"

namespace nnforget {

namespace {

constexpr std::size_t kChunk = 2048;

// Invokes fn(column_index_in_dataset, hidden_column) for every example of the
// requested class (or all examples when cls < 0), in dataset order.
template <typename Fn>
void for_each_hidden(const DenseNet& net, const ImageDataset& set, int cls, Fn&& fn) {
    std::vector<std::size_t> members;
    if (cls < 0) {
        members.resize(set.size());
        for (std::size_t i = 0; i < set.size(); ++i) members[i] = i;
    } else {
        members = set.indices_of_class(cls);
    }
    for (std::size_t start = 0; start < members.size(); start += kChunk) {
        const std::size_t end = std::min(members.size(), start + kChunk);
        std::span<const std::size_t> chunk(members.data() + start, end - start);
        const Eigen::MatrixXd hidden = hidden_states(net, set.gather(chunk));
        for (std::size_t j = 0; j < chunk.size(); ++j) {
            fn(chunk[j], hidden.col(static_cast<Eigen::Index>(j)));
        }
    }
}

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace

void PrototypeStore::validate() const {
    if (prototypes.empty()) throw ConfigError("prototype store is empty");
    if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be finite and >= 0");
    const auto w = prototypes.front().size();
    for (const auto& p : prototypes) {
        if (p.size() != w) throw ShapeError("prototypes have inconsistent widths");
        if (!p.allFinite()) throw ConfigError("prototype contains non-finite values");
    }
    if (!initial_recall.empty() && initial_recall.size() != prototypes.size()) {
        throw ShapeError("initial_recall length does not match the number of prototypes");
    }
}

double cosine_similarity(const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    if (u.size() != v.size()) {
        throw ShapeError("cosine_similarity on vectors of length " + std::to_string(u.size()) +
                         " and " + std::to_string(v.size()));
    }
    const double nu = u.norm();
    const double nv = v.norm();
    if (nu == 0.0 || nv == 0.0) return 0.0;
    const double s = u.dot(v) / (nu * nv);
    return std::clamp(s, -1.0, 1.0);
}

Eigen::VectorXd softmax_scaled(const Eigen::VectorXd& similarities, double alpha) {
    Eigen::VectorXd z = alpha * similarities;
    z.array() -= z.maxCoeff();
    z = z.array().exp().matrix();
    return z / z.sum();
}

Eigen::VectorXd recall_distribution(const Eigen::VectorXd& h, const PrototypeStore& store) {
    if (h.size() != store.width()) {
        throw ShapeError("hidden state has length " + std::to_string(h.size()) +
                         ", prototypes have " + std::to_string(store.width()));
    }
    Eigen::VectorXd sims(store.num_classes());
    for (int c = 0; c < store.num_classes(); ++c) {
        sims(c) = cosine_similarity(h, store.prototypes[static_cast<std::size_t>(c)]);
    }
    return softmax_scaled(sims, store.alpha);
}

double recall_probability(const Eigen::VectorXd& h, const PrototypeStore& store, int correct_class) {
    if (correct_class < 0 || correct_class >= store.num_classes()) {
        throw ShapeError("class " + std::to_string(correct_class) + " not in the prototype store");
    }
    return recall_distribution(h, store)(correct_class);
}

std::vector<Eigen::VectorXd> class_mean_hidden(const DenseNet& net, const ImageDataset& proto_eval,
                                               int num_classes) {
    std::vector<Eigen::VectorXd> sums(static_cast<std::size_t>(num_classes),
                                      Eigen::VectorXd::Zero(net.hidden_width()));
    std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
    for_each_hidden(net, proto_eval, -1, [&](std::size_t i, const auto& h) {
        const auto y = static_cast<std::size_t>(proto_eval.labels[i]);
        if (y >= sums.size()) throw DataError("label out of range in prototype set");
        sums[y] += h;
        ++counts[y];
    });
    for (std::size_t c = 0; c < sums.size(); ++c) {
        if (counts[c] == 0) {
            throw DataError("prototype set has no example of class " + std::to_string(c));
        }
        sums[c] /= static_cast<double>(counts[c]);
    }
    return sums;
}

PrototypeStore collect_prototypes(const DenseNet& net, const ImageDataset& proto_eval, double alpha) {
    PrototypeStore store;
    store.alpha = alpha;
    store.prototypes = class_mean_hidden(net, proto_eval, net.class_count());
    store.validate();
    store.initial_recall = all_class_recall(net, proto_eval, store);
    return store;
}

double class_recall(const DenseNet& net, const ImageDataset& proto_eval,
                    const PrototypeStore& store, int class_index) {
    if (class_index < 0 || class_index >= store.num_classes()) {
        throw DataError("class " + std::to_string(class_index) + " not in the prototype store");
    }
    double sum = 0.0;
    std::size_t n = 0;
    for_each_hidden(net, proto_eval, class_index, [&](std::size_t, const auto& h) {
        sum += recall_distribution(h, store)(class_index);
        ++n;
    });
    if (n == 0) throw DataError("no examples of class " + std::to_string(class_index));
    return sum / static_cast<double>(n);
}

std::vector<double> all_class_recall(const DenseNet& net, const ImageDataset& proto_eval,
                                     const PrototypeStore& store) {
    const auto k = static_cast<std::size_t>(store.num_classes());
    std::vector<double> sums(k, 0.0);
    std::vector<std::size_t> counts(k, 0);
    for_each_hidden(net, proto_eval, -1, [&](std::size_t i, const auto& h) {
        const auto y = static_cast<std::size_t>(proto_eval.labels[i]);
        if (y >= k) throw DataError("label out of range in prototype set");
        sums[y] += recall_distribution(h, store)(static_cast<Eigen::Index>(y));
        ++counts[y];
    });
    for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] == 0) throw DataError("no examples of class " + std::to_string(c));
        sums[c] /= static_cast<double>(counts[c]);
    }
    return sums;
}

// --- RetentionSeries ------------------------------------------------------

RetentionSeries::RetentionSeries(int num_classes, int window)
    : num_classes_(num_classes),
      window_(window),
      raw_by_class_(static_cast<std::size_t>(std::max(num_classes, 0))),
      last_epoch_(static_cast<std::size_t>(std::max(num_classes, 0)), -1) {
    if (num_classes < 1) throw ConfigError("series needs at least one class");
    if (window < 1) throw ConfigError("smoothing_window must be >= 1");
}

const RetentionRecord& RetentionSeries::append(int epoch, int cls, double recall_raw) {
    if (cls < 0 || cls >= num_classes_) throw DataError("class " + std::to_string(cls) + " out of range");
    if (epoch < 0) throw DataError("epoch must be >= 0");
    const auto c = static_cast<std::size_t>(cls);
    if (epoch <= last_epoch_[c]) {
        throw DataError("epochs must increase strictly per class (class " + std::to_string(cls) +
                        ", epoch " + std::to_string(epoch) + ")");
    }
    auto& raw = raw_by_class_[c];
    raw.push_back(recall_raw);
    const std::size_t n = std::min(raw.size(), static_cast<std::size_t>(window_));
    double sum = 0.0;
    for (std::size_t i = raw.size() - n; i < raw.size(); ++i) sum += raw[i];
    last_epoch_[c] = epoch;
    records_.push_back({epoch, cls, recall_raw, sum / static_cast<double>(n)});
    return records_.back();
}

std::vector<RetentionRecord> RetentionSeries::records_of(int cls) const {
    std::vector<RetentionRecord> out;
    for (const auto& r : records_) {
        if (r.cls == cls) out.push_back(r);
    }
    return out;
}

std::optional<RetentionRecord> RetentionSeries::latest(int cls) const {
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
        if (it->cls == cls) return *it;
    }
    return std::nullopt;
}

std::optional<RetentionRecord> RetentionSeries::at(int epoch, int cls) const {
    for (const auto& r : records_) {
        if (r.cls == cls && r.epoch == epoch) return r;
    }
    return std::nullopt;
}

std::string RetentionSeries::to_csv() const {
    std::vector<RetentionRecord> sorted = records_;
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return a.epoch != b.epoch ? a.epoch < b.epoch : a.cls < b.cls;
    });
    std::string out = "epoch,class,recall_raw,recall_smoothed\n";
    for (const auto& r : sorted) {
        out += std::to_string(r.epoch) + ',' + std::to_string(r.cls) + ',' +
               fmt_double(r.recall_raw) + ',' + fmt_double(r.recall_smoothed) + '\n';
    }
    return out;
}

RetentionSeries RetentionSeries::from_csv(const std::string& text, int num_classes, int window) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "epoch,class,recall_raw,recall_smoothed") {
        throw FormatError("retention CSV must start with header epoch,class,recall_raw,recall_smoothed");
    }
    RetentionSeries series(num_classes, window);
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        int epoch = 0;
        int cls = 0;
        double raw = 0.0;
        double smoothed = 0.0;
        if (std::sscanf(line.c_str(), "%d,%d,%lf,%lf", &epoch, &cls, &raw, &smoothed) != 4) {
            throw FormatError("malformed retention CSV line " + std::to_string(lineno));
        }
        // The stored smoothed value is authoritative; the window only shapes
        // values appended after loading.
        series.append(epoch, cls, raw);
        series.records_.back().recall_smoothed = smoothed;
    }
    return series;
}

void measure_epoch(const DenseNet& net, const ImageDataset& proto_eval,
                   const PrototypeStore& store, int epoch, RetentionSeries& series) {
    const auto recalls = all_class_recall(net, proto_eval, store);
    for (std::size_t c = 0; c < recalls.size(); ++c) {
        series.append(epoch, static_cast<int>(c), recalls[c]);
    }
}

// --- PlateauTracker -------------------------------------------------------

PlateauTracker::PlateauTracker(int num_classes, double min_delta, int patience)
    : min_delta_(min_delta),
      patience_(patience),
      previous_(static_cast<std::size_t>(num_classes)),
      streak_(static_cast<std::size_t>(num_classes), 0),
      plateaued_(static_cast<std::size_t>(num_classes), false) {}

std::vector<int> PlateauTracker::update(const std::vector<double>& class_accuracy) {
    if (class_accuracy.size() != previous_.size()) {
        throw ShapeError("plateau tracker fed the wrong number of classes");
    }
    std::vector<int> newly;
    for (std::size_t c = 0; c < previous_.size(); ++c) {
        const double acc = class_accuracy[c];
        if (previous_[c] && !plateaued_[c]) {
            streak_[c] = (acc - *previous_[c] < min_delta_) ? streak_[c] + 1 : 0;
            if (streak_[c] >= patience_) {
                plateaued_[c] = true;
                newly.push_back(static_cast<int>(c));
            }
        }
        previous_[c] = acc;
    }
    return newly;
}

// --- JSON -----------------------------------------------------------------

std::string prototypes_to_json(const PrototypeStore& store) {
    nlohmann::json j;
    j["alpha"] = store.alpha;
    j["prototypes"] = nlohmann::json::array();
    for (const auto& p : store.prototypes) {
        j["prototypes"].push_back(std::vector<double>(p.data(), p.data() + p.size()));
    }
    j["initial_recall"] = store.initial_recall;
    return j.dump(1) + "\n";
}

PrototypeStore prototypes_from_json(const std::string& text) {
    PrototypeStore store;
    try {
        const auto j = nlohmann::json::parse(text);
        store.alpha = j.at("alpha").get<double>();
        for (const auto& row : j.at("prototypes")) {
            const auto v = row.get<std::vector<double>>();
            store.prototypes.push_back(Eigen::Map<const Eigen::VectorXd>(
                v.data(), static_cast<Eigen::Index>(v.size())));
        }
        store.initial_recall = j.at("initial_recall").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed prototypes file: ") + e.what());
    }
    store.validate();
    return store;
}

}  // namespace nnforget
