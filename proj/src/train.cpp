#include "nnforget/train.hpp"

#include <algorithm>
#include <limits>

#include "nnforget/errors.hpp"

namespace nnforget {

namespace {

// Forward passes over large sets are chunked to bound the activation memory.
constexpr std::size_t kEvalChunk = 2048;

}  // namespace

EpochStats train_epoch(DenseNet& net, OptimState& state, WeightedSampler& sampler,
                       const ImageDataset& dataset, const TrainConfig& config,
                       const std::function<void(const Batch&)>& on_batch) {
    config.validate();
    const std::size_t active = sampler.active_example_count();
    if (active == 0) throw SamplerError("no examples can be drawn: every populated class has weight 0");
    const int batches = std::max(1, static_cast<int>(active / static_cast<std::size_t>(config.batch_size)));

    EpochStats stats;
    double loss_sum = 0.0;
    for (int b = 0; b < batches; ++b) {
        const Batch batch = sample_batch(sampler, dataset, config.batch_size);
        if (on_batch) on_batch(batch);
        const LossAndGradients lg = loss_and_gradients(net, batch.inputs, batch.labels);
        adam_step(net, state, lg.gradients, config);
        loss_sum += lg.loss;
    }
    stats.batches = batches;
    stats.mean_loss = loss_sum / batches;
    return stats;
}

std::vector<int> predict(const DenseNet& net, const ImageDataset& dataset) {
    std::vector<int> out;
    out.reserve(dataset.size());
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < dataset.size(); start += kEvalChunk) {
        const std::size_t end = std::min(dataset.size(), start + kEvalChunk);
        idx.resize(end - start);
        for (std::size_t i = start; i < end; ++i) idx[i - start] = i;
        const Eigen::MatrixXd logits = forward_batch(net, dataset.gather(idx)).logits();
        for (Eigen::Index c = 0; c < logits.cols(); ++c) {
            int best = 0;
            for (Eigen::Index k = 1; k < logits.rows(); ++k) {
                if (logits(k, c) > logits(best, c)) best = static_cast<int>(k);
            }
            out.push_back(best);
        }
    }
    return out;
}

double evaluate_accuracy(const DenseNet& net, const ImageDataset& dataset) {
    if (dataset.empty()) throw DataError("cannot evaluate accuracy on an empty dataset");
    const auto pred = predict(net, dataset);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == dataset.labels[i];
    return static_cast<double>(hits) / static_cast<double>(pred.size());
}

std::vector<double> per_class_accuracy(const DenseNet& net, const ImageDataset& dataset,
                                       int num_classes) {
    const auto pred = predict(net, dataset);
    std::vector<std::size_t> hits(static_cast<std::size_t>(num_classes), 0);
    std::vector<std::size_t> totals(static_cast<std::size_t>(num_classes), 0);
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const auto y = static_cast<std::size_t>(dataset.labels[i]);
        ++totals[y];
        hits[y] += pred[i] == dataset.labels[i];
    }
    std::vector<double> acc(static_cast<std::size_t>(num_classes),
                            std::numeric_limits<double>::quiet_NaN());
    for (std::size_t c = 0; c < acc.size(); ++c) {
        if (totals[c] > 0) acc[c] = static_cast<double>(hits[c]) / static_cast<double>(totals[c]);
    }
    return acc;
}

}  // namespace nnforget
