#pragma once

#include <functional>
#include <vector>

#include "nnforget/data.hpp"
#include "nnforget/nn.hpp"

namespace nnforget {

struct EpochStats {
    double mean_loss = 0.0;
    int batches = 0;
};

/// One epoch: max(1, floor(N / batch_size)) batches drawn from `sampler`,
/// where N counts the examples the sampler can currently emit, each followed
/// by an Adam update.
EpochStats train_epoch(DenseNet& net, OptimState& state, WeightedSampler& sampler,
                       const ImageDataset& dataset, const TrainConfig& config,
                       const std::function<void(const Batch&)>& on_batch = {});

/// Argmax class per example; ties go to the lowest index.
std::vector<int> predict(const DenseNet& net, const ImageDataset& dataset);

double evaluate_accuracy(const DenseNet& net, const ImageDataset& dataset);

/// Accuracy restricted to each class; classes without examples report NaN.
std::vector<double> per_class_accuracy(const DenseNet& net, const ImageDataset& dataset,
                                       int num_classes = kNumClasses);

}  // namespace nnforget
