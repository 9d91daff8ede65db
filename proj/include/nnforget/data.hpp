#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace nnforget {

inline constexpr int kNumClasses = 10;

/// Images stored one per column (row-major pixel order inside a column),
/// normalized to [0, 1]. Kept in single precision to halve the footprint of
/// the 60k MNIST set; batches are widened to double on the way out.
struct ImageDataset {
    int rows = 28;
    int cols = 28;
    Eigen::MatrixXf images;
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    bool empty() const { return labels.empty(); }
    int feature_count() const { return static_cast<int>(images.rows()); }

    Eigen::MatrixXd gather(std::span<const std::size_t> indices) const;
    Eigen::MatrixXd all_inputs() const;
    ImageDataset subset(std::span<const std::size_t> indices) const;
    std::vector<std::size_t> indices_of_class(int label) const;
    std::vector<std::size_t> class_histogram(int num_classes = kNumClasses) const;

    /// Checks |images| == |labels|, pixel range and label range.
    void validate(int num_classes = kNumClasses) const;
};

struct Batch {
    Eigen::MatrixXd inputs;
    std::vector<int> labels;
    std::vector<std::size_t> indices;
};

/// Reads an IDX image/label pair (raw or gzip-compressed).
ImageDataset load_idx(const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path);

/// Parses IDX payloads already in memory. Exposed for tests.
ImageDataset parse_idx(const std::vector<std::uint8_t>& image_bytes,
                       const std::vector<std::uint8_t>& label_bytes);

/// Decompresses a gzip stream; passes the input through unchanged if it does
/// not start with the gzip magic bytes.
std::vector<std::uint8_t> maybe_gunzip(const std::vector<std::uint8_t>& bytes);

struct SplitSpec {
    std::size_t pretrain_count = 45000;
    std::size_t continuation_count = 10000;
    std::size_t proto_eval_count = 5000;
    std::uint64_t seed = 0;
};

struct DatasetSplits {
    ImageDataset pretrain;
    ImageDataset continuation;
    ImageDataset proto_eval;
    // Source indices backing each split.
    std::vector<std::size_t> pretrain_indices;
    std::vector<std::size_t> continuation_indices;
    std::vector<std::size_t> proto_eval_indices;
};

/// Seeded shuffle of the source indices, cut into three disjoint pieces.
DatasetSplits make_splits(const ImageDataset& source, const SplitSpec& spec);

/// Class-first, with-replacement sampler: a class is drawn with probability
/// proportional to its weight (classes absent from the dataset count as
/// weight 0), then an example uniformly within that class.
class WeightedSampler {
public:
    WeightedSampler(const std::vector<int>& labels, std::uint64_t seed,
                    int num_classes = kNumClasses);
    WeightedSampler(const ImageDataset& dataset, std::uint64_t seed)
        : WeightedSampler(dataset.labels, seed) {}

    void set_class_weight(int class_index, double weight);
    double class_weight(int class_index) const;
    const std::vector<double>& weights() const { return weights_; }
    int num_classes() const { return static_cast<int>(weights_.size()); }
    std::size_t class_size(int class_index) const;

    /// Number of examples in classes that can currently be drawn.
    std::size_t active_example_count() const;

    /// Enables ±2 pixel random translations in sample_batch.
    void set_augmentation(bool enabled) { augment_ = enabled; }
    bool augmentation() const { return augment_; }

    std::vector<std::size_t> sample_indices(int batch_size);
    int random_shift();

private:
    std::vector<double> weights_;
    std::vector<std::vector<std::size_t>> by_class_;
    std::mt19937_64 rng_;
    bool augment_ = false;
};

Batch sample_batch(WeightedSampler& sampler, const ImageDataset& dataset, int batch_size);

/// Translates a rows x cols image by (dy, dx) pixels, zero-filling the border.
Eigen::VectorXd shift_image(const Eigen::VectorXd& image, int rows, int cols, int dy, int dx);

}  // namespace nnforget
