#include "nnforget/data.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include <zlib.h>

#include "nnforget/errors.hpp"
#include "nnforget/io_util.hpp"

namespace nnforget {

namespace {

constexpr std::uint32_t kImageMagic = 2051;
constexpr std::uint32_t kLabelMagic = 2049;

std::uint32_t read_be32(const std::vector<std::uint8_t>& bytes, std::size_t offset) {
    if (offset + 4 > bytes.size()) throw IoError("IDX file truncated in header");
    return (static_cast<std::uint32_t>(bytes[offset]) << 24) |
           (static_cast<std::uint32_t>(bytes[offset + 1]) << 16) |
           (static_cast<std::uint32_t>(bytes[offset + 2]) << 8) |
           static_cast<std::uint32_t>(bytes[offset + 3]);
}

}  // namespace

Eigen::MatrixXd ImageDataset::gather(std::span<const std::size_t> indices) const {
    Eigen::MatrixXd out(images.rows(), static_cast<Eigen::Index>(indices.size()));
    for (std::size_t i = 0; i < indices.size(); ++i) {
        out.col(static_cast<Eigen::Index>(i)) =
            images.col(static_cast<Eigen::Index>(indices[i])).cast<double>();
    }
    return out;
}

Eigen::MatrixXd ImageDataset::all_inputs() const { return images.cast<double>(); }

ImageDataset ImageDataset::subset(std::span<const std::size_t> indices) const {
    ImageDataset out;
    out.rows = rows;
    out.cols = cols;
    out.images.resize(images.rows(), static_cast<Eigen::Index>(indices.size()));
    out.labels.reserve(indices.size());
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= size()) throw DataError("subset index out of range");
        out.images.col(static_cast<Eigen::Index>(i)) =
            images.col(static_cast<Eigen::Index>(indices[i]));
        out.labels.push_back(labels[indices[i]]);
    }
    return out;
}

std::vector<std::size_t> ImageDataset::indices_of_class(int label) const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] == label) out.push_back(i);
    }
    return out;
}

std::vector<std::size_t> ImageDataset::class_histogram(int num_classes) const {
    std::vector<std::size_t> hist(static_cast<std::size_t>(num_classes), 0);
    for (int y : labels) {
        if (y >= 0 && y < num_classes) ++hist[static_cast<std::size_t>(y)];
    }
    return hist;
}

void ImageDataset::validate(int num_classes) const {
    if (static_cast<std::size_t>(images.cols()) != labels.size()) {
        throw DataError("dataset has " + std::to_string(images.cols()) + " images but " +
                        std::to_string(labels.size()) + " labels");
    }
    if (images.size() > 0 && (images.minCoeff() < 0.0f || images.maxCoeff() > 1.0f)) {
        throw DataError("pixel values must lie in [0, 1]");
    }
    for (int y : labels) {
        if (y < 0 || y >= num_classes) throw DataError("label " + std::to_string(y) + " out of range");
    }
}

std::vector<std::uint8_t> maybe_gunzip(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 2 || bytes[0] != 0x1f || bytes[1] != 0x8b) return bytes;

    z_stream zs{};
    if (inflateInit2(&zs, 16 + MAX_WBITS) != Z_OK) throw IoError("zlib init failed");
    zs.next_in = const_cast<Bytef*>(bytes.data());
    zs.avail_in = static_cast<uInt>(bytes.size());

    std::vector<std::uint8_t> out;
    std::uint8_t chunk[1 << 16];
    int rc = Z_OK;
    while (rc != Z_STREAM_END) {
        zs.next_out = chunk;
        zs.avail_out = sizeof(chunk);
        rc = inflate(&zs, Z_NO_FLUSH);
        if (rc != Z_OK && rc != Z_STREAM_END) {
            inflateEnd(&zs);
            throw IoError("gzip stream is corrupt or truncated");
        }
        out.insert(out.end(), chunk, chunk + (sizeof(chunk) - zs.avail_out));
        if (rc == Z_OK && zs.avail_in == 0 && zs.avail_out != 0) {
            inflateEnd(&zs);
            throw IoError("gzip stream truncated");
        }
    }
    inflateEnd(&zs);
    return out;
}

ImageDataset parse_idx(const std::vector<std::uint8_t>& image_bytes,
                       const std::vector<std::uint8_t>& label_bytes) {
    const std::uint32_t image_magic = read_be32(image_bytes, 0);
    if (image_magic != kImageMagic) {
        throw FormatError("image file magic " + std::to_string(image_magic) + ", expected 2051");
    }
    const std::uint32_t label_magic = read_be32(label_bytes, 0);
    if (label_magic != kLabelMagic) {
        throw FormatError("label file magic " + std::to_string(label_magic) + ", expected 2049");
    }
    const std::uint32_t n_images = read_be32(image_bytes, 4);
    const std::uint32_t rows = read_be32(image_bytes, 8);
    const std::uint32_t cols = read_be32(image_bytes, 12);
    const std::uint32_t n_labels = read_be32(label_bytes, 4);
    if (n_images != n_labels) {
        throw DataError("image count " + std::to_string(n_images) + " != label count " +
                        std::to_string(n_labels));
    }
    if (rows == 0 || cols == 0 || rows > 4096 || cols > 4096) {
        throw FormatError("implausible image dimensions");
    }
    const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
    if (image_bytes.size() < 16 + pixels * n_images) throw IoError("image file truncated");
    if (label_bytes.size() < 8 + static_cast<std::size_t>(n_labels)) {
        throw IoError("label file truncated");
    }

    ImageDataset ds;
    ds.rows = static_cast<int>(rows);
    ds.cols = static_cast<int>(cols);
    ds.images.resize(static_cast<Eigen::Index>(pixels), n_images);
    ds.labels.resize(n_labels);
    const std::uint8_t* px = image_bytes.data() + 16;
    for (std::uint32_t i = 0; i < n_images; ++i) {
        for (std::size_t p = 0; p < pixels; ++p) {
            ds.images(static_cast<Eigen::Index>(p), i) =
                static_cast<float>(px[i * pixels + p]) / 255.0f;
        }
        const int y = label_bytes[8 + i];
        if (y >= kNumClasses) throw DataError("label " + std::to_string(y) + " out of range");
        ds.labels[i] = y;
    }
    return ds;
}

ImageDataset load_idx(const std::filesystem::path& images_path,
                      const std::filesystem::path& labels_path) {
    return parse_idx(maybe_gunzip(read_file_bytes(images_path)),
                     maybe_gunzip(read_file_bytes(labels_path)));
}

DatasetSplits make_splits(const ImageDataset& source, const SplitSpec& spec) {
    const std::size_t need = spec.pretrain_count + spec.continuation_count + spec.proto_eval_count;
    if (need > source.size()) {
        throw ConfigError("split sizes sum to " + std::to_string(need) + " but the source has " +
                          std::to_string(source.size()) + " examples");
    }
    std::vector<std::size_t> order(source.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);

    DatasetSplits out;
    auto first = order.begin();
    out.pretrain_indices.assign(first, first + static_cast<std::ptrdiff_t>(spec.pretrain_count));
    first += static_cast<std::ptrdiff_t>(spec.pretrain_count);
    out.continuation_indices.assign(first,
                                    first + static_cast<std::ptrdiff_t>(spec.continuation_count));
    first += static_cast<std::ptrdiff_t>(spec.continuation_count);
    out.proto_eval_indices.assign(first, first + static_cast<std::ptrdiff_t>(spec.proto_eval_count));

    out.pretrain = source.subset(out.pretrain_indices);
    out.continuation = source.subset(out.continuation_indices);
    out.proto_eval = source.subset(out.proto_eval_indices);
    return out;
}

WeightedSampler::WeightedSampler(const std::vector<int>& labels, std::uint64_t seed,
                                 int num_classes)
    : weights_(static_cast<std::size_t>(num_classes), 1.0),
      by_class_(static_cast<std::size_t>(num_classes)),
      rng_(seed) {
    if (num_classes < 1) throw ConfigError("sampler needs at least one class");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int y = labels[i];
        if (y < 0 || y >= num_classes) throw DataError("label " + std::to_string(y) + " out of range");
        by_class_[static_cast<std::size_t>(y)].push_back(i);
    }
}

void WeightedSampler::set_class_weight(int class_index, double weight) {
    if (class_index < 0 || class_index >= num_classes()) {
        throw ConfigError("class index " + std::to_string(class_index) + " out of range");
    }
    if (!(weight >= 0.0) || !std::isfinite(weight)) {
        throw ConfigError("class weight must be finite and non-negative");
    }
    weights_[static_cast<std::size_t>(class_index)] = weight;
}

double WeightedSampler::class_weight(int class_index) const {
    if (class_index < 0 || class_index >= num_classes()) {
        throw ConfigError("class index " + std::to_string(class_index) + " out of range");
    }
    return weights_[static_cast<std::size_t>(class_index)];
}

std::size_t WeightedSampler::class_size(int class_index) const {
    return by_class_.at(static_cast<std::size_t>(class_index)).size();
}

std::size_t WeightedSampler::active_example_count() const {
    std::size_t n = 0;
    for (std::size_t c = 0; c < weights_.size(); ++c) {
        if (weights_[c] > 0.0) n += by_class_[c].size();
    }
    return n;
}

std::vector<std::size_t> WeightedSampler::sample_indices(int batch_size) {
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    std::vector<double> cumulative(weights_.size());
    double total = 0.0;
    for (std::size_t c = 0; c < weights_.size(); ++c) {
        if (!by_class_[c].empty()) total += weights_[c];
        cumulative[c] = total;
    }
    if (!(total > 0.0)) throw SamplerError("no class with positive weight has any examples");

    std::uniform_real_distribution<double> pick_class(0.0, total);
    std::vector<std::size_t> out;
    out.reserve(static_cast<std::size_t>(batch_size));
    for (int i = 0; i < batch_size; ++i) {
        const double u = pick_class(rng_);
        auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
        auto c = static_cast<std::size_t>(it - cumulative.begin());
        // u can round to exactly `total`; fall back to the last drawable class.
        if (c >= cumulative.size()) c = cumulative.size() - 1;
        while (by_class_[c].empty() || weights_[c] <= 0.0) --c;
        const auto& members = by_class_[c];
        std::uniform_int_distribution<std::size_t> pick(0, members.size() - 1);
        out.push_back(members[pick(rng_)]);
    }
    return out;
}

int WeightedSampler::random_shift() {
    std::uniform_int_distribution<int> shift(-2, 2);
    return shift(rng_);
}

Eigen::VectorXd shift_image(const Eigen::VectorXd& image, int rows, int cols, int dy, int dx) {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(image.size());
    for (int r = 0; r < rows; ++r) {
        const int sr = r - dy;
        if (sr < 0 || sr >= rows) continue;
        for (int c = 0; c < cols; ++c) {
            const int sc = c - dx;
            if (sc < 0 || sc >= cols) continue;
            out(r * cols + c) = image(sr * cols + sc);
        }
    }
    return out;
}

Batch sample_batch(WeightedSampler& sampler, const ImageDataset& dataset, int batch_size) {
    if (sampler.num_classes() > 0 && dataset.size() == 0) {
        throw SamplerError("sampler used with an empty dataset");
    }
    Batch batch;
    batch.indices = sampler.sample_indices(batch_size);
    batch.inputs = dataset.gather(batch.indices);
    batch.labels.reserve(batch.indices.size());
    for (std::size_t i : batch.indices) batch.labels.push_back(dataset.labels.at(i));
    if (sampler.augmentation()) {
        for (Eigen::Index i = 0; i < batch.inputs.cols(); ++i) {
            const int dy = sampler.random_shift();
            const int dx = sampler.random_shift();
            batch.inputs.col(i) = shift_image(batch.inputs.col(i), dataset.rows, dataset.cols, dy, dx);
        }
    }
    return batch;
}

}  // namespace nnforget
