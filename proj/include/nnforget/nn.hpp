#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

namespace nnforget {

/// Fully connected feed-forward network with ReLU hidden layers and a linear
/// output layer. Layer l maps layer_dims[l] inputs to layer_dims[l+1] outputs.
struct DenseNet {
    std::vector<int> layer_dims;
    std::vector<Eigen::MatrixXd> weights;  // (out x in)
    std::vector<Eigen::VectorXd> biases;   // (out)

    int input_size() const { return layer_dims.front(); }
    int class_count() const { return layer_dims.back(); }
    // Width of the last hidden layer. For a net without hidden layers this is
    // the input width (the "hidden state" degenerates to the input itself).
    int hidden_width() const { return layer_dims[layer_dims.size() - 2]; }
    std::size_t layer_count() const { return weights.size(); }
    std::size_t parameter_count() const;

    bool operator==(const DenseNet& other) const;
};

/// Per-example result of a forward pass.
struct ForwardTrace {
    std::vector<Eigen::VectorXd> activations;  // post-ReLU output of every hidden layer
    Eigen::VectorXd logits;
    Eigen::VectorXd hidden;  // == activations.back(), or the input if there are no hidden layers
};

/// Column-per-example activations of a whole batch. layers[0] is the input,
/// layers[l] the post-activation output of layer l; the last entry holds logits.
struct BatchActivations {
    std::vector<Eigen::MatrixXd> layers;

    const Eigen::MatrixXd& logits() const { return layers.back(); }
    const Eigen::MatrixXd& hidden() const { return layers[layers.size() - 2]; }
};

struct TrainConfig {
    double learning_rate = 1e-4;
    int batch_size = 64;
    int epochs = 1;
    std::uint64_t seed = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    void validate() const;
};

/// Parameter-shaped container, used for both gradients and Adam moments.
struct ParamSet {
    std::vector<Eigen::MatrixXd> weights;
    std::vector<Eigen::VectorXd> biases;

    static ParamSet zeros_like(const DenseNet& net);
};

struct OptimState {
    ParamSet first_moment;
    ParamSet second_moment;
    std::int64_t step = 0;

    static OptimState for_network(const DenseNet& net);
};

struct LossAndGradients {
    double loss = 0.0;
    ParamSet gradients;
};

/// He-normal weights (std = sqrt(2 / fan_in)), zero biases.
DenseNet init_network(const std::vector<int>& layer_dims, std::uint64_t seed);

/// Throws ShapeError unless weights/biases agree with layer_dims, and
/// ConfigError if a parameter is non-finite.
void validate_network(const DenseNet& net);

/// Batched forward pass; `inputs` holds one example per column.
BatchActivations forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs);

/// Last-hidden-layer activations only (one column per example).
Eigen::MatrixXd hidden_states(const DenseNet& net, const Eigen::MatrixXd& inputs);

std::vector<ForwardTrace> forward(const DenseNet& net, const Eigen::MatrixXd& inputs);

/// Mean softmax cross-entropy over the batch and its backpropagated gradients.
LossAndGradients loss_and_gradients(const DenseNet& net,
                                    const Eigen::MatrixXd& inputs,
                                    const std::vector<int>& labels);

/// One Adam update of `net` in place.
void adam_step(DenseNet& net, OptimState& state, const ParamSet& gradients,
               const TrainConfig& config);

/// Binary model file: "NNFC", u32 version, u32 dim count, u32 dims, then for
/// each layer the row-major weights and the biases as little-endian f64.
void save_network(const DenseNet& net, const std::filesystem::path& path);
DenseNet load_network(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_network(const DenseNet& net);
DenseNet deserialize_network(const std::vector<std::uint8_t>& bytes);

inline constexpr std::uint32_t kModelFormatVersion = 1;

}  // namespace nnforget
