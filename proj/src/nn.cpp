#include "nnforget/nn.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <random>
#include <string>

#include "nnforget/errors.hpp"
#include "nnforget/io_util.hpp"

namespace nnforget {

namespace {

constexpr char kMagic[4] = {'N', 'N', 'F', 'C'};

void check_dims(const std::vector<int>& layer_dims) {
    if (layer_dims.size() < 2) {
        throw ConfigError("layer_dims needs at least an input and an output size");
    }
    for (int d : layer_dims) {
        if (d < 1) throw ConfigError("layer_dims entries must be >= 1, got " + std::to_string(d));
    }
}

Eigen::MatrixXd relu(const Eigen::MatrixXd& z) { return z.cwiseMax(0.0); }

}  // namespace

std::size_t DenseNet::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        n += static_cast<std::size_t>(weights[l].size() + biases[l].size());
    }
    return n;
}

bool DenseNet::operator==(const DenseNet& other) const {
    if (layer_dims != other.layer_dims || weights.size() != other.weights.size()) return false;
    for (std::size_t l = 0; l < weights.size(); ++l) {
        if (weights[l].rows() != other.weights[l].rows() ||
            weights[l].cols() != other.weights[l].cols() ||
            biases[l].size() != other.biases[l].size()) {
            return false;
        }
        // Bitwise comparison: the determinism contract is about identical bytes.
        if (std::memcmp(weights[l].data(), other.weights[l].data(),
                        sizeof(double) * static_cast<std::size_t>(weights[l].size())) != 0 ||
            std::memcmp(biases[l].data(), other.biases[l].data(),
                        sizeof(double) * static_cast<std::size_t>(biases[l].size())) != 0) {
            return false;
        }
    }
    return true;
}

void TrainConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate must be finite and non-negative");
    }
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw ConfigError("beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("beta2 must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
}

ParamSet ParamSet::zeros_like(const DenseNet& net) {
    ParamSet p;
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        p.weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(), net.weights[l].cols()));
        p.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    }
    return p;
}

OptimState OptimState::for_network(const DenseNet& net) {
    return {ParamSet::zeros_like(net), ParamSet::zeros_like(net), 0};
}

DenseNet init_network(const std::vector<int>& layer_dims, std::uint64_t seed) {
    check_dims(layer_dims);
    DenseNet net;
    net.layer_dims = layer_dims;
    std::mt19937_64 rng(seed);
    for (std::size_t l = 0; l + 1 < layer_dims.size(); ++l) {
        const int fan_in = layer_dims[l];
        const int fan_out = layer_dims[l + 1];
        std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
        Eigen::MatrixXd w(fan_out, fan_in);
        // Fill row-major so the draw order matches the on-disk layout.
        for (int r = 0; r < fan_out; ++r) {
            for (int c = 0; c < fan_in; ++c) w(r, c) = normal(rng);
        }
        net.weights.push_back(std::move(w));
        net.biases.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return net;
}

void validate_network(const DenseNet& net) {
    check_dims(net.layer_dims);
    const std::size_t layers = net.layer_dims.size() - 1;
    if (net.weights.size() != layers || net.biases.size() != layers) {
        throw ShapeError("network has " + std::to_string(net.weights.size()) +
                         " weight matrices, expected " + std::to_string(layers));
    }
    for (std::size_t l = 0; l < layers; ++l) {
        if (net.weights[l].rows() != net.layer_dims[l + 1] ||
            net.weights[l].cols() != net.layer_dims[l] ||
            net.biases[l].size() != net.layer_dims[l + 1]) {
            throw ShapeError("layer " + std::to_string(l) + " parameters do not match layer_dims");
        }
        if (!net.weights[l].allFinite() || !net.biases[l].allFinite()) {
            throw ConfigError("layer " + std::to_string(l) + " has non-finite parameters");
        }
    }
}

BatchActivations forward_batch(const DenseNet& net, const Eigen::MatrixXd& inputs) {
    if (inputs.rows() != net.input_size()) {
        throw ShapeError("input length " + std::to_string(inputs.rows()) + " != " +
                         std::to_string(net.input_size()));
    }
    BatchActivations acts;
    acts.layers.reserve(net.layer_count() + 1);
    acts.layers.push_back(inputs);
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        Eigen::MatrixXd z = net.weights[l] * acts.layers.back();
        z.colwise() += net.biases[l];
        if (l + 1 < net.layer_count()) {
            acts.layers.push_back(relu(z));
        } else {
            acts.layers.push_back(std::move(z));
        }
    }
    return acts;
}

Eigen::MatrixXd hidden_states(const DenseNet& net, const Eigen::MatrixXd& inputs) {
    if (inputs.rows() != net.input_size()) {
        throw ShapeError("input length " + std::to_string(inputs.rows()) + " != " +
                         std::to_string(net.input_size()));
    }
    Eigen::MatrixXd a = inputs;
    for (std::size_t l = 0; l + 1 < net.layer_count(); ++l) {
        Eigen::MatrixXd z = net.weights[l] * a;
        z.colwise() += net.biases[l];
        a = relu(z);
    }
    return a;
}

std::vector<ForwardTrace> forward(const DenseNet& net, const Eigen::MatrixXd& inputs) {
    const BatchActivations acts = forward_batch(net, inputs);
    std::vector<ForwardTrace> traces(static_cast<std::size_t>(inputs.cols()));
    for (Eigen::Index i = 0; i < inputs.cols(); ++i) {
        auto& t = traces[static_cast<std::size_t>(i)];
        for (std::size_t l = 1; l + 1 < acts.layers.size(); ++l) {
            t.activations.push_back(acts.layers[l].col(i));
        }
        t.logits = acts.logits().col(i);
        t.hidden = acts.hidden().col(i);
    }
    return traces;
}

LossAndGradients loss_and_gradients(const DenseNet& net,
                                    const Eigen::MatrixXd& inputs,
                                    const std::vector<int>& labels) {
    const Eigen::Index batch = inputs.cols();
    if (static_cast<std::size_t>(batch) != labels.size()) {
        throw ShapeError("batch has " + std::to_string(batch) + " inputs but " +
                         std::to_string(labels.size()) + " labels");
    }
    if (batch == 0) throw DataError("empty batch");
    const int classes = net.class_count();
    for (int y : labels) {
        if (y < 0 || y >= classes) {
            throw DataError("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(classes) + ")");
        }
    }

    const BatchActivations acts = forward_batch(net, inputs);
    const Eigen::MatrixXd& logits = acts.logits();

    // Stable softmax per column; delta = (softmax - onehot) / batch.
    Eigen::MatrixXd delta(classes, batch);
    double loss_sum = 0.0;
    for (Eigen::Index i = 0; i < batch; ++i) {
        const double m = logits.col(i).maxCoeff();
        Eigen::VectorXd e = (logits.col(i).array() - m).exp().matrix();
        const double s = e.sum();
        const int y = labels[static_cast<std::size_t>(i)];
        loss_sum += (m + std::log(s)) - logits(y, i);
        delta.col(i) = e / s;
        delta(y, i) -= 1.0;
    }
    const double inv_batch = 1.0 / static_cast<double>(batch);
    delta *= inv_batch;

    LossAndGradients out;
    out.loss = loss_sum * inv_batch;
    out.gradients.weights.resize(net.layer_count());
    out.gradients.biases.resize(net.layer_count());
    for (std::size_t l = net.layer_count(); l-- > 0;) {
        out.gradients.weights[l] = delta * acts.layers[l].transpose();
        out.gradients.biases[l] = delta.rowwise().sum();
        if (l > 0) {
            Eigen::MatrixXd upstream = net.weights[l].transpose() * delta;
            // ReLU derivative taken as 0 at exactly 0.
            delta = (acts.layers[l].array() > 0.0).select(upstream, 0.0);
        }
    }
    return out;
}

void adam_step(DenseNet& net, OptimState& state, const ParamSet& gradients,
               const TrainConfig& config) {
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double correct1 = 1.0 - std::pow(config.beta1, t);
    const double correct2 = 1.0 - std::pow(config.beta2, t);
    const double lr = config.learning_rate;

    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
        m = config.beta1 * m + (1.0 - config.beta1) * g;
        v = config.beta2 * v + (1.0 - config.beta2) * g.cwiseProduct(g);
        param.array() -= lr * (m.array() / correct1) /
                         ((v.array() / correct2).sqrt() + config.epsilon);
    };
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        update(net.weights[l], state.first_moment.weights[l], state.second_moment.weights[l],
               gradients.weights[l]);
        update(net.biases[l], state.first_moment.biases[l], state.second_moment.biases[l],
               gradients.biases[l]);
    }
}

// --- serialization -------------------------------------------------------

namespace {

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_f64(std::vector<std::uint8_t>& out, double d) {
    const auto bits = std::bit_cast<std::uint64_t>(d);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 4;
        return v;
    }

    double f64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
        pos_ += 8;
        return std::bit_cast<double>(v);
    }

    void expect_end() const {
        if (pos_ != bytes_.size()) throw FormatError("trailing bytes after model payload");
    }

private:
    void need(std::size_t n) const {
        if (pos_ + n > bytes_.size()) throw IoError("model file truncated");
    }

    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 4;  // magic already checked
};

}  // namespace

std::vector<std::uint8_t> serialize_network(const DenseNet& net) {
    validate_network(net);
    std::vector<std::uint8_t> out(kMagic, kMagic + 4);
    put_u32(out, kModelFormatVersion);
    put_u32(out, static_cast<std::uint32_t>(net.layer_dims.size()));
    for (int d : net.layer_dims) put_u32(out, static_cast<std::uint32_t>(d));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const auto& w = net.weights[l];
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) put_f64(out, w(r, c));
        }
        for (Eigen::Index r = 0; r < net.biases[l].size(); ++r) put_f64(out, net.biases[l](r));
    }
    return out;
}

DenseNet deserialize_network(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("not a model file (bad magic)");
    }
    ByteReader in(bytes);
    const std::uint32_t version = in.u32();
    if (version != kModelFormatVersion) {
        throw FormatError("unsupported model format version " + std::to_string(version));
    }
    const std::uint32_t count = in.u32();
    if (count < 2 || count > 4096) throw FormatError("implausible layer count in model file");
    std::vector<int> dims;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t d = in.u32();
        if (d == 0 || d > (1u << 24)) throw FormatError("implausible layer width in model file");
        dims.push_back(static_cast<int>(d));
    }
    DenseNet net;
    net.layer_dims = dims;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        Eigen::MatrixXd w(dims[l + 1], dims[l]);
        for (Eigen::Index r = 0; r < w.rows(); ++r) {
            for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = in.f64();
        }
        Eigen::VectorXd b(dims[l + 1]);
        for (Eigen::Index r = 0; r < b.size(); ++r) b(r) = in.f64();
        net.weights.push_back(std::move(w));
        net.biases.push_back(std::move(b));
    }
    in.expect_end();
    validate_network(net);
    return net;
}

void save_network(const DenseNet& net, const std::filesystem::path& path) {
    const auto bytes = serialize_network(net);
    write_file_atomic(path, std::string_view(reinterpret_cast<const char*>(bytes.data()),
                                             bytes.size()));
}

DenseNet load_network(const std::filesystem::path& path) {
    return deserialize_network(read_file_bytes(path));
}

}  // namespace nnforget
