#include "nnforget/config.hpp"

#include <cstdlib>
#include <set>
#include <sstream>

#include "json.hpp"

#include "nnforget/errors.hpp"
#include "nnforget/io_util.hpp"

namespace nnforget {

using Json = nlohmann::ordered_json;

namespace {

Json config_to_json(const ExperimentConfig& c) {
    Json j;
    j["data_dir"] = c.data_dir;
    j["seed"] = c.seed;
    j["layer_dims"] = c.layer_dims;
    j["learning_rate"] = c.learning_rate;
    j["batch_size"] = c.batch_size;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_epsilon"] = c.adam_epsilon;
    j["pretrain_epochs"] = c.pretrain_epochs;
    j["continuation_epochs"] = c.continuation_epochs;
    j["pretrain_count"] = c.pretrain_count;
    j["continuation_count"] = c.continuation_count;
    j["proto_eval_count"] = c.proto_eval_count;
    j["alpha"] = c.alpha;
    j["excluded_classes"] = c.excluded_classes;
    j["theta"] = c.theta;
    j["review_fraction"] = c.review_fraction;
    j["max_review_epochs"] = c.max_review_epochs;
    j["reviews_enabled"] = c.reviews_enabled;
    j["smoothing_window"] = c.smoothing_window;
    j["prototype_timing"] = c.prototype_timing;
    j["fit_smoothed"] = c.fit_smoothed;
    j["augment"] = c.augment;
    j["svg_timestamp"] = c.svg_timestamp;
    j["output_dir"] = c.output_dir;
    return j;
}

template <typename T>
void read_key(const Json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    const Json& v = j.at(key);
    try {
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ConfigError("");
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ConfigError("");
        } else if constexpr (std::is_integral_v<T>) {
            if (!v.is_number_integer()) throw ConfigError("");
            if constexpr (std::is_unsigned_v<T>) {
                if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) {
                    throw ConfigError("");
                }
            }
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ConfigError("");
        } else {
            if (!v.is_array()) throw ConfigError("");
            for (const auto& e : v) {
                if (!e.is_number_integer()) throw ConfigError("");
            }
        }
        out = v.get<T>();
    } catch (const std::exception&) {
        throw ConfigError("config key '" + std::string(key) + "' has the wrong type: " + v.dump());
    }
}

ExperimentConfig config_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const auto known = config_keys();
    const std::set<std::string> known_set(known.begin(), known.end());
    for (const auto& [key, _] : j.items()) {
        if (!known_set.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    }
    ExperimentConfig c;
    read_key(j, "data_dir", c.data_dir);
    read_key(j, "seed", c.seed);
    read_key(j, "layer_dims", c.layer_dims);
    read_key(j, "learning_rate", c.learning_rate);
    read_key(j, "batch_size", c.batch_size);
    read_key(j, "adam_beta1", c.adam_beta1);
    read_key(j, "adam_beta2", c.adam_beta2);
    read_key(j, "adam_epsilon", c.adam_epsilon);
    read_key(j, "pretrain_epochs", c.pretrain_epochs);
    read_key(j, "continuation_epochs", c.continuation_epochs);
    read_key(j, "pretrain_count", c.pretrain_count);
    read_key(j, "continuation_count", c.continuation_count);
    read_key(j, "proto_eval_count", c.proto_eval_count);
    read_key(j, "alpha", c.alpha);
    read_key(j, "excluded_classes", c.excluded_classes);
    read_key(j, "theta", c.theta);
    read_key(j, "review_fraction", c.review_fraction);
    read_key(j, "max_review_epochs", c.max_review_epochs);
    read_key(j, "reviews_enabled", c.reviews_enabled);
    read_key(j, "smoothing_window", c.smoothing_window);
    read_key(j, "prototype_timing", c.prototype_timing);
    read_key(j, "fit_smoothed", c.fit_smoothed);
    read_key(j, "augment", c.augment);
    read_key(j, "svg_timestamp", c.svg_timestamp);
    read_key(j, "output_dir", c.output_dir);
    return c;
}

Json parse_override_value(const std::string& key, const Json& current, const std::string& text) {
    auto fail = [&]() -> Json {
        throw ConfigError("cannot parse value '" + text + "' for config key '" + key + "'");
    };
    try {
        if (current.is_boolean()) {
            if (text == "true" || text == "1") return true;
            if (text == "false" || text == "0") return false;
            return fail();
        }
        if (current.is_string()) return text;
        if (current.is_array()) {
            if (!text.empty() && text.front() == '[') return Json::parse(text);
            Json arr = Json::array();
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) {
                if (item.empty()) continue;
                std::size_t used = 0;
                const long long v = std::stoll(item, &used);
                if (used != item.size()) return fail();
                arr.push_back(v);
            }
            return arr;
        }
        if (current.is_number_integer()) {
            std::size_t used = 0;
            const long long v = std::stoll(text, &used);
            if (used != text.size()) return fail();
            if (current.is_number_unsigned() && v >= 0) return static_cast<unsigned long long>(v);
            return v;
        }
        if (current.is_number()) {
            std::size_t used = 0;
            const double v = std::stod(text, &used);
            if (used != text.size()) return fail();
            return v;
        }
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception&) {
        return fail();
    }
    return fail();
}

}  // namespace

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    const Json defaults = config_to_json(ExperimentConfig{});
    for (const auto& [key, _] : defaults.items()) keys.push_back(key);
    return keys;
}

void ExperimentConfig::validate() const {
    auto bad = [](const std::string& key, const std::string& why) {
        throw ConfigError("config key '" + key + "': " + why);
    };
    if (layer_dims.size() < 2) bad("layer_dims", "needs at least input and output sizes");
    for (int d : layer_dims) {
        if (d < 1) bad("layer_dims", "entries must be >= 1");
    }
    if (layer_dims.back() != kNumClasses) bad("layer_dims", "last entry must be 10 (digit classes)");
    if (!(learning_rate >= 0.0)) bad("learning_rate", "must be >= 0");
    if (batch_size < 1) bad("batch_size", "must be >= 1");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) bad("adam_beta1", "must lie in [0, 1)");
    if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) bad("adam_beta2", "must lie in [0, 1)");
    if (!(adam_epsilon > 0.0)) bad("adam_epsilon", "must be > 0");
    if (pretrain_epochs < 0) bad("pretrain_epochs", "must be >= 0");
    if (continuation_epochs < 0) bad("continuation_epochs", "must be >= 0");
    if (proto_eval_count == 0) bad("proto_eval_count", "must be > 0");
    if (!(alpha > 0.0) || alpha > 700.0) bad("alpha", "must lie in (0, 700]");
    std::set<int> seen;
    for (int c : excluded_classes) {
        if (c < 0 || c >= kNumClasses) bad("excluded_classes", "entries must lie in [0, 10)");
        if (!seen.insert(c).second) bad("excluded_classes", "duplicate entry");
    }
    if (excluded_classes.size() >= static_cast<std::size_t>(kNumClasses)) {
        bad("excluded_classes", "at least one class must remain in training");
    }
    if (!(theta >= 0.0 && theta <= 1.0)) bad("theta", "must lie in [0, 1]");
    if (!(review_fraction > 0.0 && review_fraction < 1.0)) bad("review_fraction", "must lie in (0, 1)");
    if (max_review_epochs < 1) bad("max_review_epochs", "must be >= 1");
    if (smoothing_window < 1) bad("smoothing_window", "must be >= 1");
    if (prototype_timing != "converged" && prototype_timing != "plateau") {
        bad("prototype_timing", "must be \"converged\" or \"plateau\"");
    }
    if (output_dir.empty()) bad("output_dir", "must not be empty");
}

std::string ExperimentConfig::to_json() const { return config_to_json(*this).dump(2) + "\n"; }

std::filesystem::path ExperimentConfig::resolved_data_dir() const {
    if (!data_dir.empty()) return data_dir;
    if (const char* env = std::getenv("NNFORGET_DATA_DIR"); env != nullptr && *env != '\0') {
        return env;
    }
    return "data/mnist";
}

TrainConfig ExperimentConfig::train_config(int epochs, std::uint64_t seed_offset) const {
    TrainConfig t;
    t.learning_rate = learning_rate;
    t.batch_size = batch_size;
    t.epochs = epochs;
    t.seed = seed + seed_offset;
    t.beta1 = adam_beta1;
    t.beta2 = adam_beta2;
    t.epsilon = adam_epsilon;
    return t;
}

ReviewPolicy ExperimentConfig::review_policy() const {
    ReviewPolicy p;
    p.theta = theta;
    p.review_fraction = review_fraction;
    p.max_review_epochs = max_review_epochs;
    p.excluded_classes.insert(excluded_classes.begin(), excluded_classes.end());
    p.reviews_enabled = reviews_enabled;
    return p;
}

SplitSpec ExperimentConfig::split_spec() const {
    return {pretrain_count, continuation_count, proto_eval_count, seed + 1};
}

ExperimentConfig parse_config_json(const std::string& text) {
    Json j;
    try {
        j = Json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("malformed config JSON: ") + e.what());
    }
    return config_from_json(j);
}

ExperimentConfig apply_overrides(ExperimentConfig config,
                                 const std::vector<std::pair<std::string, std::string>>& overrides) {
    Json j = config_to_json(config);
    for (const auto& [key, value] : overrides) {
        if (!j.contains(key)) throw ConfigError("unknown config key '" + key + "'");
        j[key] = parse_override_value(key, j[key], value);
    }
    return config_from_json(j);
}

ExperimentConfig parse_config(const std::optional<std::filesystem::path>& path,
                              const std::vector<std::pair<std::string, std::string>>& overrides) {
    ExperimentConfig config;
    if (path) config = parse_config_json(read_file_text(*path));
    config = apply_overrides(std::move(config), overrides);
    config.validate();
    return config;
}

}  // namespace nnforget
