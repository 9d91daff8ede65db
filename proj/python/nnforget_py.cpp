#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "json.hpp"
#include "nnforget/config.hpp"
#include "nnforget/errors.hpp"
#include "nnforget/memfit.hpp"
#include "nnforget/nn.hpp"
#include "nnforget/pipeline.hpp"
#include "nnforget/retention.hpp"
#include "nnforget/scheduler.hpp"

namespace py = pybind11;
using namespace nnforget;

namespace {

// Configs cross the boundary as JSON text; the Python wrapper turns them into dicts.
ExperimentConfig config_from_text(const std::string& text) {
    ExperimentConfig c = parse_config_json(text);
    c.validate();
    return c;
}

std::string manifest_text(const RunManifest& m) { return m.to_json(); }

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Bindings for the nnforget retention experiment library.";

    auto base = py::register_exception<Error>(m, "NnforgetError", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<DataError>(m, "DataError", base.ptr());
    py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    py::register_exception<FormatError>(m, "FormatError", base.ptr());
    py::register_exception<FitError>(m, "FitError", base.ptr());
    py::register_exception<PhaseError>(m, "PhaseError", base.ptr());

    m.def("version", &library_version);

    m.def("default_config_json", [] { return ExperimentConfig{}.to_json(); });
    m.def("normalize_config_json", [](const std::string& text) { return config_from_text(text).to_json(); },
          py::arg("config_json"));

    m.def("run_pipeline", [](const std::string& text, bool verbose) {
        const auto cfg = config_from_text(text);
        return manifest_text(run_pipeline(cfg, verbose ? stderr_logger() : LogFn{}));
    }, py::arg("config_json"), py::arg("verbose") = false, py::call_guard<py::gil_scoped_release>());

    auto phase = [&m](const char* name, RunManifest (*fn)(const ExperimentConfig&, const LogFn&)) {
        m.def(name, [fn](const std::string& text, bool verbose) {
            return manifest_text(fn(config_from_text(text), verbose ? stderr_logger() : LogFn{}));
        }, py::arg("config_json"), py::arg("verbose") = false, py::call_guard<py::gil_scoped_release>());
    };
    phase("pretrain", &cmd_pretrain);
    phase("prototypes", &cmd_prototypes);
    phase("continue_training", &cmd_continue);
    phase("fit", &cmd_fit);
    phase("plot", &cmd_plot);

    // Recall metric.
    m.def("cosine_similarity", &cosine_similarity, py::arg("u"), py::arg("v"));
    m.def("softmax_scaled", &softmax_scaled, py::arg("similarities"), py::arg("alpha"));
    m.def("recall_distribution", [](const Eigen::VectorXd& h, const std::vector<Eigen::VectorXd>& prototypes,
                                    double alpha) {
        PrototypeStore store;
        store.prototypes = prototypes;
        store.initial_recall.assign(prototypes.size(), 0.5);
        store.alpha = alpha;
        return recall_distribution(h, store);
    }, py::arg("h"), py::arg("prototypes"), py::arg("alpha") = 10.0);

    // Network.
    py::class_<DenseNet>(m, "DenseNet")
        .def_readonly("layer_dims", &DenseNet::layer_dims)
        .def_readonly("weights", &DenseNet::weights)
        .def_readonly("biases", &DenseNet::biases)
        .def("parameter_count", &DenseNet::parameter_count)
        .def("__eq__", [](const DenseNet& a, const DenseNet& b) { return a == b; });
    m.def("init_network", &init_network, py::arg("layer_dims"), py::arg("seed") = 0);
    m.def("load_network", [](const std::filesystem::path& p) { return load_network(p); });
    m.def("save_network", [](const DenseNet& n, const std::filesystem::path& p) { save_network(n, p); });
    // Inputs are (features, batch), one column per example.
    m.def("hidden_states", &hidden_states, py::arg("net"), py::arg("inputs"));
    m.def("logits", [](const DenseNet& net, const Eigen::MatrixXd& x) {
        return Eigen::MatrixXd(forward_batch(net, x).logits());
    }, py::arg("net"), py::arg("inputs"));
    m.def("loss", [](const DenseNet& net, const Eigen::MatrixXd& x, const std::vector<int>& y) {
        return loss_and_gradients(net, x, y).loss;
    }, py::arg("net"), py::arg("inputs"), py::arg("labels"));

    // Curve fitting.
    m.def("family_names", [] {
        std::vector<std::string> out;
        for (auto f : kAllFamilies) out.emplace_back(family_name(f));
        return out;
    });
    m.def("eval_model", [](const std::string& family, const std::vector<double>& params, double t) {
        return eval_model({family_from_name(family), params}, t);
    }, py::arg("family"), py::arg("params"), py::arg("t"));
    m.def("fit_curve", [](const std::string& family, const std::vector<double>& t, const std::vector<double>& y) {
        const FitResult r = fit_curve(family_from_name(family), {t, y});
        py::dict d;
        d["family"] = family;
        d["params"] = r.model.params;
        d["sse"] = r.sse;
        d["r_squared"] = r.r_squared;
        d["aicc"] = r.aicc;
        d["converged"] = r.converged();
        return d;
    }, py::arg("family"), py::arg("t"), py::arg("y"));
    m.def("compare_models_json", [](const std::vector<double>& t, const std::vector<double>& y) {
        return fit_report_json(compare_models({t, y}));
    }, py::arg("t"), py::arg("y"));

    // Review scheduling primitives on a retention CSV.
    m.def("events_from_jsonl", [](const std::string& text) {
        py::list out;
        for (const auto& e : events_from_jsonl(text)) {
            py::dict d;
            d["class"] = e.cls;
            d["trigger_epoch"] = e.trigger_epoch;
            d["end_epoch"] = e.end_epoch;
            d["pre_recall"] = e.pre_recall;
            d["post_recall"] = e.post_recall;
            d["target_peak"] = e.target_peak;
            d["truncated"] = e.truncated;
            out.append(d);
        }
        return out;
    });
}
