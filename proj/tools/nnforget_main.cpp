// nnforget: measure forgetting curves of an MLP on MNIST and schedule
// threshold-triggered review sessions.
//
//   nnforget <pretrain|prototypes|continue|fit|plot|run> --config cfg.json [--key value ...]

#include <cstdio>
#include <exception>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "nnforget/config.hpp"
#include "nnforget/errors.hpp"
#include "nnforget/pipeline.hpp"

namespace {

using namespace nnforget;

using Command = RunManifest (*)(const ExperimentConfig&, const LogFn&);

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Forgetting-curve measurement and spaced review for MLPs"};
    app.set_version_flag("--version", library_version());
    app.require_subcommand(1);

    const ExperimentConfig defaults;
    const std::map<std::string, std::pair<std::string, Command>> commands{
        {"pretrain", {"Train the network on the pretraining split", &cmd_pretrain}},
        {"prototypes", {"Collect class prototypes and initial recall", &cmd_prototypes}},
        {"continue", {"Continued training with excluded classes and reviews", &cmd_continue}},
        {"fit", {"Fit decay models to the retention series", &cmd_fit}},
        {"plot", {"Render the retention plot as SVG", &cmd_plot}},
        {"run", {"Full pipeline: pretrain, prototypes, continue, fit, plot", &run_pipeline}},
    };

    std::string config_path;
    bool dump_config = false;
    std::map<std::string, std::string> flag_values;
    std::map<std::string, CLI::App*> subs;
    for (const auto& [name, entry] : commands) {
        auto* sub = app.add_subcommand(name, entry.first);
        sub->add_option("--config", config_path, "JSON config file");
        sub->add_flag("--print-config", dump_config, "Print the effective config and exit");
        for (const auto& key : config_keys()) {
            sub->add_option("--" + key, flag_values[key], "Override config key " + key);
        }
        subs[name] = sub;
    }

    CLI11_PARSE(app, argc, argv);

    std::string chosen;
    for (const auto& [name, sub] : subs) {
        if (sub->parsed()) chosen = name;
    }

    try {
        std::vector<std::pair<std::string, std::string>> overrides;
        for (const auto& key : config_keys()) {
            if (subs[chosen]->count("--" + key) > 0) overrides.emplace_back(key, flag_values[key]);
        }
        const auto config = parse_config(
            config_path.empty() ? std::nullopt : std::optional<std::filesystem::path>(config_path),
            overrides);
        if (dump_config) {
            std::fputs(config.to_json().c_str(), stdout);
            return 0;
        }
        const RunManifest manifest = commands.at(chosen).second(config, stderr_logger());
        std::fprintf(stderr, "manifest: %s\n", manifest.artifacts.at("manifest").c_str());
    } catch (const PhaseError& e) {
        std::fprintf(stderr, "nnforget %s: %s\n", chosen.c_str(), e.what());
        return 2;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "nnforget %s: configuration error: %s\n", chosen.c_str(), e.what());
        return 64;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "nnforget %s: %s\n", chosen.c_str(), e.what());
        return 1;
    }
    return 0;
}
