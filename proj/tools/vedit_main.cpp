// Command line front end: vedit <command> [flags].
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vedit/pipeline.hpp"

namespace {

// Flag name -> config key. Flags are collected as strings and applied after
// the config file so both paths share the same parsing and validation.
const std::vector<std::pair<std::string, std::string>> kFlags = {
    {"--steps", "steps"},
    {"--inject", "inject"},
    {"--capture", "capture"},
    {"--blocks", "blocks"},
    {"--guidance", "guidance"},
    {"--order", "order"},
    {"--seed", "seed"},
    {"--source-prompt", "source_prompt"},
    {"--target-prompt", "target_prompt"},
    {"--in", "in"},
    {"--out", "out"},
    {"--cache", "cache"},
    {"--reference", "reference"},
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Training-free text-guided video editing on a toy latent diffusion model"};
    app.require_subcommand(1);

    std::string config_path;
    std::map<std::string, std::string> flag_values;
    std::vector<std::string> overrides;
    bool force = false;

    const std::vector<std::pair<std::string, std::string>> commands = {
        {"synth", "write a synthetic source video"},
        {"invert", "invert a video to noise and capture attention values"},
        {"edit", "denoise under the target prompt with value injection"},
        {"reconstruct", "denoise under the source prompt without guidance"},
        {"metrics", "compare a video against a reference"},
        {"convergence", "solver convergence study on the analytic oracle"},
    };
    for (const auto& [name, help] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "flat key = value config file");
        for (const auto& [flag, key] : kFlags) sub->add_option(flag, flag_values[key]);
        sub->add_flag("--force-incompatible-cache", force, "edit with a cache whose metadata does not match");
        sub->add_option("--set", overrides, "extra KEY=VALUE config overrides");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    CLI::App* sub = app.get_subcommands().front();

    vedit::PipelineConfig cfg;
    try {
        if (!config_path.empty()) cfg.apply_file(config_path);
        for (const auto& [flag, key] : kFlags)
            if (sub->count(flag) > 0) cfg.set(key, flag_values[key]);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            vedit::require(eq != std::string::npos, vedit::ErrorKind::invalid_argument,
                           "--set expects KEY=VALUE, got '" + kv + "'");
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (force) cfg.force_incompatible_cache = true;
    } catch (const vedit::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return vedit::exit_code_for(e.kind());
    }

    return vedit::run_command(command, cfg, std::cout, std::cerr);
}
