#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "vedit/denoiser.hpp"
#include "vedit/metrics.hpp"
#include "vedit/solver.hpp"
#include "vedit/video.hpp"

namespace vedit {

/// Every knob of the end-to-end pipeline. Settable from a flat `key = value`
/// file and from command line flags (flags win).
struct PipelineConfig {
    EditConfig edit;
    DenoiserConfig denoiser;

    int train_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;

    // Synthetic source video; pixel size is the latent size times patch_size.
    int frames = 8;
    int latent_height = 16;
    int latent_width = 16;
    double velocity_x = 1.0;
    double velocity_y = 0.0;
    std::uint64_t seed = 0;

    std::string source_prompt = "phacoemulsification probe fragments the lens nucleus";
    std::string target_prompt = "irrigation aspiration handpiece removes the lens cortex";

    std::filesystem::path in;
    std::filesystem::path out;
    std::filesystem::path cache;
    std::filesystem::path reference;
    bool metrics = true;
    bool force_incompatible_cache = false;

    int oracle_kappa = 1;
    double oracle_offset = 0.5;
    std::vector<int> convergence_steps{10, 20, 40, 80};

    /// Sets one field by its config-file key; unknown keys and bad values are config errors.
    void set(const std::string& key, const std::string& value);
    /// Applies a `key = value` file with `#` comments.
    void apply_file(const std::filesystem::path& path);
    void validate() const;

    SyntheticVideoSpec synthetic_spec() const;
    NoiseSchedule make_schedule() const;
};

std::vector<std::string> config_keys();

// Subcommands. Each validates paths before computing, writes its artifacts and
// throws vedit::Error on failure.
void cmd_synth(const PipelineConfig& cfg, std::ostream& log);
void cmd_invert(const PipelineConfig& cfg, std::ostream& log);
void cmd_edit(const PipelineConfig& cfg, std::ostream& log);
void cmd_reconstruct(const PipelineConfig& cfg, std::ostream& log);
void cmd_metrics(const PipelineConfig& cfg, std::ostream& log);
void cmd_convergence(const PipelineConfig& cfg, std::ostream& log);

/// Dispatches by name and converts errors into the documented exit codes.
int run_command(const std::string& name, const PipelineConfig& cfg, std::ostream& log, std::ostream& err);

// Side-output locations derived from --out.
std::filesystem::path report_path(const std::filesystem::path& out);
std::filesystem::path frames_dir(const std::filesystem::path& out);
std::filesystem::path metrics_path(const std::filesystem::path& out);

}  // namespace vedit
