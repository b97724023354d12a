#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "vedit/denoiser.hpp"
#include "vedit/schedule.hpp"
#include "vedit/vcache.hpp"

namespace vedit {

enum class SolverOrder { first, midpoint, avg2 };

std::string to_string(SolverOrder order);
SolverOrder parse_order(const std::string& text);
inline bool is_second_order(SolverOrder o) { return o != SolverOrder::first; }

struct EditConfig {
    int num_steps = 150;  // N
    int n_inject = 10;
    std::optional<int> n_capture;  // defaults to n_inject
    int capture_blocks = 8;        // m
    double omega = 7.5;
    SolverOrder order = SolverOrder::midpoint;
    std::uint64_t noise_seed = 0;

    int capture_steps() const { return n_capture.value_or(n_inject); }
    void validate(int num_blocks) const;
};

/// One noise evaluation along a trajectory.
struct StepRecord {
    int step = 0;  // inversion: 1..N low->high noise; editing: 1..N high->low noise
    Substep substep = Substep::full;
    int timestep = 0;
    double latent_norm = 0.0;
    bool captured = false;
    bool injected = false;
    int fetches = 0;
};

struct TrajectoryReport {
    std::vector<StepRecord> records;
    int fetch_count = 0;
    int store_count = 0;

    int fetches_at_step(int step) const;
};

/// Clean-latent estimate (z - sqrt(1 - a) eps) / sqrt(a).
Latent predict_clean(const Latent& z, int t, const Tensor& eps, const NoiseSchedule& schedule);

/// Deterministic DDIM update from t_from to t_to (either direction) with a fixed
/// noise estimate: sqrt(a_to) * z0_hat + sqrt(1 - a_to) * eps.
Latent ddim_step(const Latent& z, int t_from, int t_to, const Tensor& eps, const NoiseSchedule& schedule);

using NoiseEval = std::function<Tensor(const Latent& z, int t, Substep substep)>;

struct SecondOrderResult {
    Latent z;
    Latent z_mid;
    int t_mid = 0;
};

/// Two-evaluation step through the log-SNR midpoint. `midpoint` applies the
/// noise estimated at (z_mid, t_mid) over the whole step; `avg2` averages the
/// full-step and midpoint-step results, which is only first-order accurate in general.
SecondOrderResult second_order_step(const Latent& z, int t_from, int t_to, const NoiseEval& eval,
                                    const NoiseSchedule& schedule, SolverOrder mode);

/// Runs z from plan[0] to plan[N-1] with the chosen order (no capture).
Latent integrate_plan(const Latent& z, const TimestepPlan& plan, const NoiseEval& eval,
                      const NoiseSchedule& schedule, SolverOrder order);

/// Timestep interval covered by inversion step i (1-based). Step 1 is the
/// zero-length step at plan[0]; step i > 1 covers plan[i-2] -> plan[i-1].
struct StepInterval {
    int low = 0;
    int high = 0;
};
StepInterval step_interval(const TimestepPlan& plan, int step_index);

/// Cache metadata an inversion under these settings produces.
CacheMetadata expected_metadata(const EditConfig& cfg, const NoiseSchedule& schedule, int num_blocks,
                                std::uint64_t prompt_hash);

struct InversionResult {
    Latent z_T;
    ValueCache cache;
    TrajectoryReport report;
};

/// Deterministic inversion under the source prompt (single branch, no guidance).
/// The last n_capture steps store V for the last m blocks: key (i, full, b) from
/// the full-state pass and (i, mid, b) from the midpoint pass.
InversionResult invert(const Latent& z0, const PromptEmbedding& source, const EditConfig& cfg,
                       const NoiseSchedule& schedule, const NoiseModel& model);

/// 1{i <= n_inject}.
bool injection_gate(int step, int n_inject);

struct CfgPrediction {
    Tensor eps;
    Tensor cond;
    std::optional<Tensor> uncond;  // not evaluated when omega == 1
    int fetches = 0;
};

/// eps_uncond + omega * (eps_cond - eps_uncond). The unconditional branch always
/// runs passthrough; when `inject` is set the conditional branch replaces V in
/// the last m blocks with cache records (step_index, substep, b).
CfgPrediction cfg_predict(const Latent& z, int t, const PromptEmbedding& target, double omega, bool inject,
                          const ValueCache& cache, Substep substep, int step_index, const NoiseModel& model,
                          const EditConfig& cfg);

struct EvaluationEvent {
    int step = 0;
    int step_index = 0;
    Substep substep = Substep::full;
    int timestep = 0;
    bool inject = false;
    const Latent& z;
    const CfgPrediction& prediction;
};

struct EditOptions {
    bool allow_incompatible_cache = false;
    std::optional<std::uint64_t> source_prompt_hash;
    std::function<void(const EvaluationEvent&)> observer;
};

struct EditResult {
    Latent z0;
    TrajectoryReport report;
    std::vector<std::string> warnings;
};

/// Guided denoising from z_T back to the clean latent. Editing step j pairs with
/// inversion step N - j + 1 and injects while j <= n_inject.
EditResult edit_denoise(const Latent& z_T, const PromptEmbedding& target, const ValueCache& cache,
                        const EditConfig& cfg, const NoiseSchedule& schedule, const NoiseModel& model,
                        const EditOptions& options = {});

/// edit_denoise with the source prompt, omega = 1 and no injection.
Latent reconstruct(const Latent& z_T, const PromptEmbedding& source, const EditConfig& cfg,
                   const NoiseSchedule& schedule, const NoiseModel& model);

/// Seeded standard-normal latent for generation from scratch.
Latent sample_initial_noise(const Shape& shape, std::uint64_t seed);

}  // namespace vedit
