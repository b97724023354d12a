#pragma once

#include <vector>

#include "vedit/denoiser.hpp"
#include "vedit/schedule.hpp"
#include "vedit/solver.hpp"

namespace vedit {

/// Noise model eps(z, t) = kappa * sqrt(1 - alpha_bar_t) * z + offset, whose
/// probability-flow trajectory has a closed form for kappa in {0, 1, 2, 3}.
///
/// In x = z / sqrt(alpha_bar) and s = sqrt((1 - alpha_bar) / alpha_bar) the
/// flow is dx/ds = kappa * s / (1 + s^2) * x + offset, giving
///   x(s) = (1 + s^2)^(kappa/2) * [x_a (1 + s_a^2)^(-kappa/2) + offset * (F(s) - F(s_a))]
/// with F the antiderivative of (1 + s^2)^(-kappa/2).
class LinearOracle final : public NoiseModel {
public:
    LinearOracle(NoiseSchedule schedule, int kappa = 1, double offset = 0.5);

    int num_blocks() const override { return 0; }
    PromptEmbedding null_prompt() const override { return {}; }

    Tensor predict_noise(const Latent& z, int t, const PromptEmbedding& prompt,
                         std::span<const AttentionDirective> directives,
                         const CaptureSink& sink = {}) const override;

    Tensor eval(const Latent& z, int t) const;

    /// Exact solution at t_to starting from z at t_from.
    Latent exact(const Latent& z, int t_from, int t_to) const;

    int kappa() const { return kappa_; }
    double offset() const { return offset_; }

private:
    NoiseSchedule schedule_;
    int kappa_;
    double offset_;
};

struct ConvergenceRow {
    int steps = 0;
    double error_first = 0.0;
    double error_midpoint = 0.0;
    double error_avg2 = 0.0;
};

struct ConvergenceStudy {
    std::vector<ConvergenceRow> rows;
    // Mean of log2(error(N) / error(2N)) over consecutive rows.
    double slope_first = 0.0;
    double slope_midpoint = 0.0;
    double slope_avg2 = 0.0;
};

/// Integrates the oracle flow from plan[0] to plan[N-1] for every N in
/// `step_counts` (each the double of the previous) and reports max-abs errors
/// against the closed form.
ConvergenceStudy run_convergence_study(const NoiseSchedule& schedule, const std::vector<int>& step_counts,
                                       int kappa = 1, double offset = 0.5);

/// Fixed start state used by the convergence study.
Latent convergence_start_state();

}  // namespace vedit
