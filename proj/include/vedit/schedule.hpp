#pragma once

#include <cstdint>
#include <vector>

namespace vedit {

/// Discrete variance-preserving schedule: alpha_bar[k] is the fraction of
/// signal variance kept at training timestep k. Index 0 is the least noisy.
struct NoiseSchedule {
    int num_train_steps = 0;
    double beta_start = 0.0;
    double beta_end = 0.0;
    std::vector<double> alpha_bar;
    std::vector<double> lambda;  // log-SNR per timestep, strictly decreasing

    double alpha_bar_at(int k) const;
    /// Content hash of the table; binds cache files to the schedule they were made with.
    std::uint64_t hash() const;
};

/// N training-timestep indices, strictly increasing (low noise -> high noise).
struct TimestepPlan {
    std::vector<int> steps;

    int size() const { return static_cast<int>(steps.size()); }
    int operator[](int i) const { return steps[static_cast<std::size_t>(i)]; }
};

/// Linear-beta schedule: alpha_bar[k] = prod_{j<=k} (1 - beta_j).
NoiseSchedule build_schedule(int num_train_steps = 1000, double beta_start = 1e-4, double beta_end = 0.02);

/// lambda = 0.5 * log(alpha_bar / (1 - alpha_bar)).
double logsnr_of(double alpha_bar);
double logsnr(const NoiseSchedule& schedule, int k);

/// Uniform spacing over [0, T-1] rounded to nearest; collisions shift upward.
TimestepPlan plan_timesteps(const NoiseSchedule& schedule, int n);

/// Training timestep whose log-SNR is closest to the mean log-SNR of t_a and t_b.
/// The scan is global; ties go to the lower index.
int find_midpoint(const NoiseSchedule& schedule, int t_a, int t_b);

}  // namespace vedit
