#include "vedit/schedule.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include "vedit/errors.hpp"
#include "vedit/tensor.hpp"

namespace vedit {
namespace {

void check_index(const NoiseSchedule& s, int k) {
    if (k < 0 || k >= s.num_train_steps) {
        fail(ErrorKind::index_out_of_range,
             "timestep " + std::to_string(k) + " outside [0, " + std::to_string(s.num_train_steps) + ")");
    }
}

}  // namespace

double NoiseSchedule::alpha_bar_at(int k) const {
    check_index(*this, k);
    return alpha_bar[static_cast<std::size_t>(k)];
}

std::uint64_t NoiseSchedule::hash() const {
    std::uint64_t h = fnv1a64(std::as_bytes(std::span(&num_train_steps, 1)));
    for (double a : alpha_bar) {
        const auto bits = std::bit_cast<std::uint64_t>(a);
        std::byte le[8];
        for (int i = 0; i < 8; ++i) le[i] = static_cast<std::byte>((bits >> (8 * i)) & 0xff);
        h = fnv1a64(std::span<const std::byte>(le, 8), h);
    }
    return h;
}

NoiseSchedule build_schedule(int num_train_steps, double beta_start, double beta_end) {
    require(num_train_steps >= 2, ErrorKind::invalid_argument, "num_train_steps must be >= 2");
    require(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0, ErrorKind::invalid_argument,
            "betas must satisfy 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.num_train_steps = num_train_steps;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.alpha_bar.resize(static_cast<std::size_t>(num_train_steps));
    s.lambda.resize(s.alpha_bar.size());

    const double span = beta_end - beta_start;
    double prod = 1.0;
    for (int k = 0; k < num_train_steps; ++k) {
        const double beta = beta_start + span * static_cast<double>(k) / static_cast<double>(num_train_steps - 1);
        prod *= 1.0 - beta;
        s.alpha_bar[static_cast<std::size_t>(k)] = prod;
        s.lambda[static_cast<std::size_t>(k)] = logsnr_of(prod);
    }
    return s;
}

double logsnr_of(double alpha_bar) { return 0.5 * std::log(alpha_bar / (1.0 - alpha_bar)); }

double logsnr(const NoiseSchedule& schedule, int k) {
    check_index(schedule, k);
    return schedule.lambda[static_cast<std::size_t>(k)];
}

TimestepPlan plan_timesteps(const NoiseSchedule& schedule, int n) {
    const int last = schedule.num_train_steps - 1;
    require(n >= 2 && n <= schedule.num_train_steps, ErrorKind::invalid_argument,
            "inference steps must be in [2, " + std::to_string(schedule.num_train_steps) + "], got " +
                std::to_string(n));

    TimestepPlan plan;
    plan.steps.resize(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double pos = static_cast<double>(i) * last / static_cast<double>(n - 1);
        int k = static_cast<int>(std::lround(pos));
        if (i > 0 && k <= plan.steps[static_cast<std::size_t>(i - 1)]) k = plan.steps[static_cast<std::size_t>(i - 1)] + 1;
        plan.steps[static_cast<std::size_t>(i)] = k;
    }
    require(plan.steps.back() <= last, ErrorKind::invalid_argument, "timestep plan overflowed the schedule");
    return plan;
}

int find_midpoint(const NoiseSchedule& schedule, int t_a, int t_b) {
    check_index(schedule, t_a);
    check_index(schedule, t_b);
    const auto& lam = schedule.lambda;
    const double target = 0.5 * (lam[static_cast<std::size_t>(t_a)] + lam[static_cast<std::size_t>(t_b)]);

    // lambda is strictly decreasing: the first index with lambda <= target and its
    // predecessor bracket the minimiser.
    const auto it = std::partition_point(lam.begin(), lam.end(), [&](double v) { return v > target; });
    const auto hi = static_cast<int>(it - lam.begin());
    int best = std::min(hi, schedule.num_train_steps - 1);
    if (hi > 0) {
        const int lo = hi - 1;
        const double d_lo = std::abs(lam[static_cast<std::size_t>(lo)] - target);
        const double d_best = std::abs(lam[static_cast<std::size_t>(best)] - target);
        if (d_lo <= d_best) best = lo;
    }
    return best;
}

}  // namespace vedit
