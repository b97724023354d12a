#include "vedit/oracle.hpp"

#include <cmath>

namespace vedit {
namespace {

double antiderivative(int kappa, double s) {
    switch (kappa) {
        case 0:
            return s;
        case 1:
            return std::asinh(s);
        case 2:
            return std::atan(s);
        case 3:
            return s / std::sqrt(1.0 + s * s);
    }
    return 0.0;
}

double mean_slope(const std::vector<double>& errors) {
    if (errors.size() < 2) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i + 1 < errors.size(); ++i) acc += std::log2(errors[i] / errors[i + 1]);
    return acc / static_cast<double>(errors.size() - 1);
}

}  // namespace

LinearOracle::LinearOracle(NoiseSchedule schedule, int kappa, double offset)
    : schedule_(std::move(schedule)), kappa_(kappa), offset_(offset) {
    require(kappa >= 0 && kappa <= 3, ErrorKind::invalid_argument, "oracle kappa must be in {0, 1, 2, 3}");
    require(std::isfinite(offset), ErrorKind::invalid_argument, "oracle offset must be finite");
}

Tensor LinearOracle::eval(const Latent& z, int t) const {
    const double c = kappa_ * std::sqrt(1.0 - schedule_.alpha_bar_at(t));
    Tensor eps(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) eps[i] = c * z[i] + offset_;
    return eps;
}

Tensor LinearOracle::predict_noise(const Latent& z, int t, const PromptEmbedding&,
                                   std::span<const AttentionDirective> directives, const CaptureSink&) const {
    require(directives.empty(), ErrorKind::shape_mismatch, "the linear oracle has no attention blocks");
    return eval(z, t);
}

Latent LinearOracle::exact(const Latent& z, int t_from, int t_to) const {
    const double a0 = schedule_.alpha_bar_at(t_from), a1 = schedule_.alpha_bar_at(t_to);
    const double s0 = std::sqrt((1.0 - a0) / a0), s1 = std::sqrt((1.0 - a1) / a1);
    const double g0 = std::pow(1.0 + s0 * s0, 0.5 * kappa_), g1 = std::pow(1.0 + s1 * s1, 0.5 * kappa_);
    const double dF = antiderivative(kappa_, s1) - antiderivative(kappa_, s0);
    Latent out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) {
        const double x0 = z[i] / std::sqrt(a0);
        const double x1 = g1 * (x0 / g0 + offset_ * dF);
        out[i] = x1 * std::sqrt(a1);
    }
    return out;
}

Latent convergence_start_state() { return Latent(Shape{1, 1, 2, 2}, {1.0, -0.5, 0.25, 2.0}); }

ConvergenceStudy run_convergence_study(const NoiseSchedule& schedule, const std::vector<int>& step_counts,
                                       int kappa, double offset) {
    const LinearOracle oracle(schedule, kappa, offset);
    const NoiseEval eval = [&](const Latent& z, int t, Substep) { return oracle.eval(z, t); };
    const Latent z0 = convergence_start_state();

    ConvergenceStudy study;
    std::vector<double> e1, e2, e3;
    for (int n : step_counts) {
        const TimestepPlan plan = plan_timesteps(schedule, n);
        const Latent truth = oracle.exact(z0, plan[0], plan[n - 1]);
        ConvergenceRow row;
        row.steps = n;
        row.error_first = max_abs_diff(integrate_plan(z0, plan, eval, schedule, SolverOrder::first), truth);
        row.error_midpoint = max_abs_diff(integrate_plan(z0, plan, eval, schedule, SolverOrder::midpoint), truth);
        row.error_avg2 = max_abs_diff(integrate_plan(z0, plan, eval, schedule, SolverOrder::avg2), truth);
        study.rows.push_back(row);
        e1.push_back(row.error_first);
        e2.push_back(row.error_midpoint);
        e3.push_back(row.error_avg2);
    }
    study.slope_first = mean_slope(e1);
    study.slope_midpoint = mean_slope(e2);
    study.slope_avg2 = mean_slope(e3);
    return study;
}

}  // namespace vedit
