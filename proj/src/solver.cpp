#include "vedit/solver.hpp"

#include <algorithm>
#include <cmath>

#include "vedit/random.hpp"

namespace vedit {
namespace {

void check_finite(const Latent& z, const char* what) {
    if (!all_finite(z)) fail(ErrorKind::numerical, std::string(what) + " produced a non-finite value");
}

std::vector<AttentionDirective> capture_directives(int num_blocks, int m, int step, Substep substep) {
    auto dirs = passthrough_directives(num_blocks);
    for (int b = num_blocks - m; b < num_blocks; ++b)
        dirs[static_cast<std::size_t>(b)] = AttentionDirective::capture({step, substep, b});
    return dirs;
}

}  // namespace

std::string to_string(SolverOrder order) {
    switch (order) {
        case SolverOrder::first:
            return "first";
        case SolverOrder::midpoint:
            return "midpoint";
        case SolverOrder::avg2:
            return "avg2";
    }
    return "?";
}

SolverOrder parse_order(const std::string& text) {
    if (text == "first") return SolverOrder::first;
    if (text == "midpoint") return SolverOrder::midpoint;
    if (text == "avg2") return SolverOrder::avg2;
    fail(ErrorKind::invalid_argument, "unknown solver order '" + text + "' (expected first, midpoint or avg2)");
}

void EditConfig::validate(int num_blocks) const {
    require(num_steps >= 2, ErrorKind::invalid_argument, "steps must be >= 2");
    require(n_inject >= 0 && n_inject <= num_steps, ErrorKind::invalid_argument, "inject must be in [0, steps]");
    require(capture_steps() >= n_inject && capture_steps() <= num_steps, ErrorKind::invalid_argument,
            "capture must be in [inject, steps]");
    require(capture_blocks >= 0 && capture_blocks <= num_blocks, ErrorKind::invalid_argument,
            "blocks must be in [0, " + std::to_string(num_blocks) + "]");
    require(std::isfinite(omega) && omega >= 0.0, ErrorKind::invalid_argument, "guidance must be finite and >= 0");
}

int TrajectoryReport::fetches_at_step(int step) const {
    int n = 0;
    for (const auto& r : records)
        if (r.step == step) n += r.fetches;
    return n;
}

Latent predict_clean(const Latent& z, int t, const Tensor& eps, const NoiseSchedule& schedule) {
    require_same_shape(eps.shape(), z.shape(), "predict_clean eps");
    const double a = schedule.alpha_bar_at(t);
    const double sa = std::sqrt(a), sn = std::sqrt(1.0 - a);
    Latent x0(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) x0[i] = (z[i] - sn * eps[i]) / sa;
    check_finite(x0, "predict_clean");
    return x0;
}

Latent ddim_step(const Latent& z, int t_from, int t_to, const Tensor& eps, const NoiseSchedule& schedule) {
    require_same_shape(eps.shape(), z.shape(), "ddim_step eps");
    const double a_to = schedule.alpha_bar_at(t_to);
    if (t_from == t_to) return z;
    const Latent x0 = predict_clean(z, t_from, eps, schedule);
    const double sa = std::sqrt(a_to), sn = std::sqrt(1.0 - a_to);
    Latent out(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = sa * x0[i] + sn * eps[i];
    check_finite(out, "ddim_step");
    return out;
}

SecondOrderResult second_order_step(const Latent& z, int t_from, int t_to, const NoiseEval& eval,
                                    const NoiseSchedule& schedule, SolverOrder mode) {
    require(is_second_order(mode), ErrorKind::invalid_argument, "second_order_step needs midpoint or avg2");
    SecondOrderResult r;
    r.t_mid = find_midpoint(schedule, t_from, t_to);
    const Tensor eps_full = eval(z, t_from, Substep::full);
    r.z_mid = ddim_step(z, t_from, r.t_mid, eps_full, schedule);
    const Tensor eps_mid = eval(r.z_mid, r.t_mid, Substep::mid);
    if (mode == SolverOrder::midpoint) {
        r.z = ddim_step(z, t_from, t_to, eps_mid, schedule);
    } else {
        const Latent a = ddim_step(z, t_from, t_to, eps_full, schedule);
        const Latent b = ddim_step(z, t_from, t_to, eps_mid, schedule);
        r.z = Latent(z.shape());
        for (std::size_t i = 0; i < z.size(); ++i) r.z[i] = 0.5 * (a[i] + b[i]);
    }
    return r;
}

Latent integrate_plan(const Latent& z, const TimestepPlan& plan, const NoiseEval& eval,
                      const NoiseSchedule& schedule, SolverOrder order) {
    Latent cur = z;
    for (int i = 1; i < plan.size(); ++i) {
        const int from = plan[i - 1], to = plan[i];
        if (order == SolverOrder::first)
            cur = ddim_step(cur, from, to, eval(cur, from, Substep::full), schedule);
        else
            cur = second_order_step(cur, from, to, eval, schedule, order).z;
    }
    return cur;
}

StepInterval step_interval(const TimestepPlan& plan, int step_index) {
    require(step_index >= 1 && step_index <= plan.size(), ErrorKind::index_out_of_range,
            "step index " + std::to_string(step_index) + " outside [1, " + std::to_string(plan.size()) + "]");
    return {plan[std::max(step_index - 2, 0)], plan[step_index - 1]};
}

CacheMetadata expected_metadata(const EditConfig& cfg, const NoiseSchedule& schedule, int num_blocks,
                                std::uint64_t prompt_hash) {
    CacheMetadata m;
    m.num_steps = static_cast<std::uint32_t>(cfg.num_steps);
    m.capture_steps = static_cast<std::uint32_t>(cfg.capture_steps());
    m.capture_blocks = static_cast<std::uint32_t>(cfg.capture_blocks);
    m.num_blocks = static_cast<std::uint32_t>(num_blocks);
    m.schedule_hash = schedule.hash();
    m.prompt_hash = prompt_hash;
    return m;
}

InversionResult invert(const Latent& z0, const PromptEmbedding& source, const EditConfig& cfg,
                       const NoiseSchedule& schedule, const NoiseModel& model) {
    const int L = model.num_blocks();
    cfg.validate(L);
    const TimestepPlan plan = plan_timesteps(schedule, cfg.num_steps);
    const int n = cfg.capture_steps(), m = cfg.capture_blocks, N = cfg.num_steps;

    InversionResult res;
    res.cache.set_metadata(expected_metadata(cfg, schedule, L, source.hash()));
    const auto passthrough = passthrough_directives(L);
    CaptureSink sink = [&](const CacheKey& key, TensorF&& v) {
        res.cache.store(key, std::move(v));
        ++res.report.store_count;
    };

    Latent z = z0;
    for (int i = 1; i <= N; ++i) {
        const bool capture = i > N - n && m > 0;
        const StepInterval iv = step_interval(plan, i);
        NoiseEval eval = [&](const Latent& x, int t, Substep sub) {
            StepRecord rec{i, sub, t, l2_norm(x), capture, false, 0};
            res.report.records.push_back(rec);
            if (!capture) return model.predict_noise(x, t, source, passthrough);
            const auto dirs = capture_directives(L, m, i, sub);
            return model.predict_noise(x, t, source, dirs, sink);
        };
        if (cfg.order == SolverOrder::first)
            z = ddim_step(z, iv.low, iv.high, eval(z, iv.low, Substep::full), schedule);
        else
            z = second_order_step(z, iv.low, iv.high, eval, schedule, cfg.order).z;
    }
    res.z_T = std::move(z);
    return res;
}

bool injection_gate(int step, int n_inject) {
    require(step >= 1, ErrorKind::index_out_of_range, "editing steps are counted from 1");
    return step <= n_inject;
}

CfgPrediction cfg_predict(const Latent& z, int t, const PromptEmbedding& target, double omega, bool inject,
                          const ValueCache& cache, Substep substep, int step_index, const NoiseModel& model,
                          const EditConfig& cfg) {
    const int L = model.num_blocks();
    const int m = cfg.capture_blocks;
    CfgPrediction out;

    auto cond_dirs = passthrough_directives(L);
    if (inject) {
        for (int b = L - m; b < L; ++b) {
            const CacheKey key{step_index, substep, b};
            const TensorF* v = cache.fetch(key);
            if (v == nullptr) fail(ErrorKind::cache_miss, "no cached value for " + to_string(key));
            cond_dirs[static_cast<std::size_t>(b)] = AttentionDirective::inject(*v);
            ++out.fetches;
        }
    }
    out.cond = model.predict_noise(z, t, target, cond_dirs);

    if (omega == 1.0) {
        out.eps = out.cond;
        return out;
    }
    out.uncond = model.predict_noise(z, t, model.null_prompt(), passthrough_directives(L));
    const Tensor& u = *out.uncond;
    out.eps = Tensor(z.shape());
    for (std::size_t i = 0; i < z.size(); ++i) out.eps[i] = u[i] + omega * (out.cond[i] - u[i]);
    return out;
}

EditResult edit_denoise(const Latent& z_T, const PromptEmbedding& target, const ValueCache& cache,
                        const EditConfig& cfg, const NoiseSchedule& schedule, const NoiseModel& model,
                        const EditOptions& options) {
    const int L = model.num_blocks();
    cfg.validate(L);
    const TimestepPlan plan = plan_timesteps(schedule, cfg.num_steps);
    const int N = cfg.num_steps;

    EditResult res;
    if (cfg.n_inject > 0) {
        CacheMetadata need = expected_metadata(cfg, schedule, L, options.source_prompt_hash.value_or(0));
        need.capture_steps = static_cast<std::uint32_t>(cfg.n_inject);
        if (!options.source_prompt_hash) need.prompt_hash = cache.metadata().prompt_hash;
        const auto issues = check_compatibility(cache.metadata(), need);
        if (!issues.empty()) {
            std::string msg = "cache is incompatible with this run:";
            for (const auto& s : issues) msg += "\n  " + s;
            if (!options.allow_incompatible_cache) fail(ErrorKind::incompatible_cache, msg);
            res.warnings.push_back(msg);
        }
    }

    Latent z = z_T;
    for (int j = 1; j <= N; ++j) {
        const int step_index = N - j + 1;
        const bool inject = injection_gate(j, cfg.n_inject);
        const StepInterval iv = step_interval(plan, step_index);
        NoiseEval eval = [&](const Latent& x, int t, Substep sub) {
            CfgPrediction p = cfg_predict(x, t, target, cfg.omega, inject, cache, sub, step_index, model, cfg);
            res.report.records.push_back({j, sub, t, l2_norm(x), false, inject, p.fetches});
            res.report.fetch_count += p.fetches;
            if (options.observer) options.observer(EvaluationEvent{j, step_index, sub, t, inject, x, p});
            return std::move(p.eps);
        };
        if (cfg.order == SolverOrder::first)
            z = ddim_step(z, iv.high, iv.low, eval(z, iv.high, Substep::full), schedule);
        else
            z = second_order_step(z, iv.high, iv.low, eval, schedule, cfg.order).z;
    }
    res.z0 = std::move(z);
    return res;
}

Latent reconstruct(const Latent& z_T, const PromptEmbedding& source, const EditConfig& cfg,
                   const NoiseSchedule& schedule, const NoiseModel& model) {
    EditConfig rc = cfg;
    rc.omega = 1.0;
    rc.n_inject = 0;
    rc.n_capture = 0;
    return edit_denoise(z_T, source, ValueCache{}, rc, schedule, model).z0;
}

Latent sample_initial_noise(const Shape& shape, std::uint64_t seed) {
    NormalStream rng(seed);
    Latent z(shape);
    for (auto& v : z.values()) v = rng.next();
    return z;
}

}  // namespace vedit
