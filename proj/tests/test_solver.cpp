#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "vedit/oracle.hpp"
#include "vedit/solver.hpp"

using namespace vedit;
using testing::random_tensor;
using testing::small_model;

namespace {

const NoiseSchedule& sched() {
    static const NoiseSchedule s = build_schedule();
    return s;
}

EditConfig small_edit() {
    EditConfig c;
    c.num_steps = 20;
    c.n_inject = 4;
    c.capture_blocks = 2;
    c.omega = 5.0;
    return c;
}

Latent small_latent(std::uint64_t seed) { return random_tensor({2, 3, 4, 4}, seed, 0.3); }

ErrorKind kind_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.kind();
    }
    FAIL("no error thrown");
    return ErrorKind::invalid_argument;
}

}  // namespace

TEST_CASE("predict_clean") {
    const auto& s = sched();
    const Latent z = random_tensor({1, 2, 2, 2}, 1);
    const double a = s.alpha_bar_at(321);
    SUBCASE("zero noise divides by sqrt(alpha_bar)") {
        const Latent x = predict_clean(z, 321, Tensor(z.shape()), s);
        for (std::size_t i = 0; i < z.size(); ++i) CHECK(x[i] == doctest::Approx(z[i] / std::sqrt(a)).epsilon(1e-15));
    }
    SUBCASE("inverts the forward mix") {
        const Tensor x = random_tensor(z.shape(), 2), e = random_tensor(z.shape(), 3);
        Latent zt(z.shape());
        for (std::size_t i = 0; i < z.size(); ++i) zt[i] = std::sqrt(a) * x[i] + std::sqrt(1 - a) * e[i];
        CHECK(max_abs_diff(predict_clean(zt, 321, e, s), x) < 1e-13);
    }
    SUBCASE("elementwise reference") {
        const Tensor e = random_tensor(z.shape(), 4);
        const Latent x = predict_clean(z, 321, e, s);
        for (std::size_t i = 0; i < z.size(); ++i)
            CHECK(x[i] == doctest::Approx((z[i] - std::sqrt(1 - a) * e[i]) / std::sqrt(a)).epsilon(1e-14));
    }
}

TEST_CASE("ddim_step") {
    const auto& s = sched();
    const Latent z = random_tensor({1, 2, 2, 2}, 1);
    const Tensor e = random_tensor(z.shape(), 2);
    CHECK(ddim_step(z, 50, 50, e, s).identical(z));
    const Latent zero_eps = ddim_step(z, 50, 700, Tensor(z.shape()), s);
    const double ratio = std::sqrt(s.alpha_bar_at(700) / s.alpha_bar_at(50));
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(zero_eps[i] == doctest::Approx(ratio * z[i]).epsilon(1e-14));
    for (auto [a, b] : {std::pair{0, 7}, std::pair{100, 900}, std::pair{998, 999}, std::pair{600, 20}}) {
        const Latent there = ddim_step(z, a, b, e, s);
        CHECK(relative_mse(ddim_step(there, b, a, e, s), z) < 1e-20);
    }
    CHECK_THROWS_AS(ddim_step(z, 0, 5, Tensor(Shape{1, 2, 2, 3}), s), Error);
    Tensor bad = e;
    bad[0] = std::nan("");
    CHECK(kind_of([&] { ddim_step(z, 0, 5, bad, s); }) == ErrorKind::numerical);
}

TEST_CASE("second_order_step") {
    const auto& s = sched();
    const Latent z = random_tensor({1, 1, 2, 2}, 1);
    const Tensor c = random_tensor(z.shape(), 2);
    const NoiseEval constant = [&](const Latent&, int, Substep) { return c; };
    for (auto mode : {SolverOrder::midpoint, SolverOrder::avg2}) {
        const auto r = second_order_step(z, 100, 250, constant, s, mode);
        CHECK(r.t_mid == find_midpoint(s, 100, 250));
        CHECK(max_abs_diff(r.z, ddim_step(z, 100, 250, c, s)) < 1e-14);
        const auto same = second_order_step(z, 300, 300, constant, s, mode);
        CHECK(same.z.identical(z));
        CHECK(same.z_mid.identical(z));
        CHECK(same.t_mid == 300);
    }
    CHECK_THROWS_AS(second_order_step(z, 1, 2, constant, s, SolverOrder::first), Error);

    SUBCASE("substeps are labelled and evaluated in order") {
        std::vector<std::pair<int, Substep>> calls;
        const NoiseEval spy = [&](const Latent&, int t, Substep sub) {
            calls.emplace_back(t, sub);
            return c;
        };
        second_order_step(z, 100, 250, spy, s, SolverOrder::midpoint);
        REQUIRE(calls.size() == 2);
        CHECK(calls[0] == std::pair{100, Substep::full});
        CHECK(calls[1] == std::pair{find_midpoint(s, 100, 250), Substep::mid});
    }
}

TEST_CASE("constant noise is integrated exactly by every order") {
    const auto& s = sched();
    const LinearOracle oracle(s, 0, 0.7);
    const NoiseEval eval = [&](const Latent& z, int t, Substep) { return oracle.eval(z, t); };
    const Latent z0 = convergence_start_state();
    for (int n : {10, 20, 40}) {
        const auto plan = plan_timesteps(s, n);
        const Latent truth = oracle.exact(z0, plan[0], plan[n - 1]);
        for (auto order : {SolverOrder::first, SolverOrder::midpoint, SolverOrder::avg2})
            CHECK(max_abs_diff(integrate_plan(z0, plan, eval, s, order), truth) < 1e-10);
    }
}

TEST_CASE("midpoint reconstruction beats first order on the oracle") {
    const auto& s = sched();
    const LinearOracle oracle(s, 1, 0.5);
    const Latent z0 = convergence_start_state();
    EditConfig cfg;
    cfg.num_steps = 150;
    cfg.n_inject = 0;
    cfg.capture_blocks = 0;
    const PromptEmbedding none;
    const Latent zT_exact = oracle.exact(z0, 0, 999);
    double inv_err[2], rec_err[2];
    int k = 0;
    for (auto order : {SolverOrder::first, SolverOrder::midpoint}) {
        cfg.order = order;
        inv_err[k] = max_abs_diff(invert(z0, none, cfg, s, oracle).z_T, zT_exact);
        rec_err[k] = max_abs_diff(reconstruct(zT_exact, none, cfg, s, oracle), z0);
        ++k;
    }
    CHECK(inv_err[1] <= inv_err[0]);
    CHECK(rec_err[1] <= rec_err[0]);
}

TEST_CASE("injection gate") {
    CHECK(injection_gate(1, 10));
    CHECK(injection_gate(10, 10));
    CHECK_FALSE(injection_gate(11, 10));
    for (int i = 1; i <= 150; ++i) CHECK_FALSE(injection_gate(i, 0));
    CHECK_THROWS_AS(injection_gate(0, 10), Error);
}

TEST_CASE("step intervals tile the plan") {
    const auto plan = plan_timesteps(sched(), 20);
    CHECK(step_interval(plan, 1).low == 0);
    CHECK(step_interval(plan, 1).high == 0);
    for (int i = 2; i <= 20; ++i) {
        CHECK(step_interval(plan, i).low == plan[i - 2]);
        CHECK(step_interval(plan, i).high == plan[i - 1]);
    }
    CHECK_THROWS_AS(step_interval(plan, 0), Error);
    CHECK_THROWS_AS(step_interval(plan, 21), Error);
}

TEST_CASE("classifier-free guidance algebra") {
    const auto mc = small_model();
    const Denoiser model(mc, sched());
    const Latent z = small_latent(3);
    const auto target = embed_prompt("irrigation aspiration", mc);
    const EditConfig cfg = small_edit();
    const ValueCache empty;

    const auto one = cfg_predict(z, 500, target, 1.0, false, empty, Substep::full, 5, model, cfg);
    CHECK(one.eps.identical(one.cond));
    CHECK_FALSE(one.uncond.has_value());

    const auto zero = cfg_predict(z, 500, target, 0.0, false, empty, Substep::full, 5, model, cfg);
    REQUIRE(zero.uncond.has_value());
    CHECK(relative_mse(zero.eps, *zero.uncond) <= 1e-24);

    const auto w = cfg_predict(z, 500, target, 7.5, false, empty, Substep::full, 5, model, cfg);
    for (std::size_t i = 0; i < z.size(); ++i)
        CHECK(w.eps[i] == doctest::Approx((*w.uncond)[i] + 7.5 * (w.cond[i] - (*w.uncond)[i])).epsilon(1e-14));
    CHECK(w.uncond->identical(model.predict_noise(z, 500, model.null_prompt(), passthrough_directives(4))));

    SUBCASE("injecting the live values is bitwise neutral") {
        ValueCache live;
        auto dirs = passthrough_directives(4);
        for (int b = 2; b < 4; ++b) dirs[b] = AttentionDirective::capture({5, Substep::mid, b});
        model.predict_noise(z, 500, target, dirs, [&](const CacheKey& k, TensorF&& v) { live.store(k, std::move(v)); });
        const auto inj = cfg_predict(z, 500, target, 7.5, true, live, Substep::mid, 5, model, cfg);
        CHECK(inj.fetches == 2);
        CHECK(inj.eps.identical(w.eps));
    }
    SUBCASE("missing keys are cache misses") {
        CHECK(kind_of([&] { cfg_predict(z, 500, target, 7.5, true, empty, Substep::full, 5, model, cfg); }) ==
              ErrorKind::cache_miss);
    }
}

TEST_CASE("inversion capture") {
    const auto mc = small_model();
    const Denoiser model(mc, sched());
    const Latent z0 = small_latent(1);
    const auto source = embed_prompt("phaco probe", mc);
    EditConfig cfg = small_edit();

    SUBCASE("second order stores n x 2 x m records in the final steps and last blocks") {
        const auto inv = invert(z0, source, cfg, sched(), model);
        CHECK(inv.cache.size() == 4 * 2 * 2);
        CHECK(inv.report.store_count == 16);
        for (const auto& [key, v] : inv.cache.records()) {
            CHECK(key.step_index > 16);
            CHECK(key.step_index <= 20);
            CHECK(key.block_index >= 2);
            CHECK(v.shape() == Shape{2, 8, 8});
        }
        CHECK(inv.cache.metadata() == expected_metadata(cfg, sched(), 4, source.hash()));
        CHECK(inv.report.records.size() == 40);
        CHECK(all_finite(inv.z_T));
    }
    SUBCASE("first order captures only full-state keys") {
        cfg.order = SolverOrder::first;
        const auto inv = invert(z0, source, cfg, sched(), model);
        CHECK(inv.cache.size() == 4 * 2);
        for (const auto& [key, v] : inv.cache.records()) CHECK(key.substep == Substep::full);
    }
    SUBCASE("no capture window") {
        cfg.n_inject = 0;
        cfg.n_capture = 0;
        const auto inv = invert(z0, source, cfg, sched(), model);
        CHECK(inv.cache.empty());
        CHECK(all_finite(inv.z_T));
    }
    SUBCASE("a wide window reaches early steps") {
        cfg.n_capture = 16;
        const auto inv = invert(z0, source, cfg, sched(), model);
        CHECK(inv.cache.fetch({5, Substep::mid, 3}) != nullptr);
        CHECK(inv.cache.fetch({4, Substep::mid, 3}) == nullptr);
    }
    SUBCASE("deterministic") {
        const auto a = invert(z0, source, cfg, sched(), model);
        const auto b = invert(z0, source, cfg, sched(), model);
        CHECK(a.z_T.identical(b.z_T));
        CHECK(a.cache.identical(b.cache));
    }
}

TEST_CASE("editing") {
    const auto mc = small_model();
    const Denoiser model(mc, sched());
    const Latent z0 = small_latent(1);
    const auto source = embed_prompt("phaco probe", mc);
    const auto target = embed_prompt("aspiration handpiece", mc);
    const EditConfig cfg = small_edit();
    const auto inv = invert(z0, source, cfg, sched(), model);

    SUBCASE("fetch accounting") {
        const auto res = edit_denoise(inv.z_T, target, inv.cache, cfg, sched(), model);
        CHECK(res.report.fetch_count == 4 * 2 * 2);
        for (int j = 1; j <= 20; ++j) CHECK(res.report.fetches_at_step(j) == (j <= 4 ? 4 : 0));
        CHECK(res.warnings.empty());
    }
    SUBCASE("unconditional branch is untouched by injection") {
        std::vector<Tensor> on, off;
        EditOptions opt;
        opt.observer = [&](const EvaluationEvent& e) { on.push_back(*e.prediction.uncond); };
        edit_denoise(inv.z_T, target, inv.cache, cfg, sched(), model, opt);
        opt.observer = [&](const EvaluationEvent& e) {
            const auto again = cfg_predict(e.z, e.timestep, target, cfg.omega, false, inv.cache, e.substep,
                                           e.step_index, model, cfg);
            off.push_back(*again.uncond);
        };
        edit_denoise(inv.z_T, target, inv.cache, cfg, sched(), model, opt);
        REQUIRE(on.size() == off.size());
        for (std::size_t i = 0; i < on.size(); ++i) CHECK(on[i].identical(off[i]));
    }
    SUBCASE("injection off needs no cache") {
        EditConfig c = cfg;
        c.n_inject = 0;
        const auto res = edit_denoise(inv.z_T, target, ValueCache{}, c, sched(), model);
        CHECK(res.report.fetch_count == 0);
    }
    SUBCASE("reconstruction round trip") {
        const Latent back = reconstruct(inv.z_T, source, cfg, sched(), model);
        CHECK(relative_mse(back, z0) <= 1e-4);
        CHECK(back.identical(reconstruct(inv.z_T, source, cfg, sched(), model)));
    }
    SUBCASE("incompatible cache") {
        EditConfig c = cfg;
        c.num_steps = 25;
        CHECK(kind_of([&] { edit_denoise(inv.z_T, target, inv.cache, c, sched(), model); }) ==
              ErrorKind::incompatible_cache);
        EditOptions opt;
        opt.source_prompt_hash = embed_prompt("other source", mc).hash();
        CHECK(kind_of([&] { edit_denoise(inv.z_T, target, inv.cache, cfg, sched(), model, opt); }) ==
              ErrorKind::incompatible_cache);
        opt.allow_incompatible_cache = true;
        const auto res = edit_denoise(inv.z_T, target, inv.cache, cfg, sched(), model, opt);
        CHECK(res.warnings.size() == 1);
        CHECK(res.report.fetch_count == 16);
    }
    SUBCASE("injecting more steps than captured is rejected up front") {
        EditConfig c = cfg;
        c.n_inject = 6;
        c.n_capture = 6;
        CHECK(kind_of([&] { edit_denoise(inv.z_T, target, inv.cache, c, sched(), model); }) ==
              ErrorKind::incompatible_cache);
    }
}

TEST_CASE("config validation") {
    EditConfig c;
    CHECK_NOTHROW(c.validate(12));
    c.capture_blocks = 13;
    CHECK_THROWS_AS(c.validate(12), Error);
    c = EditConfig{};
    c.n_capture = 5;
    CHECK_THROWS_AS(c.validate(12), Error);
    c = EditConfig{};
    c.omega = -1;
    CHECK_THROWS_AS(c.validate(12), Error);
    c = EditConfig{};
    c.n_inject = 151;
    CHECK_THROWS_AS(c.validate(12), Error);
    CHECK(parse_order("avg2") == SolverOrder::avg2);
    CHECK_THROWS_AS(parse_order("rk4"), Error);
}

TEST_CASE("seeded initial noise") {
    const Latent a = sample_initial_noise({2, 4, 8, 8}, 9);
    CHECK(a.identical(sample_initial_noise({2, 4, 8, 8}, 9)));
    CHECK_FALSE(a.identical(sample_initial_noise({2, 4, 8, 8}, 10)));
    double mean = 0;
    for (double v : a.values()) mean += v;
    CHECK(std::fabs(mean / a.size()) < 0.15);
}

TEST_CASE("first order damps the standard-normal prior flow") {
    // eps = sqrt(1 - a) z leaves z fixed under the exact flow; one DDIM step
    // instead scales it by cos of the angle between the two noise levels.
    const auto& s = sched();
    const LinearOracle prior(s, 1, 0.0);
    const Latent z = convergence_start_state();
    CHECK(max_abs_diff(prior.exact(z, 100, 400), z) < 1e-12);
    const double a0 = s.alpha_bar_at(100), a1 = s.alpha_bar_at(400);
    const double c = std::sqrt(a0 * a1) + std::sqrt((1 - a0) * (1 - a1));
    const Latent one = ddim_step(z, 100, 400, prior.eval(z, 100), s);
    for (std::size_t i = 0; i < z.size(); ++i) CHECK(one[i] == doctest::Approx(c * z[i]).epsilon(1e-13));
    CHECK(c < 1.0);

    const NoiseEval eval = [&](const Latent& x, int t, Substep) { return prior.eval(x, t); };
    const auto plan = plan_timesteps(s, 150);
    const double shrink_first = l2_norm(integrate_plan(z, plan, eval, s, SolverOrder::first)) / l2_norm(z);
    const double shrink_mid = l2_norm(integrate_plan(z, plan, eval, s, SolverOrder::midpoint)) / l2_norm(z);
    CHECK(shrink_first < shrink_mid);
    CHECK(shrink_mid <= 1.0 + 1e-12);
}
