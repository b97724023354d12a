#include <fstream>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "vedit/binary_io.hpp"
#include "vedit/pipeline.hpp"
#include "vedit/tensor_io.hpp"

using namespace vedit;
namespace fs = std::filesystem;

namespace {

PipelineConfig small_config(const fs::path& dir) {
    PipelineConfig c;
    c.set("steps", "20");
    c.set("inject", "4");
    c.set("blocks", "2");
    c.set("num_blocks", "4");
    c.set("model_dim", "16");
    c.set("heads", "2");
    c.set("token_patch", "2");
    c.set("channels", "3");
    c.set("frames", "3");
    c.set("latent_height", "4");
    c.set("latent_width", "4");
    c.in = dir / "zT.lat";
    c.out = dir / "zT.lat";
    c.cache = dir / "values.vch";
    return c;
}

std::uint64_t file_hash(const fs::path& p) {
    const auto b = read_file(p);
    return fnv1a64(std::as_bytes(std::span(b)));
}

int run(const std::string& cmd, const PipelineConfig& c) {
    std::ostringstream log, err;
    return run_command(cmd, c, log, err);
}

}  // namespace

TEST_CASE("config keys and values") {
    PipelineConfig c;
    c.set("steps", "40");
    c.set("order", "avg2");
    c.set("guidance", "2.5");
    c.set("source_prompt", "\"lens  capsule\"");
    c.set("capture", "12");
    c.set("metrics", "false");
    c.set("convergence_steps", "5, 10,20");
    CHECK(c.edit.num_steps == 40);
    CHECK(c.edit.order == SolverOrder::avg2);
    CHECK(c.edit.omega == 2.5);
    CHECK(c.source_prompt == "lens  capsule");
    CHECK(c.edit.capture_steps() == 12);
    CHECK_FALSE(c.metrics);
    CHECK(c.convergence_steps == std::vector<int>{5, 10, 20});
    CHECK_THROWS_AS(c.set("stepz", "1"), Error);
    CHECK_THROWS_AS(c.set("steps", "12x"), Error);
    CHECK_THROWS_AS(c.set("guidance", ""), Error);
    CHECK_THROWS_AS(c.set("metrics", "maybe"), Error);
    for (const auto& key : config_keys()) CHECK_NOTHROW(PipelineConfig{}.set(key, key == "order" ? "first" : "1"));
}

TEST_CASE("config file") {
    const auto dir = testing::scratch_dir("config");
    {
        std::ofstream f(dir / "run.cfg");
        f << "# experiment\n\nsteps = 30   # fewer\ninject=3\n target_prompt = \"a # b\"\n";
    }
    PipelineConfig c;
    c.apply_file(dir / "run.cfg");
    CHECK(c.edit.num_steps == 30);
    CHECK(c.edit.n_inject == 3);
    CHECK(c.target_prompt == "a # b");

    {
        std::ofstream f(dir / "bad.cfg");
        f << "steps = 30\nwidth = 3\n";
    }
    try {
        PipelineConfig{}.apply_file(dir / "bad.cfg");
        FAIL("unknown key accepted");
    } catch (const Error& e) {
        CHECK(std::string(e.what()).find(":2:") != std::string::npos);
        CHECK(exit_code_for(e.kind()) == 2);
    }
    {
        std::ofstream f(dir / "noeq.cfg");
        f << "steps 30\n";
    }
    CHECK_THROWS_AS(PipelineConfig{}.apply_file(dir / "noeq.cfg"), Error);
    CHECK_THROWS_AS(PipelineConfig{}.apply_file(dir / "absent.cfg"), Error);
}

TEST_CASE("config validation") {
    PipelineConfig c;
    CHECK_NOTHROW(c.validate());
    c.latent_height = 6;
    CHECK_THROWS_AS(c.validate(), Error);
    c = PipelineConfig{};
    c.edit.num_steps = 1001;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("invert, edit and reconstruct") {
    const auto dir = testing::scratch_dir("pipeline");
    PipelineConfig c = small_config(dir);
    c.in.clear();
    REQUIRE(run("invert", c) == 0);
    CHECK(load_cache(c.cache).size() == 4 * 2 * 2);
    CHECK(fs::exists(report_path(c.out)));
    {
        std::ifstream r(report_path(c.out));
        std::stringstream ss;
        ss << r.rdbuf();
        CHECK(ss.str().find("store_count = 16") != std::string::npos);
    }
    const auto zT_hash = file_hash(c.out), cache_hash = file_hash(c.cache);

    SUBCASE("rerun is bitwise identical") {
        REQUIRE(run("invert", c) == 0);
        CHECK(file_hash(c.out) == zT_hash);
        CHECK(file_hash(c.cache) == cache_hash);
    }

    PipelineConfig e = small_config(dir);
    e.out = dir / "edit.lat";

    SUBCASE("edit writes its artifacts and leaves inputs alone") {
        REQUIRE(run("edit", e) == 0);
        CHECK(file_hash(e.in) == zT_hash);
        CHECK(file_hash(e.cache) == cache_hash);
        CHECK(load_tensor(e.out).shape() == Shape{3, 3, 4, 4});
        CHECK(fs::exists(frames_dir(e.out) / "frame_0002.ppm"));
        CHECK(fs::exists(metrics_path(e.out)));
        const auto first = file_hash(e.out);
        REQUIRE(run("edit", e) == 0);
        CHECK(file_hash(e.out) == first);
    }
    SUBCASE("edit refuses to overwrite its input") {
        e.out = e.in;
        CHECK(run("edit", e) == 2);
        CHECK(file_hash(e.in) == zT_hash);
    }
    SUBCASE("reconstruction round trip") {
        e.out = dir / "rec.lat";
        REQUIRE(run("reconstruct", e) == 0);
        const Latent z0 = encode_video(make_synthetic_video(c.synthetic_spec()), c.denoiser);
        CHECK(relative_mse(load_tensor(e.out), z0) <= 1e-4);
    }
    SUBCASE("full injection differs from reconstruction and from a plain edit") {
        PipelineConfig full = small_config(dir);
        full.set("inject", "20");
        full.in.clear();
        full.out = dir / "full_zT.lat";
        full.cache = dir / "full.vch";
        REQUIRE(run("invert", full) == 0);
        full.in = full.out;
        full.out = dir / "full_edit.lat";
        REQUIRE(run("edit", full) == 0);
        PipelineConfig plain = full;
        plain.set("inject", "0");
        plain.out = dir / "plain_edit.lat";
        REQUIRE(run("edit", plain) == 0);
        PipelineConfig rec = full;
        rec.out = dir / "rec_full.lat";
        REQUIRE(run("reconstruct", rec) == 0);
        const Tensor a = load_tensor(full.out);
        CHECK(max_abs_diff(a, load_tensor(plain.out)) > 0.0);
        CHECK(max_abs_diff(a, load_tensor(rec.out)) > 0.0);
    }
    SUBCASE("incompatible cache and override") {
        e.set("steps", "24");
        CHECK(run("edit", e) == 5);
        CHECK_FALSE(fs::exists(e.out));
        PipelineConfig other = small_config(dir);
        other.out = dir / "other.lat";
        other.source_prompt = "some other source";
        CHECK(run("edit", other) == 5);
        other.force_incompatible_cache = true;
        CHECK(run("edit", other) == 0);
    }
    SUBCASE("capture disabled still writes a valid cache") {
        PipelineConfig none = small_config(dir);
        none.in.clear();
        none.set("inject", "0");
        none.set("capture", "0");
        none.out = dir / "none_zT.lat";
        none.cache = dir / "none.vch";
        REQUIRE(run("invert", none) == 0);
        CHECK(load_cache(none.cache).empty());
    }
}

TEST_CASE("paths are validated before computing") {
    const auto dir = testing::scratch_dir("paths");
    PipelineConfig c = small_config(dir);
    c.in = dir / "missing.lat";
    c.out = dir / "out.lat";
    CHECK(run("edit", c) == 3);
    CHECK(run("reconstruct", c) == 3);
    CHECK(run("invert", c) == 3);
    c.in.clear();
    c.out = dir / "no_such_dir" / "z.lat";
    CHECK(run("invert", c) == 3);
    c.out.clear();
    CHECK(run("invert", c) == 2);
    CHECK(run("nonsense", c) == 2);
    CHECK(fs::is_empty(dir));
}

TEST_CASE("corrupt inputs are format errors") {
    const auto dir = testing::scratch_dir("corrupt");
    PipelineConfig c = small_config(dir);
    c.in.clear();
    REQUIRE(run("invert", c) == 0);
    auto bytes = read_file(c.cache);
    bytes.resize(bytes.size() - 9);
    write_file(c.cache, bytes);
    PipelineConfig e = small_config(dir);
    e.out = dir / "e.lat";
    CHECK(run("edit", e) == 3);
}

TEST_CASE("synth, metrics and convergence commands") {
    const auto dir = testing::scratch_dir("commands");
    PipelineConfig c = small_config(dir);
    c.out = dir / "video.lat";
    REQUIRE(run("synth", c) == 0);
    CHECK(load_tensor(c.out).shape() == Shape{3, 3, 16, 16});

    PipelineConfig m;
    m.in = dir / "video.lat";
    m.reference = dir / "video.lat";
    m.out = dir / "m.txt";
    REQUIRE(run("metrics", m) == 0);
    const auto text = read_file(m.out);
    const std::string s(text.begin(), text.end());
    CHECK(s.find("mse = 0\n") != std::string::npos);
    CHECK(s.find("temporal_flicker = 0\n") != std::string::npos);

    PipelineConfig conv;
    conv.out = dir / "conv.csv";
    std::ostringstream log, err;
    REQUIRE(run_command("convergence", conv, log, err) == 0);
    const auto csv = read_file(conv.out);
    const std::string cs(csv.begin(), csv.end());
    CHECK(cs.rfind("steps,first_error,midpoint_error,avg2_error\n10,", 0) == 0);
    CHECK(cs.find("\nslope,") != std::string::npos);
    CHECK(log.str() == cs);
}
