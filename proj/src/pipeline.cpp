#include "vedit/pipeline.hpp"

#include <charconv>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "vedit/binary_io.hpp"
#include "vedit/oracle.hpp"
#include "vedit/tensor_io.hpp"

namespace fs = std::filesystem;

namespace vedit {
namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(first, last - first + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
    T out{};
    const char* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc{} || ptr != end) fail(ErrorKind::invalid_argument, "bad value for " + key + ": '" + value + "'");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    fail(ErrorKind::invalid_argument, "bad boolean for " + key + ": '" + value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
    std::vector<int> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_number<int>(key, trim(item)));
    require(!out.empty(), ErrorKind::invalid_argument, key + " must list at least one value");
    return out;
}

void require_input(const fs::path& p, const std::string& what) {
    require(!p.empty(), ErrorKind::invalid_argument, what + " path is required");
    require(fs::exists(p), ErrorKind::io, what + " not found: " + p.string());
}

void require_output(const fs::path& p, const std::string& what) {
    require(!p.empty(), ErrorKind::invalid_argument, what + " path is required");
    const fs::path parent = p.parent_path();
    require(parent.empty() || fs::is_directory(parent), ErrorKind::io,
            what + " directory does not exist: " + parent.string());
    require(!fs::is_directory(p), ErrorKind::io, what + " is a directory: " + p.string());
}

void require_distinct(const fs::path& out, const fs::path& input, const std::string& what) {
    if (input.empty() || !fs::exists(input) || !fs::exists(out)) return;
    require(!fs::equivalent(out, input), ErrorKind::invalid_argument, "output would overwrite the " + what);
}

void write_text(const fs::path& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

// A pixel video from a LAT1 file or a directory of exported frames.
Video load_video(const fs::path& p) {
    if (fs::is_directory(p)) return import_frames(p);
    return load_tensor(p);
}

Video source_video(const PipelineConfig& cfg) {
    if (!cfg.reference.empty()) return load_video(cfg.reference);
    return make_synthetic_video(cfg.synthetic_spec());
}

Denoiser make_model(const PipelineConfig& cfg, std::size_t channels, const NoiseSchedule& schedule) {
    DenoiserConfig dc = cfg.denoiser;
    dc.channels = static_cast<int>(channels);
    return Denoiser(dc, schedule);
}

void require_latent(const Tensor& z, const std::string& what) {
    require(z.rank() == 4, ErrorKind::shape_mismatch,
            what + " must be (frames, channels, height, width), got " + shape_string(z.shape()));
}

std::string format_report(const std::string& command, const PipelineConfig& cfg, const TrajectoryReport& report,
                          const std::vector<std::pair<std::string, std::string>>& extra) {
    std::ostringstream os;
    os << std::setprecision(17);
    os << "command = " << command << "\n"
       << "steps = " << cfg.edit.num_steps << "\n"
       << "order = " << to_string(cfg.edit.order) << "\n"
       << "inject = " << cfg.edit.n_inject << "\n"
       << "capture = " << cfg.edit.capture_steps() << "\n"
       << "blocks = " << cfg.edit.capture_blocks << "\n"
       << "guidance = " << cfg.edit.omega << "\n"
       << "store_count = " << report.store_count << "\n"
       << "fetch_count = " << report.fetch_count << "\n";
    for (const auto& [k, v] : extra) os << k << " = " << v << "\n";
    os << "# step substep timestep latent_norm captured injected fetches\n";
    for (const auto& r : report.records) {
        os << r.step << ' ' << to_string(r.substep) << ' ' << r.timestep << ' ' << r.latent_norm << ' '
           << r.captured << ' ' << r.injected << ' ' << r.fetches << "\n";
    }
    return os.str();
}

std::string number(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

// Decodes, exports frames and scores against the source video.
void finish_denoised(const PipelineConfig& cfg, const Latent& z0, const DenoiserConfig& dc, std::ostream& log) {
    const Video decoded = decode_latent(z0, dc);
    std::optional<MetricsReport> metrics;
    if (cfg.metrics) metrics = compute_metrics(decoded, source_video(cfg));

    save_tensor(z0, cfg.out);
    export_frames(decoded, frames_dir(cfg.out));
    if (metrics) {
        const std::string text = metrics->to_text();
        write_text(metrics_path(cfg.out), text);
        log << text;
    }
}

}  // namespace

void PipelineConfig::set(const std::string& key, const std::string& raw) {
    std::string value = trim(raw);
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);

    if (key == "steps") edit.num_steps = parse_number<int>(key, value);
    else if (key == "inject") edit.n_inject = parse_number<int>(key, value);
    else if (key == "capture") edit.n_capture = parse_number<int>(key, value);
    else if (key == "blocks") edit.capture_blocks = parse_number<int>(key, value);
    else if (key == "guidance") edit.omega = parse_number<double>(key, value);
    else if (key == "order") edit.order = parse_order(value);
    else if (key == "noise_seed") edit.noise_seed = parse_number<std::uint64_t>(key, value);
    else if (key == "num_blocks") denoiser.num_blocks = parse_number<int>(key, value);
    else if (key == "model_dim") denoiser.model_dim = parse_number<int>(key, value);
    else if (key == "heads") denoiser.heads = parse_number<int>(key, value);
    else if (key == "patch_size") denoiser.patch_size = parse_number<int>(key, value);
    else if (key == "token_patch") denoiser.token_patch = parse_number<int>(key, value);
    else if (key == "channels") denoiser.channels = parse_number<int>(key, value);
    else if (key == "output_gain") denoiser.output_gain = parse_number<double>(key, value);
    else if (key == "model_seed") denoiser.seed = parse_number<std::uint64_t>(key, value);
    else if (key == "train_steps") train_steps = parse_number<int>(key, value);
    else if (key == "beta_start") beta_start = parse_number<double>(key, value);
    else if (key == "beta_end") beta_end = parse_number<double>(key, value);
    else if (key == "frames") frames = parse_number<int>(key, value);
    else if (key == "latent_height") latent_height = parse_number<int>(key, value);
    else if (key == "latent_width") latent_width = parse_number<int>(key, value);
    else if (key == "velocity_x") velocity_x = parse_number<double>(key, value);
    else if (key == "velocity_y") velocity_y = parse_number<double>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "source_prompt") source_prompt = value;
    else if (key == "target_prompt") target_prompt = value;
    else if (key == "in") in = value;
    else if (key == "out") out = value;
    else if (key == "cache") cache = value;
    else if (key == "reference") reference = value;
    else if (key == "metrics") metrics = parse_bool(key, value);
    else if (key == "force_incompatible_cache") force_incompatible_cache = parse_bool(key, value);
    else if (key == "oracle_kappa") oracle_kappa = parse_number<int>(key, value);
    else if (key == "oracle_offset") oracle_offset = parse_number<double>(key, value);
    else if (key == "convergence_steps") convergence_steps = parse_int_list(key, value);
    else fail(ErrorKind::invalid_argument, "unknown config key '" + key + "'");
}

std::vector<std::string> config_keys() {
    return {"steps",         "inject",        "capture",       "blocks",       "guidance",
            "order",         "noise_seed",    "num_blocks",    "model_dim",    "heads",
            "patch_size",    "token_patch",   "channels",      "output_gain",  "model_seed",
            "train_steps",   "beta_start",    "beta_end",      "frames",       "latent_height",
            "latent_width",  "velocity_x",    "velocity_y",    "seed",         "source_prompt",
            "target_prompt", "in",            "out",           "cache",        "reference",
            "metrics",       "force_incompatible_cache",       "oracle_kappa", "oracle_offset",
            "convergence_steps"};
}

void PipelineConfig::apply_file(const fs::path& path) {
    std::ifstream in_file(path);
    require(static_cast<bool>(in_file), ErrorKind::io, "cannot open config " + path.string());
    std::string line;
    int line_no = 0;
    while (std::getline(in_file, line)) {
        ++line_no;
        // '#' starts a comment unless it sits inside a quoted value.
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line.resize(i);
                break;
            }
        }
        const std::string text = trim(line);
        if (text.empty()) continue;
        const auto eq = text.find('=');
        require(eq != std::string::npos, ErrorKind::invalid_argument,
                path.string() + ":" + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(std::string_view(text).substr(0, eq));
        try {
            set(key, text.substr(eq + 1));
        } catch (const Error& e) {
            fail(e.kind(), path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
}

void PipelineConfig::validate() const {
    denoiser.validate();
    edit.validate(denoiser.num_blocks);
    require(train_steps >= 2, ErrorKind::invalid_argument, "train_steps must be at least 2");
    require(beta_start > 0 && beta_end < 1 && beta_start <= beta_end, ErrorKind::invalid_argument,
            "betas must satisfy 0 < beta_start <= beta_end < 1");
    require(frames >= 1 && latent_height >= 1 && latent_width >= 1, ErrorKind::invalid_argument,
            "frames and latent size must be positive");
    require(latent_height % denoiser.token_patch == 0 && latent_width % denoiser.token_patch == 0,
            ErrorKind::invalid_argument, "latent size must be a multiple of token_patch");
    require(edit.num_steps <= train_steps, ErrorKind::invalid_argument, "steps cannot exceed train_steps");
}

SyntheticVideoSpec PipelineConfig::synthetic_spec() const {
    SyntheticVideoSpec spec;
    spec.frames = frames;
    spec.channels = denoiser.channels;
    spec.height = latent_height * denoiser.patch_size;
    spec.width = latent_width * denoiser.patch_size;
    spec.velocity_x = velocity_x;
    spec.velocity_y = velocity_y;
    spec.seed = seed;
    return spec;
}

NoiseSchedule PipelineConfig::make_schedule() const { return build_schedule(train_steps, beta_start, beta_end); }

fs::path report_path(const fs::path& out) { return fs::path(out.string() + ".report.txt"); }
fs::path frames_dir(const fs::path& out) { return fs::path(out.string() + ".frames"); }
fs::path metrics_path(const fs::path& out) { return fs::path(out.string() + ".metrics.txt"); }

void cmd_synth(const PipelineConfig& cfg, std::ostream& log) {
    cfg.validate();
    require_output(cfg.out, "output");
    const Video video = make_synthetic_video(cfg.synthetic_spec());
    save_tensor(video, cfg.out);
    log << "wrote " << shape_string(video.shape()) << " video to " << cfg.out.string() << "\n";
}

void cmd_invert(const PipelineConfig& cfg, std::ostream& log) {
    cfg.validate();
    if (!cfg.in.empty()) require_input(cfg.in, "input video");
    require_output(cfg.out, "output latent");
    require_output(cfg.cache, "cache");
    require(cfg.out != cfg.cache, ErrorKind::invalid_argument, "latent and cache outputs must differ");

    const Video video = cfg.in.empty() ? make_synthetic_video(cfg.synthetic_spec()) : load_video(cfg.in);
    require_latent(video, "input video");
    const NoiseSchedule schedule = cfg.make_schedule();
    const Denoiser model = make_model(cfg, video.dim(1), schedule);
    const Latent z0 = encode_video(video, model.config());
    const PromptEmbedding source = embed_prompt(cfg.source_prompt, model.config());

    const InversionResult inv = invert(z0, source, cfg.edit, schedule, model);

    save_tensor(inv.z_T, cfg.out);
    save_cache(inv.cache, cfg.cache);
    write_text(report_path(cfg.out),
               format_report("invert", cfg, inv.report,
                             {{"cache_records", std::to_string(inv.cache.size())},
                              {"z0_norm", number(l2_norm(z0))},
                              {"zT_norm", number(l2_norm(inv.z_T))}}));
    log << "inverted " << shape_string(z0.shape()) << " latent in " << cfg.edit.num_steps << " steps, stored "
        << inv.cache.size() << " value records\n";
}

void cmd_edit(const PipelineConfig& cfg, std::ostream& log) {
    cfg.validate();
    require_input(cfg.in, "noise latent");
    if (cfg.edit.n_inject > 0) require_input(cfg.cache, "cache");
    if (cfg.metrics && !cfg.reference.empty()) require_input(cfg.reference, "reference video");
    require_output(cfg.out, "output latent");
    require_distinct(cfg.out, cfg.in, "input latent");
    require_distinct(cfg.out, cfg.cache, "cache");

    const Latent z_T = load_tensor(cfg.in);
    require_latent(z_T, "noise latent");
    const ValueCache cache = cfg.edit.n_inject > 0 ? load_cache(cfg.cache) : ValueCache{};
    const NoiseSchedule schedule = cfg.make_schedule();
    const Denoiser model = make_model(cfg, z_T.dim(1), schedule);
    const PromptEmbedding target = embed_prompt(cfg.target_prompt, model.config());

    EditOptions options;
    options.allow_incompatible_cache = cfg.force_incompatible_cache;
    options.source_prompt_hash = embed_prompt(cfg.source_prompt, model.config()).hash();
    const EditResult res = edit_denoise(z_T, target, cache, cfg.edit, schedule, model, options);
    for (const auto& w : res.warnings) log << "warning: " << w << "\n";

    finish_denoised(cfg, res.z0, model.config(), log);
    write_text(report_path(cfg.out), format_report("edit", cfg, res.report, {{"z0_norm", number(l2_norm(res.z0))}}));
    log << "edited latent written to " << cfg.out.string() << " (" << res.report.fetch_count << " cache fetches)\n";
}

void cmd_reconstruct(const PipelineConfig& cfg, std::ostream& log) {
    cfg.validate();
    require_input(cfg.in, "noise latent");
    if (cfg.metrics && !cfg.reference.empty()) require_input(cfg.reference, "reference video");
    require_output(cfg.out, "output latent");
    require_distinct(cfg.out, cfg.in, "input latent");

    const Latent z_T = load_tensor(cfg.in);
    require_latent(z_T, "noise latent");
    const NoiseSchedule schedule = cfg.make_schedule();
    const Denoiser model = make_model(cfg, z_T.dim(1), schedule);
    const PromptEmbedding source = embed_prompt(cfg.source_prompt, model.config());

    const Latent z0 = reconstruct(z_T, source, cfg.edit, schedule, model);
    finish_denoised(cfg, z0, model.config(), log);
    log << "reconstructed latent written to " << cfg.out.string() << "\n";
}

void cmd_metrics(const PipelineConfig& cfg, std::ostream& log) {
    require_input(cfg.in, "video");
    require_input(cfg.reference, "reference video");
    if (!cfg.out.empty()) require_output(cfg.out, "metrics output");
    const MetricsReport report = compute_metrics(load_video(cfg.in), load_video(cfg.reference));
    const std::string text = report.to_text();
    if (!cfg.out.empty()) write_text(cfg.out, text);
    log << text;
}

void cmd_convergence(const PipelineConfig& cfg, std::ostream& log) {
    require(cfg.train_steps >= 2, ErrorKind::invalid_argument, "train_steps must be at least 2");
    if (!cfg.out.empty()) require_output(cfg.out, "convergence output");
    const ConvergenceStudy study =
        run_convergence_study(cfg.make_schedule(), cfg.convergence_steps, cfg.oracle_kappa, cfg.oracle_offset);

    std::ostringstream os;
    os << std::setprecision(17);
    os << "steps,first_error,midpoint_error,avg2_error\n";
    for (const auto& r : study.rows)
        os << r.steps << ',' << r.error_first << ',' << r.error_midpoint << ',' << r.error_avg2 << "\n";
    os << "slope," << study.slope_first << ',' << study.slope_midpoint << ',' << study.slope_avg2 << "\n";
    if (!cfg.out.empty()) write_text(cfg.out, os.str());
    log << os.str();
}

int run_command(const std::string& name, const PipelineConfig& cfg, std::ostream& log, std::ostream& err) {
    try {
        if (name == "synth") cmd_synth(cfg, log);
        else if (name == "invert") cmd_invert(cfg, log);
        else if (name == "edit") cmd_edit(cfg, log);
        else if (name == "reconstruct") cmd_reconstruct(cfg, log);
        else if (name == "metrics") cmd_metrics(cfg, log);
        else if (name == "convergence") cmd_convergence(cfg, log);
        else fail(ErrorKind::invalid_argument, "unknown command '" + name + "'");
        return 0;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace vedit
