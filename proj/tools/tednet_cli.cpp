// Command-line front end: synthetic data generation, training, tiled
// denoising, metric evaluation, shape-plan inspection and gradient checks.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tednet/config_io.hpp"
#include "tednet/gradcheck.hpp"
#include "tednet/metrics.hpp"
#include "tednet/params_io.hpp"
#include "tednet/tiling.hpp"
#include "tednet/training.hpp"
#include "tednet/volume.hpp"

namespace {

using nlohmann::json;

struct GlobalArgs {
    std::string preset = "desk";
    std::string config_path;
    std::optional<std::uint64_t> seed;
    int threads = 0;
};

tednet::RunConfig resolve_config(const GlobalArgs& ga) {
    tednet::RunConfig cfg =
        tednet::load_run_config(tednet::parse_preset(ga.preset), ga.config_path);
    if (ga.seed.has_value()) {
        cfg.train.seed = *ga.seed;
        cfg.phantom.seed = *ga.seed;
    }
    if (ga.threads > 0) tednet::set_max_threads(ga.threads);
    return cfg;
}

int cmd_gen_data(const tednet::RunConfig& cfg, const std::string& out_prefix) {
    const auto [clean, noisy] = tednet::generate_phantoms(cfg.phantom);
    tednet::save_volume(out_prefix + ".clean.tdv", clean);
    tednet::save_volume(out_prefix + ".noisy.tdv", noisy);
    std::cout << "wrote " << out_prefix << ".clean.tdv and " << out_prefix << ".noisy.tdv ("
              << clean.count << " images of " << clean.width << "x" << clean.height << ")\n";
    return 0;
}

int cmd_train(const tednet::RunConfig& cfg, const std::string& in_prefix,
              const std::string& out_path, const std::string& log_path) {
    const tednet::ImageVolume clean = tednet::load_volume(in_prefix + ".clean.tdv");
    const tednet::ImageVolume noisy = tednet::load_volume(in_prefix + ".noisy.tdv");
    if (clean.count != noisy.count || clean.width != noisy.width ||
        clean.height != noisy.height)
        throw tednet::ShapeError("train: clean and noisy volumes disagree in layout");

    std::vector<tednet::ImagePair> images;
    images.reserve(clean.count);
    for (std::uint32_t i = 0; i < clean.count; ++i)
        images.push_back({noisy.slice(i), clean.slice(i)});

    std::ofstream log_file;
    std::ostream* log = &std::cout;
    if (!log_path.empty()) {
        log_file.open(log_path);
        if (!log_file) throw tednet::ConfigError("train: cannot open log file " + log_path);
        log = &log_file;
    }
    const tednet::TrainResult res = tednet::fit(images, cfg.model, cfg.train, log);
    tednet::save_params(out_path, res.params);
    std::cout << "trained " << res.steps_run << " steps, final loss "
              << (res.losses.empty() ? 0.0 : res.losses.back()) << ", params -> " << out_path
              << "\n";
    return 0;
}

int cmd_denoise(const tednet::RunConfig& cfg, const std::string& in_path,
                const std::string& params_path, const std::string& out_path) {
    const tednet::ImageVolume noisy = tednet::load_volume(in_path);
    const tednet::TedNetParams<float> params = tednet::load_params(params_path, cfg.model);
    const tednet::ImageVolume denoised = tednet::tile_denoise(noisy, params, cfg.model);
    tednet::save_volume(out_path, denoised);
    std::cout << "denoised " << noisy.count << " images -> " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& in_path, const std::string& ref_path,
             const std::string& out_path) {
    const tednet::ImageVolume probe = tednet::load_volume(in_path);
    const tednet::ImageVolume ref = tednet::load_volume(ref_path);
    if (probe.count != ref.count || probe.width != ref.width || probe.height != ref.height)
        throw tednet::ShapeError("eval: volumes disagree in layout");
    const double range = ref.hi - ref.lo;

    json per_image = json::array();
    double ssim_sum = 0.0, rmse_sum = 0.0;
    for (std::uint32_t i = 0; i < probe.count; ++i) {
        const tednet::MetricReport r =
            tednet::evaluate_pair(probe.slice(i), ref.slice(i), range);
        per_image.push_back({{"ssim", r.ssim}, {"rmse", r.rmse}, {"data_range", r.data_range}});
        ssim_sum += r.ssim;
        rmse_sum += r.rmse;
    }
    json report = {{"per_image", per_image},
                   {"mean",
                    {{"ssim", ssim_sum / probe.count}, {"rmse", rmse_sum / probe.count}}}};
    const std::string text = report.dump(2);
    std::cout << text << "\n";
    if (!out_path.empty()) {
        std::ofstream out(out_path);
        if (!out) throw tednet::ConfigError("eval: cannot open " + out_path);
        out << text << "\n";
    }
    return 0;
}

int cmd_shape_check(const tednet::RunConfig& cfg) {
    const tednet::ShapePlan plan = tednet::plan_shapes(cfg.model);
    std::cout << plan.table();
    std::cout << "parameters: " << tednet::expected_param_count(cfg.model) << "\n";
    return 0;
}

int cmd_gradcheck(const tednet::RunConfig& cfg) {
    const auto entries = tednet::run_gradient_checks(cfg.train.seed);
    bool ok = true;
    for (const auto& e : entries) {
        const bool pass = e.max_rel_err < tednet::kGradCheckTolerance;
        ok = ok && pass;
        std::printf("%-20s max rel err %.3e  %s\n", e.name.c_str(), e.max_rel_err,
                    pass ? "ok" : "FAIL");
    }
    if (!ok) {
        std::cerr << "gradient checks exceeded tolerance " << tednet::kGradCheckTolerance << "\n";
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"token-to-token transformer encoder-decoder for image denoising"};
    app.require_subcommand(1);

    GlobalArgs ga;
    app.add_option("--preset", ga.preset, "configuration preset: paper or desk")
        ->check(CLI::IsMember({"paper", "desk"}));
    app.add_option("--config", ga.config_path, "key=value configuration file");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "seed for all randomness");
    app.add_option("--threads", ga.threads, "worker thread cap (0 = auto)");

    auto* gen = app.add_subcommand("gen-data", "generate a paired clean/noisy phantom volume");
    std::string gen_out;
    gen->add_option("--out", gen_out, "output path prefix")->required();

    auto* train = app.add_subcommand("train", "fit parameters on a paired volume");
    std::string train_in, train_out, train_log;
    train->add_option("--in", train_in, "input path prefix (expects .clean.tdv/.noisy.tdv)")
        ->required();
    train->add_option("--out", train_out, "output parameter file")->required();
    train->add_option("--log", train_log, "write the per-epoch loss log here instead of stdout");

    auto* denoise = app.add_subcommand("denoise", "run tiled inference over a volume");
    std::string den_in, den_params, den_out;
    denoise->add_option("--in", den_in, "noisy input volume")->required();
    denoise->add_option("--params", den_params, "trained parameter file")->required();
    denoise->add_option("--out", den_out, "output volume")->required();

    auto* eval = app.add_subcommand("eval", "SSIM/RMSE of a volume against a reference");
    std::string eval_in, eval_ref, eval_out;
    eval->add_option("--in", eval_in, "volume under test")->required();
    eval->add_option("--ref", eval_ref, "reference volume")->required();
    eval->add_option("--out", eval_out, "also write the JSON report here");

    auto* shape = app.add_subcommand("shape-check", "print the stage shape plan");
    auto* gcheck = app.add_subcommand("gradcheck", "finite-difference gradient verification");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (seed_opt->count() > 0) ga.seed = seed_value;
        const tednet::RunConfig cfg = resolve_config(ga);
        if (gen->parsed()) return cmd_gen_data(cfg, gen_out);
        if (train->parsed()) return cmd_train(cfg, train_in, train_out, train_log);
        if (denoise->parsed()) return cmd_denoise(cfg, den_in, den_params, den_out);
        if (eval->parsed()) return cmd_eval(eval_in, eval_ref, eval_out);
        if (shape->parsed()) return cmd_shape_check(cfg);
        if (gcheck->parsed()) return cmd_gradcheck(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
