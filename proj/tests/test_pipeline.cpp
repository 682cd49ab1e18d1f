// End-to-end smoke of the command-line pipeline: gen-data -> train ->
// denoise -> eval on a tiny two-image dataset, checking that the denoised
// volume scores better than the noisy input.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "test_support.hpp"

using test_support::TempFile;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    TempFile capture("pipe_out");
    const std::string cmd =
        std::string(TEDNET_CLI_PATH) + " " + args + " > " + capture.path() + " 2>&1";
    const int rc = std::system(cmd.c_str());
    RunResult res;
    res.exit_code = WEXITSTATUS(rc);
    std::ifstream in(capture.path());
    std::stringstream ss;
    ss << in.rdbuf();
    res.out = ss.str();
    return res;
}

}  // namespace

TEST_CASE("gen-data, train, denoise, eval round trip improves the metrics") {
    TempFile cfg_file("pipeline_cfg");
    {
        std::ofstream cfg(cfg_file.path());
        cfg << "image_count = 2\n";
        cfg << "noise_sigma = 0.12\n";
        cfg << "learning_rate = 5e-4\n";
        cfg << "batch_size = 8\n";
        cfg << "max_steps = 250\n";
        cfg << "epochs = 100000\n";
    }
    const std::string base = "--preset desk --config " + cfg_file.path() + " --seed 77 ";

    TempFile data("pipeline_data");
    TempFile params("pipeline_params");
    TempFile denoised("pipeline_out");
    TempFile report_noisy("pipeline_noisy_json");
    TempFile report_out("pipeline_out_json");

    REQUIRE(run_cli(base + "gen-data --out " + data.path()).exit_code == 0);
    const std::string clean = data.path() + ".clean.tdv";
    const std::string noisy = data.path() + ".noisy.tdv";

    const RunResult train =
        run_cli(base + "train --in " + data.path() + " --out " + params.path());
    INFO(train.out);
    REQUIRE(train.exit_code == 0);

    REQUIRE(run_cli(base + "denoise --in " + noisy + " --params " + params.path() + " --out " +
                    denoised.path())
                .exit_code == 0);

    const RunResult noisy_eval = run_cli("eval --in " + noisy + " --ref " + clean + " --out " +
                                         report_noisy.path());
    REQUIRE(noisy_eval.exit_code == 0);
    const RunResult out_eval = run_cli("eval --in " + denoised.path() + " --ref " + clean +
                                       " --out " + report_out.path());
    REQUIRE(out_eval.exit_code == 0);

    const auto noisy_report = nlohmann::json::parse(noisy_eval.out);
    const auto out_report = nlohmann::json::parse(out_eval.out);
    const double ssim_noisy = noisy_report["mean"]["ssim"].get<double>();
    const double ssim_out = out_report["mean"]["ssim"].get<double>();
    const double rmse_noisy = noisy_report["mean"]["rmse"].get<double>();
    const double rmse_out = out_report["mean"]["rmse"].get<double>();
    INFO("ssim ", ssim_noisy, " -> ", ssim_out, "; rmse ", rmse_noisy, " -> ", rmse_out);
    CHECK(ssim_out > ssim_noisy);
    CHECK(rmse_out < rmse_noisy);

    for (const std::string& f : {clean, noisy}) std::remove(f.c_str());
}
