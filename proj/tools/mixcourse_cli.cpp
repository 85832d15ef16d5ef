// Command-line front end. Everything goes through the public C API: flags are
// assembled into the JSON config a command expects, and the summary JSON the
// command returns is printed to stdout. Exit codes mirror mxc_status.
#include "mixcourse/mixcourse.h"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

using nlohmann::json;

namespace {

using CommandFn = mxc_status (*)(const char *, char **);

struct PendingRun {
    CommandFn fn = nullptr;
    json cfg;
};

int execute(const PendingRun &run) {
    char *summary = nullptr;
    mxc_status st = run.fn(run.cfg.dump().c_str(), &summary);
    if (st != MXC_OK) {
        std::cerr << "error: " << mxc_last_error() << "\n";
        return static_cast<int>(st);
    }
    std::cout << summary << "\n";
    mxc_free_string(summary);
    return 0;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Longitudinal mixture estimation toolkit"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(mxc_version()));

    PendingRun run;

    // ------------------------------------------------------------- simulate
    {
        auto *cmd = app.add_subcommand(
            "simulate", "Generate synthetic replicate datasets from a preset");
        auto scenario = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto patients = std::make_shared<int>(0);
        auto replicates = std::make_shared<int>(1);
        auto workers = std::make_shared<int>(1);
        auto visits = std::make_shared<int>(0);
        auto noise = std::make_shared<double>(0.0);
        auto seed = std::make_shared<std::uint64_t>(0);
        cmd->add_option("--scenario", *scenario,
                        "Preset name (scenario_2_2, scenario_3_2, scenario_multi, "
                        "scenario_multi_lite)")
            ->required();
        cmd->add_option("--patients", *patients, "Patients per replicate")->required();
        cmd->add_option("--replicates", *replicates, "Number of replicates")->capture_default_str();
        cmd->add_option("--seed", *seed, "Master seed")->required();
        cmd->add_option("--out", *out, "Output directory")->required();
        auto *visits_opt = cmd->add_option("--visits", *visits, "Visits per patient");
        auto *noise_opt = cmd->add_option("--noise-sd", *noise, "Observation noise SD");
        auto position = std::make_shared<double>(0.0);
        auto velocity = std::make_shared<double>(0.0);
        auto *pos_opt = cmd->add_option(
            "--position", *position, "Override curve position p for every feature");
        auto *vel_opt = cmd->add_option(
            "--velocity", *velocity, "Override curve velocity v for every feature");
        cmd->add_option("--workers", *workers, "Parallel workers")->capture_default_str();
        cmd->callback([=, &run] {
            run.fn = &mxc_cmd_simulate;
            run.cfg = {{"scenario", *scenario}, {"patients", *patients},
                       {"replicates", *replicates}, {"seed", *seed},
                       {"out", *out},             {"workers", *workers}};
            if (visits_opt->count()) run.cfg["visits"] = *visits;
            if (noise_opt->count()) run.cfg["noise_sd"] = *noise;
            if (pos_opt->count()) run.cfg["position"] = *position;
            if (vel_opt->count()) run.cfg["velocity"] = *velocity;
        });
    }

    // ------------------------------------------------------------------ fit
    {
        auto *cmd = app.add_subcommand(
            "fit", "Estimate the mixture model on a dataset or replicate tree");
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto trace = std::make_shared<std::string>();
        auto clusters = std::make_shared<int>(0);
        auto sources = std::make_shared<int>(1);
        auto iters = std::make_shared<int>(1000);
        auto workers = std::make_shared<int>(1);
        auto burnin = std::make_shared<double>(0.9);
        auto seed = std::make_shared<std::uint64_t>(0);
        auto stochastic = std::make_shared<bool>(true);
        cmd->add_option("--data", *data, "data.csv, or a directory of replicates")
            ->required();
        cmd->add_option("--clusters", *clusters, "Number of clusters")->required();
        cmd->add_option("--sources", *sources, "Number of sources")->capture_default_str();
        cmd->add_option("--iters", *iters, "Sampler iterations")->capture_default_str();
        cmd->add_option("--burnin", *burnin, "Burn-in fraction")->capture_default_str();
        cmd->add_option("--seed", *seed, "Master seed")->required();
        cmd->add_option("--out", *out, "Output directory")->required();
        cmd->add_option("--trace", *trace,
                        "Trace CSV path (per-replicate trace.csv in tree mode)");
        cmd->add_flag("--stochastic-indicators,!--argmax-indicators", *stochastic,
                      "Sample cluster indicators (default); --argmax-indicators "
                      "uses the hard refresh");
        cmd->add_option("--workers", *workers, "Parallel workers")->capture_default_str();
        cmd->callback([=, &run] {
            run.fn = &mxc_cmd_fit;
            run.cfg = {{"data", *data},       {"clusters", *clusters},
                       {"sources", *sources}, {"iters", *iters},
                       {"burnin", *burnin},   {"seed", *seed},
                       {"out", *out},         {"workers", *workers},
                       {"stochastic_indicators", *stochastic}};
            if (!trace->empty()) run.cfg["trace"] = *trace;
        });
    }

    // ---------------------------------------------------------- personalize
    {
        auto *cmd = app.add_subcommand(
            "personalize", "Estimate individual latents under a fitted model");
        auto model = std::make_shared<std::string>();
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto iters = std::make_shared<int>(2000);
        auto seed = std::make_shared<std::uint64_t>(0);
        cmd->add_option("--model", *model, "model.json from fit")->required();
        cmd->add_option("--data", *data, "data.csv with new patients")->required();
        cmd->add_option("--out", *out, "Output directory")->required();
        cmd->add_option("--seed", *seed, "Sampler seed")->capture_default_str();
        cmd->add_option("--iters", *iters, "Sampler iterations")->capture_default_str();
        cmd->callback([=, &run] {
            run.fn = &mxc_cmd_personalize;
            run.cfg = {{"model", *model}, {"data", *data}, {"out", *out},
                       {"seed", *seed},   {"iters", *iters}};
        });
    }

    // ----------------------------------------------------- classify-posthoc
    {
        auto *cmd = app.add_subcommand(
            "classify-posthoc",
            "Two-stage baseline: one-cluster fit, then a Gaussian mixture");
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto clusters = std::make_shared<int>(0);
        auto sources = std::make_shared<int>(1);
        auto iters = std::make_shared<int>(1000);
        auto workers = std::make_shared<int>(1);
        auto gmm_inits = std::make_shared<int>(10);
        auto burnin = std::make_shared<double>(0.9);
        auto seed = std::make_shared<std::uint64_t>(0);
        cmd->add_option("--data", *data, "data.csv, or a directory of replicates")
            ->required();
        cmd->add_option("--clusters", *clusters, "Number of clusters")->required();
        cmd->add_option("--sources", *sources, "Number of sources")->capture_default_str();
        cmd->add_option("--iters", *iters, "Stage-one sampler iterations")->capture_default_str();
        cmd->add_option("--burnin", *burnin, "Burn-in fraction")->capture_default_str();
        cmd->add_option("--seed", *seed, "Master seed")->required();
        cmd->add_option("--out", *out, "Output directory")->required();
        cmd->add_option("--gmm-inits", *gmm_inits, "Mixture EM restarts")->capture_default_str();
        cmd->add_option("--workers", *workers, "Parallel workers")->capture_default_str();
        cmd->callback([=, &run] {
            run.fn = &mxc_cmd_classify_posthoc;
            run.cfg = {{"data", *data},       {"clusters", *clusters},
                       {"sources", *sources}, {"iters", *iters},
                       {"burnin", *burnin},   {"seed", *seed},
                       {"out", *out},         {"workers", *workers},
                       {"gmm_inits", *gmm_inits}};
        });
    }

    // ------------------------------------------------------------- evaluate
    {
        auto *cmd = app.add_subcommand(
            "evaluate", "Score fitted replicates against simulation truth");
        auto truth = std::make_shared<std::string>();
        auto fits = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        cmd->add_option("--truth", *truth, "Simulation output directory")->required();
        cmd->add_option("--fits", *fits, "Fit output directory")->required();
        cmd->add_option("--out", *out, "Output directory")->required();
        cmd->callback([=, &run] {
            run.fn = &mxc_cmd_evaluate;
            run.cfg = {{"truth", *truth}, {"fits", *fits}, {"out", *out}};
        });
    }

    // --------------------------------------------------------------- select
    {
        auto *cmd = app.add_subcommand(
            "select", "Fit candidate cluster counts and rank them by ICL");
        auto data = std::make_shared<std::string>();
        auto out = std::make_shared<std::string>();
        auto candidates = std::make_shared<std::vector<int>>();
        auto sources = std::make_shared<int>(1);
        auto iters = std::make_shared<int>(1000);
        auto workers = std::make_shared<int>(1);
        auto burnin = std::make_shared<double>(0.9);
        auto seed = std::make_shared<std::uint64_t>(0);
        cmd->add_option("--data", *data, "data.csv, or a directory of replicates")
            ->required();
        cmd->add_option("--candidates", *candidates, "Cluster counts to try")
            ->required()
            ->delimiter(',');
        cmd->add_option("--sources", *sources, "Number of sources")->capture_default_str();
        cmd->add_option("--iters", *iters, "Sampler iterations")->capture_default_str();
        cmd->add_option("--burnin", *burnin, "Burn-in fraction")->capture_default_str();
        cmd->add_option("--seed", *seed, "Master seed")->required();
        cmd->add_option("--out", *out, "Output directory")->required();
        cmd->add_option("--workers", *workers, "Parallel workers")->capture_default_str();
        cmd->callback([=, &run] {
            run.fn = &mxc_cmd_select;
            run.cfg = {{"data", *data},       {"candidates", *candidates},
                       {"sources", *sources}, {"iters", *iters},
                       {"burnin", *burnin},   {"seed", *seed},
                       {"out", *out},         {"workers", *workers}};
        });
    }

    CLI11_PARSE(app, argc, argv);
    return execute(run);
}
