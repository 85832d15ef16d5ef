#pragma once

#include "mixcourse/saem.hpp"

#include <nlohmann/json.hpp>

#include <functional>
#include <string>
#include <vector>

namespace mixcourse {

// File-level commands behind the public API: each takes a JSON config object
// and returns a JSON summary. Paths in the config are plain filesystem paths;
// all outputs are written atomically. Config keys are documented in the
// README; unknown keys are rejected so typos fail loudly.
nlohmann::json cmd_simulate(const nlohmann::json &cfg);
nlohmann::json cmd_fit(const nlohmann::json &cfg);
nlohmann::json cmd_personalize(const nlohmann::json &cfg);
nlohmann::json cmd_classify_posthoc(const nlohmann::json &cfg);
nlohmann::json cmd_evaluate(const nlohmann::json &cfg);
nlohmann::json cmd_select(const nlohmann::json &cfg);

// Cluster-level summary of a fitted model (proportions, centers, shifts,
// criterion values) as embedded in command summaries.
nlohmann::json model_summary(const FittedModel &model);

// Replicate subdirectories (rep000, rep001, ...) under a root containing
// data.csv each; a root with a top-level data.csv is a single replicate
// denoted by the empty relative path.
std::vector<std::string> discover_replicates(const std::string &root);

// Runs fn(0..n_tasks-1) on a pool of `workers` threads; rethrows the first
// captured exception after all workers finish. Results must not depend on
// scheduling; tasks write disjoint outputs and use derived RNG streams.
void run_parallel(int n_tasks, int workers, const std::function<void(int)> &fn);

} // namespace mixcourse
