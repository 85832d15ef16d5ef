#include "mixcourse/pipeline.hpp"

#include "mixcourse/evaluation.hpp"
#include "mixcourse/io.hpp"
#include "mixcourse/log.hpp"
#include "mixcourse/posthoc.hpp"
#include "mixcourse/simulator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <mutex>
#include <thread>
#include <unordered_map>

namespace fs = std::filesystem;
using nlohmann::json;

namespace mixcourse {

// ------------------------------------------------------------- config helpers

namespace {

void check_keys(const json &cfg, std::initializer_list<const char *> allowed,
                const char *cmd) {
    if (!cfg.is_object())
        throw InputError(std::string(cmd) + ": config must be a JSON object");
    for (auto it = cfg.begin(); it != cfg.end(); ++it) {
        bool ok = false;
        for (const char *k : allowed)
            if (it.key() == k) {
                ok = true;
                break;
            }
        if (!ok)
            throw InputError(std::string(cmd) + ": unknown config key '" +
                             it.key() + "'");
    }
}

const json &require_key(const json &cfg, const char *key, const char *cmd) {
    auto it = cfg.find(key);
    if (it == cfg.end())
        throw InputError(std::string(cmd) + ": missing config key '" + key + "'");
    return *it;
}

template <typename T> T get_or(const json &cfg, const char *key, T def) {
    auto it = cfg.find(key);
    if (it == cfg.end()) return def;
    return it->get<T>();
}

std::string rep_name(int r) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "rep%03d", r);
    return buf;
}

std::string join(const std::string &a, const std::string &b) {
    if (a.empty()) return b;
    if (b.empty()) return a;
    return (fs::path(a) / b).string();
}

// Dataset roots accepted by fit-like commands: a CSV file, a directory with
// data.csv, or a directory of rep*/data.csv.
struct DataLayout {
    std::vector<std::string> reps;     // "" for single
    std::vector<std::string> datasets; // csv paths, parallel to reps
};

DataLayout resolve_data(const std::string &data, const char *cmd) {
    DataLayout out;
    if (fs::is_regular_file(data)) {
        out.reps.push_back("");
        out.datasets.push_back(data);
        return out;
    }
    if (fs::is_directory(data)) {
        if (fs::is_regular_file(fs::path(data) / "data.csv")) {
            out.reps.push_back("");
            out.datasets.push_back((fs::path(data) / "data.csv").string());
            return out;
        }
        std::vector<std::string> reps = discover_replicates(data);
        for (const std::string &r : reps) {
            fs::path csv = fs::path(data) / r / "data.csv";
            if (fs::is_regular_file(csv)) {
                out.reps.push_back(r);
                out.datasets.push_back(csv.string());
            }
        }
        if (!out.reps.empty()) return out;
        throw IoError(std::string(cmd) + ": no data.csv under " + data);
    }
    throw IoError(std::string(cmd) + ": no such file or directory: " + data);
}

FitConfig fit_config_from(const json &cfg, const char *cmd) {
    FitConfig fc;
    fc.n_clusters = require_key(cfg, "clusters", cmd).get<int>();
    fc.n_sources = get_or(cfg, "sources", 1);
    fc.n_iterations = get_or(cfg, "iters", 1000);
    fc.burn_in = get_or(cfg, "burnin", 0.9);
    fc.final_latent_sweeps = get_or(cfg, "refresh", fc.final_latent_sweeps);
    fc.stochastic_indicators =
        get_or(cfg, "stochastic_indicators", fc.stochastic_indicators);
    fc.seed = require_key(cfg, "seed", cmd).get<std::uint64_t>();
    fc.validate();
    return fc;
}

MembershipTable membership_table(const FittedModel &m) {
    return MembershipTable{m.patient_ids, m.labels, m.memberships};
}

json finite_or_null_j(double x) {
    return std::isfinite(x) ? json(x) : json(nullptr);
}

} // namespace

json model_summary(const FittedModel &model) {
    const int k = model.mixture.n_clusters();
    const int d = model.population.n_features();
    Eigen::MatrixXd shifts = model.cluster_space_shifts();
    json clusters = json::array();
    for (int c = 0; c < k; ++c) {
        json shift_map;
        for (int f = 0; f < d; ++f)
            shift_map[model.feature_names[f]] = shifts(c, f);
        clusters.push_back({{"cluster", c + 1},
                            {"pi", model.mixture.proportions[c]},
                            {"tau_mean", model.mixture.tau_mean[c]},
                            {"tau_sd", model.mixture.tau_sd[c]},
                            {"xi_mean", model.mixture.xi_mean[c]},
                            {"xi_sd", model.mixture.xi_sd[c]},
                            {"shifts", shift_map}});
    }
    json noise = json::array();
    for (int f = 0; f < d; ++f) noise.push_back(model.noise_sd[f]);
    return json{{"n_clusters", k},
                {"n_sources", model.population.n_sources()},
                {"n_features", d},
                {"features", model.feature_names},
                {"clusters", clusters},
                {"noise_sd", noise},
                {"complete_loglik", finite_or_null_j(model.complete_loglik)},
                {"entropy_normalized", finite_or_null_j(model.entropy_normalized)},
                {"icl", finite_or_null_j(model.icl)},
                {"dof", model.dof},
                {"n_patients", static_cast<int>(model.patient_ids.size())}};
}

std::vector<std::string> discover_replicates(const std::string &root) {
    std::vector<std::string> reps;
    if (!fs::is_directory(root)) return reps;
    for (const auto &entry : fs::directory_iterator(root)) {
        if (!entry.is_directory()) continue;
        std::string name = entry.path().filename().string();
        if (name.size() < 4 || name.compare(0, 3, "rep") != 0) continue;
        bool digits = true;
        for (std::size_t i = 3; i < name.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(name[i]))) digits = false;
        if (digits) reps.push_back(name);
    }
    std::sort(reps.begin(), reps.end());
    return reps;
}

void run_parallel(int n_tasks, int workers, const std::function<void(int)> &fn) {
    if (n_tasks <= 0) return;
    workers = std::max(1, std::min(workers, n_tasks));
    if (workers == 1) {
        for (int i = 0; i < n_tasks; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex mu;
    std::exception_ptr first;
    auto body = [&]() {
        for (;;) {
            int i = next.fetch_add(1);
            if (i >= n_tasks) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!first) first = std::current_exception();
                next.store(n_tasks);
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (std::thread &t : pool) t.join();
    if (first) std::rethrow_exception(first);
}

// ------------------------------------------------------------------- simulate

json cmd_simulate(const json &cfg) {
    check_keys(cfg,
               {"scenario", "patients", "replicates", "seed", "out", "visits",
                "noise_sd", "position", "velocity", "workers"},
               "simulate");
    Scenario sc = scenario_preset(require_key(cfg, "scenario", "simulate")
                                      .get<std::string>());
    const int patients = require_key(cfg, "patients", "simulate").get<int>();
    const int replicates = get_or(cfg, "replicates", 1);
    const std::uint64_t seed =
        require_key(cfg, "seed", "simulate").get<std::uint64_t>();
    const std::string out = require_key(cfg, "out", "simulate").get<std::string>();
    sc.n_visits = get_or(cfg, "visits", sc.n_visits);
    sc.noise_sd = get_or(cfg, "noise_sd", sc.noise_sd);
    if (cfg.contains("position"))
        sc.positions.setConstant(cfg.at("position").get<double>());
    if (cfg.contains("velocity"))
        sc.velocities.setConstant(cfg.at("velocity").get<double>());
    const int workers = get_or(cfg, "workers", 1);
    if (patients < 1) throw InputError("simulate: patients must be >= 1");
    if (replicates < 1) throw InputError("simulate: replicates must be >= 1");
    sc.validate();

    run_parallel(replicates, workers, [&](int r) {
        std::uint64_t rep_seed = Rng::stream(seed, 0x514d, r).next_u64();
        SimulationResult res = simulate(sc, patients, rep_seed);
        std::string dir = join(out, rep_name(r));
        write_dataset_csv(join(dir, "data.csv"), res.data);
        write_latent_csv(join(dir, "truth.csv"), res.truth);
        save_model(join(dir, "model_true.json"), res.truth_model);
    });

    return json{{"command", "simulate"}, {"scenario", sc.name},
                {"replicates", replicates}, {"patients", patients},
                {"visits", sc.n_visits},   {"noise_sd", sc.noise_sd},
                {"out", out}};
}

// ------------------------------------------------------------------------ fit

json cmd_fit(const json &cfg) {
    check_keys(cfg,
               {"data", "clusters", "sources", "iters", "burnin", "refresh",
                "seed", "out", "trace", "stochastic_indicators", "workers"},
               "fit");
    const std::string data = require_key(cfg, "data", "fit").get<std::string>();
    const std::string out = require_key(cfg, "out", "fit").get<std::string>();
    const std::string trace = get_or(cfg, "trace", std::string());
    const int workers = get_or(cfg, "workers", 1);
    FitConfig base = fit_config_from(cfg, "fit");

    DataLayout layout = resolve_data(data, "fit");
    const bool single = layout.reps.size() == 1 && layout.reps[0].empty();

    std::mutex mu;
    json per_rep = json::array();
    run_parallel(static_cast<int>(layout.reps.size()), workers, [&](int r) {
        FitConfig fc = base;
        std::string dir = single ? out : join(out, layout.reps[r]);
        if (single) {
            fc.trace_path = trace;
        } else {
            fc.seed = Rng::stream(base.seed, 0xF17, r).next_u64();
            if (!trace.empty()) fc.trace_path = join(dir, "trace.csv");
        }
        Dataset ds = read_dataset_csv(layout.datasets[r]);
        FittedModel model = fit(ds, fc);
        save_model(join(dir, "model.json"), model);
        write_membership_csv(join(dir, "memberships.csv"), membership_table(model));
        std::lock_guard<std::mutex> lock(mu);
        per_rep.push_back({{"replicate", layout.reps[r]},
                           {"icl", finite_or_null_j(model.icl)},
                           {"entropy_normalized",
                            finite_or_null_j(model.entropy_normalized)},
                           {"complete_loglik",
                            finite_or_null_j(model.complete_loglik)}});
    });

    if (single) {
        FittedModel model = load_model(join(out, "model.json"));
        json summary = model_summary(model);
        summary["command"] = "fit";
        summary["data"] = data;
        summary["out"] = out;
        return summary;
    }
    std::sort(per_rep.begin(), per_rep.end(), [](const json &a, const json &b) {
        return a["replicate"].get<std::string>() < b["replicate"].get<std::string>();
    });
    return json{{"command", "fit"},
                {"replicates", per_rep.size()},
                {"per_replicate", per_rep},
                {"out", out}};
}

// ---------------------------------------------------------------- personalize

json cmd_personalize(const json &cfg) {
    check_keys(cfg, {"model", "data", "out", "seed", "iters"}, "personalize");
    const std::string model_path =
        require_key(cfg, "model", "personalize").get<std::string>();
    const std::string data = require_key(cfg, "data", "personalize").get<std::string>();
    const std::string out = require_key(cfg, "out", "personalize").get<std::string>();
    PersonalizeConfig pc;
    pc.seed = get_or(cfg, "seed", std::uint64_t{0});
    pc.n_iterations = get_or(cfg, "iters", pc.n_iterations);
    pc.validate();

    FittedModel model = load_model(model_path);
    DataLayout layout = resolve_data(data, "personalize");
    if (layout.reps.size() != 1)
        throw InputError("personalize: expects a single dataset, not replicates");
    Dataset ds = read_dataset_csv(layout.datasets[0]);
    PersonalizeResult res = personalize(model, ds, pc);

    LatentTable latents;
    MembershipTable members;
    for (int i = 0; i < ds.n_patients(); ++i) {
        latents.ids.push_back(ds.patients[i].id);
        members.ids.push_back(ds.patients[i].id);
    }
    latents.labels = res.labels;
    latents.individuals = res.individuals;
    members.labels = res.labels;
    members.memberships = res.memberships;
    write_latent_csv(join(out, "personalized.csv"), latents);
    write_membership_csv(join(out, "memberships.csv"), members);

    json counts;
    for (int c = 0; c < model.mixture.n_clusters(); ++c) {
        int n = 0;
        for (int label : res.labels)
            if (label == c) ++n;
        counts[std::to_string(c + 1)] = n;
    }
    return json{{"command", "personalize"},
                {"patients", ds.n_patients()},
                {"cluster_counts", counts},
                {"out", out}};
}

// ----------------------------------------------------------- posthoc baseline

json cmd_classify_posthoc(const json &cfg) {
    check_keys(cfg,
               {"data", "clusters", "sources", "iters", "burnin", "refresh",
                "seed", "out", "workers", "gmm_inits"},
               "classify-posthoc");
    const std::string data =
        require_key(cfg, "data", "classify-posthoc").get<std::string>();
    const std::string out = require_key(cfg, "out", "classify-posthoc").get<std::string>();
    const int workers = get_or(cfg, "workers", 1);
    PosthocConfig base;
    base.n_clusters = require_key(cfg, "clusters", "classify-posthoc").get<int>();
    base.fit = fit_config_from(cfg, "classify-posthoc");
    base.fit.n_clusters = 1;
    base.gmm.n_init = get_or(cfg, "gmm_inits", base.gmm.n_init);

    DataLayout layout = resolve_data(data, "classify-posthoc");
    const bool single = layout.reps.size() == 1 && layout.reps[0].empty();

    std::mutex mu;
    json per_rep = json::array();
    run_parallel(static_cast<int>(layout.reps.size()), workers, [&](int r) {
        PosthocConfig pc = base;
        std::string dir = single ? out : join(out, layout.reps[r]);
        if (!single) pc.fit.seed = Rng::stream(base.fit.seed, 0xF17, r).next_u64();
        Dataset ds = read_dataset_csv(layout.datasets[r]);
        PosthocResult res = posthoc_classify(ds, pc);
        FittedModel model = res.as_model();
        save_model(join(dir, "model.json"), model);
        write_membership_csv(join(dir, "memberships.csv"), membership_table(model));
        std::lock_guard<std::mutex> lock(mu);
        per_rep.push_back({{"replicate", layout.reps[r]},
                           {"gmm_loglik", res.gmm.loglik},
                           {"entropy_normalized",
                            finite_or_null_j(model.entropy_normalized)}});
    });

    if (single) {
        FittedModel model = load_model(join(out, "model.json"));
        json summary = model_summary(model);
        summary["command"] = "classify-posthoc";
        summary["data"] = data;
        summary["out"] = out;
        return summary;
    }
    std::sort(per_rep.begin(), per_rep.end(), [](const json &a, const json &b) {
        return a["replicate"].get<std::string>() < b["replicate"].get<std::string>();
    });
    return json{{"command", "classify-posthoc"},
                {"replicates", per_rep.size()},
                {"per_replicate", per_rep},
                {"out", out}};
}

// --------------------------------------------------------------------- select

namespace {

std::string selection_csv(const SelectionResult &sel) {
    std::string out =
        "n_clusters,icl,complete_loglik,entropy_normalized,dof,ok,error\n";
    for (const SelectionRow &row : sel.table) {
        out += std::to_string(row.n_clusters);
        out += ',';
        out += row.ok ? format_double(row.icl) : "";
        out += ',';
        out += row.ok ? format_double(row.complete_loglik) : "";
        out += ',';
        out += row.ok && std::isfinite(row.entropy_normalized)
                   ? format_double(row.entropy_normalized)
                   : "";
        out += ',';
        out += row.ok ? std::to_string(row.dof) : "";
        out += ',';
        out += row.ok ? "1" : "0";
        out += ',';
        out += row.error;
        out += '\n';
    }
    return out;
}

} // namespace

json cmd_select(const json &cfg) {
    check_keys(cfg,
               {"data", "candidates", "sources", "iters", "burnin", "refresh",
                "seed", "out", "workers"},
               "select");
    const std::string data = require_key(cfg, "data", "select").get<std::string>();
    const std::string out = require_key(cfg, "out", "select").get<std::string>();
    const json &cand_j = require_key(cfg, "candidates", "select");
    if (!cand_j.is_array() || cand_j.empty())
        throw InputError("select: candidates must be a non-empty array");
    std::vector<int> candidates = cand_j.get<std::vector<int>>();
    const int workers = get_or(cfg, "workers", 1);

    FitConfig base;
    base.n_clusters = 1; // per-candidate counts come from the list
    base.n_sources = get_or(cfg, "sources", 1);
    base.n_iterations = get_or(cfg, "iters", 1000);
    base.burn_in = get_or(cfg, "burnin", 0.9);
    base.final_latent_sweeps = get_or(cfg, "refresh", base.final_latent_sweeps);
    base.seed = require_key(cfg, "seed", "select").get<std::uint64_t>();
    base.validate();

    DataLayout layout = resolve_data(data, "select");
    const bool single = layout.reps.size() == 1 && layout.reps[0].empty();

    std::mutex mu;
    json per_rep = json::array();
    std::map<int, int> counts;
    run_parallel(static_cast<int>(layout.reps.size()), workers, [&](int r) {
        FitConfig fc = base;
        std::string dir = single ? out : join(out, layout.reps[r]);
        if (!single) fc.seed = Rng::stream(base.seed, 0xF17, r).next_u64();
        Dataset ds = read_dataset_csv(layout.datasets[r]);
        SelectionResult sel = select_n_clusters(ds, candidates, fc);
        atomic_write_text(join(dir, "selection.csv"), selection_csv(sel));
        const FittedModel &best = sel.models[sel.best_index];
        save_model(join(dir, "model.json"), best);
        write_membership_csv(join(dir, "memberships.csv"), membership_table(best));
        json table = json::array();
        for (const SelectionRow &row : sel.table)
            table.push_back({{"clusters", row.n_clusters},
                             {"icl", row.ok ? finite_or_null_j(row.icl) : json(nullptr)},
                             {"ok", row.ok}});
        std::lock_guard<std::mutex> lock(mu);
        counts[sel.table[sel.best_index].n_clusters] += 1;
        per_rep.push_back({{"replicate", layout.reps[r]},
                           {"selected_clusters", sel.table[sel.best_index].n_clusters},
                           {"table", table}});
    });

    std::sort(per_rep.begin(), per_rep.end(), [](const json &a, const json &b) {
        return a["replicate"].get<std::string>() < b["replicate"].get<std::string>();
    });
    if (single) {
        json summary = per_rep[0];
        summary.erase("replicate");
        summary["command"] = "select";
        summary["out"] = out;
        return summary;
    }
    json counts_j;
    for (const auto &[k, n] : counts) counts_j[std::to_string(k)] = n;
    return json{{"command", "select"},
                {"replicates", per_rep.size()},
                {"selected_counts", counts_j},
                {"per_replicate", per_rep},
                {"out", out}};
}

// ------------------------------------------------------------------- evaluate

namespace {

struct RepEval {
    double accuracy = 0.0;
    Eigen::VectorXd recall, precision;     // per true cluster
    Eigen::VectorXd pi, tau, xi;           // aligned estimates per cluster
    Eigen::MatrixXd shifts;                // k x d aligned estimates
};

RepEval evaluate_pair(const FittedModel &truth, const FittedModel &pred) {
    const int k = truth.mixture.n_clusters();
    const int d = truth.population.n_features();
    if (pred.mixture.n_clusters() != k)
        throw InputError("evaluate: cluster counts disagree between truth and fit");
    if (pred.population.n_features() != d)
        throw InputError("evaluate: feature counts disagree between truth and fit");

    Eigen::MatrixXd true_table = cluster_param_table(truth);
    Eigen::MatrixXd est_table = cluster_param_table(pred);
    std::vector<int> assign = align_labels(true_table, est_table);

    std::unordered_map<std::string, int> pred_index;
    for (std::size_t i = 0; i < pred.patient_ids.size(); ++i)
        pred_index[pred.patient_ids[i]] = static_cast<int>(i);
    std::vector<int> aligned = relabel_to_truth(pred.labels, assign);
    std::vector<int> true_labels, pred_labels;
    true_labels.reserve(truth.patient_ids.size());
    for (std::size_t i = 0; i < truth.patient_ids.size(); ++i) {
        auto it = pred_index.find(truth.patient_ids[i]);
        if (it == pred_index.end())
            throw InputError("evaluate: patient " + truth.patient_ids[i] +
                             " missing from the fitted model");
        true_labels.push_back(truth.labels[i]);
        pred_labels.push_back(aligned[it->second]);
    }
    ClassificationMetrics cm = classification_metrics(true_labels, pred_labels, k);

    RepEval out;
    out.accuracy = cm.accuracy;
    out.recall = cm.recall;
    out.precision = cm.precision;
    out.pi.resize(k);
    out.tau.resize(k);
    out.xi.resize(k);
    out.shifts.resize(k, d);
    Eigen::MatrixXd pred_shifts = pred.cluster_space_shifts();
    for (int c = 0; c < k; ++c) {
        int e = assign[c];
        out.pi[c] = pred.mixture.proportions[e];
        out.tau[c] = pred.mixture.tau_mean[e];
        out.xi[c] = pred.mixture.xi_mean[e];
        out.shifts.row(c) = pred_shifts.row(e);
    }
    return out;
}

} // namespace

json cmd_evaluate(const json &cfg) {
    check_keys(cfg, {"truth", "fits", "out"}, "evaluate");
    const std::string truth_root =
        require_key(cfg, "truth", "evaluate").get<std::string>();
    const std::string fits_root =
        require_key(cfg, "fits", "evaluate").get<std::string>();
    const std::string out = require_key(cfg, "out", "evaluate").get<std::string>();

    // single pair or rep*/ trees
    std::vector<std::string> reps;
    if (fs::is_regular_file(fs::path(truth_root) / "model_true.json")) {
        reps.push_back("");
    } else {
        for (const std::string &r : discover_replicates(truth_root))
            if (fs::is_regular_file(fs::path(truth_root) / r / "model_true.json"))
                reps.push_back(r);
        if (reps.empty())
            throw IoError("evaluate: no model_true.json under " + truth_root);
    }

    FittedModel truth0;
    std::vector<RepEval> evals;
    evals.reserve(reps.size());
    for (std::size_t r = 0; r < reps.size(); ++r) {
        std::string tpath = join(join(truth_root, reps[r]), "model_true.json");
        std::string fpath = join(join(fits_root, reps[r]), "model.json");
        if (!fs::is_regular_file(fpath))
            throw IoError("evaluate: missing fit " + fpath);
        FittedModel truth = load_model(tpath);
        FittedModel pred = load_model(fpath);
        if (r == 0) truth0 = truth;
        evals.push_back(evaluate_pair(truth, pred));
    }

    const int k = truth0.mixture.n_clusters();
    const int d = truth0.population.n_features();
    const int R = static_cast<int>(evals.size());
    Eigen::MatrixXd truth_shifts = truth0.cluster_space_shifts();

    // per-replicate table
    std::string rep_csv = "replicate,accuracy";
    for (int c = 0; c < k; ++c) rep_csv += ",recall_" + std::to_string(c + 1);
    for (int c = 0; c < k; ++c) rep_csv += ",precision_" + std::to_string(c + 1);
    for (int c = 0; c < k; ++c) rep_csv += ",pi_" + std::to_string(c + 1);
    for (int c = 0; c < k; ++c) rep_csv += ",tau_" + std::to_string(c + 1);
    for (int c = 0; c < k; ++c) rep_csv += ",xi_" + std::to_string(c + 1);
    for (int f = 0; f < d; ++f)
        for (int c = 0; c < k; ++c)
            rep_csv += ",w_" + truth0.feature_names[f] + "_" + std::to_string(c + 1);
    rep_csv += '\n';
    for (int r = 0; r < R; ++r) {
        const RepEval &e = evals[r];
        rep_csv += reps[r].empty() ? "single" : reps[r];
        rep_csv += ',' + format_double(e.accuracy);
        for (int c = 0; c < k; ++c) rep_csv += ',' + format_double(e.recall[c]);
        for (int c = 0; c < k; ++c) rep_csv += ',' + format_double(e.precision[c]);
        for (int c = 0; c < k; ++c) rep_csv += ',' + format_double(e.pi[c]);
        for (int c = 0; c < k; ++c) rep_csv += ',' + format_double(e.tau[c]);
        for (int c = 0; c < k; ++c) rep_csv += ',' + format_double(e.xi[c]);
        for (int f = 0; f < d; ++f)
            for (int c = 0; c < k; ++c)
                rep_csv += ',' + format_double(e.shifts(c, f));
        rep_csv += '\n';
    }
    atomic_write_text(join(out, "replicates.csv"), rep_csv);

    // aggregates
    auto collect = [&](const std::function<double(const RepEval &)> &get) {
        std::vector<double> v;
        v.reserve(evals.size());
        for (const RepEval &e : evals) {
            double x = get(e);
            if (std::isfinite(x)) v.push_back(x);
        }
        return v;
    };

    std::string sum_csv = "kind,name,cluster,truth,mean,lo,hi,bias,se,rmse\n";
    json recall_j = json::array(), precision_j = json::array(),
         params_j = json::array();

    MetricSummary acc = metric_ci(collect([](const RepEval &e) { return e.accuracy; }));
    sum_csv += "metric,accuracy,,," + format_double(acc.mean) + ',' +
               format_double(acc.lo) + ',' + format_double(acc.hi) + ",,,\n";

    for (int c = 0; c < k; ++c) {
        MetricSummary rec =
            metric_ci(collect([c](const RepEval &e) { return e.recall[c]; }));
        MetricSummary prec =
            metric_ci(collect([c](const RepEval &e) { return e.precision[c]; }));
        sum_csv += "metric,recall," + std::to_string(c + 1) + ",," +
                   format_double(rec.mean) + ',' + format_double(rec.lo) + ',' +
                   format_double(rec.hi) + ",,,\n";
        sum_csv += "metric,precision," + std::to_string(c + 1) + ",," +
                   format_double(prec.mean) + ',' + format_double(prec.lo) + ',' +
                   format_double(prec.hi) + ",,,\n";
        recall_j.push_back({{"cluster", c + 1}, {"mean", rec.mean},
                            {"lo", rec.lo}, {"hi", rec.hi}});
        precision_j.push_back({{"cluster", c + 1}, {"mean", prec.mean},
                               {"lo", prec.lo}, {"hi", prec.hi}});
    }

    auto add_param = [&](const std::string &name, int cluster, double truth_value,
                         const std::function<double(const RepEval &)> &get) {
        std::vector<double> values = collect(get);
        RecoveryStats rs = recovery_stats(values, truth_value);
        MetricSummary ci = metric_ci(values);
        sum_csv += "parameter," + name + ',' + std::to_string(cluster + 1) + ',' +
                   format_double(rs.truth) + ',' + format_double(rs.estimate) + ',' +
                   format_double(ci.lo) + ',' + format_double(ci.hi) + ',' +
                   format_double(rs.bias) + ',' + format_double(rs.se) + ',' +
                   format_double(rs.rmse) + '\n';
        params_j.push_back({{"name", name},
                            {"cluster", cluster + 1},
                            {"truth", rs.truth},
                            {"estimate", rs.estimate},
                            {"bias", rs.bias},
                            {"se", rs.se},
                            {"rmse", rs.rmse}});
    };

    for (int c = 0; c < k; ++c)
        add_param("pi", c, truth0.mixture.proportions[c],
                  [c](const RepEval &e) { return e.pi[c]; });
    for (int c = 0; c < k; ++c)
        add_param("tau", c, truth0.mixture.tau_mean[c],
                  [c](const RepEval &e) { return e.tau[c]; });
    for (int c = 0; c < k; ++c)
        add_param("xi", c, truth0.mixture.xi_mean[c],
                  [c](const RepEval &e) { return e.xi[c]; });
    for (int f = 0; f < d; ++f)
        for (int c = 0; c < k; ++c)
            add_param("w_" + truth0.feature_names[f], c, truth_shifts(c, f),
                      [f, c](const RepEval &e) { return e.shifts(c, f); });

    atomic_write_text(join(out, "summary.csv"), sum_csv);

    return json{{"command", "evaluate"},
                {"replicates", R},
                {"accuracy", {{"mean", acc.mean}, {"lo", acc.lo}, {"hi", acc.hi}}},
                {"recall", recall_j},
                {"precision", precision_j},
                {"parameters", params_j},
                {"out", out}};
}

} // namespace mixcourse
