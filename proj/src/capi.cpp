#include "mixcourse/mixcourse.h"

#include "mixcourse/io.hpp"
#include "mixcourse/pipeline.hpp"
#include "mixcourse/saem.hpp"

#include <cstdlib>
#include <cstring>
#include <memory>
#include <new>
#include <string>

using nlohmann::json;

struct mxc_dataset {
    mixcourse::Dataset data;
};

struct mxc_model {
    mixcourse::FittedModel model;
};

namespace {

thread_local std::string g_last_error;

char *dup_string(const std::string &s) {
    char *out = static_cast<char *>(std::malloc(s.size() + 1));
    if (out) std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

// Runs fn, translating exceptions into status codes + the thread-local message.
template <typename Fn> mxc_status wrap(Fn &&fn) {
    try {
        fn();
        g_last_error.clear();
        return MXC_OK;
    } catch (const mixcourse::InputError &e) {
        g_last_error = e.what();
        return MXC_ERR_INPUT;
    } catch (const mixcourse::DivergenceError &e) {
        g_last_error = e.what();
        return MXC_ERR_DIVERGED;
    } catch (const mixcourse::IoError &e) {
        g_last_error = e.what();
        return MXC_ERR_IO;
    } catch (const std::exception &e) {
        g_last_error = e.what();
        return MXC_ERR_INTERNAL;
    } catch (...) {
        g_last_error = "unknown error";
        return MXC_ERR_INTERNAL;
    }
}

mxc_status require(bool cond, const char *message) {
    if (cond) return MXC_OK;
    g_last_error = message;
    return MXC_ERR_INPUT;
}

using CommandFn = json (*)(const json &);

mxc_status run_command(CommandFn fn, const char *config_json, char **summary_json) {
    if (require(config_json != nullptr, "config_json must not be null") != MXC_OK ||
        require(summary_json != nullptr, "summary_json must not be null") != MXC_OK)
        return MXC_ERR_INPUT;
    return wrap([&] {
        json cfg;
        try {
            cfg = json::parse(config_json);
        } catch (const json::parse_error &e) {
            throw mixcourse::InputError(std::string("config is not valid JSON: ") +
                                        e.what());
        }
        json summary = fn(cfg);
        *summary_json = dup_string(summary.dump(2));
        if (!*summary_json) throw std::bad_alloc();
    });
}

} // namespace

extern "C" {

const char *mxc_version(void) { return "0.1.0"; }

const char *mxc_last_error(void) { return g_last_error.c_str(); }

void mxc_free_string(char *s) { std::free(s); }

/* ------------------------------------------------------------------ datasets */

mxc_status mxc_dataset_read_csv(const char *path, mxc_dataset **out) {
    if (require(path && out, "path and out must not be null") != MXC_OK)
        return MXC_ERR_INPUT;
    return wrap([&] {
        auto handle = std::make_unique<mxc_dataset>();
        handle->data = mixcourse::read_dataset_csv(path);
        *out = handle.release();
    });
}

mxc_status mxc_dataset_write_csv(const mxc_dataset *data, const char *path) {
    if (require(data && path, "data and path must not be null") != MXC_OK)
        return MXC_ERR_INPUT;
    return wrap([&] { mixcourse::write_dataset_csv(path, data->data); });
}

void mxc_dataset_free(mxc_dataset *data) { delete data; }

int mxc_dataset_n_patients(const mxc_dataset *data) {
    return data ? data->data.n_patients() : 0;
}

int mxc_dataset_n_features(const mxc_dataset *data) {
    return data ? data->data.n_features() : 0;
}

/* -------------------------------------------------------------------- models */

void mxc_fit_options_init(mxc_fit_options *opts) {
    if (!opts) return;
    opts->n_clusters = 2;
    opts->n_sources = 1;
    opts->n_iterations = 1000;
    opts->burn_in = 0.9;
    opts->seed = 0;
    opts->stochastic_indicators = 1;
    opts->trace_path = nullptr;
}

mxc_status mxc_fit(const mxc_dataset *data, const mxc_fit_options *opts,
                   mxc_model **out) {
    if (require(data && opts && out, "data, opts, and out must not be null") !=
        MXC_OK)
        return MXC_ERR_INPUT;
    return wrap([&] {
        mixcourse::FitConfig fc;
        fc.n_clusters = opts->n_clusters;
        fc.n_sources = opts->n_sources;
        fc.n_iterations = opts->n_iterations;
        fc.burn_in = opts->burn_in;
        fc.seed = opts->seed;
        fc.stochastic_indicators = opts->stochastic_indicators != 0;
        fc.trace_path = opts->trace_path ? opts->trace_path : "";
        auto handle = std::make_unique<mxc_model>();
        handle->model = mixcourse::fit(data->data, fc);
        *out = handle.release();
    });
}

mxc_status mxc_model_load(const char *path, mxc_model **out) {
    if (require(path && out, "path and out must not be null") != MXC_OK)
        return MXC_ERR_INPUT;
    return wrap([&] {
        auto handle = std::make_unique<mxc_model>();
        handle->model = mixcourse::load_model(path);
        *out = handle.release();
    });
}

mxc_status mxc_model_save(const mxc_model *model, const char *path) {
    if (require(model && path, "model and path must not be null") != MXC_OK)
        return MXC_ERR_INPUT;
    return wrap([&] { mixcourse::save_model(path, model->model); });
}

void mxc_model_free(mxc_model *model) { delete model; }

int mxc_model_n_clusters(const mxc_model *model) {
    return model ? model->model.mixture.n_clusters() : 0;
}

int mxc_model_n_features(const mxc_model *model) {
    return model ? model->model.population.n_features() : 0;
}

double mxc_model_icl(const mxc_model *model) {
    return model ? model->model.icl : 0.0;
}

double mxc_model_entropy(const mxc_model *model) {
    return model ? model->model.entropy_normalized : 0.0;
}

mxc_status mxc_model_summary_json(const mxc_model *model, char **out) {
    if (require(model && out, "model and out must not be null") != MXC_OK)
        return MXC_ERR_INPUT;
    return wrap([&] {
        *out = dup_string(mixcourse::model_summary(model->model).dump(2));
        if (!*out) throw std::bad_alloc();
    });
}

mxc_status mxc_personalize(const mxc_model *model, const mxc_dataset *data,
                           uint64_t seed, int n_iterations, char **summary_json) {
    if (require(model && data && summary_json,
                "model, data, and summary_json must not be null") != MXC_OK)
        return MXC_ERR_INPUT;
    return wrap([&] {
        mixcourse::PersonalizeConfig pc;
        pc.seed = seed;
        if (n_iterations > 0) pc.n_iterations = n_iterations;
        pc.validate();
        mixcourse::PersonalizeResult res =
            mixcourse::personalize(model->model, data->data, pc);
        json patients = json::array();
        for (int i = 0; i < data->data.n_patients(); ++i) {
            json sources = json::array(), member = json::array();
            for (int l = 0; l < res.individuals[i].sources.size(); ++l)
                sources.push_back(res.individuals[i].sources[l]);
            for (int c = 0; c < res.memberships.cols(); ++c)
                member.push_back(res.memberships(i, c));
            patients.push_back({{"id", data->data.patients[i].id},
                                {"cluster", res.labels[i] + 1},
                                {"tau", res.individuals[i].tau},
                                {"xi", res.individuals[i].xi},
                                {"sources", sources},
                                {"memberships", member}});
        }
        json summary{{"patients", patients}};
        *summary_json = dup_string(summary.dump(2));
        if (!*summary_json) throw std::bad_alloc();
    });
}

/* ------------------------------------------------------------------ commands */

mxc_status mxc_cmd_simulate(const char *config_json, char **summary_json) {
    return run_command(&mixcourse::cmd_simulate, config_json, summary_json);
}

mxc_status mxc_cmd_fit(const char *config_json, char **summary_json) {
    return run_command(&mixcourse::cmd_fit, config_json, summary_json);
}

mxc_status mxc_cmd_personalize(const char *config_json, char **summary_json) {
    return run_command(&mixcourse::cmd_personalize, config_json, summary_json);
}

mxc_status mxc_cmd_classify_posthoc(const char *config_json, char **summary_json) {
    return run_command(&mixcourse::cmd_classify_posthoc, config_json, summary_json);
}

mxc_status mxc_cmd_evaluate(const char *config_json, char **summary_json) {
    return run_command(&mixcourse::cmd_evaluate, config_json, summary_json);
}

mxc_status mxc_cmd_select(const char *config_json, char **summary_json) {
    return run_command(&mixcourse::cmd_select, config_json, summary_json);
}

} // extern "C"
