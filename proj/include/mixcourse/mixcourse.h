/* C interface to the mixcourse library.
 *
 * All functions returning mxc_status report MXC_OK on success; on failure the
 * out-parameters are left untouched and mxc_last_error() returns a
 * thread-local message describing what went wrong.  Strings returned through
 * char** out-parameters are heap-allocated and must be released with
 * mxc_free_string().
 */
#ifndef MIXCOURSE_C_API_H
#define MIXCOURSE_C_API_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum mxc_status {
    MXC_OK = 0,
    MXC_ERR_INPUT = 2,    /* invalid config, data, or arguments */
    MXC_ERR_DIVERGED = 3, /* estimation failed to produce finite estimates */
    MXC_ERR_IO = 4,       /* file could not be read or written */
    MXC_ERR_INTERNAL = 5  /* unexpected failure */
} mxc_status;

typedef struct mxc_dataset mxc_dataset;
typedef struct mxc_model mxc_model;

const char *mxc_version(void);

/* Message from the most recent failing call on this thread ("" if none). */
const char *mxc_last_error(void);

void mxc_free_string(char *s);

/* ------------------------------------------------------------------ datasets */

mxc_status mxc_dataset_read_csv(const char *path, mxc_dataset **out);
mxc_status mxc_dataset_write_csv(const mxc_dataset *data, const char *path);
void mxc_dataset_free(mxc_dataset *data);
int mxc_dataset_n_patients(const mxc_dataset *data);
int mxc_dataset_n_features(const mxc_dataset *data);

/* -------------------------------------------------------------------- models */

typedef struct mxc_fit_options {
    int n_clusters;
    int n_sources;
    int n_iterations;
    double burn_in;              /* fraction of iterations, in (0, 1) */
    uint64_t seed;
    int stochastic_indicators;   /* nonzero = sample; 0 = hard argmax refresh */
    const char *trace_path;      /* NULL or "" to disable the trace */
} mxc_fit_options;

void mxc_fit_options_init(mxc_fit_options *opts);

mxc_status mxc_fit(const mxc_dataset *data, const mxc_fit_options *opts,
                   mxc_model **out);

mxc_status mxc_model_load(const char *path, mxc_model **out);
mxc_status mxc_model_save(const mxc_model *model, const char *path);
void mxc_model_free(mxc_model *model);
int mxc_model_n_clusters(const mxc_model *model);
int mxc_model_n_features(const mxc_model *model);
double mxc_model_icl(const mxc_model *model);
double mxc_model_entropy(const mxc_model *model);

/* JSON description of the fitted parameters (clusters, noise, criteria). */
mxc_status mxc_model_summary_json(const mxc_model *model, char **out);

/* MAP latent estimates for new patients under a fitted model. */
mxc_status mxc_personalize(const mxc_model *model, const mxc_dataset *data,
                           uint64_t seed, int n_iterations, char **summary_json);

/* ------------------------------------------------------------------ commands
 *
 * File-level operations driven by a JSON config string; each returns a JSON
 * summary.  These are the same entry points the CLI exposes.
 */

mxc_status mxc_cmd_simulate(const char *config_json, char **summary_json);
mxc_status mxc_cmd_fit(const char *config_json, char **summary_json);
mxc_status mxc_cmd_personalize(const char *config_json, char **summary_json);
mxc_status mxc_cmd_classify_posthoc(const char *config_json, char **summary_json);
mxc_status mxc_cmd_evaluate(const char *config_json, char **summary_json);
mxc_status mxc_cmd_select(const char *config_json, char **summary_json);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* MIXCOURSE_C_API_H */
