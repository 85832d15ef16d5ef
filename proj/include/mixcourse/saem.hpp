#pragma once

#include "mixcourse/likelihood.hpp"
#include "mixcourse/rng.hpp"
#include "mixcourse/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mixcourse {

// ---------------------------------------------------------------- fit config
struct FitConfig {
    int n_clusters = 1;
    int n_sources = 1;
    int n_iterations = 10000;
    double burn_in = 0.9;        // fraction of iterations run with step size 1
    double step_exponent = 0.65; // alpha in (0.5, 1]
    int adapt_window = 50;       // proposal adaptation cadence (iterations)
    double target_accept = 0.3;
    bool stochastic_indicators = true; // sample indicators; false = hard argmax
    // Optional extra latent sweeps run after the last iteration with the
    // population and mixture parameters frozen at their final estimates;
    // posterior means and memberships are then averaged over this phase only.
    // Off by default: the standard post-burn-in averages are reported.
    int final_latent_sweeps = 0;
    std::uint64_t seed = 0;             // master seed; callers must set it
    std::string trace_path;             // empty = no trace file
    int trace_stride = 10;

    // initial random-walk proposal SDs per block
    double prop_g = 0.03, prop_v = 0.03, prop_beta = 0.03;
    double prop_tau = 2.0, prop_xi = 0.3, prop_source = 0.5;

    int divergence_patience = 100; // consecutive non-finite iterations allowed

    HyperParams hyper;

    int burn_in_iterations() const {
        return static_cast<int>(burn_in * n_iterations);
    }
    void validate() const;
};

// ------------------------------------------------------ sufficient statistics
struct SufficientStats {
    Eigen::VectorXd count;                // per cluster
    Eigen::VectorXd tau_sum, tau_sumsq;   // per cluster
    Eigen::VectorXd xi_sum, xi_sumsq;     // per cluster
    Eigen::MatrixXd src_sum, src_sumsq;   // n_clusters x n_sources
    Eigen::VectorXd g_tilde, v_tilde;     // population latents
    Eigen::MatrixXd beta;
    Eigen::VectorXd rss;                  // residual sum of squares per feature

    static SufficientStats zeros(int n_clusters, int n_sources, int n_features);
};

// Robbins-Monro step size: 1 during burn-in, (k - k_burn)^-alpha afterwards.
double step_size(int iteration, int burn_in_iterations, double alpha);

// S <- S + eps (s - S), elementwise.
void update_stats(SufficientStats &S, const SufficientStats &s, double eps);

// Closed-form M-step. Cluster means/SDs are count-weighted moments (SD floor
// 1e-3), proportions are normalized counts, noise SDs come from the residual
// sums (floor 1e-4). Clusters with vanishing weight retain their previous
// parameters and are counted in empty_clusters. The weighted centering
// projection is applied afterwards: xi means are shifted to satisfy
// sum_c pi_c xi_c = 0 with the shift compensated into v_tilde, and source
// means are re-centered the same way without compensation.
struct MaximizeResult {
    PopulationParams population; // prior means
    MixtureParams mixture;
    Eigen::VectorXd noise_sd;
    int empty_clusters = 0;
};
MaximizeResult maximize(const SufficientStats &S, const HyperParams &hyper,
                        const MixtureParams &previous,
                        const Eigen::VectorXd &obs_per_feature);

// ------------------------------------------------------------------ MH kernel
// One Gaussian random-walk Metropolis update of x targeting log_post.
// Shared by the sampler blocks and exposed for kernel-level tests.
template <typename F>
bool mh_update(double &x, double &cur_log_post, double proposal_sd, Rng &rng,
               F &&log_post) {
    double prop = x + proposal_sd * rng.gaussian();
    double lp = log_post(prop);
    double lr = lp - cur_log_post;
    if (lr >= 0.0 || std::log(rng.uniform_pos()) < lr) {
        x = prop;
        cur_log_post = lp;
        return true;
    }
    return false;
}

// --------------------------------------------------------------- fit results
struct FitDiagnostics {
    double accept_g = 0, accept_v = 0, accept_beta = 0;
    double accept_tau = 0, accept_xi = 0, accept_source = 0;
    int empty_cluster_events = 0;
    int iterations = 0;
};

struct FittedModel {
    PopulationParams population;
    MixtureParams mixture;
    Eigen::VectorXd noise_sd;
    std::vector<IndividualParams> individuals; // post-burn-in posterior means
    Eigen::MatrixXd memberships;               // n_patients x n_clusters
    std::vector<int> labels;                   // hard assignments
    // Completed-data log-likelihood with the continuous individual latents
    // integrated out per patient (Laplace) and the indicators fixed at the
    // hard assignments; the likelihood part of the selection criterion.
    double complete_loglik = 0.0;
    double entropy_raw_value = 0.0;
    double entropy_normalized = 0.0; // NaN when n_clusters == 1
    double icl = 0.0;
    int dof = 0;
    std::vector<std::string> feature_names;
    std::vector<std::string> patient_ids;
    FitConfig config;
    FitDiagnostics diagnostics;

    // Cluster mean space shifts w_c = A s_c, one row per cluster.
    Eigen::MatrixXd cluster_space_shifts() const;
};

// MCMC-SAEM estimation loop. Deterministic for a fixed seed: every random
// draw comes from a stream keyed on (seed, block, iteration, patient).
// Throws DivergenceError when the complete-data log-likelihood stays
// non-finite for more than divergence_patience consecutive iterations.
FittedModel fit(const Dataset &data, const FitConfig &cfg);

// ------------------------------------------------------------- personalize
struct PersonalizeConfig {
    int n_iterations = 2000;
    double burn_in = 0.2; // adaptation freeze point
    int adapt_window = 50;
    double target_accept = 0.3;
    std::uint64_t seed = 0;
    double prop_tau = 2.0, prop_xi = 0.3, prop_source = 0.5;
    void validate() const;
};

struct PersonalizeResult {
    std::vector<IndividualParams> individuals; // posterior modes
    Eigen::MatrixXd memberships;
    std::vector<int> labels;
};

// Posterior mode of (tau, xi, s) for new patients under a frozen model,
// found with the same MH kernel restricted to the individual blocks.
// Patients without a single observed value get the mixture-prior mode.
PersonalizeResult personalize(const FittedModel &model, const Dataset &data,
                              const PersonalizeConfig &cfg);

// ------------------------------------------------------------ model selection
struct SelectionRow {
    int n_clusters = 0;
    double icl = 0.0;
    double complete_loglik = 0.0;
    double entropy_normalized = 0.0; // NaN for 1 cluster
    int dof = 0;
    bool ok = false;
    std::string error;
};

struct SelectionResult {
    std::vector<SelectionRow> table;
    int best_index = -1; // argmin ICL over successful fits
    std::vector<FittedModel> models; // parallel to table; empty slot on failure
};

// Fits every candidate cluster count (seeds derived from cfg.seed) and ranks
// by ICL, lower is better. Failed candidates are recorded and skipped;
// throws DivergenceError if every candidate fails.
SelectionResult select_n_clusters(const Dataset &data,
                                  const std::vector<int> &candidates,
                                  const FitConfig &cfg);

} // namespace mixcourse
