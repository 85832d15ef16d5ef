#pragma once

#include "mixcourse/model.hpp"
#include "mixcourse/types.hpp"

#include <vector>

namespace mixcourse {

double gaussian_logpdf(double x, double mean, double sd);

// ------------------------------------------------------------ data attachment
// Gaussian observation log-density, summed over present (non-NaN) entries.
// noise_sd has one entry per feature.
double data_attachment_patient(const TrajectoryModel &model, const Patient &pat,
                               const IndividualParams &ind,
                               const Eigen::VectorXd &noise_sd);

double data_attachment(const Dataset &data, const PopulationParams &pop,
                       const std::vector<IndividualParams> &individuals,
                       const Eigen::VectorXd &noise_sd);

// ---------------------------------------------------------- population prior
// Gaussian log-density of the population latents around their current means,
// with fixed exploration SDs from HyperParams.
double population_prior(const PopulationParams &latent,
                        const PopulationParams &means, const HyperParams &hyper);

// ----------------------------------------------------- mixture random effects
// Per-coordinate mixture bracket: log pi_c - log(sd sqrt(2 pi)) - (z-mu)^2/(2 sd^2).
double mixture_bracket(double z, double log_pi, double mean, double sd);

// Gaussian part of one patient's cluster-conditional prior (no log pi term);
// this is what Metropolis ratios need, since the indicator is held fixed there.
double mixture_gauss_patient(const IndividualParams &ind, int cluster,
                             const MixtureParams &mix, const HyperParams &hyper);

// log pi_c + mixture_gauss_patient: one patient's complete-data prior term.
// An indicator pointing at a zero-weight cluster yields -inf (never NaN).
double mixture_re_patient(const IndividualParams &ind, int cluster,
                          const MixtureParams &mix, const HyperParams &hyper);

// Complete-data log-density of all individual random effects given one-hot
// indicators.
double mixture_re_logdensity(const std::vector<IndividualParams> &individuals,
                             const std::vector<int> &indicators,
                             const MixtureParams &mix, const HyperParams &hyper);

// -------------------------------------------------------- cluster memberships
// pi_i^c = pi^c p(z_i | c) / sum_c' pi^c' p(z_i | c'), evaluated in log space.
Eigen::VectorXd posterior_membership(const IndividualParams &ind,
                                     const MixtureParams &mix,
                                     const HyperParams &hyper);

// Index of the largest membership; ties resolve to the lowest index.
int hard_assign(const Eigen::VectorXd &membership);

// ------------------------------------------------- integrated data likelihood
// log of integral p(y_i | tau, xi, s) p(tau, xi, s | cluster) d(tau, xi, s),
// the cluster-conditional marginal density of one patient's observations with
// the individual latents integrated out, via a Laplace approximation at the
// conditional mode. `start` seeds the mode search (the per-patient posterior
// mean is a good choice). A patient with no observed values integrates a
// normalized density, so the result is exactly 0.
double integrated_attachment_patient(const TrajectoryModel &model,
                                     const Patient &pat, int cluster,
                                     const MixtureParams &mix,
                                     const HyperParams &hyper,
                                     const Eigen::VectorXd &noise_sd,
                                     const IndividualParams &start);

// Completed-data likelihood with the continuous latents integrated out:
//   sum_i [ log pi_{c_i} + integrated_attachment_patient(i, c_i) ].
// This is the L-hat entering the selection criterion; plugging point
// estimates of the latents in instead would let a merged fit hide cluster
// structure inside the fixed-variance source prior by rescaling the mixing
// matrix, making the criterion blind to the number of clusters.
double integrated_completed_loglik(const Dataset &data,
                                   const PopulationParams &pop,
                                   const Eigen::VectorXd &noise_sd,
                                   const MixtureParams &mix,
                                   const HyperParams &hyper,
                                   const std::vector<int> &labels,
                                   const std::vector<IndividualParams> &starts);

// -------------------------------------------------------- entropy + selection
// Raw assignment entropy -sum_i sum_c m_ic log m_ic (0 log 0 := 0).
double entropy_raw(const Eigen::MatrixXd &memberships);

// entropy_raw / (N log k), defined only for k >= 2.
double normalized_entropy(double entropy_raw_value, int n_patients,
                          int n_clusters);

// Free-parameter count: positions and velocities (2d), mixing matrix
// ((d-1) q), cluster means (k (2+q)), cluster SDs (2k), proportions (k-1),
// noise SDs (d).
int model_dof(int n_features, int n_sources, int n_clusters);

// ICL-style criterion, lower is better:
//   -2 L_complete + dof log N + 2 entropy_raw
double icl_score(double complete_loglik, int dof, int n_patients,
                 double entropy_raw_value);

} // namespace mixcourse
