#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>
#include <vector>

namespace mixcourse {

// Error taxonomy. The C API and CLI map these onto stable status/exit codes:
// input/schema problems -> 2, estimation divergence -> 3, filesystem -> 4.
class InputError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class DivergenceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Fixed hyper-parameters: exploration SDs of the population-level priors and
// the (non-estimated) SD of the source coordinates.
struct HyperParams {
    double sigma_g_tilde = 0.01;
    double sigma_v_tilde = 0.01;
    double sigma_beta = 0.01;
    double sigma_source = 1.0;
};

// Population-level parameters in unconstrained coordinates:
//   g_tilde_k = log((1 - p_k) / p_k),  v_tilde_k = log v_k,
//   beta is the (d-1) x n_sources inner mixing matrix.
struct PopulationParams {
    Eigen::VectorXd g_tilde; // length d
    Eigen::VectorXd v_tilde; // length d
    Eigen::MatrixXd beta;    // (d-1) x n_sources

    int n_features() const { return static_cast<int>(g_tilde.size()); }
    int n_sources() const { return static_cast<int>(beta.cols()); }
    void validate() const;
};

// Per-patient latent variables.
struct IndividualParams {
    double tau = 0.0;        // onset time shift
    double xi = 0.0;         // log acceleration
    Eigen::VectorXd sources; // length n_sources

    void validate() const;
};

// Gaussian-mixture prior over the individual parameters. Source SDs are
// fixed by HyperParams::sigma_source and therefore not stored per cluster.
struct MixtureParams {
    Eigen::VectorXd proportions;  // length n_clusters, simplex
    Eigen::VectorXd tau_mean;     // length n_clusters
    Eigen::VectorXd tau_sd;       // length n_clusters, > 0
    Eigen::VectorXd xi_mean;      // length n_clusters
    Eigen::VectorXd xi_sd;        // length n_clusters, > 0
    Eigen::MatrixXd source_means; // n_clusters x n_sources

    int n_clusters() const { return static_cast<int>(proportions.size()); }
    int n_sources() const { return static_cast<int>(source_means.cols()); }
    void validate() const;
};

// One patient's longitudinal record. Missing observations are stored as NaN;
// times are strictly increasing.
struct Patient {
    std::string id;
    Eigen::VectorXd times;  // length n_visits
    Eigen::MatrixXd values; // n_visits x d, NaN = missing

    int n_visits() const { return static_cast<int>(times.size()); }
};

struct Dataset {
    std::vector<std::string> feature_names;
    std::vector<Patient> patients;

    int n_features() const { return static_cast<int>(feature_names.size()); }
    int n_patients() const { return static_cast<int>(patients.size()); }
    long n_observations() const; // present (non-missing) values
    void validate() const;       // throws InputError with patient/row context
};

} // namespace mixcourse
