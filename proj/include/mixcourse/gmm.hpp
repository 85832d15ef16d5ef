#pragma once

#include "mixcourse/rng.hpp"
#include "mixcourse/types.hpp"

#include <cstdint>
#include <vector>

namespace mixcourse {

struct GmmConfig {
    int n_init = 10;    // k-means++-seeded EM restarts, best by log-likelihood
    int max_iter = 300; // EM iterations per restart
    double tol = 1e-4;  // stop when mean per-sample log-lik gain drops below
    double reg = 1e-6;  // diagonal regularization used when factorizing
    std::uint64_t seed = 0;
    void validate() const;
};

// Full-covariance Gaussian mixture. Stored covariances are the plain
// responsibility-weighted second moments; the regularization term is only
// added when a factorization is needed.
struct GmmModel {
    Eigen::VectorXd weights; // length k, simplex
    Eigen::MatrixXd means;   // k x q
    std::vector<Eigen::MatrixXd> covariances; // k matrices, q x q
    double loglik = 0.0;                      // total log-likelihood at the end
    std::vector<double> loglik_trace;         // per-iteration, winning restart

    int n_components() const { return static_cast<int>(weights.size()); }
    int n_dims() const { return static_cast<int>(means.cols()); }
};

GmmModel gmm_fit(const Eigen::MatrixXd &points, int k, const GmmConfig &cfg);

// Posterior responsibilities under the model; rows sum to 1.
Eigen::MatrixXd gmm_responsibilities(const GmmModel &model,
                                     const Eigen::MatrixXd &points);

} // namespace mixcourse
