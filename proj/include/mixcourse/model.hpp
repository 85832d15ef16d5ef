#pragma once

#include "mixcourse/types.hpp"

namespace mixcourse {

// ------------------------------------------------------------ transformations
// p in (0,1) <-> g_tilde = log((1-p)/p);  v > 0 <-> v_tilde = log v.
double g_tilde_from_p(double p);
double p_from_g_tilde(double g_tilde);
double v_tilde_from_v(double v);
inline double v_from_v_tilde(double v_tilde) { return std::exp(v_tilde); }

Eigen::VectorXd g_tilde_from_p(const Eigen::VectorXd &p);
Eigen::VectorXd p_from_g_tilde(const Eigen::VectorXd &g_tilde);
Eigen::VectorXd v_tilde_from_v(const Eigen::VectorXd &v);
Eigen::VectorXd v_from_v_tilde(const Eigen::VectorXd &v_tilde);

// ------------------------------------------------------------- mixing matrix
// Orthonormal basis of the hyperplane orthogonal to v, as the trailing d-1
// columns of the Householder reflection sending v/|v| onto -sign(v_1) e_1.
// Deterministic for a given v.
Eigen::MatrixXd orthonormal_complement_basis(const Eigen::VectorXd &v);

// A = B(v) * beta, a d x n_sources matrix whose columns are orthogonal to v.
Eigen::MatrixXd build_mixing_matrix(const Eigen::VectorXd &v,
                                    const Eigen::MatrixXd &beta);

// w = A s
Eigen::VectorXd space_shifts(const Eigen::MatrixXd &A, const Eigen::VectorXd &s);

// --------------------------------------------------------------- trajectories
// psi_i(t) = exp(xi) * (t - tau)
double time_reparam(double t, double tau, double xi);

// Single-feature logistic trajectory:
//   y = (1 + (1/p - 1) * exp(-(v*psi + w) / (p (1-p))))^-1
// The exponent is clamped to +-700 before exp() and the output to
// [1e-15, 1 - 1e-15], so saturated inputs return finite values.
double trajectory_feature(double p, double v, double w, double psi);

// Precomputed per-model quantities for the hot likelihood path.
struct TrajectoryModel {
    Eigen::VectorXd p;       // positions, length d
    Eigen::VectorXd v;       // velocities, length d
    Eigen::MatrixXd A;       // d x n_sources mixing matrix
    Eigen::VectorXd inv_pq;  // 1 / (p_k (1 - p_k))
    Eigen::VectorXd g;       // (1 - p_k) / p_k

    explicit TrajectoryModel(const PopulationParams &pop);
    int n_features() const { return static_cast<int>(p.size()); }

    // y for all features at one time point.
    Eigen::VectorXd values(const IndividualParams &ind, double t) const;
    // Same but with a caller-precomputed w = A * ind.sources.
    void values_with_shift(const Eigen::VectorXd &w, double tau, double xi,
                           double t, Eigen::VectorXd &out) const;
};

// Convenience wrapper: build the cache and evaluate once.
Eigen::VectorXd trajectory_values(const PopulationParams &pop,
                                  const IndividualParams &ind, double t);

} // namespace mixcourse
