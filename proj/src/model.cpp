#include "mixcourse/model.hpp"

#include <cmath>

namespace mixcourse {

// ----------------------------------------------------------------- validation

void PopulationParams::validate() const {
    const int d = n_features();
    if (d < 2) throw InputError("model requires at least 2 features");
    if (v_tilde.size() != d)
        throw InputError("g_tilde and v_tilde must have equal length");
    if (beta.rows() != d - 1)
        throw InputError("beta must have n_features-1 rows");
    const int q = n_sources();
    if (q < 1 || q > d - 1)
        throw InputError("n_sources must lie in [1, n_features-1]");
    if (!g_tilde.allFinite() || !v_tilde.allFinite() || !beta.allFinite())
        throw InputError("population parameters must be finite");
}

void IndividualParams::validate() const {
    if (!std::isfinite(tau) || !std::isfinite(xi) || !sources.allFinite())
        throw InputError("individual parameters must be finite");
}

void MixtureParams::validate() const {
    const int k = n_clusters();
    if (k < 1) throw InputError("mixture needs at least one cluster");
    if (tau_mean.size() != k || tau_sd.size() != k || xi_mean.size() != k ||
        xi_sd.size() != k || source_means.rows() != k)
        throw InputError("mixture parameter blocks disagree on cluster count");
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
        if (!(proportions[c] >= 0.0))
            throw InputError("mixture proportions must be nonnegative");
        total += proportions[c];
        if (!(tau_sd[c] > 0.0) || !(xi_sd[c] > 0.0))
            throw InputError("mixture SDs must be positive");
    }
    if (std::abs(total - 1.0) > 1e-9)
        throw InputError("mixture proportions must sum to 1");
    if (!tau_mean.allFinite() || !xi_mean.allFinite() || !source_means.allFinite())
        throw InputError("mixture means must be finite");
}

long Dataset::n_observations() const {
    long n = 0;
    for (const auto &pat : patients) n += (pat.values.array() == pat.values.array()).count();
    return n;
}

void Dataset::validate() const {
    const int d = n_features();
    if (d < 1) throw InputError("dataset has no features");
    for (const auto &pat : patients) {
        if (pat.n_visits() < 1)
            throw InputError("patient '" + pat.id + "' has no visits");
        if (pat.values.rows() != pat.n_visits() || pat.values.cols() != d)
            throw InputError("patient '" + pat.id + "' has a malformed value block");
        for (int j = 1; j < pat.n_visits(); ++j)
            if (!(pat.times[j] > pat.times[j - 1]))
                throw InputError("patient '" + pat.id +
                                 "' visit times must be strictly increasing (visit " +
                                 std::to_string(j + 1) + ")");
        for (int j = 0; j < pat.n_visits(); ++j) {
            if (!std::isfinite(pat.times[j]))
                throw InputError("patient '" + pat.id + "' has a non-finite time");
            for (int k = 0; k < d; ++k) {
                double y = pat.values(j, k);
                if (std::isnan(y)) continue; // missing
                if (!(y > 0.0 && y < 1.0))
                    throw InputError("patient '" + pat.id + "' visit " +
                                     std::to_string(j + 1) + " feature '" +
                                     feature_names[k] +
                                     "': observations must lie strictly in (0,1)");
            }
        }
    }
}

// ------------------------------------------------------------ transformations

double g_tilde_from_p(double p) {
    if (!(p > 0.0 && p < 1.0)) throw InputError("position p must lie in (0,1)");
    return std::log((1.0 - p) / p);
}

double p_from_g_tilde(double g_tilde) {
    // p = 1 / (1 + e^{g_tilde}); stable for large |g_tilde|
    if (g_tilde >= 0.0) {
        double e = std::exp(-g_tilde);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(g_tilde));
}

double v_tilde_from_v(double v) {
    if (!(v > 0.0)) throw InputError("velocity v must be positive");
    return std::log(v);
}

Eigen::VectorXd g_tilde_from_p(const Eigen::VectorXd &p) {
    Eigen::VectorXd out(p.size());
    for (Eigen::Index i = 0; i < p.size(); ++i) out[i] = g_tilde_from_p(p[i]);
    return out;
}

Eigen::VectorXd p_from_g_tilde(const Eigen::VectorXd &g_tilde) {
    Eigen::VectorXd out(g_tilde.size());
    for (Eigen::Index i = 0; i < g_tilde.size(); ++i) out[i] = p_from_g_tilde(g_tilde[i]);
    return out;
}

Eigen::VectorXd v_tilde_from_v(const Eigen::VectorXd &v) {
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) out[i] = v_tilde_from_v(v[i]);
    return out;
}

Eigen::VectorXd v_from_v_tilde(const Eigen::VectorXd &v_tilde) {
    return v_tilde.array().exp();
}

// ------------------------------------------------------------- mixing matrix

Eigen::MatrixXd orthonormal_complement_basis(const Eigen::VectorXd &v) {
    const int d = static_cast<int>(v.size());
    if (d < 2) throw InputError("complement basis needs dimension >= 2");
    double norm = v.norm();
    if (!(norm > 0.0) || !v.allFinite())
        throw InputError("velocity vector must be finite and nonzero");

    // Householder vector u = v/|v| + sign(v_1) e_1 (sign picked so u != 0).
    Eigen::VectorXd u = v / norm;
    double sign = (u[0] >= 0.0) ? 1.0 : -1.0;
    u[0] += sign;
    double unorm2 = u.squaredNorm();

    // Columns 2..d of H = I - 2 u u^T / (u^T u) span the complement of v.
    Eigen::MatrixXd B(d, d - 1);
    for (int j = 1; j < d; ++j) {
        Eigen::VectorXd col = Eigen::VectorXd::Zero(d);
        col[j] = 1.0;
        col -= (2.0 * u[j] / unorm2) * u;
        B.col(j - 1) = col;
    }
    return B;
}

Eigen::MatrixXd build_mixing_matrix(const Eigen::VectorXd &v,
                                    const Eigen::MatrixXd &beta) {
    if (beta.rows() != v.size() - 1)
        throw InputError("beta row count must equal n_features-1");
    return orthonormal_complement_basis(v) * beta;
}

Eigen::VectorXd space_shifts(const Eigen::MatrixXd &A, const Eigen::VectorXd &s) {
    if (A.cols() != s.size())
        throw InputError("source vector length must match mixing matrix columns");
    return A * s;
}

// --------------------------------------------------------------- trajectories

double time_reparam(double t, double tau, double xi) {
    return std::exp(xi) * (t - tau);
}

static inline double clamp_unit_open(double y) {
    if (y < 1e-15) return 1e-15;
    if (y > 1.0 - 1e-15) return 1.0 - 1e-15;
    return y;
}

double trajectory_feature(double p, double v, double w, double psi) {
    double g = (1.0 - p) / p;
    double x = -(v * psi + w) / (p * (1.0 - p));
    if (x > 700.0) x = 700.0;
    if (x < -700.0) x = -700.0;
    return clamp_unit_open(1.0 / (1.0 + g * std::exp(x)));
}

TrajectoryModel::TrajectoryModel(const PopulationParams &pop) {
    pop.validate();
    p = p_from_g_tilde(pop.g_tilde);
    v = v_from_v_tilde(pop.v_tilde);
    A = build_mixing_matrix(v, pop.beta);
    inv_pq = (p.array() * (1.0 - p.array())).inverse();
    g = (1.0 - p.array()) / p.array();
}

void TrajectoryModel::values_with_shift(const Eigen::VectorXd &w, double tau,
                                        double xi, double t,
                                        Eigen::VectorXd &out) const {
    const int d = n_features();
    out.resize(d);
    double psi = std::exp(xi) * (t - tau);
    for (int k = 0; k < d; ++k) {
        double x = -(v[k] * psi + w[k]) * inv_pq[k];
        if (x > 700.0) x = 700.0;
        if (x < -700.0) x = -700.0;
        out[k] = clamp_unit_open(1.0 / (1.0 + g[k] * std::exp(x)));
    }
}

Eigen::VectorXd TrajectoryModel::values(const IndividualParams &ind, double t) const {
    Eigen::VectorXd w = A * ind.sources;
    Eigen::VectorXd out;
    values_with_shift(w, ind.tau, ind.xi, t, out);
    return out;
}

Eigen::VectorXd trajectory_values(const PopulationParams &pop,
                                  const IndividualParams &ind, double t) {
    return TrajectoryModel(pop).values(ind, t);
}

} // namespace mixcourse
