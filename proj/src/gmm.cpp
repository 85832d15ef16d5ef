#include "mixcourse/gmm.hpp"

#include "mixcourse/log.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>

namespace mixcourse {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// Cholesky of cov + reg I; falls back to the caller-provided pooled
// covariance when the factorization fails despite regularization.
struct Component {
    Eigen::LLT<Eigen::MatrixXd> llt;
    double logdet = 0.0;

    bool factorize(const Eigen::MatrixXd &cov, double reg) {
        Eigen::MatrixXd m = cov;
        m.diagonal().array() += reg;
        llt.compute(m);
        if (llt.info() != Eigen::Success) return false;
        logdet = 0.0;
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            logdet += 2.0 * std::log(llt.matrixL()(i, i));
        return std::isfinite(logdet);
    }

    double log_density(const Eigen::VectorXd &x, const Eigen::VectorXd &mean,
                       int q) const {
        Eigen::VectorXd diff = x - mean;
        Eigen::VectorXd y = llt.matrixL().solve(diff);
        return -0.5 * (q * kLog2Pi + logdet + y.squaredNorm());
    }
};

Eigen::MatrixXd pooled_covariance(const Eigen::MatrixXd &x) {
    Eigen::RowVectorXd mean = x.colwise().mean();
    Eigen::MatrixXd centered = x.rowwise() - mean;
    return centered.transpose() * centered / static_cast<double>(x.rows());
}

struct EmRun {
    GmmModel model;
    bool ok = false;
};

EmRun run_em(const Eigen::MatrixXd &x, int k, const GmmConfig &cfg, Rng &rng) {
    const int n = static_cast<int>(x.rows());
    const int q = static_cast<int>(x.cols());
    EmRun run;
    GmmModel &m = run.model;

    // k-means++ seeding
    std::vector<int> centers;
    centers.push_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(n))));
    Eigen::VectorXd dist2 =
        (x.rowwise() - x.row(centers[0])).rowwise().squaredNorm();
    while (static_cast<int>(centers.size()) < k) {
        double total = dist2.sum();
        int pick;
        if (total <= 0.0) {
            pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
        } else {
            double u = rng.uniform() * total;
            double acc = 0.0;
            pick = n - 1;
            for (int i = 0; i < n; ++i) {
                acc += dist2[i];
                if (u < acc) {
                    pick = i;
                    break;
                }
            }
        }
        centers.push_back(pick);
        dist2 = dist2.cwiseMin(
            (x.rowwise() - x.row(pick)).rowwise().squaredNorm());
    }

    // hard assignment to the nearest seed center gives the first M-step
    Eigen::MatrixXd resp = Eigen::MatrixXd::Zero(n, k);
    for (int i = 0; i < n; ++i) {
        int best = 0;
        double bd = std::numeric_limits<double>::infinity();
        for (int c = 0; c < k; ++c) {
            double d2 = (x.row(i) - x.row(centers[c])).squaredNorm();
            if (d2 < bd) {
                bd = d2;
                best = c;
            }
        }
        resp(i, best) = 1.0;
    }

    m.weights.resize(k);
    m.means.resize(k, q);
    m.covariances.assign(k, Eigen::MatrixXd::Zero(q, q));
    Eigen::MatrixXd pooled = pooled_covariance(x);
    std::vector<Component> comps(k);

    auto m_step = [&]() {
        for (int c = 0; c < k; ++c) {
            double nk = resp.col(c).sum();
            if (nk < 1e-10) {
                // dead component: re-seed on a random point with the pooled
                // spread so EM can recover
                int pick = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));
                m.means.row(c) = x.row(pick);
                m.covariances[c] = pooled;
                m.weights[c] = 1.0 / n;
                log_warn("mixture component %d emptied; re-seeded", c + 1);
                continue;
            }
            m.weights[c] = nk / n;
            m.means.row(c) = (resp.col(c).transpose() * x) / nk;
            Eigen::MatrixXd centered = x.rowwise() - m.means.row(c);
            m.covariances[c] =
                centered.transpose() * (resp.col(c).asDiagonal() * centered) / nk;
        }
        m.weights /= m.weights.sum();
        for (int c = 0; c < k; ++c) {
            if (!comps[c].factorize(m.covariances[c], cfg.reg)) {
                log_warn("component %d covariance is singular; reset to pooled", c + 1);
                m.covariances[c] = pooled;
                if (!comps[c].factorize(m.covariances[c], cfg.reg)) return false;
            }
        }
        return true;
    };

    if (!m_step()) return run;

    double prev = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd logw = m.weights.array().log();
    for (int iter = 0; iter < cfg.max_iter; ++iter) {
        logw = m.weights.array().max(1e-300).log();
        double total_ll = 0.0;
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd lp(k);
            for (int c = 0; c < k; ++c)
                lp[c] = logw[c] +
                        comps[c].log_density(x.row(i).transpose(),
                                             m.means.row(c).transpose(), q);
            double mx = lp.maxCoeff();
            double se = (lp.array() - mx).exp().sum();
            double lse = mx + std::log(se);
            total_ll += lse;
            for (int c = 0; c < k; ++c) resp(i, c) = std::exp(lp[c] - lse);
        }
        m.loglik_trace.push_back(total_ll);
        m.loglik = total_ll;
        if (std::abs(total_ll - prev) / n < cfg.tol) {
            run.ok = true;
            return run;
        }
        prev = total_ll;
        if (!m_step()) return run;
    }
    run.ok = true;
    return run;
}

} // namespace

void GmmConfig::validate() const {
    if (n_init < 1) throw InputError("gmm n_init must be >= 1");
    if (max_iter < 1) throw InputError("gmm max_iter must be >= 1");
    if (!(tol >= 0)) throw InputError("gmm tol must be >= 0");
    if (!(reg >= 0)) throw InputError("gmm reg must be >= 0");
}

GmmModel gmm_fit(const Eigen::MatrixXd &points, int k, const GmmConfig &cfg) {
    cfg.validate();
    const int n = static_cast<int>(points.rows());
    if (k < 1) throw InputError("gmm needs k >= 1");
    if (n <= k) throw InputError("gmm needs more points than components");
    if (points.cols() < 1) throw InputError("gmm needs at least one dimension");
    if (!points.allFinite()) throw InputError("gmm points must be finite");

    GmmModel best;
    bool have = false;
    for (int init = 0; init < cfg.n_init; ++init) {
        Rng rng = Rng::stream(cfg.seed, 0x6b6d, static_cast<std::uint64_t>(init));
        EmRun run = run_em(points, k, cfg, rng);
        if (!run.ok) continue;
        if (!have || run.model.loglik > best.loglik) {
            best = std::move(run.model);
            have = true;
        }
    }
    if (!have)
        throw DivergenceError("every mixture restart failed to factorize");
    return best;
}

Eigen::MatrixXd gmm_responsibilities(const GmmModel &model,
                                     const Eigen::MatrixXd &points) {
    const int n = static_cast<int>(points.rows());
    const int k = model.n_components();
    const int q = model.n_dims();
    if (points.cols() != q)
        throw InputError("points dimensionality disagrees with the mixture");
    std::vector<Component> comps(k);
    for (int c = 0; c < k; ++c)
        if (!comps[c].factorize(model.covariances[c], 1e-12))
            throw DivergenceError("mixture covariance is not positive definite");
    Eigen::MatrixXd resp(n, k);
    Eigen::VectorXd logw = model.weights.array().max(1e-300).log();
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd lp(k);
        for (int c = 0; c < k; ++c)
            lp[c] = logw[c] + comps[c].log_density(points.row(i).transpose(),
                                                   model.means.row(c).transpose(), q);
        double mx = lp.maxCoeff();
        double lse = mx + std::log((lp.array() - mx).exp().sum());
        for (int c = 0; c < k; ++c) resp(i, c) = std::exp(lp[c] - lse);
    }
    return resp;
}

} // namespace mixcourse
