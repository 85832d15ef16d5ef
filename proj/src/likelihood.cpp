#include "mixcourse/likelihood.hpp"

#include <cmath>
#include <limits>

namespace mixcourse {

static constexpr double kLogSqrt2Pi = 0.91893853320467274178;

double gaussian_logpdf(double x, double mean, double sd) {
    double z = (x - mean) / sd;
    return -std::log(sd) - kLogSqrt2Pi - 0.5 * z * z;
}

// ------------------------------------------------------------ data attachment

double data_attachment_patient(const TrajectoryModel &model, const Patient &pat,
                               const IndividualParams &ind,
                               const Eigen::VectorXd &noise_sd) {
    const int d = model.n_features();
    Eigen::VectorXd w = model.A * ind.sources;
    Eigen::VectorXd pred(d);
    double total = 0.0;
    for (int j = 0; j < pat.n_visits(); ++j) {
        model.values_with_shift(w, ind.tau, ind.xi, pat.times[j], pred);
        for (int k = 0; k < d; ++k) {
            double y = pat.values(j, k);
            if (std::isnan(y)) continue;
            double z = (y - pred[k]) / noise_sd[k];
            total += -std::log(noise_sd[k]) - kLogSqrt2Pi - 0.5 * z * z;
        }
    }
    return total;
}

double data_attachment(const Dataset &data, const PopulationParams &pop,
                       const std::vector<IndividualParams> &individuals,
                       const Eigen::VectorXd &noise_sd) {
    if (static_cast<int>(individuals.size()) != data.n_patients())
        throw InputError("one IndividualParams per patient required");
    if (noise_sd.size() != data.n_features())
        throw InputError("noise_sd must have one entry per feature");
    for (Eigen::Index k = 0; k < noise_sd.size(); ++k)
        if (!(noise_sd[k] > 0.0)) throw InputError("noise SDs must be positive");
    TrajectoryModel model(pop);
    double total = 0.0;
    for (int i = 0; i < data.n_patients(); ++i)
        total += data_attachment_patient(model, data.patients[i], individuals[i],
                                         noise_sd);
    return total;
}

// ---------------------------------------------------------- population prior

double population_prior(const PopulationParams &latent,
                        const PopulationParams &means, const HyperParams &hyper) {
    if (latent.g_tilde.size() != means.g_tilde.size() ||
        latent.beta.rows() != means.beta.rows() ||
        latent.beta.cols() != means.beta.cols())
        throw InputError("population latent/mean shapes disagree");
    double total = 0.0;
    for (Eigen::Index k = 0; k < latent.g_tilde.size(); ++k) {
        total += gaussian_logpdf(latent.g_tilde[k], means.g_tilde[k], hyper.sigma_g_tilde);
        total += gaussian_logpdf(latent.v_tilde[k], means.v_tilde[k], hyper.sigma_v_tilde);
    }
    for (Eigen::Index r = 0; r < latent.beta.rows(); ++r)
        for (Eigen::Index c = 0; c < latent.beta.cols(); ++c)
            total += gaussian_logpdf(latent.beta(r, c), means.beta(r, c), hyper.sigma_beta);
    return total;
}

// ----------------------------------------------------- mixture random effects

double mixture_bracket(double z, double log_pi, double mean, double sd) {
    double u = (z - mean) / sd;
    return log_pi - std::log(sd) - kLogSqrt2Pi - 0.5 * u * u;
}

double mixture_gauss_patient(const IndividualParams &ind, int cluster,
                             const MixtureParams &mix, const HyperParams &hyper) {
    double total = gaussian_logpdf(ind.tau, mix.tau_mean[cluster], mix.tau_sd[cluster]) +
                   gaussian_logpdf(ind.xi, mix.xi_mean[cluster], mix.xi_sd[cluster]);
    for (Eigen::Index l = 0; l < ind.sources.size(); ++l)
        total += gaussian_logpdf(ind.sources[l], mix.source_means(cluster, l),
                                 hyper.sigma_source);
    return total;
}

double mixture_re_patient(const IndividualParams &ind, int cluster,
                          const MixtureParams &mix, const HyperParams &hyper) {
    double pi = mix.proportions[cluster];
    if (!(pi > 0.0)) return -std::numeric_limits<double>::infinity();
    return std::log(pi) + mixture_gauss_patient(ind, cluster, mix, hyper);
}

double mixture_re_logdensity(const std::vector<IndividualParams> &individuals,
                             const std::vector<int> &indicators,
                             const MixtureParams &mix, const HyperParams &hyper) {
    if (individuals.size() != indicators.size())
        throw InputError("one indicator per patient required");
    const int k = mix.n_clusters();
    double total = 0.0;
    for (std::size_t i = 0; i < individuals.size(); ++i) {
        int c = indicators[i];
        if (c < 0 || c >= k) throw InputError("indicator out of range");
        double term = mixture_re_patient(individuals[i], c, mix, hyper);
        if (std::isinf(term)) return -std::numeric_limits<double>::infinity();
        total += term;
    }
    return total;
}

// ------------------------------------------------- integrated data likelihood

namespace {

// Objective of the per-patient Laplace approximation: cluster-conditional
// joint log-density of the observations and the latents, as a function of
// the latent vector x = (tau, xi, s_1..s_q).
struct ConditionalJoint {
    const TrajectoryModel &model;
    const Patient &pat;
    int cluster;
    const MixtureParams &mix;
    const HyperParams &hyper;
    const Eigen::VectorXd &noise_sd;
    mutable IndividualParams scratch;

    double operator()(const Eigen::VectorXd &x) const {
        scratch.tau = x[0];
        scratch.xi = x[1];
        for (Eigen::Index l = 0; l + 2 < x.size(); ++l)
            scratch.sources[l] = x[l + 2];
        return data_attachment_patient(model, pat, scratch, noise_sd) +
               mixture_gauss_patient(scratch, cluster, mix, hyper);
    }
};

} // namespace

double integrated_attachment_patient(const TrajectoryModel &model,
                                     const Patient &pat, int cluster,
                                     const MixtureParams &mix,
                                     const HyperParams &hyper,
                                     const Eigen::VectorXd &noise_sd,
                                     const IndividualParams &start) {
    const int q = mix.n_sources();
    const int m = 2 + q;
    if (cluster < 0 || cluster >= mix.n_clusters())
        throw InputError("cluster index out of range");

    ConditionalJoint f{model, pat,   cluster,
                       mix,   hyper, noise_sd,
                       IndividualParams{0.0, 0.0, Eigen::VectorXd::Zero(q)}};

    Eigen::VectorXd x(m);
    x[0] = start.tau;
    x[1] = start.xi;
    for (int l = 0; l < q; ++l) x[l + 2] = start.sources[l];

    // Per-coordinate scales for steps and finite differences.
    Eigen::VectorXd scale(m);
    scale[0] = mix.tau_sd[cluster];
    scale[1] = mix.xi_sd[cluster];
    for (int l = 0; l < q; ++l) scale[l + 2] = hyper.sigma_source;

    // Mode search: coordinate-wise parabolic steps to get close, then full
    // Newton with finite-difference derivatives to polish. The conditional
    // is smooth and the prior keeps it integrable, so this converges fast
    // from a posterior-mean start.
    double fx = f(x);
    for (int sweep = 0; sweep < 40; ++sweep) {
        double moved = 0.0;
        for (int j = 0; j < m; ++j) {
            const double h = 0.1 * scale[j];
            Eigen::VectorXd xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            double fp = f(xp), fm = f(xm);
            double denom = fp - 2.0 * fx + fm;
            double delta;
            if (denom < -1e-12)
                delta = -0.5 * h * (fp - fm) / denom;
            else
                delta = fp > fm ? h : -h;
            delta = std::clamp(delta, -4.0 * scale[j], 4.0 * scale[j]);
            Eigen::VectorXd xn = x;
            xn[j] += delta;
            double fn = f(xn);
            // keep the best of the four points just evaluated
            if (fp > fn) { fn = fp; xn = xp; }
            if (fm > fn) { fn = fm; xn = xm; }
            if (fn > fx) {
                moved = std::max(moved, std::abs((xn - x).maxCoeff()) +
                                            std::abs((xn - x).minCoeff()));
                x = xn;
                fx = fn;
            }
        }
        if (moved < 1e-9) break;
    }

    // Finite-difference gradient and Hessian at the current point.
    auto derivatives = [&](const Eigen::VectorXd &at, Eigen::VectorXd &g,
                           Eigen::MatrixXd &H) {
        const double fc = f(at);
        Eigen::VectorXd fph(m), fmh(m), hs(m);
        for (int j = 0; j < m; ++j) {
            hs[j] = 5e-3 * scale[j];
            Eigen::VectorXd xp = at, xm = at;
            xp[j] += hs[j];
            xm[j] -= hs[j];
            fph[j] = f(xp);
            fmh[j] = f(xm);
            g[j] = (fph[j] - fmh[j]) / (2.0 * hs[j]);
            H(j, j) = (fph[j] - 2.0 * fc + fmh[j]) / (hs[j] * hs[j]);
        }
        for (int a = 0; a < m; ++a)
            for (int b = a + 1; b < m; ++b) {
                Eigen::VectorXd xpp = at, xpm = at, xmp = at, xmm = at;
                xpp[a] += hs[a]; xpp[b] += hs[b];
                xpm[a] += hs[a]; xpm[b] -= hs[b];
                xmp[a] -= hs[a]; xmp[b] += hs[b];
                xmm[a] -= hs[a]; xmm[b] -= hs[b];
                H(a, b) = H(b, a) =
                    (f(xpp) - f(xpm) - f(xmp) + f(xmm)) / (4.0 * hs[a] * hs[b]);
            }
    };

    Eigen::VectorXd g(m);
    Eigen::MatrixXd H(m, m);
    for (int iter = 0; iter < 8; ++iter) {
        derivatives(x, g, H);
        Eigen::MatrixXd neg = -H;
        Eigen::LLT<Eigen::MatrixXd> llt(neg);
        Eigen::VectorXd step;
        if (llt.info() == Eigen::Success)
            step = llt.solve(g);
        else
            step = g.cwiseProduct(scale.cwiseProduct(scale)); // scaled ascent
        bool improved = false;
        for (double damp = 1.0; damp > 1e-4; damp *= 0.5) {
            Eigen::VectorXd xn = x + damp * step;
            double fn = f(xn);
            if (fn > fx) {
                x = xn;
                fx = fn;
                improved = true;
                break;
            }
        }
        if (!improved || g.norm() * scale.maxCoeff() < 1e-10) break;
    }
    derivatives(x, g, H);

    // Laplace volume: 0.5 * (m log 2pi - log det(-H)), with the curvature
    // floored away from zero so flat directions cannot blow the volume up.
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(-H);
    const double floor = 1e-8 / (scale.maxCoeff() * scale.maxCoeff());
    double logdet = 0.0;
    for (int j = 0; j < m; ++j)
        logdet += std::log(std::max(es.eigenvalues()[j], floor));
    return fx + 0.5 * (m * std::log(2.0 * M_PI) - logdet);
}

double integrated_completed_loglik(const Dataset &data,
                                   const PopulationParams &pop,
                                   const Eigen::VectorXd &noise_sd,
                                   const MixtureParams &mix,
                                   const HyperParams &hyper,
                                   const std::vector<int> &labels,
                                   const std::vector<IndividualParams> &starts) {
    const int n = data.n_patients();
    if (static_cast<int>(labels.size()) != n ||
        static_cast<int>(starts.size()) != n)
        throw InputError("one label and one latent start per patient required");
    TrajectoryModel model(pop);
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        int c = labels[i];
        if (c < 0 || c >= mix.n_clusters())
            throw InputError("label out of range");
        double pi = mix.proportions[c];
        if (!(pi > 0.0)) return -std::numeric_limits<double>::infinity();
        total += std::log(pi) +
                 integrated_attachment_patient(model, data.patients[i], c, mix,
                                               hyper, noise_sd, starts[i]);
    }
    return total;
}

// -------------------------------------------------------- cluster memberships

Eigen::VectorXd posterior_membership(const IndividualParams &ind,
                                     const MixtureParams &mix,
                                     const HyperParams &hyper) {
    const int k = mix.n_clusters();
    if (static_cast<int>(ind.sources.size()) != mix.n_sources())
        throw InputError("individual sources disagree with mixture source count");
    Eigen::VectorXd score(k);
    for (int c = 0; c < k; ++c) score[c] = mixture_re_patient(ind, c, mix, hyper);
    // log-sum-exp normalization
    double m = score.maxCoeff();
    Eigen::VectorXd out(k);
    double denom = 0.0;
    for (int c = 0; c < k; ++c) {
        out[c] = std::exp(score[c] - m);
        denom += out[c];
    }
    out /= denom;
    return out;
}

int hard_assign(const Eigen::VectorXd &membership) {
    int best = 0;
    for (int c = 1; c < membership.size(); ++c)
        if (membership[c] > membership[best]) best = c;
    return best;
}

// -------------------------------------------------------- entropy + selection

double entropy_raw(const Eigen::MatrixXd &memberships) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < memberships.rows(); ++i)
        for (Eigen::Index c = 0; c < memberships.cols(); ++c) {
            double m = memberships(i, c);
            if (m > 0.0) total -= m * std::log(m);
        }
    return total;
}

double normalized_entropy(double entropy_raw_value, int n_patients,
                          int n_clusters) {
    if (n_clusters < 2)
        throw InputError("normalized entropy is undefined for a single cluster");
    if (n_patients < 1) throw InputError("normalized entropy needs patients");
    double e = entropy_raw_value / (n_patients * std::log(static_cast<double>(n_clusters)));
    if (e < 0.0) return 0.0;
    if (e > 1.0) return 1.0;
    return e;
}

int model_dof(int n_features, int n_sources, int n_clusters) {
    const int d = n_features, q = n_sources, k = n_clusters;
    return 2 * d + (d - 1) * q + k * (2 + q) + 2 * k + (k - 1) + d;
}

double icl_score(double complete_loglik, int dof, int n_patients,
                 double entropy_raw_value) {
    return -2.0 * complete_loglik +
           dof * std::log(static_cast<double>(n_patients)) +
           2.0 * entropy_raw_value;
}

} // namespace mixcourse
