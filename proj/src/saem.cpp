#include "mixcourse/saem.hpp"

#include "mixcourse/io.hpp"
#include "mixcourse/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

namespace mixcourse {

static constexpr double kLogSqrt2Pi = 0.91893853320467274178;
static constexpr double kClusterSdFloor = 1e-3;
static constexpr double kNoiseSdFloor = 1e-4;
static constexpr double kEmptyClusterCount = 1e-8;
// Per-step exponent for the source-scale projection in the M-step. Small so
// the correction acts as a gentle restoring force rather than chasing the
// sampling noise of the within-cluster spread.
static constexpr double kSourceScaleGain = 0.1;
// Cap on the weighted second moment of the source means per column. With a
// unit within-cluster prior, cluster separations live at a few units; a
// runaway moment signals the mixing scale collapsing, not real structure.
static constexpr double kSourceMomentCap = 9.0;

// ----------------------------------------------------------------- validation

void FitConfig::validate() const {
    if (n_clusters < 1) throw InputError("n_clusters must be >= 1");
    if (n_sources < 1) throw InputError("n_sources must be >= 1");
    if (n_iterations < 1) throw InputError("n_iterations must be >= 1");
    if (!(burn_in > 0.0 && burn_in < 1.0))
        throw InputError("burn_in fraction must lie in (0,1)");
    if (!(step_exponent > 0.5 && step_exponent <= 1.0))
        throw InputError("step_exponent must lie in (0.5, 1]");
    if (adapt_window < 1) throw InputError("adapt_window must be >= 1");
    if (!(target_accept > 0.0 && target_accept < 1.0))
        throw InputError("target_accept must lie in (0,1)");
    if (trace_stride < 1) throw InputError("trace_stride must be >= 1");
    if (final_latent_sweeps < 0)
        throw InputError("final_latent_sweeps must be >= 0");
    if (divergence_patience < 1) throw InputError("divergence_patience must be >= 1");
    for (double s : {prop_g, prop_v, prop_beta, prop_tau, prop_xi, prop_source})
        if (!(s >= 0.0) || !std::isfinite(s))
            throw InputError("proposal SDs must be finite and >= 0");
}

void PersonalizeConfig::validate() const {
    if (n_iterations < 1) throw InputError("n_iterations must be >= 1");
    if (!(burn_in > 0.0 && burn_in < 1.0))
        throw InputError("burn_in fraction must lie in (0,1)");
    if (adapt_window < 1) throw InputError("adapt_window must be >= 1");
    if (!(target_accept > 0.0 && target_accept < 1.0))
        throw InputError("target_accept must lie in (0,1)");
}

// ------------------------------------------------------ sufficient statistics

SufficientStats SufficientStats::zeros(int n_clusters, int n_sources,
                                       int n_features) {
    SufficientStats s;
    s.count = Eigen::VectorXd::Zero(n_clusters);
    s.tau_sum = Eigen::VectorXd::Zero(n_clusters);
    s.tau_sumsq = Eigen::VectorXd::Zero(n_clusters);
    s.xi_sum = Eigen::VectorXd::Zero(n_clusters);
    s.xi_sumsq = Eigen::VectorXd::Zero(n_clusters);
    s.src_sum = Eigen::MatrixXd::Zero(n_clusters, n_sources);
    s.src_sumsq = Eigen::MatrixXd::Zero(n_clusters, n_sources);
    s.g_tilde = Eigen::VectorXd::Zero(n_features);
    s.v_tilde = Eigen::VectorXd::Zero(n_features);
    s.beta = Eigen::MatrixXd::Zero(n_features - 1, n_sources);
    s.rss = Eigen::VectorXd::Zero(n_features);
    return s;
}

double step_size(int iteration, int burn_in_iterations, double alpha) {
    if (iteration <= burn_in_iterations) return 1.0;
    return std::pow(static_cast<double>(iteration - burn_in_iterations), -alpha);
}

void update_stats(SufficientStats &S, const SufficientStats &s, double eps) {
    S.count += eps * (s.count - S.count);
    S.tau_sum += eps * (s.tau_sum - S.tau_sum);
    S.tau_sumsq += eps * (s.tau_sumsq - S.tau_sumsq);
    S.xi_sum += eps * (s.xi_sum - S.xi_sum);
    S.xi_sumsq += eps * (s.xi_sumsq - S.xi_sumsq);
    S.src_sum += eps * (s.src_sum - S.src_sum);
    S.src_sumsq += eps * (s.src_sumsq - S.src_sumsq);
    S.g_tilde += eps * (s.g_tilde - S.g_tilde);
    S.v_tilde += eps * (s.v_tilde - S.v_tilde);
    S.beta += eps * (s.beta - S.beta);
    S.rss += eps * (s.rss - S.rss);
}

// --------------------------------------------------------------------- M-step

MaximizeResult maximize(const SufficientStats &S, const HyperParams &hyper,
                        const MixtureParams &previous,
                        const Eigen::VectorXd &obs_per_feature) {
    const int k = static_cast<int>(S.count.size());
    const int q = static_cast<int>(S.src_sum.cols());
    const int d = static_cast<int>(S.g_tilde.size());
    if (previous.n_clusters() != k || previous.n_sources() != q)
        throw InputError("previous mixture shape disagrees with statistics");

    MaximizeResult out;
    out.population.g_tilde = S.g_tilde;
    out.population.v_tilde = S.v_tilde;
    out.population.beta = S.beta;

    MixtureParams mix;
    mix.proportions = Eigen::VectorXd::Zero(k);
    mix.tau_mean = Eigen::VectorXd::Zero(k);
    mix.tau_sd = Eigen::VectorXd::Zero(k);
    mix.xi_mean = Eigen::VectorXd::Zero(k);
    mix.xi_sd = Eigen::VectorXd::Zero(k);
    mix.source_means = Eigen::MatrixXd::Zero(k, q);

    const double total = S.count.sum();
    if (!(total > 0.0)) throw InputError("statistics carry no patient weight");

    for (int c = 0; c < k; ++c) {
        const double n = S.count[c];
        mix.proportions[c] = n / total;
        if (n < kEmptyClusterCount) {
            // keep the previous parameters; the cluster currently has no weight
            mix.tau_mean[c] = previous.tau_mean[c];
            mix.tau_sd[c] = previous.tau_sd[c];
            mix.xi_mean[c] = previous.xi_mean[c];
            mix.xi_sd[c] = previous.xi_sd[c];
            mix.source_means.row(c) = previous.source_means.row(c);
            ++out.empty_clusters;
            continue;
        }
        double tm = S.tau_sum[c] / n;
        double tv = std::max(S.tau_sumsq[c] / n - tm * tm, 0.0);
        mix.tau_mean[c] = tm;
        mix.tau_sd[c] = std::max(std::sqrt(tv), kClusterSdFloor);
        double xm = S.xi_sum[c] / n;
        double xv = std::max(S.xi_sumsq[c] / n - xm * xm, 0.0);
        mix.xi_mean[c] = xm;
        mix.xi_sd[c] = std::max(std::sqrt(xv), kClusterSdFloor);
        for (int l = 0; l < q; ++l) mix.source_means(c, l) = S.src_sum(c, l) / n;
    }

    // Weighted centering projection. The xi shift is compensated into v_tilde
    // so every cluster-mean trajectory is left invariant; source means are
    // re-centered without compensation.
    double m_xi = mix.proportions.dot(mix.xi_mean);
    mix.xi_mean.array() -= m_xi;
    out.population.v_tilde.array() += m_xi;
    for (int l = 0; l < q; ++l) {
        double m_s = mix.proportions.dot(mix.source_means.col(l));
        mix.source_means.col(l).array() -= m_s;
    }

    // Scale projection. The source prior SD is fixed, so the split of each
    // cluster shift into mixing column times source coordinate is pinned only
    // by the within-cluster spread of the sampled sources matching that prior.
    // Nudge the mixing-column scale onto that manifold each step, compensating
    // the source means so the implied cluster shifts are unchanged.
    const double prior_var = hyper.sigma_source * hyper.sigma_source;
    for (int l = 0; l < q; ++l) {
        double wsum = 0.0, vsum = 0.0;
        for (int c = 0; c < k; ++c) {
            const double n = S.count[c];
            if (n < kEmptyClusterCount) continue;
            double mean = S.src_sum(c, l) / n;
            vsum += std::max(S.src_sumsq(c, l) - n * mean * mean, 0.0);
            wsum += n;
        }
        if (wsum < kEmptyClusterCount) continue;
        double within = vsum / wsum;
        if (!(within > 0.0)) continue;
        double lam = std::clamp(
            std::pow(within / prior_var, 0.5 * kSourceScaleGain), 0.5, 2.0);
        out.population.beta.col(l) *= lam;
        mix.source_means.col(l) /= lam;

        // The within-spread saturates at the prior once the mixing column is
        // too small to matter, so it cannot push the scale back up. The
        // between moment can: bound it, again compensating into the column.
        double m2 = 0.0;
        for (int c = 0; c < k; ++c)
            m2 += mix.proportions[c] * mix.source_means(c, l) * mix.source_means(c, l);
        if (m2 > kSourceMomentCap) {
            double shrink = std::sqrt(m2 / kSourceMomentCap);
            mix.source_means.col(l) /= shrink;
            out.population.beta.col(l) *= shrink;
        }
    }

    if (obs_per_feature.size() != d)
        throw InputError("observation counts disagree with feature count");
    out.noise_sd = Eigen::VectorXd::Zero(d);
    for (int f = 0; f < d; ++f) {
        double m = obs_per_feature[f];
        double var = m > 0.0 ? std::max(S.rss[f], 0.0) / m : 0.0;
        out.noise_sd[f] = std::max(std::sqrt(var), kNoiseSdFloor);
    }

    out.mixture = std::move(mix);
    return out;
}

// ------------------------------------------------------------ sampler helpers

namespace {

// Residual sum of squares per feature for one patient at given parameters.
void patient_rss(const TrajectoryModel &tm, const Patient &pat,
                 const Eigen::VectorXd &w, double tau, double xi,
                 Eigen::VectorXd &out, Eigen::VectorXd &pred) {
    const int d = tm.n_features();
    out.setZero(d);
    for (int j = 0; j < pat.n_visits(); ++j) {
        tm.values_with_shift(w, tau, xi, pat.times[j], pred);
        for (int f = 0; f < d; ++f) {
            double y = pat.values(j, f);
            if (std::isnan(y)) continue;
            double r = y - pred[f];
            out[f] += r * r;
        }
    }
}

struct AcceptCounter {
    long acc = 0, tot = 0;
    void add(bool a) {
        acc += a ? 1 : 0;
        ++tot;
    }
    double rate() const { return tot > 0 ? static_cast<double>(acc) / tot : 0.0; }
    void reset() { acc = tot = 0; }
};

enum Block { BG = 0, BV = 1, BBETA = 2, BTAU = 3, BXI = 4, BSRC = 5 };

struct SamplerState {
    PopulationParams pop; // population latents
    std::vector<IndividualParams> ind;
    std::vector<int> z;
    TrajectoryModel tm;
    Eigen::MatrixXd rss;      // n_patients x d, current residual sums
    Eigen::MatrixXd rss_prop; // scratch for population proposals

    SamplerState(const PopulationParams &p, int n, int d)
        : pop(p), tm(p), rss(n, d), rss_prop(n, d) {}
};

// Per-patient naive least-squares slope of one feature; NaN when under-determined.
double feature_slope(const Patient &pat, int f) {
    double st = 0, sy = 0, stt = 0, sty = 0;
    int n = 0;
    for (int j = 0; j < pat.n_visits(); ++j) {
        double y = pat.values(j, f);
        if (std::isnan(y)) continue;
        double t = pat.times[j];
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
        ++n;
    }
    if (n < 2) return std::numeric_limits<double>::quiet_NaN();
    double denom = n * stt - st * st;
    if (std::abs(denom) < 1e-12) return std::numeric_limits<double>::quiet_NaN();
    return (n * sty - st * sy) / denom;
}

} // namespace

// -------------------------------------------------------------- initial state

namespace {

struct InitResult {
    PopulationParams pop;
    std::vector<IndividualParams> ind;
    std::vector<int> z;
    MixtureParams mix;
    Eigen::VectorXd noise_sd;
};

InitResult initialize(const Dataset &data, const FitConfig &cfg) {
    const int d = data.n_features();
    const int q = cfg.n_sources;
    const int n = data.n_patients();
    const int k = cfg.n_clusters;

    InitResult init;

    // positions from pooled feature means, velocities from mean naive slopes
    Eigen::VectorXd mean_y = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd cnt_y = Eigen::VectorXd::Zero(d);
    Eigen::MatrixXd slopes(n, d);
    for (int i = 0; i < n; ++i) {
        const Patient &pat = data.patients[i];
        for (int j = 0; j < pat.n_visits(); ++j)
            for (int f = 0; f < d; ++f) {
                double y = pat.values(j, f);
                if (std::isnan(y)) continue;
                mean_y[f] += y;
                cnt_y[f] += 1.0;
            }
        for (int f = 0; f < d; ++f) slopes(i, f) = feature_slope(pat, f);
    }
    Eigen::VectorXd p0(d), v0(d);
    Eigen::VectorXd pop_slope = Eigen::VectorXd::Zero(d);
    for (int f = 0; f < d; ++f) {
        double m = cnt_y[f] > 0 ? mean_y[f] / cnt_y[f] : 0.5;
        p0[f] = std::clamp(m, 0.05, 0.95);
        double s = 0;
        int c = 0;
        for (int i = 0; i < n; ++i)
            if (!std::isnan(slopes(i, f))) {
                s += slopes(i, f);
                ++c;
            }
        pop_slope[f] = c > 0 ? s / c : 0.0;
        v0[f] = std::clamp(pop_slope[f], 1e-3, 1.0);
    }
    init.pop.g_tilde = g_tilde_from_p(p0);
    init.pop.v_tilde = v_tilde_from_v(v0);

    // individuals: tau from visit midpoints, xi from relative slopes
    Rng jitter_rng = Rng::stream(cfg.seed, 4, 0);
    std::vector<double> t_mid(n), xi0(n), slope_score(n);
    init.ind.resize(n);
    for (int i = 0; i < n; ++i) {
        const Patient &pat = data.patients[i];
        t_mid[i] = pat.times.mean();
        double ratio_sum = 0;
        int ratio_cnt = 0;
        for (int f = 0; f < d; ++f) {
            double s = slopes(i, f);
            double ps = pop_slope[f];
            if (std::isnan(s) || std::abs(ps) < 1e-6) continue;
            ratio_sum += s / ps;
            ++ratio_cnt;
        }
        double ratio = ratio_cnt > 0 ? ratio_sum / ratio_cnt : 1.0;
        ratio = std::clamp(ratio, 0.2, 5.0);
        xi0[i] = std::log(ratio) + 0.05 * jitter_rng.gaussian();
        slope_score[i] = std::isnan(slopes(i, 0)) ? 0.0 : slopes(i, 0);
    }
    double xi_mean0 = std::accumulate(xi0.begin(), xi0.end(), 0.0) / n;
    for (int i = 0; i < n; ++i) {
        init.ind[i].tau = t_mid[i];
        init.ind[i].xi = xi0[i] - xi_mean0;
        init.ind[i].sources = Eigen::VectorXd::Zero(q);
    }

    // warm-start the mixing matrix from the leading directions of per-patient
    // mean residuals projected onto the complement of v
    Eigen::MatrixXd B = orthonormal_complement_basis(v0);
    {
        TrajectoryModel tm0(PopulationParams{init.pop.g_tilde, init.pop.v_tilde,
                                             Eigen::MatrixXd::Zero(d - 1, q)});
        Eigen::VectorXd pred(d);
        Eigen::MatrixXd resid(n, d);
        Eigen::VectorXd w0 = Eigen::VectorXd::Zero(d);
        double noise_ss = 0.0, noise_dof = 0.0, inv_m = 0.0;
        for (int i = 0; i < n; ++i) {
            const Patient &pat = data.patients[i];
            Eigen::VectorXd rsum = Eigen::VectorXd::Zero(d);
            Eigen::VectorXd rsumsq = Eigen::VectorXd::Zero(d);
            Eigen::VectorXd rcnt = Eigen::VectorXd::Zero(d);
            for (int j = 0; j < pat.n_visits(); ++j) {
                tm0.values_with_shift(w0, init.ind[i].tau, init.ind[i].xi,
                                      pat.times[j], pred);
                for (int f = 0; f < d; ++f) {
                    double y = pat.values(j, f);
                    if (std::isnan(y)) continue;
                    double r = y - pred[f];
                    rsum[f] += r;
                    rsumsq[f] += r * r;
                    rcnt[f] += 1.0;
                }
            }
            double m_i = 0.0;
            int m_cnt = 0;
            for (int f = 0; f < d; ++f) {
                resid(i, f) = rcnt[f] > 0 ? rsum[f] / rcnt[f] : 0.0;
                if (rcnt[f] > 1) {
                    noise_ss += rsumsq[f] - rsum[f] * rsum[f] / rcnt[f];
                    noise_dof += rcnt[f] - 1.0;
                }
                if (rcnt[f] > 0) {
                    m_i += rcnt[f];
                    ++m_cnt;
                }
            }
            inv_m += m_cnt > 0 ? m_cnt / m_i : 1.0;
        }
        // Sampling variance contributed by observation noise to each patient's
        // mean residual; subtracted from the spectrum so the mixing scale
        // reflects signal spread, not noise.
        double noise_floor =
            (noise_dof > 0 ? noise_ss / noise_dof : 0.0) * (inv_m / n);
        Eigen::MatrixXd C = resid * B; // n x (d-1) coordinates in the complement
        Eigen::MatrixXd cov = C.transpose() * C / std::max(n - 1, 1);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        init.pop.beta = Eigen::MatrixXd::Zero(d - 1, q);
        for (int l = 0; l < q; ++l) {
            int idx = d - 2 - l; // eigenvalues ascend; take the largest first
            if (idx < 0) break;
            Eigen::VectorXd dir = es.eigenvectors().col(idx);
            double lam = std::max(es.eigenvalues()[idx], 0.0);
            double signal = std::max(lam - noise_floor, 0.1 * lam);
            double scale = std::clamp(std::sqrt(signal) / 1.5, 0.005, 0.5);
            // shrink the coordinates by the signal fraction so the source
            // warm start is not inflated by the noise part of the spectrum
            double shrink = lam > 0.0 ? signal / lam : 1.0;
            init.pop.beta.col(l) = scale * dir;
            for (int i = 0; i < n; ++i)
                init.ind[i].sources[l] =
                    std::clamp(C.row(i).dot(dir) * shrink / scale, -4.0, 4.0);
        }
    }

    // quantile split on standardized (midpoint, first-feature slope) score
    if (k > n) throw InputError("more clusters than patients");
    auto zscore = [&](std::vector<double> &v) {
        double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
        double ss = 0;
        for (double x : v) ss += (x - m) * (x - m);
        double sd = std::sqrt(ss / std::max<std::size_t>(v.size() - 1, 1));
        if (sd < 1e-12) sd = 1.0;
        for (double &x : v) x = (x - m) / sd;
    };
    std::vector<double> zs_mid = t_mid, zs_slope = slope_score;
    zscore(zs_mid);
    zscore(zs_slope);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> score(n);
    for (int i = 0; i < n; ++i) score[i] = zs_mid[i] + zs_slope[i];
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return score[a] < score[b]; });
    init.z.assign(n, 0);
    for (int r = 0; r < n; ++r)
        init.z[order[r]] = std::min(static_cast<int>(
            static_cast<long>(r) * k / n), k - 1);

    // cluster parameters from the initial groups
    init.mix.proportions = Eigen::VectorXd::Zero(k);
    init.mix.tau_mean = Eigen::VectorXd::Zero(k);
    init.mix.tau_sd = Eigen::VectorXd::Zero(k);
    init.mix.xi_mean = Eigen::VectorXd::Zero(k);
    init.mix.xi_sd = Eigen::VectorXd::Zero(k);
    init.mix.source_means = Eigen::MatrixXd::Zero(k, q);
    for (int c = 0; c < k; ++c) {
        double cnt = 0, tsum = 0, xsum = 0;
        Eigen::VectorXd ssum = Eigen::VectorXd::Zero(q);
        for (int i = 0; i < n; ++i)
            if (init.z[i] == c) {
                cnt += 1;
                tsum += init.ind[i].tau;
                xsum += init.ind[i].xi;
                ssum += init.ind[i].sources;
            }
        init.mix.proportions[c] = cnt / n;
        double tmean = tsum / cnt, xmean = xsum / cnt;
        double tss = 0, xss = 0;
        for (int i = 0; i < n; ++i)
            if (init.z[i] == c) {
                tss += (init.ind[i].tau - tmean) * (init.ind[i].tau - tmean);
                xss += (init.ind[i].xi - xmean) * (init.ind[i].xi - xmean);
            }
        init.mix.tau_mean[c] = tmean;
        init.mix.tau_sd[c] = std::max(std::sqrt(tss / cnt), 0.5);
        init.mix.xi_mean[c] = xmean;
        init.mix.xi_sd[c] = std::max(std::sqrt(xss / cnt), 0.1);
        init.mix.source_means.row(c) = (ssum / cnt).transpose();
    }
    // same centering convention as the M-step
    double m_xi = init.mix.proportions.dot(init.mix.xi_mean);
    init.mix.xi_mean.array() -= m_xi;
    init.pop.v_tilde.array() += m_xi;
    for (int l = 0; l < q; ++l) {
        double m_s = init.mix.proportions.dot(init.mix.source_means.col(l));
        init.mix.source_means.col(l).array() -= m_s;
    }

    // noise from residuals at the initial parameters
    TrajectoryModel tm(init.pop);
    Eigen::VectorXd pred(d), rssf = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd w = tm.A * init.ind[i].sources;
        Eigen::VectorXd row(d);
        patient_rss(tm, data.patients[i], w, init.ind[i].tau, init.ind[i].xi, row, pred);
        rssf += row;
    }
    init.noise_sd = Eigen::VectorXd::Zero(d);
    for (int f = 0; f < d; ++f) {
        double m = cnt_y[f];
        init.noise_sd[f] =
            std::max(m > 0 ? std::sqrt(rssf[f] / m) : 0.1, kNoiseSdFloor);
    }
    return init;
}

} // namespace

// ------------------------------------------------------------------- the loop

namespace {

struct SweepContext {
    const Dataset &data;
    const FitConfig &cfg;
    Eigen::VectorXd inv_two_var; // 1/(2 sigma_k^2)
    Eigen::VectorXd noise_sd;
    PopulationParams pop_means;
    MixtureParams mix;
    double prop_sd[6];
    AcceptCounter window[6];
    AcceptCounter overall[6];
    Eigen::MatrixXd memberships;
};

void set_noise(SweepContext &ctx, const Eigen::VectorXd &noise_sd) {
    ctx.noise_sd = noise_sd;
    ctx.inv_two_var = (2.0 * noise_sd.array().square()).inverse();
}

// Joint random-walk update of one population block.
void population_block(SamplerState &st, SweepContext &ctx, Block which,
                      Rng &rng) {
    PopulationParams prop = st.pop;
    double sd = ctx.prop_sd[which];
    switch (which) {
        case BG:
            for (Eigen::Index f = 0; f < prop.g_tilde.size(); ++f)
                prop.g_tilde[f] += sd * rng.gaussian();
            break;
        case BV:
            for (Eigen::Index f = 0; f < prop.v_tilde.size(); ++f)
                prop.v_tilde[f] += sd * rng.gaussian();
            break;
        case BBETA:
            for (Eigen::Index r = 0; r < prop.beta.rows(); ++r)
                for (Eigen::Index c = 0; c < prop.beta.cols(); ++c)
                    prop.beta(r, c) += sd * rng.gaussian();
            break;
        default:
            return;
    }
    TrajectoryModel tm_prop(prop);
    const int n = static_cast<int>(st.rss.rows());
    const int d = static_cast<int>(ctx.noise_sd.size());
    Eigen::VectorXd pred(d), row(d);
    double delta_data = 0.0;
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd w = tm_prop.A * st.ind[i].sources;
        patient_rss(tm_prop, ctx.data.patients[i], w, st.ind[i].tau, st.ind[i].xi,
                    row, pred);
        st.rss_prop.row(i) = row.transpose();
        for (int f = 0; f < d; ++f)
            delta_data += (st.rss(i, f) - row[f]) * ctx.inv_two_var[f];
    }
    double delta_prior = population_prior(prop, ctx.pop_means, ctx.cfg.hyper) -
                         population_prior(st.pop, ctx.pop_means, ctx.cfg.hyper);
    double lr = delta_data + delta_prior;
    bool accept = lr >= 0.0 || std::log(rng.uniform_pos()) < lr;
    if (accept) {
        st.pop = std::move(prop);
        st.tm = std::move(tm_prop);
        st.rss.swap(st.rss_prop);
    }
    ctx.window[which].add(accept);
    ctx.overall[which].add(accept);
}

// per-patient blocks: tau, xi, sources
void patient_blocks(SamplerState &st, SweepContext &ctx, int iter) {
    const int n = static_cast<int>(st.rss.rows());
    const int d = static_cast<int>(ctx.noise_sd.size());
    const int q = static_cast<int>(st.pop.beta.cols());
    Eigen::VectorXd pred(d), row(d);
    for (int i = 0; i < n; ++i) {
        Rng rng = Rng::stream(ctx.cfg.seed, 2, static_cast<std::uint64_t>(iter), i);
        IndividualParams &ind = st.ind[i];
        const Patient &pat = ctx.data.patients[i];
        const int c = st.z[i];
        Eigen::VectorXd w = st.tm.A * ind.sources;

        // tau
        {
            double prop = ind.tau + ctx.prop_sd[BTAU] * rng.gaussian();
            patient_rss(st.tm, pat, w, prop, ind.xi, row, pred);
            double delta = 0;
            for (int f = 0; f < d; ++f)
                delta += (st.rss(i, f) - row[f]) * ctx.inv_two_var[f];
            delta += gaussian_logpdf(prop, ctx.mix.tau_mean[c], ctx.mix.tau_sd[c]) -
                     gaussian_logpdf(ind.tau, ctx.mix.tau_mean[c], ctx.mix.tau_sd[c]);
            bool accept = delta >= 0.0 || std::log(rng.uniform_pos()) < delta;
            if (accept) {
                ind.tau = prop;
                st.rss.row(i) = row.transpose();
            }
            ctx.window[BTAU].add(accept);
            ctx.overall[BTAU].add(accept);
        }
        // xi
        {
            double prop = ind.xi + ctx.prop_sd[BXI] * rng.gaussian();
            patient_rss(st.tm, pat, w, ind.tau, prop, row, pred);
            double delta = 0;
            for (int f = 0; f < d; ++f)
                delta += (st.rss(i, f) - row[f]) * ctx.inv_two_var[f];
            delta += gaussian_logpdf(prop, ctx.mix.xi_mean[c], ctx.mix.xi_sd[c]) -
                     gaussian_logpdf(ind.xi, ctx.mix.xi_mean[c], ctx.mix.xi_sd[c]);
            bool accept = delta >= 0.0 || std::log(rng.uniform_pos()) < delta;
            if (accept) {
                ind.xi = prop;
                st.rss.row(i) = row.transpose();
            }
            ctx.window[BXI].add(accept);
            ctx.overall[BXI].add(accept);
        }
        // sources (joint)
        {
            Eigen::VectorXd prop_s = ind.sources;
            for (int l = 0; l < q; ++l) prop_s[l] += ctx.prop_sd[BSRC] * rng.gaussian();
            Eigen::VectorXd w_prop = st.tm.A * prop_s;
            patient_rss(st.tm, pat, w_prop, ind.tau, ind.xi, row, pred);
            double delta = 0;
            for (int f = 0; f < d; ++f)
                delta += (st.rss(i, f) - row[f]) * ctx.inv_two_var[f];
            for (int l = 0; l < q; ++l) {
                delta += gaussian_logpdf(prop_s[l], ctx.mix.source_means(c, l),
                                         ctx.cfg.hyper.sigma_source) -
                         gaussian_logpdf(ind.sources[l], ctx.mix.source_means(c, l),
                                         ctx.cfg.hyper.sigma_source);
            }
            bool accept = delta >= 0.0 || std::log(rng.uniform_pos()) < delta;
            if (accept) {
                ind.sources = prop_s;
                st.rss.row(i) = row.transpose();
            }
            ctx.window[BSRC].add(accept);
            ctx.overall[BSRC].add(accept);
        }
    }
}

void refresh_indicators(SamplerState &st, SweepContext &ctx, int iter) {
    const int n = static_cast<int>(st.rss.rows());
    const int k = ctx.mix.n_clusters();
    if (ctx.memberships.rows() != n || ctx.memberships.cols() != k)
        ctx.memberships.resize(n, k);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd m = posterior_membership(st.ind[i], ctx.mix, ctx.cfg.hyper);
        ctx.memberships.row(i) = m.transpose();
        if (ctx.cfg.stochastic_indicators) {
            Rng rng = Rng::stream(ctx.cfg.seed, 3, static_cast<std::uint64_t>(iter), i);
            st.z[i] = rng.categorical(m, k);
        } else {
            st.z[i] = hard_assign(m);
        }
    }
}

// Cluster moments are weighted by the indicator posteriors rather than the
// sampled assignments: conditioning the statistics on hard labels selects
// patients by apparent cluster and inflates every between-cluster separation
// when clusters overlap, while the posterior-weighted moments average the
// same statistics over the indicator exactly.
SufficientStats extract_stats(const SamplerState &st,
                              const Eigen::MatrixXd &resp, int k, int q, int d) {
    SufficientStats s = SufficientStats::zeros(k, q, d);
    const int n = static_cast<int>(st.rss.rows());
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < k; ++c) {
            const double g = resp(i, c);
            if (!(g > 0.0)) continue;
            s.count[c] += g;
            s.tau_sum[c] += g * st.ind[i].tau;
            s.tau_sumsq[c] += g * st.ind[i].tau * st.ind[i].tau;
            s.xi_sum[c] += g * st.ind[i].xi;
            s.xi_sumsq[c] += g * st.ind[i].xi * st.ind[i].xi;
            for (int l = 0; l < q; ++l) {
                double v = st.ind[i].sources[l];
                s.src_sum(c, l) += g * v;
                s.src_sumsq(c, l) += g * v * v;
            }
        }
    }
    s.g_tilde = st.pop.g_tilde;
    s.v_tilde = st.pop.v_tilde;
    s.beta = st.pop.beta;
    s.rss = st.rss.colwise().sum().transpose();
    return s;
}

} // namespace

// --------------------------------------------------------------- FittedModel

Eigen::MatrixXd FittedModel::cluster_space_shifts() const {
    Eigen::MatrixXd A = build_mixing_matrix(v_from_v_tilde(population.v_tilde),
                                            population.beta);
    Eigen::MatrixXd w(mixture.n_clusters(), population.n_features());
    for (int c = 0; c < mixture.n_clusters(); ++c)
        w.row(c) = (A * mixture.source_means.row(c).transpose()).transpose();
    return w;
}

// ------------------------------------------------------------------------ fit

FittedModel fit(const Dataset &data, const FitConfig &cfg) {
    cfg.validate();
    data.validate();
    const int d = data.n_features();
    const int n = data.n_patients();
    const int k = cfg.n_clusters;
    const int q = cfg.n_sources;
    if (d < 2) throw InputError("model requires at least 2 features");
    if (q > d - 1) throw InputError("n_sources must be <= n_features - 1");
    if (n < 1) throw InputError("dataset has no patients");
    if (k > n) throw InputError("more clusters than patients");

    InitResult init = initialize(data, cfg);

    SweepContext ctx{data, cfg, {}, {}, {}, {}, {}, {}, {}, {}};
    ctx.pop_means = init.pop;
    ctx.mix = init.mix;
    set_noise(ctx, init.noise_sd);
    ctx.prop_sd[BG] = cfg.prop_g;
    ctx.prop_sd[BV] = cfg.prop_v;
    ctx.prop_sd[BBETA] = cfg.prop_beta;
    ctx.prop_sd[BTAU] = cfg.prop_tau;
    ctx.prop_sd[BXI] = cfg.prop_xi;
    ctx.prop_sd[BSRC] = cfg.prop_source;

    SamplerState st(init.pop, n, d);
    st.ind = init.ind;
    st.z = init.z;

    // observation counts per feature and initial residuals
    Eigen::VectorXd obs_per_feature = Eigen::VectorXd::Zero(d);
    for (int i = 0; i < n; ++i) {
        const Patient &pat = data.patients[i];
        for (int j = 0; j < pat.n_visits(); ++j)
            for (int f = 0; f < d; ++f)
                if (!std::isnan(pat.values(j, f))) obs_per_feature[f] += 1.0;
    }
    {
        Eigen::VectorXd pred(d), row(d);
        for (int i = 0; i < n; ++i) {
            Eigen::VectorXd w = st.tm.A * st.ind[i].sources;
            patient_rss(st.tm, data.patients[i], w, st.ind[i].tau, st.ind[i].xi,
                        row, pred);
            st.rss.row(i) = row.transpose();
        }
    }

    Eigen::MatrixXd z_onehot = Eigen::MatrixXd::Zero(n, k);
    for (int i = 0; i < n; ++i) z_onehot(i, st.z[i]) = 1.0;
    SufficientStats S = extract_stats(st, z_onehot, k, q, d);
    const int k_burn = cfg.burn_in_iterations();

    // posterior-mean accumulators (post burn-in)
    Eigen::VectorXd acc_tau = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd acc_xi = Eigen::VectorXd::Zero(n);
    Eigen::MatrixXd acc_src = Eigen::MatrixXd::Zero(n, q);
    Eigen::MatrixXd acc_mem = Eigen::MatrixXd::Zero(n, k);
    long acc_count = 0;

    std::string trace;
    if (!cfg.trace_path.empty()) {
        trace.reserve(1 << 16);
        trace += "iteration,step_size,complete_loglik,accept_g,accept_v,accept_beta,"
                 "accept_tau,accept_xi,accept_source";
        for (int c = 0; c < k; ++c) trace += ",pi_" + std::to_string(c + 1);
        for (int f = 0; f < d; ++f)
            trace += ",noise_sd_" + std::to_string(f + 1);
        trace += "\n";
    }

    int nonfinite_streak = 0;
    int empty_events = 0;
    double complete_ll = 0.0;

    for (int iter = 1; iter <= cfg.n_iterations; ++iter) {
        Rng pop_rng = Rng::stream(cfg.seed, 1, static_cast<std::uint64_t>(iter));
        population_block(st, ctx, BG, pop_rng);
        population_block(st, ctx, BV, pop_rng);
        population_block(st, ctx, BBETA, pop_rng);
        patient_blocks(st, ctx, iter);
        refresh_indicators(st, ctx, iter);

        SufficientStats s = extract_stats(st, ctx.memberships, k, q, d);
        double eps = step_size(iter, k_burn, cfg.step_exponent);
        update_stats(S, s, eps);

        MaximizeResult m = maximize(S, cfg.hyper, ctx.mix, obs_per_feature);
        ctx.pop_means = m.population;
        ctx.mix = m.mixture;
        set_noise(ctx, m.noise_sd);
        empty_events += m.empty_clusters;

        // proposal adaptation, frozen after burn-in
        if (iter <= k_burn && iter % cfg.adapt_window == 0) {
            for (int b = 0; b < 6; ++b) {
                double rate = ctx.window[b].rate();
                ctx.prop_sd[b] = std::clamp(
                    ctx.prop_sd[b] * std::exp(rate - cfg.target_accept), 1e-10, 1e4);
                ctx.window[b].reset();
            }
        }

        if (iter > k_burn) {
            for (int i = 0; i < n; ++i) {
                acc_tau[i] += st.ind[i].tau;
                acc_xi[i] += st.ind[i].xi;
                acc_src.row(i) += st.ind[i].sources.transpose();
            }
            acc_mem += ctx.memberships;
            ++acc_count;
        }

        // complete-data log-likelihood at the current state
        double data_ll = 0.0;
        for (int f = 0; f < d; ++f) {
            double col = st.rss.col(f).sum();
            data_ll += -obs_per_feature[f] * (std::log(ctx.noise_sd[f]) + kLogSqrt2Pi) -
                       col * ctx.inv_two_var[f];
        }
        complete_ll = data_ll +
                      population_prior(st.pop, ctx.pop_means, cfg.hyper) +
                      mixture_re_logdensity(st.ind, st.z, ctx.mix, cfg.hyper);
        if (!std::isfinite(complete_ll)) {
            if (++nonfinite_streak > cfg.divergence_patience) {
                std::ostringstream oss;
                oss << "estimation diverged: complete-data log-likelihood non-finite for "
                    << nonfinite_streak << " consecutive iterations (iteration " << iter
                    << ", proposal SDs g=" << ctx.prop_sd[BG] << " v=" << ctx.prop_sd[BV]
                    << " beta=" << ctx.prop_sd[BBETA] << " tau=" << ctx.prop_sd[BTAU]
                    << " xi=" << ctx.prop_sd[BXI] << " s=" << ctx.prop_sd[BSRC] << ")";
                throw DivergenceError(oss.str());
            }
        } else {
            nonfinite_streak = 0;
        }

        if (!cfg.trace_path.empty() &&
            (iter % cfg.trace_stride == 0 || iter == cfg.n_iterations)) {
            trace += std::to_string(iter);
            trace += ',';
            trace += format_double(eps);
            trace += ',';
            trace += format_double(complete_ll);
            for (int b = 0; b < 6; ++b) {
                trace += ',';
                trace += format_double(ctx.overall[b].rate());
            }
            for (int c = 0; c < k; ++c) {
                trace += ',';
                trace += format_double(ctx.mix.proportions[c]);
            }
            for (int f = 0; f < d; ++f) {
                trace += ',';
                trace += format_double(ctx.noise_sd[f]);
            }
            trace += '\n';
        }
    }

    // acceptance diagnostics cover the estimation loop only
    FitDiagnostics diag;
    diag.accept_g = ctx.overall[BG].rate();
    diag.accept_v = ctx.overall[BV].rate();
    diag.accept_beta = ctx.overall[BBETA].rate();
    diag.accept_tau = ctx.overall[BTAU].rate();
    diag.accept_xi = ctx.overall[BXI].rate();
    diag.accept_source = ctx.overall[BSRC].rate();
    diag.empty_cluster_events = empty_events;
    diag.iterations = cfg.n_iterations;
    if (empty_events > 0)
        log_warn("M-step: empty-cluster events in %d of %d iterations "
                 "(previous parameters retained)",
                 empty_events, cfg.n_iterations);

    // Frozen refresh: resample latents under the final parameter estimates so
    // the reported posterior means and memberships are taken at the reported
    // parameters rather than along the tail of the estimation path.
    if (cfg.final_latent_sweeps > 0) {
        st.pop = ctx.pop_means;
        st.tm = TrajectoryModel(st.pop);
        {
            Eigen::VectorXd pred(d), row(d);
            for (int i = 0; i < n; ++i) {
                Eigen::VectorXd w = st.tm.A * st.ind[i].sources;
                patient_rss(st.tm, data.patients[i], w, st.ind[i].tau,
                            st.ind[i].xi, row, pred);
                st.rss.row(i) = row.transpose();
            }
        }
        acc_tau.setZero();
        acc_xi.setZero();
        acc_src.setZero();
        acc_mem.setZero();
        acc_count = 0;
        for (int sweep = 1; sweep <= cfg.final_latent_sweeps; ++sweep) {
            int iter = cfg.n_iterations + sweep;
            patient_blocks(st, ctx, iter);
            refresh_indicators(st, ctx, iter);
            for (int i = 0; i < n; ++i) {
                acc_tau[i] += st.ind[i].tau;
                acc_xi[i] += st.ind[i].xi;
                acc_src.row(i) += st.ind[i].sources.transpose();
            }
            acc_mem += ctx.memberships;
            ++acc_count;
        }
    }

    // assemble the fitted model at the posterior means
    FittedModel out;
    out.population = ctx.pop_means;
    out.mixture = ctx.mix;
    out.noise_sd = ctx.noise_sd;
    out.individuals.resize(n);
    for (int i = 0; i < n; ++i) {
        out.individuals[i].tau = acc_tau[i] / acc_count;
        out.individuals[i].xi = acc_xi[i] / acc_count;
        out.individuals[i].sources = (acc_src.row(i) / acc_count).transpose();
    }
    // memberships averaged over the post-burn-in chain: this integrates over
    // latent uncertainty instead of evaluating at the posterior-mean point,
    // which matters when individual latents are weakly identified.
    out.memberships = acc_mem / static_cast<double>(acc_count);
    out.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd m = out.memberships.row(i).transpose();
        out.labels[i] = hard_assign(m);
    }
    out.complete_loglik =
        integrated_completed_loglik(data, out.population, out.noise_sd,
                                    out.mixture, cfg.hyper, out.labels,
                                    out.individuals);
    out.entropy_raw_value = entropy_raw(out.memberships);
    out.entropy_normalized =
        k >= 2 ? normalized_entropy(out.entropy_raw_value, n, k)
               : std::numeric_limits<double>::quiet_NaN();
    out.dof = model_dof(d, q, k);
    out.icl = icl_score(out.complete_loglik, out.dof, n, out.entropy_raw_value);
    out.feature_names = data.feature_names;
    out.patient_ids.resize(n);
    for (int i = 0; i < n; ++i) out.patient_ids[i] = data.patients[i].id;
    out.config = cfg;
    out.diagnostics = diag;

    if (!cfg.trace_path.empty()) atomic_write_text(cfg.trace_path, trace);
    return out;
}

// ---------------------------------------------------------------- personalize

PersonalizeResult personalize(const FittedModel &model, const Dataset &data,
                              const PersonalizeConfig &cfg) {
    cfg.validate();
    data.validate();
    if (data.n_features() != model.population.n_features())
        throw InputError("dataset feature count disagrees with the model");
    const int d = data.n_features();
    const int q = model.population.n_sources();
    const int k = model.mixture.n_clusters();
    const int n = data.n_patients();
    const HyperParams &hyper = model.config.hyper;

    TrajectoryModel tm(model.population);
    Eigen::VectorXd inv_two_var =
        (2.0 * model.noise_sd.array().square()).inverse();

    PersonalizeResult out;
    out.individuals.resize(n);
    out.memberships.resize(n, k);
    out.labels.resize(n);

    const int burn = static_cast<int>(cfg.burn_in * cfg.n_iterations);

    for (int i = 0; i < n; ++i) {
        const Patient &pat = data.patients[i];
        bool has_obs = false;
        for (int j = 0; j < pat.n_visits() && !has_obs; ++j)
            for (int f = 0; f < d && !has_obs; ++f)
                if (!std::isnan(pat.values(j, f))) has_obs = true;
        if (!has_obs) {
            // mixture-prior mode: the best cluster-center candidate
            int best_c = 0;
            double best_lp = -std::numeric_limits<double>::infinity();
            for (int c = 0; c < k; ++c) {
                IndividualParams center;
                center.tau = model.mixture.tau_mean[c];
                center.xi = model.mixture.xi_mean[c];
                center.sources = model.mixture.source_means.row(c).transpose();
                double lp = mixture_re_patient(center, c, model.mixture, hyper);
                if (lp > best_lp) {
                    best_lp = lp;
                    best_c = c;
                }
            }
            IndividualParams center;
            center.tau = model.mixture.tau_mean[best_c];
            center.xi = model.mixture.xi_mean[best_c];
            center.sources = model.mixture.source_means.row(best_c).transpose();
            out.individuals[i] = center;
            Eigen::VectorXd m = posterior_membership(center, model.mixture, hyper);
            out.memberships.row(i) = m.transpose();
            out.labels[i] = hard_assign(m);
            continue;
        }

        Rng rng = Rng::stream(cfg.seed, 7, i);
        IndividualParams ind;
        ind.tau = pat.times.mean();
        ind.xi = 0.0;
        ind.sources = Eigen::VectorXd::Zero(q);
        Eigen::VectorXd m0 = posterior_membership(ind, model.mixture, hyper);
        int c = hard_assign(m0);

        Eigen::VectorXd pred(d), row(d), cur_rss(d);
        Eigen::VectorXd w = tm.A * ind.sources;
        patient_rss(tm, pat, w, ind.tau, ind.xi, cur_rss, pred);
        auto data_ll = [&](const Eigen::VectorXd &r) {
            double s = 0;
            for (int f = 0; f < d; ++f) s -= r[f] * inv_two_var[f];
            return s;
        };

        double prop_sd[3] = {cfg.prop_tau, cfg.prop_xi, cfg.prop_source};
        AcceptCounter win[3];
        IndividualParams best = ind;
        int best_c = c;
        double best_lp = data_ll(cur_rss) + mixture_re_patient(ind, c, model.mixture, hyper);

        for (int iter = 1; iter <= cfg.n_iterations; ++iter) {
            // tau
            {
                double prop = ind.tau + prop_sd[0] * rng.gaussian();
                patient_rss(tm, pat, w, prop, ind.xi, row, pred);
                double delta = data_ll(row) - data_ll(cur_rss) +
                               gaussian_logpdf(prop, model.mixture.tau_mean[c],
                                               model.mixture.tau_sd[c]) -
                               gaussian_logpdf(ind.tau, model.mixture.tau_mean[c],
                                               model.mixture.tau_sd[c]);
                bool a = delta >= 0.0 || std::log(rng.uniform_pos()) < delta;
                if (a) {
                    ind.tau = prop;
                    cur_rss = row;
                }
                win[0].add(a);
            }
            // xi
            {
                double prop = ind.xi + prop_sd[1] * rng.gaussian();
                patient_rss(tm, pat, w, ind.tau, prop, row, pred);
                double delta = data_ll(row) - data_ll(cur_rss) +
                               gaussian_logpdf(prop, model.mixture.xi_mean[c],
                                               model.mixture.xi_sd[c]) -
                               gaussian_logpdf(ind.xi, model.mixture.xi_mean[c],
                                               model.mixture.xi_sd[c]);
                bool a = delta >= 0.0 || std::log(rng.uniform_pos()) < delta;
                if (a) {
                    ind.xi = prop;
                    cur_rss = row;
                }
                win[1].add(a);
            }
            // sources
            {
                Eigen::VectorXd prop_s = ind.sources;
                for (int l = 0; l < q; ++l) prop_s[l] += prop_sd[2] * rng.gaussian();
                Eigen::VectorXd w_prop = tm.A * prop_s;
                patient_rss(tm, pat, w_prop, ind.tau, ind.xi, row, pred);
                double delta = data_ll(row) - data_ll(cur_rss);
                for (int l = 0; l < q; ++l)
                    delta += gaussian_logpdf(prop_s[l], model.mixture.source_means(c, l),
                                             hyper.sigma_source) -
                             gaussian_logpdf(ind.sources[l],
                                             model.mixture.source_means(c, l),
                                             hyper.sigma_source);
                bool a = delta >= 0.0 || std::log(rng.uniform_pos()) < delta;
                if (a) {
                    ind.sources = prop_s;
                    w = w_prop;
                    cur_rss = row;
                }
                win[2].add(a);
            }
            // indicator refresh + mode tracking
            Eigen::VectorXd m = posterior_membership(ind, model.mixture, hyper);
            c = hard_assign(m);
            double lp = data_ll(cur_rss) + mixture_re_patient(ind, c, model.mixture, hyper);
            if (lp > best_lp) {
                best_lp = lp;
                best = ind;
                best_c = c;
            }
            if (iter <= burn && iter % cfg.adapt_window == 0) {
                for (int b = 0; b < 3; ++b) {
                    prop_sd[b] = std::clamp(
                        prop_sd[b] * std::exp(win[b].rate() - cfg.target_accept),
                        1e-10, 1e4);
                    win[b].reset();
                }
            }
        }
        (void)best_c;
        out.individuals[i] = best;
        Eigen::VectorXd m = posterior_membership(best, model.mixture, hyper);
        out.memberships.row(i) = m.transpose();
        out.labels[i] = hard_assign(m);
    }
    return out;
}

// ------------------------------------------------------------ model selection

SelectionResult select_n_clusters(const Dataset &data,
                                  const std::vector<int> &candidates,
                                  const FitConfig &cfg) {
    if (candidates.empty()) throw InputError("no candidate cluster counts given");
    SelectionResult out;
    out.table.resize(candidates.size());
    out.models.resize(candidates.size());
    for (std::size_t idx = 0; idx < candidates.size(); ++idx) {
        SelectionRow &row = out.table[idx];
        row.n_clusters = candidates[idx];
        FitConfig c = cfg;
        c.n_clusters = candidates[idx];
        c.seed = Rng::stream(cfg.seed, 0x5e1ec7, candidates[idx]).next_u64();
        c.trace_path.clear();
        try {
            FittedModel m = fit(data, c);
            row.icl = m.icl;
            row.complete_loglik = m.complete_loglik;
            row.entropy_normalized = m.entropy_normalized;
            row.dof = m.dof;
            row.ok = true;
            out.models[idx] = std::move(m);
        } catch (const DivergenceError &e) {
            row.ok = false;
            row.error = e.what();
            log_warn("candidate k=%d failed: %s", candidates[idx], e.what());
        }
    }
    for (std::size_t idx = 0; idx < out.table.size(); ++idx) {
        if (!out.table[idx].ok) continue;
        if (out.best_index < 0 || out.table[idx].icl < out.table[out.best_index].icl)
            out.best_index = static_cast<int>(idx);
    }
    if (out.best_index < 0)
        throw DivergenceError("every candidate cluster count failed to fit");
    return out;
}

} // namespace mixcourse
