#include "mixcourse/posthoc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mixcourse {

FittedModel PosthocResult::as_model() const {
    FittedModel m = base;
    m.mixture = mixture;
    m.memberships = memberships;
    m.labels = labels;
    const int n = static_cast<int>(labels.size());
    const int k = mixture.n_clusters();
    m.individuals = base.individuals;
    m.entropy_raw_value = entropy_raw(m.memberships);
    m.entropy_normalized =
        k >= 2 ? normalized_entropy(m.entropy_raw_value, n, k)
               : std::numeric_limits<double>::quiet_NaN();
    m.dof = model_dof(m.population.n_features(), m.population.n_sources(), k);
    m.complete_loglik = std::numeric_limits<double>::quiet_NaN();
    m.icl = std::numeric_limits<double>::quiet_NaN();
    m.config = base.config;
    m.config.n_clusters = k;
    return m;
}

PosthocResult posthoc_classify(const Dataset &data, const PosthocConfig &cfg) {
    if (cfg.n_clusters < 1) throw InputError("posthoc n_clusters must be >= 1");
    FitConfig stage1 = cfg.fit;
    stage1.n_clusters = 1;

    PosthocResult out;
    out.base = fit(data, stage1);

    const int n = data.n_patients();
    const int q = stage1.n_sources;
    Eigen::MatrixXd points(n, 2 + q);
    for (int i = 0; i < n; ++i) {
        points(i, 0) = out.base.individuals[i].tau;
        points(i, 1) = out.base.individuals[i].xi;
        points.row(i).segment(2, q) = out.base.individuals[i].sources.transpose();
    }

    GmmConfig gcfg = cfg.gmm;
    gcfg.seed = Rng::stream(stage1.seed, 0x9057, cfg.n_clusters).next_u64();
    out.gmm = gmm_fit(points, cfg.n_clusters, gcfg);
    out.memberships = gmm_responsibilities(out.gmm, points);

    const int k = cfg.n_clusters;
    out.labels.resize(n);
    for (int i = 0; i < n; ++i) {
        Eigen::VectorXd row = out.memberships.row(i).transpose();
        out.labels[i] = hard_assign(row);
    }

    // map component parameters back into cluster form; the per-cluster source
    // SDs stay at the model's fixed value, so only means carry over
    out.mixture.proportions = out.gmm.weights;
    out.mixture.tau_mean.resize(k);
    out.mixture.tau_sd.resize(k);
    out.mixture.xi_mean.resize(k);
    out.mixture.xi_sd.resize(k);
    out.mixture.source_means.resize(k, q);
    for (int c = 0; c < k; ++c) {
        out.mixture.tau_mean[c] = out.gmm.means(c, 0);
        out.mixture.xi_mean[c] = out.gmm.means(c, 1);
        out.mixture.tau_sd[c] = std::max(std::sqrt(out.gmm.covariances[c](0, 0)), 1e-3);
        out.mixture.xi_sd[c] = std::max(std::sqrt(out.gmm.covariances[c](1, 1)), 1e-3);
        out.mixture.source_means.row(c) = out.gmm.means.row(c).segment(2, q);
    }
    return out;
}

} // namespace mixcourse
