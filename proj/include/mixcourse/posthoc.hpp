#pragma once

#include "mixcourse/gmm.hpp"
#include "mixcourse/saem.hpp"

namespace mixcourse {

struct PosthocConfig {
    int n_clusters = 2;
    FitConfig fit;  // single-cluster stage config; n_clusters is forced to 1
    GmmConfig gmm;  // clustering stage; seed is derived from fit.seed
};

struct PosthocResult {
    FittedModel base; // the single-cluster fit
    GmmModel gmm;     // mixture over (tau, xi, sources) posterior means
    Eigen::MatrixXd memberships; // responsibilities
    std::vector<int> labels;
    MixtureParams mixture; // component parameters mapped back to cluster form

    // The whole result in model-file form: the base fit's population and
    // noise parameters with the clustering stage's mixture, so downstream
    // evaluation treats both pipelines identically.
    FittedModel as_model() const;
};

// Two-stage baseline: fit with one cluster, collect per-patient posterior
// means of (tau, xi, sources), cluster them with a full-covariance Gaussian
// mixture, and map component means back into cluster parameters.
PosthocResult posthoc_classify(const Dataset &data, const PosthocConfig &cfg);

} // namespace mixcourse
