#pragma once

#include "mixcourse/saem.hpp"

#include <vector>

namespace mixcourse {

// ------------------------------------------------------------ label alignment
// Matches estimated clusters to true clusters by z-score-normalized Euclidean
// distance between parameter rows (columns pooled over both tables;
// zero-variance columns are dropped with a warning). Returns assign with
// assign[t] = index of the estimated cluster matched to true cluster t.
std::vector<int> align_labels(const Eigen::MatrixXd &true_params,
                              const Eigen::MatrixXd &est_params);

// Rewrites estimated labels into true-cluster indexing under an alignment.
std::vector<int> relabel_to_truth(const std::vector<int> &est_labels,
                                  const std::vector<int> &assign);

// k x (2 + d) table of cluster centers: tau mean, xi mean, and the realized
// per-feature space shifts w = A s. The alignment input for align_labels.
Eigen::MatrixXd cluster_param_table(const FittedModel &model);

// ------------------------------------------------------- classification stats
struct ClassificationMetrics {
    Eigen::MatrixXd confusion; // k x k counts, rows = true clusters
    double accuracy = 0.0;
    Eigen::VectorXd recall;    // per true cluster; NaN when the row is empty
    Eigen::VectorXd precision; // per predicted cluster; NaN when col is empty
};
ClassificationMetrics classification_metrics(const std::vector<int> &true_labels,
                                             const std::vector<int> &pred_labels,
                                             int n_clusters);

// Mean with a 95% percentile interval (type-7 quantiles at 2.5% / 97.5%).
struct MetricSummary {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};
MetricSummary metric_ci(const std::vector<double> &values);

// ---------------------------------------------------------- parameter recovery
// bias = mean(est) - truth; SE = sd(est) with n-1 denominator;
// RMSE = sqrt(mean((est - truth)^2)).
struct RecoveryStats {
    double truth = 0.0;
    double estimate = 0.0; // mean over replicates
    double bias = 0.0;
    double se = 0.0;
    double rmse = 0.0;
};
RecoveryStats recovery_stats(const std::vector<double> &estimates, double truth);

// Argmin of an ICL list; ties resolve to the smallest index.
int select_from_icl(const std::vector<double> &icls);

} // namespace mixcourse
