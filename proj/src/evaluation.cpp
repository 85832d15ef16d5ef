#include "mixcourse/evaluation.hpp"

#include "mixcourse/hungarian.hpp"
#include "mixcourse/log.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace mixcourse {

std::vector<int> align_labels(const Eigen::MatrixXd &true_params,
                              const Eigen::MatrixXd &est_params) {
    const int k = static_cast<int>(true_params.rows());
    const int m = static_cast<int>(true_params.cols());
    if (est_params.rows() != k || est_params.cols() != m)
        throw InputError("alignment tables must have equal shapes");
    if (k == 0) return {};

    // pooled z-scoring per column over both tables
    Eigen::MatrixXd pooled(2 * k, m);
    pooled.topRows(k) = true_params;
    pooled.bottomRows(k) = est_params;
    std::vector<int> kept;
    for (int c = 0; c < m; ++c) {
        double mean = pooled.col(c).mean();
        double sd = std::sqrt((pooled.col(c).array() - mean).square().sum() /
                              (2.0 * k - 1.0));
        if (sd < 1e-12) {
            log_warn("alignment column %d has zero variance; dropped", c + 1);
            continue;
        }
        pooled.col(c) = (pooled.col(c).array() - mean) / sd;
        kept.push_back(c);
    }

    Eigen::MatrixXd cost(k, k);
    for (int t = 0; t < k; ++t)
        for (int e = 0; e < k; ++e) {
            double d2 = 0.0;
            for (int c : kept) {
                double diff = pooled(t, c) - pooled(k + e, c);
                d2 += diff * diff;
            }
            cost(t, e) = std::sqrt(d2);
        }
    return hungarian_assign(cost);
}

std::vector<int> relabel_to_truth(const std::vector<int> &est_labels,
                                  const std::vector<int> &assign) {
    std::vector<int> inverse(assign.size(), -1);
    for (std::size_t t = 0; t < assign.size(); ++t) {
        int e = assign[t];
        if (e < 0 || e >= static_cast<int>(assign.size()) || inverse[e] != -1)
            throw InputError("alignment is not a permutation");
        inverse[e] = static_cast<int>(t);
    }
    std::vector<int> out(est_labels.size());
    for (std::size_t i = 0; i < est_labels.size(); ++i) {
        int e = est_labels[i];
        if (e < 0 || e >= static_cast<int>(assign.size()))
            throw InputError("label out of range for the alignment");
        out[i] = inverse[e];
    }
    return out;
}

Eigen::MatrixXd cluster_param_table(const FittedModel &model) {
    const int k = model.mixture.n_clusters();
    const int d = model.population.n_features();
    Eigen::MatrixXd shifts = model.cluster_space_shifts();
    Eigen::MatrixXd table(k, 2 + d);
    for (int c = 0; c < k; ++c) {
        table(c, 0) = model.mixture.tau_mean[c];
        table(c, 1) = model.mixture.xi_mean[c];
        table.row(c).segment(2, d) = shifts.row(c);
    }
    return table;
}

ClassificationMetrics classification_metrics(const std::vector<int> &true_labels,
                                             const std::vector<int> &pred_labels,
                                             int n_clusters) {
    if (true_labels.size() != pred_labels.size())
        throw InputError("label vectors must have equal length");
    if (true_labels.empty()) throw InputError("no labels to score");
    const double nan = std::numeric_limits<double>::quiet_NaN();

    ClassificationMetrics out;
    out.confusion = Eigen::MatrixXd::Zero(n_clusters, n_clusters);
    for (std::size_t i = 0; i < true_labels.size(); ++i) {
        int t = true_labels[i], p = pred_labels[i];
        if (t < 0 || t >= n_clusters || p < 0 || p >= n_clusters)
            throw InputError("label out of range in classification metrics");
        out.confusion(t, p) += 1.0;
    }
    out.accuracy = out.confusion.trace() / static_cast<double>(true_labels.size());
    out.recall.resize(n_clusters);
    out.precision.resize(n_clusters);
    for (int c = 0; c < n_clusters; ++c) {
        double row = out.confusion.row(c).sum();
        double col = out.confusion.col(c).sum();
        out.recall[c] = row > 0 ? out.confusion(c, c) / row : nan;
        out.precision[c] = col > 0 ? out.confusion(c, c) / col : nan;
    }
    return out;
}

MetricSummary metric_ci(const std::vector<double> &values) {
    if (values.empty()) throw InputError("no values to summarize");
    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    auto quantile = [&](double p) {
        // type-7 (linear interpolation between order statistics)
        double h = (static_cast<double>(sorted.size()) - 1.0) * p;
        std::size_t lo = static_cast<std::size_t>(std::floor(h));
        std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        double frac = h - static_cast<double>(lo);
        return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
    };
    MetricSummary s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(values.size());
    s.lo = quantile(0.025);
    s.hi = quantile(0.975);
    return s;
}

RecoveryStats recovery_stats(const std::vector<double> &estimates, double truth) {
    if (estimates.empty()) throw InputError("no estimates to summarize");
    const double n = static_cast<double>(estimates.size());
    RecoveryStats s;
    s.truth = truth;
    double sum = 0.0, sq_err = 0.0;
    for (double e : estimates) {
        sum += e;
        sq_err += (e - truth) * (e - truth);
    }
    s.estimate = sum / n;
    s.bias = s.estimate - truth;
    s.rmse = std::sqrt(sq_err / n);
    double ss = 0.0;
    for (double e : estimates) ss += (e - s.estimate) * (e - s.estimate);
    s.se = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    return s;
}

int select_from_icl(const std::vector<double> &icls) {
    if (icls.empty()) throw InputError("no criterion values to select from");
    int best = 0;
    for (std::size_t i = 1; i < icls.size(); ++i)
        if (icls[i] < icls[best]) best = static_cast<int>(i);
    return best;
}

} // namespace mixcourse
