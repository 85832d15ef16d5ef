#pragma once

#include "mixcourse/io.hpp"
#include "mixcourse/rng.hpp"
#include "mixcourse/saem.hpp"
#include "mixcourse/types.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace mixcourse {

// A data-generating configuration: cluster proportions, per-cluster means of
// the individual latents, and the per-score space-shift targets. The shift
// table holds the nominal w values per cluster; generation projects them onto
// the complement of v (the model's own shift space) and applies the
// proportion-weighted centering convention, so the generating parameters obey
// the same identifiability constraints the estimator enforces.
struct Scenario {
    std::string name;
    int n_features = 0;
    int n_clusters = 0;
    int n_sources = 1;
    Eigen::VectorXd proportions; // simplex, length n_clusters
    Eigen::VectorXd tau_mean;    // length n_clusters
    Eigen::VectorXd xi_mean;     // length n_clusters
    Eigen::MatrixXd shift_table; // n_clusters x n_features, nominal w values
    double sigma_tau = 5.0;
    double sigma_xi = 0.5;
    double sigma_source = 1.0;
    double noise_sd = 0.05;
    int n_visits = 6;

    // unpublished fixed effects; defaults documented below
    Eigen::VectorXd positions;  // p_k, length n_features
    Eigen::VectorXd velocities; // v_k, length n_features

    void validate() const;
};

// Presets: scenario_2_2 (two scores, two clusters), scenario_3_2 (three
// scores, two clusters), scenario_multi (six scores, three clusters).
// Fixed effects are not published for these configurations; the presets use
// p_k = 0.3 and v_k = 0.05 for every score, with the mixing-matrix scale set
// so the sources keep unit-order magnitude.
Scenario scenario_preset(const std::string &name);
std::vector<std::string> scenario_preset_names();

// Model-space parameters realized from a scenario: population fixed effects
// plus the mixture over individual latents actually used for generation.
struct ScenarioModel {
    PopulationParams population;
    MixtureParams mixture;
    Eigen::VectorXd noise_sd;    // per feature
    Eigen::MatrixXd cluster_shifts; // realized per-cluster w = A s, k x d
};
ScenarioModel realize_scenario(const Scenario &sc);

// Strictly increasing visit schedule centered on tau: a uniform grid over
// [tau - 5, tau + 5] with each point jittered by +-30% of the grid gap,
// re-sorted. A single visit lands uniformly within +-1.5 of tau.
Eigen::VectorXd generate_visit_times(double tau, int n_visits, Rng &rng);

struct SimulationResult {
    Dataset data;
    LatentTable truth;       // true cluster + latents per patient
    FittedModel truth_model; // generating parameters in model-file form
};

// Draws patients independently (cluster, tau, xi, sources, visit times,
// noise), evaluates the logistic trajectories, and clamps observations into
// (0,1). Bit-reproducible for a fixed seed: patient i consumes only the
// stream derived from (seed, i+1).
SimulationResult simulate(const Scenario &sc, int n_patients,
                          std::uint64_t seed);

} // namespace mixcourse
