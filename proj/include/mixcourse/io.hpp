#pragma once

#include "mixcourse/saem.hpp"
#include "mixcourse/types.hpp"

#include <string>
#include <vector>

namespace mixcourse {

// Shortest decimal string that parses back to the exact same double.
std::string format_double(double x);

// Strict double parser; the whole token must be consumed.
double parse_double(const std::string &token, const std::string &context);

std::string read_text_file(const std::string &path);

// Write-temp-then-rename so readers never observe a partial file.
void atomic_write_text(const std::string &path, const std::string &content);

// ------------------------------------------------------------------ data CSV
// Header: patient_id,time,<feature names>. One row per visit, empty cell =
// missing value. Rows belonging to one patient must appear in time order.
Dataset read_dataset_csv(const std::string &path);
void write_dataset_csv(const std::string &path, const Dataset &data);

// ------------------------------------------------------------- truth tables
// Per-patient latent dump: patient_id,cluster,tau,xi,source_1..q with
// 1-based cluster ids in the file.
struct LatentTable {
    std::vector<std::string> ids;
    std::vector<int> labels; // 0-based in memory
    std::vector<IndividualParams> individuals;
};
void write_latent_csv(const std::string &path, const LatentTable &table);
LatentTable read_latent_csv(const std::string &path);

// --------------------------------------------------------- memberships CSV
// patient_id,cluster,prob_1..k with 1-based cluster ids in the file.
struct MembershipTable {
    std::vector<std::string> ids;
    std::vector<int> labels;    // 0-based in memory
    Eigen::MatrixXd memberships; // n x k
};
void write_membership_csv(const std::string &path, const MembershipTable &table);
MembershipTable read_membership_csv(const std::string &path);

// ----------------------------------------------------------------- model JSON
// Single-document model file: population + mixture parameters, noise SDs,
// per-patient estimates, and fit summary numbers. Non-finite summary values
// round-trip through JSON null.
void save_model(const std::string &path, const FittedModel &model);
FittedModel load_model(const std::string &path);

} // namespace mixcourse
