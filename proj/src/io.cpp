#include "mixcourse/io.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_map>

using nlohmann::json;

namespace mixcourse {

std::string format_double(double x) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string &token, const std::string &context) {
    const char *begin = token.data();
    const char *end = begin + token.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    while (end > begin && (*(end - 1) == ' ' || *(end - 1) == '\t' ||
                           *(end - 1) == '\r'))
        --end;
    double value = 0.0;
    auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc() || res.ptr != end)
        throw InputError("expected a number in " + context + ", got '" + token + "'");
    return value;
}

std::string read_text_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path + " for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failure on " + path);
    return ss.str();
}

void atomic_write_text(const std::string &path, const std::string &content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    if (target.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(target.parent_path(), ec);
        if (ec)
            throw IoError("cannot create directory " +
                          target.parent_path().string() + ": " + ec.message());
    }
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open " + tmp + " for writing");
        out << content;
        out.flush();
        if (!out) throw IoError("write failure on " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, target, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename " + tmp + " to " + path);
    }
}

// -------------------------------------------------------------------- CSV

namespace {

std::vector<std::string> split_csv_line(const std::string &line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    out.push_back(cur);
    return out;
}

std::string trimmed(const std::string &s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::string> read_lines(const std::string &path) {
    std::string text = read_text_file(path);
    std::vector<std::string> lines;
    std::string cur;
    for (char ch : text) {
        if (ch == '\n') {
            lines.push_back(cur);
            cur.clear();
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) lines.push_back(cur);
    return lines;
}

} // namespace

Dataset read_dataset_csv(const std::string &path) {
    std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) throw InputError(path + ": empty data file");
    std::vector<std::string> header = split_csv_line(lines[0]);
    if (header.size() < 3 || trimmed(header[0]) != "patient_id" ||
        trimmed(header[1]) != "time")
        throw InputError(path + ": header must start with patient_id,time and "
                                "carry at least one feature column");
    Dataset data;
    for (std::size_t c = 2; c < header.size(); ++c) {
        std::string name = trimmed(header[c]);
        if (name.empty())
            throw InputError(path + ": empty feature name in header column " +
                             std::to_string(c + 1));
        data.feature_names.push_back(name);
    }
    const int d = data.n_features();
    std::unordered_map<std::string, std::size_t> index;
    std::vector<std::vector<double>> times;
    std::vector<std::vector<double>> rows;
    std::vector<std::size_t> owner;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (trimmed(lines[ln]).empty()) continue;
        std::vector<std::string> cells = split_csv_line(lines[ln]);
        std::string where = path + " line " + std::to_string(ln + 1);
        if (cells.size() != header.size())
            throw InputError(where + ": expected " + std::to_string(header.size()) +
                             " cells, got " + std::to_string(cells.size()));
        std::string id = trimmed(cells[0]);
        if (id.empty()) throw InputError(where + ": empty patient_id");
        auto it = index.find(id);
        std::size_t pi;
        if (it == index.end()) {
            pi = index.size();
            index.emplace(id, pi);
            data.patients.push_back(Patient{id, {}, {}});
            times.emplace_back();
        } else {
            pi = it->second;
        }
        times[pi].push_back(parse_double(cells[1], where + " (time)"));
        std::vector<double> row(d);
        for (int f = 0; f < d; ++f) {
            std::string cell = trimmed(cells[2 + f]);
            row[f] = cell.empty()
                         ? std::numeric_limits<double>::quiet_NaN()
                         : parse_double(cell, where + " (" + data.feature_names[f] + ")");
        }
        rows.push_back(std::move(row));
        owner.push_back(pi);
    }
    // pack rows per patient, preserving file order
    std::vector<int> filled(data.patients.size(), 0);
    for (std::size_t pi = 0; pi < data.patients.size(); ++pi) {
        Patient &pat = data.patients[pi];
        int nv = static_cast<int>(times[pi].size());
        pat.times.resize(nv);
        pat.values.resize(nv, d);
        for (int j = 0; j < nv; ++j) pat.times[j] = times[pi][j];
    }
    for (std::size_t r = 0; r < rows.size(); ++r) {
        Patient &pat = data.patients[owner[r]];
        int j = filled[owner[r]]++;
        for (int f = 0; f < d; ++f) pat.values(j, f) = rows[r][f];
    }
    data.validate();
    return data;
}

void write_dataset_csv(const std::string &path, const Dataset &data) {
    std::string out = "patient_id,time";
    for (const std::string &f : data.feature_names) out += "," + f;
    out += '\n';
    for (const Patient &pat : data.patients) {
        for (int j = 0; j < pat.n_visits(); ++j) {
            out += pat.id;
            out += ',';
            out += format_double(pat.times[j]);
            for (int f = 0; f < data.n_features(); ++f) {
                out += ',';
                double y = pat.values(j, f);
                if (!std::isnan(y)) out += format_double(y);
            }
            out += '\n';
        }
    }
    atomic_write_text(path, out);
}

// ----------------------------------------------------------- latent tables

void write_latent_csv(const std::string &path, const LatentTable &table) {
    const int q = table.individuals.empty()
                      ? 0
                      : static_cast<int>(table.individuals[0].sources.size());
    std::string out = "patient_id,cluster,tau,xi";
    for (int l = 0; l < q; ++l) out += ",source_" + std::to_string(l + 1);
    out += '\n';
    for (std::size_t i = 0; i < table.ids.size(); ++i) {
        out += table.ids[i];
        out += ',';
        out += std::to_string(table.labels[i] + 1);
        out += ',';
        out += format_double(table.individuals[i].tau);
        out += ',';
        out += format_double(table.individuals[i].xi);
        for (int l = 0; l < q; ++l) {
            out += ',';
            out += format_double(table.individuals[i].sources[l]);
        }
        out += '\n';
    }
    atomic_write_text(path, out);
}

LatentTable read_latent_csv(const std::string &path) {
    std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) throw InputError(path + ": empty file");
    std::vector<std::string> header = split_csv_line(lines[0]);
    if (header.size() < 4 || trimmed(header[0]) != "patient_id" ||
        trimmed(header[1]) != "cluster" || trimmed(header[2]) != "tau" ||
        trimmed(header[3]) != "xi")
        throw InputError(path + ": header must be patient_id,cluster,tau,xi"
                                "[,source_*]");
    const int q = static_cast<int>(header.size()) - 4;
    LatentTable table;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (trimmed(lines[ln]).empty()) continue;
        std::vector<std::string> cells = split_csv_line(lines[ln]);
        std::string where = path + " line " + std::to_string(ln + 1);
        if (cells.size() != header.size())
            throw InputError(where + ": wrong cell count");
        table.ids.push_back(trimmed(cells[0]));
        double c = parse_double(cells[1], where + " (cluster)");
        if (c < 1 || c != std::floor(c))
            throw InputError(where + ": cluster ids are 1-based integers");
        table.labels.push_back(static_cast<int>(c) - 1);
        IndividualParams ind;
        ind.tau = parse_double(cells[2], where + " (tau)");
        ind.xi = parse_double(cells[3], where + " (xi)");
        ind.sources.resize(q);
        for (int l = 0; l < q; ++l)
            ind.sources[l] = parse_double(cells[4 + l], where + " (source)");
        table.individuals.push_back(std::move(ind));
    }
    return table;
}

// ---------------------------------------------------------- membership files

void write_membership_csv(const std::string &path, const MembershipTable &table) {
    const int k = static_cast<int>(table.memberships.cols());
    std::string out = "patient_id,cluster";
    for (int c = 0; c < k; ++c) out += ",prob_" + std::to_string(c + 1);
    out += '\n';
    for (std::size_t i = 0; i < table.ids.size(); ++i) {
        out += table.ids[i];
        out += ',';
        out += std::to_string(table.labels[i] + 1);
        for (int c = 0; c < k; ++c) {
            out += ',';
            out += format_double(table.memberships(static_cast<int>(i), c));
        }
        out += '\n';
    }
    atomic_write_text(path, out);
}

MembershipTable read_membership_csv(const std::string &path) {
    std::vector<std::string> lines = read_lines(path);
    if (lines.empty()) throw InputError(path + ": empty file");
    std::vector<std::string> header = split_csv_line(lines[0]);
    if (header.size() < 3 || trimmed(header[0]) != "patient_id" ||
        trimmed(header[1]) != "cluster")
        throw InputError(path + ": header must be patient_id,cluster,prob_*");
    const int k = static_cast<int>(header.size()) - 2;
    MembershipTable table;
    std::vector<Eigen::VectorXd> probs;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (trimmed(lines[ln]).empty()) continue;
        std::vector<std::string> cells = split_csv_line(lines[ln]);
        std::string where = path + " line " + std::to_string(ln + 1);
        if (cells.size() != header.size())
            throw InputError(where + ": wrong cell count");
        table.ids.push_back(trimmed(cells[0]));
        double c = parse_double(cells[1], where + " (cluster)");
        if (c < 1 || c != std::floor(c))
            throw InputError(where + ": cluster ids are 1-based integers");
        table.labels.push_back(static_cast<int>(c) - 1);
        Eigen::VectorXd p(k);
        for (int j = 0; j < k; ++j)
            p[j] = parse_double(cells[2 + j], where + " (prob)");
        probs.push_back(std::move(p));
    }
    table.memberships.resize(static_cast<int>(probs.size()), k);
    for (std::size_t i = 0; i < probs.size(); ++i)
        table.memberships.row(static_cast<int>(i)) = probs[i].transpose();
    return table;
}

// ------------------------------------------------------------------ model JSON

namespace {

json vec_to_json(const Eigen::VectorXd &v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json mat_to_json(const Eigen::MatrixXd &m) {
    json a = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        a.push_back(std::move(row));
    }
    return a;
}

Eigen::VectorXd vec_from_json(const json &j, const std::string &what) {
    if (!j.is_array()) throw InputError(what + " must be an array");
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw InputError(what + " must hold numbers");
        v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
    }
    return v;
}

Eigen::MatrixXd mat_from_json(const json &j, const std::string &what) {
    if (!j.is_array()) throw InputError(what + " must be an array of rows");
    const std::size_t rows = j.size();
    std::size_t cols = 0;
    if (rows > 0) {
        if (!j[0].is_array()) throw InputError(what + " rows must be arrays");
        cols = j[0].size();
    }
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        if (!j[r].is_array() || j[r].size() != cols)
            throw InputError(what + " rows must share one length");
        for (std::size_t c = 0; c < cols; ++c) {
            if (!j[r][c].is_number())
                throw InputError(what + " must hold numbers");
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                j[r][c].get<double>();
        }
    }
    return m;
}

// NaN/Inf round-trip through null.
json finite_or_null(double x) {
    if (std::isfinite(x)) return json(x);
    return json(nullptr);
}

double number_or_nan(const json &j, const std::string &what) {
    if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
    if (!j.is_number()) throw InputError(what + " must be a number or null");
    return j.get<double>();
}

const json &require(const json &j, const char *key, const std::string &where) {
    auto it = j.find(key);
    if (it == j.end())
        throw InputError(where + ": missing key '" + std::string(key) + "'");
    return *it;
}

} // namespace

void save_model(const std::string &path, const FittedModel &model) {
    json doc;
    doc["format"] = "mixcourse-model";
    doc["version"] = 1;
    doc["features"] = model.feature_names;
    doc["population"] = {{"g_tilde", vec_to_json(model.population.g_tilde)},
                         {"v_tilde", vec_to_json(model.population.v_tilde)},
                         {"beta", mat_to_json(model.population.beta)}};
    doc["mixture"] = {{"proportions", vec_to_json(model.mixture.proportions)},
                      {"tau_mean", vec_to_json(model.mixture.tau_mean)},
                      {"tau_sd", vec_to_json(model.mixture.tau_sd)},
                      {"xi_mean", vec_to_json(model.mixture.xi_mean)},
                      {"xi_sd", vec_to_json(model.mixture.xi_sd)},
                      {"source_means", mat_to_json(model.mixture.source_means)}};
    doc["noise_sd"] = vec_to_json(model.noise_sd);
    doc["hyper"] = {{"sigma_g_tilde", model.config.hyper.sigma_g_tilde},
                    {"sigma_v_tilde", model.config.hyper.sigma_v_tilde},
                    {"sigma_beta", model.config.hyper.sigma_beta},
                    {"sigma_source", model.config.hyper.sigma_source}};
    doc["fit"] = {{"n_clusters", model.mixture.n_clusters()},
                  {"n_sources", model.mixture.n_sources()},
                  {"n_iterations", model.config.n_iterations},
                  {"burn_in", model.config.burn_in},
                  {"step_exponent", model.config.step_exponent},
                  {"stochastic_indicators", model.config.stochastic_indicators},
                  {"seed", model.config.seed},
                  {"complete_loglik", finite_or_null(model.complete_loglik)},
                  {"entropy_raw", finite_or_null(model.entropy_raw_value)},
                  {"entropy_normalized", finite_or_null(model.entropy_normalized)},
                  {"icl", finite_or_null(model.icl)},
                  {"dof", model.dof},
                  {"accept",
                   {{"g", model.diagnostics.accept_g},
                    {"v", model.diagnostics.accept_v},
                    {"beta", model.diagnostics.accept_beta},
                    {"tau", model.diagnostics.accept_tau},
                    {"xi", model.diagnostics.accept_xi},
                    {"source", model.diagnostics.accept_source}}},
                  {"empty_cluster_events", model.diagnostics.empty_cluster_events}};
    json inds = json::array();
    for (std::size_t i = 0; i < model.individuals.size(); ++i) {
        json ind;
        ind["id"] = model.patient_ids[i];
        ind["cluster"] = model.labels[i] + 1;
        ind["tau"] = model.individuals[i].tau;
        ind["xi"] = model.individuals[i].xi;
        ind["sources"] = vec_to_json(model.individuals[i].sources);
        json probs = json::array();
        for (Eigen::Index c = 0; c < model.memberships.cols(); ++c)
            probs.push_back(model.memberships(static_cast<Eigen::Index>(i), c));
        ind["memberships"] = probs;
        inds.push_back(std::move(ind));
    }
    doc["individuals"] = std::move(inds);
    atomic_write_text(path, doc.dump(2) + "\n");
}

FittedModel load_model(const std::string &path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error &e) {
        throw InputError(path + ": invalid JSON (" + std::string(e.what()) + ")");
    }
    const std::string where = path;
    if (require(doc, "format", where) != "mixcourse-model")
        throw InputError(path + ": not a model file");
    if (require(doc, "version", where).get<int>() != 1)
        throw InputError(path + ": unsupported model version");

    FittedModel m;
    m.feature_names =
        require(doc, "features", where).get<std::vector<std::string>>();
    const json &pop = require(doc, "population", where);
    m.population.g_tilde = vec_from_json(require(pop, "g_tilde", where), "g_tilde");
    m.population.v_tilde = vec_from_json(require(pop, "v_tilde", where), "v_tilde");
    m.population.beta = mat_from_json(require(pop, "beta", where), "beta");
    const json &mix = require(doc, "mixture", where);
    m.mixture.proportions =
        vec_from_json(require(mix, "proportions", where), "proportions");
    m.mixture.tau_mean = vec_from_json(require(mix, "tau_mean", where), "tau_mean");
    m.mixture.tau_sd = vec_from_json(require(mix, "tau_sd", where), "tau_sd");
    m.mixture.xi_mean = vec_from_json(require(mix, "xi_mean", where), "xi_mean");
    m.mixture.xi_sd = vec_from_json(require(mix, "xi_sd", where), "xi_sd");
    m.mixture.source_means =
        mat_from_json(require(mix, "source_means", where), "source_means");
    m.noise_sd = vec_from_json(require(doc, "noise_sd", where), "noise_sd");

    const json &hyper = require(doc, "hyper", where);
    m.config.hyper.sigma_g_tilde = require(hyper, "sigma_g_tilde", where).get<double>();
    m.config.hyper.sigma_v_tilde = require(hyper, "sigma_v_tilde", where).get<double>();
    m.config.hyper.sigma_beta = require(hyper, "sigma_beta", where).get<double>();
    m.config.hyper.sigma_source = require(hyper, "sigma_source", where).get<double>();

    const json &fitj = require(doc, "fit", where);
    m.config.n_clusters = require(fitj, "n_clusters", where).get<int>();
    m.config.n_sources = require(fitj, "n_sources", where).get<int>();
    m.config.n_iterations = require(fitj, "n_iterations", where).get<int>();
    m.config.burn_in = require(fitj, "burn_in", where).get<double>();
    m.config.step_exponent = require(fitj, "step_exponent", where).get<double>();
    m.config.stochastic_indicators =
        require(fitj, "stochastic_indicators", where).get<bool>();
    m.config.seed = require(fitj, "seed", where).get<std::uint64_t>();
    m.complete_loglik = number_or_nan(require(fitj, "complete_loglik", where),
                                      "complete_loglik");
    m.entropy_raw_value =
        number_or_nan(require(fitj, "entropy_raw", where), "entropy_raw");
    m.entropy_normalized = number_or_nan(
        require(fitj, "entropy_normalized", where), "entropy_normalized");
    m.icl = number_or_nan(require(fitj, "icl", where), "icl");
    m.dof = require(fitj, "dof", where).get<int>();
    const json &acc = require(fitj, "accept", where);
    m.diagnostics.accept_g = require(acc, "g", where).get<double>();
    m.diagnostics.accept_v = require(acc, "v", where).get<double>();
    m.diagnostics.accept_beta = require(acc, "beta", where).get<double>();
    m.diagnostics.accept_tau = require(acc, "tau", where).get<double>();
    m.diagnostics.accept_xi = require(acc, "xi", where).get<double>();
    m.diagnostics.accept_source = require(acc, "source", where).get<double>();
    m.diagnostics.empty_cluster_events =
        require(fitj, "empty_cluster_events", where).get<int>();
    m.diagnostics.iterations = m.config.n_iterations;

    const json &inds = require(doc, "individuals", where);
    if (!inds.is_array()) throw InputError(path + ": individuals must be an array");
    const int n = static_cast<int>(inds.size());
    const int k = m.mixture.n_clusters();
    m.individuals.resize(n);
    m.patient_ids.resize(n);
    m.labels.resize(n);
    m.memberships.resize(n, k);
    for (int i = 0; i < n; ++i) {
        const json &ind = inds[i];
        m.patient_ids[i] = require(ind, "id", where).get<std::string>();
        int cluster = require(ind, "cluster", where).get<int>();
        if (cluster < 1 || cluster > k)
            throw InputError(path + ": cluster id out of range for patient " +
                             m.patient_ids[i]);
        m.labels[i] = cluster - 1;
        m.individuals[i].tau = require(ind, "tau", where).get<double>();
        m.individuals[i].xi = require(ind, "xi", where).get<double>();
        m.individuals[i].sources =
            vec_from_json(require(ind, "sources", where), "sources");
        Eigen::VectorXd probs =
            vec_from_json(require(ind, "memberships", where), "memberships");
        if (probs.size() != k)
            throw InputError(path + ": membership row length mismatch for patient " +
                             m.patient_ids[i]);
        m.memberships.row(i) = probs.transpose();
    }

    m.population.validate();
    m.mixture.validate();
    if (m.population.n_features() != static_cast<int>(m.feature_names.size()))
        throw InputError(path + ": feature list disagrees with parameter sizes");
    if (m.mixture.n_sources() != m.population.n_sources())
        throw InputError(path + ": mixture and population source counts disagree");
    return m;
}

} // namespace mixcourse
