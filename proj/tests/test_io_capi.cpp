#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mixcourse/io.hpp"
#include "mixcourse/mixcourse.h"
#include "mixcourse/simulator.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>

using namespace mixcourse;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Scratch directory removed when the test case ends.
struct TempDir {
    fs::path path;
    explicit TempDir(const std::string &tag) {
        path = fs::temp_directory_path() /
               ("mixcourse_test_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
    std::string file(const std::string &name) const { return (path / name).string(); }
};

Dataset tiny_dataset() {
    Dataset data;
    data.feature_names = {"score_a", "score_b"};
    Patient p1;
    p1.id = "pat-001";
    p1.times = Eigen::VectorXd(3);
    p1.times << 45.0, 50.5, 56.25;
    p1.values = Eigen::MatrixXd(3, 2);
    p1.values << 0.1, 0.2, 0.30000000000000004, std::nan(""), 0.5, 0.6;
    Patient p2;
    p2.id = "pat-002";
    p2.times = Eigen::VectorXd(1);
    p2.times << 61.125;
    p2.values = Eigen::MatrixXd(1, 2);
    p2.values << std::nan(""), 1.0 / 3.0;
    data.patients = {p1, p2};
    return data;
}

} // namespace

TEST_CASE("doubles survive the shortest round-trip representation") {
    const double cases[] = {0.0,         -0.0,   1.0 / 3.0, 0.1,
                            1e308,       5e-324, -1.5,      12345678901234567.0,
                            6.02214076e23, 3.141592653589793};
    for (double x : cases) {
        std::string s = format_double(x);
        double back = parse_double(s, "test");
        CHECK(std::memcmp(&x, &back, sizeof x) == 0);
    }
    CHECK(format_double(1.5) == "1.5");
}

TEST_CASE("number parsing is strict about trailing garbage") {
    CHECK(parse_double("1.5", "t") == 1.5);
    CHECK(parse_double("  2\t", "t") == 2.0);
    CHECK(parse_double("-3e2", "t") == -300.0);
    CHECK_THROWS_AS(parse_double("1.5x", "t"), InputError);
    CHECK_THROWS_AS(parse_double("", "t"), InputError);
    CHECK_THROWS_AS(parse_double("abc", "t"), InputError);
    CHECK_THROWS_AS(parse_double("1.5 2.5", "t"), InputError);
}

TEST_CASE("atomic text writes create directories and round-trip bytes") {
    TempDir tmp("atomic");
    std::string path = tmp.file("nested/dir/out.txt");
    std::string content = "line one\nline two\n";
    atomic_write_text(path, content);
    CHECK(read_text_file(path) == content);
    CHECK_FALSE(fs::exists(path + ".tmp"));
    CHECK_THROWS_AS(read_text_file(tmp.file("missing.txt")), IoError);
}

TEST_CASE("dataset CSV round-trips values, missing cells, and names") {
    TempDir tmp("dataset");
    Dataset data = tiny_dataset();
    std::string path = tmp.file("data.csv");
    write_dataset_csv(path, data);

    std::string text = read_text_file(path);
    CHECK(text.rfind("patient_id,time,score_a,score_b\n", 0) == 0);
    CHECK(text.find(",,") != std::string::npos); // missing cell stays empty

    Dataset back = read_dataset_csv(path);
    REQUIRE(back.n_patients() == 2);
    CHECK(back.feature_names == data.feature_names);
    for (int i = 0; i < 2; ++i) {
        const Patient &a = data.patients[i];
        const Patient &b = back.patients[i];
        CHECK(a.id == b.id);
        REQUIRE(a.n_visits() == b.n_visits());
        for (int j = 0; j < a.n_visits(); ++j) {
            CHECK(a.times[j] == b.times[j]);
            for (int f = 0; f < 2; ++f) {
                if (std::isnan(a.values(j, f)))
                    CHECK(std::isnan(b.values(j, f)));
                else
                    CHECK(a.values(j, f) == b.values(j, f));
            }
        }
    }
}

TEST_CASE("dataset CSV reader rejects malformed input") {
    TempDir tmp("badcsv");
    CHECK_THROWS_AS(read_dataset_csv(tmp.file("absent.csv")), IoError);

    std::string bad_header = tmp.file("h.csv");
    atomic_write_text(bad_header, "id,when,a\np1,1,0.5\n");
    CHECK_THROWS_AS(read_dataset_csv(bad_header), InputError);

    std::string decreasing = tmp.file("d.csv");
    atomic_write_text(decreasing,
                      "patient_id,time,a,b\np1,2,0.5,0.5\np1,1,0.5,0.5\n");
    CHECK_THROWS_AS(read_dataset_csv(decreasing), InputError);

    std::string out_of_range = tmp.file("r.csv");
    atomic_write_text(out_of_range, "patient_id,time,a,b\np1,1,1.5,0.5\n");
    CHECK_THROWS_AS(read_dataset_csv(out_of_range), InputError);

    std::string not_number = tmp.file("n.csv");
    atomic_write_text(not_number, "patient_id,time,a,b\np1,1,zero,0.5\n");
    CHECK_THROWS_AS(read_dataset_csv(not_number), InputError);
}

TEST_CASE("latent tables store clusters one-based on disk, zero-based in memory") {
    TempDir tmp("latent");
    LatentTable table;
    table.ids = {"p1", "p2"};
    table.labels = {0, 1};
    IndividualParams a{48.5, -0.125, Eigen::VectorXd(2)};
    a.sources << 0.25, -1.0 / 3.0;
    IndividualParams b{60.0, 0.5, Eigen::VectorXd(2)};
    b.sources << -0.5, 0.75;
    table.individuals = {a, b};

    std::string path = tmp.file("truth.csv");
    write_latent_csv(path, table);
    std::string text = read_text_file(path);
    CHECK(text.rfind("patient_id,cluster,tau,xi,source_1,source_2\n", 0) == 0);
    CHECK(text.find("p1,1,") != std::string::npos);
    CHECK(text.find("p2,2,") != std::string::npos);

    LatentTable back = read_latent_csv(path);
    REQUIRE(back.ids.size() == 2);
    CHECK(back.labels == table.labels);
    for (int i = 0; i < 2; ++i) {
        CHECK(back.individuals[i].tau == table.individuals[i].tau);
        CHECK(back.individuals[i].xi == table.individuals[i].xi);
        CHECK((back.individuals[i].sources - table.individuals[i].sources)
                  .cwiseAbs()
                  .maxCoeff() == 0.0);
    }
}

TEST_CASE("membership tables round-trip") {
    TempDir tmp("member");
    MembershipTable table;
    table.ids = {"p1", "p2", "p3"};
    table.labels = {1, 0, 1};
    table.memberships = Eigen::MatrixXd(3, 2);
    table.memberships << 0.25, 0.75, 0.875, 0.125, 1.0 / 3.0, 2.0 / 3.0;

    std::string path = tmp.file("memberships.csv");
    write_membership_csv(path, table);
    std::string text = read_text_file(path);
    CHECK(text.rfind("patient_id,cluster,prob_1,prob_2\n", 0) == 0);

    MembershipTable back = read_membership_csv(path);
    CHECK(back.ids == table.ids);
    CHECK(back.labels == table.labels);
    CHECK((back.memberships - table.memberships).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model files reproduce a fit exactly, including non-finite fields") {
    TempDir tmp("model");
    Scenario sc = scenario_preset("scenario_2_2");
    Dataset data = simulate(sc, 20, 31).data;
    FitConfig cfg;
    cfg.n_clusters = 2;
    cfg.n_sources = 1;
    cfg.n_iterations = 250;
    cfg.seed = 8;
    FittedModel model = fit(data, cfg);

    std::string path = tmp.file("model.json");
    save_model(path, model);
    FittedModel back = load_model(path);

    CHECK((back.population.g_tilde - model.population.g_tilde).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.population.beta - model.population.beta).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.mixture.proportions - model.mixture.proportions).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.mixture.tau_mean - model.mixture.tau_mean).cwiseAbs().maxCoeff() == 0.0);
    CHECK((back.noise_sd - model.noise_sd).cwiseAbs().maxCoeff() == 0.0);
    CHECK(back.complete_loglik == model.complete_loglik);
    CHECK(back.icl == model.icl);
    CHECK(back.dof == model.dof);
    CHECK(back.entropy_raw_value == model.entropy_raw_value);
    CHECK(back.feature_names == model.feature_names);
    CHECK(back.patient_ids == model.patient_ids);
    CHECK(back.labels == model.labels);
    REQUIRE(back.individuals.size() == model.individuals.size());
    for (std::size_t i = 0; i < model.individuals.size(); ++i) {
        CHECK(back.individuals[i].tau == model.individuals[i].tau);
        CHECK(back.individuals[i].xi == model.individuals[i].xi);
    }
    CHECK((back.memberships - model.memberships).cwiseAbs().maxCoeff() == 0.0);

    // single-cluster fits have no normalized entropy; JSON stores null
    FitConfig one = cfg;
    one.n_clusters = 1;
    FittedModel flat = fit(data, one);
    REQUIRE(std::isnan(flat.entropy_normalized));
    std::string flat_path = tmp.file("flat.json");
    save_model(flat_path, flat);
    CHECK(read_text_file(flat_path).find("null") != std::string::npos);
    FittedModel flat_back = load_model(flat_path);
    CHECK(std::isnan(flat_back.entropy_normalized));

    CHECK_THROWS_AS(load_model(tmp.file("no_such.json")), IoError);
    std::string mangled = tmp.file("mangled.json");
    atomic_write_text(mangled, "{ not json");
    CHECK_THROWS_AS(load_model(mangled), InputError);
}

TEST_CASE("C API: version, error slot, and null-safety") {
    REQUIRE(mxc_version() != nullptr);
    CHECK(std::strlen(mxc_version()) > 0);
    mxc_free_string(nullptr);
    mxc_dataset_free(nullptr);
    mxc_model_free(nullptr);
}

TEST_CASE("C API: dataset access and IO status codes") {
    TempDir tmp("capi_data");
    Dataset data = tiny_dataset();
    write_dataset_csv(tmp.file("data.csv"), data);

    mxc_dataset *ds = nullptr;
    REQUIRE(mxc_dataset_read_csv(tmp.file("data.csv").c_str(), &ds) == MXC_OK);
    REQUIRE(ds != nullptr);
    CHECK(mxc_dataset_n_patients(ds) == 2);
    CHECK(mxc_dataset_n_features(ds) == 2);

    CHECK(mxc_dataset_write_csv(ds, tmp.file("copy.csv").c_str()) == MXC_OK);
    Dataset copy = read_dataset_csv(tmp.file("copy.csv"));
    CHECK(copy.patients[0].id == data.patients[0].id);
    CHECK(copy.patients[0].values(0, 0) == data.patients[0].values(0, 0));
    mxc_dataset_free(ds);

    mxc_dataset *missing = nullptr;
    CHECK(mxc_dataset_read_csv(tmp.file("absent.csv").c_str(), &missing) ==
          MXC_ERR_IO);
    CHECK(missing == nullptr);
    CHECK(std::strlen(mxc_last_error()) > 0);

    CHECK(mxc_dataset_read_csv(nullptr, &missing) == MXC_ERR_INPUT);
}

TEST_CASE("C API: fit, summaries, save/load, personalize") {
    TempDir tmp("capi_fit");
    Scenario sc = scenario_preset("scenario_2_2");
    write_dataset_csv(tmp.file("data.csv"), simulate(sc, 25, 77).data);

    mxc_dataset *ds = nullptr;
    REQUIRE(mxc_dataset_read_csv(tmp.file("data.csv").c_str(), &ds) == MXC_OK);

    mxc_fit_options opts;
    mxc_fit_options_init(&opts);
    CHECK(opts.n_clusters == 2);
    CHECK(opts.n_sources == 1);
    CHECK(opts.n_iterations == 1000);
    CHECK(opts.burn_in == 0.9);
    CHECK(opts.seed == 0);
    CHECK(opts.stochastic_indicators == 1);
    CHECK(opts.trace_path == nullptr);

    opts.n_iterations = 300;
    opts.seed = 4;
    mxc_model *model = nullptr;
    REQUIRE(mxc_fit(ds, &opts, &model) == MXC_OK);
    REQUIRE(model != nullptr);
    CHECK(mxc_model_n_clusters(model) == 2);
    CHECK(mxc_model_n_features(model) == 2);
    CHECK(std::isfinite(mxc_model_icl(model)));
    double entropy = mxc_model_entropy(model);
    CHECK(entropy >= 0.0);
    CHECK(entropy <= 1.0);

    char *summary = nullptr;
    REQUIRE(mxc_model_summary_json(model, &summary) == MXC_OK);
    json parsed = json::parse(summary);
    CHECK(parsed["n_clusters"] == 2);
    CHECK(parsed["clusters"].size() == 2);
    CHECK(parsed["clusters"][0].contains("tau_mean"));
    CHECK(parsed["clusters"][0].contains("shifts"));
    mxc_free_string(summary);

    CHECK(mxc_model_save(model, tmp.file("model.json").c_str()) == MXC_OK);
    mxc_model *loaded = nullptr;
    REQUIRE(mxc_model_load(tmp.file("model.json").c_str(), &loaded) == MXC_OK);
    CHECK(mxc_model_icl(loaded) == mxc_model_icl(model));

    char *personalized = nullptr;
    REQUIRE(mxc_personalize(loaded, ds, 9, 400, &personalized) == MXC_OK);
    json pj = json::parse(personalized);
    REQUIRE(pj["patients"].size() == 25);
    CHECK(pj["patients"][0].contains("tau"));
    int cluster = pj["patients"][0]["cluster"].get<int>();
    CHECK(cluster >= 1);
    CHECK(cluster <= 2);
    mxc_free_string(personalized);

    // invalid options surface as input errors
    mxc_fit_options bad = opts;
    bad.n_clusters = 0;
    mxc_model *none = nullptr;
    CHECK(mxc_fit(ds, &bad, &none) == MXC_ERR_INPUT);
    CHECK(none == nullptr);

    mxc_model_free(loaded);
    mxc_model_free(model);
    mxc_dataset_free(ds);
}

TEST_CASE("C API: config-driven commands and their status codes") {
    TempDir tmp("capi_cmd");

    char *summary = nullptr;
    CHECK(mxc_cmd_fit("this is not json", &summary) == MXC_ERR_INPUT);
    CHECK(std::strlen(mxc_last_error()) > 0);

    json bad_key = {{"scenario", "scenario_2_2"}, {"patients", 5},
                    {"seed", 1},                  {"out", tmp.file("x")},
                    {"typo_key", 1}};
    CHECK(mxc_cmd_simulate(bad_key.dump().c_str(), &summary) == MXC_ERR_INPUT);

    json sim_cfg = {{"scenario", "scenario_2_2"},
                    {"patients", 15},
                    {"replicates", 2},
                    {"seed", 42},
                    {"out", tmp.file("sim")}};
    REQUIRE(mxc_cmd_simulate(sim_cfg.dump().c_str(), &summary) == MXC_OK);
    json sim_summary = json::parse(summary);
    mxc_free_string(summary);
    CHECK(sim_summary["replicates"] == 2);
    CHECK(fs::is_regular_file(tmp.path / "sim" / "rep000" / "data.csv"));
    CHECK(fs::is_regular_file(tmp.path / "sim" / "rep000" / "truth.csv"));
    CHECK(fs::is_regular_file(tmp.path / "sim" / "rep001" / "model_true.json"));

    json fit_cfg = {{"data", tmp.file("sim")},  {"clusters", 2},
                    {"sources", 1},             {"iters", 200},
                    {"seed", 7},                {"out", tmp.file("fits")}};
    REQUIRE(mxc_cmd_fit(fit_cfg.dump().c_str(), &summary) == MXC_OK);
    json fit_summary = json::parse(summary);
    mxc_free_string(summary);
    CHECK(fit_summary["replicates"] == 2);
    CHECK(fs::is_regular_file(tmp.path / "fits" / "rep000" / "model.json"));
    CHECK(fs::is_regular_file(tmp.path / "fits" / "rep001" / "memberships.csv"));

    json eval_cfg = {{"truth", tmp.file("sim")},
                     {"fits", tmp.file("fits")},
                     {"out", tmp.file("eval")}};
    REQUIRE(mxc_cmd_evaluate(eval_cfg.dump().c_str(), &summary) == MXC_OK);
    json eval_summary = json::parse(summary);
    mxc_free_string(summary);
    CHECK(eval_summary["accuracy"].contains("mean"));
    CHECK(fs::is_regular_file(tmp.path / "eval" / "replicates.csv"));
    CHECK(fs::is_regular_file(tmp.path / "eval" / "summary.csv"));

    // pointing fit at a directory with no datasets is an IO error
    json empty_cfg = {{"data", tmp.file("nowhere")}, {"clusters", 2},
                      {"seed", 1},                   {"out", tmp.file("y")}};
    CHECK(mxc_cmd_fit(empty_cfg.dump().c_str(), &summary) == MXC_ERR_IO);
}
