#pragma once

// Batch CLI: fit, capability, simulate-study1, simulate-study2, and
// verify-appendix subcommands. Options can also come from a key = value
// config file (--config); explicit flags win. Exit codes: 0 success,
// 2 input/validation error, 3 non-convergence (results still written),
// 4 I/O error.

#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "ratercap/capability.hpp"
#include "ratercap/estimation.hpp"
#include "ratercap/io.hpp"
#include "ratercap/model.hpp"
#include "ratercap/pipeline.hpp"
#include "ratercap/simulation.hpp"

namespace ratercap {

namespace cli_detail {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNonConvergence = 3;
inline constexpr int kExitIo = 4;

inline int run_fit(const std::string& input, const std::string& family, double threshold,
                   const std::string& group_by, const std::string& out_dir, std::uint64_t seed,
                   const std::string& delimiter, bool rater_by_group, bool no_se) {
    std::map<std::string, RatingDataset> groups =
        ingest(input, threshold, group_by, delimiter.empty() ? '\0' : delimiter[0]);
    if (rater_by_group && !group_by.empty()) {
        RatingDataset joint = merge_groups_as_pseudo_raters(groups);
        groups.clear();
        groups.emplace("joint", std::move(joint));
    }
    PipelineOptions opts;
    opts.spec = family == "tfm" ? ModelSpec::tfm() : ModelSpec::gmf();
    opts.fit_config.seed = seed;
    opts.compute_se = !no_se;
    std::vector<GroupResult> results = run_empirical_pipeline(groups, opts);
    emit_reports(results, out_dir);
    bool all_ok = true, all_converged = true;
    for (const auto& g : results) {
        if (!g.ok) {
            std::cerr << "group " << g.group << " failed: " << g.error << "\n";
            all_ok = false;
        } else if (!g.converged) {
            all_converged = false;
        }
        if (g.ok) {
            std::cout << "group " << g.group << ": sigma = " << g.table.sigma
                      << ", loglik = " << g.table.loglik
                      << (g.converged ? "" : " [not converged]") << "\n";
        }
    }
    if (!all_ok || !all_converged) return kExitNonConvergence;
    return kExitOk;
}

inline int run_capability(const std::string& params_path, const std::string& family_flag,
                          const std::string& out_dir) {
    std::ifstream in(params_path);
    if (!in) throw io_error("cannot open params file: " + params_path);
    nlohmann::json j;
    in >> j;

    std::string fam_name = family_flag.empty() ? j.value("family", "gmf") : family_flag;
    Family fam = family_from_string(fam_name);
    ModelSpec spec;
    switch (fam) {
        case Family::tfm: spec = ModelSpec::tfm(); break;
        case Family::gmf: spec = ModelSpec::gmf(); break;
        case Family::probit: spec = ModelSpec::probit(); break;
        case Family::hrm: spec = ModelSpec::hrm(); break;
    }
    if (j.contains("hrm_sign"))
        spec.hrm_sign = j["hrm_sign"] == "as_printed" ? HrmSign::as_printed
                                                      : HrmSign::sdt_standard;
    if (j.contains("link")) spec.link = LinkFunction{link_from_string(j["link"])};

    double sigma = j.value("sigma", 1.0);
    std::vector<double> grid = default_theta_grid();
    if (j.contains("theta_grid")) {
        auto g = j["theta_grid"];
        grid = default_theta_grid(g.value("min", -5.0), g.value("max", 5.0),
                                  g.value("points", 201));
    }
    if (!j.contains("raters") || !j["raters"].is_array() || j["raters"].empty())
        throw invalid_input_error("params file needs a nonempty raters array");

    std::ostringstream table;
    table << "rater,kappa_bar,kappa_bar_se,delta_used,method\n";
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> curves;
    for (const auto& jr : j["raters"]) {
        RaterIndexParams rp;
        rp.sigma = sigma;
        std::string id = jr.value("id", "rater");
        rp.eta = jr.value("eta", 0.0);
        if (jr.contains("rho")) rp.rho = jr["rho"].get<double>();
        if (jr.contains("sigma_r")) rp.sigma_r = jr["sigma_r"].get<double>();
        if (jr.contains("c")) rp.hrm_c = jr["c"].get<double>();
        if (jr.contains("a")) rp.hrm_a = jr["a"].get<double>();
        Matrix cov(3, 3);
        bool has_cov = false;
        if (jr.contains("cov")) {
            auto jc = jr["cov"];
            for (std::size_t a = 0; a < 3; ++a)
                for (std::size_t b = 0; b < 3; ++b) cov(a, b) = jc[a][b].get<double>();
            has_cov = true;
        }
        CapabilityReport rep =
            capability_report(spec, rp, id, grid, has_cov ? &cov : nullptr);
        table << id << ',' << format_double(rep.kappa_bar) << ','
              << (rep.has_variance ? format_double(std::sqrt(rep.kappa_bar_variance)) : "NA")
              << ',' << format_double(rep.delta_used) << ','
              << (rep.method == KappaMethod::closed_form ? "closed_form" : "quadrature") << '\n';
        curves.emplace_back(id, rep.curve);
    }
    namespace fs = std::filesystem;
    write_file_atomic((fs::path(out_dir) / "capability.csv").string(), table.str());
    write_file_atomic((fs::path(out_dir) / "curves.csv").string(), render_curves_csv(curves));
    std::cout << "capability report written to " << out_dir << "\n";
    return kExitOk;
}

inline int run_study1(int reps, const std::string& out_dir, std::uint64_t seed,
                      const std::string& families) {
    StudyDesign design;
    design.replications = reps;
    design.seed = seed;
    design.fit_families.clear();
    std::stringstream ss(families);
    std::string tok;
    while (std::getline(ss, tok, ','))
        if (!tok.empty()) design.fit_families.push_back(family_from_string(tok));
    if (design.fit_families.empty())
        design.fit_families = {Family::gmf, Family::tfm};

    StudyTruth truth = generate_study1_truth(design, seed);
    RecoveryMetrics metrics = run_recovery(design, truth);

    namespace fs = std::filesystem;
    write_file_atomic((fs::path(out_dir) / "rater_recovery.csv").string(),
                      render_rater_recovery_csv(metrics));
    write_file_atomic((fs::path(out_dir) / "ability_recovery.csv").string(),
                      render_ability_recovery_csv(metrics));
    write_file_atomic((fs::path(out_dir) / "item_recovery.csv").string(),
                      render_item_recovery_csv(metrics));
    write_file_atomic((fs::path(out_dir) / "study1_summary.json").string(),
                      recovery_summary_json(metrics).dump(2) + "\n");
    int failures = 0;
    for (const auto& fr : metrics.families) {
        failures += fr.fit_failures;
        std::cout << to_string(fr.family) << ": spearman(kappa rank) = " << fr.kappa_rank_spearman
                  << ", theta slope = " << fr.theta_slope_mean
                  << ", sigma bias = " << fr.sigma.bias << ", failures = " << fr.fit_failures
                  << "\n";
    }
    return failures == 0 ? kExitOk : kExitNonConvergence;
}

inline int run_study2(double eta_min, double eta_max, double eta_step, int reps,
                      const std::string& out_dir, std::uint64_t seed, double scale,
                      bool no_refit) {
    SweepConfig cfg;
    cfg.eta_min = eta_min;
    cfg.eta_max = eta_max;
    cfg.eta_step = eta_step;
    cfg.replications = reps;
    cfg.seed = seed;
    cfg.scale = scale;
    cfg.refit = !no_refit;
    EmpiricalTruth truth = default_empirical_truth();
    std::vector<SweepPoint> points = run_severity_sweep(truth, cfg);
    namespace fs = std::filesystem;
    write_file_atomic((fs::path(out_dir) / "sweep.csv").string(), render_sweep_csv(points));
    int failures = 0;
    for (const auto& p : points) failures += p.fit_failures;
    std::cout << "sweep points: " << points.size() << ", fit failures: " << failures << "\n";
    return failures == 0 ? kExitOk : kExitNonConvergence;
}

inline int run_verify_appendix(const std::string& out_dir) {
    AppendixReport rep = verify_appendix_properties();
    DeltaConstant dt = delta_tfm();
    std::ostringstream os;
    os << "delta_tfm (quadrature) = " << format_double(dt.value) << "\n";
    os << "delta_gmf analytic sigma=1 = " << format_double(delta_gmf_analytic(1.0)) << "\n";
    os << "delta_probit = " << format_double(delta_probit()) << "\n";
    for (const auto& c : rep.checks) {
        os << c.name << ": " << (c.passed ? "pass" : "FAIL")
           << " (worst margin " << format_double(c.worst_margin, 6) << ")";
        if (!c.detail.empty()) os << " " << c.detail;
        os << "\n";
    }
    std::string text = os.str();
    std::cout << text;
    if (!out_dir.empty()) {
        namespace fs = std::filesystem;
        write_file_atomic((fs::path(out_dir) / "appendix_report.txt").string(), text);
    }
    return rep.all_passed() ? kExitOk : kExitInput;
}

}  // namespace cli_detail

inline int run_cli(int argc, const char* const* argv) {
    using namespace cli_detail;
    CLI::App app{"Rater capability index estimation (TFM/GMF/probit/HRM)"};
    app.require_subcommand(1);

    // fit
    auto* fit_cmd = app.add_subcommand("fit", "Fit a rating file and report capability indices");
    fit_cmd->set_config("--config", "", "Read options from a key = value file");
    std::string input, family = "gmf", group_by, out_dir = "out", delimiter;
    double threshold = 1.0;
    std::uint64_t seed = 1;
    bool rater_by_group = false, no_se = false;
    fit_cmd->add_option("--input", input, "Rating file (student|rater|item|score[|group])")
        ->required();
    fit_cmd->add_option("--family", family, "Model family: gmf or tfm")
        ->check(CLI::IsMember({"gmf", "tfm"}));
    fit_cmd->add_option("--threshold", threshold, "Dichotomization threshold (score >= t -> 1)");
    fit_cmd->add_option("--group-by", group_by, "Column that splits the file into groups");
    fit_cmd->add_option("--out", out_dir, "Output directory");
    fit_cmd->add_option("--seed", seed, "Seed recorded in outputs");
    fit_cmd->add_option("--delimiter", delimiter, "Field delimiter (default: auto-detect)");
    fit_cmd->add_flag("--rater-by-group", rater_by_group,
                      "Joint fit with rater x group pseudo-raters instead of per-group fits");
    fit_cmd->add_flag("--no-se", no_se, "Skip delta-method standard errors");

    // capability
    auto* cap_cmd = app.add_subcommand("capability", "Capability indices from a parameter file");
    cap_cmd->set_config("--config", "", "Read options from a key = value file");
    std::string params_path, cap_family, cap_out = "out";
    cap_cmd->add_option("--params", params_path, "JSON parameter file")->required();
    cap_cmd->add_option("--family", cap_family, "Override the family in the file")
        ->check(CLI::IsMember({"", "gmf", "tfm", "probit", "hrm"}));
    cap_cmd->add_option("--out", cap_out, "Output directory");

    // simulate-study1
    auto* s1_cmd = app.add_subcommand("simulate-study1", "Parameter-recovery study");
    s1_cmd->set_config("--config", "", "Read options from a key = value file");
    int s1_reps = 50;
    std::string s1_out = "out";
    std::uint64_t s1_seed = 1;
    std::string s1_families = "gmf,tfm";
    s1_cmd->add_option("--reps", s1_reps, "Replications (200 for full runs; 50 desk-scale)");
    s1_cmd->add_option("--out", s1_out, "Output directory");
    s1_cmd->add_option("--seed", s1_seed, "Base seed");
    s1_cmd->add_option("--families", s1_families, "Comma-separated fit families");

    // simulate-study2
    auto* s2_cmd = app.add_subcommand("simulate-study2", "Severity sweep over empirical truth");
    s2_cmd->set_config("--config", "", "Read options from a key = value file");
    double eta_min = -2.5, eta_max = 2.5, eta_step = 0.1, s2_scale = 1.0;
    int s2_reps = 10;
    std::string s2_out = "out";
    std::uint64_t s2_seed = 1;
    bool s2_no_refit = false;
    s2_cmd->add_option("--eta-min", eta_min, "Grid start");
    s2_cmd->add_option("--eta-max", eta_max, "Grid end");
    s2_cmd->add_option("--eta-step", eta_step, "Grid step");
    s2_cmd->add_option("--reps", s2_reps, "Replication refits per grid point");
    s2_cmd->add_option("--out", s2_out, "Output directory");
    s2_cmd->add_option("--seed", s2_seed, "Base seed");
    s2_cmd->add_option("--scale", s2_scale, "Shrink factor on the design for desk-scale runs");
    s2_cmd->add_flag("--no-refit", s2_no_refit, "True-parameter curves only (no refits)");

    // verify-appendix
    auto* va_cmd = app.add_subcommand("verify-appendix", "Numerical supremum verification");
    std::string va_out;
    va_cmd->add_option("--out", va_out, "Output directory for the report file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitInput;
    }

    try {
        if (fit_cmd->parsed())
            return run_fit(input, family, threshold, group_by, out_dir, seed, delimiter,
                           rater_by_group, no_se);
        if (cap_cmd->parsed()) return run_capability(params_path, cap_family, cap_out);
        if (s1_cmd->parsed()) return run_study1(s1_reps, s1_out, s1_seed, s1_families);
        if (s2_cmd->parsed())
            return run_study2(eta_min, eta_max, eta_step, s2_reps, s2_out, s2_seed, s2_scale,
                              s2_no_refit);
        if (va_cmd->parsed()) return run_verify_appendix(va_out);
    } catch (const io_error& e) {
        std::cerr << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const convergence_error& e) {
        std::cerr << "non-convergence: " << e.what() << "\n";
        return kExitNonConvergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}

}  // namespace ratercap
