// Command-line interface: estimate / placebo / dynamic / simulate.
// Exit codes: 0 success, 2 validation error, 3 numerical failure.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "sci/json_io.hpp"
#include "sci/parallel.hpp"
#include "sci/sci.hpp"

namespace {

using sci::io::ordered_json;

constexpr const char* kVersion = "0.1.0";

struct CommonArgs {
    std::string input;
    int t0 = 0;
    std::string treated;
    int r = 0;
    int h = -1;
    std::string covariates;
    int bootstrap = 0;
    int block_len = 0;
    std::string levels = "0.90,0.95";
    std::uint64_t seed = 2024;
    bool reselect = false;
    unsigned threads = 0;
    std::string output;
};

unsigned resolve_threads(unsigned flag_value) {
    if (flag_value > 0) return flag_value;
    if (const char* env = std::getenv("SCI_THREADS")) {
        const int v = std::atoi(env);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return 1;
}

std::vector<double> parse_levels(const std::string& text) {
    std::vector<double> levels;
    std::stringstream ss(text);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        try {
            levels.push_back(std::stod(tok));
        } catch (const std::exception&) {
            throw sci::validation_error("cannot parse confidence level '" + tok + "'");
        }
    }
    if (levels.empty()) throw sci::validation_error("--levels must list at least one level");
    return levels;
}

sci::TrendSpec parse_trend(const std::string& text) {
    sci::TrendSpec spec;
    std::stringstream ss(text);
    std::string kind, a, b;
    std::getline(ss, kind, ':');
    std::getline(ss, a, ':');
    std::getline(ss, b, ':');
    try {
        if (kind == "poly") {
            spec.kind = sci::TrendKind::parametric_poly;
            if (a.empty()) throw sci::validation_error("--trend poly:D needs a degree");
            spec.degree_or_k = std::stoi(a);
        } else if (kind == "sieve") {
            spec.kind = sci::TrendKind::sieve;
            if (a.empty()) throw sci::validation_error("--trend sieve:K needs a basis size");
            spec.degree_or_k = std::stoi(a);
            if (!b.empty()) spec.smoothness = std::stod(b);
        } else {
            throw sci::validation_error("--trend must be poly:D or sieve:K[:S], got '" + text + "'");
        }
    } catch (const sci::validation_error&) {
        throw;
    } catch (const std::exception&) {
        throw sci::validation_error("cannot parse --trend '" + text + "'");
    }
    return spec;
}

void add_warning(ordered_json& warnings, const std::string& code, const std::string& message) {
    warnings.push_back(ordered_json{{"code", code}, {"message", message}});
}

ordered_json breakdown_warnings(const sci::Panel& panel, int r, int h) {
    ordered_json warnings = ordered_json::array();
    const int n = static_cast<int>(panel.n_units());
    if (n < 2 * r + 2) {
        add_warning(warnings, "no_interference_budget",
                    "no interference budget at N=" + std::to_string(n) + ", r=" + std::to_string(r) +
                        " (need N >= 2r+2)");
    } else {
        const int budget = sci::lts_breakdown_check(n, r);
        add_warning(warnings, "interference_budget",
                    "at most " + std::to_string(budget) + " interfered units tolerated at N=" +
                        std::to_string(n) + ", r=" + std::to_string(r));
        if (budget < 1)
            add_warning(warnings, "zero_interference_budget",
                        "interference budget is zero at this N and r");
    }
    const int h_eff = h < 0 ? n / 2 + 1 : h;
    if (h_eff >= n)
        add_warning(warnings, "trimming_vacuous",
                    "h = N leaves no trimming budget; the robust regression reduces to OLS");
    return warnings;
}

ordered_json inputs_echo(const CommonArgs& args, const std::string& command) {
    ordered_json j;
    j["command"] = command;
    j["input"] = args.input;
    j["t0"] = args.t0;
    j["treated"] = args.treated;
    j["r"] = args.r;
    j["h"] = args.h;
    j["covariates"] = args.covariates.empty() ? ordered_json(nullptr) : ordered_json(args.covariates);
    if (args.bootstrap > 0) {
        j["bootstrap"] = ordered_json{{"B", args.bootstrap},
                                      {"block_len", args.block_len},
                                      {"levels", args.levels},
                                      {"seed", args.seed},
                                      {"reselect", args.reselect}};
    } else {
        j["bootstrap"] = nullptr;
    }
    return j;
}

ordered_json panel_json(const sci::Panel& panel) {
    ordered_json j;
    j["n_units"] = panel.n_units();
    j["n_periods"] = panel.n_periods();
    j["t0"] = panel.t0;
    j["rho"] = panel.rho();
    j["unit_labels"] = panel.unit_labels;
    return j;
}

int run_estimate_like(const CommonArgs& args, const std::string& command, int placebo_t0) {
    sci::Panel panel = sci::load_panel(args.input, args.t0, args.treated);
    std::optional<sci::CovariatePanel> cov;
    if (!args.covariates.empty())
        cov = sci::load_covariates(args.covariates, panel.n_periods());
    if (command == "placebo") {
        panel = sci::placebo_split(panel, placebo_t0);
        if (cov) cov->covariates = cov->covariates.leftCols(panel.n_periods()).eval();
    }

    ordered_json warnings = breakdown_warnings(panel, args.r, args.h);

    std::optional<sci::CovariateAdjustment> adjustment;
    if (cov) adjustment = sci::residualize_covariates(panel, *cov);
    const sci::Panel& work = adjustment ? adjustment->residual_panel : panel;

    ordered_json report;
    report["schema_version"] = sci::io::schema_version;
    report["tool"] = "sci";
    report["version"] = kVersion;
    report["inputs"] = inputs_echo(args, command);
    if (command == "placebo") {
        report["inputs"]["placebo_t0"] = placebo_t0;
        report["falsification"] = true;
    }
    report["panel"] = panel_json(work);

    if (args.bootstrap > 0) {
        sci::BootstrapOptions opts;
        opts.n_replicates = args.bootstrap;
        opts.levels = parse_levels(args.levels);
        opts.seed = args.seed;
        opts.reselect = args.reselect;
        opts.h = args.h;
        opts.threads = resolve_threads(args.threads);
        const int max_block = std::min<int>(work.t0, static_cast<int>(work.n_periods()) - work.t0);
        int block = args.block_len;
        if (block == 0) {
            block = std::min(sci::default_block_len(work.n_periods()), max_block);
        } else if (block > max_block) {
            add_warning(warnings, "block_len_clamped",
                        "block length " + std::to_string(block) + " clamped to " +
                            std::to_string(max_block));
            block = max_block;
        }
        opts.block_len = block;
        const sci::BootstrapResult boot = sci::block_bootstrap(work, args.r, opts);
        report["estimate"] = sci::io::to_json(boot.estimate, work.unit_labels);
        report["bootstrap"] = sci::io::to_json(boot, work.unit_labels);
        if (boot.retries > 0)
            add_warning(warnings, "bootstrap_retries",
                        std::to_string(boot.retries) + " bootstrap replicates were redrawn");
        if (boot.estimate.factor_fit.heywood)
            add_warning(warnings, "heywood", "a uniqueness hit its floor in the factor fit");
        if (boot.estimate.treated_selected)
            add_warning(warnings, "treated_not_flagged",
                        "the treated unit was not flagged as affected; weights exclude it");
    } else {
        const sci::EffectEstimate est = sci::estimate_average_effects(work, args.r, args.h);
        report["estimate"] = sci::io::to_json(est, work.unit_labels);
        report["bootstrap"] = nullptr;
        if (est.factor_fit.heywood)
            add_warning(warnings, "heywood", "a uniqueness hit its floor in the factor fit");
        if (est.treated_selected)
            add_warning(warnings, "treated_not_flagged",
                        "the treated unit was not flagged as affected; weights exclude it");
    }
    if (adjustment) report["covariate_adjustment"] = ordered_json{{"u_tilde", sci::io::to_json(adjustment->u_tilde)}};
    report["warnings"] = warnings;
    sci::io::write_json(report, args.output);
    std::cout << "report written to " << args.output << "\n";
    return 0;
}

int run_dynamic(const CommonArgs& args, const std::string& trend_text) {
    const sci::Panel panel = sci::load_panel(args.input, args.t0, args.treated);
    const sci::TrendSpec spec = parse_trend(trend_text);

    ordered_json warnings = breakdown_warnings(panel, args.r, args.h);
    const sci::DynamicEffects dyn = sci::estimate_dynamic_effects(panel, args.r, spec, args.h);

    ordered_json report;
    report["schema_version"] = sci::io::schema_version;
    report["tool"] = "sci";
    report["version"] = kVersion;
    report["inputs"] = inputs_echo(args, "dynamic");
    report["inputs"]["trend"] = trend_text;
    report["panel"] = panel_json(panel);
    report["dynamic"] = sci::io::to_json(dyn, panel.unit_labels);
    if (dyn.factor_fit.heywood)
        add_warning(warnings, "heywood", "a uniqueness hit its floor in the factor fit");
    report["warnings"] = warnings;
    sci::io::write_json(report, args.output);

    // flat CSV next to the JSON: one row per (unit, post period)
    const std::string csv_path = args.output + ".csv";
    std::ofstream csv(csv_path);
    if (!csv) throw sci::validation_error("cannot write " + csv_path);
    csv.precision(17);
    csv << "unit,post_period,beta_t,selected\n";
    for (Eigen::Index i = 0; i < dyn.beta_t.rows(); ++i)
        for (Eigen::Index t = 0; t < dyn.beta_t.cols(); ++t) {
            const auto& sel = dyn.selected_t[static_cast<std::size_t>(t)];
            const bool in_sel =
                std::find(sel.begin(), sel.end(), static_cast<int>(i)) != sel.end();
            csv << panel.unit_labels[static_cast<std::size_t>(i)] << ',' << (t + 1) << ','
                << dyn.beta_t(i, t) << ',' << (in_sel ? 1 : 0) << '\n';
        }
    std::cout << "report written to " << args.output << " and " << csv_path << "\n";
    return 0;
}

template <typename T>
std::vector<T> list_field(const ordered_json& j, const std::string& key, T fallback) {
    std::vector<T> out;
    if (!j.contains(key)) {
        out.push_back(fallback);
        return out;
    }
    if (j.at(key).is_array()) {
        for (const auto& v : j.at(key)) out.push_back(v.get<T>());
        if (out.empty()) throw sci::validation_error("config field '" + key + "' is an empty list");
    } else {
        out.push_back(j.at(key).get<T>());
    }
    return out;
}

int run_simulate(const std::string& config_path, const std::string& out_dir, unsigned threads_flag) {
    std::ifstream in(config_path);
    if (!in) throw sci::validation_error("cannot open config file: " + config_path);
    ordered_json cfg_json;
    try {
        cfg_json = ordered_json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw sci::validation_error(std::string("config is not valid JSON: ") + e.what());
    }
    static const std::vector<std::string> known = {"n_units",  "t0",        "n_interfered",
                                                   "r_fit",    "n_reps",    "n_boot",
                                                   "block_len", "master_seed"};
    for (const auto& [key, value] : cfg_json.items())
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw sci::validation_error("unknown config field '" + key + "'");

    sci::SimConfig base;
    try {
        base.n_units = cfg_json.value("n_units", base.n_units);
        base.n_reps = cfg_json.value("n_reps", base.n_reps);
        base.n_boot = cfg_json.value("n_boot", base.n_boot);
        base.block_len = cfg_json.value("block_len", base.block_len);
        base.master_seed = cfg_json.value("master_seed", base.master_seed);
    } catch (const nlohmann::json::exception& e) {
        throw sci::validation_error(std::string("config field has the wrong type: ") + e.what());
    }
    const auto t0s = list_field<int>(cfg_json, "t0", base.t0);
    const auto n0s = list_field<int>(cfg_json, "n_interfered", base.n_interfered);
    const auto rs = list_field<int>(cfg_json, "r_fit", base.r_fit);

    std::filesystem::create_directories(out_dir);
    const unsigned threads = resolve_threads(threads_flag);

    ordered_json report;
    report["schema_version"] = sci::io::schema_version;
    report["tool"] = "sci";
    report["version"] = kVersion;
    report["config"] = cfg_json;
    ordered_json cells = ordered_json::array();

    std::ofstream cov_csv(out_dir + "/coverage.csv"), bias_csv(out_dir + "/bias.csv"),
        sel_csv(out_dir + "/selection.csv");
    cov_csv.precision(17);
    bias_csv.precision(17);
    sel_csv.precision(17);
    cov_csv << "n_interfered,t0,r_fit,unit,coverage,mc_se,n\n";
    bias_csv << "n_interfered,t0,r_fit,estimator,unit,mean,median,q25,q75,n\n";
    sel_csv << "n_interfered,t0,r_fit,selection_accuracy,n_reps_done,n_failed\n";

    const auto start = std::chrono::steady_clock::now();
    for (int t0 : t0s)
        for (int n0 : n0s)
            for (int r : rs) {
                sci::SimConfig cfg = base;
                cfg.t0 = t0;
                cfg.n_interfered = n0;
                cfg.r_fit = r;
                sci::validate_config(cfg);
                const sci::SimReport cell = sci::run_experiment(cfg, threads);
                cells.push_back(sci::io::to_json(cell));
                for (const auto& [unit, c] : cell.coverage)
                    cov_csv << n0 << ',' << t0 << ',' << r << ',' << (unit + 1) << ','
                            << c.coverage << ',' << c.mc_se << ',' << c.n << '\n';
                for (const auto& [est, units] : cell.bias)
                    for (const auto& [unit, s] : units)
                        bias_csv << n0 << ',' << t0 << ',' << r << ',' << est << ',' << (unit + 1)
                                 << ',' << s.mean << ',' << s.median << ',' << s.q25 << ','
                                 << s.q75 << ',' << s.n << '\n';
                sel_csv << n0 << ',' << t0 << ',' << r << ',' << cell.selection_accuracy << ','
                        << cell.n_reps_done << ',' << cell.n_failed << '\n';
                std::cout << "cell n0=" << n0 << " t0=" << t0 << " r=" << r << " done\n";
            }
    report["cells"] = std::move(cells);
    sci::io::write_json(report, out_dir + "/report.json");

    // wall time lives outside the canonical (byte-reproducible) outputs
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::ofstream runtime(out_dir + "/runtime.txt");
    runtime << "wall_seconds " << secs << "\nthreads " << threads << "\n";
    std::cout << "simulation report written to " << out_dir << "\n";
    return 0;
}

void add_common_flags(CLI::App* cmd, CommonArgs& args, bool bootstrap_flags = true) {
    cmd->set_help_flag("--help", "print help");  // frees -h for the trim count
    cmd->add_option("--input", args.input, "wide-format outcome CSV")->required();
    cmd->add_option("--t0", args.t0, "number of pre-intervention periods")->required();
    cmd->add_option("--treated", args.treated, "label of the treated unit")->required();
    cmd->add_option("--r", args.r, "number of latent factors")->required();
    cmd->add_option("--h", args.h, "trim count for the robust regression (default floor(N/2)+1)");
    cmd->add_option("--covariates", args.covariates, "optional covariate CSV");
    if (bootstrap_flags) {
        cmd->add_option("--bootstrap", args.bootstrap, "bootstrap replicates (0 = off)");
        cmd->add_option("--block-len", args.block_len, "circular block length (0 = T^(1/3) rule)");
        cmd->add_option("--levels", args.levels, "comma-separated confidence levels");
        cmd->add_option("--seed", args.seed, "bootstrap seed");
        cmd->add_flag("--reselect", args.reselect,
                      "re-run the control selection inside every bootstrap replicate");
    }
    cmd->add_option("--threads", args.threads, "worker threads (default SCI_THREADS or 1)");
    cmd->add_option("--output", args.output, "report JSON path")->required();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic control estimation that tolerates interference"};
    app.set_help_flag("--help", "print help");
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);

    CommonArgs est_args, plc_args, dyn_args;
    int placebo_t0 = 0;
    std::string trend_text;
    std::string sim_config, sim_out;
    unsigned sim_threads = 0;

    CLI::App* est = app.add_subcommand("estimate", "average direct and interference effects");
    add_common_flags(est, est_args);

    CLI::App* plc = app.add_subcommand("placebo", "falsification analysis with a fake intervention");
    add_common_flags(plc, plc_args);
    plc->add_option("--placebo-t0", placebo_t0, "placebo intervention period (< t0)")->required();

    CLI::App* dyn = app.add_subcommand("dynamic", "per-period dynamic effects");
    add_common_flags(dyn, dyn_args, false);
    dyn->add_option("--trend", trend_text, "poly:D or sieve:K[:S]")->required();

    CLI::App* sim = app.add_subcommand("simulate", "Monte Carlo harness");
    sim->set_help_flag("--help", "print help");
    sim->add_option("--config", sim_config, "simulation config JSON")->required();
    sim->add_option("--out", sim_out, "output directory")->required();
    sim->add_option("--threads", sim_threads, "worker threads (default SCI_THREADS or 1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    try {
        if (est->parsed()) return run_estimate_like(est_args, "estimate", 0);
        if (plc->parsed()) return run_estimate_like(plc_args, "placebo", placebo_t0);
        if (dyn->parsed()) return run_dynamic(dyn_args, trend_text);
        if (sim->parsed()) return run_simulate(sim_config, sim_out, sim_threads);
    } catch (const sci::validation_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const sci::numeric_error& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
