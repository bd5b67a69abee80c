#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "sci/errors.hpp"
#include "sci/estimator.hpp"
#include "sci/inference.hpp"
#include "sci/panel.hpp"
#include "sci/parallel.hpp"
#include "sci/rng.hpp"
#include "sci/stats.hpp"

namespace sci {

/// One Monte Carlo cell. T = 2*t0 always; n_interfered counts the affected
/// units including the treated one (interfered controls are units 2..N0).
struct SimConfig {
    int n_units = 10;
    int t0 = 200;
    int n_interfered = 1;
    int r_fit = 2;      // 2 reproduces SCI1, 1 reproduces SCI2
    int n_reps = 300;
    int n_boot = 200;   // 0 disables bootstrap coverage
    int block_len = 0;  // 0 -> default rule
    std::uint64_t master_seed = 20240501;
};

inline void validate_config(const SimConfig& cfg) {
    if (cfg.n_units < 3) throw validation_error("sim config: n_units must be >= 3");
    if (cfg.t0 <= cfg.n_units)
        throw validation_error("sim config: t0 must exceed n_units for the factor step");
    if (cfg.n_interfered < 1 || cfg.n_interfered > cfg.n_units)
        throw validation_error("sim config: n_interfered must lie in [1, n_units]");
    if (cfg.r_fit < 1) throw validation_error("sim config: r_fit must be >= 1");
    if (cfg.n_reps < 1) throw validation_error("sim config: n_reps must be >= 1");
    if (cfg.n_boot != 0 && cfg.n_boot < 50)
        throw validation_error("sim config: n_boot must be 0 (off) or >= 50");
    if (cfg.block_len < 0) throw validation_error("sim config: block_len must be >= 0");
}

struct SimulatedPanel {
    Panel panel;
    Eigen::VectorXd beta_bar;        // N, post-period average of the true effect paths
    std::vector<int> true_controls;  // units with zero effect throughout
};

/// Direct-effect path of the treated unit: a ramp (t-T0)/3 + sin(pi t/12) over
/// the first 12 post periods, then the plateau 4 + sin(pi t/12). t is the
/// absolute 1-based period index.
inline double beta1_path(int t, int t0) {
    if (t <= t0) return 0.0;
    const double wave = std::sin(M_PI * static_cast<double>(t) / 12.0);
    if (t - t0 <= 12) return static_cast<double>(t - t0) / 3.0 + wave;
    return 4.0 + wave;
}

namespace detail {

/// The 10x2 loading matrix of the simulation design (already scaled by 0.5);
/// rows cycle for other unit counts.
inline Eigen::MatrixXd sim_loadings(int n_units) {
    static const double base[10][2] = {{1.5, 0.5}, {-0.5, 1.5}, {1, 1},  {1, -1},   {1, 2},
                                       {-1, 1},    {1, 1},      {-1, 1}, {1.5, 1},  {-1.5, 1}};
    Eigen::MatrixXd lam(n_units, 2);
    for (int i = 0; i < n_units; ++i) {
        lam(i, 0) = 0.5 * base[i % 10][0];
        lam(i, 1) = 0.5 * base[i % 10][1];
    }
    return lam;
}

/// AR(2) series x_t = 0.2 x_{t-1} + 0.1 x_{t-2} + innovation, standard normal
/// innovations, burned in from zero initial state.
inline Eigen::MatrixXd ar2_series(int dim, int n_periods, std::mt19937_64& gen,
                                  rng::NormalSampler& normal, int burn_in = 100) {
    Eigen::MatrixXd out(dim, n_periods + burn_in);
    Eigen::VectorXd lag1 = Eigen::VectorXd::Zero(dim), lag2 = Eigen::VectorXd::Zero(dim);
    for (int t = 0; t < n_periods + burn_in; ++t) {
        for (int i = 0; i < dim; ++i) out(i, t) = normal(gen);
        out.col(t) += 0.2 * lag1 + 0.1 * lag2;
        lag2 = lag1;
        lag1 = out.col(t);
    }
    return out.rightCols(n_periods);
}

}  // namespace detail

/// Generates one replication of the simulation design. The RNG stream is a
/// pure function of (master_seed, rep), so replications are reproducible and
/// independent of evaluation order.
inline SimulatedPanel simulate_panel(const SimConfig& cfg, int rep) {
    validate_config(cfg);
    const int n = cfg.n_units;
    const int t_total = 2 * cfg.t0;
    auto gen = rng::engine(cfg.master_seed, static_cast<std::uint64_t>(rep), 0);
    rng::NormalSampler normal;

    const Eigen::MatrixXd lam = detail::sim_loadings(n);
    const Eigen::MatrixXd w = detail::ar2_series(2, t_total, gen, normal);
    const Eigen::MatrixXd eps = detail::ar2_series(n, t_total, gen, normal);

    SimulatedPanel out;
    out.panel.outcomes.resize(n, t_total);
    out.panel.t0 = cfg.t0;
    out.beta_bar = Eigen::VectorXd::Zero(n);

    const Eigen::Vector2d alpha1(1.0, 1.0);  // alpha0 is zero
    for (int t = 1; t <= t_total; ++t) {
        const bool post = t > cfg.t0;
        Eigen::Vector2d f = w.col(t - 1);
        if (post) f += alpha1;
        const double b1 = beta1_path(t, cfg.t0);
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(n);
        if (post) {
            beta(0) = b1;
            for (int i = 1; i < cfg.n_interfered; ++i) beta(i) = 0.75 * b1;
            out.beta_bar += beta;
        }
        out.panel.outcomes.col(t - 1) = beta + lam * f + eps.col(t - 1);
    }
    out.beta_bar /= static_cast<double>(cfg.t0);

    out.panel.unit_labels.reserve(static_cast<std::size_t>(n));
    for (int i = 1; i <= n; ++i)
        out.panel.unit_labels.push_back("U" + std::string(i < 10 ? "0" : "") + std::to_string(i));
    for (int i = cfg.n_interfered; i < n; ++i) out.true_controls.push_back(i);
    return out;
}

/// The empirical mean difference D, the crudest comparator.
inline Eigen::VectorXd md_estimate(const Panel& panel) { return split_means(panel).diff; }

/// Difference-in-differences contrast for the treated unit against the mean of
/// the given control units.
inline double did_estimate(const Panel& panel, const std::vector<int>& controls) {
    if (controls.empty()) throw validation_error("did_estimate: control set is empty");
    for (int j : controls) {
        if (j == 0) throw validation_error("did_estimate: control set must exclude the treated unit");
        if (j < 0 || j >= panel.n_units())
            throw validation_error("did_estimate: control index out of range");
    }
    const Eigen::VectorXd d = split_means(panel).diff;
    double ctrl = 0.0;
    for (int j : controls) ctrl += d(j);
    return d(0) - ctrl / static_cast<double>(controls.size());
}

struct BiasSummary {
    double mean = 0.0, median = 0.0, q25 = 0.0, q75 = 0.0;
    int n = 0;
};

struct CoverageEntry {
    double coverage = 0.0;
    double mc_se = 0.0;  // sqrt(p(1-p)/n)
    int n = 0;
};

/// Aggregates of one simulation cell. Keys of `bias`: "sci", "md",
/// "did_all" (scenario i), "did_valid" (scenario ii); inner key is the
/// 0-based unit index (0, 1 and N-1 are tracked).
struct SimReport {
    SimConfig config;
    std::map<std::string, std::map<int, BiasSummary>> bias;
    std::map<int, CoverageEntry> coverage;  // SCI 95% Wald CI coverage per tracked unit
    double selection_accuracy = 0.0;        // P(C-hat equals the true control set)
    int n_reps_done = 0;
    int n_failed = 0;
    long total_boot_retries = 0;
};

namespace detail {

inline BiasSummary summarize(const std::vector<double>& errors) {
    BiasSummary s;
    s.n = static_cast<int>(errors.size());
    if (errors.empty()) return s;
    s.mean = stats::mean(errors);
    s.median = stats::median(errors);
    s.q25 = stats::quantile(errors, 0.25);
    s.q75 = stats::quantile(errors, 0.75);
    return s;
}

}  // namespace detail

/// Runs one simulation cell: SCI (with bootstrap CIs when n_boot > 0), the MD
/// comparator, and DID under both control-set scenarios. Deterministic for a
/// given config regardless of thread count. Replicate failures above a 2%
/// budget abort the cell.
inline SimReport run_experiment(const SimConfig& cfg, unsigned threads = 1) {
    validate_config(cfg);
    const int n = cfg.n_units;
    const std::vector<int> tracked = {0, 1, n - 1};

    struct RepRow {
        bool ok = false;
        bool covered[3] = {false, false, false};
        double sci_err[3] = {0, 0, 0};
        double md_err[3] = {0, 0, 0};
        double did_all_err = 0, did_valid_err = 0;
        bool selection_exact = false;
        int boot_retries = 0;
    };
    std::vector<RepRow> rows(static_cast<std::size_t>(cfg.n_reps));

    std::vector<int> all_controls;
    for (int j = 1; j < n; ++j) all_controls.push_back(j);

    parallel_for(static_cast<std::size_t>(cfg.n_reps), threads, [&](std::size_t rep) {
        RepRow& row = rows[rep];
        const SimulatedPanel sp = simulate_panel(cfg, static_cast<int>(rep));
        const Eigen::VectorXd md = md_estimate(sp.panel);
        for (int k = 0; k < 3; ++k) row.md_err[k] = md(tracked[static_cast<std::size_t>(k)]) -
                                                    sp.beta_bar(tracked[static_cast<std::size_t>(k)]);
        row.did_all_err = did_estimate(sp.panel, all_controls) - sp.beta_bar(0);
        row.did_valid_err = sp.true_controls.empty()
                                ? row.did_all_err
                                : did_estimate(sp.panel, sp.true_controls) - sp.beta_bar(0);
        try {
            const EffectEstimate* est = nullptr;
            BootstrapResult boot;
            EffectEstimate plain;
            if (cfg.n_boot > 0) {
                BootstrapOptions bopts;
                bopts.n_replicates = cfg.n_boot;
                bopts.block_len = cfg.block_len;
                bopts.levels = {0.95};
                bopts.seed = rng::derive(cfg.master_seed, static_cast<std::uint64_t>(rep), 1);
                boot = block_bootstrap(sp.panel, cfg.r_fit, bopts);
                est = &boot.estimate;
                row.boot_retries = boot.retries;
                for (int k = 0; k < 3; ++k) {
                    const auto& ci = boot.intervals[static_cast<std::size_t>(tracked[static_cast<std::size_t>(k)])][0];
                    const double truth = sp.beta_bar(tracked[static_cast<std::size_t>(k)]);
                    row.covered[k] = truth >= ci.low && truth <= ci.high;
                }
            } else {
                plain = estimate_average_effects(sp.panel, cfg.r_fit);
                est = &plain;
            }
            for (int k = 0; k < 3; ++k)
                row.sci_err[k] = est->beta_hat(tracked[static_cast<std::size_t>(k)]) -
                                 sp.beta_bar(tracked[static_cast<std::size_t>(k)]);
            row.selection_exact = est->selected_controls == sp.true_controls;
            row.ok = true;
        } catch (const std::runtime_error&) {
            row.ok = false;
        }
    });

    SimReport report;
    report.config = cfg;
    std::vector<double> sci_err[3], md_err[3], did_all, did_valid;
    int covered[3] = {0, 0, 0};
    int n_ok = 0, n_sel = 0;
    for (const RepRow& row : rows) {
        for (int k = 0; k < 3; ++k) md_err[k].push_back(row.md_err[k]);
        did_all.push_back(row.did_all_err);
        did_valid.push_back(row.did_valid_err);
        if (!row.ok) {
            ++report.n_failed;
            continue;
        }
        ++n_ok;
        report.total_boot_retries += row.boot_retries;
        n_sel += row.selection_exact ? 1 : 0;
        for (int k = 0; k < 3; ++k) {
            sci_err[k].push_back(row.sci_err[k]);
            covered[k] += row.covered[k] ? 1 : 0;
        }
    }
    report.n_reps_done = n_ok;
    if (report.n_failed > 0.02 * cfg.n_reps)
        throw numeric_error("simulation cell exceeded the 2% failure budget (" +
                            std::to_string(report.n_failed) + "/" + std::to_string(cfg.n_reps) + ")");

    for (int k = 0; k < 3; ++k) {
        report.bias["sci"][tracked[static_cast<std::size_t>(k)]] = detail::summarize(sci_err[k]);
        report.bias["md"][tracked[static_cast<std::size_t>(k)]] = detail::summarize(md_err[k]);
        if (cfg.n_boot > 0 && n_ok > 0) {
            CoverageEntry c;
            c.n = n_ok;
            c.coverage = static_cast<double>(covered[k]) / n_ok;
            c.mc_se = std::sqrt(c.coverage * (1.0 - c.coverage) / n_ok);
            report.coverage[tracked[static_cast<std::size_t>(k)]] = c;
        }
    }
    report.bias["did_all"][0] = detail::summarize(did_all);
    report.bias["did_valid"][0] = detail::summarize(did_valid);
    report.selection_accuracy = n_ok > 0 ? static_cast<double>(n_sel) / n_ok : 0.0;
    return report;
}

}  // namespace sci
