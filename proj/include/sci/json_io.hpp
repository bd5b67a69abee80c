#pragma once

#include <json.hpp>

#include <fstream>
#include <string>
#include <vector>

#include "sci/dynamic.hpp"
#include "sci/errors.hpp"
#include "sci/estimator.hpp"
#include "sci/inference.hpp"
#include "sci/simulation.hpp"

namespace sci::io {

using ordered_json = nlohmann::ordered_json;

inline constexpr int schema_version = 1;

inline ordered_json to_json(const Eigen::VectorXd& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

inline ordered_json to_json(const Eigen::MatrixXd& m) {
    ordered_json rows = ordered_json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        ordered_json row = ordered_json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline ordered_json labels_for(const std::vector<int>& idx, const std::vector<std::string>& labels) {
    ordered_json arr = ordered_json::array();
    for (int i : idx) arr.push_back(labels[static_cast<std::size_t>(i)]);
    return arr;
}

inline ordered_json to_json(const FactorFit& fit) {
    ordered_json j;
    j["r"] = fit.r;
    j["loadings"] = to_json(fit.loadings);
    j["uniquenesses"] = to_json(fit.uniquenesses);
    j["log_likelihood"] = fit.log_likelihood;
    j["converged"] = fit.converged;
    j["n_iter"] = fit.n_iter;
    j["heywood"] = fit.heywood;
    return j;
}

inline ordered_json to_json(const EffectEstimate& est, const std::vector<std::string>& labels) {
    ordered_json j;
    j["beta_hat"] = to_json(est.beta_hat);
    j["alpha_tilde"] = to_json(est.alpha_tilde);
    j["alpha1_hat"] = to_json(est.alpha1_hat);
    j["selected_controls"] = labels_for(est.selected_controls, labels);
    j["no_detected_effect"] = labels_for(est.selected_controls, labels);
    j["treated_selected"] = est.treated_selected;
    j["sigma_hat"] = est.sigma_hat;
    j["threshold"] = est.threshold;
    j["h"] = est.h;
    j["weights"] = to_json(est.weights);
    j["lts_residuals"] = to_json(est.lts_residuals);
    j["diff"] = to_json(est.diff);
    j["rho"] = est.rho;
    j["factor"] = to_json(est.factor_fit);
    return j;
}

inline ordered_json intervals_json(const std::vector<std::vector<IntervalEntry>>& per_unit,
                                   const std::vector<std::string>& labels) {
    ordered_json j;
    for (std::size_t i = 0; i < per_unit.size(); ++i) {
        ordered_json arr = ordered_json::array();
        for (const auto& e : per_unit[i])
            arr.push_back(ordered_json{{"level", e.level}, {"low", e.low}, {"high", e.high}});
        j[labels[i]] = std::move(arr);
    }
    return j;
}

inline ordered_json to_json(const BootstrapResult& boot, const std::vector<std::string>& labels) {
    ordered_json j;
    j["B"] = boot.n_replicates;
    j["block_len"] = boot.block_len;
    j["seed"] = boot.seed;
    j["retries"] = boot.retries;
    j["se"] = to_json(boot.se);
    j["wald_intervals"] = intervals_json(boot.intervals, labels);
    j["percentile_intervals"] = intervals_json(boot.percentile_intervals, labels);
    j["replicates"] = to_json(boot.replicates);
    return j;
}

inline ordered_json to_json(const TrendModel& trend) {
    ordered_json j;
    j["kind"] = trend.spec.kind == TrendKind::parametric_poly ? "poly" : "sieve";
    j["degree_or_k"] = trend.spec.degree_or_k;
    if (trend.spec.kind == TrendKind::sieve) j["smoothness"] = trend.spec.smoothness;
    j["rate_d"] = trend.rate_d;
    return j;
}

inline ordered_json to_json(const DynamicEffects& dyn, const std::vector<std::string>& labels) {
    ordered_json j;
    j["trend"] = to_json(dyn.trend);
    j["sigma_hat"] = dyn.sigma_hat;
    j["threshold"] = dyn.threshold;
    j["beta_t"] = to_json(dyn.beta_t);
    j["alpha_t"] = to_json(dyn.alpha_t);
    ordered_json sel = ordered_json::array();
    for (const auto& s : dyn.selected_t) sel.push_back(labels_for(s, labels));
    j["selected_t"] = std::move(sel);
    j["factor"] = to_json(dyn.factor_fit);
    return j;
}

inline ordered_json to_json(const SimConfig& cfg) {
    ordered_json j;
    j["n_units"] = cfg.n_units;
    j["t0"] = cfg.t0;
    j["n_interfered"] = cfg.n_interfered;
    j["r_fit"] = cfg.r_fit;
    j["n_reps"] = cfg.n_reps;
    j["n_boot"] = cfg.n_boot;
    j["block_len"] = cfg.block_len;
    j["master_seed"] = cfg.master_seed;
    return j;
}

inline ordered_json to_json(const SimReport& report) {
    ordered_json j;
    j["config"] = to_json(report.config);
    ordered_json bias;
    for (const auto& [est, units] : report.bias) {
        ordered_json per_unit;
        for (const auto& [unit, s] : units)
            per_unit[std::to_string(unit + 1)] = ordered_json{
                {"mean", s.mean}, {"median", s.median}, {"q25", s.q25}, {"q75", s.q75}, {"n", s.n}};
        bias[est] = std::move(per_unit);
    }
    j["bias"] = std::move(bias);
    ordered_json cov;
    for (const auto& [unit, c] : report.coverage)
        cov[std::to_string(unit + 1)] =
            ordered_json{{"coverage", c.coverage}, {"mc_se", c.mc_se}, {"n", c.n}};
    j["coverage_95"] = std::move(cov);
    j["selection_accuracy"] = report.selection_accuracy;
    j["n_reps_done"] = report.n_reps_done;
    j["n_failed"] = report.n_failed;
    j["total_boot_retries"] = report.total_boot_retries;
    return j;
}

inline void write_json(const ordered_json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write report file: " + path);
    out << j.dump(2) << '\n';
}

}  // namespace sci::io
