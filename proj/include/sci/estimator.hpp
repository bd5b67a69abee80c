#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "sci/errors.hpp"
#include "sci/factor.hpp"
#include "sci/panel.hpp"
#include "sci/robust.hpp"

namespace sci {

enum class SigmaWindow { full, pre };

/// Output of the four-step average-effect pipeline.
struct EffectEstimate {
    Eigen::VectorXd beta_hat;        // N, per-unit average effect (refit residual for selected units)
    Eigen::VectorXd alpha_tilde;     // r, robust-regression stage
    Eigen::VectorXd alpha1_hat;      // r, OLS refit on the selected controls
    std::vector<int> selected_controls;  // sorted unit indices inside the threshold
    double sigma_hat = 0.0;
    double threshold = 0.0;
    Eigen::VectorXd weights;         // N, synthetic-control weights, zero outside the selection
    FactorFit factor_fit;
    Eigen::VectorXd lts_residuals;   // N, D - loadings * alpha_tilde
    Eigen::VectorXd diff;            // N, post mean minus pre mean (the regression response)
    double rho = 0.0;                // t0 / T
    bool treated_selected = false;   // treated unit fell inside the threshold
    int h = 0;
};

/// Reduced-form covariate coefficients and the residualized panel.
struct CovariateAdjustment {
    Eigen::MatrixXd u_tilde;  // N x p
    Panel residual_panel;
};

/// sigma-hat of Step 3: the square root of the average of the smallest
/// floor(N/2)+r+1 eigenvalues of the centered sample covariance (full sample
/// for average effects, pre-intervention only for dynamic effects).
inline double estimate_sigma(const Panel& panel, int r, SigmaWindow window = SigmaWindow::full) {
    validate_panel(panel);
    const Eigen::Index n = panel.n_units();
    const int lo = (static_cast<int>(n) + 1) / 2 - r;  // ceil(N/2) - r, 1-based
    if (lo < 1)
        throw validation_error("estimate_sigma needs r < ceil(N/2); got r=" + std::to_string(r) +
                               ", N=" + std::to_string(n));
    const Eigen::Index len = window == SigmaWindow::full ? panel.n_periods()
                                                         : static_cast<Eigen::Index>(panel.t0);
    if (len < 2) throw numeric_error("estimate_sigma: need at least 2 periods in the window");
    const Eigen::MatrixXd block = panel.outcomes.leftCols(len);
    const Eigen::VectorXd mu = block.rowwise().mean();
    const Eigen::MatrixXd centered = block.colwise() - mu;
    const Eigen::MatrixXd v = centered * centered.transpose() / static_cast<double>(len);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(v);
    if (es.info() != Eigen::Success) throw numeric_error("estimate_sigma: eigensolve failed");
    // eigenvalues ascending; the i-th largest for i = lo..N are the first N-lo+1 ascending
    double sum = 0.0;
    for (Eigen::Index i = 0; i < n - lo + 1; ++i) sum += es.eigenvalues()(i);
    return std::sqrt(sum / static_cast<double>(n));
}

/// Hard-threshold selection of non-interfered units:
/// C-hat = { i : |diff_i - loadings_i' alpha_tilde| <= sqrt(2 log(NT)/T) sigma }.
inline std::vector<int> select_controls(const Eigen::VectorXd& diff, const FactorFit& factor_fit,
                                        const Eigen::VectorXd& alpha_tilde, double sigma_hat,
                                        Eigen::Index n_periods) {
    const Eigen::Index n = diff.size();
    if (factor_fit.loadings.rows() != n || factor_fit.loadings.cols() != alpha_tilde.size())
        throw validation_error("select_controls: dimension mismatch");
    const double t = static_cast<double>(n_periods);
    const double threshold =
        std::sqrt(2.0 * std::log(static_cast<double>(n) * t) / t) * sigma_hat;
    const Eigen::VectorXd resid = diff - factor_fit.loadings * alpha_tilde;
    std::vector<int> selected;
    for (Eigen::Index i = 0; i < n; ++i)
        if (std::abs(resid(i)) <= threshold) selected.push_back(static_cast<int>(i));
    if (static_cast<int>(selected.size()) < factor_fit.r)
        throw numeric_error("selected control set has fewer than r units (" +
                            std::to_string(selected.size()) + " < " + std::to_string(factor_fit.r) +
                            "); consider a different factor count r or trimming h");
    return selected;
}

namespace detail {

inline Eigen::MatrixXd rows_of(const Eigen::MatrixXd& m, const std::vector<int>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), m.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = m.row(idx[k]);
    return out;
}

inline Eigen::VectorXd entries_of(const Eigen::VectorXd& v, const std::vector<int>& idx) {
    Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = v(idx[k]);
    return out;
}

/// Rank-revealing least squares; names the dependent columns on failure.
inline Eigen::VectorXd checked_lstsq(const Eigen::MatrixXd& a, const Eigen::VectorXd& b,
                                     const char* what) {
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < a.cols()) {
        std::string cols;
        for (Eigen::Index j = qr.rank(); j < a.cols(); ++j) {
            if (!cols.empty()) cols += ", ";
            cols += std::to_string(qr.colsPermutation().indices()(j) + 1);
        }
        throw numeric_error(std::string(what) + ": rank-deficient design (dependent columns: " +
                            cols + ")");
    }
    return qr.solve(b);
}

inline std::vector<int> drop_treated(const std::vector<int>& selected, bool* dropped) {
    std::vector<int> out;
    for (int i : selected)
        if (i != 0) out.push_back(i);
    if (dropped) *dropped = out.size() != selected.size();
    return out;
}

}  // namespace detail

struct RefitResult {
    Eigen::VectorXd alpha1_hat;  // r
    Eigen::VectorXd beta_hat;    // N
};

/// Step 4 on its own: OLS of the panel's post-period means on the selected
/// loadings, then beta = post mean - loadings * alpha1 for every unit.
inline RefitResult refit(const Panel& panel, const FactorFit& factor_fit,
                         const std::vector<int>& selected) {
    validate_panel(panel);
    if (static_cast<int>(selected.size()) < factor_fit.r)
        throw validation_error("refit needs at least r selected units");
    const Eigen::VectorXd post =
        panel.outcomes.rightCols(panel.n_periods() - panel.t0).rowwise().mean();
    RefitResult out;
    out.alpha1_hat = detail::checked_lstsq(detail::rows_of(factor_fit.loadings, selected),
                                           detail::entries_of(post, selected), "refit");
    out.beta_hat = post - factor_fit.loadings * out.alpha1_hat;
    return out;
}

/// Proposition-1 weights: w_j = loadings_1' (L_C' L_C)^-1 loadings_j for j in
/// the selection, zero elsewhere. When the treated unit is inside the
/// selection it is excluded from the weight construction.
inline Eigen::VectorXd synthetic_weights(const FactorFit& factor_fit,
                                         const std::vector<int>& selected) {
    bool dropped = false;
    const std::vector<int> donors = detail::drop_treated(selected, &dropped);
    if (static_cast<int>(donors.size()) < factor_fit.r)
        throw validation_error("synthetic_weights needs at least r selected control units");
    const Eigen::MatrixXd lc = detail::rows_of(factor_fit.loadings, donors);
    const Eigen::MatrixXd gram = lc.transpose() * lc;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff()))
        throw numeric_error("synthetic_weights: selected loadings are rank deficient");
    const Eigen::VectorXd core = ldlt.solve(factor_fit.loadings.row(0).transpose());
    Eigen::VectorXd weights = Eigen::VectorXd::Zero(factor_fit.loadings.rows());
    for (int j : donors) weights(j) = factor_fit.loadings.row(j) * core;
    return weights;
}

/// Steps 2-4 given an existing factor fit. All regressions run on the
/// pre-period-centered scale (response D = post mean - pre mean), which makes
/// the pipeline invariant to unit-level constant shifts.
inline EffectEstimate estimate_with_factor(const Panel& panel, const FactorFit& factor_fit,
                                           int h = -1, const LtsOptions& lts_opts = {}) {
    validate_panel(panel);
    const int n = static_cast<int>(panel.n_units());
    if (h < 0) h = n / 2 + 1;

    EffectEstimate est;
    est.factor_fit = factor_fit;
    est.h = h;
    est.rho = panel.rho();
    est.diff = split_means(panel).diff;

    const LtsFit lts = detail::labeled_step("step 2 (robust regression)", [&] {
        return lts_regress(est.diff, factor_fit.loadings, h, lts_opts);
    });
    est.alpha_tilde = lts.coef;
    est.lts_residuals = lts.residuals;

    est.sigma_hat = detail::labeled_step("step 3 (noise scale)", [&] {
        return estimate_sigma(panel, factor_fit.r, SigmaWindow::full);
    });
    const double t = static_cast<double>(panel.n_periods());
    est.threshold = std::sqrt(2.0 * std::log(n * t) / t) * est.sigma_hat;
    est.selected_controls = detail::labeled_step("step 3 (control selection)", [&] {
        return select_controls(est.diff, factor_fit, est.alpha_tilde, est.sigma_hat,
                               panel.n_periods());
    });
    est.treated_selected =
        std::find(est.selected_controls.begin(), est.selected_controls.end(), 0) !=
        est.selected_controls.end();

    detail::labeled_step("step 4 (refit)", [&] {
        est.alpha1_hat =
            detail::checked_lstsq(detail::rows_of(factor_fit.loadings, est.selected_controls),
                                  detail::entries_of(est.diff, est.selected_controls), "refit");
        return 0;
    });
    est.beta_hat = est.diff - factor_fit.loadings * est.alpha1_hat;

    est.weights = detail::labeled_step("step 4 (synthetic weights)", [&] {
        return synthetic_weights(factor_fit, est.selected_controls);
    });
    return est;
}

/// The full pipeline of Steps 1-4.
inline EffectEstimate estimate_average_effects(const Panel& panel, int r, int h = -1,
                                               const FactorOptions& factor_opts = {},
                                               const LtsOptions& lts_opts = {}) {
    const FactorFit fit = detail::labeled_step("step 1 (factor analysis)",
                                               [&] { return fit_factors(panel, r, factor_opts); });
    return estimate_with_factor(panel, fit, h, lts_opts);
}

/// Covariate residualization: per-unit OLS of pre-intervention outcomes on the
/// covariates, then the reduced-form residual panel Y_t - U C_t over all
/// periods. Downstream estimation runs on the residual panel.
inline CovariateAdjustment residualize_covariates(const Panel& panel,
                                                  const CovariatePanel& covariates) {
    validate_panel(panel);
    const Eigen::Index p = covariates.covariates.rows();
    const Eigen::Index t = panel.n_periods();
    if (covariates.covariates.cols() != t)
        throw validation_error("covariate panel period count does not match the outcome panel");
    if (p < 1) throw validation_error("covariate panel is empty");
    if (!covariates.covariates.allFinite())
        throw validation_error("covariates contain non-finite values");
    if (p >= panel.t0)
        throw validation_error("need p < t0 covariates for the pre-period regression");

    CovariateAdjustment adj;
    if (covariates.covariates.isZero(0.0)) {
        // degenerate all-zero covariates contribute nothing
        adj.u_tilde = Eigen::MatrixXd::Zero(panel.n_units(), p);
        adj.residual_panel = panel;
        return adj;
    }
    const Eigen::MatrixXd cpre = covariates.covariates.leftCols(panel.t0);  // p x t0
    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(cpre.transpose());
        qr.setThreshold(1e-10);
        if (qr.rank() < p)
            throw numeric_error("pre-intervention covariate design is rank deficient");
    }
    // row-wise OLS: U' solves (C C') U' = C Y_pre'
    const Eigen::MatrixXd gram = cpre * cpre.transpose();
    const Eigen::MatrixXd rhs = cpre * panel.outcomes.leftCols(panel.t0).transpose();
    adj.u_tilde = gram.ldlt().solve(rhs).transpose();  // N x p
    adj.residual_panel = panel;
    adj.residual_panel.outcomes = panel.outcomes - adj.u_tilde * covariates.covariates;
    return adj;
}

}  // namespace sci
