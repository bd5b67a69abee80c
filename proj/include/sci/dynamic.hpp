#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "sci/errors.hpp"
#include "sci/estimator.hpp"
#include "sci/factor.hpp"
#include "sci/panel.hpp"
#include "sci/robust.hpp"

namespace sci {

enum class TrendKind { parametric_poly, sieve };

/// Post-period trend model request. For the sieve, the claimed rate exponent
/// d = (s-1)/(2s-1) comes from the declared smoothness s; when s is left
/// unset it is derived from k by inverting k = T1^(1/(2s-1)), which keeps the
/// basis size and the claimed rate coherent. Parametric fits claim d = 1/2.
struct TrendSpec {
    TrendKind kind = TrendKind::parametric_poly;
    int degree_or_k = 1;     // polynomial degree, or sieve basis size k
    double smoothness = 0.0; // sieve only; 0 -> derive from k
};

struct TrendModel {
    TrendSpec spec;
    double rate_d = 0.5;        // convergence exponent used in the threshold
    Eigen::MatrixXd fitted;     // N x T1 fitted trend over post periods
};

/// Per-period effect estimates, selections and the common threshold.
struct DynamicEffects {
    Eigen::MatrixXd beta_t;                  // N x T1
    Eigen::MatrixXd alpha_t;                 // r x T1
    std::vector<std::vector<int>> selected_t;  // per post period
    double threshold = 0.0;                  // sqrt(2 log(NT)) sigma / T^d
    double sigma_hat = 0.0;                  // pre-window sigma
    TrendModel trend;
    FactorFit factor_fit;
};

namespace detail {

/// Legendre polynomials on [-1,1], evaluated column-wise at x; size columns.
inline Eigen::MatrixXd legendre_design(const Eigen::VectorXd& x, int size) {
    Eigen::MatrixXd b(x.size(), size);
    b.col(0).setOnes();
    if (size > 1) b.col(1) = x;
    for (int j = 2; j < size; ++j)
        b.col(j) = ((2.0 * j - 1.0) * x.cwiseProduct(b.col(j - 1)) - (j - 1.0) * b.col(j - 2)) /
                   static_cast<double>(j);
    return b;
}

inline Eigen::VectorXd rescaled_post_time(Eigen::Index t1) {
    // t/T1 on (0,1], mapped to [-1,1] for the orthogonal basis
    Eigen::VectorXd x(t1);
    for (Eigen::Index t = 0; t < t1; ++t)
        x(t) = 2.0 * (static_cast<double>(t + 1) / static_cast<double>(t1)) - 1.0;
    return x;
}

}  // namespace detail

/// Per-unit least-squares fit of the post-period series on a polynomial time
/// basis (parametric: degree d, claimed rate 1/2; sieve: k Legendre basis
/// functions on rescaled time).
inline TrendModel fit_trend(const Panel& panel, const TrendSpec& spec) {
    validate_panel(panel);
    const Eigen::Index t1 = panel.n_post();
    TrendModel model;
    model.spec = spec;
    int basis_size = 0;
    if (spec.kind == TrendKind::parametric_poly) {
        if (spec.degree_or_k < 0) throw validation_error("polynomial degree must be >= 0");
        basis_size = spec.degree_or_k + 1;
        model.rate_d = 0.5;
    } else {
        double s = spec.smoothness;
        int k = spec.degree_or_k;
        if (k <= 0 && s > 1.0)
            k = std::max(1, static_cast<int>(std::lround(
                                std::pow(static_cast<double>(t1), 1.0 / (2.0 * s - 1.0)))));
        if (k <= 0) throw validation_error("sieve basis size k must be positive");
        if (s <= 1.0) {
            // invert k = T1^(1/(2s-1)); requires 1 < k < T1
            if (k <= 1 || k >= t1)
                throw validation_error("cannot derive smoothness from k; declare s explicitly");
            const double m = std::log(static_cast<double>(t1)) / std::log(static_cast<double>(k));
            s = (m + 1.0) / 2.0;
        }
        model.spec.degree_or_k = k;
        model.spec.smoothness = s;
        model.rate_d = (s - 1.0) / (2.0 * s - 1.0);
        basis_size = k;
    }
    if (t1 < basis_size + 1)
        throw validation_error("post period too short for the requested basis (T1=" +
                               std::to_string(t1) + ", basis=" + std::to_string(basis_size) + ")");

    const Eigen::MatrixXd design =
        detail::legendre_design(detail::rescaled_post_time(t1), basis_size);
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
    qr.setThreshold(1e-10);
    if (qr.rank() < design.cols()) throw numeric_error("trend basis design is rank deficient");

    const Eigen::MatrixXd post = panel.outcomes.rightCols(t1);  // N x T1
    const Eigen::MatrixXd coef = qr.solve(post.transpose());    // basis x N
    model.fitted = (design * coef).transpose();                 // N x T1
    return model;
}

/// The dynamic pipeline: factor analysis on the pre period, per-post-period
/// LTS of the fitted trend on the loadings, beta_t = tau_t - loadings*alpha_t,
/// and hard-threshold selection at sqrt(2 log(NT)) sigma / T^d with the
/// pre-window sigma.
inline DynamicEffects estimate_dynamic_effects(const Panel& panel, int r, const TrendSpec& spec,
                                               int h = -1, const FactorOptions& factor_opts = {},
                                               const LtsOptions& lts_opts = {}) {
    validate_panel(panel);
    const int n = static_cast<int>(panel.n_units());
    if (h < 0) h = n / 2 + 1;

    DynamicEffects out;
    out.factor_fit = detail::labeled_step("step 2 (factor analysis)",
                                          [&] { return fit_factors(panel, r, factor_opts); });
    out.trend =
        detail::labeled_step("step 1 (trend estimation)", [&] { return fit_trend(panel, spec); });
    out.sigma_hat = detail::labeled_step(
        "step 4 (noise scale)", [&] { return estimate_sigma(panel, r, SigmaWindow::pre); });

    const double t = static_cast<double>(panel.n_periods());
    out.threshold = std::sqrt(2.0 * std::log(n * t)) * out.sigma_hat / std::pow(t, out.trend.rate_d);

    const Eigen::Index t1 = panel.n_post();
    out.beta_t.resize(n, t1);
    out.alpha_t.resize(r, t1);
    out.selected_t.resize(static_cast<std::size_t>(t1));
    for (Eigen::Index tt = 0; tt < t1; ++tt) {
        const Eigen::VectorXd tau = out.trend.fitted.col(tt);
        LtsFit lts;
        try {
            lts = lts_regress(tau, out.factor_fit.loadings, h, lts_opts);
        } catch (const std::runtime_error& e) {
            throw numeric_error("post period " + std::to_string(tt + 1) + ": " + e.what());
        }
        out.alpha_t.col(tt) = lts.coef;
        out.beta_t.col(tt) = tau - out.factor_fit.loadings * lts.coef;
        std::vector<int>& sel = out.selected_t[static_cast<std::size_t>(tt)];
        for (int i = 0; i < n; ++i)
            if (std::abs(out.beta_t(i, tt)) <= out.threshold) sel.push_back(i);
    }
    return out;
}

}  // namespace sci
