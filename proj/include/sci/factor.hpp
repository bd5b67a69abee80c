#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <string>
#include <vector>

#include "sci/errors.hpp"
#include "sci/panel.hpp"

namespace sci {

/// Maximum-likelihood factor model fit of the pre-intervention outcomes.
/// Loadings are rotated so that loadings' * diag(uniquenesses)^-1 * loadings is
/// diagonal with decreasing entries, and each column's largest-magnitude entry
/// is positive.
struct FactorFit {
    Eigen::MatrixXd loadings;      // N x r, outcome units per factor SD
    Eigen::VectorXd uniquenesses;  // N, outcome-variance units, >= floor
    int r = 0;
    double log_likelihood = 0.0;   // Gaussian quasi-likelihood at the optimum
    bool converged = false;
    int n_iter = 0;
    bool heywood = false;          // uniqueness floor binding at convergence
    std::vector<double> loglik_trace;  // per-EM-iteration objective (correlation scale)
};

struct FactorOptions {
    int max_iter = 1000;
    double tol = 1e-8;            // relative log-likelihood change
    double uniqueness_floor = 1e-3;  // on the correlation scale
    bool keep_trace = false;
    bool throw_on_nonconvergence = true;
};

/// Thrown when EM exhausts max_iter; carries the last iterate so callers can
/// inspect or proceed deliberately.
class factor_convergence_error : public numeric_error {
public:
    factor_convergence_error(const std::string& msg, FactorFit last)
        : numeric_error(msg), last_fit(std::move(last)) {}
    FactorFit last_fit;
};

namespace detail {

inline double fa_loglik(const Eigen::MatrixXd& corr, const Eigen::MatrixXd& loadings,
                        const Eigen::VectorXd& psi, double n_obs) {
    const Eigen::Index n = corr.rows();
    Eigen::MatrixXd sigma = loadings * loadings.transpose();
    sigma.diagonal() += psi;
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    if (llt.info() != Eigen::Success)
        throw numeric_error("factor model covariance not positive definite");
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    const double trace = llt.solve(corr).trace();
    const double c = static_cast<double>(n) * std::log(2.0 * M_PI);
    return -0.5 * n_obs * (c + logdet + trace);
}

/// Rotates loadings so L' diag(psi)^-1 L is diagonal (decreasing), then fixes
/// each column's sign by its largest-magnitude entry. This enforces the
/// anchoring constraint classical factor analysis reports; invariant under
/// row rescaling of (loadings, sqrt psi), so it can run on either scale.
inline void fa_constraint_rotation(Eigen::MatrixXd& loadings, const Eigen::VectorXd& psi) {
    const Eigen::Index r = loadings.cols();
    Eigen::MatrixXd m = loadings.transpose() * psi.cwiseInverse().asDiagonal() * loadings;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw numeric_error("constraint rotation eigensolve failed");
    // Eigen sorts ascending; we want decreasing shared variance
    Eigen::MatrixXd q(r, r);
    for (Eigen::Index j = 0; j < r; ++j) q.col(j) = es.eigenvectors().col(r - 1 - j);
    loadings = loadings * q;
    for (Eigen::Index j = 0; j < r; ++j) {
        Eigen::Index imax = 0;
        loadings.col(j).cwiseAbs().maxCoeff(&imax);
        if (loadings(imax, j) < 0) loadings.col(j) = -loadings.col(j);
    }
}

/// Covariance of the pre-intervention sample, centered at the pre-period mean,
/// normalized by t0 (matching the paper's V-hat convention).
inline Eigen::MatrixXd pre_covariance(const Panel& panel) {
    const Eigen::MatrixXd pre = panel.outcomes.leftCols(panel.t0);
    const Eigen::VectorXd mu = pre.rowwise().mean();
    const Eigen::MatrixXd centered = pre.colwise() - mu;
    return centered * centered.transpose() / static_cast<double>(panel.t0);
}

}  // namespace detail

/// Kaiser rule on the pre-intervention sample correlation matrix: the number
/// of eigenvalues exceeding 1. A convenience only; fit_factors requires r >= 1.
inline int suggest_r(const Panel& panel) {
    validate_panel(panel);
    Eigen::MatrixXd s = detail::pre_covariance(panel);
    Eigen::VectorXd sd = s.diagonal().cwiseSqrt();
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index j = 0; j < s.cols(); ++j) {
            const double denom = sd(i) * sd(j);
            s(i, j) = denom > 0 ? s(i, j) / denom : (i == j ? 1.0 : 0.0);
        }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    int count = 0;
    // tiny slack so an exactly-identity correlation counts zero under roundoff
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        if (es.eigenvalues()(i) > 1.0 + 1e-9) ++count;
    return count;
}

/// ML factor analysis of the pre-intervention panel: EM on the sample
/// correlation matrix with a uniqueness floor, followed by the exact
/// constraint rotation and a rescale back to outcome units.
inline FactorFit fit_factors(const Panel& panel, int r, const FactorOptions& opts = {}) {
    validate_panel(panel);
    const Eigen::Index n = panel.n_units();
    if (r < 1) throw validation_error("factor count r must be >= 1");
    const double df_lhs = static_cast<double>(n - r) * static_cast<double>(n - r);
    if (df_lhs < static_cast<double>(n + r))
        throw validation_error("degrees of freedom violated: need (N-r)^2 >= N+r, got N=" +
                               std::to_string(n) + ", r=" + std::to_string(r));
    if (panel.t0 <= n)
        throw validation_error("factor analysis needs t0 > N pre-intervention periods (t0=" +
                               std::to_string(panel.t0) + ", N=" + std::to_string(n) + ")");

    const Eigen::MatrixXd s = detail::pre_covariance(panel);
    const Eigen::VectorXd sd = s.diagonal().cwiseSqrt();
    if ((sd.array() <= 0).any())
        throw numeric_error("a unit has zero pre-intervention variance; factor analysis impossible");
    Eigen::MatrixXd corr = sd.cwiseInverse().asDiagonal() * s * sd.cwiseInverse().asDiagonal();

    Eigen::LLT<Eigen::MatrixXd> corr_llt(corr);
    if (corr_llt.info() != Eigen::Success)
        throw numeric_error(
            "pre-intervention sample covariance is singular; use fewer factors or more periods");

    // principal-axis start with squared-multiple-correlation uniquenesses
    const Eigen::MatrixXd corr_inv = corr_llt.solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::VectorXd psi = corr_inv.diagonal().cwiseInverse().cwiseMax(opts.uniqueness_floor);
    Eigen::MatrixXd reduced = corr;
    reduced.diagonal() -= psi;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es0(reduced);
    Eigen::MatrixXd loadings(n, r);
    for (int j = 0; j < r; ++j) {
        const double ev = std::max(es0.eigenvalues()(n - 1 - j), 1e-6);
        loadings.col(j) = es0.eigenvectors().col(n - 1 - j) * std::sqrt(ev);
    }

    const double n_obs = static_cast<double>(panel.t0);
    double ll = detail::fa_loglik(corr, loadings, psi, n_obs);
    std::vector<double> trace;
    if (opts.keep_trace) trace.push_back(ll);

    bool converged = false;
    int iter = 0;
    const Eigen::MatrixXd eye_r = Eigen::MatrixXd::Identity(r, r);
    while (iter < opts.max_iter) {
        ++iter;
        const Eigen::MatrixXd lt_pinv = loadings.transpose() * psi.cwiseInverse().asDiagonal();
        const Eigen::MatrixXd g = (eye_r + lt_pinv * loadings).ldlt().solve(eye_r);
        const Eigen::MatrixXd b = g * lt_pinv;            // r x N
        const Eigen::MatrixXd delta = b * corr;           // r x N, E[z x']
        const Eigen::MatrixXd gamma = g + delta * b.transpose();  // r x r, E[z z']
        loadings = gamma.ldlt().solve(delta).transpose(); // N x r
        psi = (corr.diagonal() - (loadings.array() * delta.transpose().array()).rowwise().sum().matrix())
                  .cwiseMax(opts.uniqueness_floor);
        const double ll_new = detail::fa_loglik(corr, loadings, psi, n_obs);
        if (opts.keep_trace) trace.push_back(ll_new);
        if (std::abs(ll_new - ll) <= opts.tol * std::abs(ll)) {
            ll = ll_new;
            converged = true;
            break;
        }
        ll = ll_new;
    }

    FactorFit fit;
    fit.r = r;
    fit.n_iter = iter;
    fit.converged = converged;
    fit.heywood = (psi.array() <= opts.uniqueness_floor * (1.0 + 1e-12)).any();
    fit.loglik_trace = std::move(trace);

    // back to outcome units; the constraint is invariant to this rescale
    fit.loadings = sd.asDiagonal() * loadings;
    fit.uniquenesses = psi.cwiseProduct(sd.cwiseProduct(sd));
    detail::fa_constraint_rotation(fit.loadings, fit.uniquenesses);
    // original-scale likelihood: correlation-scale value minus the Jacobian term
    fit.log_likelihood = ll - n_obs * sd.array().log().sum();

    if (!converged && opts.throw_on_nonconvergence)
        throw factor_convergence_error(
            "factor analysis did not converge in " + std::to_string(opts.max_iter) +
                " EM iterations (relative change tol " + std::to_string(opts.tol) + ")",
            fit);
    return fit;
}

}  // namespace sci
