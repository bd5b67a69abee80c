#include <catch_amalgamated.hpp>

#include <cmath>

#include "sci/factor.hpp"
#include "sci/simulation.hpp"
#include "support/test_util.hpp"

using Catch::Approx;

namespace {

/// Y_t = loadings * f_t + noise, i.i.d. standard normal f and noise.
sci::Panel factor_panel(const Eigen::MatrixXd& loadings, int t_total, std::uint64_t seed,
                        double noise_sd = 1.0) {
    auto gen = sci::rng::engine(seed, 0);
    sci::rng::NormalSampler normal;
    const Eigen::Index n = loadings.rows(), r = loadings.cols();
    Eigen::MatrixXd y(n, t_total);
    for (int t = 0; t < t_total; ++t) {
        Eigen::VectorXd f(r);
        for (Eigen::Index j = 0; j < r; ++j) f(j) = normal(gen);
        y.col(t) = loadings * f;
        for (Eigen::Index i = 0; i < n; ++i) y(i, t) += noise_sd * normal(gen);
    }
    sci::Panel p = testutil::make_panel(y, t_total - 1);
    return p;
}

Eigen::MatrixXd column_projector(const Eigen::MatrixXd& m) {
    return m * (m.transpose() * m).ldlt().solve(m.transpose());
}

/// Panel whose pre-period sample correlation is exactly the identity: the
/// first t0 columns are whitened against their own centered covariance.
sci::Panel whitened_panel(Eigen::Index n, int t0, std::uint64_t seed) {
    Eigen::MatrixXd raw = testutil::random_matrix(n, t0 + 1, seed);
    Eigen::MatrixXd pre = raw.leftCols(t0);
    const Eigen::VectorXd mu = pre.rowwise().mean();
    const Eigen::MatrixXd centered = pre.colwise() - mu;
    const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(t0);
    raw.leftCols(t0) = cov.llt().matrixL().solve(centered);
    return testutil::make_panel(raw, t0);
}

}  // namespace

TEST_CASE("fit_factors recovers the simulation loading space") {
    const Eigen::MatrixXd lam = sci::detail::sim_loadings(10);
    sci::Panel p = factor_panel(lam, 5001, 21);
    p.t0 = 5000;
    const sci::FactorFit fit = sci::fit_factors(p, 2);
    REQUIRE(fit.converged);
    const Eigen::MatrixXd diff = column_projector(fit.loadings) - column_projector(lam);
    CHECK(diff.norm() < 0.1);
}

TEST_CASE("one-factor unit loading vector is recovered entrywise") {
    const Eigen::MatrixXd lam = Eigen::MatrixXd::Ones(8, 1);
    sci::Panel p = factor_panel(lam, 5001, 22);
    p.t0 = 5000;
    const sci::FactorFit fit = sci::fit_factors(p, 1);
    REQUIRE(fit.converged);
    CHECK((fit.loadings.col(0).cwiseAbs() - Eigen::VectorXd::Ones(8)).cwiseAbs().maxCoeff() < 0.1);
}

TEST_CASE("diagonal-covariance data converges with a finite likelihood") {
    // no common factor at all: exactly-whitened pre period
    const sci::Panel p = whitened_panel(6, 400, 23);
    const sci::FactorFit fit = sci::fit_factors(p, 1);
    CHECK(fit.converged);
    CHECK(std::isfinite(fit.log_likelihood));
    // either near-zero shared variance or a flagged floor
    const double shared = fit.loadings.col(0).cwiseAbs().maxCoeff();
    CHECK((shared < 0.1 || fit.heywood));
}

TEST_CASE("identification constraint holds at the returned fit") {
    sci::SimConfig cfg;
    cfg.t0 = 200;
    cfg.n_interfered = 2;
    const sci::Panel p = sci::simulate_panel(cfg, 3).panel;
    const sci::FactorFit fit = sci::fit_factors(p, 2);
    const Eigen::MatrixXd m =
        fit.loadings.transpose() * fit.uniquenesses.cwiseInverse().asDiagonal() * fit.loadings;
    const double off = std::abs(m(0, 1));
    const double scale = std::max(std::abs(m(0, 0)), std::abs(m(1, 1)));
    CHECK(off <= 1e-6 * scale);
    CHECK(m(0, 0) >= m(1, 1));  // sorted decreasing
    // sign convention: largest-magnitude entry of each column positive
    for (int j = 0; j < 2; ++j) {
        Eigen::Index imax = 0;
        fit.loadings.col(j).cwiseAbs().maxCoeff(&imax);
        CHECK(fit.loadings(imax, j) > 0);
    }
    // fitted covariance is SPD
    Eigen::MatrixXd sigma = fit.loadings * fit.loadings.transpose();
    sigma.diagonal() += fit.uniquenesses;
    Eigen::LLT<Eigen::MatrixXd> llt(sigma);
    CHECK(llt.info() == Eigen::Success);
}

TEST_CASE("scale equivariance of loadings and uniquenesses") {
    sci::SimConfig cfg;
    cfg.t0 = 150;
    const sci::Panel p = sci::simulate_panel(cfg, 4).panel;
    sci::Panel scaled = p;
    const double s = 3.7;
    scaled.outcomes.row(2) *= s;
    const sci::FactorFit a = sci::fit_factors(p, 2);
    sci::FactorFit b = sci::fit_factors(scaled, 2);
    // the per-column sign anchor may move when one row is rescaled; align
    // signs before comparing (the estimate is defined up to column sign)
    for (int j = 0; j < 2; ++j)
        if (a.loadings.col(j).dot(b.loadings.col(j)) < 0) b.loadings.col(j) *= -1.0;
    CHECK((b.loadings.row(2) - s * a.loadings.row(2)).cwiseAbs().maxCoeff() <
          1e-4 * a.loadings.row(2).cwiseAbs().maxCoeff());
    CHECK(b.uniquenesses(2) == Approx(s * s * a.uniquenesses(2)).epsilon(1e-4));
    CHECK((b.loadings.row(3) - a.loadings.row(3)).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("refitting is bit-reproducible") {
    sci::SimConfig cfg;
    cfg.t0 = 100;
    const sci::Panel p = sci::simulate_panel(cfg, 5).panel;
    const sci::FactorFit a = sci::fit_factors(p, 2);
    const sci::FactorFit b = sci::fit_factors(p, 2);
    CHECK((a.loadings - b.loadings).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.uniquenesses - b.uniquenesses).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.log_likelihood == b.log_likelihood);
    CHECK(a.n_iter == b.n_iter);
}

TEST_CASE("EM objective is monotone and the fit improves on the start") {
    sci::SimConfig cfg;
    cfg.t0 = 120;
    const sci::Panel p = sci::simulate_panel(cfg, 6).panel;
    sci::FactorOptions opts;
    opts.keep_trace = true;
    const sci::FactorFit fit = sci::fit_factors(p, 2, opts);
    REQUIRE(fit.loglik_trace.size() > 2);
    for (std::size_t k = 1; k < fit.loglik_trace.size(); ++k)
        CHECK(fit.loglik_trace[k] >=
              fit.loglik_trace[k - 1] - 1e-10 * std::abs(fit.loglik_trace[k - 1]));

    // fitted covariance ends close to the sample covariance
    const Eigen::MatrixXd pre = p.outcomes.leftCols(p.t0);
    const Eigen::VectorXd mu = pre.rowwise().mean();
    const Eigen::MatrixXd centered = pre.colwise() - mu;
    const Eigen::MatrixXd s = centered * centered.transpose() / static_cast<double>(p.t0);
    Eigen::MatrixXd sigma = fit.loadings * fit.loadings.transpose();
    sigma.diagonal() += fit.uniquenesses;
    const Eigen::VectorXd sd = s.diagonal().cwiseSqrt();
    const Eigen::MatrixXd dinv = sd.cwiseInverse().asDiagonal();
    const Eigen::MatrixXd corr = dinv * s * dinv;
    const Eigen::MatrixXd fitted_corr = dinv * sigma * dinv;
    CHECK((fitted_corr - corr).norm() < 0.5 * corr.norm());
}

TEST_CASE("preconditions are enforced") {
    sci::SimConfig cfg;
    cfg.t0 = 50;
    const sci::Panel p = sci::simulate_panel(cfg, 7).panel;
    CHECK_THROWS_AS(sci::fit_factors(p, 0), sci::validation_error);
    CHECK_THROWS_AS(sci::fit_factors(p, 7), sci::validation_error);  // (10-7)^2 < 17
    sci::Panel short_pre = p;
    short_pre.t0 = 9;  // t0 <= N
    CHECK_THROWS_AS(sci::fit_factors(short_pre, 2), sci::validation_error);

    // singular pre-period covariance: duplicate unit series
    sci::Panel collinear = p;
    collinear.outcomes.row(1) = collinear.outcomes.row(0);
    CHECK_THROWS_AS(sci::fit_factors(collinear, 2), sci::numeric_error);
}

TEST_CASE("suggest_r on stylized correlation structures") {
    // perfectly correlated units: a single dominant eigenvalue
    Eigen::MatrixXd y(5, 200);
    const Eigen::MatrixXd base = testutil::random_matrix(1, 200, 32);
    for (int i = 0; i < 5; ++i) y.row(i) = base * (i + 1.0);
    sci::Panel corr = testutil::make_panel(y, 199);
    CHECK(sci::suggest_r(corr) == 1);

    // exactly whitened data: identity correlation, nothing above 1
    CHECK(sci::suggest_r(whitened_panel(4, 60, 33)) == 0);
}

TEST_CASE("suggest_r finds the simulation's two factors") {
    int hits = 0;
    for (int s = 0; s < 100; ++s) {
        sci::SimConfig cfg;
        cfg.t0 = 200;
        if (sci::suggest_r(sci::simulate_panel(cfg, s).panel) == 2) ++hits;
    }
    CHECK(hits >= 90);
}
