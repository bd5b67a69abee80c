#include <catch_amalgamated.hpp>

#include <cmath>

#include "sci/robust.hpp"
#include "sci/stats.hpp"
#include "support/test_util.hpp"

using Catch::Approx;

TEST_CASE("breakdown arithmetic") {
    CHECK(sci::lts_breakdown_check(9, 2) == 2);
    CHECK(sci::lts_breakdown_check(10, 2) == 3);
    for (int r = 1; r <= 5; ++r) CHECK(sci::lts_breakdown_check(2 * r + 2, r) == 1);
    CHECK_THROWS_AS(sci::lts_breakdown_check(5, 2), sci::validation_error);
}

TEST_CASE("exact-fit property with six points on the zero line") {
    Eigen::VectorXd y(10);
    y << 0, 0, 0, 0, 0, 0, 5, 5, 5, 5;
    const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(10, 1);
    const sci::LtsFit fit = sci::lts_regress(y, x, 6);
    CHECK(fit.coef(0) == Approx(0.0).margin(1e-12));
    CHECK(fit.objective == Approx(0.0).margin(1e-12));
    CHECK(fit.exact);
    CHECK(fit.inlier_set == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("exact-fit property for a general hyperplane") {
    const Eigen::MatrixXd x = testutil::random_matrix(9, 2, 41);
    Eigen::Vector2d truth(1.5, -2.0);
    Eigen::VectorXd y = x * truth;
    // three gross outliers leave six exact points, enough for h = 5
    y(1) += 10;
    y(4) -= 7;
    y(7) += 3;
    const sci::LtsFit fit = sci::lts_regress(y, x, 5);
    CHECK((fit.coef - truth).cwiseAbs().maxCoeff() < 1e-9);
    CHECK(fit.objective == Approx(0.0).margin(1e-16));
}

TEST_CASE("exhaustive solution matches the independent enumeration oracle") {
    for (int seed = 0; seed < 25; ++seed) {
        const Eigen::MatrixXd x = testutil::random_matrix(8, 2, 500 + seed);
        Eigen::VectorXd y = x * Eigen::Vector2d(2.0, -1.0);
        auto gen = sci::rng::engine(600 + seed, 0);
        sci::rng::NormalSampler normal;
        for (int i = 0; i < 8; ++i) y(i) += 0.3 * normal(gen);
        y(0) += 15;
        y(3) -= 20;
        y(6) += 9;
        const sci::LtsFit fit = sci::lts_regress(y, x, 5);
        const double oracle = testutil::lts_oracle_objective(y, x, 5);
        REQUIRE(fit.exact);
        CHECK(fit.objective <= oracle + 1e-9);
        CHECK(fit.objective == Approx(oracle).margin(1e-9));
    }
}

TEST_CASE("objective equals the recomputed trimmed sum") {
    const Eigen::MatrixXd x = testutil::random_matrix(12, 2, 43);
    const Eigen::VectorXd y = testutil::random_matrix(12, 1, 44);
    const sci::LtsFit fit = sci::lts_regress(y, x, 7);
    Eigen::VectorXd r2 = (y - x * fit.coef).array().square();
    std::sort(r2.data(), r2.data() + r2.size());
    CHECK(fit.objective == Approx(r2.head(7).sum()).epsilon(1e-10));
}

TEST_CASE("regression and affine equivariance") {
    const Eigen::MatrixXd x = testutil::random_matrix(10, 2, 45);
    Eigen::VectorXd y = testutil::random_matrix(10, 1, 46);
    const sci::LtsFit base = sci::lts_regress(y, x, 6);

    SECTION("shifting the response by design*v shifts the coefficients by v") {
        const Eigen::Vector2d v(0.7, -1.3);
        const sci::LtsFit shifted = sci::lts_regress(y + x * v, x, 6);
        CHECK((shifted.coef - (base.coef + v)).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(shifted.objective == Approx(base.objective).margin(1e-10));
    }
    SECTION("invertible design transforms map the coefficients inversely") {
        Eigen::Matrix2d a;
        a << 2, 1, -1, 3;
        const sci::LtsFit mapped = sci::lts_regress(y, x * a, 6);
        CHECK((a * mapped.coef - base.coef).cwiseAbs().maxCoeff() < 1e-8);
        CHECK(mapped.objective == Approx(base.objective).epsilon(1e-8));
    }
}

TEST_CASE("objective is nondecreasing in h") {
    const Eigen::MatrixXd x = testutil::random_matrix(11, 2, 47);
    const Eigen::VectorXd y = testutil::random_matrix(11, 1, 48);
    double prev = 0.0;
    for (int h = 3; h <= 11; ++h) {
        const double obj = sci::lts_regress(y, x, h).objective;
        CHECK(obj >= prev - 1e-12);
        prev = obj;
    }
}

TEST_CASE("LTS agrees with OLS on clean Gaussian data") {
    int within = 0;
    const int n = 40;
    for (int seed = 0; seed < 200; ++seed) {
        const Eigen::MatrixXd x = testutil::random_matrix(n, 2, 700 + seed);
        auto gen = sci::rng::engine(900 + seed, 0);
        sci::rng::NormalSampler normal;
        Eigen::VectorXd eps(n);
        for (int i = 0; i < n; ++i) eps(i) = normal(gen);
        const Eigen::VectorXd y = x * Eigen::Vector2d(1.0, 2.0) + eps;
        const Eigen::VectorXd ols = (x.transpose() * x).ldlt().solve(x.transpose() * y);
        const Eigen::VectorXd resid = y - x * ols;
        const double s2 = resid.squaredNorm() / (n - 2);
        const Eigen::MatrixXd cov = s2 * (x.transpose() * x).inverse();
        sci::LtsOptions opts;
        opts.seed = 1234 + seed;
        const sci::LtsFit lts = sci::lts_regress(y, x, n / 2 + 1, opts);
        bool ok = true;
        for (int j = 0; j < 2; ++j)
            ok = ok && std::abs(lts.coef(j) - ols(j)) < 3.0 * std::sqrt(cov(j, j));
        within += ok ? 1 : 0;
    }
    CHECK(within >= 190);
}

TEST_CASE("FAST-LTS never beats the exact solution and usually matches it") {
    int match = 0;
    const int cases = 100;
    for (int seed = 0; seed < cases; ++seed) {
        const int n = 10 + (seed % 3);
        const Eigen::MatrixXd x = testutil::random_matrix(n, 2, 1100 + seed);
        Eigen::VectorXd y = x * Eigen::Vector2d(1.0, -1.0);
        auto gen = sci::rng::engine(1300 + seed, 0);
        sci::rng::NormalSampler normal;
        for (int i = 0; i < n; ++i) y(i) += normal(gen);
        y(2) += 12;
        y(5) -= 8;
        const int h = n / 2 + 1;
        const sci::LtsFit exact = sci::lts_regress(y, x, h);
        REQUIRE(exact.exact);
        sci::LtsOptions fast_opts;
        fast_opts.exhaustive_cap = 0;  // force the heuristic
        fast_opts.seed = 77 + seed;
        const sci::LtsFit fast = sci::lts_regress(y, x, h, fast_opts);
        REQUIRE_FALSE(fast.exact);
        CHECK(fast.objective >= exact.objective - 1e-12);
        if (fast.objective <= exact.objective * (1.0 + 1e-9) + 1e-12) ++match;
    }
    CHECK(match >= 99);
}

TEST_CASE("h = N reduces to ordinary least squares") {
    const Eigen::MatrixXd x = testutil::random_matrix(9, 2, 49);
    const Eigen::VectorXd y = testutil::random_matrix(9, 1, 50);
    const sci::LtsFit fit = sci::lts_regress(y, x, 9);
    const Eigen::VectorXd ols = (x.transpose() * x).ldlt().solve(x.transpose() * y);
    CHECK((fit.coef - ols).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("validation of h and the design matrix") {
    const Eigen::MatrixXd x = testutil::random_matrix(8, 2, 51);
    const Eigen::VectorXd y = testutil::random_matrix(8, 1, 52);
    CHECK_THROWS_AS(sci::lts_regress(y, x, 2), sci::validation_error);  // h < r+1
    CHECK_THROWS_AS(sci::lts_regress(y, x, 9), sci::validation_error);  // h > N
    Eigen::MatrixXd rank1(8, 2);
    rank1.col(0) = x.col(0);
    rank1.col(1) = 2.0 * x.col(0);
    CHECK_THROWS_AS(sci::lts_regress(y, rank1, 5), sci::numeric_error);
}

TEST_CASE("deterministic given a seed") {
    const Eigen::MatrixXd x = testutil::random_matrix(30, 2, 53);
    const Eigen::VectorXd y = testutil::random_matrix(30, 1, 54);
    sci::LtsOptions opts;
    opts.exhaustive_cap = 0;
    opts.seed = 99;
    const sci::LtsFit a = sci::lts_regress(y, x, 16, opts);
    const sci::LtsFit b = sci::lts_regress(y, x, 16, opts);
    CHECK(a.objective == b.objective);
    CHECK((a.coef - b.coef).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.inlier_set == b.inlier_set);
}
