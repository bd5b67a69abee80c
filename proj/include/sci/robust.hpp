#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "sci/errors.hpp"
#include "sci/rng.hpp"

namespace sci {

/// Least-trimmed-squares fit: coef minimizes the sum of the h smallest squared
/// residuals. `exact` reports whether the minimum came from exhaustive subset
/// enumeration (guaranteed global) or the FAST-LTS heuristic.
struct LtsFit {
    Eigen::VectorXd coef;        // r
    double objective = 0.0;      // sum of the h smallest squared residuals
    int h = 0;
    Eigen::VectorXd residuals;   // all N signed residuals at coef
    std::vector<int> inlier_set; // indices of the h smallest squared residuals
    bool exact = false;
};

struct LtsOptions {
    std::int64_t exhaustive_cap = 200000;  // max subsets for exact enumeration
    int n_starts = 500;                    // FAST-LTS elemental starts
    int n_keep = 10;                       // candidates kept for full refinement
    int max_csteps = 100;
    std::uint64_t seed = 2024;             // FAST-LTS is deterministic given this
};

/// Maximum tolerated number of interfered units at panel size n with r factors:
/// floor(n/2) - r, the budget left by the majority-valid-controls condition.
inline int lts_breakdown_check(int n, int r) {
    if (r < 1) throw validation_error("r must be >= 1");
    if (n < 2 * r + 2)
        throw validation_error("no interference budget at this N and r (need N >= 2r+2, got N=" +
                               std::to_string(n) + ", r=" + std::to_string(r) + ")");
    return n / 2 - r;
}

namespace detail {

inline std::int64_t binomial_count(int n, int k) {
    if (k < 0 || k > n) return 0;
    k = std::min(k, n - k);
    std::int64_t c = 1;
    for (int i = 1; i <= k; ++i) {
        c = c * (n - k + i) / i;
        if (c > (std::int64_t{1} << 50)) return c;  // enough to exceed any sensible cap
    }
    return c;
}

/// Least-squares coefficients for the rows in `idx`. Falls back to a
/// rank-revealing solve when the normal equations are near-singular.
inline bool subset_ols(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                       const std::vector<int>& idx, Eigen::VectorXd& coef) {
    const Eigen::Index r = x.cols();
    Eigen::MatrixXd xs(static_cast<Eigen::Index>(idx.size()), r);
    Eigen::VectorXd ys(static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) {
        xs.row(static_cast<Eigen::Index>(k)) = x.row(idx[k]);
        ys(static_cast<Eigen::Index>(k)) = y(idx[k]);
    }
    const Eigen::MatrixXd gram = xs.transpose() * xs;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(gram);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
        ldlt.vectorD().minCoeff() > 1e-12 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
        coef = ldlt.solve(xs.transpose() * ys);
        return true;
    }
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
    qr.setThreshold(1e-10);
    if (qr.rank() < r) return false;
    coef = qr.solve(ys);
    return true;
}

/// Sum of the h smallest squared residuals plus the attaining index set
/// (ties broken by unit index for determinism).
inline double trimmed_objective(const Eigen::VectorXd& resid, int h, std::vector<int>* subset) {
    const int n = static_cast<int>(resid.size());
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return resid(a) * resid(a) < resid(b) * resid(b);
    });
    double obj = 0.0;
    for (int k = 0; k < h; ++k) obj += resid(order[static_cast<std::size_t>(k)]) * resid(order[static_cast<std::size_t>(k)]);
    if (subset) {
        subset->assign(order.begin(), order.begin() + h);
        std::sort(subset->begin(), subset->end());
    }
    return obj;
}

/// Concentration steps: refit on the current h smallest residuals until the
/// subset stabilizes. Never increases the objective.
inline void c_steps(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, int h, int max_steps,
                    Eigen::VectorXd& coef, double& obj, std::vector<int>& subset) {
    Eigen::VectorXd resid = y - x * coef;
    obj = trimmed_objective(resid, h, &subset);
    for (int step = 0; step < max_steps; ++step) {
        Eigen::VectorXd cand;
        if (!subset_ols(y, x, subset, cand)) return;
        const Eigen::VectorXd resid_new = y - x * cand;
        std::vector<int> subset_new;
        const double obj_new = trimmed_objective(resid_new, h, &subset_new);
        if (obj_new >= obj - 1e-15 * std::max(1.0, obj)) {
            if (obj_new < obj) {
                coef = cand;
                obj = obj_new;
                subset = subset_new;
            }
            return;
        }
        coef = cand;
        obj = obj_new;
        if (subset_new == subset) return;
        subset = subset_new;
    }
}

}  // namespace detail

/// LTS regression of response on design (no intercept): exhaustive over all
/// h-subsets with C-step polish when C(N,h) fits under the cap, FAST-LTS
/// (seeded elemental starts + concentration steps) otherwise.
inline LtsFit lts_regress(const Eigen::VectorXd& response, const Eigen::MatrixXd& design, int h,
                          const LtsOptions& opts = {}) {
    const int n = static_cast<int>(design.rows());
    const int r = static_cast<int>(design.cols());
    if (response.size() != n) throw validation_error("lts_regress: response/design row mismatch");
    if (h < r + 1 || h > n)
        throw validation_error("lts_regress: h must lie in [r+1, N]; got h=" + std::to_string(h) +
                               ", r=" + std::to_string(r) + ", N=" + std::to_string(n));
    {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(design);
        qr.setThreshold(1e-10);
        if (qr.rank() < r) throw numeric_error("lts_regress: design matrix is rank deficient");
    }

    double best_obj = std::numeric_limits<double>::infinity();
    Eigen::VectorXd best_coef = Eigen::VectorXd::Zero(r);
    bool found = false;

    const std::int64_t n_subsets = detail::binomial_count(n, h);
    const bool exhaustive = n_subsets <= opts.exhaustive_cap;
    if (exhaustive) {
        std::vector<int> idx(static_cast<std::size_t>(h));
        std::iota(idx.begin(), idx.end(), 0);
        Eigen::VectorXd coef(r);
        for (;;) {
            if (detail::subset_ols(response, design, idx, coef)) {
                const Eigen::VectorXd resid = response - design * coef;
                const double obj = detail::trimmed_objective(resid, h, nullptr);
                if (obj < best_obj) {
                    best_obj = obj;
                    best_coef = coef;
                    found = true;
                }
            }
            // next h-combination in lexicographic order
            int k = h - 1;
            while (k >= 0 && idx[static_cast<std::size_t>(k)] == n - h + k) --k;
            if (k < 0) break;
            ++idx[static_cast<std::size_t>(k)];
            for (int j = k + 1; j < h; ++j)
                idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
        if (!found) throw numeric_error("lts_regress: every h-subset was rank deficient");
        // polish; a global optimum is already a C-step fixed point
        std::vector<int> subset;
        detail::c_steps(response, design, h, opts.max_csteps, best_coef, best_obj, subset);
    } else {
        auto gen = rng::engine(opts.seed, 0);
        struct Candidate {
            Eigen::VectorXd coef;
            double obj;
        };
        std::vector<Candidate> cands;
        for (int s = 0; s < opts.n_starts; ++s) {
            // elemental start: r distinct rows define an exact fit
            std::vector<int> pick;
            while (static_cast<int>(pick.size()) < r) {
                const int cand = static_cast<int>(rng::below(gen, static_cast<std::uint64_t>(n)));
                if (std::find(pick.begin(), pick.end(), cand) == pick.end()) pick.push_back(cand);
            }
            Eigen::VectorXd coef(r);
            if (!detail::subset_ols(response, design, pick, coef)) continue;
            std::vector<int> subset;
            Eigen::VectorXd resid = response - design * coef;
            double obj = detail::trimmed_objective(resid, h, &subset);
            // two cheap concentration steps per start, as in FAST-LTS
            for (int cs = 0; cs < 2; ++cs) {
                Eigen::VectorXd cand;
                if (!detail::subset_ols(response, design, subset, cand)) break;
                resid = response - design * cand;
                std::vector<int> subset_new;
                const double obj_new = detail::trimmed_objective(resid, h, &subset_new);
                if (obj_new >= obj) break;
                coef = cand;
                obj = obj_new;
                subset = subset_new;
            }
            cands.push_back({coef, obj});
        }
        if (cands.empty()) throw numeric_error("lts_regress: all elemental starts degenerate");
        std::stable_sort(cands.begin(), cands.end(),
                         [](const Candidate& a, const Candidate& b) { return a.obj < b.obj; });
        const int keep = std::min<int>(opts.n_keep, static_cast<int>(cands.size()));
        for (int k = 0; k < keep; ++k) {
            Eigen::VectorXd coef = cands[static_cast<std::size_t>(k)].coef;
            double obj;
            std::vector<int> subset;
            detail::c_steps(response, design, h, opts.max_csteps, coef, obj, subset);
            if (obj < best_obj) {
                best_obj = obj;
                best_coef = coef;
            }
        }
    }

    LtsFit fit;
    fit.coef = best_coef;
    fit.h = h;
    fit.exact = exhaustive;
    fit.residuals = response - design * best_coef;
    fit.objective = detail::trimmed_objective(fit.residuals, h, &fit.inlier_set);
    return fit;
}

}  // namespace sci
