#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sci/errors.hpp"
#include "sci/estimator.hpp"
#include "sci/panel.hpp"
#include "sci/parallel.hpp"
#include "sci/rng.hpp"
#include "sci/stats.hpp"

namespace sci {

struct IntervalEntry {
    double level;  // e.g. 0.95
    double low;
    double high;
};

/// Per-unit confidence intervals and the bootstrap replicate matrix.
struct BootstrapResult {
    Eigen::MatrixXd replicates;  // B x N
    Eigen::VectorXd point;       // N, estimate on the original panel
    Eigen::VectorXd se;          // N, replicate standard deviations
    std::vector<std::vector<IntervalEntry>> intervals;             // [unit][level], Wald
    std::vector<std::vector<IntervalEntry>> percentile_intervals;  // diagnostics
    int block_len = 0;
    int n_replicates = 0;
    std::uint64_t seed = 0;
    int retries = 0;  // replicate fits that failed and were redrawn
    EffectEstimate estimate;  // the original fit the intervals are centered on
};

struct BootstrapOptions {
    int n_replicates = 200;
    int block_len = 0;  // 0 -> default_block_len(T)
    std::vector<double> levels = {0.90, 0.95};
    std::uint64_t seed = 2024;
    bool reselect = false;  // re-run selection in every replicate (default keeps C-hat frozen)
    int h = -1;
    unsigned threads = 1;
};

/// Default circular-block length: max(1, round(T^(1/3))).
inline int default_block_len(Eigen::Index n_periods) {
    if (n_periods < 4) throw validation_error("default_block_len needs T >= 4");
    return std::max(1, static_cast<int>(std::lround(std::cbrt(static_cast<double>(n_periods)))));
}

namespace detail {

/// Circular block resampling of a segment of the given length: enough blocks
/// to cover it, wrap-around within the segment, truncated to exact length.
inline void cbb_indices(int seg_len, int block_len, std::mt19937_64& gen, std::vector<int>& out) {
    out.clear();
    out.reserve(static_cast<std::size_t>(seg_len));
    const int n_blocks = (seg_len + block_len - 1) / block_len;
    for (int b = 0; b < n_blocks && static_cast<int>(out.size()) < seg_len; ++b) {
        const int start = static_cast<int>(rng::below(gen, static_cast<std::uint64_t>(seg_len)));
        for (int k = 0; k < block_len && static_cast<int>(out.size()) < seg_len; ++k)
            out.push_back((start + k) % seg_len);
    }
}

/// Builds the resampled panel: pre- and post-segment time indices drawn
/// independently, whole cross-sections moved as units.
inline void resample_panel(const Panel& src, int block_len, std::mt19937_64& gen, Panel& dst) {
    const int t0 = src.t0;
    const int t1 = static_cast<int>(src.n_periods()) - t0;
    std::vector<int> idx;
    cbb_indices(t0, block_len, gen, idx);
    for (int k = 0; k < t0; ++k) dst.outcomes.col(k) = src.outcomes.col(idx[static_cast<std::size_t>(k)]);
    cbb_indices(t1, block_len, gen, idx);
    for (int k = 0; k < t1; ++k)
        dst.outcomes.col(t0 + k) = src.outcomes.col(t0 + idx[static_cast<std::size_t>(k)]);
}

/// Replicate estimate with the control selection frozen: factor analysis on the
/// resampled pre period, then the Step-4 refit on the original C-hat.
inline Eigen::VectorXd replicate_fixed_selection(const Panel& panel,
                                                 const std::vector<int>& selected, int r,
                                                 const FactorOptions& fopts) {
    const FactorFit fit = fit_factors(panel, r, fopts);
    const Eigen::VectorXd diff = split_means(panel).diff;
    const Eigen::VectorXd alpha1 = checked_lstsq(
        rows_of(fit.loadings, selected), entries_of(diff, selected), "bootstrap refit");
    return diff - fit.loadings * alpha1;
}

}  // namespace detail

/// Circular block bootstrap for the average effects. Replicate b draws from a
/// stream derived from (seed, b), so results are identical for any thread
/// count. Failed replicate fits are redrawn from the same stream and counted.
inline BootstrapResult block_bootstrap(const Panel& panel, int r,
                                       const BootstrapOptions& opts = {}) {
    validate_panel(panel);
    const int b_total = opts.n_replicates;
    if (b_total < 50) throw validation_error("block_bootstrap needs at least 50 replicates");
    const int t0 = panel.t0;
    const int t1 = static_cast<int>(panel.n_periods()) - t0;
    const int block_len =
        opts.block_len == 0 ? std::min({default_block_len(panel.n_periods()), t0, t1})
                            : opts.block_len;
    if (block_len < 1 || block_len > std::min(t0, t1))
        throw validation_error("block_len must lie in [1, min(t0, T-t0)]; got " +
                               std::to_string(block_len));
    if (opts.levels.empty()) throw validation_error("no confidence levels requested");
    for (double lv : opts.levels)
        if (!(lv > 0.0 && lv < 1.0))
            throw validation_error("confidence levels must lie in (0,1)");

    BootstrapResult out;
    out.estimate = estimate_average_effects(panel, r, opts.h);
    out.point = out.estimate.beta_hat;
    out.block_len = block_len;
    out.n_replicates = b_total;
    out.seed = opts.seed;

    const Eigen::Index n = panel.n_units();
    out.replicates.resize(b_total, n);
    std::vector<int> retries_per_rep(static_cast<std::size_t>(b_total), 0);
    FactorOptions fopts;  // defaults; non-convergence throws and triggers a redraw

    parallel_for(static_cast<std::size_t>(b_total), opts.threads, [&](std::size_t b) {
        auto gen = rng::engine(opts.seed, static_cast<std::uint64_t>(b), 101);
        Panel work = panel;  // reuse one buffer per replicate
        int& retries = retries_per_rep[b];
        for (;;) {
            detail::resample_panel(panel, block_len, gen, work);
            try {
                if (opts.reselect) {
                    out.replicates.row(static_cast<Eigen::Index>(b)) =
                        estimate_average_effects(work, r, opts.h).beta_hat.transpose();
                } else {
                    out.replicates.row(static_cast<Eigen::Index>(b)) =
                        detail::replicate_fixed_selection(work, out.estimate.selected_controls, r,
                                                          fopts)
                            .transpose();
                }
                return;
            } catch (const std::runtime_error&) {
                if (++retries > 10 * b_total)
                    throw numeric_error("block_bootstrap: more than " + std::to_string(10 * b_total) +
                                        " replicate failures; the fit is too fragile to bootstrap");
            }
        }
    });
    for (int v : retries_per_rep) out.retries += v;
    if (out.retries > 10 * b_total)
        throw numeric_error("block_bootstrap: " + std::to_string(out.retries) +
                            " cumulative replicate failures exceed the 10*B budget");

    out.se.resize(n);
    out.intervals.resize(static_cast<std::size_t>(n));
    out.percentile_intervals.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        std::vector<double> col(static_cast<std::size_t>(b_total));
        for (int b = 0; b < b_total; ++b) col[static_cast<std::size_t>(b)] = out.replicates(b, i);
        out.se(i) = stats::sd(col);
        for (double lv : opts.levels) {
            const double z = stats::normal_quantile(0.5 + lv / 2.0);
            out.intervals[static_cast<std::size_t>(i)].push_back(
                {lv, out.point(i) - z * out.se(i), out.point(i) + z * out.se(i)});
            out.percentile_intervals[static_cast<std::size_t>(i)].push_back(
                {lv, stats::quantile(col, (1.0 - lv) / 2.0), stats::quantile(col, 0.5 + lv / 2.0)});
        }
    }
    return out;
}

}  // namespace sci
