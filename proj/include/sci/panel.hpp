#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sci/errors.hpp"

namespace sci {

/// Balanced outcome panel. Row 0 is the treated unit; the intervention turns on
/// after period t0 (1-based count of pre-intervention periods). Immutable by
/// convention after construction; safe to share read-only across threads.
struct Panel {
    Eigen::MatrixXd outcomes;               // N units x T periods
    int t0 = 0;                             // pre-intervention period count, 1 <= t0 < T
    std::vector<std::string> unit_labels;   // size N, first is the treated unit
    std::vector<std::string> period_labels; // size T or empty

    Eigen::Index n_units() const { return outcomes.rows(); }
    Eigen::Index n_periods() const { return outcomes.cols(); }
    Eigen::Index n_post() const { return outcomes.cols() - t0; }
    double rho() const { return static_cast<double>(t0) / static_cast<double>(outcomes.cols()); }
};

/// Time-varying measured covariates aligned with a Panel's periods.
struct CovariatePanel {
    Eigen::MatrixXd covariates;             // p covariates x T periods
    std::vector<std::string> names;         // size p or empty
};

inline void validate_panel(const Panel& panel) {
    const auto n = panel.n_units();
    const auto t = panel.n_periods();
    if (n < 3) throw validation_error("panel needs at least 3 units, got " + std::to_string(n));
    if (t < 2) throw validation_error("panel needs at least 2 periods");
    if (panel.t0 < 1 || panel.t0 > t - 1)
        throw validation_error("t0 must lie in [1, T-1]; got t0=" + std::to_string(panel.t0) +
                               " with T=" + std::to_string(t));
    if (!panel.outcomes.allFinite()) throw validation_error("panel outcomes contain non-finite values");
    if (static_cast<Eigen::Index>(panel.unit_labels.size()) != n)
        throw validation_error("unit label count does not match row count");
    if (!panel.period_labels.empty() && static_cast<Eigen::Index>(panel.period_labels.size()) != t)
        throw validation_error("period label count does not match column count");
}

struct SplitMeans {
    Eigen::VectorXd pre;   // per-unit mean of periods 1..t0
    Eigen::VectorXd post;  // per-unit mean of periods t0+1..T
    Eigen::VectorXd diff;  // post - pre
};

/// Pre/post outcome means and their difference D (the crude effect estimate).
inline SplitMeans split_means(const Panel& panel) {
    validate_panel(panel);
    SplitMeans out;
    out.pre = panel.outcomes.leftCols(panel.t0).rowwise().mean();
    out.post = panel.outcomes.rightCols(panel.n_periods() - panel.t0).rowwise().mean();
    out.diff = out.post - out.pre;
    return out;
}

/// Restricts to the pre-intervention periods and re-labels a placebo
/// intervention at placebo_t0, for falsification analysis.
inline Panel placebo_split(const Panel& panel, int placebo_t0) {
    validate_panel(panel);
    if (placebo_t0 >= panel.t0)
        throw validation_error("placebo t0 (" + std::to_string(placebo_t0) +
                               ") must be smaller than the real t0 (" + std::to_string(panel.t0) + ")");
    if (placebo_t0 < 1) throw validation_error("placebo t0 must be at least 1");
    Panel out;
    out.outcomes = panel.outcomes.leftCols(panel.t0);
    out.t0 = placebo_t0;
    out.unit_labels = panel.unit_labels;
    if (!panel.period_labels.empty())
        out.period_labels.assign(panel.period_labels.begin(), panel.period_labels.begin() + panel.t0);
    validate_panel(out);
    return out;
}

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur += '"';
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur += ch;
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

inline std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t");
    auto e = s.find_last_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, e - b + 1);
}

inline bool parse_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    const char* first = t.data();
    const char* last = t.data() + t.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last;
}

/// The first CSV column holds period labels when its header is empty or one of
/// the usual time-axis names.
inline bool is_period_header(const std::string& name) {
    std::string low = trim(name);
    std::transform(low.begin(), low.end(), low.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return low.empty() || low == "period" || low == "time" || low == "date" || low == "week" ||
           low == "t";
}

}  // namespace detail

/// Reads a wide-format CSV (rows = periods, columns = units, header = unit
/// labels, optional leading period-label column), moves the treated unit to
/// row 0 and validates the result.
inline Panel load_panel(const std::string& path, int t0, const std::string& treated) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open panel file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw parse_error(path + ": empty file");
    auto header = detail::split_csv_line(line);
    if (header.size() < 2) throw parse_error(path + ": header must name at least two columns");

    const bool has_period_col = detail::is_period_header(header[0]);
    const std::size_t first_unit = has_period_col ? 1 : 0;
    std::vector<std::string> labels;
    for (std::size_t j = first_unit; j < header.size(); ++j) {
        const std::string lab = detail::trim(header[j]);
        if (lab.empty()) throw parse_error(path + ": empty unit label in header column " + std::to_string(j + 1));
        if (std::find(labels.begin(), labels.end(), lab) != labels.end())
            throw validation_error(path + ": duplicate unit label '" + lab + "'");
        labels.push_back(lab);
    }

    std::vector<std::vector<double>> rows;  // one entry per period
    std::vector<std::string> period_labels;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw parse_error(path + ": row " + std::to_string(line_no) + " has " +
                              std::to_string(fields.size()) + " fields, expected " +
                              std::to_string(header.size()));
        if (has_period_col) period_labels.push_back(detail::trim(fields[0]));
        std::vector<double> vals(labels.size());
        for (std::size_t j = first_unit; j < fields.size(); ++j) {
            double v;
            if (!detail::parse_double(fields[j], v))
                throw parse_error(path + ": row " + std::to_string(line_no) + ", column '" +
                                  labels[j - first_unit] + "': missing or non-numeric cell '" +
                                  detail::trim(fields[j]) + "'");
            if (!std::isfinite(v))
                throw parse_error(path + ": row " + std::to_string(line_no) + ", column '" +
                                  labels[j - first_unit] + "': non-finite value");
            vals[j - first_unit] = v;
        }
        rows.push_back(std::move(vals));
    }
    if (rows.size() < 2) throw parse_error(path + ": need at least two data rows");

    const auto treated_it = std::find(labels.begin(), labels.end(), detail::trim(treated));
    if (treated_it == labels.end())
        throw validation_error(path + ": treated unit '" + treated + "' not found among columns");
    const std::size_t treated_idx = static_cast<std::size_t>(treated_it - labels.begin());

    // move treated to front, remaining units keep their order
    std::vector<std::size_t> order;
    order.push_back(treated_idx);
    for (std::size_t j = 0; j < labels.size(); ++j)
        if (j != treated_idx) order.push_back(j);

    Panel panel;
    panel.t0 = t0;
    panel.outcomes.resize(static_cast<Eigen::Index>(labels.size()),
                          static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < order.size(); ++i) {
        panel.unit_labels.push_back(labels[order[i]]);
        for (std::size_t t = 0; t < rows.size(); ++t)
            panel.outcomes(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(t)) =
                rows[t][order[i]];
    }
    panel.period_labels = std::move(period_labels);
    validate_panel(panel);
    return panel;
}

/// Writes a Panel back to wide CSV with full round-trip precision.
inline void write_panel_csv(const Panel& panel, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw validation_error("cannot write panel file: " + path);
    const bool periods = !panel.period_labels.empty();
    if (periods) out << "period";
    for (std::size_t i = 0; i < panel.unit_labels.size(); ++i) {
        if (periods || i > 0) out << ',';
        out << panel.unit_labels[i];
    }
    out << '\n';
    out.precision(std::numeric_limits<double>::max_digits10);
    for (Eigen::Index t = 0; t < panel.n_periods(); ++t) {
        if (periods) out << panel.period_labels[static_cast<std::size_t>(t)];
        for (Eigen::Index i = 0; i < panel.n_units(); ++i) {
            if (periods || i > 0) out << ',';
            out << panel.outcomes(i, t);
        }
        out << '\n';
    }
}

/// Reads a covariate CSV (same wide layout, covariate names in the header).
inline CovariatePanel load_covariates(const std::string& path, Eigen::Index expected_periods) {
    std::ifstream in(path);
    if (!in) throw validation_error("cannot open covariate file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw parse_error(path + ": empty file");
    auto header = detail::split_csv_line(line);
    const bool has_period_col = detail::is_period_header(header[0]);
    const std::size_t first = has_period_col ? 1 : 0;
    std::vector<std::string> names;
    for (std::size_t j = first; j < header.size(); ++j) names.push_back(detail::trim(header[j]));
    if (names.empty()) throw parse_error(path + ": no covariate columns");

    std::vector<std::vector<double>> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != header.size())
            throw parse_error(path + ": row " + std::to_string(line_no) + " has wrong field count");
        std::vector<double> vals(names.size());
        for (std::size_t j = first; j < fields.size(); ++j) {
            double v;
            if (!detail::parse_double(fields[j], v) || !std::isfinite(v))
                throw parse_error(path + ": row " + std::to_string(line_no) + ", column '" +
                                  names[j - first] + "': missing or non-numeric cell");
            vals[j - first] = v;
        }
        rows.push_back(std::move(vals));
    }
    if (static_cast<Eigen::Index>(rows.size()) != expected_periods)
        throw validation_error(path + ": covariate panel has " + std::to_string(rows.size()) +
                               " periods, outcome panel has " + std::to_string(expected_periods));
    CovariatePanel cov;
    cov.names = names;
    cov.covariates.resize(static_cast<Eigen::Index>(names.size()),
                          static_cast<Eigen::Index>(rows.size()));
    for (std::size_t t = 0; t < rows.size(); ++t)
        for (std::size_t p = 0; p < names.size(); ++p)
            cov.covariates(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(t)) = rows[t][p];
    return cov;
}

}  // namespace sci
