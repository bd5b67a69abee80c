#pragma once

#include <stdexcept>
#include <string>

namespace sci {

/// Bad inputs: shape mismatches, out-of-range parameters, malformed files.
/// CLI maps these to exit code 2.
class validation_error : public std::runtime_error {
public:
    explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

/// CSV parsing problems; message names the offending row/column.
class parse_error : public validation_error {
public:
    explicit parse_error(const std::string& msg) : validation_error(msg) {}
};

/// Numerical failures: non-convergence, rank deficiency, singular covariance.
/// CLI maps these to exit code 3.
class numeric_error : public std::runtime_error {
public:
    explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

/// Re-throws the active exception with a pipeline-step prefix, preserving its type.
template <typename Fn>
auto labeled_step(const char* step, Fn&& fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const parse_error& e) {
        throw parse_error(std::string(step) + ": " + e.what());
    } catch (const validation_error& e) {
        throw validation_error(std::string(step) + ": " + e.what());
    } catch (const numeric_error& e) {
        throw numeric_error(std::string(step) + ": " + e.what());
    }
}

}  // namespace detail
}  // namespace sci
