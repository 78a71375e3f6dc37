#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace durdecomp {

// Error classes map onto distinct CLI exit codes (see tools/durdecomp.cpp).

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Input could not be parsed or violates a structural requirement.
class DataError : public Error {
public:
    DataError(std::string msg, std::ptrdiff_t row = -1)
        : Error(row >= 0 ? "row " + std::to_string(row) + ": " + msg : msg), row_(row) {}
    std::ptrdiff_t row() const noexcept { return row_; }

private:
    std::ptrdiff_t row_;
};

class ConfigError : public Error {
public:
    ConfigError(const std::string& field, const std::string& msg)
        : Error("config field '" + field + "': " + msg), field_(field) {}
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// An empty conditioning cell: the overlap assumption fails on the chosen grid.
class CellError : public Error {
public:
    CellError(int period, int regime, std::string stratum)
        : Error("empty conditioning cell at period " + std::to_string(period) + ", regime " +
                std::to_string(regime) + ", stratum '" + stratum +
                "' (overlap violated; consider a coarser time grid or carry-forward mode)"),
          period_(period), regime_(regime), stratum_(std::move(stratum)) {}
    int period() const noexcept { return period_; }
    int regime() const noexcept { return regime_; }
    const std::string& stratum() const noexcept { return stratum_; }

private:
    int period_;
    int regime_;
    std::string stratum_;
};

/// Model fitting failed: unidentified parameters, singular information, or non-convergence.
class FitError : public Error {
public:
    FitError(std::string msg, std::vector<std::string> params = {},
             std::vector<double> best_iterate = {})
        : Error(std::move(msg)), params_(std::move(params)), best_(std::move(best_iterate)) {}
    const std::vector<std::string>& parameters() const noexcept { return params_; }
    const std::vector<double>& best_iterate() const noexcept { return best_; }

private:
    std::vector<std::string> params_;
    std::vector<double> best_;
};

/// Fixed-point iteration did not settle.
class ConvergenceError : public Error {
public:
    ConvergenceError(std::string msg, std::vector<double> trace)
        : Error(std::move(msg)), trace_(std::move(trace)) {}
    const std::vector<double>& trace() const noexcept { return trace_; }

private:
    std::vector<double> trace_;
};

}  // namespace durdecomp
