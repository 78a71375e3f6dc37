#pragma once
// Piecewise-exponential proportional-hazard model for the joint exit and
// treatment processes:
//   exit:      theta^T_t(x, z, s) = lambda^T_k(z, 1(s <= t)) exp(x' beta^T)
//   treatment: theta^S_t(x, z)    = lambda^S_k(z) exp(x' beta^S)
// Time is measured in grid periods; period t is the interval (t-1, t]. A spell
// treated in period s is exposed to the treated exit baseline on (s-1, T].

#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "durdecomp/spells.hpp"

namespace durdecomp {

/// Segment k of a baseline covers (cuts[k], cuts[k+1]]; the last runs to the horizon.
struct PiecewiseSpec {
    std::vector<double> exit_cuts{0.0};
    std::vector<double> treat_cuts{0.0};
    double horizon = 0.0;

    int exit_segments() const noexcept { return static_cast<int>(exit_cuts.size()); }
    int treat_segments() const noexcept { return static_cast<int>(treat_cuts.size()); }
    /// Throws ConfigError on non-increasing cutpoints, a first cut other than 0,
    /// or a horizon not beyond the last cut.
    void validate() const;

    /// `segments` equal-width segments for both processes.
    static PiecewiseSpec uniform(int segments, double width, double horizon);
};

/// Segment holding time t under the left-open convention (t = cut belongs to the earlier one).
int segment_of(const std::vector<double>& cuts, double t);

/// Flat parameter vector:
///   [0, 4K)              log lambda^T, index (2z + treated) K + k
///   [4K, 4K + 2Ks)       log lambda^S, index 4K + z Ks + k
///   then p entries of beta^T, then p entries of beta^S.
struct HazardParams {
    int exit_segments = 1;
    int treat_segments = 1;
    int covariates = 0;
    Eigen::VectorXd theta;

    HazardParams() = default;
    HazardParams(int K, int Ks, int p);
    HazardParams(const PiecewiseSpec& spec, int p) : HazardParams(spec.exit_segments(), spec.treat_segments(), p) {}

    static Eigen::Index size(int K, int Ks, int p) noexcept { return 4 * K + 2 * Ks + 2 * p; }
    Eigen::Index exit_index(int z, int treated, int k) const noexcept {
        return (2 * z + treated) * exit_segments + k;
    }
    Eigen::Index treat_index(int z, int k) const noexcept {
        return 4 * exit_segments + z * treat_segments + k;
    }
    Eigen::Index beta_exit_index(int j) const noexcept {
        return 4 * exit_segments + 2 * treat_segments + j;
    }
    Eigen::Index beta_treat_index(int j) const noexcept { return beta_exit_index(covariates) + j; }

    double exit_rate(int z, int treated, int k) const { return std::exp(theta[exit_index(z, treated, k)]); }
    double treat_rate(int z, int k) const { return std::exp(theta[treat_index(z, k)]); }

    /// Human-readable labels, e.g. "log_lambdaT[z=1,treated,seg=2]" or "betaS[x3]".
    std::vector<std::string> names(const std::vector<std::string>& covariate_names = {}) const;
};

/// Spell data rearranged for fast likelihood evaluation: per regime, column-major
/// covariates and per-segment exposures, plus event tallies.
class LogLikelihood {
public:
    LogLikelihood(const PeriodData& data, const PiecewiseSpec& spec);

    /// Log-likelihood at theta; fills the analytic gradient when `grad` is given.
    /// Throws FitError on a non-finite parameter.
    double operator()(const Eigen::VectorXd& theta, Eigen::VectorXd* grad = nullptr) const;

    int exit_segments() const noexcept { return K_; }
    int treat_segments() const noexcept { return Ks_; }
    int covariates() const noexcept { return p_; }
    Eigen::Index parameter_count() const noexcept { return HazardParams::size(K_, Ks_, p_); }

    /// Events and exposure of each baseline cell, in parameter order (first 4K + 2Ks entries).
    const std::vector<double>& cell_events() const noexcept { return events_; }
    const std::vector<double>& cell_exposure() const noexcept { return exposure_; }
    /// Covariate columns that are identically zero.
    std::vector<int> zero_columns() const;

private:
    struct Group {
        std::size_t n = 0;
        std::vector<double> x;          // p columns of n
        std::vector<double> exit_exp;   // 2K columns of n, index treated * K + k
        std::vector<double> treat_exp;  // Ks columns of n
        std::vector<double> exit_xd;    // sum_i d_i x_ij over exits
        std::vector<double> treat_xd;   // over treatments
    };

    int K_, Ks_, p_;
    Group group_[2];
    std::vector<double> events_;
    std::vector<double> exposure_;
};

double log_likelihood(const HazardParams& params, const PeriodData& data,
                      const PiecewiseSpec& spec, Eigen::VectorXd* grad = nullptr);

/// Baseline cells with exposure but no events have their MLE on the boundary
/// (rate 0). `error` refuses to fit; `boundary` fixes the log-rate at
/// kBoundaryLogRate and reports the cell.
enum class ZeroEventCells { error, boundary };
inline constexpr double kBoundaryLogRate = -30.0;

struct FitOptions {
    ZeroEventCells zero_event_cells = ZeroEventCells::error;
    int max_iterations = 500;
    double gradient_tolerance = 1e-6;  // infinity norm of the per-spell mean score
    double function_tolerance = 1e-9;  // relative objective change
    int newton_polish_steps = 3;       // Newton refinements after the quasi-Newton phase
    bool compute_covariance = true;
};

struct FitResult {
    PiecewiseSpec spec;
    HazardParams params;
    std::vector<std::string> covariate_names;
    std::vector<std::string> parameter_names;
    Eigen::MatrixXd covariance;   // zero rows/columns for fixed parameters
    std::vector<int> fixed;       // parameter indices not estimated
    std::vector<int> boundary;    // subset of `fixed`: zero-event baseline cells
    double log_likelihood = 0.0;
    int iterations = 0;
    double gradient_norm = 0.0;   // infinity norm of the total score
    std::string termination;
    std::size_t spells = 0;
};

/// Maximum-likelihood fit. Throws FitError listing baseline cells without
/// events (unless the boundary policy is chosen), on non-convergence (with the best iterate), or on a singular
/// information matrix (naming the parameters in its null direction).
FitResult fit(const PeriodData& data, const PiecewiseSpec& spec, const FitOptions& opts = {});

/// Observed information (negative Hessian of the log-likelihood) by central
/// differences of the analytic gradient, symmetrized. Only the `free` indices
/// are perturbed; the result is over those indices.
Eigen::MatrixXd observed_information(const LogLikelihood& ll, const Eigen::VectorXd& theta,
                                     const std::vector<int>& free);

// ---------------------------------------------------------------------------
// Predictions

/// Integrated exit hazard over (t1, t2] for linear index xb (= x' beta^T),
/// treatment period s (0 = never). Throws DataError outside [0, horizon].
double exit_cumulative_hazard(const HazardParams& p, const PiecewiseSpec& spec, double xb,
                              int z, int s, double t1, double t2);
/// Baseline part (xb = 0) of the above; the full value is this times exp(xb).
double exit_baseline_integral(const HazardParams& p, const PiecewiseSpec& spec, int z, int s,
                              double t1, double t2);
/// Baseline integrated treatment hazard over (0, t].
double treat_baseline_integral(const HazardParams& p, const PiecewiseSpec& spec, int z, double t);
/// Treatment baseline rate in period s, i.e. on (s-1, s].
double treat_baseline_rate(const HazardParams& p, const PiecewiseSpec& spec, int z, int s);

double linear_index_exit(const HazardParams& p, const std::vector<double>& x);
double linear_index_treat(const HazardParams& p, const std::vector<double>& x);

/// exp(-integral of theta^T over (t1, t2]).
double predict_survival(const HazardParams& p, const PiecewiseSpec& spec,
                        const std::vector<double>& x, int z, int s, double t1, double t2);
/// theta^S_s exp(-integral of theta^S over (0, s]).
double predict_treatment_density(const HazardParams& p, const PiecewiseSpec& spec,
                                 const std::vector<double>& x, int z, int s);
/// Probability of treatment within period s absent exit: exp(-L(s-1)) - exp(-L(s)).
double predict_treatment_mass(const HazardParams& p, const PiecewiseSpec& spec,
                              const std::vector<double>& x, int z, int s);

}  // namespace durdecomp
