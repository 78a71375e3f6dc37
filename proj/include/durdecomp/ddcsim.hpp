#pragma once
// Dynamic discrete choice job-search style model used as a data-generating
// process: agents wait for offers, may receive a permanent treatment that
// shifts the offer distribution, and exit on accepting an offer above their
// reservation utility.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "durdecomp/spells.hpp"

namespace durdecomp {

enum class ExpectationMode { analytic, monte_carlo };

struct DdcConfig {
    // parameter table (the mu/sigma entries are recorded but the per-cell
    // equations below are what drive the simulation)
    double mu_w = 13.762, sigma_w = 5.497;
    double mu_c = 0.893, sigma_c = 0.257;
    double mu_lambda = 0.092, sigma_lambda = 0.031;
    double rho = 0.995;
    double sigma_xi = 3.0;
    double beta_w_a = 4.0, beta_w_s = 5.497;
    double beta_c_a = 0.2, beta_c_e = 0.1;
    double beta_lambda_a = 0.5 / 21.0, beta_lambda_e = 0.1 / 21.0;
    double pi[2] = {0.01, 0.03};

    /// Added to the offer mean once treated.
    double treatment_shift = 5.497;

    int n = 5000;
    int horizon = 5000;
    int a_min = 1, a_max = 6;
    int e_min = 1, e_max = 3;
    int admin_censor = 60;            // 0 disables
    double random_censor_share = 0.063;

    ExpectationMode mode = ExpectationMode::analytic;
    int mc_draws = 1000;
    double tolerance = 1e-10;
    int max_iterations = 10000;
    std::uint64_t seed = 20240601;

    /// Throws ConfigError naming the offending field.
    void validate() const;

    // per-cell primitives
    double flow_utility(int a) const { return 0.75 * beta_w_a * a; }
    double cost(int a, int e) const { return beta_c_a * a + beta_c_e * e; }
    double offer_mean(int a, bool treated) const {
        return beta_w_a * a + (treated ? treatment_shift : 0.0);
    }
    double poisson_mean(int a, int e) const { return beta_lambda_a * a + beta_lambda_e * e; }
    /// Probability of at least one offer in a period.
    double arrival_probability(int a, int e) const;
};

struct SolveDiagnostics {
    int iterations = 0;
    double last_step = 0.0;
    double mc_se = 0.0;  // Monte-Carlo standard error of the fixed point (monte_carlo mode)
};

/// Expected (W - w)^+ for W ~ N(mean, sd^2), closed form.
double gaussian_mean_excess(double w, double mean, double sd);

/// Post-treatment reservation utility for cell (a, e). Throws ConvergenceError.
double solve_reservation_post(const DdcConfig& c, int a, int e, SolveDiagnostics* diag = nullptr);
/// Pre-treatment reservation utility with treatment probability pi and the
/// post-treatment value w_tr.
double solve_reservation_pre(const DdcConfig& c, int a, int e, double pi, double w_tr,
                             SolveDiagnostics* diag = nullptr);
double solve_reservation_pre(const DdcConfig& c, int a, int e, int z,
                             SolveDiagnostics* diag = nullptr);

struct ReservationCell {
    int a = 0, e = 0;
    double w_post = 0.0;
    double w_pre[2] = {0.0, 0.0};
    SolveDiagnostics post_diag;
    SolveDiagnostics pre_diag[2];
};

struct ReservationTable {
    int a_min = 1, a_max = 0, e_min = 1, e_max = 0;
    std::vector<ReservationCell> cells;  // a-major

    const ReservationCell& at(int a, int e) const;
};

ReservationTable solve_reservations(const DdcConfig& c);

struct SimAgent {
    int a = 0, e = 0, z = 0;
    std::optional<int> treat;   // period of treatment
    std::optional<int> exit;    // period of exit
    std::optional<int> censor;  // period of censoring
    double accepted_offer = 0.0;
};

struct SimPanel {
    std::vector<SimAgent> agents;
    int admin_censored = 0;
    int random_censored = 0;
    int never_exited = 0;  // still waiting at the simulation horizon
};

/// Throws Error when the table does not cover every drawn (a, e) cell.
SimPanel simulate_panel(const DdcConfig& c, const ReservationTable& table);
SimPanel simulate_panel(const DdcConfig& c);

/// Administrative censoring at c.admin_censor, then a seeded random share of the
/// remaining uncensored spells (terminal period >= 2) censored uniformly in
/// [1, terminal - 1]. Treatment after the censor period is dropped.
SimPanel apply_censoring(SimPanel panel, const DdcConfig& c);

/// Spell export: dummies a_2..a_max for ability; effort is not exported.
Dataset to_dataset(const SimPanel& panel, const DdcConfig& c);

}  // namespace durdecomp
