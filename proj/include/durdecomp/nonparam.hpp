#pragma once
// Nonparametric estimators on the period grid: Kaplan-Meier curves, the
// discrete-time g-computation products behind the effect decomposition, the
// treatment-time distribution, and the always/complier/never-survivor split.

#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "durdecomp/spells.hpp"

namespace durdecomp {

// ---------------------------------------------------------------------------
// Kaplan-Meier

enum class KmEvent { exit, treatment };

struct KmOptions {
    std::optional<int> regime;         // nullopt: pooled
    bool censor_at_treatment = false;  // exit curve only: treatment censors the spell
    KmEvent event = KmEvent::exit;     // treatment curve: exits censor the spell
};

struct SurvivalCurve {
    std::string label;
    std::vector<int> periods;    // 0..horizon
    std::vector<double> values;  // values[0] == 1
    std::vector<long> at_risk;
    std::vector<long> events;
};

/// Product-limit estimate over the period grid. Throws DataError when the
/// selected stratum is empty.
SurvivalCurve kaplan_meier(const PeriodData& data, const KmOptions& opts = {});

// ---------------------------------------------------------------------------
// Conditional survival products

/// Source of the period-wise survival products that every effect is built from:
///   untreated(z, a, b) = prod_{t=a}^{b} Pr(T > t | S > t, T >= t, Z = z)
///   treated(z, s, a, b) = prod_{t=a}^{b} Pr(T > t | S = s, T >= t, Z = z)
/// Empty ranges (a > b) are 1; period 0 contributes a factor of 1.
class SurvivalProducts {
public:
    virtual ~SurvivalProducts() = default;
    virtual int horizon() const = 0;
    virtual double untreated(int z, int from, int to) const = 0;
    virtual double treated(int z, int s, int from, int to) const = 0;

    /// prod over the whole path (0, tau] for treatment at s: untreated before s, treated from s.
    double treated_path(int z, int s, int tau) const {
        return untreated(z, 1, s - 1) * treated(z, s, s, tau);
    }
};

enum class EmptyCellPolicy { error, carry_forward };

struct EmptyCell {
    int period;
    int regime;
    std::string stratum;  // "untreated" or "treated@s"
};

/// Empirical products from risk-set counts. A cell with nobody at risk is
/// harmless once the running product has reached 0; otherwise it is an
/// overlap violation: an error by default, or a factor of 1 under
/// carry_forward, recorded in `carried()`.
class GcompTables final : public SurvivalProducts {
public:
    explicit GcompTables(const PeriodData& data, EmptyCellPolicy policy = EmptyCellPolicy::error);
    explicit GcompTables(RiskSetTable table, EmptyCellPolicy policy = EmptyCellPolicy::error);

    int horizon() const override { return table_.horizon; }
    double untreated(int z, int from, int to) const override;
    double treated(int z, int s, int from, int to) const override;

    /// Pr(S^z = s) = h(s) * prod_{t<s} (1 - h(t)), h the treatment hazard among S >= t, T >= t.
    double treatment_mass(int z, int s) const;
    /// prod_{t=1}^{s} (1 - h(t)): mass not yet treated after period s. h is 0 in
    /// periods nobody enters untreated.
    double untreated_mass(int z, int s) const;
    bool has_treated_cohort(int z, int s) const;

    const RiskSetTable& risk_sets() const noexcept { return table_; }
    EmptyCellPolicy policy() const noexcept { return policy_; }
    /// Empty cells substituted by carry-forward so far (deduplicated).
    std::vector<EmptyCell> carried() const;

private:
    double factor_product(int z, const std::vector<long>& at_risk, const std::vector<long>& events,
                          int from, int to, const std::string& stratum) const;

    RiskSetTable table_;
    EmptyCellPolicy policy_;
    mutable std::mutex carried_mu_;
    mutable std::vector<EmptyCell> carried_;
};

// ---------------------------------------------------------------------------
// Decomposition

enum class AlphaContrast { zero_minus_one, one_minus_zero };

struct GcompOptions {
    EmptyCellPolicy empty_cells = EmptyCellPolicy::error;
    int weight_regime = 1;  // treatment-time distribution used to average over (0, s_bar]
    AlphaContrast alpha = AlphaContrast::zero_minus_one;
};

struct GcompEstimates {
    int s_bar = 0;
    int tau = 0;
    double beta0 = 0.0;
    double beta_z = 0.0;
    bool treatment_defined = true;  // false when no treated cohort exists at all
    std::vector<int> s;             // treatment periods with a defined effect
    std::vector<double> beta_s;
    std::vector<double> beta_zs;
    std::vector<double> weights;    // normalized Pr(S^w = s) over `s`
    double beta_s_bar = 0.0;        // sum_s weights[s] * beta_s
    double beta_zs_bar = 0.0;
    double alpha_z = 0.0;           // contrast of Pr(S^z <= s_bar)
    std::vector<double> treatment_mass[2];  // Pr(S^z = s), s = 0..horizon (index 0 is 0)
    double untreated_residual[2] = {0.0, 0.0};  // Pr(S^z > horizon or exit first)
    std::vector<EmptyCell> carried;
};

GcompEstimates gcomp_decomposition(const PeriodData& data, int s_bar, int tau,
                                   const GcompOptions& opts = {});
GcompEstimates gcomp_decomposition(const GcompTables& tables, int s_bar, int tau,
                                   const GcompOptions& opts = {});

// ---------------------------------------------------------------------------
// Substrata

struct SubstrataProbabilities {
    int s = 1;
    double always = 1.0;    // Pr(as)
    double complier = 0.0;  // Pr(cs)
    double never = 0.0;     // Pr(ns)
    /// Regime whose untreated survival to s is higher (plays Z=1 in the as/cs labels).
    int higher_regime = 1;
};

SubstrataProbabilities substrata_probabilities(const SurvivalProducts& src, int s, int tau);

struct SPrime {
    int period = 0;        // matched period in the higher-survival regime
    bool beyond_tau = false;
};

/// Period s' >= s in the higher-survival regime whose untreated survival
/// Pr(T >= s') is nearest to the other regime's Pr(T >= s); ties go to the
/// smaller period. `beyond_tau` when that curve never falls to the target by tau.
SPrime match_sprime(const SurvivalProducts& src, int s, int tau);

}  // namespace durdecomp
