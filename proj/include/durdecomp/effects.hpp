#pragma once
// Model-based causal decomposition: treatment-time weights, weighted survival
// contrasts, delta-method inference, and substrata effects.

#include <functional>
#include <string>
#include <vector>

#include "durdecomp/nonparam.hpp"
#include "durdecomp/phmodel.hpp"

namespace durdecomp {

enum class WeightMode { single, interval };

/// w[k][i]: weight of spell i at treatment period periods[k]. In single mode
/// there is one period and the weights sum to 1 over i; in interval mode they
/// sum to 1 over i and all periods.
struct WeightVector {
    WeightMode mode = WeightMode::single;
    int regime = 1;
    std::vector<int> periods;
    std::vector<std::vector<double>> w;

    /// sum over i of w[k][i]
    std::vector<double> period_mass() const;
    /// W_i = sum over periods of w[k][i]
    std::vector<double> per_subject() const;
    double total() const;
};

/// Weights proportional to the treatment sub-density in `regime` at x_i.
/// Throws FitError when every numerator is zero.
WeightVector compute_weights(const HazardParams& p, const PiecewiseSpec& spec,
                             const PeriodData& data, int s, int regime = 1);
WeightVector compute_weights_interval(const HazardParams& p, const PiecewiseSpec& spec,
                                      const PeriodData& data, int s_bar, int regime = 1);

struct Inference {
    double estimate = 0.0;
    double se = 0.0;
    double p_value = 1.0;
};

/// Two-sided normal p-value for estimate / se (1 when se is 0 and estimate is 0).
double normal_p_value(double estimate, double se);

struct DecomposeOptions {
    int weight_regime = 1;
    AlphaContrast alpha = AlphaContrast::zero_minus_one;
    bool standard_errors = true;
};

struct SampleCounts {
    long untreated[2] = {0, 0};
    long treated[2] = {0, 0};
};

SampleCounts sample_counts(const PeriodData& data);

struct DecompositionResult {
    int s_bar = 0;
    int tau = 0;
    int weight_regime = 1;
    AlphaContrast alpha_contrast = AlphaContrast::zero_minus_one;
    Inference beta0, beta_z, beta_s_bar, beta_zs_bar, alpha_z;
    std::vector<int> s;
    std::vector<double> beta_s;
    std::vector<double> beta_zs;
    std::vector<double> weights;  // period mass of the interval weights
    SampleCounts counts;
};

/// Point estimates only, as a plain function of the parameters (used for the delta method).
/// Order: beta0, beta_z, beta_s_bar, beta_zs_bar, alpha_z.
std::vector<double> decomposition_effects(const HazardParams& p, const PiecewiseSpec& spec,
                                          const PeriodData& data, int s_bar, int tau,
                                          const DecomposeOptions& opts = {});

DecompositionResult decompose(const FitResult& fit, const PeriodData& data, int s_bar, int tau,
                              const DecomposeOptions& opts = {});

using EffectFunctional = std::function<double(const HazardParams&)>;
using EffectVectorFunctional = std::function<std::vector<double>(const HazardParams&)>;

/// SE = sqrt(g' Sigma g), g by central differences with step max(1e-6, 1e-6 |theta_j|).
/// Fixed parameters (zero covariance) are not perturbed. Throws Error on a non-finite gradient.
Inference delta_se(const FitResult& fit, const EffectFunctional& f);
std::vector<Inference> delta_se(const FitResult& fit, const EffectVectorFunctional& f);

// ---------------------------------------------------------------------------
// Substrata

/// Model-implied population survival products: weighted averages of subject
/// predictions, turned into period products by ratios so that they telescope.
class ModelProducts final : public SurvivalProducts {
public:
    /// Uniform weights over the spells when `weights` is empty.
    ModelProducts(HazardParams params, PiecewiseSpec spec, const PeriodData& data,
                  std::vector<double> weights = {});

    int horizon() const override;
    double untreated(int z, int from, int to) const override;
    double treated(int z, int s, int from, int to) const override;

private:
    double average_survival(int z, int s, int to) const;

    HazardParams params_;
    PiecewiseSpec spec_;
    std::vector<double> weights_;
    std::vector<double> exit_scale_;  // exp(x_i' beta^T)
};

struct SubstrataEffects {
    int s = 1;
    int tau = 1;
    SubstrataProbabilities probabilities;
    SPrime sprime;
    double beta0_as = 0.0;
    double beta_z_as = 0.0;
    double beta_s_as = 0.0;
    double beta_zs = 0.0;       // unconditional per-s interaction
    double beta_zs_cs = 0.0;    // beta_zs / Pr(cs); NaN when Pr(cs) = 0
    bool complier_defined = true;
    bool unstable = false;      // Pr(cs) below the floor
    double cs_floor = 1e-3;
};

/// Conditional effects at treatment period s evaluated at tau. The lower
/// untreated-survival regime plays Z = 0 (see SubstrataProbabilities::higher_regime).
SubstrataEffects substrata_effects(const SurvivalProducts& src, int s, int tau,
                                   double cs_floor = 1e-3);

// ---------------------------------------------------------------------------
// Reports

struct ReportOptions {
    bool percent_of_base = false;  // add beta / (1 - beta0) column
};

/// Effects table: estimate, (SE), [p-value], then the sample-size block.
std::string format_report_text(const DecompositionResult& r, const ReportOptions& opts = {});
std::string format_report_csv(const DecompositionResult& r, const ReportOptions& opts = {});

}  // namespace durdecomp
