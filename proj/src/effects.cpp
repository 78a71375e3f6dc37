#include "durdecomp/effects.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "durdecomp/error.hpp"
#include "durdecomp/kernels.hpp"

namespace durdecomp {

std::vector<double> WeightVector::period_mass() const {
    std::vector<double> m;
    m.reserve(w.size());
    for (const auto& col : w) m.push_back(kernels::sum(col));
    return m;
}

std::vector<double> WeightVector::per_subject() const {
    if (w.empty()) return {};
    std::vector<double> out(w.front().size(), 0.0);
    for (const auto& col : w) kernels::axpy(1.0, col, out);
    return out;
}

double WeightVector::total() const {
    double t = 0.0;
    for (double m : period_mass()) t += m;
    return t;
}

namespace {

std::vector<double> scales(const HazardParams& p, const PeriodData& data, bool exit) {
    std::vector<double> eta(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
        eta[i] = exit ? linear_index_exit(p, data.spells[i].covariates)
                      : linear_index_treat(p, data.spells[i].covariates);
    std::vector<double> r(eta.size());
    kernels::exp(eta, r);
    return r;
}

// Unnormalized treatment sub-densities theta_s q_i exp(-L(s) q_i).
std::vector<double> density_column(const HazardParams& p, const PiecewiseSpec& spec,
                                   const std::vector<double>& q, int regime, int s) {
    std::vector<double> col(q.size());
    kernels::exp_neg_scaled(q, treat_baseline_integral(p, spec, regime, s), col);
    kernels::mul(col, q, col);
    const double rate = treat_baseline_rate(p, spec, regime, s);
    for (double& v : col) v *= rate;
    return col;
}

WeightVector build_weights(const HazardParams& p, const PiecewiseSpec& spec,
                           const PeriodData& data, int first, int last, int regime,
                           WeightMode mode) {
    if (data.spells.empty()) throw DataError("no spells to weight");
    if (regime != 0 && regime != 1) throw ConfigError("weight_regime", "must be 0 or 1");
    if (first < 1) throw ConfigError("s", "treatment period must be at least 1");
    const auto q = scales(p, data, false);
    WeightVector wv;
    wv.mode = mode;
    wv.regime = regime;
    double total = 0.0;
    for (int s = first; s <= last; ++s) {
        wv.periods.push_back(s);
        wv.w.push_back(density_column(p, spec, q, regime, s));
        total += kernels::sum(wv.w.back());
    }
    if (!(total > 0.0) || !std::isfinite(total))
        throw FitError("treatment sub-density is zero for every spell; weights undefined");
    for (auto& col : wv.w)
        for (double& v : col) v /= total;
    return wv;
}

struct EffectPieces {
    std::vector<double> effects;  // beta0, beta_z, beta_s_bar, beta_zs_bar, alpha_z
    std::vector<int> s;
    std::vector<double> beta_s, beta_zs, mass;
};

EffectPieces effect_pieces(const HazardParams& p, const PiecewiseSpec& spec,
                           const PeriodData& data, int s_bar, int tau, const DecomposeOptions& o) {
    if (s_bar < 1 || tau < s_bar) throw ConfigError("s_bar", "decomposition requires tau >= s_bar >= 1");
    if (tau > spec.horizon * (1.0 + 1e-12))
        throw DataError("tau " + std::to_string(tau) + " beyond model coverage " +
                        std::to_string(spec.horizon));
    const auto wv = build_weights(p, spec, data, 1, s_bar, o.weight_regime, WeightMode::interval);
    const auto W = wv.per_subject();
    const auto mass = wv.period_mass();
    const auto r = scales(p, data, true);
    const auto q = scales(p, data, false);

    auto avg = [&](const std::vector<double>& w, int z, int s) {
        return kernels::survival_sum(w, r, exit_baseline_integral(p, spec, z, s, 0.0, tau));
    };
    EffectPieces e;
    const double n0 = avg(W, 0, 0);
    const double n1 = avg(W, 1, 0);
    double bs_bar = 0.0, bzs_bar = 0.0;
    for (std::size_t k = 0; k < wv.periods.size(); ++k) {
        const int s = wv.periods[k];
        const auto& w = wv.w[k];
        const double m = mass[k];
        e.s.push_back(s);
        e.mass.push_back(m);
        if (!(m > 0.0)) {
            e.beta_s.push_back(0.0);
            e.beta_zs.push_back(0.0);
            continue;
        }
        const double d0 = avg(w, 0, s) - avg(w, 0, 0);
        const double d1 = avg(w, 1, s) - avg(w, 1, 0);
        e.beta_s.push_back(d0 / m);
        e.beta_zs.push_back((d1 - d0) / m);
        bs_bar += d0;
        bzs_bar += d1 - d0;
    }
    const double f0 = kernels::survival_sum(W, q, treat_baseline_integral(p, spec, 0, s_bar));
    const double f1 = kernels::survival_sum(W, q, treat_baseline_integral(p, spec, 1, s_bar));
    // f_z = sum W_i Pr(S^z > s_bar | x_i); the cumulative treatment probability is 1 - f_z
    const double alpha = o.alpha == AlphaContrast::zero_minus_one ? f1 - f0 : f0 - f1;
    e.effects = {n0, n1 - n0, bs_bar, bzs_bar, alpha};
    return e;
}

}  // namespace

WeightVector compute_weights(const HazardParams& p, const PiecewiseSpec& spec,
                             const PeriodData& data, int s, int regime) {
    return build_weights(p, spec, data, s, s, regime, WeightMode::single);
}

WeightVector compute_weights_interval(const HazardParams& p, const PiecewiseSpec& spec,
                                      const PeriodData& data, int s_bar, int regime) {
    return build_weights(p, spec, data, 1, s_bar, regime, WeightMode::interval);
}

double normal_p_value(double estimate, double se) {
    if (se > 0.0) return std::erfc(std::abs(estimate / se) / std::sqrt(2.0));
    return estimate == 0.0 ? 1.0 : 0.0;
}

SampleCounts sample_counts(const PeriodData& data) {
    SampleCounts c;
    for (const auto& sp : data.spells) (sp.treated() ? c.treated : c.untreated)[sp.regime] += 1;
    return c;
}

std::vector<double> decomposition_effects(const HazardParams& p, const PiecewiseSpec& spec,
                                          const PeriodData& data, int s_bar, int tau,
                                          const DecomposeOptions& opts) {
    return effect_pieces(p, spec, data, s_bar, tau, opts).effects;
}

DecompositionResult decompose(const FitResult& fit, const PeriodData& data, int s_bar, int tau,
                              const DecomposeOptions& opts) {
    const auto e = effect_pieces(fit.params, fit.spec, data, s_bar, tau, opts);
    DecompositionResult r;
    r.s_bar = s_bar;
    r.tau = tau;
    r.weight_regime = opts.weight_regime;
    r.alpha_contrast = opts.alpha;
    r.s = e.s;
    r.beta_s = e.beta_s;
    r.beta_zs = e.beta_zs;
    r.weights = e.mass;
    r.counts = sample_counts(data);
    std::vector<Inference> inf(5);
    if (opts.standard_errors) {
        inf = delta_se(fit, [&](const HazardParams& hp) {
            return decomposition_effects(hp, fit.spec, data, s_bar, tau, opts);
        });
    }
    for (std::size_t k = 0; k < 5; ++k) {
        inf[k].estimate = e.effects[k];
        if (!opts.standard_errors) inf[k].se = std::nan("");
        inf[k].p_value = opts.standard_errors ? normal_p_value(inf[k].estimate, inf[k].se) : std::nan("");
    }
    r.beta0 = inf[0];
    r.beta_z = inf[1];
    r.beta_s_bar = inf[2];
    r.beta_zs_bar = inf[3];
    r.alpha_z = inf[4];
    return r;
}

std::vector<Inference> delta_se(const FitResult& fit, const EffectVectorFunctional& f) {
    const auto base = f(fit.params);
    const std::size_t m = base.size();
    const Eigen::Index P = fit.params.theta.size();
    if (fit.covariance.rows() != P || fit.covariance.cols() != P)
        throw FitError("fit has no covariance matrix; delta method unavailable");
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), P);
    std::vector<bool> fixed(static_cast<std::size_t>(P), false);
    for (int j : fit.fixed) fixed[j] = true;
    HazardParams hp = fit.params;
    for (Eigen::Index j = 0; j < P; ++j) {
        if (fixed[j]) continue;
        const double t = fit.params.theta[j];
        const double h = std::max(1e-6, 1e-6 * std::abs(t));
        hp.theta[j] = t + h;
        const auto up = f(hp);
        hp.theta[j] = t - h;
        const auto dn = f(hp);
        hp.theta[j] = t;
        for (std::size_t k = 0; k < m; ++k) {
            const double g = (up[k] - dn[k]) / (2.0 * h);
            if (!std::isfinite(g))
                throw Error("non-finite delta-method gradient for effect " + std::to_string(k) +
                            " at parameter " + std::to_string(j));
            G(static_cast<Eigen::Index>(k), j) = g;
        }
    }
    const Eigen::MatrixXd V = G * fit.covariance * G.transpose();
    std::vector<Inference> out(m);
    for (std::size_t k = 0; k < m; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        out[k].estimate = base[k];
        out[k].se = std::sqrt(std::max(0.0, V(kk, kk)));
        out[k].p_value = normal_p_value(base[k], out[k].se);
    }
    return out;
}

Inference delta_se(const FitResult& fit, const EffectFunctional& f) {
    return delta_se(fit, EffectVectorFunctional([&](const HazardParams& p) {
                        return std::vector<double>{f(p)};
                    })).front();
}

// ---------------------------------------------------------------------------

ModelProducts::ModelProducts(HazardParams params, PiecewiseSpec spec, const PeriodData& data,
                             std::vector<double> weights)
    : params_(std::move(params)), spec_(std::move(spec)), weights_(std::move(weights)) {
    if (data.spells.empty()) throw DataError("no spells for model products");
    if (weights_.empty()) weights_.assign(data.size(), 1.0 / static_cast<double>(data.size()));
    if (weights_.size() != data.size()) throw DataError("weight vector length mismatch");
    exit_scale_ = scales(params_, data, true);
}

int ModelProducts::horizon() const { return static_cast<int>(std::floor(spec_.horizon + 1e-9)); }

double ModelProducts::average_survival(int z, int s, int to) const {
    if (to <= 0) return kernels::sum(weights_);
    return kernels::survival_sum(weights_, exit_scale_,
                                 exit_baseline_integral(params_, spec_, z, s, 0.0, to));
}

double ModelProducts::untreated(int z, int from, int to) const {
    from = std::max(from, 1);
    if (from > to) return 1.0;
    const double den = average_survival(z, 0, from - 1);
    return den > 0.0 ? average_survival(z, 0, to) / den : 0.0;
}

double ModelProducts::treated(int z, int s, int from, int to) const {
    from = std::max({from, s, 1});
    if (from > to) return 1.0;
    const double den = average_survival(z, s, from - 1);
    return den > 0.0 ? average_survival(z, s, to) / den : 0.0;
}

SubstrataEffects substrata_effects(const SurvivalProducts& src, int s, int tau, double cs_floor) {
    SubstrataEffects e;
    e.s = s;
    e.tau = tau;
    e.cs_floor = cs_floor;
    e.probabilities = substrata_probabilities(src, s, tau);
    e.sprime = match_sprime(src, s, tau);
    const int hi = e.probabilities.higher_regime;
    const int lo = 1 - hi;

    e.beta0_as = src.untreated(lo, s, tau);
    const double hi_part = e.sprime.beyond_tau ? 1.0 : src.untreated(hi, e.sprime.period, tau);
    e.beta_z_as = hi_part - e.beta0_as;
    e.beta_s_as = src.treated(lo, s, s, tau) - e.beta0_as;

    const double d_lo = src.treated_path(lo, s, tau) - src.untreated(lo, 1, tau);
    const double d_hi = src.treated_path(hi, s, tau) - src.untreated(hi, 1, tau);
    e.beta_zs = d_hi - d_lo;
    const double pcs = e.probabilities.complier;
    e.complier_defined = pcs > 0.0;
    e.beta_zs_cs = e.complier_defined ? e.beta_zs / pcs : std::nan("");
    e.unstable = pcs < cs_floor;
    return e;
}

// ---------------------------------------------------------------------------

namespace {

struct Row {
    std::string label;
    const Inference* v;
    bool pct;
};

std::vector<Row> effect_rows(const DecompositionResult& r) {
    return {{"beta0", &r.beta0, false},
            {"beta_z", &r.beta_z, true},
            {"beta_(0,s_bar]", &r.beta_s_bar, true},
            {"beta_z(0,s_bar]", &r.beta_zs_bar, true},
            {"alpha_z", &r.alpha_z, false}};
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

}  // namespace

std::string format_report_text(const DecompositionResult& r, const ReportOptions& opts) {
    std::ostringstream o;
    o << "Causal effect decomposition (s_bar = " << r.s_bar << ", tau = " << r.tau
      << ", weights: regime " << r.weight_regime << ", alpha_z: "
      << (r.alpha_contrast == AlphaContrast::zero_minus_one ? "z=0 minus z=1" : "z=1 minus z=0")
      << ")\n";
    const double base = 1.0 - r.beta0.estimate;
    for (const auto& row : effect_rows(r)) {
        char line[160];
        std::snprintf(line, sizeof line, "%-18s %9.4f  (%.4f)  [%.4f]", row.label.c_str(),
                      row.v->estimate, row.v->se, row.v->p_value);
        o << line;
        if (opts.percent_of_base && row.pct && base != 0.0)
            o << "  " << fmt("%+.1f%%", 100.0 * row.v->estimate / base) << " of base";
        o << '\n';
    }
    const auto& c = r.counts;
    o << "Observations\n";
    o << fmt("  regime 0, untreated %8.0f\n", static_cast<double>(c.untreated[0]));
    o << fmt("  regime 0, treated   %8.0f\n", static_cast<double>(c.treated[0]));
    o << fmt("  regime 1, untreated %8.0f\n", static_cast<double>(c.untreated[1]));
    o << fmt("  regime 1, treated   %8.0f\n", static_cast<double>(c.treated[1]));
    o << fmt("  total               %8.0f\n",
             static_cast<double>(c.untreated[0] + c.treated[0] + c.untreated[1] + c.treated[1]));
    return o.str();
}

std::string format_report_csv(const DecompositionResult& r, const ReportOptions& opts) {
    std::ostringstream o;
    o.precision(17);
    o << "row,estimate,se,p_value";
    if (opts.percent_of_base) o << ",pct_of_base";
    o << '\n';
    const double base = 1.0 - r.beta0.estimate;
    for (const auto& row : effect_rows(r)) {
        if (row.label.find(',') != std::string::npos) o << '"' << row.label << '"';
        else o << row.label;
        o << ',' << row.v->estimate << ',' << row.v->se << ',' << row.v->p_value;
        if (opts.percent_of_base) {
            o << ',';
            if (row.pct && base != 0.0) o << 100.0 * row.v->estimate / base;
        }
        o << '\n';
    }
    const char* tail = opts.percent_of_base ? ",,," : ",,";
    const auto& c = r.counts;
    o << "n_z0_untreated," << c.untreated[0] << tail << '\n';
    o << "n_z0_treated," << c.treated[0] << tail << '\n';
    o << "n_z1_untreated," << c.untreated[1] << tail << '\n';
    o << "n_z1_treated," << c.treated[1] << tail << '\n';
    return o.str();
}

}  // namespace durdecomp
