#include "durdecomp/nonparam.hpp"

#include <algorithm>
#include <cmath>

#include "durdecomp/error.hpp"

namespace durdecomp {

SurvivalCurve kaplan_meier(const PeriodData& data, const KmOptions& opts) {
    const int H = data.horizon;
    SurvivalCurve c;
    c.label = std::string(opts.event == KmEvent::exit ? "exit" : "treatment") +
              (opts.regime ? "_z" + std::to_string(*opts.regime) : "_pooled") +
              (opts.event == KmEvent::exit && opts.censor_at_treatment ? "_untreated" : "");
    std::vector<long> leave(H + 2, 0);
    std::vector<long> events(H + 2, 0);
    long n = 0;
    for (const auto& sp : data.spells) {
        if (opts.regime && sp.regime != *opts.regime) continue;
        ++n;
        int last = sp.terminal;  // last period in the risk set
        bool event = false;
        if (opts.event == KmEvent::exit) {
            event = sp.exited;
            if (opts.censor_at_treatment && sp.treated()) {
                last = sp.treat - 1;  // treatment precedes exit within its period
                event = false;
            }
        } else {
            event = sp.treated();
            if (sp.treated()) last = sp.treat;
        }
        if (last >= 1) {
            ++leave[last];
            if (event) ++events[last];
        }
    }
    if (n == 0)
        throw DataError("empty stratum for Kaplan-Meier selector '" + c.label + "'");

    c.periods.resize(H + 1);
    c.values.resize(H + 1);
    c.at_risk.resize(H + 1);
    c.events.resize(H + 1);
    double s = 1.0;
    long remaining = n;
    c.periods[0] = 0;
    c.values[0] = 1.0;
    c.at_risk[0] = n;
    for (int t = 1; t <= H; ++t) {
        // spells whose risk set ended before period 1 (treated in period 1, censored at treatment)
        if (t == 1) {
            long pre = n;
            for (int u = 1; u <= H; ++u) pre -= leave[u];
            remaining -= pre;
        }
        c.periods[t] = t;
        c.at_risk[t] = remaining;
        c.events[t] = events[t];
        if (remaining > 0) s *= 1.0 - static_cast<double>(events[t]) / static_cast<double>(remaining);
        c.values[t] = s;
        remaining -= leave[t];
    }
    return c;
}

// ---------------------------------------------------------------------------

GcompTables::GcompTables(const PeriodData& data, EmptyCellPolicy policy)
    : GcompTables(build_risk_sets(data), policy) {}

GcompTables::GcompTables(RiskSetTable table, EmptyCellPolicy policy)
    : table_(std::move(table)), policy_(policy) {}

double GcompTables::factor_product(int z, const std::vector<long>& at_risk,
                                   const std::vector<long>& events, int from, int to,
                                   const std::string& stratum) const {
    double acc = 1.0;
    from = std::max(from, 1);
    if (to > table_.horizon)
        throw DataError("period " + std::to_string(to) + " beyond data horizon " +
                        std::to_string(table_.horizon));
    for (int t = from; t <= to; ++t) {
        const long n = at_risk[t];
        if (n > 0) {
            acc *= 1.0 - static_cast<double>(events[t]) / static_cast<double>(n);
            continue;
        }
        if (acc == 0.0) continue;
        if (policy_ == EmptyCellPolicy::error) throw CellError(t, z, stratum);
        std::lock_guard lock(carried_mu_);
        const bool seen = std::any_of(carried_.begin(), carried_.end(), [&](const EmptyCell& e) {
            return e.period == t && e.regime == z && e.stratum == stratum;
        });
        if (!seen) carried_.push_back({t, z, stratum});
    }
    return acc;
}

double GcompTables::untreated(int z, int from, int to) const {
    const auto& rs = table_.regime[z];
    return factor_product(z, rs.at_risk, rs.exits, from, to, "untreated");
}

bool GcompTables::has_treated_cohort(int z, int s) const {
    const auto& rs = table_.regime[z];
    return s >= 1 && s <= table_.horizon && !rs.treated[s].at_risk.empty();
}

double GcompTables::treated(int z, int s, int from, int to) const {
    if (from > to) return 1.0;
    const auto& rs = table_.regime[z];
    const std::string stratum = "treated@" + std::to_string(s);
    if (!has_treated_cohort(z, s)) {
        if (policy_ == EmptyCellPolicy::error) throw CellError(s, z, stratum);
        std::vector<long> none(table_.horizon + 2, 0);
        return factor_product(z, none, none, std::max(from, s), to, stratum);
    }
    const auto& c = rs.treated[s];
    return factor_product(z, c.at_risk, c.exits, std::max(from, s), to, stratum);
}

double GcompTables::untreated_mass(int z, int s) const {
    // Once nobody is left untreated the treatment hazard is taken as 0.
    const auto& rs = table_.regime[z];
    if (s > table_.horizon)
        throw DataError("period " + std::to_string(s) + " beyond data horizon " +
                        std::to_string(table_.horizon));
    double acc = 1.0;
    for (int t = 1; t <= s; ++t)
        if (rs.entering[t] > 0)
            acc *= 1.0 - static_cast<double>(rs.treatments[t]) / static_cast<double>(rs.entering[t]);
    return acc;
}

double GcompTables::treatment_mass(int z, int s) const {
    if (s < 1 || s > table_.horizon) return 0.0;
    const auto& rs = table_.regime[z];
    const double before = untreated_mass(z, s - 1);
    if (rs.entering[s] == 0) return 0.0;  // nobody left untreated: conditional mass is moot
    return before * static_cast<double>(rs.treatments[s]) / static_cast<double>(rs.entering[s]);
}

std::vector<EmptyCell> GcompTables::carried() const {
    std::lock_guard lock(carried_mu_);
    return carried_;
}

// ---------------------------------------------------------------------------

GcompEstimates gcomp_decomposition(const PeriodData& data, int s_bar, int tau,
                                   const GcompOptions& opts) {
    GcompTables tables(data, opts.empty_cells);
    return gcomp_decomposition(tables, s_bar, tau, opts);
}

GcompEstimates gcomp_decomposition(const GcompTables& tables, int s_bar, int tau,
                                   const GcompOptions& opts) {
    const auto& rs = tables.risk_sets();
    if (s_bar < 1 || tau < s_bar)
        throw DataError("decomposition requires tau >= s_bar >= 1");
    if (tau > rs.horizon)
        throw DataError("tau " + std::to_string(tau) + " beyond data horizon " +
                        std::to_string(rs.horizon));
    if (rs.regime[0].cohort == 0 || rs.regime[1].cohort == 0)
        throw DataError("both regimes required");
    if (opts.weight_regime != 0 && opts.weight_regime != 1)
        throw DataError("weight regime must be 0 or 1");

    GcompEstimates g;
    g.s_bar = s_bar;
    g.tau = tau;
    const double never0 = tables.untreated(0, 1, tau);
    const double never1 = tables.untreated(1, 1, tau);
    g.beta0 = never0;
    g.beta_z = never1 - never0;

    for (int z = 0; z < 2; ++z) {
        g.treatment_mass[z].assign(rs.horizon + 1, 0.0);
        for (int s = 1; s <= rs.horizon; ++s) g.treatment_mass[z][s] = tables.treatment_mass(z, s);
        g.untreated_residual[z] = tables.untreated_mass(z, rs.horizon);
    }
    auto cumulative = [&](int z) {
        double c = 0.0;
        for (int s = 1; s <= s_bar; ++s) c += g.treatment_mass[z][s];
        return c;
    };
    g.alpha_z = opts.alpha == AlphaContrast::zero_minus_one ? cumulative(0) - cumulative(1)
                                                            : cumulative(1) - cumulative(0);

    g.treatment_defined = rs.regime[0].treated_count() > 0 && rs.regime[1].treated_count() > 0;
    if (g.treatment_defined) {
        double wsum = 0.0;
        for (int s = 1; s <= s_bar; ++s) {
            const bool have = tables.has_treated_cohort(0, s) && tables.has_treated_cohort(1, s);
            if (!have && tables.policy() == EmptyCellPolicy::error)
                throw CellError(s, tables.has_treated_cohort(0, s) ? 1 : 0,
                                "treated@" + std::to_string(s));
            if (!have) continue;
            const double t0 = tables.treated_path(0, s, tau);
            const double t1 = tables.treated_path(1, s, tau);
            const double bs = t0 - never0;
            g.s.push_back(s);
            g.beta_s.push_back(bs);
            g.beta_zs.push_back(t1 - never1 - bs);
            const double w = g.treatment_mass[opts.weight_regime][s];
            g.weights.push_back(w);
            wsum += w;
        }
        if (g.s.empty() || !(wsum > 0.0)) {
            g.treatment_defined = false;
        } else {
            for (std::size_t k = 0; k < g.s.size(); ++k) {
                g.weights[k] /= wsum;
                g.beta_s_bar += g.weights[k] * g.beta_s[k];
                g.beta_zs_bar += g.weights[k] * g.beta_zs[k];
            }
        }
    }
    if (!g.treatment_defined) {
        g.s.clear();
        g.beta_s.clear();
        g.beta_zs.clear();
        g.weights.clear();
        g.beta_s_bar = std::nan("");
        g.beta_zs_bar = std::nan("");
    }
    g.carried = tables.carried();
    return g;
}

// ---------------------------------------------------------------------------

SubstrataProbabilities substrata_probabilities(const SurvivalProducts& src, int s, int tau) {
    if (s < 1 || tau < s) throw DataError("substrata require tau >= s >= 1");
    SubstrataProbabilities p;
    p.s = s;
    const double reach0 = src.untreated(0, 1, s - 1);
    const double reach1 = src.untreated(1, 1, s - 1);
    p.higher_regime = reach1 >= reach0 ? 1 : 0;
    p.always = std::min(reach0, reach1);
    p.complier = std::abs(reach1 - reach0);
    p.never = 1.0 - p.always - p.complier;
    return p;
}

SPrime match_sprime(const SurvivalProducts& src, int s, int tau) {
    if (s < 1 || tau < s) throw DataError("s' matching requires tau >= s >= 1");
    const auto p = substrata_probabilities(src, s, tau);
    const int hi = p.higher_regime;
    const int lo = 1 - hi;
    const double target = src.untreated(lo, 1, s - 1);
    SPrime out;
    if (src.untreated(hi, 1, tau - 1) > target) {
        out.period = tau + 1;
        out.beyond_tau = true;
        return out;
    }
    double best = INFINITY;
    double reach = src.untreated(hi, 1, s - 1);
    for (int sp = s; sp <= tau; ++sp) {
        if (sp > s) reach *= src.untreated(hi, sp - 1, sp - 1);
        const double gap = std::abs(reach - target);
        if (gap < best) {
            best = gap;
            out.period = sp;
        }
    }
    return out;
}

}  // namespace durdecomp
