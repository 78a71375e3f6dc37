#include "durdecomp/ddcsim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "durdecomp/error.hpp"

namespace durdecomp {

void DdcConfig::validate() const {
    auto need = [](bool ok, const char* field, const char* msg) {
        if (!ok) throw ConfigError(field, msg);
    };
    need(rho > 0.0 && rho < 1.0, "rho", "must lie in (0, 1)");
    need(sigma_xi >= 0.0, "sigma_xi", "must be non-negative");
    need(sigma_w >= 0.0, "sigma_w", "must be non-negative");
    need(sigma_c >= 0.0, "sigma_c", "must be non-negative");
    need(sigma_lambda >= 0.0, "sigma_lambda", "must be non-negative");
    need(pi[0] >= 0.0 && pi[0] < 1.0, "pi_z0", "must lie in [0, 1)");
    need(pi[1] >= 0.0 && pi[1] < 1.0, "pi_z1", "must lie in [0, 1)");
    need(n >= 1, "n", "must be at least 1");
    need(horizon >= 1, "horizon", "must be at least 1");
    need(a_min <= a_max, "a_range", "must be non-empty");
    need(e_min <= e_max, "e_range", "must be non-empty");
    need(admin_censor >= 0, "admin_censor", "must be non-negative");
    need(random_censor_share >= 0.0 && random_censor_share <= 1.0, "random_censor_share",
         "must lie in [0, 1]");
    need(mc_draws >= 1, "mc_draws", "must be at least 1");
    need(tolerance > 0.0, "tolerance", "must be positive");
    need(max_iterations >= 1, "max_iterations", "must be at least 1");
    for (int a = a_min; a <= a_max; ++a)
        for (int e = e_min; e <= e_max; ++e)
            need(poisson_mean(a, e) >= 0.0, "beta_lambda", "offer arrival mean must be non-negative");
}

double DdcConfig::arrival_probability(int a, int e) const {
    return 1.0 - std::exp(-poisson_mean(a, e));
}

double gaussian_mean_excess(double w, double mean, double sd) {
    if (!(sd > 0.0)) return std::max(mean - w, 0.0);
    const double zeta = (w - mean) / sd;
    const double phi = std::exp(-0.5 * zeta * zeta) / std::sqrt(2.0 * M_PI);
    const double tail = 0.5 * std::erfc(zeta / std::sqrt(2.0));
    return sd * (phi - zeta * tail);
}

namespace {

// Expectation of (W - w)^+ and Pr(W > w) under the configured mode.
class OfferExpectation {
public:
    OfferExpectation(const DdcConfig& c, double mean, int a, int e, int tag)
        : mode_(c.mode), mean_(mean), sd_(c.sigma_xi) {
        if (mode_ == ExpectationMode::monte_carlo) {
            std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32),
                              static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(e),
                              static_cast<std::uint32_t>(tag), 0x5eedu};
            std::mt19937_64 rng(seq);
            std::normal_distribution<double> nd(0.0, 1.0);
            draws_.resize(static_cast<std::size_t>(c.mc_draws));
            for (double& d : draws_) d = mean + sd_ * nd(rng);
        }
    }

    double excess(double w) const {
        if (mode_ == ExpectationMode::analytic) return gaussian_mean_excess(w, mean_, sd_);
        double s = 0.0;
        for (double d : draws_) s += std::max(d - w, 0.0);
        return s / static_cast<double>(draws_.size());
    }

    // sd of (W - w)^+ across draws and the share above w, for the error estimate
    std::pair<double, double> spread(double w) const {
        const double m = excess(w);
        double ss = 0.0, above = 0.0;
        for (double d : draws_) {
            const double x = std::max(d - w, 0.0);
            ss += (x - m) * (x - m);
            above += d > w ? 1.0 : 0.0;
        }
        const double n = static_cast<double>(draws_.size());
        return {std::sqrt(ss / std::max(1.0, n - 1.0)), above / n};
    }

    std::size_t draws() const { return draws_.size(); }

private:
    ExpectationMode mode_;
    double mean_, sd_;
    std::vector<double> draws_;
};

// Value-function iteration on the reservation utility:
//   w <- (1-rho)(w0-c) + rho lam E(W-w)^+ + rho pi w_tr + rho (1-pi) w
double iterate(const DdcConfig& c, int a, int e, double pi, double w_tr, const OfferExpectation& G,
               SolveDiagnostics* diag) {
    const double flow = c.flow_utility(a) - c.cost(a, e);
    const double lam = c.arrival_probability(a, e);
    double w = flow;
    std::vector<double> trace;
    double step = 0.0;
    for (int it = 1; it <= c.max_iterations; ++it) {
        const double next = (1.0 - c.rho) * flow + c.rho * lam * G.excess(w) + c.rho * pi * w_tr +
                            c.rho * (1.0 - pi) * w;
        step = std::abs(next - w);
        w = next;
        if (!std::isfinite(w)) break;
        if (trace.size() < 64 || it % 100 == 0) trace.push_back(w);
        if (step < c.tolerance) {
            if (diag) {
                diag->iterations = it;
                diag->last_step = step;
                diag->mc_se = 0.0;
                if (G.draws() > 0) {
                    const auto [sd, above] = G.spread(w);
                    const double k = c.rho * lam;
                    const double D = 1.0 - c.rho + c.rho * pi;
                    diag->mc_se = k * sd / std::sqrt(static_cast<double>(G.draws())) / (D + k * above);
                }
            }
            return w;
        }
    }
    throw ConvergenceError("reservation utility for cell (a=" + std::to_string(a) +
                               ", e=" + std::to_string(e) + ") did not converge; last step " +
                               std::to_string(step),
                           trace);
}

}  // namespace

double solve_reservation_post(const DdcConfig& c, int a, int e, SolveDiagnostics* diag) {
    const OfferExpectation G(c, c.offer_mean(a, true), a, e, 1);
    return iterate(c, a, e, 0.0, 0.0, G, diag);
}

double solve_reservation_pre(const DdcConfig& c, int a, int e, double pi, double w_tr,
                             SolveDiagnostics* diag) {
    const OfferExpectation G(c, c.offer_mean(a, false), a, e, 0);
    return iterate(c, a, e, pi, w_tr, G, diag);
}

double solve_reservation_pre(const DdcConfig& c, int a, int e, int z, SolveDiagnostics* diag) {
    if (z != 0 && z != 1) throw ConfigError("z", "must be 0 or 1");
    return solve_reservation_pre(c, a, e, c.pi[z], solve_reservation_post(c, a, e), diag);
}

const ReservationCell& ReservationTable::at(int a, int e) const {
    if (a < a_min || a > a_max || e < e_min || e > e_max)
        throw Error("reservation table has no cell (a=" + std::to_string(a) + ", e=" +
                    std::to_string(e) + ")");
    return cells[static_cast<std::size_t>((a - a_min) * (e_max - e_min + 1) + (e - e_min))];
}

ReservationTable solve_reservations(const DdcConfig& c) {
    c.validate();
    ReservationTable t;
    t.a_min = c.a_min;
    t.a_max = c.a_max;
    t.e_min = c.e_min;
    t.e_max = c.e_max;
    for (int a = c.a_min; a <= c.a_max; ++a)
        for (int e = c.e_min; e <= c.e_max; ++e) {
            ReservationCell cell;
            cell.a = a;
            cell.e = e;
            cell.w_post = solve_reservation_post(c, a, e, &cell.post_diag);
            for (int z = 0; z < 2; ++z)
                cell.w_pre[z] = solve_reservation_pre(c, a, e, c.pi[z], cell.w_post, &cell.pre_diag[z]);
            t.cells.push_back(cell);
        }
    return t;
}

// ---------------------------------------------------------------------------

SimPanel simulate_panel(const DdcConfig& c, const ReservationTable& table) {
    c.validate();
    SimPanel panel;
    panel.agents.resize(static_cast<std::size_t>(c.n));
    for (int i = 0; i < c.n; ++i) {
        std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32),
                          static_cast<std::uint32_t>(i)};
        std::mt19937_64 rng(seq);
        SimAgent& ag = panel.agents[static_cast<std::size_t>(i)];
        ag.a = std::uniform_int_distribution<int>(c.a_min, c.a_max)(rng);
        ag.e = std::uniform_int_distribution<int>(c.e_min, c.e_max)(rng);
        ag.z = i % 2;
        const auto& cell = table.at(ag.a, ag.e);
        const double pi = c.pi[ag.z];
        const double mean = c.poisson_mean(ag.a, ag.e);
        std::bernoulli_distribution treat_draw(pi);
        std::poisson_distribution<int> arrivals(mean > 0.0 ? mean : 1.0);
        std::normal_distribution<double> xi(0.0, 1.0);
        bool treated = false;
        for (int t = 1; t <= c.horizon; ++t) {
            if (!treated && pi > 0.0 && treat_draw(rng)) {
                treated = true;
                ag.treat = t;
            }
            const int k = mean > 0.0 ? arrivals(rng) : 0;
            if (k < 1) continue;
            double best = -INFINITY;
            for (int j = 0; j < k; ++j) best = std::max(best, xi(rng));
            const double w = c.offer_mean(ag.a, treated) + c.sigma_xi * best;
            if (w >= (treated ? cell.w_post : cell.w_pre[ag.z])) {
                ag.exit = t;
                ag.accepted_offer = w;
                break;
            }
        }
        if (!ag.exit) {
            ag.censor = c.horizon;
            ++panel.never_exited;
        }
    }
    return panel;
}

SimPanel simulate_panel(const DdcConfig& c) { return simulate_panel(c, solve_reservations(c)); }

SimPanel apply_censoring(SimPanel panel, const DdcConfig& c) {
    auto terminal = [](const SimAgent& ag) { return ag.exit ? *ag.exit : *ag.censor; };
    auto censor_at = [](SimAgent& ag, int t) {
        ag.exit.reset();
        ag.censor = t;
        ag.accepted_offer = 0.0;
        if (ag.treat && *ag.treat > t) ag.treat.reset();
    };
    panel.admin_censored = 0;
    panel.random_censored = 0;
    std::vector<std::size_t> eligible;
    std::size_t remaining = 0;
    for (std::size_t i = 0; i < panel.agents.size(); ++i) {
        auto& ag = panel.agents[i];
        if (c.admin_censor > 0 && terminal(ag) > c.admin_censor) {
            censor_at(ag, c.admin_censor);
            ++panel.admin_censored;
            continue;
        }
        ++remaining;
        if (ag.exit && *ag.exit >= 2) eligible.push_back(i);
    }
    std::size_t k = static_cast<std::size_t>(std::llround(c.random_censor_share * static_cast<double>(remaining)));
    k = std::min(k, eligible.size());
    std::seed_seq seq{static_cast<std::uint32_t>(c.seed), static_cast<std::uint32_t>(c.seed >> 32), 0xCE45u};
    std::mt19937_64 rng(seq);
    std::shuffle(eligible.begin(), eligible.end(), rng);
    std::sort(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(k));
    for (std::size_t j = 0; j < k; ++j) {
        auto& ag = panel.agents[eligible[j]];
        const int t = std::uniform_int_distribution<int>(1, terminal(ag) - 1)(rng);
        censor_at(ag, t);
        ++panel.random_censored;
    }
    return panel;
}

Dataset to_dataset(const SimPanel& panel, const DdcConfig& c) {
    Dataset d;
    for (int a = c.a_min + 1; a <= c.a_max; ++a) d.covariate_names.push_back("a" + std::to_string(a));
    d.records.reserve(panel.agents.size());
    for (std::size_t i = 0; i < panel.agents.size(); ++i) {
        const auto& ag = panel.agents[i];
        SpellRecord r;
        r.id = std::to_string(i + 1);
        r.regime = ag.z;
        if (ag.treat) r.treat_time = *ag.treat;
        if (ag.exit) r.exit_time = *ag.exit;
        else r.censor_time = ag.censor.value_or(c.horizon);
        for (int a = c.a_min + 1; a <= c.a_max; ++a) r.covariates.push_back(ag.a == a ? 1.0 : 0.0);
        d.records.push_back(std::move(r));
    }
    return d;
}

}  // namespace durdecomp
