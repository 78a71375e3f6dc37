#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "durdecomp/ddcsim.hpp"
#include "durdecomp/error.hpp"

using namespace durdecomp;

namespace {

double flow(const DdcConfig& c, int a, int e) { return c.flow_utility(a) - c.cost(a, e); }

}  // namespace

TEST_CASE("gaussian mean excess") {
    CHECK(gaussian_mean_excess(0.0, 0.0, 1.0) == doctest::Approx(1.0 / std::sqrt(2.0 * M_PI)));
    CHECK(gaussian_mean_excess(-50.0, 2.0, 1.0) == doctest::Approx(52.0));
    CHECK(gaussian_mean_excess(50.0, 2.0, 1.0) < 1e-300);
    CHECK(gaussian_mean_excess(1.0, 3.0, 0.0) == 2.0);
    // E(W - w)^+ by quadrature
    double q = 0.0;
    const double m = 4.0, s = 3.0, w = 5.5, h = 1e-3;
    for (double x = w + h / 2; x < m + 12 * s; x += h)
        q += (x - w) * std::exp(-0.5 * ((x - m) / s) * ((x - m) / s)) / (s * std::sqrt(2 * M_PI)) * h;
    CHECK(gaussian_mean_excess(w, m, s) == doctest::Approx(q).epsilon(1e-7));
}

TEST_CASE("no offers: reservation equals the flow payoff") {
    DdcConfig c;
    c.beta_lambda_a = c.beta_lambda_e = 0.0;
    for (int a = 1; a <= 6; ++a)
        for (int e = 1; e <= 3; ++e) {
            CHECK(solve_reservation_post(c, a, e) == doctest::Approx(flow(c, a, e)).epsilon(1e-8));
            CHECK(solve_reservation_pre(c, a, e, 0.0, 123.0) == doctest::Approx(flow(c, a, e)).epsilon(1e-8));
        }
}

TEST_CASE("impatient agents accept their flow payoff") {
    DdcConfig c;
    c.rho = 1e-9;
    CHECK(solve_reservation_post(c, 3, 2) == doctest::Approx(flow(c, 3, 2)).epsilon(1e-6));
    CHECK(solve_reservation_pre(c, 3, 2, 0.5, 100.0) == doctest::Approx(flow(c, 3, 2)).epsilon(1e-6));
}

TEST_CASE("without treatment the pre value ignores the post value") {
    DdcConfig c;
    CHECK(solve_reservation_pre(c, 2, 1, 0.0, -1e6) == solve_reservation_pre(c, 2, 1, 0.0, 1e6));
}

TEST_CASE("post value does not depend on the treatment probability") {
    DdcConfig a, b;
    b.pi[0] = 0.3;
    b.pi[1] = 0.6;
    const auto ta = solve_reservations(a);
    const auto tb = solve_reservations(b);
    for (std::size_t k = 0; k < ta.cells.size(); ++k) CHECK(ta.cells[k].w_post == tb.cells[k].w_post);
}

TEST_CASE("pre value moves toward the post value as pi grows") {
    DdcConfig c;
    for (int a = 1; a <= 6; ++a)
        for (int e = 1; e <= 3; ++e) {
            const double post = solve_reservation_post(c, a, e);
            const double w0 = solve_reservation_pre(c, a, e, 0.0, post);
            double prev = w0;
            for (double pi : {0.01, 0.03, 0.1, 0.5}) {
                const double w = solve_reservation_pre(c, a, e, pi, post);
                if (post > w0) CHECK(w > prev);
                else CHECK(w < prev);
                prev = w;
            }
            // a harmful shift reverses the ordering
            DdcConfig neg = c;
            neg.treatment_shift = -c.treatment_shift;
            const double pn = solve_reservation_post(neg, a, e);
            CHECK(solve_reservation_pre(neg, a, e, 0.03, pn) < solve_reservation_pre(neg, a, e, 0.01, pn));
        }
}

TEST_CASE("Monte-Carlo and analytic fixed points agree") {
    DdcConfig c;
    DdcConfig mc = c;
    mc.mode = ExpectationMode::monte_carlo;
    SolveDiagnostics d;
    const double an = solve_reservation_post(c, 3, 2);
    const double m = solve_reservation_post(mc, 3, 2, &d);
    CHECK(d.mc_se > 0.0);
    CHECK(std::abs(an - m) <= 3 * d.mc_se);
    SolveDiagnostics dp;
    const double anp = solve_reservation_pre(c, 3, 2, 1);
    const double mp = solve_reservation_pre(mc, 3, 2, 1, &dp);
    CHECK(std::abs(anp - mp) <= 3 * (dp.mc_se + d.mc_se));
}

TEST_CASE("non-convergence is reported") {
    DdcConfig c;
    c.max_iterations = 3;
    try {
        solve_reservation_post(c, 1, 1);
        FAIL("expected ConvergenceError");
    } catch (const ConvergenceError& e) {
        CHECK(e.trace().size() == 3);
    }
}

// ---------------------------------------------------------------------------

TEST_CASE("inert dynamics") {
    DdcConfig c;
    c.n = 200;
    c.horizon = 100;
    c.pi[0] = c.pi[1] = 0.0;
    c.beta_lambda_a = c.beta_lambda_e = 0.0;
    const auto p = apply_censoring(simulate_panel(c), c);
    CHECK(p.admin_censored == 200);
    for (const auto& ag : p.agents) {
        CHECK_FALSE(ag.treat);
        CHECK_FALSE(ag.exit);
        CHECK(ag.censor == 60);
    }
}

TEST_CASE("accepting every offer gives the arrival probability as hazard") {
    DdcConfig c;
    c.n = 20000;
    c.pi[0] = c.pi[1] = 0.0;
    c.beta_c_a = 2000.0;
    c.a_min = c.a_max = 2;
    c.e_min = c.e_max = 1;
    const double lam = c.arrival_probability(2, 1);
    const auto p = simulate_panel(c);
    long at_risk = 0, exits = 0;
    for (const auto& ag : p.agents) {
        const int last = ag.exit ? std::min(*ag.exit, 10) : 10;
        at_risk += last;
        exits += ag.exit && *ag.exit <= 10;
    }
    const double h = static_cast<double>(exits) / at_risk;
    CHECK(std::abs(h - lam) < 3 * std::sqrt(lam * (1 - lam) / at_risk));
}

TEST_CASE("simulation is deterministic in the seed") {
    DdcConfig c;
    c.n = 500;
    const auto a = apply_censoring(simulate_panel(c), c);
    const auto b = apply_censoring(simulate_panel(c), c);
    CHECK(to_dataset(a, c) == to_dataset(b, c));
    c.seed += 1;
    CHECK_FALSE(to_dataset(apply_censoring(simulate_panel(c), c), c) == to_dataset(a, c));
}

TEST_CASE("regime 1 is treated more often") {
    DdcConfig c;
    c.n = 4000;
    const auto p = simulate_panel(c);
    int treated[2] = {0, 0};
    for (const auto& ag : p.agents) treated[ag.z] += ag.treat.has_value();
    CHECK(treated[1] > treated[0]);
}

// ---------------------------------------------------------------------------

TEST_CASE("censoring shares") {
    DdcConfig c;
    c.random_censor_share = 0.0;
    const auto raw = simulate_panel(c);
    const auto none = apply_censoring(raw, c);
    CHECK(none.random_censored == 0);
    for (std::size_t i = 0; i < raw.agents.size(); ++i)
        if (raw.agents[i].exit && *raw.agents[i].exit <= 60) CHECK(none.agents[i].exit == raw.agents[i].exit);

    c.random_censor_share = 1.0;
    const auto all = apply_censoring(raw, c);
    for (std::size_t i = 0; i < raw.agents.size(); ++i) {
        const auto& r = raw.agents[i];
        if (r.exit && *r.exit <= 60 && *r.exit >= 2) {
            REQUIRE(all.agents[i].censor);
            CHECK(*all.agents[i].censor < *r.exit);
            if (all.agents[i].treat) CHECK(*all.agents[i].treat <= *all.agents[i].censor);
        }
    }

    c.random_censor_share = 0.063;
    const auto def = apply_censoring(raw, c);
    const double admin = static_cast<double>(def.admin_censored) / c.n;
    const double random = static_cast<double>(def.random_censored) / (c.n - def.admin_censored);
    CHECK(std::abs(admin - 0.437) <= 0.02);
    CHECK(std::abs(random - 0.063) <= 0.01);
}

TEST_CASE("exported spells satisfy the spell invariants") {
    DdcConfig c;
    c.n = 3000;
    const auto d = to_dataset(apply_censoring(simulate_panel(c), c), c);
    CHECK(d.covariate_names == std::vector<std::string>{"a2", "a3", "a4", "a5", "a6"});
    for (const auto& r : d.records) {
        const auto why = validate(r, d.covariate_names.size());
        CHECK_MESSAGE(!why, r.id);
    }
}

TEST_CASE("config validation names the field") {
    auto expect = [](DdcConfig c, const std::string& field) {
        try {
            c.validate();
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(e.field() == field);
        }
    };
    DdcConfig c;
    c.rho = 1.0;
    expect(c, "rho");
    c = {};
    c.pi[1] = 1.0;
    expect(c, "pi_z1");
    c = {};
    c.n = 0;
    expect(c, "n");
    c = {};
    c.a_min = 4;
    c.a_max = 3;
    expect(c, "a_range");
    c = {};
    c.random_censor_share = 1.5;
    expect(c, "random_censor_share");
}
