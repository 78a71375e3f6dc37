#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>
#include <sstream>

#include "durdecomp/effects.hpp"
#include "durdecomp/error.hpp"

using namespace durdecomp;

namespace {

PeriodData covariate_data(int n, int p, std::uint64_t seed, int horizon = 60) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> x01;
    std::uniform_int_distribution<int> t(1, horizon);
    PeriodData d;
    d.horizon = horizon;
    for (int j = 0; j < p; ++j) d.covariate_names.push_back("x" + std::to_string(j + 1));
    for (int i = 0; i < n; ++i) {
        PeriodSpell s;
        s.id = std::to_string(i);
        s.regime = i % 2;
        s.terminal = t(rng);
        s.exited = s.terminal < horizon;
        if (i % 3 == 0) s.treat = std::uniform_int_distribution<int>(1, s.terminal)(rng);
        for (int j = 0; j < p; ++j) s.covariates.push_back(x01(rng));
        d.spells.push_back(s);
    }
    return d;
}

HazardParams some_params(const PiecewiseSpec& spec, int p) {
    HazardParams hp(spec, p);
    const int K = spec.exit_segments();
    for (int z = 0; z < 2; ++z)
        for (int k = 0; k < K; ++k) {
            hp.theta[hp.exit_index(z, 0, k)] = std::log(0.010 + 0.004 * z + 0.002 * k);
            hp.theta[hp.exit_index(z, 1, k)] = std::log(0.020 + 0.001 * k);
        }
    for (int z = 0; z < 2; ++z)
        for (int k = 0; k < spec.treat_segments(); ++k)
            hp.theta[hp.treat_index(z, k)] = std::log(0.01 + 0.02 * z + 0.003 * k);
    for (int j = 0; j < p; ++j) {
        hp.theta[hp.beta_exit_index(j)] = 0.2 * (j + 1);
        hp.theta[hp.beta_treat_index(j)] = -0.15 * (j + 1);
    }
    return hp;
}

FitResult fake_fit(const HazardParams& hp, const PiecewiseSpec& spec, std::uint64_t seed) {
    FitResult f;
    f.spec = spec;
    f.params = hp;
    const auto P = hp.theta.size();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    Eigen::MatrixXd A(P, P);
    for (Eigen::Index a = 0; a < P; ++a)
        for (Eigen::Index b = 0; b < P; ++b) A(a, b) = g(rng) * 0.01;
    f.covariance = A * A.transpose() + 1e-4 * Eigen::MatrixXd::Identity(P, P);
    return f;
}

}  // namespace

// ---------------------------------------------------------------------------
// Weights

TEST_CASE("a single spell gets all the weight") {
    const auto d = covariate_data(1, 2, 1);
    const auto spec = PiecewiseSpec::uniform(3, 20.0, 60.0);
    const auto w = compute_weights(some_params(spec, 2), spec, d, 7);
    REQUIRE(w.w.size() == 1);
    CHECK(w.w[0][0] == doctest::Approx(1.0));
}

TEST_CASE("no covariates means uniform weights") {
    const auto d = covariate_data(37, 0, 2);
    const auto spec = PiecewiseSpec::uniform(2, 30.0, 60.0);
    const auto w = compute_weights(some_params(spec, 0), spec, d, 12);
    for (double v : w.w[0]) CHECK(v == doctest::Approx(1.0 / 37).epsilon(1e-14));
}

TEST_CASE("interval weights by hand") {
    PeriodData d;
    d.horizon = 10;
    d.covariate_names = {"x"};
    for (double x : {0.0, 1.0, -1.0}) d.spells.push_back({std::to_string(x), 0, 0, 10, false, {x}});
    const auto spec = PiecewiseSpec::uniform(1, 10.0, 10.0);
    HazardParams hp(spec, 1);
    hp.theta.setConstant(std::log(0.1));
    hp.theta[hp.beta_treat_index(0)] = 0.5;
    const auto w = compute_weights_interval(hp, spec, d, 2, 1);
    double raw[2][3], total = 0.0;
    for (int s = 1; s <= 2; ++s)
        for (int i = 0; i < 3; ++i) {
            const double q = std::exp(0.5 * d.spells[i].covariates[0]);
            raw[s - 1][i] = 0.1 * q * std::exp(-0.1 * s * q);
            total += raw[s - 1][i];
        }
    CHECK(w.mode == WeightMode::interval);
    CHECK(w.periods == std::vector<int>{1, 2});
    for (int s = 0; s < 2; ++s)
        for (int i = 0; i < 3; ++i) CHECK(w.w[s][i] == doctest::Approx(raw[s][i] / total).epsilon(1e-14));
    CHECK(std::abs(w.total() - 1.0) < 1e-12);
    const auto W = w.per_subject();
    CHECK(W[1] == doctest::Approx((raw[0][1] + raw[1][1]) / total));
}

TEST_CASE("weights sum to one for random parameters") {
    std::mt19937_64 rng(3);
    for (int r = 0; r < 10; ++r) {
        const int K = 1 + r % 4, p = r % 5;
        const auto spec = PiecewiseSpec::uniform(K, 60.0 / K, 60.0);
        const auto d = covariate_data(200 + 30 * r, p, 10 + r);
        auto hp = some_params(spec, p);
        for (Eigen::Index k = 0; k < hp.theta.size(); ++k) hp.theta[k] += std::normal_distribution<double>(0, 0.5)(rng);
        for (int s : {1, 9, 33}) CHECK(std::abs(compute_weights(hp, spec, d, s, r % 2).total() - 1.0) < 1e-10);
        CHECK(std::abs(compute_weights_interval(hp, spec, d, 30, r % 2).total() - 1.0) < 1e-10);
    }
}

TEST_CASE("zero treatment density makes weights undefined") {
    const auto d = covariate_data(10, 0, 4);
    const auto spec = PiecewiseSpec::uniform(1, 60.0, 60.0);
    auto hp = some_params(spec, 0);
    hp.theta[hp.treat_index(1, 0)] = -800.0;
    CHECK_THROWS_AS(compute_weights(hp, spec, d, 5, 1), FitError);
}

// ---------------------------------------------------------------------------
// Decomposition

TEST_CASE("no treatment effect on the exit hazard") {
    const auto spec = PiecewiseSpec::uniform(3, 20.0, 60.0);
    const auto d = covariate_data(300, 2, 5);
    auto hp = some_params(spec, 2);
    for (int z = 0; z < 2; ++z)
        for (int k = 0; k < 3; ++k) hp.theta[hp.exit_index(z, 1, k)] = hp.theta[hp.exit_index(z, 0, k)];
    const auto e = decomposition_effects(hp, spec, d, 30, 60);
    CHECK(std::abs(e[2]) < 1e-15);
    CHECK(std::abs(e[3]) < 1e-15);
}

TEST_CASE("symmetric regimes give zero regime effects") {
    const auto spec = PiecewiseSpec::uniform(2, 30.0, 60.0);
    const auto d = covariate_data(300, 1, 6);
    auto hp = some_params(spec, 1);
    for (int k = 0; k < 2; ++k) {
        hp.theta[hp.exit_index(1, 0, k)] = hp.theta[hp.exit_index(0, 0, k)];
        hp.theta[hp.exit_index(1, 1, k)] = hp.theta[hp.exit_index(0, 1, k)];
        hp.theta[hp.treat_index(1, k)] = hp.theta[hp.treat_index(0, k)];
    }
    const auto e = decomposition_effects(hp, spec, d, 30, 60);
    CHECK(e[1] == 0.0);
    CHECK(e[3] == 0.0);
    CHECK(e[4] == 0.0);
}

TEST_CASE("aggregates equal the mass-weighted per-period effects") {
    const auto spec = PiecewiseSpec::uniform(6, 10.0, 60.0);
    const auto d = covariate_data(500, 3, 7);
    const auto hp = some_params(spec, 3);
    DecomposeOptions o;
    o.standard_errors = false;
    const auto r = decompose(fake_fit(hp, spec, 1), d, 30, 60, o);
    double bs = 0.0, bzs = 0.0, w = 0.0;
    for (std::size_t k = 0; k < r.s.size(); ++k) {
        bs += r.weights[k] * r.beta_s[k];
        bzs += r.weights[k] * r.beta_zs[k];
        w += r.weights[k];
    }
    CHECK(std::abs(w - 1.0) < 1e-10);
    CHECK(std::abs(bs - r.beta_s_bar.estimate) < 1e-10);
    CHECK(std::abs(bzs - r.beta_zs_bar.estimate) < 1e-10);
    CHECK(r.beta_s_bar.estimate < 0.0);
}

TEST_CASE("alpha sign follows the chosen contrast") {
    const auto spec = PiecewiseSpec::uniform(2, 30.0, 60.0);
    const auto d = covariate_data(100, 1, 8);
    const auto hp = some_params(spec, 1);
    DecomposeOptions a, b;
    b.alpha = AlphaContrast::one_minus_zero;
    const auto ea = decomposition_effects(hp, spec, d, 20, 60, a);
    const auto eb = decomposition_effects(hp, spec, d, 20, 60, b);
    CHECK(ea[4] == doctest::Approx(-eb[4]));
    // regime 1 treats faster, so zero_minus_one is negative
    CHECK(ea[4] < 0.0);
}

TEST_CASE("relabelling the regimes") {
    const auto spec = PiecewiseSpec::uniform(3, 20.0, 60.0);
    const auto d = covariate_data(400, 2, 9);
    const auto hp = some_params(spec, 2);
    auto swapped_d = d;
    for (auto& s : swapped_d.spells) s.regime = 1 - s.regime;
    HazardParams sw = hp;
    for (int z = 0; z < 2; ++z)
        for (int k = 0; k < 3; ++k) {
            sw.theta[sw.exit_index(z, 0, k)] = hp.theta[hp.exit_index(1 - z, 0, k)];
            sw.theta[sw.exit_index(z, 1, k)] = hp.theta[hp.exit_index(1 - z, 1, k)];
            sw.theta[sw.treat_index(z, k)] = hp.theta[hp.treat_index(1 - z, k)];
        }
    DecomposeOptions o1, o0;
    o0.weight_regime = 0;
    const auto a = decomposition_effects(hp, spec, d, 30, 60, o1);
    const auto b = decomposition_effects(sw, spec, swapped_d, 30, 60, o0);
    CHECK(b[0] == doctest::Approx(a[0] + a[1]).epsilon(1e-12));
    CHECK(b[1] == doctest::Approx(-a[1]).epsilon(1e-12));
    CHECK(b[2] == doctest::Approx(a[2] + a[3]).epsilon(1e-12));
    CHECK(b[3] == doctest::Approx(-a[3]).epsilon(1e-12));
    CHECK(b[4] == doctest::Approx(-a[4]).epsilon(1e-12));
}

TEST_CASE("tau beyond the model horizon is rejected") {
    const auto spec = PiecewiseSpec::uniform(2, 30.0, 60.0);
    const auto d = covariate_data(20, 0, 10);
    CHECK_THROWS_AS(decomposition_effects(some_params(spec, 0), spec, d, 30, 61), DataError);
    CHECK_THROWS_AS(decomposition_effects(some_params(spec, 0), spec, d, 40, 30), ConfigError);
}

// ---------------------------------------------------------------------------
// Delta method

TEST_CASE("delta method on simple functionals") {
    const auto spec = PiecewiseSpec::uniform(2, 30.0, 60.0);
    const auto f = fake_fit(some_params(spec, 2), spec, 11);
    const auto c0 = delta_se(f, [](const HazardParams&) { return 0.42; });
    CHECK(c0.se == 0.0);
    CHECK(c0.estimate == 0.42);

    Eigen::VectorXd c(f.params.theta.size());
    for (Eigen::Index k = 0; k < c.size(); ++k) c[k] = 0.3 * k - 1.0;
    const auto lin = delta_se(f, [&](const HazardParams& p) { return c.dot(p.theta); });
    CHECK(lin.se == doctest::Approx(std::sqrt(c.dot(f.covariance * c))).epsilon(1e-7));
    CHECK(lin.p_value == doctest::Approx(std::erfc(std::abs(lin.estimate / lin.se) / std::sqrt(2.0))));
}

TEST_CASE("fixed parameters do not contribute") {
    const auto spec = PiecewiseSpec::uniform(1, 60.0, 60.0);
    auto f = fake_fit(some_params(spec, 1), spec, 12);
    const int j = static_cast<int>(f.params.beta_exit_index(0));
    f.fixed = {j};
    f.covariance.row(j).setZero();
    f.covariance.col(j).setZero();
    const auto r = delta_se(f, [&](const HazardParams& p) { return 5.0 * p.theta[j]; });
    CHECK(r.se == 0.0);
}

TEST_CASE("normal p-values") {
    CHECK(normal_p_value(1.959963984540054, 1.0) == doctest::Approx(0.05).epsilon(1e-9));
    CHECK(normal_p_value(0.0, 0.0) == 1.0);
    CHECK(normal_p_value(0.3, 0.0) == 0.0);
}

// ---------------------------------------------------------------------------
// Model products and substrata

TEST_CASE("model products telescope and average subject survival") {
    const auto spec = PiecewiseSpec::uniform(3, 20.0, 60.0);
    const auto d = covariate_data(80, 2, 13);
    const auto hp = some_params(spec, 2);
    const ModelProducts m(hp, spec, d);
    CHECK(m.horizon() == 60);
    for (int z = 0; z < 2; ++z) {
        double avg = 0.0;
        for (const auto& s : d.spells) avg += predict_survival(hp, spec, s.covariates, z, 0, 0.0, 40.0);
        CHECK(m.untreated(z, 1, 40) == doctest::Approx(avg / 80).epsilon(1e-12));
        CHECK(m.untreated(z, 1, 17) * m.untreated(z, 18, 40) == doctest::Approx(m.untreated(z, 1, 40)).epsilon(1e-12));
        CHECK(m.treated(z, 9, 9, 25) * m.treated(z, 9, 26, 60) ==
              doctest::Approx(m.treated(z, 9, 9, 60)).epsilon(1e-12));
    }
}

TEST_CASE("substrata effects from model products") {
    const auto spec = PiecewiseSpec::uniform(3, 20.0, 60.0);
    const auto d = covariate_data(200, 1, 14);
    const auto hp = some_params(spec, 1);
    const ModelProducts m(hp, spec, d);
    for (int s : {1, 10, 30}) {
        const auto e = substrata_effects(m, s, 60);
        const auto& p = e.probabilities;
        CHECK(std::abs(p.always + p.complier + p.never - 1.0) < 1e-10);
        if (s == 1) {
            CHECK(p.complier == 0.0);
            CHECK_FALSE(e.complier_defined);
            CHECK(std::isnan(e.beta_zs_cs));
            CHECK(e.sprime.period == 1);
        }
        // regime 1 exits faster untreated, so regime 0 is the higher one (ties go to 1)
        if (s == 1) continue;
        CHECK(p.higher_regime == 0);
        CHECK(e.beta0_as == doctest::Approx(m.untreated(1, s, 60)));
        CHECK(e.beta_s_as == doctest::Approx(m.treated(1, s, s, 60) - m.untreated(1, s, 60)));
        CHECK(e.complier_defined);
        CHECK(e.beta_zs_cs == doctest::Approx(e.beta_zs / p.complier));
        CHECK(e.sprime.period >= s);
    }
}

TEST_CASE("identical regimes have no regime effect in the always-survivors") {
    const auto spec = PiecewiseSpec::uniform(2, 30.0, 60.0);
    const auto d = covariate_data(50, 0, 15);
    auto hp = some_params(spec, 0);
    for (int k = 0; k < 2; ++k) {
        hp.theta[hp.exit_index(1, 0, k)] = hp.theta[hp.exit_index(0, 0, k)];
        hp.theta[hp.exit_index(1, 1, k)] = hp.theta[hp.exit_index(0, 1, k)];
    }
    const ModelProducts m(hp, spec, d);
    const auto e = substrata_effects(m, 20, 60);
    CHECK(e.sprime.period == 20);
    CHECK(e.beta_z_as == 0.0);
    CHECK(e.beta_zs == 0.0);
    CHECK(e.unstable);
}

// ---------------------------------------------------------------------------
// Reports

TEST_CASE("text and csv report layout") {
    DecompositionResult r;
    r.s_bar = 30;
    r.tau = 60;
    r.beta0 = {0.59, 0.012, 0.0};
    r.beta_z = {0.17, 0.02, 1e-17};
    r.beta_s_bar = {-0.297, 0.04, 2e-13};
    r.beta_zs_bar = {-0.18, 0.05, 3e-4};
    r.alpha_z = {-0.3, 0.01, 0.0};
    r.counts.untreated[0] = 10;
    r.counts.treated[0] = 2;
    r.counts.untreated[1] = 8;
    r.counts.treated[1] = 5;
    const auto text = format_report_text(r, {true});
    CHECK(text.find("beta0                 0.5900  (0.0120)  [0.0000]\n") != std::string::npos);
    CHECK(text.find("beta_z                0.1700  (0.0200)  [0.0000]  +41.5% of base") != std::string::npos);
    CHECK(text.find("beta_(0,s_bar]       -0.2970") != std::string::npos);
    CHECK(text.find("  total                     25\n") != std::string::npos);

    const auto csv = format_report_csv(r);
    std::istringstream in(csv);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        int commas = 0;
        bool quoted = false;
        for (char ch : line) {
            if (ch == '"') quoted = !quoted;
            commas += ch == ',' && !quoted;
        }
        CHECK(commas == 3);
        ++rows;
    }
    CHECK(rows == 10);
    CHECK(csv.rfind("row,estimate,se,p_value\nbeta0,0.58999999999999997,", 0) == 0);
}
