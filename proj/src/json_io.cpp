#include "durdecomp/json_io.hpp"

#include <cmath>
#include <fstream>
#include <set>

#include "durdecomp/error.hpp"

namespace durdecomp {

namespace {

Json num(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

double get_num(const Json& j) {
    if (j.is_null()) return std::nan("");
    if (!j.is_number()) throw DataError("expected a number, found " + j.dump());
    return j.get<double>();
}

Json nums(const std::vector<double>& v) {
    Json a = Json::array();
    for (double x : v) a.push_back(num(x));
    return a;
}

std::vector<double> get_nums(const Json& j) {
    std::vector<double> v;
    for (const auto& x : j) v.push_back(get_num(x));
    return v;
}

Json inference(const Inference& i) {
    return {{"estimate", num(i.estimate)}, {"se", num(i.se)}, {"p_value", num(i.p_value)}};
}

Inference get_inference(const Json& j) {
    return {get_num(j.at("estimate")), get_num(j.at("se")), get_num(j.at("p_value"))};
}

const char* contrast_name(AlphaContrast a) {
    return a == AlphaContrast::zero_minus_one ? "zero_minus_one" : "one_minus_zero";
}

AlphaContrast contrast_from(const std::string& s) {
    if (s == "zero_minus_one") return AlphaContrast::zero_minus_one;
    if (s == "one_minus_zero") return AlphaContrast::one_minus_zero;
    throw ConfigError("alpha_contrast", "expected zero_minus_one or one_minus_zero");
}

}  // namespace

Json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path.string(), "cannot open file");
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ConfigError(path.string(), std::string("invalid JSON: ") + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const Json& j) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write '" + path.string() + "'");
    out << j.dump(2) << '\n';
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------

DdcConfig ddc_config_from_json(const Json& j, DdcConfig c) {
    if (!j.is_object()) throw ConfigError("<root>", "simulation config must be a JSON object");
    static const std::set<std::string> known = {
        "mu_w", "sigma_w", "mu_c", "sigma_c", "mu_lambda", "sigma_lambda", "rho", "sigma_xi",
        "beta_w_a", "beta_w_s", "beta_c_a", "beta_c_e", "beta_lambda_a", "beta_lambda_e",
        "pi_z0", "pi_z1", "treatment_shift", "n", "horizon", "a_range", "e_range",
        "admin_censor", "random_censor_share", "expectation", "mc_draws", "tolerance",
        "max_iterations", "seed"};
    for (const auto& [k, v] : j.items())
        if (!known.count(k)) throw ConfigError(k, "unknown field");
    auto d = [&](const char* k, double& out) {
        if (!j.contains(k)) return;
        if (!j[k].is_number()) throw ConfigError(k, "must be a number");
        out = j[k].get<double>();
    };
    auto i = [&](const char* k, int& out) {
        if (!j.contains(k)) return;
        if (!j[k].is_number_integer()) throw ConfigError(k, "must be an integer");
        out = j[k].get<int>();
    };
    auto range = [&](const char* k, int& lo, int& hi) {
        if (!j.contains(k)) return;
        const auto& r = j[k];
        if (!r.is_array() || r.size() != 2 || !r[0].is_number_integer() || !r[1].is_number_integer())
            throw ConfigError(k, "must be an array of two integers");
        lo = r[0].get<int>();
        hi = r[1].get<int>();
    };
    d("mu_w", c.mu_w);
    d("sigma_w", c.sigma_w);
    d("mu_c", c.mu_c);
    d("sigma_c", c.sigma_c);
    d("mu_lambda", c.mu_lambda);
    d("sigma_lambda", c.sigma_lambda);
    d("rho", c.rho);
    d("sigma_xi", c.sigma_xi);
    d("beta_w_a", c.beta_w_a);
    d("beta_w_s", c.beta_w_s);
    d("beta_c_a", c.beta_c_a);
    d("beta_c_e", c.beta_c_e);
    d("beta_lambda_a", c.beta_lambda_a);
    d("beta_lambda_e", c.beta_lambda_e);
    d("pi_z0", c.pi[0]);
    d("pi_z1", c.pi[1]);
    d("treatment_shift", c.treatment_shift);
    i("n", c.n);
    i("horizon", c.horizon);
    range("a_range", c.a_min, c.a_max);
    range("e_range", c.e_min, c.e_max);
    i("admin_censor", c.admin_censor);
    d("random_censor_share", c.random_censor_share);
    if (j.contains("expectation")) {
        const auto m = j["expectation"].is_string() ? j["expectation"].get<std::string>() : "";
        if (m == "analytic") c.mode = ExpectationMode::analytic;
        else if (m == "monte_carlo") c.mode = ExpectationMode::monte_carlo;
        else throw ConfigError("expectation", "expected \"analytic\" or \"monte_carlo\"");
    }
    i("mc_draws", c.mc_draws);
    d("tolerance", c.tolerance);
    i("max_iterations", c.max_iterations);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ConfigError("seed", "must be a non-negative integer");
        c.seed = j["seed"].get<std::uint64_t>();
    }
    c.validate();
    return c;
}

Json to_json(const DdcConfig& c) {
    return {{"mu_w", c.mu_w}, {"sigma_w", c.sigma_w}, {"mu_c", c.mu_c}, {"sigma_c", c.sigma_c},
            {"mu_lambda", c.mu_lambda}, {"sigma_lambda", c.sigma_lambda}, {"rho", c.rho},
            {"sigma_xi", c.sigma_xi}, {"beta_w_a", c.beta_w_a}, {"beta_w_s", c.beta_w_s},
            {"beta_c_a", c.beta_c_a}, {"beta_c_e", c.beta_c_e},
            {"beta_lambda_a", c.beta_lambda_a}, {"beta_lambda_e", c.beta_lambda_e},
            {"pi_z0", c.pi[0]}, {"pi_z1", c.pi[1]}, {"treatment_shift", c.treatment_shift},
            {"n", c.n}, {"horizon", c.horizon}, {"a_range", {c.a_min, c.a_max}},
            {"e_range", {c.e_min, c.e_max}}, {"admin_censor", c.admin_censor},
            {"random_censor_share", c.random_censor_share},
            {"expectation", c.mode == ExpectationMode::analytic ? "analytic" : "monte_carlo"},
            {"mc_draws", c.mc_draws}, {"tolerance", c.tolerance},
            {"max_iterations", c.max_iterations}, {"seed", c.seed}};
}

ColumnSchema column_schema_from_json(const Json& j) {
    ColumnSchema s;
    if (!j.is_object()) throw ConfigError("<root>", "column mapping must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (k == "covariates") {
            if (!v.is_array()) throw ConfigError(k, "must be an array of column names");
            s.covariates = v.get<std::vector<std::string>>();
            continue;
        }
        if (!v.is_string()) throw ConfigError(k, "must be a string");
        const auto str = v.get<std::string>();
        if (k == "id") s.id = str;
        else if (k == "regime") s.regime = str;
        else if (k == "treat_time") s.treat_time = str;
        else if (k == "exit_time") s.exit_time = str;
        else if (k == "censor_time") s.censor_time = str;
        else if (k == "delimiter") {
            if (str.size() != 1) throw ConfigError(k, "must be a single character");
            s.delimiter = str[0];
        } else throw ConfigError(k, "unknown field");
    }
    return s;
}

PiecewiseSpec piecewise_spec_from_json(const Json& j) {
    if (!j.is_object()) throw ConfigError("<root>", "piecewise spec must be a JSON object");
    PiecewiseSpec s;
    if (!j.contains("horizon") || !j["horizon"].is_number())
        throw ConfigError("horizon", "required number");
    s.horizon = j["horizon"].get<double>();
    if (j.contains("segments")) {
        const int k = j["segments"].get<int>();
        const double w = j.value("segment_width", s.horizon / k);
        s = PiecewiseSpec::uniform(k, w, s.horizon);
    }
    if (j.contains("exit_cuts")) s.exit_cuts = j["exit_cuts"].get<std::vector<double>>();
    if (j.contains("treat_cuts")) s.treat_cuts = j["treat_cuts"].get<std::vector<double>>();
    else if (j.contains("exit_cuts")) s.treat_cuts = s.exit_cuts;
    s.validate();
    return s;
}

Json to_json(const PiecewiseSpec& s) {
    return {{"exit_cuts", s.exit_cuts}, {"treat_cuts", s.treat_cuts}, {"horizon", s.horizon}};
}

// ---------------------------------------------------------------------------

Json to_json(const SurvivalCurve& c) {
    return {{"label", c.label}, {"periods", c.periods}, {"values", nums(c.values)},
            {"at_risk", c.at_risk}, {"events", c.events}};
}

Json to_json(const GcompEstimates& g) {
    Json carried = Json::array();
    for (const auto& e : g.carried)
        carried.push_back({{"period", e.period}, {"regime", e.regime}, {"stratum", e.stratum}});
    return {{"s_bar", g.s_bar},
            {"tau", g.tau},
            {"beta0", num(g.beta0)},
            {"beta_z", num(g.beta_z)},
            {"treatment_defined", g.treatment_defined},
            {"beta_s_bar", num(g.beta_s_bar)},
            {"beta_zs_bar", num(g.beta_zs_bar)},
            {"alpha_z", num(g.alpha_z)},
            {"per_s", {{"s", g.s}, {"beta_s", nums(g.beta_s)}, {"beta_zs", nums(g.beta_zs)},
                       {"weight", nums(g.weights)}}},
            {"treatment_mass", {nums(g.treatment_mass[0]), nums(g.treatment_mass[1])}},
            {"untreated_residual", {num(g.untreated_residual[0]), num(g.untreated_residual[1])}},
            {"carried_cells", carried}};
}

Json to_json(const FitResult& f) {
    const auto n = f.params.theta.size();
    Json cov = Json::array();
    for (Eigen::Index r = 0; r < f.covariance.rows(); ++r) {
        Json row = Json::array();
        for (Eigen::Index c = 0; c < f.covariance.cols(); ++c) row.push_back(num(f.covariance(r, c)));
        cov.push_back(row);
    }
    Json params = Json::array();
    for (Eigen::Index k = 0; k < n; ++k) {
        const double se = k < f.covariance.rows() ? std::sqrt(std::max(0.0, f.covariance(k, k))) : 0.0;
        params.push_back({{"name", f.parameter_names.at(static_cast<std::size_t>(k))},
                          {"value", num(f.params.theta[k])},
                          {"se", num(se)}});
    }
    return {{"spec", to_json(f.spec)},
            {"covariates", f.covariate_names},
            {"parameters", params},
            {"fixed", f.fixed},
            {"boundary", f.boundary},
            {"covariance", cov},
            {"log_likelihood", num(f.log_likelihood)},
            {"iterations", f.iterations},
            {"gradient_norm", num(f.gradient_norm)},
            {"termination", f.termination},
            {"spells", f.spells}};
}

FitResult fit_result_from_json(const Json& j) {
    FitResult f;
    f.spec = piecewise_spec_from_json(j.at("spec"));
    f.covariate_names = j.at("covariates").get<std::vector<std::string>>();
    f.params = HazardParams(f.spec, static_cast<int>(f.covariate_names.size()));
    const auto& ps = j.at("parameters");
    if (static_cast<Eigen::Index>(ps.size()) != f.params.theta.size())
        throw DataError("fit file has " + std::to_string(ps.size()) + " parameters, spec implies " +
                        std::to_string(f.params.theta.size()));
    for (std::size_t k = 0; k < ps.size(); ++k) {
        f.parameter_names.push_back(ps[k].at("name").get<std::string>());
        f.params.theta[static_cast<Eigen::Index>(k)] = get_num(ps[k].at("value"));
    }
    f.fixed = j.at("fixed").get<std::vector<int>>();
    f.boundary = j.value("boundary", std::vector<int>{});
    const auto& cov = j.at("covariance");
    f.covariance = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cov.size()),
                                         cov.empty() ? 0 : static_cast<Eigen::Index>(cov[0].size()));
    for (std::size_t r = 0; r < cov.size(); ++r)
        for (std::size_t c = 0; c < cov[r].size(); ++c)
            f.covariance(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = get_num(cov[r][c]);
    f.log_likelihood = get_num(j.at("log_likelihood"));
    f.iterations = j.at("iterations").get<int>();
    f.gradient_norm = get_num(j.at("gradient_norm"));
    f.termination = j.at("termination").get<std::string>();
    f.spells = j.at("spells").get<std::size_t>();
    return f;
}

Json to_json(const DecompositionResult& r) {
    const auto& c = r.counts;
    return {{"s_bar", r.s_bar},
            {"tau", r.tau},
            {"weight_regime", r.weight_regime},
            {"alpha_contrast", contrast_name(r.alpha_contrast)},
            {"effects",
             {{"beta0", inference(r.beta0)},
              {"beta_z", inference(r.beta_z)},
              {"beta_s_bar", inference(r.beta_s_bar)},
              {"beta_zs_bar", inference(r.beta_zs_bar)},
              {"alpha_z", inference(r.alpha_z)}}},
            {"per_s", {{"s", r.s}, {"beta_s", nums(r.beta_s)}, {"beta_zs", nums(r.beta_zs)},
                       {"weight", nums(r.weights)}}},
            {"counts",
             {{"z0_untreated", c.untreated[0]}, {"z0_treated", c.treated[0]},
              {"z1_untreated", c.untreated[1]}, {"z1_treated", c.treated[1]}}}};
}

DecompositionResult decomposition_from_json(const Json& j) {
    DecompositionResult r;
    r.s_bar = j.at("s_bar").get<int>();
    r.tau = j.at("tau").get<int>();
    r.weight_regime = j.at("weight_regime").get<int>();
    r.alpha_contrast = contrast_from(j.at("alpha_contrast").get<std::string>());
    const auto& e = j.at("effects");
    r.beta0 = get_inference(e.at("beta0"));
    r.beta_z = get_inference(e.at("beta_z"));
    r.beta_s_bar = get_inference(e.at("beta_s_bar"));
    r.beta_zs_bar = get_inference(e.at("beta_zs_bar"));
    r.alpha_z = get_inference(e.at("alpha_z"));
    const auto& ps = j.at("per_s");
    r.s = ps.at("s").get<std::vector<int>>();
    r.beta_s = get_nums(ps.at("beta_s"));
    r.beta_zs = get_nums(ps.at("beta_zs"));
    r.weights = get_nums(ps.at("weight"));
    const auto& c = j.at("counts");
    r.counts.untreated[0] = c.at("z0_untreated").get<long>();
    r.counts.treated[0] = c.at("z0_treated").get<long>();
    r.counts.untreated[1] = c.at("z1_untreated").get<long>();
    r.counts.treated[1] = c.at("z1_treated").get<long>();
    return r;
}

Json to_json(const SubstrataEffects& e) {
    const auto& p = e.probabilities;
    return {{"s", e.s},
            {"tau", e.tau},
            {"higher_regime", p.higher_regime},
            {"pr_always", num(p.always)},
            {"pr_complier", num(p.complier)},
            {"pr_never", num(p.never)},
            {"s_prime", e.sprime.beyond_tau ? Json("beyond_tau") : Json(e.sprime.period)},
            {"beta0_as", num(e.beta0_as)},
            {"beta_z_as", num(e.beta_z_as)},
            {"beta_s_as", num(e.beta_s_as)},
            {"beta_zs", num(e.beta_zs)},
            {"beta_zs_cs", num(e.beta_zs_cs)},
            {"complier_defined", e.complier_defined},
            {"unstable", e.unstable},
            {"cs_floor", e.cs_floor}};
}

Json to_json(const ReservationTable& t) {
    Json cells = Json::array();
    for (const auto& c : t.cells) {
        auto diag = [](const SolveDiagnostics& d) {
            return Json{{"iterations", d.iterations}, {"last_step", num(d.last_step)}, {"mc_se", num(d.mc_se)}};
        };
        cells.push_back({{"a", c.a},
                         {"e", c.e},
                         {"w_post", num(c.w_post)},
                         {"w_pre_z0", num(c.w_pre[0])},
                         {"w_pre_z1", num(c.w_pre[1])},
                         {"diagnostics",
                          {{"post", diag(c.post_diag)}, {"pre_z0", diag(c.pre_diag[0])},
                           {"pre_z1", diag(c.pre_diag[1])}}}});
    }
    return {{"a_range", {t.a_min, t.a_max}}, {"e_range", {t.e_min, t.e_max}}, {"cells", cells}};
}

}  // namespace durdecomp
