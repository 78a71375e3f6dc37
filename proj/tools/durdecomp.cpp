// durdecomp: simulate, ingest, estimate and decompose duration data.
//
// Exit codes: 0 success, 2 usage, 3 data, 4 config, 5 empty cell, 6 fit,
// 7 non-convergence, 1 anything else.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "durdecomp/ddcsim.hpp"
#include "durdecomp/effects.hpp"
#include "durdecomp/error.hpp"
#include "durdecomp/json_io.hpp"
#include "durdecomp/nonparam.hpp"
#include "durdecomp/phmodel.hpp"
#include "durdecomp/spells.hpp"

namespace fs = std::filesystem;
using namespace durdecomp;

namespace {

struct DataArgs {
    std::string path;
    std::string schema;
    double unit = 1.0;
    int horizon = 0;  // 0: smallest horizon covering the data
    bool no_covariates = false;
};

void add_data_options(CLI::App* cmd, DataArgs& d) {
    cmd->add_option("--data", d.path, "Spell file (delimited text with header)")->required();
    cmd->add_option("--schema", d.schema, "JSON column mapping");
    cmd->add_option("--unit", d.unit, "Width of one analysis period")->check(CLI::PositiveNumber);
    cmd->add_option("--horizon", d.horizon, "Last analysis period (default: data maximum)");
    cmd->add_flag("--no-covariates", d.no_covariates, "Ignore all covariate columns");
}

PeriodData load_data(const DataArgs& d) {
    const ColumnSchema schema = d.schema.empty() ? ColumnSchema{}
                                                 : column_schema_from_json(read_json_file(d.schema));
    auto loaded = load_spells(d.path, schema);
    for (const auto& r : loaded.rejects)
        std::cerr << "warning: row " << r.row << " (id '" << r.id << "') rejected: " << r.reason << '\n';
    if (loaded.data.records.empty()) throw DataError("no valid spells in '" + d.path + "'");
    if (d.no_covariates) {
        loaded.data.covariate_names.clear();
        for (auto& r : loaded.data.records) r.covariates.clear();
    }
    int horizon = d.horizon;
    if (horizon <= 0)
        for (const auto& r : loaded.data.records)
            horizon = std::max(horizon, to_period(r.terminal_time(), d.unit));
    return discretize(loaded.data, {d.unit, std::max(horizon, 1)});
}

enum class Format { table, json, csv };

std::map<std::string, Format> format_map() {
    return {{"table", Format::table}, {"json", Format::json}, {"csv", Format::csv}};
}

void emit(const std::string& text, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << text;
        return;
    }
    std::ofstream f(out);
    if (!f) throw DataError("cannot write '" + out + "'");
    f << text;
    if (!f) throw DataError("write failed for '" + out + "'");
}

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

std::string substrata_table(const std::vector<SubstrataEffects>& rows) {
    std::ostringstream o;
    o << "Substrata (rank invariance; regime " << (rows.empty() ? 1 : rows[0].probabilities.higher_regime)
      << " has the higher untreated survival)\n";
    o << "   s    Pr(as)   Pr(cs)   Pr(ns)    s'    beta0|as  beta_z|as  beta_s|as  beta_zs|cs\n";
    for (const auto& e : rows) {
        const auto& p = e.probabilities;
        char line[200];
        std::snprintf(line, sizeof line, "%4d  %7.4f  %7.4f  %7.4f  %4s  %9.4f  %9.4f  %9.4f  %10s%s\n", e.s,
                      p.always, p.complier, p.never,
                      e.sprime.beyond_tau ? ">tau" : std::to_string(e.sprime.period).c_str(),
                      e.beta0_as, e.beta_z_as, e.beta_s_as,
                      e.complier_defined ? fmt("%.4f", e.beta_zs_cs).c_str() : "undefined",
                      e.unstable ? "  (unstable: Pr(cs) below floor)" : "");
        o << line;
    }
    return o.str();
}

// ---------------------------------------------------------------------------

struct SimulateArgs {
    std::string config;
    std::string out = "spells.csv";
    std::string diagnostics;
    std::optional<int> n;
    std::optional<std::uint64_t> seed;
};

int cmd_simulate(const SimulateArgs& a) {
    DdcConfig c = a.config.empty() ? DdcConfig{} : ddc_config_from_json(read_json_file(a.config));
    if (a.n) c.n = *a.n;
    if (a.seed) c.seed = *a.seed;
    c.validate();
    const auto table = solve_reservations(c);
    const auto panel = apply_censoring(simulate_panel(c, table), c);
    save_spells(a.out, to_dataset(panel, c));
    if (!a.diagnostics.empty())
        write_json_file(a.diagnostics, Json{{"config", to_json(c)}, {"reservations", to_json(table)}});
    long treated[2] = {0, 0}, size[2] = {0, 0};
    for (const auto& ag : panel.agents) {
        ++size[ag.z];
        if (ag.treat) ++treated[ag.z];
    }
    const double n = c.n;
    const double rest = n - panel.admin_censored;
    std::cout << "agents                 " << c.n << '\n'
              << "administrative censor  " << fmt("%.2f%%", 100.0 * panel.admin_censored / n) << " (t = "
              << c.admin_censor << ")\n"
              << "random censor          "
              << fmt("%.2f%%", rest > 0 ? 100.0 * panel.random_censored / rest : 0.0) << " of the rest\n"
              << "treated, regime 0      " << fmt("%.2f%%", size[0] ? 100.0 * treated[0] / size[0] : 0.0) << '\n'
              << "treated, regime 1      " << fmt("%.2f%%", size[1] ? 100.0 * treated[1] / size[1] : 0.0) << '\n'
              << "spell file             " << a.out << '\n';
    return 0;
}

struct KmArgs {
    DataArgs data;
    std::string event = "exit";
    bool by_regime = false;
    bool censor_at_treatment = false;
    std::string out_dir = ".";
    Format format = Format::table;
};

int cmd_km(const KmArgs& a) {
    const auto pd = load_data(a.data);
    std::vector<std::optional<int>> strata;
    if (a.by_regime) strata = {0, 1};
    else strata = {std::nullopt};
    Json all = Json::array();
    fs::create_directories(a.out_dir);
    for (const auto& z : strata) {
        KmOptions o;
        o.regime = z;
        o.event = a.event == "treatment" ? KmEvent::treatment : KmEvent::exit;
        o.censor_at_treatment = a.censor_at_treatment;
        const auto curve = kaplan_meier(pd, o);
        if (a.format == Format::json) {
            all.push_back(to_json(curve));
            continue;
        }
        const auto path = fs::path(a.out_dir) / (curve.label + ".tsv");
        std::ostringstream s;
        s.precision(17);
        for (std::size_t k = 0; k < curve.periods.size(); ++k)
            s << curve.periods[k] << '\t' << curve.values[k] << '\n';
        emit(s.str(), path.string());
        std::cout << path.string() << '\n';
    }
    if (a.format == Format::json) std::cout << all.dump(2) << '\n';
    return 0;
}

struct GcompArgs {
    DataArgs data;
    int s_bar = 0;
    int tau = 0;
    bool carry_forward = false;
    int weight_regime = 1;
    std::string alpha = "zero_minus_one";
    Format format = Format::table;
    std::string out;
};

GcompOptions gcomp_options(const GcompArgs& a) {
    GcompOptions o;
    o.empty_cells = a.carry_forward ? EmptyCellPolicy::carry_forward : EmptyCellPolicy::error;
    o.weight_regime = a.weight_regime;
    o.alpha = a.alpha == "one_minus_zero" ? AlphaContrast::one_minus_zero : AlphaContrast::zero_minus_one;
    return o;
}

int cmd_gcomp(const GcompArgs& a) {
    const auto pd = load_data(a.data);
    const auto g = gcomp_decomposition(pd, a.s_bar, a.tau, gcomp_options(a));
    std::ostringstream o;
    if (a.format == Format::json) {
        o << to_json(g).dump(2) << '\n';
    } else if (a.format == Format::csv) {
        o.precision(17);
        o << "row,estimate\n";
        o << "beta0," << g.beta0 << "\nbeta_z," << g.beta_z << "\n\"beta_(0,s_bar]\"," << g.beta_s_bar
          << "\n\"beta_z(0,s_bar]\"," << g.beta_zs_bar << "\nalpha_z," << g.alpha_z << '\n';
    } else {
        o << "Nonparametric decomposition (s_bar = " << g.s_bar << ", tau = " << g.tau << ")\n";
        o << "beta0              " << fmt("%9.4f", g.beta0) << '\n';
        o << "beta_z             " << fmt("%9.4f", g.beta_z) << '\n';
        if (g.treatment_defined) {
            o << "beta_(0,s_bar]     " << fmt("%9.4f", g.beta_s_bar) << '\n';
            o << "beta_z(0,s_bar]    " << fmt("%9.4f", g.beta_zs_bar) << '\n';
        } else {
            o << "beta_(0,s_bar]     undefined (no treated spells)\n";
            o << "beta_z(0,s_bar]    undefined (no treated spells)\n";
        }
        o << "alpha_z            " << fmt("%9.4f", g.alpha_z) << '\n';
        for (const auto& c : g.carried)
            o << "note: empty cell carried forward at period " << c.period << ", regime " << c.regime
              << ", stratum " << c.stratum << '\n';
    }
    emit(o.str(), a.out);
    return 0;
}

struct FitArgs {
    DataArgs data;
    std::string spec;
    int segments = 6;
    double segment_width = 10.0;
    bool boundary_cells = false;
    int max_iterations = 500;
    std::string out;
};

PiecewiseSpec spec_for(const FitArgs& a, const PeriodData& pd) {
    if (!a.spec.empty()) return piecewise_spec_from_json(read_json_file(a.spec));
    return PiecewiseSpec::uniform(a.segments, a.segment_width,
                                  std::max<double>(pd.horizon, (a.segments - 1) * a.segment_width + 1.0));
}

FitResult run_fit(const FitArgs& a, const PeriodData& pd) {
    FitOptions o;
    o.max_iterations = a.max_iterations;
    o.zero_event_cells = a.boundary_cells ? ZeroEventCells::boundary : ZeroEventCells::error;
    return fit(pd, spec_for(a, pd), o);
}

void add_fit_options(CLI::App* cmd, FitArgs& a) {
    cmd->add_option("--spec", a.spec, "JSON piecewise spec (exit_cuts, treat_cuts, horizon)");
    cmd->add_option("--segments", a.segments, "Equal-width baseline segments")->check(CLI::PositiveNumber);
    cmd->add_option("--segment-width", a.segment_width, "Width of each segment in periods")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--boundary-cells", a.boundary_cells,
                  "Fix zero-event baseline cells at rate ~0 instead of failing");
    cmd->add_option("--max-iterations", a.max_iterations, "Optimizer iteration cap");
}

int cmd_fit(const FitArgs& a) {
    const auto pd = load_data(a.data);
    const auto f = run_fit(a, pd);
    const auto j = to_json(f);
    if (a.out.empty()) std::cout << j.dump(2) << '\n';
    else write_json_file(a.out, j);
    std::cerr << "log-likelihood " << fmt("%.6f", f.log_likelihood) << ", " << f.iterations
              << " iterations, " << f.termination << '\n';
    for (int c : f.boundary)
        std::cerr << "note: " << f.parameter_names[c] << " has no events; fixed at the boundary\n";
    return 0;
}

struct DecomposeArgs {
    DataArgs data;
    FitArgs fit;
    std::string fit_file;
    int s_bar = 0;
    int tau = 0;
    int weight_regime = 1;
    std::string alpha = "zero_minus_one";
    bool no_se = false;
    bool percent = false;
    std::vector<int> substrata;
    double cs_floor = 1e-3;
    Format format = Format::table;
    std::string out;
};

int cmd_decompose(DecomposeArgs a) {
    const auto pd = load_data(a.data);
    FitResult f = a.fit_file.empty() ? run_fit(a.fit, pd) : fit_result_from_json(read_json_file(a.fit_file));
    DecomposeOptions o;
    o.weight_regime = a.weight_regime;
    o.alpha = a.alpha == "one_minus_zero" ? AlphaContrast::one_minus_zero : AlphaContrast::zero_minus_one;
    o.standard_errors = !a.no_se;
    const auto r = decompose(f, pd, a.s_bar, a.tau, o);
    std::vector<SubstrataEffects> sub;
    if (!a.substrata.empty()) {
        const auto w = compute_weights_interval(f.params, f.spec, pd, a.s_bar, a.weight_regime).per_subject();
        const ModelProducts mp(f.params, f.spec, pd, w);
        for (int s : a.substrata) sub.push_back(substrata_effects(mp, s, a.tau, a.cs_floor));
    }
    std::ostringstream out;
    if (a.format == Format::json) {
        Json j = to_json(r);
        if (!sub.empty()) {
            j["substrata"] = Json::array();
            for (const auto& e : sub) j["substrata"].push_back(to_json(e));
        }
        out << j.dump(2) << '\n';
    } else if (a.format == Format::csv) {
        out << format_report_csv(r, {a.percent});
    } else {
        out << format_report_text(r, {a.percent});
        if (!sub.empty()) out << substrata_table(sub);
    }
    emit(out.str(), a.out);
    return 0;
}

struct SubstrataArgs {
    DataArgs data;
    std::vector<int> s;
    int tau = 0;
    double cs_floor = 1e-3;
    bool carry_forward = false;
    Format format = Format::table;
    std::string out;
};

int cmd_substrata(const SubstrataArgs& a) {
    const auto pd = load_data(a.data);
    const GcompTables tables(pd, a.carry_forward ? EmptyCellPolicy::carry_forward : EmptyCellPolicy::error);
    std::vector<SubstrataEffects> rows;
    for (int s : a.s) rows.push_back(substrata_effects(tables, s, a.tau, a.cs_floor));
    if (a.format == Format::json) {
        Json j = Json::array();
        for (const auto& e : rows) j.push_back(to_json(e));
        emit(j.dump(2) + "\n", a.out);
    } else {
        emit(substrata_table(rows), a.out);
    }
    return 0;
}

int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const CellError*>(&e)) return 5;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    if (dynamic_cast<const ConfigError*>(&e)) return 4;
    if (dynamic_cast<const FitError*>(&e)) return 6;
    if (dynamic_cast<const ConvergenceError*>(&e)) return 7;
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Causal decomposition of regime and treatment effects in duration data"};
    app.require_subcommand(1);
    const auto formats = format_map();

    SimulateArgs sim;
    auto* c_sim = app.add_subcommand("simulate", "Simulate a spell panel from the choice model");
    c_sim->add_option("--config", sim.config, "JSON simulation config (defaults if omitted)");
    c_sim->add_option("--out", sim.out, "Spell file to write");
    c_sim->add_option("--diagnostics", sim.diagnostics, "Reservation-utility diagnostics JSON");
    c_sim->add_option("--n", sim.n, "Override population size");
    c_sim->add_option("--seed", sim.seed, "Override master seed");

    KmArgs km;
    auto* c_km = app.add_subcommand("km", "Kaplan-Meier curves as two-column files");
    add_data_options(c_km, km.data);
    c_km->add_option("--event", km.event, "exit or treatment")->check(CLI::IsMember({"exit", "treatment"}));
    c_km->add_flag("--by-regime", km.by_regime, "One curve per regime");
    c_km->add_flag("--censor-at-treatment", km.censor_at_treatment, "Treatment censors the exit process");
    c_km->add_option("--out-dir", km.out_dir, "Directory for curve files");
    c_km->add_option("--format", km.format, "table (curve files) or json")
        ->transform(CLI::CheckedTransformer(formats));

    GcompArgs gc;
    auto* c_gc = app.add_subcommand("gcomp", "Nonparametric g-computation decomposition");
    add_data_options(c_gc, gc.data);
    c_gc->add_option("--s-bar", gc.s_bar, "Last treatment period of the interval")->required();
    c_gc->add_option("--tau", gc.tau, "Evaluation period")->required();
    c_gc->add_flag("--carry-forward", gc.carry_forward, "Treat empty cells as survival 1 (flagged)");
    c_gc->add_option("--weight-regime", gc.weight_regime, "Regime of the treatment-time weights")
        ->check(CLI::Range(0, 1));
    c_gc->add_option("--alpha-contrast", gc.alpha, "zero_minus_one or one_minus_zero")
        ->check(CLI::IsMember({"zero_minus_one", "one_minus_zero"}));
    c_gc->add_option("--format", gc.format, "table, json or csv")->transform(CLI::CheckedTransformer(formats));
    c_gc->add_option("--out", gc.out, "Output file (default stdout)");

    FitArgs ft;
    auto* c_fit = app.add_subcommand("fit", "Piecewise-exponential hazard model by maximum likelihood");
    add_data_options(c_fit, ft.data);
    add_fit_options(c_fit, ft);
    c_fit->add_option("--out", ft.out, "Fit JSON (default stdout)");

    DecomposeArgs dc;
    auto* c_dc = app.add_subcommand("decompose", "Model-based decomposition with delta-method inference");
    add_data_options(c_dc, dc.data);
    add_fit_options(c_dc, dc.fit);
    c_dc->add_option("--fit", dc.fit_file, "Use a saved fit instead of fitting");
    c_dc->add_option("--s-bar", dc.s_bar, "Last treatment period of the interval")->required();
    c_dc->add_option("--tau", dc.tau, "Evaluation period")->required();
    c_dc->add_option("--weight-regime", dc.weight_regime, "Regime of the treatment-time weights")
        ->check(CLI::Range(0, 1));
    c_dc->add_option("--alpha-contrast", dc.alpha, "zero_minus_one or one_minus_zero")
        ->check(CLI::IsMember({"zero_minus_one", "one_minus_zero"}));
    c_dc->add_flag("--no-se", dc.no_se, "Skip standard errors");
    c_dc->add_flag("--percent", dc.percent, "Add effects as a share of 1 - beta0");
    c_dc->add_option("--substrata", dc.substrata, "Treatment periods for substrata rows");
    c_dc->add_option("--cs-floor", dc.cs_floor, "Complier-share floor for the instability flag");
    c_dc->add_option("--format", dc.format, "table, json or csv")->transform(CLI::CheckedTransformer(formats));
    c_dc->add_option("--out", dc.out, "Output file (default stdout)");

    SubstrataArgs sb;
    auto* c_sb = app.add_subcommand("substrata", "Nonparametric substrata probabilities and effects");
    add_data_options(c_sb, sb.data);
    c_sb->add_option("--s", sb.s, "Treatment periods")->required();
    c_sb->add_option("--tau", sb.tau, "Evaluation period")->required();
    c_sb->add_option("--cs-floor", sb.cs_floor, "Complier-share floor for the instability flag");
    c_sb->add_flag("--carry-forward", sb.carry_forward, "Treat empty cells as survival 1");
    c_sb->add_option("--format", sb.format, "table or json")->transform(CLI::CheckedTransformer(formats));
    c_sb->add_option("--out", sb.out, "Output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*c_sim) return cmd_simulate(sim);
        if (*c_km) return cmd_km(km);
        if (*c_gc) return cmd_gcomp(gc);
        if (*c_fit) return cmd_fit(ft);
        if (*c_dc) {
            dc.fit.data = dc.data;
            return cmd_decompose(dc);
        }
        if (*c_sb) return cmd_substrata(sb);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_code_for(e);
    }
    return 1;
}
