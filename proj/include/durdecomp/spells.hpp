#pragma once
// Spell data: one row per subject with regime, optional treatment time, and a
// single terminal event (exit or censoring), plus baseline covariates.

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace durdecomp {

struct SpellRecord {
    std::string id;
    int regime = 0;                     // z in {0, 1}
    std::optional<double> treat_time;   // absent if never observed treated
    std::optional<double> exit_time;    // exactly one of exit/censor is present
    std::optional<double> censor_time;
    std::vector<double> covariates;     // baseline only

    bool exited() const noexcept { return exit_time.has_value(); }
    double terminal_time() const { return exit_time ? *exit_time : censor_time.value(); }

    friend bool operator==(const SpellRecord&, const SpellRecord&) = default;
};

/// Returns the reason a record violates the spell invariants, if any.
std::optional<std::string> validate(const SpellRecord& r, std::size_t covariate_count);

struct Dataset {
    std::vector<std::string> covariate_names;
    std::vector<SpellRecord> records;

    std::size_t size() const noexcept { return records.size(); }
    friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Maps logical spell fields to file columns. An empty covariate list means
/// "every column not otherwise mapped", in file order.
struct ColumnSchema {
    std::string id = "id";
    std::string regime = "regime";
    std::string treat_time = "treat_time";
    std::string exit_time = "exit_time";
    std::string censor_time = "censor_time";
    std::vector<std::string> covariates;
    char delimiter = ',';
};

struct Rejection {
    std::size_t row;  // 1-based data row (header excluded)
    std::string id;
    std::string reason;
};

struct LoadResult {
    Dataset data;
    std::vector<Rejection> rejects;
    std::size_t rows_read = 0;
};

/// Parse a delimited spell file. Malformed rows (unparsable numbers, wrong
/// field count) throw DataError carrying the row index; rows that parse but
/// break an invariant are dropped and listed in `rejects`.
LoadResult read_spells(std::istream& in, const ColumnSchema& schema = {});
LoadResult load_spells(const std::filesystem::path& path, const ColumnSchema& schema = {});

/// Numbers are written in shortest round-trip form, so write -> read is lossless.
void write_spells(std::ostream& out, const Dataset& data, const ColumnSchema& schema = {});
void save_spells(const std::filesystem::path& path, const Dataset& data,
                 const ColumnSchema& schema = {});

// ---------------------------------------------------------------------------
// Discrete analysis grid

struct TimeGrid {
    double unit = 1.0;  // width of one period
    int horizon = 1;    // last period index
};

/// Period index of a time: ceil(time / unit), with a 1e-9 relative guard so
/// exact multiples of `unit` are not pushed up by rounding noise.
int to_period(double time, double unit);

/// A spell on the period grid. Treatment in period s precedes an exit in the
/// same period; a censoring period counts as survived.
struct PeriodSpell {
    std::string id;
    int regime = 0;
    int treat = 0;     // period of treatment, 0 when untreated
    int terminal = 0;  // exit or censor period, >= 1
    bool exited = false;
    std::vector<double> covariates;

    bool treated() const noexcept { return treat > 0; }
};

struct PeriodData {
    std::vector<std::string> covariate_names;
    std::vector<PeriodSpell> spells;
    int horizon = 0;

    std::size_t size() const noexcept { return spells.size(); }
    std::size_t covariate_count() const noexcept { return covariate_names.size(); }
};

/// Throws DataError naming the record when a time maps past grid.horizon.
PeriodData discretize(const Dataset& data, const TimeGrid& grid);

// ---------------------------------------------------------------------------
// Risk sets

/// Counts for one regime. Untreated arrays are indexed by period t = 0..horizon
/// (index 0 unused). `entering[t]` counts S >= t, T >= t; of these `treatments[t]`
/// are treated in t and the rest (`at_risk[t]`, S > t, T >= t) face the untreated
/// exit hazard.
struct RegimeRiskSets {
    std::size_t cohort = 0;
    std::vector<long> entering;
    std::vector<long> treatments;
    std::vector<long> at_risk;
    std::vector<long> exits;
    std::vector<long> censored;

    /// Treated cohorts by treatment period s; arrays indexed by t (meaningful for t >= s).
    struct Cohort {
        std::vector<long> at_risk;
        std::vector<long> exits;
        std::vector<long> censored;
    };
    std::vector<Cohort> treated;  // index s = 0..horizon (0 unused)

    long treated_count() const;
};

struct RiskSetTable {
    int horizon = 0;
    RegimeRiskSets regime[2];
};

RiskSetTable build_risk_sets(const PeriodData& data);

}  // namespace durdecomp
