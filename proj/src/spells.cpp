#include "durdecomp/spells.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <unordered_map>

#include "durdecomp/error.hpp"

namespace durdecomp {

std::optional<std::string> validate(const SpellRecord& r, std::size_t covariate_count) {
    if (r.regime != 0 && r.regime != 1) return "regime must be 0 or 1";
    if (r.exit_time.has_value() == r.censor_time.has_value())
        return "exactly one of exit_time and censor_time must be present";
    const double terminal = r.terminal_time();
    if (!std::isfinite(terminal) || terminal <= 0.0) return "terminal time must be positive";
    if (r.treat_time) {
        if (!std::isfinite(*r.treat_time) || *r.treat_time <= 0.0)
            return "treatment time must be positive";
        if (*r.treat_time > terminal) return "treatment after terminal event";
    }
    if (r.covariates.size() != covariate_count) return "covariate count mismatch";
    for (double x : r.covariates)
        if (!std::isfinite(x)) return "non-finite covariate";
    return std::nullopt;
}

namespace {

// One delimited line into fields; double quotes group a field and "" escapes a quote.
std::vector<std::string> split_line(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == delim) {
            out.push_back(std::move(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(std::move(cur));
    for (auto& f : out) {
        auto b = f.find_first_not_of(" \t");
        auto e = f.find_last_not_of(" \t");
        f = (b == std::string::npos) ? std::string{} : f.substr(b, e - b + 1);
    }
    return out;
}

std::optional<double> parse_number(const std::string& field, std::size_t row,
                                   const std::string& column) {
    if (field.empty()) return std::nullopt;
    double v = 0.0;
    const char* first = field.data();
    const char* last = first + field.size();
    if (*first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc{} || ptr != last || !std::isfinite(v))
        throw DataError("column '" + column + "': cannot parse '" + field + "' as a number",
                        static_cast<std::ptrdiff_t>(row));
    return v;
}

std::string format_number(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::string quote_if_needed(const std::string& s, char delim) {
    if (s.find(delim) == std::string::npos && s.find('"') == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) {
        if (c == '"') q.push_back('"');
        q.push_back(c);
    }
    q.push_back('"');
    return q;
}

}  // namespace

LoadResult read_spells(std::istream& in, const ColumnSchema& schema) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty input: header row missing");
    if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    const auto header = split_line(line, schema.delimiter);

    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t i = 0; i < header.size(); ++i) index.emplace(header[i], i);
    auto column = [&](const std::string& name) {
        auto it = index.find(name);
        if (it == index.end()) throw DataError("declared column '" + name + "' not in header");
        return it->second;
    };
    const std::size_t c_id = column(schema.id);
    const std::size_t c_regime = column(schema.regime);
    const std::size_t c_treat = column(schema.treat_time);
    const std::size_t c_exit = column(schema.exit_time);
    const std::size_t c_censor = column(schema.censor_time);

    std::vector<std::string> cov_names = schema.covariates;
    if (cov_names.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (i != c_id && i != c_regime && i != c_treat && i != c_exit && i != c_censor)
                cov_names.push_back(header[i]);
    }
    std::vector<std::size_t> c_cov;
    for (const auto& n : cov_names) c_cov.push_back(column(n));

    LoadResult res;
    res.data.covariate_names = cov_names;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        if (line.empty() || line == "\r") continue;
        ++row;
        const auto f = split_line(line, schema.delimiter);
        if (f.size() != header.size())
            throw DataError("expected " + std::to_string(header.size()) + " fields, found " +
                                std::to_string(f.size()),
                            static_cast<std::ptrdiff_t>(row));
        SpellRecord r;
        r.id = f[c_id];
        auto z = parse_number(f[c_regime], row, schema.regime);
        if (!z) throw DataError("regime is missing", static_cast<std::ptrdiff_t>(row));
        if (*z != 0.0 && *z != 1.0) {
            res.rejects.push_back({row, r.id, "regime must be 0 or 1"});
            continue;
        }
        r.regime = static_cast<int>(*z);
        r.treat_time = parse_number(f[c_treat], row, schema.treat_time);
        r.exit_time = parse_number(f[c_exit], row, schema.exit_time);
        r.censor_time = parse_number(f[c_censor], row, schema.censor_time);
        r.covariates.reserve(c_cov.size());
        for (std::size_t k = 0; k < c_cov.size(); ++k) {
            auto v = parse_number(f[c_cov[k]], row, cov_names[k]);
            if (!v)
                throw DataError("covariate '" + cov_names[k] + "' is missing",
                                static_cast<std::ptrdiff_t>(row));
            r.covariates.push_back(*v);
        }
        if (auto why = validate(r, cov_names.size())) {
            res.rejects.push_back({row, r.id, *why});
            continue;
        }
        res.data.records.push_back(std::move(r));
    }
    res.rows_read = row;
    return res;
}

LoadResult load_spells(const std::filesystem::path& path, const ColumnSchema& schema) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open spell file '" + path.string() + "'");
    return read_spells(in, schema);
}

void write_spells(std::ostream& out, const Dataset& data, const ColumnSchema& schema) {
    const char d = schema.delimiter;
    const auto& cov_names = schema.covariates.empty() ? data.covariate_names : schema.covariates;
    if (cov_names.size() != data.covariate_names.size())
        throw DataError("schema covariate list does not match dataset covariates");
    out << schema.id << d << schema.regime << d << schema.treat_time << d << schema.exit_time
        << d << schema.censor_time;
    for (const auto& n : cov_names) out << d << quote_if_needed(n, d);
    out << '\n';
    auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string{}; };
    for (const auto& r : data.records) {
        out << quote_if_needed(r.id, d) << d << r.regime << d << opt(r.treat_time) << d
            << opt(r.exit_time) << d << opt(r.censor_time);
        for (double x : r.covariates) out << d << format_number(x);
        out << '\n';
    }
}

void save_spells(const std::filesystem::path& path, const Dataset& data,
                 const ColumnSchema& schema) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write spell file '" + path.string() + "'");
    write_spells(out, data, schema);
    if (!out) throw DataError("write failed for '" + path.string() + "'");
}

// ---------------------------------------------------------------------------

int to_period(double time, double unit) {
    const double q = time / unit;
    return static_cast<int>(std::ceil(q - 1e-9 * std::max(1.0, std::abs(q))));
}

PeriodData discretize(const Dataset& data, const TimeGrid& grid) {
    if (!(grid.unit > 0.0)) throw DataError("time grid unit must be positive");
    if (grid.horizon < 1) throw DataError("time grid horizon must be at least 1");
    PeriodData out;
    out.covariate_names = data.covariate_names;
    out.horizon = grid.horizon;
    out.spells.reserve(data.size());
    for (std::size_t i = 0; i < data.records.size(); ++i) {
        const auto& r = data.records[i];
        PeriodSpell p;
        p.id = r.id;
        p.regime = r.regime;
        p.exited = r.exited();
        p.terminal = std::max(1, to_period(r.terminal_time(), grid.unit));
        if (r.treat_time) p.treat = std::max(1, to_period(*r.treat_time, grid.unit));
        if (p.terminal > grid.horizon)
            throw DataError("record '" + r.id + "' ends in period " + std::to_string(p.terminal) +
                                ", beyond grid horizon " + std::to_string(grid.horizon),
                            static_cast<std::ptrdiff_t>(i + 1));
        p.covariates = r.covariates;
        out.spells.push_back(std::move(p));
    }
    return out;
}

// ---------------------------------------------------------------------------

long RegimeRiskSets::treated_count() const {
    long n = 0;
    for (std::size_t t = 1; t < treatments.size(); ++t) n += treatments[t];
    return n;
}

RiskSetTable build_risk_sets(const PeriodData& data) {
    const int H = data.horizon;
    RiskSetTable table;
    table.horizon = H;
    for (auto& rs : table.regime) {
        rs.entering.assign(H + 2, 0);
        rs.treatments.assign(H + 2, 0);
        rs.at_risk.assign(H + 2, 0);
        rs.exits.assign(H + 2, 0);
        rs.censored.assign(H + 2, 0);
        rs.treated.resize(H + 1);
    }
    // last_untreated[t]: spells whose untreated stretch ends in t (treated in t or terminal in t).
    std::vector<long> last_untreated[2] = {std::vector<long>(H + 2, 0),
                                           std::vector<long>(H + 2, 0)};
    for (const auto& sp : data.spells) {
        if (sp.terminal < 1 || sp.terminal > H)
            throw DataError("spell '" + sp.id + "' lies outside the period grid");
        auto& rs = table.regime[sp.regime];
        ++rs.cohort;
        if (sp.treated()) {
            ++last_untreated[sp.regime][sp.treat];
            ++rs.treatments[sp.treat];
            auto& c = rs.treated[sp.treat];
            if (c.at_risk.empty()) {
                c.at_risk.assign(H + 2, 0);
                c.exits.assign(H + 2, 0);
                c.censored.assign(H + 2, 0);
            }
            for (int t = sp.treat; t <= sp.terminal; ++t) ++c.at_risk[t];
            (sp.exited ? c.exits : c.censored)[sp.terminal] += 1;
        } else {
            ++last_untreated[sp.regime][sp.terminal];
            (sp.exited ? rs.exits : rs.censored)[sp.terminal] += 1;
        }
    }
    for (int z = 0; z < 2; ++z) {
        auto& rs = table.regime[z];
        long remaining = static_cast<long>(rs.cohort);
        for (int t = 1; t <= H; ++t) {
            rs.entering[t] = remaining;
            rs.at_risk[t] = remaining - rs.treatments[t];
            remaining -= last_untreated[z][t];
        }
    }
    return table;
}

}  // namespace durdecomp
