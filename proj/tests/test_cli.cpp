#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "durdecomp/json_io.hpp"
#include "durdecomp/nonparam.hpp"
#include "durdecomp/spells.hpp"

namespace fs = std::filesystem;
using namespace durdecomp;

namespace {

const std::string kCli = DURDECOMP_CLI_PATH;
const fs::path kConfigs = DURDECOMP_CONFIG_DIR;

struct Run {
    int code;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class Workdir {
public:
    Workdir() {
        static int counter = 0;
        dir_ = fs::temp_directory_path() / ("durdecomp_cli_" + std::to_string(::getpid()) + "_" +
                                            std::to_string(counter++));
        fs::create_directories(dir_);
    }
    ~Workdir() { fs::remove_all(dir_); }
    fs::path operator/(const std::string& name) const { return dir_ / name; }

    Run run(const std::string& args) const {
        const auto out = dir_ / "stdout.txt", err = dir_ / "stderr.txt";
        const std::string cmd = "'" + kCli + "' " + args + " >'" + out.string() + "' 2>'" + err.string() + "'";
        const int status = std::system(cmd.c_str());
        return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, slurp(out), slurp(err)};
    }

    void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

private:
    fs::path dir_;
};

const char* kToy =
    "id,regime,treat_time,exit_time,censor_time\n"
    "1,0,,1,\n"
    "2,0,2,4,\n"
    "3,0,,,3\n"
    "4,0,2,,5\n"
    "5,1,1,2,\n"
    "6,1,,,5\n"
    "7,1,1,,5\n"
    "8,1,2,3,\n"
    "9,1,,4,\n"
    "10,0,1,,5\n"
    "11,1,2,,5\n"
    "12,0,1,3,\n"
    "13,0,,,5\n";

}  // namespace

TEST_CASE("smoke simulation writes the configured number of rows") {
    Workdir w;
    const auto r = w.run("simulate --config '" + (kConfigs / "smoke_sim.json").string() + "' --out '" +
                         (w / "s.csv").string() + "'");
    REQUIRE(r.code == 0);
    CHECK(r.out.find("agents                 10") != std::string::npos);
    const auto loaded = load_spells(w / "s.csv");
    CHECK(loaded.data.size() == 10);
    CHECK(loaded.rejects.empty());
}

TEST_CASE("same seed, same bytes") {
    Workdir w;
    const std::string cfg = (kConfigs / "smoke_sim.json").string();
    REQUIRE(w.run("simulate --config '" + cfg + "' --n 300 --out '" + (w / "a.csv").string() + "'").code == 0);
    REQUIRE(w.run("simulate --config '" + cfg + "' --n 300 --out '" + (w / "b.csv").string() + "'").code == 0);
    REQUIRE(w.run("simulate --config '" + cfg + "' --n 300 --seed 8 --out '" + (w / "c.csv").string() + "'").code == 0);
    CHECK(slurp(w / "a.csv") == slurp(w / "b.csv"));
    CHECK(slurp(w / "a.csv") != slurp(w / "c.csv"));
}

TEST_CASE("bad config field exits with the config code") {
    Workdir w;
    w.write("bad.json", R"({"n": 10, "rho": 3})");
    const auto r = w.run("simulate --config '" + (w / "bad.json").string() + "' --out '" + (w / "x.csv").string() + "'");
    CHECK(r.code == 4);
    CHECK(r.err.find("rho") != std::string::npos);
    w.write("unknown.json", R"({"nn": 10})");
    CHECK(w.run("simulate --config '" + (w / "unknown.json").string() + "'").code == 4);
}

TEST_CASE("usage errors") {
    Workdir w;
    CHECK(w.run("gcomp --tau 3").code == 2);
    CHECK(w.run("frobnicate").code == 2);
}

TEST_CASE("single-regime data is a data error") {
    Workdir w;
    w.write("one.csv", "id,regime,treat_time,exit_time,censor_time\n1,0,,2,\n2,0,1,,3\n");
    const auto r = w.run("gcomp --data '" + (w / "one.csv").string() + "' --s-bar 1 --tau 3");
    CHECK(r.code == 3);
    CHECK(r.err.find("both regimes required") != std::string::npos);
}

TEST_CASE("empty cell exits with the cell code") {
    Workdir w;
    w.write("gap.csv", "id,regime,treat_time,exit_time,censor_time\n1,0,1,3,\n2,0,2,,3\n3,0,,,3\n4,1,1,2,\n5,1,,3,\n");
    const auto path = (w / "gap.csv").string();
    CHECK(w.run("gcomp --data '" + path + "' --s-bar 2 --tau 3").code == 5);
    const auto r = w.run("gcomp --data '" + path + "' --s-bar 2 --tau 3 --carry-forward");
    CHECK(r.code == 0);
}

TEST_CASE("gcomp output matches the library") {
    Workdir w;
    w.write("toy.csv", kToy);
    const auto path = (w / "toy.csv").string();
    const auto r = w.run("gcomp --data '" + path + "' --s-bar 2 --tau 5 --carry-forward --format json");
    REQUIRE(r.code == 0);
    const auto j = Json::parse(r.out);
    const auto pd = discretize(load_spells(path).data, {1.0, 5});
    const auto g = gcomp_decomposition(pd, 2, 5, {EmptyCellPolicy::carry_forward});
    CHECK(j["beta0"].get<double>() == g.beta0);
    CHECK(j["beta_z"].get<double>() == g.beta_z);
    CHECK(j["beta_s_bar"].get<double>() == g.beta_s_bar);
    CHECK(j["alpha_z"].get<double>() == g.alpha_z);

    const auto csv = w.run("gcomp --data '" + path + "' --s-bar 2 --tau 5 --carry-forward --format csv");
    REQUIRE(csv.code == 0);
    CHECK(csv.out.rfind("row,estimate\nbeta0,", 0) == 0);
    CHECK(csv.out.find("\"beta_(0,s_bar]\",") != std::string::npos);
}

TEST_CASE("Kaplan-Meier curve files") {
    Workdir w;
    w.write("toy.csv", kToy);
    const auto r = w.run("km --data '" + (w / "toy.csv").string() + "' --by-regime --censor-at-treatment --out-dir '" +
                         (w / "curves").string() + "'");
    REQUIRE(r.code == 0);
    const auto z0 = slurp(w / "curves" / "exit_z0_untreated.tsv");
    CHECK(z0.rfind("0\t1\n", 0) == 0);
    CHECK(fs::exists(w / "curves" / "exit_z1_untreated.tsv"));
    const auto j = w.run("km --data '" + (w / "toy.csv").string() + "' --event treatment --format json");
    REQUIRE(j.code == 0);
    CHECK(Json::parse(j.out)[0]["label"] == "treatment_pooled");
}

TEST_CASE("fit, decompose and substrata on simulated data") {
    Workdir w;
    const auto spells = (w / "sim.csv").string();
    REQUIRE(w.run("simulate --n 2000 --out '" + spells + "'").code == 0);
    const auto spec = (kConfigs / "six_segments.json").string();
    const auto fit = w.run("fit --data '" + spells + "' --spec '" + spec + "' --boundary-cells --out '" +
                           (w / "fit.json").string() + "'");
    REQUIRE(fit.code == 0);
    const auto fj = read_json_file(w / "fit.json");
    CHECK(fj["parameters"].size() == 4 * 6 + 2 * 6 + 2 * 5);

    const auto rep = w.run("decompose --data '" + spells + "' --fit '" + (w / "fit.json").string() +
                           "' --s-bar 30 --tau 60 --percent --substrata 10 20");
    REQUIRE(rep.code == 0);
    CHECK(rep.out.find("Causal effect decomposition (s_bar = 30, tau = 60") != std::string::npos);
    CHECK(rep.out.find("of base") != std::string::npos);
    CHECK(rep.out.find("Observations") != std::string::npos);

    const auto js = w.run("decompose --data '" + spells + "' --fit '" + (w / "fit.json").string() +
                          "' --s-bar 30 --tau 60 --substrata 10 20 --format json");
    REQUIRE(js.code == 0);
    const auto dj = Json::parse(js.out);
    CHECK(dj["substrata"].size() == 2);
    const auto back = decomposition_from_json(dj);
    CHECK(back.s_bar == 30);
    CHECK(back.beta0.se > 0.0);

    const auto sb = w.run("substrata --data '" + spells + "' --s 1 15 --tau 60 --carry-forward --format json");
    REQUIRE(sb.code == 0);
    const auto sj = Json::parse(sb.out);
    REQUIRE(sj.size() == 2);
    CHECK(sj[0]["pr_always"].get<double>() == 1.0);
}

TEST_CASE("unidentified cells exit with the fit code") {
    Workdir w;
    w.write("toy.csv", kToy);
    const auto r = w.run("fit --data '" + (w / "toy.csv").string() + "' --segments 3 --segment-width 2");
    CHECK(r.code == 6);
    CHECK(r.err.find("no events") != std::string::npos);
}
