#include "qsun/csv.hpp"
#include "qsun/errors.hpp"
#include "qsun/harness.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

using namespace qsun;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name)
{
    const fs::path p = fs::temp_directory_path() / ("qsun-test-" + name);
    fs::remove_all(p);
    return p;
}

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string(QSUN_CLI) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

harness::RunConfig small_config(const fs::path& out)
{
    harness::RunConfig c;
    c.model.n = 7;
    c.model.alpha = 0.1;
    c.realizations = 6;
    c.analyses.patches = true;
    c.analyses.stats = true;
    c.analyses.localization = true;
    c.analyses.probes = true;
    c.out = out;
    return c;
}

} // namespace

TEST_CASE("csv writer and reader round trip")
{
    const fs::path dir = scratch_dir("csv");
    fs::create_directories(dir);
    {
        csv::Writer w(dir / "t.csv", "demo", {"a", "b", "c"});
        w.cell(0.1).cell(3).cell("x");
        w.end_row();
        w.cell(-1e-300).cell(std::size_t{7}).cell(true);
        w.end_row();
        CHECK(w.rows() == 2);
    }
    {
        csv::Writer bad(dir / "bad.csv", "demo", {"a", "b"});
        bad.cell(1.0);
        CHECK_THROWS(bad.end_row());
    }
    const csv::Table t = csv::read(dir / "t.csv");
    CHECK(t.schema == "demo");
    CHECK(t.version == csv::schema_version);
    CHECK(t.columns == std::vector<std::string>{"a", "b", "c"});
    REQUIRE(t.rows.size() == 2);
    CHECK(std::stod(t.rows[0][0]) == 0.1);
    CHECK(std::stod(t.rows[1][0]) == -1e-300);
    CHECK(t.rows[1][2] == "1");
    CHECK(t.column("c") == 2);
    CHECK(slurp(dir / "t.csv").rfind("# qsun-csv schema=demo version=1\na,b,c\n", 0) == 0);
    CHECK(std::stod(csv::format_double(1.0 / 3.0)) == 1.0 / 3.0);
}

TEST_CASE("config json round trip and rejection of unknown keys")
{
    harness::RunConfig c;
    c.model.n = 9;
    c.model.alpha = 0.2;
    c.model.master_seed = 42;
    c.realizations = 17;
    c.analyses.stats = true;
    c.window = 12.5;
    c.lclt_n = {2, 8};
    const nlohmann::json j = harness::config_to_json(c);
    const harness::RunConfig back = harness::config_from_json(j);
    CHECK(back.model.n == 9);
    CHECK(back.model.alpha == 0.2);
    CHECK(back.model.master_seed == 42);
    CHECK(back.realizations == 17);
    CHECK(back.analyses.stats);
    CHECK_FALSE(back.analyses.patches);
    CHECK(back.window == 12.5);
    CHECK(back.lclt_n == std::vector<int>{2, 8});
    CHECK(harness::config_to_json(back) == j);

    CHECK_THROWS_AS(harness::config_from_json(nlohmann::json{{"realisations", 3}}), ValidationError);
    CHECK_THROWS_AS(harness::config_from_json(nlohmann::json{{"model", {{"nn", 3}}}}), ValidationError);
}

TEST_CASE("run config validation names the field")
{
    harness::RunConfig c;
    c.analyses.patches = true;
    auto message = [&](harness::RunConfig bad) {
        try {
            harness::validate(bad);
        } catch (const ValidationError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    harness::RunConfig w = c;
    w.workers = 0;
    CHECK(message(w).find("workers") != std::string::npos);
    harness::RunConfig s = c;
    s.scale_min = 1;
    CHECK(message(s).find("scale window") != std::string::npos);
    harness::RunConfig p = c;
    p.analyses.perturbation = true;
    p.model.n = 11;
    CHECK(message(p).find("perturbation") != std::string::npos);
    harness::RunConfig t = c;
    t.probe_trials = 10;
    CHECK(message(t).find("probes.trials") != std::string::npos);
    harness::RunConfig big = c;
    big.model.n = 16;
    CHECK(message(big).find("max_scale") != std::string::npos);
    CHECK(message(c).empty());
}

TEST_CASE("ensemble output is independent of the worker count")
{
    const fs::path a = scratch_dir("det-1"), b = scratch_dir("det-8");
    harness::RunConfig c1 = small_config(a);
    c1.workers = 1;
    harness::RunConfig c8 = small_config(b);
    c8.workers = 8;
    const auto files1 = harness::write_ensemble(harness::run_ensemble(c1));
    const auto files8 = harness::write_ensemble(harness::run_ensemble(c8));
    REQUIRE(files1.size() == files8.size());
    CHECK(files1.size() >= 8);
    for (std::size_t i = 0; i < files1.size(); ++i) {
        INFO(files1[i].name);
        CHECK(files1[i].name == files8[i].name);
        CHECK(slurp(a / files1[i].name) == slurp(b / files8[i].name));
    }
}

TEST_CASE("manifest lists every file with its row count")
{
    const fs::path dir = scratch_dir("manifest");
    const harness::RunConfig c = small_config(dir);
    const auto res = harness::run_ensemble(c);
    CHECK(res.failures.empty());
    CHECK(res.realizations.size() == 6);
    const auto files = harness::write_ensemble(res);
    harness::write_manifest(c, files, res.failures, res.wall_seconds, "test");
    const nlohmann::json m = nlohmann::json::parse(slurp(dir / "manifest.json"));
    CHECK(m.at("command") == "test");
    CHECK(m.at("version") == harness::version());
    CHECK(m.at("files").size() == files.size());
    for (const auto& f : m.at("files")) {
        const csv::Table t = csv::read(dir / f.at("name").get<std::string>());
        CHECK(t.rows.size() == f.at("rows").get<std::size_t>());
        CHECK(t.version == f.at("schema_version").get<int>());
    }
    // the echoed config reproduces the run
    const harness::RunConfig echoed = harness::config_from_json(m.at("config"));
    CHECK(harness::config_to_json(echoed) == m.at("config"));
}

TEST_CASE("patch fractions sum to one per scale")
{
    const fs::path dir = scratch_dir("fractions");
    harness::RunConfig c = small_config(dir);
    c.analyses = {};
    c.analyses.patches = true;
    const auto res = harness::run_ensemble(c);
    for (int m = c.lo_scale(); m <= c.hi_scale(); ++m) {
        double total = 0.0;
        for (const auto& pf : res.patch_fractions)
            if (pf.scale == m) total += pf.fraction.mean();
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(res.A_counts.size() == static_cast<std::size_t>(c.hi_scale() - c.lo_scale()));
}

TEST_CASE("failing realizations are isolated and recorded")
{
    // at n = 5, alpha = 0.1 the split n0 = floor(rho n) is not admissible,
    // so every realization fails inside the stats analysis
    const fs::path dir = scratch_dir("failures");
    harness::RunConfig c;
    c.model.n = 5;
    c.model.alpha = 0.1;
    c.realizations = 3;
    c.analyses.stats = true;
    c.out = dir;
    const auto res = harness::run_ensemble(c);
    CHECK(res.realizations.empty());
    REQUIRE(res.failures.size() == 3);
    CHECK(res.failures[0].second.find("SplitInvalid") != std::string::npos);
    CHECK(res.failure_fraction() == 1.0);
    const auto files = harness::write_ensemble(res);
    const csv::Table t = csv::read(dir / "failures.csv");
    CHECK(t.rows.size() == 3);
    CHECK(t.rows[2][0] == "2");
}

TEST_CASE("dissolve trace covers every patch once per scale")
{
    const fs::path dir = scratch_dir("trace");
    fs::create_directories(dir);
    harness::RunConfig c;
    c.model.n = 7;
    const std::size_t rows = harness::dissolve_trace(c, 3, dir / "trace.csv");
    const csv::Table t = csv::read(dir / "trace.csv");
    CHECK(t.rows.size() == rows);
    const std::size_t scale = t.column("scale"), size = t.column("size");
    std::map<int, long long> covered;
    for (const auto& r : t.rows) covered[std::stoi(r[scale])] += std::stoll(r[size]);
    for (const auto& [m, total] : covered) CHECK(total == (1LL << m));
}

TEST_CASE("command line exit codes")
{
    const fs::path dir = scratch_dir("cli");
    const std::string out = " --quiet --out " + dir.string();
    CHECK(run_cli("run-ensemble" + out) == 2);
    CHECK(run_cli("run-ensemble --n 6 --alpha 1.5" + out) == 2);
    CHECK(run_cli("run-ensemble --n 6 --workers 0" + out) == 2);
    CHECK(run_cli("run-ensemble --n 6 --analyses bogus" + out) == 2);
    CHECK(run_cli("no-such-command") == 2);
    CHECK(run_cli("run-ensemble --n 6 --realizations 2" + out) == 0);
    CHECK(fs::exists(dir / "manifest.json"));
    CHECK(fs::exists(dir / "patch_fractions.csv"));
    // all realizations fail: more than 1% of the ensemble
    CHECK(run_cli("stats --n 5 --alpha 0.1 --realizations 2" + out) == 1);
    const fs::path none = scratch_dir("cli-none");
    CHECK(run_cli("run-ensemble --n 6 --analyses none --quiet --out " + none.string()) == 0);
    const nlohmann::json m = nlohmann::json::parse(slurp(none / "manifest.json"));
    CHECK(m.at("files").empty());
}
