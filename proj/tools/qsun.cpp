#include "qsun/errors.hpp"
#include "qsun/harness.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <iostream>
#include <optional>
#include <sstream>

namespace {

using namespace qsun;

struct CommonFlags {
    std::string config;
    std::optional<int> n;
    std::optional<double> alpha;
    std::optional<double> theta;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> realizations;
    std::optional<std::string> out;
    std::optional<int> workers;
    std::string analyses;
    std::uint64_t realization = 0;
    bool quiet = false;
};

void add_common(CLI::App* cmd, CommonFlags& f)
{
    cmd->add_option("--config", f.config, "JSON config file");
    cmd->add_option("--n", f.n, "chain length");
    cmd->add_option("--alpha", f.alpha, "coupling base in (0,1)");
    cmd->add_option("--theta", f.theta, "resonance exponent in (2/3,1)");
    cmd->add_option("--seed", f.seed, "master seed");
    cmd->add_option("--realizations", f.realizations, "ensemble size");
    cmd->add_option("--out", f.out, "output directory");
    cmd->add_option("--workers", f.workers, "worker threads (default: QSUN_WORKERS or 1)");
    cmd->add_flag("--quiet", f.quiet, "no progress output");
}

harness::RunConfig build_config(const CommonFlags& f)
{
    harness::RunConfig c;
    if (!f.config.empty()) {
        c = harness::load_config(f.config);
    } else {
        if (!f.n) throw ValidationError("n is required (pass --n in [2, 14] or --config FILE)");
        c.workers = harness::default_workers();
    }
    if (f.n) c.model.n = *f.n;
    if (f.alpha) c.model.alpha = *f.alpha;
    if (f.theta) c.model.theta = *f.theta;
    if (f.seed) c.model.master_seed = *f.seed;
    if (f.realizations) c.realizations = *f.realizations;
    if (f.out) c.out = *f.out;
    if (f.workers) c.workers = *f.workers;
    if (!f.analyses.empty()) {
        c.analyses = {};
        std::stringstream ss(f.analyses);
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item == "patches") c.analyses.patches = true;
            else if (item == "localization") c.analyses.localization = true;
            else if (item == "stats") c.analyses.stats = true;
            else if (item == "perturbation") c.analyses.perturbation = true;
            else if (item == "probes") c.analyses.probes = true;
            else if (item == "none") continue;
            else throw ValidationError("--analyses: unknown analysis '" + item + "' (valid: patches, localization, stats, perturbation, probes, none)");
        }
    }
    c.progress = !f.quiet;
    harness::validate(c);
    return c;
}

int finish(const harness::RunConfig& c, const std::vector<harness::FileRecord>& files,
           const std::vector<std::pair<std::uint64_t, std::string>>& failures, std::size_t attempted, double seconds,
           const std::string& command)
{
    harness::write_manifest(c, files, failures, seconds, command);
    for (const auto& f : files) std::cout << (c.out / f.name).string() << "  " << f.rows << " rows\n";
    std::cout << (c.out / "manifest.json").string() << "\n";
    if (!failures.empty()) {
        std::cerr << failures.size() << " of " << attempted << " realizations failed; first: realization " << failures.front().first
                  << ": " << failures.front().second << "\n";
        if (static_cast<double>(failures.size()) > 0.01 * static_cast<double>(attempted)) return 1;
    }
    return 0;
}

int run_ensemble_cmd(harness::RunConfig c, const std::string& command)
{
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<harness::FileRecord> files;
    std::vector<std::pair<std::uint64_t, std::string>> failures;
    std::size_t attempted = 0;
    if (c.analyses.any_ladder() || (!c.analyses.perturbation && !c.analyses.probes)) {
        const harness::EnsembleResult res = harness::run_ensemble(c);
        files = harness::write_ensemble(res);
        failures = res.failures;
        attempted += c.realizations;
    }
    if (c.analyses.perturbation) {
        const auto s = harness::run_perturbation(c, files);
        failures.insert(failures.end(), s.failures.begin(), s.failures.end());
        attempted += s.realizations_scanned;
        std::cerr << "perturbation: " << s.patches << " patches, " << s.bound_failures << " bound failures, "
                  << s.truncation_failures << " truncation failures; shrink: " << s.shrink_patches << " patches, "
                  << s.shrink_failures << " envelope failures\n";
    }
    if (c.analyses.probes) {
        const auto s = harness::run_probes(c, files);
        std::cerr << "probes: lclt decreasing " << s.lclt_decreasing << ", counting below envelope " << s.counting_below_envelope
                  << ", typical factorizes " << s.typical_factorizes << ", antitypical violates " << s.antitypical_violates << "\n";
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return finish(c, files, failures, std::max<std::size_t>(attempted, 1), seconds, command);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Quantum Sun spin-chain numerical lab"};
    app.require_subcommand(1);

    CommonFlags f;
    auto* run = app.add_subcommand("run-ensemble", "run a disorder ensemble with the selected analyses");
    add_common(run, f);
    run->add_option("--analyses", f.analyses, "comma list: patches,localization,stats,perturbation,probes");

    auto* trace = app.add_subcommand("dissolve-trace", "per-scale patch narrative for one realization");
    add_common(trace, f);
    trace->add_option("--realization", f.realization, "realization index");

    auto* st = app.add_subcommand("stats", "Laplace functional, density of states and gap ratio");
    add_common(st, f);
    auto* pc = app.add_subcommand("perturb-check", "perturbation series bounds on sampled patches");
    add_common(pc, f);
    auto* pr = app.add_subcommand("probes", "local CLT, counting, factorization and gap probes");
    add_common(pr, f);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (run->parsed()) {
            harness::RunConfig c = build_config(f);
            if (f.analyses.empty() && f.config.empty()) c.analyses.patches = c.analyses.stats = true;
            return run_ensemble_cmd(c, "run-ensemble");
        }
        if (st->parsed()) {
            harness::RunConfig c = build_config(f);
            c.analyses = {};
            c.analyses.stats = true;
            return run_ensemble_cmd(c, "stats");
        }
        if (pc->parsed()) {
            harness::RunConfig c = build_config(f);
            c.analyses = {};
            c.analyses.perturbation = true;
            harness::validate(c);
            return run_ensemble_cmd(c, "perturb-check");
        }
        if (pr->parsed()) {
            harness::RunConfig c = build_config(f);
            c.analyses = {};
            c.analyses.probes = true;
            return run_ensemble_cmd(c, "probes");
        }
        if (trace->parsed()) {
            harness::RunConfig c = build_config(f);
            const auto t0 = std::chrono::steady_clock::now();
            const auto path = c.out / ("dissolve_trace_" + std::to_string(f.realization) + ".csv");
            const std::size_t rows = harness::dissolve_trace(c, f.realization, path);
            const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            return finish(c, {{path.filename().string(), rows}}, {}, 1, seconds, "dissolve-trace");
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
