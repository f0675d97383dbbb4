#pragma once

#include "qsun/localization.hpp"
#include "qsun/model.hpp"
#include "qsun/pointprocess.hpp"
#include "qsun/probes.hpp"
#include "qsun/stats.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace qsun::harness {

struct Analyses {
    bool patches = false;
    bool localization = false;
    bool stats = false;
    bool perturbation = false;
    bool probes = false;

    bool any_ladder() const { return patches || localization || stats; }
};

struct RunConfig {
    model::ModelParams model;
    std::size_t realizations = 1;
    std::uint64_t first_realization = 0;
    int scale_min = -1; // -1: n_B + 1
    int scale_max = -1; // -1: n
    Analyses analyses;
    std::filesystem::path out = "qsun-out";
    int workers = 1;
    int max_scale = model::default_max_scale;

    // stats
    double window = pointprocess::default_window;
    double energy_offset = 0.0;

    // perturbation
    std::size_t perturb_patches = 50;
    std::size_t shrink_patches = 20;
    std::size_t perturb_max_realizations = 100000;
    int series_order = 2;
    int contour_nodes = 256;
    int shrink_grid = 401;
    double truncation_floor = 1e-13;

    // probes
    std::vector<int> lclt_n = {2, 4, 16, 64, 256};
    double lclt_step = 1e-3;
    std::vector<int> counting_m = {64, 256, 1024};
    std::uint64_t probe_trials = 200000;
    int factorization_m = 400;

    bool dump_ladders = false;
    bool progress = false;

    int lo_scale() const { return scale_min < 0 ? model.n_bath + 1 : scale_min; }
    int hi_scale() const { return scale_max < 0 ? model.n : scale_max; }
};

// Throws ValidationError naming the field and its valid range.
void validate(const RunConfig& config);

// JSON schema (all keys optional, defaults as in RunConfig):
// { "model": { "n", "n_bath", "alpha", "theta", "rho", "seed", "rho_used" (output only, ignored),
//              "bath": { "kind": "default", "center", "half_gap", "norm_bound" }
//                    | { "kind": "explicit", "matrix": [[...]], "norm_bound" } },
//   "realizations", "first_realization", "scale_min", "scale_max",
//   "analyses": { "patches", "localization", "stats", "perturbation", "probes" },
//   "out", "workers", "max_scale", "window", "energy_offset",
//   "perturbation": { "patches", "shrink_patches", "max_realizations", "order",
//                     "contour_nodes", "shrink_grid", "truncation_floor" },
//   "probes": { "lclt_n", "lclt_step", "counting_m", "trials", "factorization_m" },
//   "dump_ladders" }
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& config);
RunConfig load_config(const std::filesystem::path& path);

// Everything one realization contributes.
struct RealizationResult {
    std::uint64_t index = 0;
    bool ok = false;
    std::string error;

    // ladder
    std::vector<double> max_deviation; // per scale n_B..n
    std::size_t ties = 0;

    // patches, per scale in the window
    std::vector<std::map<std::size_t, std::size_t>> size_counts;
    std::vector<double> antires_fraction;
    // per step m -> m+1 for m in [lo, hi-1]
    std::vector<char> A, G;
    std::vector<std::size_t> new_patches;

    // stats
    std::optional<pointprocess::PointProcessSample> sample;
    std::optional<pointprocess::PointProcessSample> semi_sample;
    double semi_certificate = -1.0;

    std::optional<localization::LocalizationReport> localization;
    std::optional<probes::GapReport> gaps;
};

RealizationResult run_realization(const RunConfig& config, std::uint64_t index);

struct PatchFraction {
    int scale = 0;
    std::size_t k = 0;
    std::size_t count = 0;         // sum over realizations of |P_{m,k}|
    stats::Moments fraction;       // per-realization k |P_{m,k}| / 2^m
};

struct EnsembleResult {
    RunConfig config;
    std::vector<RealizationResult> realizations; // successful ones, index order
    std::vector<std::pair<std::uint64_t, std::string>> failures;
    double wall_seconds = 0.0;

    std::vector<PatchFraction> patch_fractions;   // (scale, k) ascending
    std::vector<stats::Moments> antires;          // per scale in the window
    std::vector<std::size_t> A_counts, G_counts, new_patch_totals;

    std::vector<pointprocess::LaplaceEstimate> laplace, laplace_semi;
    stats::MeanSe dos;
    pointprocess::GapRatioEstimate gap_ratio;

    double failure_fraction() const;
    // Per-realization 1 - |P_{m,1}|/2^m at scale m.
    std::vector<double> nonsingleton(int m) const;
    std::vector<double> antires_at(int m) const;
};

// Runs all realizations on a pool of config.workers threads. Results are
// combined in realization order, so the outcome does not depend on the
// number of workers.
EnsembleResult run_ensemble(const RunConfig& config);

struct FileRecord {
    std::string name;
    std::size_t rows = 0;
};

// Writes one CSV per enabled analysis plus manifest.json into config.out.
std::vector<FileRecord> write_ensemble(const EnsembleResult& result);

// Perturbation pipeline: samples resonant patches of H_{n-1/2} over
// realizations and checks the series bounds and truncation error.
struct PerturbationSummary {
    std::size_t patches = 0;
    std::size_t shrink_patches = 0;
    std::size_t realizations_scanned = 0;
    std::size_t bound_failures = 0;
    std::size_t truncation_failures = 0;
    std::size_t shrink_failures = 0;
    std::vector<std::pair<std::uint64_t, std::string>> failures;
};
PerturbationSummary run_perturbation(const RunConfig& config, std::vector<FileRecord>& files);

struct ProbeSummary {
    bool lclt_decreasing = false;
    bool counting_below_envelope = false;
    bool typical_factorizes = false;
    bool antitypical_violates = false;
};
ProbeSummary run_probes(const RunConfig& config, std::vector<FileRecord>& files);

// One row per (scale, patch) for a single realization.
std::size_t dissolve_trace(const RunConfig& config, std::uint64_t realization, const std::filesystem::path& csv_path);

// Writes manifest.json: config echo, version, wall time, files with row
// counts and failures.
void write_manifest(const RunConfig& config, const std::vector<FileRecord>& files,
                    const std::vector<std::pair<std::uint64_t, std::string>>& failures, double wall_seconds,
                    const std::string& command);

// Default worker count: QSUN_WORKERS if set and positive, else 1.
int default_workers();

std::string version();

} // namespace qsun::harness
