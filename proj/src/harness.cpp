#include "qsun/harness.hpp"

#include "qsun/csv.hpp"
#include "qsun/errors.hpp"
#include "qsun/perturbation.hpp"
#include "qsun/resonance.hpp"
#include "qsun/rng.hpp"
#include "qsun/spectral.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#ifndef QSUN_VERSION
#define QSUN_VERSION "dev"
#endif

namespace qsun::harness {

using nlohmann::json;

std::string version() { return QSUN_VERSION; }

int default_workers()
{
    if (const char* env = std::getenv("QSUN_WORKERS")) {
        try {
            const int w = std::stoi(env);
            if (w > 0) return w;
        } catch (const std::exception&) {
        }
    }
    return 1;
}

void validate(const RunConfig& c)
{
    model::validate(c.model);
    if (c.realizations < 1) throw ValidationError("realizations must be >= 1");
    if (c.workers < 1 || c.workers > 1024) throw ValidationError("workers must be in [1, 1024], got " + std::to_string(c.workers));
    if (c.max_scale < 1 || c.max_scale > 20) throw ValidationError("max_scale must be in [1, 20]");
    if (c.model.n > c.max_scale && c.analyses.any_ladder())
        throw ValidationError("n = " + std::to_string(c.model.n) + " exceeds max_scale = " + std::to_string(c.max_scale) +
                              " (dense work is 2^n x 2^n)");
    const int lo = c.lo_scale(), hi = c.hi_scale();
    if (lo <= c.model.n_bath || lo > hi || hi > c.model.n)
        throw ValidationError("scale window [" + std::to_string(lo) + ", " + std::to_string(hi) + "] must satisfy n_B < scale_min <= scale_max <= n");
    if (!(c.window > 0.0)) throw ValidationError("window must be > 0");
    if (!std::isfinite(c.energy_offset)) throw ValidationError("energy_offset must be finite");
    if (c.series_order < 1 || c.series_order > 12) throw ValidationError("perturbation.order must be in [1, 12]");
    if (c.contour_nodes < 8 || c.contour_nodes > 4096) throw ValidationError("perturbation.contour_nodes must be in [8, 4096]");
    if (c.shrink_grid < 3) throw ValidationError("perturbation.shrink_grid must be >= 3");
    if (!(c.truncation_floor >= 0.0)) throw ValidationError("perturbation.truncation_floor must be >= 0");
    if (c.analyses.perturbation && (c.model.n < c.model.n_bath + 2 || c.model.n > 10))
        throw ValidationError("perturbation needs n_B + 2 <= n <= 10, got n = " + std::to_string(c.model.n));
    if (!(c.lclt_step > 0.0 && c.lclt_step <= 0.1)) throw ValidationError("probes.lclt_step must be in (0, 0.1]");
    if (!std::is_sorted(c.lclt_n.begin(), c.lclt_n.end()) || (!c.lclt_n.empty() && c.lclt_n.front() < 1))
        throw ValidationError("probes.lclt_n must be ascending positive integers");
    for (int m : c.counting_m)
        if (m < 1) throw ValidationError("probes.counting_m entries must be >= 1");
    if (c.probe_trials < 10000) throw ValidationError("probes.trials must be >= 10000");
    if (c.factorization_m < 2) throw ValidationError("probes.factorization_m must be >= 2");
}

namespace {

template <typename T>
void read_opt(const json& j, const char* key, T& target)
{
    if (j.contains(key) && !j.at(key).is_null()) target = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where)
{
    for (const auto& [k, v] : j.items()) {
        (void)v;
        if (std::find_if(keys.begin(), keys.end(), [&](const char* s) { return k == s; }) == keys.end())
            throw ValidationError("unknown config key '" + where + k + "'");
    }
}

} // namespace

RunConfig config_from_json(const json& j)
{
    RunConfig c;
    c.workers = default_workers();
    try {
        reject_unknown(j,
                       {"model", "realizations", "first_realization", "scale_min", "scale_max", "analyses", "out", "workers",
                        "max_scale", "window", "energy_offset", "perturbation", "probes", "dump_ladders"},
                       "");
        if (j.contains("model")) {
            const json& m = j.at("model");
            reject_unknown(m, {"n", "n_bath", "alpha", "theta", "rho", "seed", "bath", "rho_used"}, "model.");
            read_opt(m, "n", c.model.n);
            read_opt(m, "n_bath", c.model.n_bath);
            read_opt(m, "alpha", c.model.alpha);
            read_opt(m, "theta", c.model.theta);
            if (m.contains("rho") && !m.at("rho").is_null()) c.model.rho = m.at("rho").get<double>();
            read_opt(m, "seed", c.model.master_seed);
            if (m.contains("bath")) {
                const json& b = m.at("bath");
                reject_unknown(b, {"kind", "center", "half_gap", "matrix", "norm_bound"}, "model.bath.");
                read_opt(b, "norm_bound", c.model.bath.norm_bound);
                const std::string kind = b.value("kind", std::string("default"));
                if (kind == "default") {
                    model::BathSpec::DefaultDiagonal d;
                    read_opt(b, "center", d.center);
                    read_opt(b, "half_gap", d.half_gap);
                    c.model.bath.kind = d;
                } else if (kind == "explicit") {
                    const auto rows = b.at("matrix").get<std::vector<std::vector<double>>>();
                    Eigen::MatrixXd M(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.size()));
                    for (std::size_t r = 0; r < rows.size(); ++r) {
                        if (rows[r].size() != rows.size()) throw ValidationError("model.bath.matrix must be square");
                        for (std::size_t col = 0; col < rows.size(); ++col)
                            M(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(col)) = rows[r][col];
                    }
                    c.model.bath.kind = model::BathSpec::ExplicitMatrix{M};
                } else {
                    throw ValidationError("model.bath.kind must be 'default' or 'explicit', got '" + kind + "'");
                }
            }
        }
        read_opt(j, "realizations", c.realizations);
        read_opt(j, "first_realization", c.first_realization);
        read_opt(j, "scale_min", c.scale_min);
        read_opt(j, "scale_max", c.scale_max);
        if (j.contains("analyses")) {
            const json& a = j.at("analyses");
            reject_unknown(a, {"patches", "localization", "stats", "perturbation", "probes"}, "analyses.");
            read_opt(a, "patches", c.analyses.patches);
            read_opt(a, "localization", c.analyses.localization);
            read_opt(a, "stats", c.analyses.stats);
            read_opt(a, "perturbation", c.analyses.perturbation);
            read_opt(a, "probes", c.analyses.probes);
        }
        if (j.contains("out")) c.out = j.at("out").get<std::string>();
        read_opt(j, "workers", c.workers);
        read_opt(j, "max_scale", c.max_scale);
        read_opt(j, "window", c.window);
        read_opt(j, "energy_offset", c.energy_offset);
        if (j.contains("perturbation")) {
            const json& p = j.at("perturbation");
            reject_unknown(p, {"patches", "shrink_patches", "max_realizations", "order", "contour_nodes", "shrink_grid", "truncation_floor"},
                           "perturbation.");
            read_opt(p, "patches", c.perturb_patches);
            read_opt(p, "shrink_patches", c.shrink_patches);
            read_opt(p, "max_realizations", c.perturb_max_realizations);
            read_opt(p, "order", c.series_order);
            read_opt(p, "contour_nodes", c.contour_nodes);
            read_opt(p, "shrink_grid", c.shrink_grid);
            read_opt(p, "truncation_floor", c.truncation_floor);
        }
        if (j.contains("probes")) {
            const json& p = j.at("probes");
            reject_unknown(p, {"lclt_n", "lclt_step", "counting_m", "trials", "factorization_m"}, "probes.");
            read_opt(p, "lclt_n", c.lclt_n);
            read_opt(p, "lclt_step", c.lclt_step);
            read_opt(p, "counting_m", c.counting_m);
            read_opt(p, "trials", c.probe_trials);
            read_opt(p, "factorization_m", c.factorization_m);
        }
        read_opt(j, "dump_ladders", c.dump_ladders);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
    return c;
}

json config_to_json(const RunConfig& c)
{
    json bath;
    bath["norm_bound"] = c.model.bath.norm_bound;
    if (const auto* d = std::get_if<model::BathSpec::DefaultDiagonal>(&c.model.bath.kind)) {
        bath["kind"] = "default";
        bath["center"] = d->center;
        bath["half_gap"] = d->half_gap;
    } else {
        const auto& M = std::get<model::BathSpec::ExplicitMatrix>(c.model.bath.kind).entries;
        std::vector<std::vector<double>> rows(static_cast<std::size_t>(M.rows()));
        for (Eigen::Index r = 0; r < M.rows(); ++r)
            for (Eigen::Index col = 0; col < M.cols(); ++col) rows[static_cast<std::size_t>(r)].push_back(M(r, col));
        bath["kind"] = "explicit";
        bath["matrix"] = rows;
    }
    json j;
    j["model"] = {{"n", c.model.n},         {"n_bath", c.model.n_bath},
                  {"alpha", c.model.alpha}, {"theta", c.model.theta},
                  {"rho", c.model.rho ? json(*c.model.rho) : json(nullptr)},
                  {"rho_used", c.model.rho_value()},
                  {"seed", c.model.master_seed}, {"bath", bath}};
    j["realizations"] = c.realizations;
    j["first_realization"] = c.first_realization;
    j["scale_min"] = c.lo_scale();
    j["scale_max"] = c.hi_scale();
    j["analyses"] = {{"patches", c.analyses.patches},
                     {"localization", c.analyses.localization},
                     {"stats", c.analyses.stats},
                     {"perturbation", c.analyses.perturbation},
                     {"probes", c.analyses.probes}};
    j["out"] = c.out.string();
    j["max_scale"] = c.max_scale;
    j["window"] = c.window;
    j["energy_offset"] = c.energy_offset;
    j["perturbation"] = {{"patches", c.perturb_patches},
                         {"shrink_patches", c.shrink_patches},
                         {"max_realizations", c.perturb_max_realizations},
                         {"order", c.series_order},
                         {"contour_nodes", c.contour_nodes},
                         {"shrink_grid", c.shrink_grid},
                         {"truncation_floor", c.truncation_floor}};
    j["probes"] = {{"lclt_n", c.lclt_n},
                   {"lclt_step", c.lclt_step},
                   {"counting_m", c.counting_m},
                   {"trials", c.probe_trials},
                   {"factorization_m", c.factorization_m}};
    j["dump_ladders"] = c.dump_ladders;
    return j;
}

RunConfig load_config(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("config: cannot open " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j);
}

RealizationResult run_realization(const RunConfig& config, std::uint64_t index)
{
    RealizationResult r;
    r.index = index;
    const model::ModelParams& params = config.model;
    const model::DisorderRealization disorder = model::sample_disorder(params, index);
    const Analyses& an = config.analyses;

    if (an.any_ladder()) {
        spectral::LadderOptions opts;
        opts.top = params.n;
        opts.vectors_at_top = an.localization;
        opts.max_scale = config.max_scale;
        const spectral::SpectrumLadder ladder = spectral::label_ladder(params, disorder, opts);
        r.max_deviation = ladder.max_deviation;
        r.ties = ladder.ties;

        if (config.dump_ladders) {
            std::filesystem::create_directories(config.out / "ladders");
            std::ofstream f(config.out / "ladders" / ("ladder_" + std::to_string(index) + ".bin"), std::ios::binary);
            spectral::write_ladder(f, ladder);
        }

        const resonance::PatchGenealogy genealogy = resonance::trace_genealogy(ladder, params.theta, params.n_bath);
        const int lo = config.lo_scale(), hi = config.hi_scale();
        if (an.patches) {
            for (int m = lo; m <= hi; ++m) {
                r.size_counts.push_back(genealogy.at(m).size_counts());
                r.antires_fraction.push_back(resonance::antiresonance_set(ladder.at(m), params.alpha, params.theta).hit_fraction);
            }
            for (int m = lo; m < hi; ++m) {
                const resonance::GenealogyStep& s = genealogy.step(m);
                r.A.push_back(s.A);
                r.G.push_back(s.G);
                r.new_patches.push_back(s.new_patches);
            }
        }
        if (an.stats) {
            const spectral::LabeledSpectrum& top = ladder.at(params.n);
            r.sample = pointprocess::rescale(top.eigenvalues, params.n, config.window, config.energy_offset, index);
            pointprocess::SemiPerturbed semi = pointprocess::semi_perturbed(ladder, params);
            r.semi_certificate = semi.certificate;
            std::sort(semi.values.begin(), semi.values.end());
            r.semi_sample = pointprocess::rescale(semi.values, params.n, config.window, config.energy_offset, index);
        }
        if (an.localization) r.localization = localization::localization_report(ladder, genealogy);
        if (an.probes) r.gaps = probes::gap_antigap(ladder.at(params.n).eigenvalues);
    }
    r.ok = true;
    return r;
}

double EnsembleResult::failure_fraction() const
{
    const std::size_t total = realizations.size() + failures.size();
    return total ? static_cast<double>(failures.size()) / static_cast<double>(total) : 0.0;
}

std::vector<double> EnsembleResult::nonsingleton(int m) const
{
    const std::size_t slot = static_cast<std::size_t>(m - config.lo_scale());
    const double dim = std::ldexp(1.0, m);
    std::vector<double> out;
    for (const auto& r : realizations) {
        const auto& counts = r.size_counts.at(slot);
        const auto it = counts.find(1);
        out.push_back(1.0 - (it == counts.end() ? 0.0 : static_cast<double>(it->second)) / dim);
    }
    return out;
}

std::vector<double> EnsembleResult::antires_at(int m) const
{
    const std::size_t slot = static_cast<std::size_t>(m - config.lo_scale());
    std::vector<double> out;
    for (const auto& r : realizations) out.push_back(r.antires_fraction.at(slot));
    return out;
}

namespace {

// Mergeable per-realization aggregate for the patch analysis.
struct PatchAccumulator {
    std::map<std::pair<int, std::size_t>, std::pair<std::size_t, stats::Moments>> fractions;
    std::vector<stats::Moments> antires;
    std::vector<std::size_t> A, G, new_patches;

    void merge(const PatchAccumulator& o)
    {
        for (const auto& [key, v] : o.fractions) {
            auto& mine = fractions[key];
            mine.first += v.first;
            mine.second.merge(v.second);
        }
        if (antires.empty()) {
            antires = o.antires;
            A = o.A;
            G = o.G;
            new_patches = o.new_patches;
            return;
        }
        for (std::size_t i = 0; i < o.antires.size(); ++i) antires[i].merge(o.antires[i]);
        for (std::size_t i = 0; i < o.A.size(); ++i) {
            A[i] += o.A[i];
            G[i] += o.G[i];
            new_patches[i] += o.new_patches[i];
        }
    }
};

PatchAccumulator patch_contribution(const RealizationResult& r, int lo, int hi, const std::vector<std::size_t>& all_k)
{
    PatchAccumulator acc;
    for (int m = lo; m <= hi; ++m) {
        const auto& counts = r.size_counts[static_cast<std::size_t>(m - lo)];
        const double dim = std::ldexp(1.0, m);
        // every k seen anywhere in the ensemble gets a sample (zeros included)
        for (std::size_t k : all_k) {
            if (k > (std::size_t{1} << m)) continue;
            const auto it = counts.find(k);
            const std::size_t c = it == counts.end() ? 0 : it->second;
            auto& slot = acc.fractions[{m, k}];
            slot.first += c;
            slot.second.add(static_cast<double>(k * c) / dim);
        }
        stats::Moments a;
        a.add(r.antires_fraction[static_cast<std::size_t>(m - lo)]);
        acc.antires.push_back(a);
    }
    for (std::size_t i = 0; i < r.A.size(); ++i) {
        acc.A.push_back(r.A[i] ? 1 : 0);
        acc.G.push_back(r.G[i] ? 1 : 0);
        acc.new_patches.push_back(r.new_patches[i]);
    }
    return acc;
}

} // namespace

EnsembleResult run_ensemble(const RunConfig& config)
{
    validate(config);
    const auto t0 = std::chrono::steady_clock::now();
    const std::size_t R = config.realizations;
    std::vector<RealizationResult> slots(R);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> done{0};
    std::mutex progress_mutex;

    auto worker = [&]() {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= R) return;
            const std::uint64_t index = config.first_realization + i;
            try {
                slots[i] = run_realization(config, index);
            } catch (const std::exception& e) {
                slots[i] = RealizationResult{};
                slots[i].index = index;
                slots[i].error = e.what();
            }
            const std::size_t d = ++done;
            if (config.progress && (d % std::max<std::size_t>(1, R / 20) == 0 || d == R)) {
                std::lock_guard<std::mutex> lock(progress_mutex);
                std::cerr << "  realizations " << d << "/" << R << "\n";
            }
        }
    };
    const int nw = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(config.workers), R));
    if (nw <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < nw; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    EnsembleResult res;
    res.config = config;
    for (auto& s : slots) {
        if (s.ok)
            res.realizations.push_back(std::move(s));
        else
            res.failures.emplace_back(s.index, s.error);
    }

    const Analyses& an = config.analyses;
    if (an.patches && !res.realizations.empty()) {
        const int lo = config.lo_scale(), hi = config.hi_scale();
        std::vector<std::size_t> all_k;
        for (const auto& r : res.realizations)
            for (const auto& counts : r.size_counts)
                for (const auto& [k, c] : counts) {
                    (void)c;
                    all_k.push_back(k);
                }
        std::sort(all_k.begin(), all_k.end());
        all_k.erase(std::unique(all_k.begin(), all_k.end()), all_k.end());
        std::vector<PatchAccumulator> parts;
        for (const auto& r : res.realizations) parts.push_back(patch_contribution(r, lo, hi, all_k));
        const PatchAccumulator total =
            stats::tree_reduce(std::move(parts), [](PatchAccumulator& a, const PatchAccumulator& b) { a.merge(b); });
        for (const auto& [key, v] : total.fractions) res.patch_fractions.push_back({key.first, key.second, v.first, v.second});
        res.antires = total.antires;
        res.A_counts = total.A;
        res.G_counts = total.G;
        res.new_patch_totals = total.new_patches;
    }
    if (an.stats && !res.realizations.empty()) {
        std::vector<pointprocess::PointProcessSample> samples, semi;
        for (const auto& r : res.realizations) {
            samples.push_back(*r.sample);
            semi.push_back(*r.semi_sample);
        }
        for (const auto& phi : pointprocess::default_test_functions()) {
            if (phi.support_bound() > config.window) continue;
            res.laplace.push_back(pointprocess::laplace_functional(samples, phi));
            res.laplace_semi.push_back(pointprocess::laplace_functional(semi, phi));
        }
        res.dos = pointprocess::dos_count(samples, {-1.0, 1.0});
        res.gap_ratio = pointprocess::gap_ratio(samples);
    }
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return res;
}

std::vector<FileRecord> write_ensemble(const EnsembleResult& res)
{
    const RunConfig& c = res.config;
    std::filesystem::create_directories(c.out);
    std::vector<FileRecord> files;
    const Analyses& an = c.analyses;
    const double alpha = c.model.alpha;
    const int n = c.model.n;

    if (an.any_ladder()) {
        csv::Writer w(c.out / "ladder_checks.csv", "ladder_checks", {"realization", "scale", "max_deviation", "bound", "ties"});
        for (const auto& r : res.realizations)
            for (std::size_t s = 0; s < r.max_deviation.size(); ++s) {
                const int m = c.model.n_bath + static_cast<int>(s);
                w.cell(static_cast<long long>(r.index)).cell(m).cell(r.max_deviation[s]);
                w.cell(s == 0 ? 0.0 : model::power_of(alpha, m) + 1e-12).cell(s == 0 ? r.ties : std::size_t{0});
                w.end_row();
            }
        files.push_back({"ladder_checks.csv", w.rows()});
    }
    if (an.patches) {
        {
            csv::Writer w(c.out / "patch_fractions.csv", "patch_fractions", {"scale", "k", "count", "fraction", "se"});
            for (const auto& pf : res.patch_fractions) {
                w.cell(pf.scale).cell(pf.k).cell(pf.count).cell(pf.fraction.mean()).cell(pf.fraction.se());
                w.end_row();
            }
            files.push_back({"patch_fractions.csv", w.rows()});
        }
        {
            csv::Writer w(c.out / "genealogy_events.csv", "genealogy_events", {"step", "A_holds", "G_holds", "new_patches"});
            for (std::size_t i = 0; i < res.A_counts.size(); ++i) {
                w.cell(c.lo_scale() + static_cast<int>(i)).cell(res.A_counts[i]).cell(res.G_counts[i]).cell(res.new_patch_totals[i]);
                w.end_row();
            }
            files.push_back({"genealogy_events.csv", w.rows()});
        }
        {
            csv::Writer w(c.out / "antires.csv", "antires", {"scale", "hit_fraction", "se"});
            for (std::size_t i = 0; i < res.antires.size(); ++i) {
                w.cell(c.lo_scale() + static_cast<int>(i)).cell(res.antires[i].mean()).cell(res.antires[i].se());
                w.end_row();
            }
            files.push_back({"antires.csv", w.rows()});
        }
    }
    if (an.stats) {
        {
            csv::Writer w(c.out / "laplace.csv", "laplace", {"phi_id", "n", "alpha", "estimate", "se", "reference"});
            for (const auto& e : res.laplace) {
                w.cell(e.id).cell(n).cell(alpha).cell(e.estimate).cell(e.se).cell(e.reference);
                w.end_row();
            }
            for (const auto& e : res.laplace_semi) {
                w.cell(e.id + "@semi").cell(n).cell(alpha).cell(e.estimate).cell(e.se).cell(e.reference);
                w.end_row();
            }
            files.push_back({"laplace.csv", w.rows()});
        }
        {
            csv::Writer w(c.out / "dos.csv", "dos", {"interval", "mean", "se"});
            w.cell("[-1,1)").cell(res.dos.mean).cell(res.dos.se);
            w.end_row();
            files.push_back({"dos.csv", w.rows()});
        }
        {
            csv::Writer w(c.out / "rstat.csv", "rstat", {"n", "alpha", "mean", "se"});
            w.cell(n).cell(alpha).cell(res.gap_ratio.mean).cell(res.gap_ratio.se);
            w.end_row();
            files.push_back({"rstat.csv", w.rows()});
        }
    }
    if (an.localization) {
        csv::Writer w(c.out / "localization.csv", "localization", {"realization", "sigma", "ipr", "ell", "tail_overlap", "tail_defect"});
        csv::Writer s(c.out / "localization_summary.csv", "localization_summary", {"realization", "ell_star", "max_ipr", "fitted_C"});
        for (const auto& r : res.realizations) {
            const auto& rep = *r.localization;
            for (const auto& v : rep.vectors)
                for (std::size_t t = 0; t < v.tail_defects.size(); ++t) {
                    w.cell(static_cast<long long>(r.index)).cell(static_cast<long long>(v.label)).cell(v.ipr);
                    w.cell(rep.n_bath + 1 + static_cast<int>(t)).cell(1.0 - v.tail_defects[t]).cell(v.tail_defects[t]);
                    w.end_row();
                }
            const auto C = localization::fitted_ipr_constant(rep);
            s.cell(static_cast<long long>(r.index)).cell(rep.ell_star ? *rep.ell_star : -1).cell(rep.max_ipr());
            s.cell(C ? *C : std::nan(""));
            s.end_row();
        }
        files.push_back({"localization.csv", w.rows()});
        files.push_back({"localization_summary.csv", s.rows()});
    }
    if (an.probes) {
        csv::Writer w(c.out / "probes_gaps.csv", "probes_gaps", {"realization", "dmin", "dplus"});
        for (const auto& r : res.realizations) {
            w.cell(static_cast<long long>(r.index)).cell(r.gaps->dmin).cell(r.gaps->dplus);
            w.end_row();
        }
        files.push_back({"probes_gaps.csv", w.rows()});
    }
    if (!res.failures.empty()) {
        csv::Writer w(c.out / "failures.csv", "failures", {"realization", "error"});
        for (const auto& [idx, msg] : res.failures) {
            std::string clean = msg;
            std::replace(clean.begin(), clean.end(), ',', ';');
            std::replace(clean.begin(), clean.end(), '\n', ' ');
            w.cell(static_cast<long long>(idx)).cell(clean);
            w.end_row();
        }
        files.push_back({"failures.csv", w.rows()});
    }
    return files;
}

namespace {

struct PatchRow {
    std::size_t patch_id;
    std::string kind;
    int k;
    double norm;
    double bound;
    bool ok;
};

double safe_pow_bound(double base, double exponent)
{
    return std::isfinite(base) ? std::pow(base, exponent) : std::numeric_limits<double>::infinity();
}

} // namespace

PerturbationSummary run_perturbation(const RunConfig& config, std::vector<FileRecord>& files)
{
    validate(config);
    std::filesystem::create_directories(config.out);
    const model::ModelParams& params = config.model;
    const int n = params.n;
    const int K = config.series_order;
    const double at = resonance::alpha_tilde(params.alpha, params.theta);
    const double at_n = model::power_of(at, n);

    csv::Writer check(config.out / "perturb_check.csv", "perturb_check", {"patch_id", "kind", "k", "coeff_norm", "bound", "ok"});
    csv::Writer patches(config.out / "perturb_patches.csv", "perturb_patches",
                        {"patch_id", "realization", "scale", "first", "size", "width", "g", "order", "error", "stated_bound",
                         "predicted", "ok"});
    csv::Writer shrink(config.out / "shrink_check.csv", "shrink_check",
                       {"patch_id", "realization", "scale", "s0", "lambda", "measure", "envelope", "ok"});

    PerturbationSummary sum;
    std::size_t next_id = 0;
    for (std::uint64_t idx = config.first_realization;
         idx < config.first_realization + config.perturb_max_realizations &&
         (sum.patches < config.perturb_patches || sum.shrink_patches < config.shrink_patches);
         ++idx) {
        ++sum.realizations_scanned;
        try {
            const model::DisorderRealization disorder = model::sample_disorder(params, idx);
            if (sum.patches < config.perturb_patches) {
                const perturbation::PatchProblem base = perturbation::make_patch_problem(params, disorder, n, 0, 1);
                const std::vector<double> d(base.d.data(), base.d.data() + base.d.size());
                const resonance::PatchPartition part =
                    resonance::partition_patches(d, resonance::resonance_threshold(params.alpha, params.theta, n - 1), n - 1);
                std::vector<std::size_t> resonant;
                for (std::size_t j = 0; j < part.patches.size(); ++j)
                    if (part.patches[j].size() >= 2) resonant.push_back(j);
                // one patch per realization keeps the sample spread over disorder
                if (!resonant.empty()) {
                    const std::size_t pick =
                        resonant[rng::hash_key(params.master_seed, idx, 0, 0x9A7C) % resonant.size()];
                    const resonance::Patch& p = part.patches[pick];
                    perturbation::PatchProblem prob = base;
                    prob.first = p.begin;
                    prob.k = p.size();
                    const std::size_t id = next_id++;
                    const perturbation::BmoSeries bmo = perturbation::series_Bmo(prob, K + 2, config.contour_nodes, false);
                    const perturbation::ProjectedSeries ser = perturbation::projected_hamiltonian_series(prob, bmo, K + 2, false);
                    std::vector<PatchRow> rows;
                    for (int m = 1; m < static_cast<int>(bmo.norms.size()); ++m)
                        rows.push_back({id, "Bmo", m, bmo.norms[static_cast<std::size_t>(m)], bmo.bounds[static_cast<std::size_t>(m)],
                                        bmo.norms[static_cast<std::size_t>(m)] <= bmo.bounds[static_cast<std::size_t>(m)]});
                    for (int m = 1; m < static_cast<int>(ser.R_norms.size()); ++m) {
                        const auto sm = static_cast<std::size_t>(m);
                        rows.push_back({id, "R", m, ser.R_norms[sm], ser.RL_bounds[sm], ser.R_norms[sm] <= ser.RL_bounds[sm]});
                        rows.push_back({id, "L", m, ser.L_norms[sm], ser.RL_bounds[sm], ser.L_norms[sm] <= ser.RL_bounds[sm]});
                    }
                    for (int m = 1; m < static_cast<int>(ser.Bt_norms.size()); ++m) {
                        const auto sm = static_cast<std::size_t>(m);
                        rows.push_back({id, "Bt", m, ser.Bt_norms[sm], ser.Bt_bounds[sm], ser.Bt_norms[sm] <= ser.Bt_bounds[sm]});
                    }
                    for (const auto& row : rows) {
                        check.cell(row.patch_id).cell(row.kind).cell(row.k).cell(row.norm).cell(row.bound).cell(row.ok);
                        check.end_row();
                        if (!row.ok) ++sum.bound_failures;
                    }

                    // truncation at order K against direct diagonalization
                    const double gn = disorder.g_at(n);
                    for (double g : {gn, 0.5}) {
                        const Eigen::VectorXd direct = prob.direct_patch_spectrum(g);
                        const Eigen::VectorXd series = ser.spectrum(g, K);
                        const double err = (direct - series).cwiseAbs().maxCoeff();
                        const double stated =
                            at_n < 1.0 ? 2.0 * safe_pow_bound(at, static_cast<double>(n) * (K + 1)) / (1.0 - at_n)
                                       : std::numeric_limits<double>::infinity();
                        const double tail1 = std::pow(std::abs(g), K + 1) * ser.Bt_norms[static_cast<std::size_t>(K + 1)];
                        const double tail2 = std::pow(std::abs(g), K + 2) * ser.Bt_norms[static_cast<std::size_t>(K + 2)];
                        const double predicted = 2.0 * std::max(tail1, tail2) + config.truncation_floor;
                        const bool ok = err <= stated && err <= predicted;
                        if (!ok) ++sum.truncation_failures;
                        patches.cell(id).cell(static_cast<long long>(idx)).cell(n - 1).cell(p.begin).cell(p.size()).cell(p.width());
                        patches.cell(g).cell(K).cell(err).cell(stated).cell(predicted).cell(ok);
                        patches.end_row();
                    }
                    ++sum.patches;
                }
            }
            if (sum.shrink_patches < config.shrink_patches) {
                spectral::LadderOptions opts;
                opts.top = n;
                const spectral::SpectrumLadder ladder = spectral::label_ladder(params, disorder, opts);
                const resonance::PatchPartition parents = resonance::partition_patches(
                    ladder.at(n - 1).eigenvalues, resonance::resonance_threshold(params.alpha, params.theta, n - 1), n - 1);
                if (!resonance::event_A(parents, ladder.h_at(n), parents.threshold)) continue;
                for (std::size_t pi = 0; pi < parents.patches.size(); ++pi) {
                    if (parents.patches[pi].size() != 2) continue;
                    const std::size_t id = next_id++;
                    const int mu = rng::to_unit(rng::hash_key(params.master_seed, idx, pi, 0x5A)) < 0.5 ? +1 : -1;
                    const resonance::ShrinkProbe probe =
                        resonance::shrink_probability(params, disorder, ladder, n, pi, mu, config.shrink_grid);
                    for (double lambda : {0.5, 0.1, 0.01}) {
                        const double meas = probe.measure(lambda);
                        const double env = probe.envelope_first(lambda);
                        const bool ok = meas <= env;
                        if (!ok) ++sum.shrink_failures;
                        shrink.cell(id).cell(static_cast<long long>(idx)).cell(n).cell(probe.s0).cell(lambda).cell(meas).cell(env).cell(ok);
                        shrink.end_row();
                    }
                    ++sum.shrink_patches;
                    break;
                }
            }
        } catch (const std::exception& e) {
            sum.failures.emplace_back(idx, e.what());
        }
    }
    files.push_back({"perturb_check.csv", check.rows()});
    files.push_back({"perturb_patches.csv", patches.rows()});
    files.push_back({"shrink_check.csv", shrink.rows()});
    return sum;
}

ProbeSummary run_probes(const RunConfig& config, std::vector<FileRecord>& files)
{
    validate(config);
    std::filesystem::create_directories(config.out);
    ProbeSummary sum;

    {
        csv::Writer w(config.out / "probes_lclt.csv", "probes_lclt", {"n", "scaled_sup", "scaled_sup_half", "mass_error"});
        const auto rows = probes::lclt_check(config.lclt_n, config.lclt_step);
        sum.lclt_decreasing = true;
        for (std::size_t i = 0; i < rows.size(); ++i) {
            w.cell(rows[i].n).cell(rows[i].scaled_sup).cell(rows[i].scaled_sup_half).cell(rows[i].mass_error);
            w.end_row();
            if (i > 0 && rows[i].n > 2 && rows[i - 1].n > 2 && !(rows[i].scaled_sup < rows[i - 1].scaled_sup)) sum.lclt_decreasing = false;
        }
        files.push_back({"probes_lclt.csv", w.rows()});
    }
    {
        csv::Writer w(config.out / "probes_counting.csv", "probes_counting",
                      {"m", "k", "exact_fraction", "mc_fraction", "mc_se", "envelope", "ok"});
        sum.counting_below_envelope = true;
        for (int m : config.counting_m) {
            const double exact = std::exp(probes::log_atypical_fraction_exact(m, 2));
            const auto mc = probes::atypical_fraction(m, 2, config.probe_trials, config.model.master_seed ^ 0xC0FFEEULL);
            const double env = std::exp(-std::pow(static_cast<double>(m), 0.45));
            const bool ok = exact < env;
            if (!ok) sum.counting_below_envelope = false;
            w.cell(m).cell(2).cell(exact).cell(mc.fraction).cell(mc.se).cell(env).cell(ok);
            w.end_row();
        }
        files.push_back({"probes_counting.csv", w.rows()});
    }
    {
        csv::Writer w(config.out / "probes_factorization.csv", "probes_factorization",
                      {"m", "k", "pair", "joint", "product", "mc_err", "envelope"});
        const int m = config.factorization_m;
        // typical pair drawn from the seed, rejecting atypical draws
        rng::Stream stream(config.model.master_seed, 0xFAC7);
        std::vector<std::vector<int>> spins(2, std::vector<int>(static_cast<std::size_t>(m)));
        probes::MultiConfiguration typical;
        for (;;) {
            for (auto& s : spins)
                for (auto& x : s) x = stream.uniform() < 0.5 ? 1 : -1;
            typical = probes::MultiConfiguration::from_spins(spins);
            if (probes::typicality(typical) == probes::Typicality::Typical) break;
        }
        const double sd = std::sqrt(m / 12.0);
        const std::vector<std::pair<double, double>> iv = {{0.0, sd}, {-0.5 * sd, 0.5 * sd}};
        const auto t = probes::free_factorization(typical, iv, config.probe_trials, config.model.master_seed ^ 0x7E1ULL);
        w.cell(m).cell(2).cell("typical").cell(t.joint).cell(t.product).cell(t.mc_err).cell(t.envelope);
        w.end_row();
        sum.typical_factorizes = std::abs(t.joint - t.product) <= t.envelope;

        for (auto& x : spins[1]) x = 0;
        for (std::size_t i = 0; i < spins[0].size(); ++i) spins[1][i] = -spins[0][i];
        const auto anti_multi = probes::MultiConfiguration::from_spins(spins);
        const std::vector<std::pair<double, double>> same = {{0.0, sd}, {0.0, sd}};
        const auto a = probes::free_factorization(anti_multi, same, config.probe_trials, config.model.master_seed ^ 0xA17ULL);
        w.cell(m).cell(2).cell("antitypical").cell(a.joint).cell(a.product).cell(a.mc_err).cell(a.envelope);
        w.end_row();
        sum.antitypical_violates = std::abs(a.joint - a.product) > a.envelope;
        files.push_back({"probes_factorization.csv", w.rows()});
    }
    return sum;
}

std::size_t dissolve_trace(const RunConfig& config, std::uint64_t realization, const std::filesystem::path& csv_path)
{
    validate(config);
    const model::ModelParams& params = config.model;
    const model::DisorderRealization disorder = model::sample_disorder(params, realization);
    spectral::LadderOptions opts;
    opts.top = config.hi_scale();
    opts.max_scale = config.max_scale;
    const spectral::SpectrumLadder ladder = spectral::label_ladder(params, disorder, opts);
    if (config.dump_ladders) {
        std::filesystem::create_directories(config.out / "ladders");
        std::ofstream f(config.out / "ladders" / ("ladder_" + std::to_string(realization) + ".bin"), std::ios::binary);
        spectral::write_ladder(f, ladder);
    }
    const int lo = config.lo_scale();
    const resonance::PatchGenealogy gen = resonance::trace_genealogy(ladder, params.theta, lo);

    if (csv_path.has_parent_path()) std::filesystem::create_directories(csv_path.parent_path());
    csv::Writer w(csv_path, "dissolve_trace", {"scale", "patch", "size", "width", "v", "origin", "parent", "mu", "A", "G"});
    for (int m = lo; m <= gen.top; ++m) {
        const resonance::PatchPartition& part = gen.at(m);
        for (std::size_t j = 0; j < part.patches.size(); ++j) {
            const resonance::Patch& p = part.patches[j];
            w.cell(m).cell(j).cell(p.size()).cell(p.width());
            if (p.size() > 1 && p.width() > 1e-15)
                w.cell(resonance::v_variable(p.width(), m, params.alpha, params.theta));
            else
                w.cell("");
            if (m == lo) {
                w.cell("base").cell(-1).cell(0).cell("").cell("");
            } else {
                const resonance::GenealogyStep& s = gen.step(m - 1);
                const resonance::ChildOrigin& o = s.origins[j];
                w.cell(o.old ? "old" : (o.ambiguous ? "new_merged" : "new"));
                w.cell(o.old ? static_cast<long long>(o.parent) : -1LL).cell(o.old ? o.mu : 0);
                w.cell(s.A).cell(s.G);
            }
            w.end_row();
        }
    }
    return w.rows();
}

void write_manifest(const RunConfig& config, const std::vector<FileRecord>& files,
                    const std::vector<std::pair<std::uint64_t, std::string>>& failures, double wall_seconds,
                    const std::string& command)
{
    std::filesystem::create_directories(config.out);
    json j;
    j["command"] = command;
    j["version"] = version();
    j["config"] = config_to_json(config);
    j["wall_seconds"] = wall_seconds;
    json fl = json::array();
    for (const auto& f : files) fl.push_back({{"name", f.name}, {"rows", f.rows}, {"schema_version", csv::schema_version}});
    j["files"] = fl;
    json fail = json::array();
    for (const auto& [idx, msg] : failures) fail.push_back({{"realization", idx}, {"error", msg}});
    j["failures"] = fail;
    std::ofstream out(config.out / "manifest.json");
    out << j.dump(2) << "\n";
}

} // namespace qsun::harness
