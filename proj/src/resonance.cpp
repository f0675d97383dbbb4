#include "qsun/resonance.hpp"

#include "qsun/errors.hpp"

#include <algorithm>
#include <cmath>

namespace qsun::resonance {

double resonance_threshold(double alpha, double theta, int m)
{
    return model::power_of(alpha, theta * m);
}

std::map<std::size_t, std::size_t> PatchPartition::size_counts() const
{
    std::map<std::size_t, std::size_t> out;
    for (const auto& p : patches) ++out[p.size()];
    return out;
}

std::size_t PatchPartition::singleton_levels() const
{
    std::size_t n = 0;
    for (const auto& p : patches) n += p.size() == 1;
    return n;
}

PatchPartition partition_patches(std::span<const double> sorted, double threshold, int scale)
{
    PatchPartition out;
    out.scale = scale;
    out.threshold = threshold;
    out.levels = sorted.size();
    std::size_t start = 0;
    for (std::size_t j = 1; j <= sorted.size(); ++j) {
        if (j == sorted.size() || sorted[j] - sorted[j - 1] > threshold) {
            out.patches.push_back({start, j, sorted[start], sorted[j - 1]});
            start = j;
        }
    }
    return out;
}

bool event_A(const PatchPartition& partition, double h_next, double threshold)
{
    struct Hull {
        double lo, hi;
    };
    std::vector<Hull> hulls;
    hulls.reserve(2 * partition.patches.size());
    for (const auto& p : partition.patches) {
        hulls.push_back({p.lo + h_next, p.hi + h_next});
        hulls.push_back({p.lo - h_next, p.hi - h_next});
    }
    std::sort(hulls.begin(), hulls.end(), [](const Hull& a, const Hull& b) { return a.lo < b.lo || (a.lo == b.lo && a.hi < b.hi); });
    double reach = -INFINITY;
    for (const auto& h : hulls) {
        if (!(h.lo - reach > threshold)) return false;
        reach = std::max(reach, h.hi);
    }
    return true;
}

double min_pair_sum_distance(std::span<const double> sorted, double t)
{
    if (sorted.empty()) return INFINITY;
    std::size_t i = 0, j = sorted.size() - 1;
    double best = INFINITY;
    while (i <= j) {
        const double s = sorted[i] + sorted[j];
        best = std::min(best, std::abs(s - t));
        if (s < t) {
            ++i;
        } else {
            if (j == 0) break;
            --j;
        }
    }
    return best;
}

bool event_G(std::span<const double> sorted, double h_next, double threshold)
{
    return min_pair_sum_distance(sorted, 2.0 * h_next) > threshold && min_pair_sum_distance(sorted, -2.0 * h_next) > threshold;
}

PatchGenealogy trace_genealogy(const spectral::SpectrumLadder& ladder, double theta, int m0)
{
    if (m0 < ladder.n_bath || m0 > ladder.top) throw std::invalid_argument("trace_genealogy: m0 outside the ladder");
    const double alpha = ladder.alpha;
    PatchGenealogy gen;
    gen.m0 = m0;
    gen.top = ladder.top;
    for (int m = m0; m <= ladder.top; ++m)
        gen.partitions.push_back(partition_patches(ladder.at(m).eigenvalues, resonance_threshold(alpha, theta, m), m));

    struct Shifted {
        double lo, hi;
        std::size_t parent;
        int mu;
    };
    for (int m = m0; m < ladder.top; ++m) {
        const PatchPartition& parents = gen.at(m);
        const PatchPartition& children = gen.at(m + 1);
        const double h = ladder.h_at(m + 1);
        GenealogyStep step;
        step.m = m;
        step.A = event_A(parents, h, parents.threshold);
        step.G = event_G(ladder.at(m).eigenvalues, h, resonance_threshold(alpha, theta, m + 1));

        const double tol = model::power_of(alpha, m + 1) * (1.0 + 1e-6);
        std::vector<Shifted> shifted;
        shifted.reserve(2 * parents.patches.size());
        for (std::size_t p = 0; p < parents.patches.size(); ++p) {
            const auto& pp = parents.patches[p];
            shifted.push_back({pp.lo + h - tol, pp.hi + h + tol, p, +1});
            shifted.push_back({pp.lo - h - tol, pp.hi - h + tol, p, -1});
        }
        std::sort(shifted.begin(), shifted.end(), [](const Shifted& a, const Shifted& b) {
            if (a.lo != b.lo) return a.lo < b.lo;
            return a.parent < b.parent || (a.parent == b.parent && a.mu > b.mu);
        });
        std::vector<double> reach(shifted.size());
        for (std::size_t i = 0; i < shifted.size(); ++i) reach[i] = std::max(i ? reach[i - 1] : -INFINITY, shifted[i].hi);

        std::vector<std::size_t> child_count(2 * parents.patches.size(), 0);
        for (const auto& c : children.patches) {
            // candidates: shifted hulls with lo <= c.hi and hi >= c.lo
            auto last = std::upper_bound(shifted.begin(), shifted.end(), c.hi, [](double v, const Shifted& s) { return v < s.lo; });
            std::size_t matches = 0;
            const Shifted* match = nullptr;
            for (auto it = last; it != shifted.begin();) {
                --it;
                const auto idx = static_cast<std::size_t>(it - shifted.begin());
                if (reach[idx] < c.lo) break;
                if (it->hi >= c.lo) {
                    ++matches;
                    match = &*it;
                }
            }
            ChildOrigin origin;
            if (matches == 1) {
                origin.old = true;
                origin.parent = match->parent;
                origin.mu = match->mu;
                ++child_count[2 * match->parent + (match->mu > 0 ? 0 : 1)];
            } else {
                origin.old = false;
                origin.ambiguous = matches > 1;
                ++step.new_patches;
                if (matches > 1 && !step.A) ++step.ambiguous;
            }
            step.origins.push_back(origin);
        }
        for (std::size_t p = 0; p < parents.patches.size(); ++p)
            for (int s = 0; s < 2; ++s)
                if (parents.patches[p].size() > 1 && child_count[2 * p + static_cast<std::size_t>(s)] > 1) ++step.dissolutions;
        gen.steps.push_back(std::move(step));
    }
    return gen;
}

double alpha_tilde(double alpha, double theta)
{
    return 4.0 * model::power_of(alpha, 1.0 - theta);
}

double patch_bound_constant(double theta)
{
    return theta / (2.0 * (1.0 - theta));
}

double v_variable(double width, int m, double alpha, double theta)
{
    if (!(width > 1e-15)) throw ZeroWidth("patch width " + std::to_string(width) + " is degenerate");
    return std::log(width) / (m * std::log(alpha_tilde(alpha, theta)));
}

VPair v_ratio(double parent_width, double child_width, int m, double alpha, double theta)
{
    return {v_variable(parent_width, m - 1, alpha, theta), v_variable(child_width, m, alpha, theta)};
}

std::vector<std::pair<std::size_t, std::size_t>> antiresonant_index_pairs(std::span<const double> sorted, double threshold)
{
    std::vector<std::pair<std::size_t, std::size_t>> out;
    const std::size_t N = sorted.size();
    if (N == 0) return out;
    // For ascending i the window (-E_i - t, -E_i + t) moves left, so j runs downward.
    std::size_t hi = N; // first index with E_j >= -E_i + t
    std::size_t lo = N; // first index with E_j > -E_i - t
    for (std::size_t i = 0; i < N; ++i) {
        const double target = -sorted[i];
        while (hi > 0 && sorted[hi - 1] >= target + threshold) --hi;
        while (lo > 0 && sorted[lo - 1] > target - threshold) --lo;
        for (std::size_t j = lo; j < hi; ++j)
            if (std::abs(sorted[i] + sorted[j]) < threshold) out.emplace_back(i, j);
    }
    return out;
}

AntiResonanceSet antiresonance_set(const spectral::LabeledSpectrum& spectrum, double alpha, double theta)
{
    AntiResonanceSet out;
    out.scale = spectrum.scale;
    out.threshold = resonance_threshold(alpha, theta, spectrum.scale) / 4.0;
    for (const auto& [i, j] : antiresonant_index_pairs(spectrum.eigenvalues, out.threshold)) {
        out.pairs.emplace_back(spectrum.labels[i], spectrum.labels[j]);
        out.hits.push_back(spectrum.labels[i]);
    }
    std::sort(out.hits.begin(), out.hits.end());
    out.hits.erase(std::unique(out.hits.begin(), out.hits.end()), out.hits.end());
    out.hit_fraction = spectrum.size() ? static_cast<double>(out.hits.size()) / static_cast<double>(spectrum.size()) : 0.0;
    return out;
}

double ShrinkProbe::measure(double lambda) const
{
    std::size_t count = 0;
    for (double w : widths) count += w <= lambda * s0;
    return widths.empty() ? 0.0 : static_cast<double>(count) / static_cast<double>(widths.size());
}

double ShrinkProbe::envelope_first(double lambda) const
{
    const double nu = std::log(lambda) / (-a * m);
    return 32.0 * std::pow(lambda, 1.0 / (v_o + nu));
}

ShrinkProbe shrink_probability(const model::ModelParams& params, const model::DisorderRealization& disorder,
                               const spectral::SpectrumLadder& ladder, int m, std::size_t parent_index, int mu,
                               int grid_size)
{
    if (m - 1 < ladder.n_bath || m > ladder.top) throw std::invalid_argument("shrink_probability: scale outside the ladder");
    if (grid_size < 1) throw std::invalid_argument("shrink_probability: grid_size must be positive");
    const double theta = params.theta;
    const PatchPartition parents =
        partition_patches(ladder.at(m - 1).eigenvalues, resonance_threshold(params.alpha, theta, m - 1), m - 1);
    const double h = ladder.h_at(m);
    if (!event_A(parents, h, parents.threshold)) throw EventAViolated("A_{m-1,m} fails at m = " + std::to_string(m));
    const Patch& p = parents.patches.at(parent_index);
    if (p.size() < 2) throw std::invalid_argument("shrink_probability: parent patch must have at least two levels");

    // Under A the half-step spectrum keeps every shifted patch contiguous, so
    // S_{p,mu} occupies a fixed rank range of H_m(g) for all g.
    const std::vector<spectral::HalfLevel> half = ladder.half_step(m - 1);
    const double lo_value = p.lo + mu * h;
    std::size_t rank = 0;
    while (rank < half.size() && half[rank].value < lo_value) ++rank;
    // exact value match: the shifted copy is computed with the same arithmetic
    const std::size_t first = rank, last = rank + p.size() - 1;

    const model::HamiltonianMatrix H0 = model::assemble(params, disorder, model::Level::half(m - 1));
    const Eigen::MatrixXd V = model::coupling_operator(m) * model::power_of(params.alpha, m);

    ShrinkProbe out;
    out.m = m;
    out.s0 = p.width();
    out.a = -std::log(alpha_tilde(params.alpha, theta));
    out.v_o = v_variable(out.s0, m, params.alpha, theta);
    out.grid.resize(static_cast<std::size_t>(grid_size));
    out.widths.resize(static_cast<std::size_t>(grid_size));
    for (int k = 0; k < grid_size; ++k) {
        const double g = -0.5 + (k + 0.5) / grid_size;
        out.grid[static_cast<std::size_t>(k)] = g;
        const spectral::Eigensystem es = spectral::diagonalize(Eigen::MatrixXd(H0.entries + g * V), false);
        out.widths[static_cast<std::size_t>(k)] = es.values(static_cast<Eigen::Index>(last)) - es.values(static_cast<Eigen::Index>(first));
    }
    return out;
}

} // namespace qsun::resonance
