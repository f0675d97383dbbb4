#pragma once

#include "qsun/model.hpp"
#include "qsun/spectral.hpp"

#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <vector>

namespace qsun::resonance {

// alpha^{theta m}, formed as exp(theta m ln alpha).
double resonance_threshold(double alpha, double theta, int m);

struct Patch {
    std::size_t begin = 0; // index range [begin, end) into the sorted spectrum
    std::size_t end = 0;
    double lo = 0.0;
    double hi = 0.0;

    std::size_t size() const { return end - begin; }
    double width() const { return hi - lo; }
};

struct PatchPartition {
    int scale = 0;
    double threshold = 0.0;
    std::size_t levels = 0;
    std::vector<Patch> patches;

    // k -> |P_{m,k}|
    std::map<std::size_t, std::size_t> size_counts() const;
    std::size_t singleton_levels() const;
};

// Maximal runs of consecutive eigenvalues with gaps <= threshold.
PatchPartition partition_patches(std::span<const double> sorted, double threshold, int scale = 0);

// Event A_{m,m+1}: all shifted patch hulls p + mu h stay farther apart than
// the threshold (strict).
bool event_A(const PatchPartition& partition, double h_next, double threshold);

// min over i, j of |E_i + E_j - t| for a sorted spectrum (i = j allowed).
double min_pair_sum_distance(std::span<const double> sorted, double t);

// Event G_{m,m+1}: min over pairs and nu = +-1 of |E + E' + 2 nu h| > threshold.
bool event_G(std::span<const double> sorted, double h_next, double threshold);

struct ChildOrigin {
    bool old = true;
    std::size_t parent = 0; // index into the parent partition (Old only)
    int mu = +1;
    bool ambiguous = false; // hull matched more than one shifted parent
};

struct GenealogyStep {
    int m = 0; // step m -> m+1
    bool A = false;
    bool G = false;
    std::vector<ChildOrigin> origins; // one per patch of P_{m+1}
    std::size_t new_patches = 0;
    std::size_t dissolutions = 0;     // shifted parents whose levels split over several children
    std::size_t ambiguous = 0;
};

struct PatchGenealogy {
    int m0 = 0;
    int top = 0;
    std::vector<PatchPartition> partitions; // scales m0..top
    std::vector<GenealogyStep> steps;       // steps m0 -> m0+1, ..., top-1 -> top

    const PatchPartition& at(int m) const { return partitions.at(static_cast<std::size_t>(m - m0)); }
    const GenealogyStep& step(int m) const { return steps.at(static_cast<std::size_t>(m - m0)); }
};

PatchGenealogy trace_genealogy(const spectral::SpectrumLadder& ladder, double theta, int m0);

// tilde alpha = 4 alpha^{1-theta}
double alpha_tilde(double alpha, double theta);
// C(theta) = theta / (2 (1 - theta))
double patch_bound_constant(double theta);
// v = ln(s) / (m ln tilde alpha); throws ZeroWidth for s <= 1e-15.
double v_variable(double width, int m, double alpha, double theta);

struct VPair {
    double v_parent; // v_{m-1}
    double v_child;  // v_m
};
VPair v_ratio(double parent_width, double child_width, int m, double alpha, double theta);

struct AntiResonanceSet {
    int scale = 0;
    double threshold = 0.0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs; // labels, symmetric list
    std::vector<std::uint32_t> hits;                             // sorted first components
    double hit_fraction = 0.0;
};

// Index pairs (i, j) of a sorted spectrum with |E_i + E_j| < threshold,
// both orders listed, i = j allowed.
std::vector<std::pair<std::size_t, std::size_t>> antiresonant_index_pairs(std::span<const double> sorted,
                                                                          double threshold);

// Pairs with |E_sigma + E_sigma'| < alpha^{theta m} / 4.
AntiResonanceSet antiresonance_set(const spectral::LabeledSpectrum& spectrum, double alpha, double theta);

struct ShrinkProbe {
    int m = 0;
    std::vector<double> grid;   // midpoints of a uniform partition of [-1/2, 1/2]
    std::vector<double> widths; // s_m(g) per grid point
    double s0 = 0.0;            // width at g = 0 (the parent width)
    double v_o = 0.0;           // v_{m-1} of the parent
    double a = 0.0;             // -ln tilde alpha

    // Riemann estimate of |{g : s_m(g) <= lambda s0}|.
    double measure(double lambda) const;
    // 32 lambda^{1/(v_o + nu)} with nu = ln(lambda) / (m ln tilde alpha).
    double envelope_first(double lambda) const;
};

// Widths of the child patch S_{p,mu} of a resonant parent p at scale m-1
// as g_m ranges over the grid (one diagonalization of H_m(g) per point).
// Requires A_{m-1,m}; throws EventAViolated otherwise.
ShrinkProbe shrink_probability(const model::ModelParams& params, const model::DisorderRealization& disorder,
                               const spectral::SpectrumLadder& ladder, int m, std::size_t parent_index, int mu,
                               int grid_size = 401);

} // namespace qsun::resonance
