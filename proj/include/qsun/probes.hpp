#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace qsun::probes {

// k configurations on m sites, each stored as a vector of packed 64-bit
// words (bit set <-> spin -1).
struct MultiConfiguration {
    int m = 0;
    std::vector<std::vector<std::uint64_t>> configs;

    int k() const { return static_cast<int>(configs.size()); }
    int spin(int which, int site) const; // site in 1..m
    // |J_tau| for tau in {+-1}^{k-1}; tau packed as bits (bit t set <-> tau_t = -1
    // for configuration t+2).
    std::vector<std::size_t> class_sizes() const;

    static MultiConfiguration from_spins(const std::vector<std::vector<int>>& spins);
};

enum class Typicality { Typical, Atypical, Degenerate };

// Typical iff every | |J_tau| - m / 2^{k-1} | <= m^exponent. Degenerate when
// some J_tau is empty because two configurations coincide up to a global
// sign (a linear dependence that empties a class identically).
Typicality typicality(const MultiConfiguration& multi, double exponent = 0.75);
bool is_typical_sizes(std::span<const std::size_t> sizes, int m, int k, double exponent = 0.75);

// Number of k-tuples whose class sizes are l: 2^m * m! / prod l_tau!.
long double tuples_with_sizes(int m, std::span<const std::size_t> sizes);
// Exact count of typical k-tuples summed over admissible class-size vectors.
long double typical_count(int m, int k, double exponent = 0.75);
// Exact atypical fraction from the multinomial sums, returned as log(fraction)
// (-inf when zero); feasible for k = 2 at any m and k = 3 for m up to a few hundred.
double log_atypical_fraction_exact(int m, int k, double exponent = 0.75);

struct FractionEstimate {
    double fraction = 0.0;
    double se = 0.0;
    std::uint64_t trials = 0;
};

// Monte Carlo over uniform k-tuples.
FractionEstimate atypical_fraction(int m, int k, std::uint64_t trials, std::uint64_t seed, double exponent = 0.75);

struct FactorizationResult {
    double joint = 0.0;   // P(all E^o_{sigma_i} in I_i)
    double product = 0.0; // Gaussian product reference, variance m/12
    double mc_err = 0.0;  // standard error of joint
    std::vector<double> marginals;
    double envelope = 0.0; // 2 mc_err + 0.05 prod |I_i| / sqrt(m)
};

// E^o_sigma = sum_x sigma(x) h_x with h uniform on [-1/2, 1/2].
FactorizationResult free_factorization(const MultiConfiguration& multi, const std::vector<std::pair<double, double>>& intervals,
                                       std::uint64_t trials, std::uint64_t seed);

// Gaussian mass of [a, b] with variance var.
double gaussian_mass(double a, double b, double var);

struct ConvolutionDensity {
    double step = 0.0;
    long long offset = 0;          // grid point j sits at x = (j - offset) * step
    std::vector<double> values;

    double x(std::size_t j) const { return (static_cast<double>(j) - static_cast<double>(offset)) * step; }
    double mass() const;
};

// Density of the uniform [-1/2,1/2] law on the grid (half weight at the jumps).
ConvolutionDensity uniform_density(double step);
// One more convolution with the uniform density (trapezoidal direct sum).
ConvolutionDensity convolve_uniform(const ConvolutionDensity& f);

// sup_x |f(x) - g_n(x)| on the grid, with g_n the centred Gaussian of variance n/12.
double sup_distance_to_gaussian(const ConvolutionDensity& f, int n);

struct LcltRow {
    int n = 0;
    double scaled_sup = 0.0; // sqrt(n) * sup distance at the requested step
    double scaled_sup_half = 0.0; // same at step / 2
    double mass_error = 0.0;      // max |mass - 1| over the iterations
};

// Throws GridTooCoarse if the step and step/2 results differ by more than 10%.
std::vector<LcltRow> lclt_check(const std::vector<int>& n_list, double step = 1e-3);

struct GapReport {
    double dmin = 0.0;  // min_{i != j} |E_i - E_j|
    double dplus = 0.0; // min_{i,j} |E_i + E_j|, i = j included
    bool zero_gap = false;
    bool zero_antigap = false;
};

GapReport gap_antigap(std::span<const double> spectrum);

} // namespace qsun::probes
