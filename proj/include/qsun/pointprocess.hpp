#pragma once

#include "qsun/model.hpp"
#include "qsun/spectral.hpp"
#include "qsun/stats.hpp"

#include <cstddef>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace qsun::pointprocess {

inline constexpr double default_window = 25.0;
// 2 ln 2 - 1
inline constexpr double poisson_gap_ratio = 0.38629436111989061883;

// s_n = (1/sqrt 12) 2^{-n} sqrt(2 pi n)
double mean_spacing(int n);

struct Interval {
    double lo = 0.0;
    double hi = 0.0; // half-open [lo, hi)
    double length() const { return hi > lo ? hi - lo : 0.0; }
    bool contains(double x) const { return x >= lo && x < hi; }
};

struct TestFunction {
    struct IndicatorSum {
        std::vector<std::pair<Interval, double>> terms; // (interval, height >= 0)
    };
    struct TriangularBump {
        double center = 0.0;
        double half_width = 1.0;
        double height = 1.0;
    };

    std::variant<IndicatorSum, TriangularBump> kind;
    std::string id;

    double operator()(double x) const;
    // Smallest C with supp(phi) inside [-C, C].
    double support_bound() const;
    // exp(-\int (1 - e^{-phi(x)}) dx), closed form.
    double poisson_reference() const;
};

// 1_[0,1], 1_[-2,-1] + 2 * 1_[1,3], triangular bump of height 1 and half-width 1 at 0.
std::vector<TestFunction> default_test_functions();

struct PointProcessSample {
    std::vector<double> energies; // raw eigenvalues inside the window, ascending
    double spacing = 1.0;         // s_n
    double offset = 0.0;          // energy around which the process is centred
    double window = default_window;
    std::size_t index = 0;

    // (E - offset) / s_n for every stored energy.
    std::vector<double> points() const;
    double point(std::size_t j) const { return (energies[j] - offset) / spacing; }
    // Inverse map; returns the stored energies for stored points.
    double energy_of(double x) const { return x * spacing + offset; }
};

PointProcessSample rescale(std::span<const double> spectrum, int n, double window = default_window, double offset = 0.0,
                           std::size_t index = 0);

// xi(phi) = sum_j phi(x_j) for one sample.
double evaluate(const PointProcessSample& sample, const TestFunction& phi);

struct LaplaceEstimate {
    std::string id;
    double estimate = 0.0;
    double se = 0.0;
    double reference = 0.0;
    std::size_t samples = 0;
};

LaplaceEstimate laplace_functional(std::span<const PointProcessSample> samples, const TestFunction& phi);

// Mean and SE of N_n(I) = #{j : x_j in I}.
stats::MeanSe dos_count(std::span<const PointProcessSample> samples, Interval interval);

struct SemiPerturbed {
    int n0 = 0;
    int n1 = 0;
    std::vector<double> values; // indexed by configuration label at scale n
    // max_eta |E_eta - tilde E_eta| when the ladder reaches scale n, else -1
    double certificate = -1.0;
    double bound = 0.0; // 2 alpha^{n0}
};

// tilde E_{(mu,sigma)} = E_mu(H_{n0}) + sum_{x > n0} sigma(x) h_x with n0 = floor(rho n).
// Throws SplitInvalid unless rho n > 2 n_B and n0 >= n_B.
SemiPerturbed semi_perturbed(const spectral::SpectrumLadder& ladder, const model::ModelParams& params);

struct GapRatioEstimate {
    double mean = 0.0;
    double se = 0.0;
    std::size_t ratios = 0;
};

// r_j = min(d_j, d_{j+1}) / max(d_j, d_{j+1}) for one sample.
std::vector<double> gap_ratios(const PointProcessSample& sample);
// Pooled mean over all samples with a jackknife over samples.
GapRatioEstimate gap_ratio(std::span<const PointProcessSample> samples);

} // namespace qsun::pointprocess
