#pragma once

#include "qsun/resonance.hpp"
#include "qsun/spectral.hpp"

#include <Eigen/Dense>

#include <optional>
#include <vector>

namespace qsun::localization {

// Weight of psi on basis states agreeing with sigma at every site >= ell.
double tail_overlap(const Eigen::Ref<const Eigen::VectorXd>& psi, std::uint64_t sigma, int ell);

// 1 - tail_overlap, summed directly over the complementary states so that
// small values keep their relative precision.
double tail_defect(const Eigen::Ref<const Eigen::VectorXd>& psi, std::uint64_t sigma, int ell);

// Weight of psi on basis states with Z_i = -sigma(i).
double site_defect(const Eigen::Ref<const Eigen::VectorXd>& psi, std::uint64_t sigma, int site);

// Inverse participation ratio in the product basis.
double ipr(const Eigen::Ref<const Eigen::VectorXd>& psi);

// Smallest ell in [m_lo, top] such that A_{m,m+1} holds for every m in
// [ell, top-1]; nullopt (Unresolved) when A fails at the last step.
std::optional<int> ell_star(const resonance::PatchGenealogy& genealogy);

struct VectorReport {
    std::uint32_t label = 0;
    double ipr = 1.0;
    std::vector<double> tail_defects; // ell = n_B+1 .. n
    std::vector<double> site_defects; // site = n_B+1 .. n
};

struct LocalizationReport {
    int n_bath = 1;
    int n = 0;
    std::optional<int> ell_star;
    bool window_truncated = true; // ell_star is a finite-window proxy
    std::vector<VectorReport> vectors;

    double max_ipr() const;
};

// Requires the ladder's top scale to carry eigenvectors.
LocalizationReport localization_report(const spectral::SpectrumLadder& ladder, const resonance::PatchGenealogy& genealogy);

// max ipr <= C 2^{ell*}; false when ell* is unresolved.
bool ipr_bound_check(const LocalizationReport& report, double C);

// Smallest C for which ipr_bound_check holds, or nullopt when unresolved.
std::optional<double> fitted_ipr_constant(const LocalizationReport& report);

} // namespace qsun::localization
