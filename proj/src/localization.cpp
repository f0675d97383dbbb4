#include "qsun/localization.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qsun::localization {

namespace {

std::uint64_t high_mask(Eigen::Index dim, int ell)
{
    const auto all = static_cast<std::uint64_t>(dim) - 1;
    return all & ~((1ULL << (ell - 1)) - 1);
}

} // namespace

double tail_overlap(const Eigen::Ref<const Eigen::VectorXd>& psi, std::uint64_t sigma, int ell)
{
    const std::uint64_t mask = high_mask(psi.size(), ell);
    const std::uint64_t target = sigma & mask;
    double w = 0.0;
    for (Eigen::Index k = 0; k < psi.size(); ++k)
        if ((static_cast<std::uint64_t>(k) & mask) == target) w += psi(k) * psi(k);
    return w;
}

double tail_defect(const Eigen::Ref<const Eigen::VectorXd>& psi, std::uint64_t sigma, int ell)
{
    const std::uint64_t mask = high_mask(psi.size(), ell);
    const std::uint64_t target = sigma & mask;
    double w = 0.0;
    for (Eigen::Index k = 0; k < psi.size(); ++k)
        if ((static_cast<std::uint64_t>(k) & mask) != target) w += psi(k) * psi(k);
    return w;
}

double site_defect(const Eigen::Ref<const Eigen::VectorXd>& psi, std::uint64_t sigma, int site)
{
    const std::uint64_t bit = 1ULL << (site - 1);
    const std::uint64_t target = sigma & bit;
    double w = 0.0;
    for (Eigen::Index k = 0; k < psi.size(); ++k)
        if ((static_cast<std::uint64_t>(k) & bit) != target) w += psi(k) * psi(k);
    return w;
}

double ipr(const Eigen::Ref<const Eigen::VectorXd>& psi)
{
    double s = 0.0;
    for (Eigen::Index k = 0; k < psi.size(); ++k) {
        const double p = psi(k) * psi(k);
        s += p * p;
    }
    return 1.0 / s;
}

std::optional<int> ell_star(const resonance::PatchGenealogy& genealogy)
{
    std::optional<int> best;
    for (int m = genealogy.top - 1; m >= genealogy.m0; --m) {
        if (!genealogy.step(m).A) break;
        best = m;
    }
    if (genealogy.top == genealogy.m0) best = genealogy.m0;
    return best;
}

double LocalizationReport::max_ipr() const
{
    double out = 0.0;
    for (const auto& v : vectors) out = std::max(out, v.ipr);
    return out;
}

LocalizationReport localization_report(const spectral::SpectrumLadder& ladder, const resonance::PatchGenealogy& genealogy)
{
    const spectral::LabeledSpectrum& top = ladder.at(ladder.top);
    if (!top.vectors) throw std::invalid_argument("localization_report: top scale has no eigenvectors");
    LocalizationReport rep;
    rep.n_bath = ladder.n_bath;
    rep.n = ladder.top;
    rep.ell_star = ell_star(genealogy);
    const Eigen::MatrixXd& V = *top.vectors;
    rep.vectors.resize(top.size());
    for (std::size_t j = 0; j < top.size(); ++j) {
        VectorReport& r = rep.vectors[j];
        const auto psi = V.col(static_cast<Eigen::Index>(j));
        r.label = top.labels[j];
        r.ipr = ipr(psi);
        for (int ell = ladder.n_bath + 1; ell <= ladder.top; ++ell) {
            r.tail_defects.push_back(tail_defect(psi, r.label, ell));
            r.site_defects.push_back(site_defect(psi, r.label, ell));
        }
    }
    return rep;
}

bool ipr_bound_check(const LocalizationReport& report, double C)
{
    if (!report.ell_star) return false;
    return report.max_ipr() <= C * std::ldexp(1.0, *report.ell_star);
}

std::optional<double> fitted_ipr_constant(const LocalizationReport& report)
{
    if (!report.ell_star) return std::nullopt;
    return report.max_ipr() / std::ldexp(1.0, *report.ell_star);
}

} // namespace qsun::localization
