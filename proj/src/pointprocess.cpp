#include "qsun/pointprocess.hpp"

#include "qsun/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace qsun::pointprocess {

double mean_spacing(int n)
{
    return std::sqrt(1.0 / 12.0) * std::ldexp(1.0, -n) * std::sqrt(2.0 * std::numbers::pi * n);
}

double TestFunction::operator()(double x) const
{
    if (const auto* s = std::get_if<IndicatorSum>(&kind)) {
        double v = 0.0;
        for (const auto& [I, b] : s->terms)
            if (I.contains(x)) v += b;
        return v;
    }
    const auto& t = std::get<TriangularBump>(kind);
    const double u = std::abs(x - t.center) / t.half_width;
    return u < 1.0 ? t.height * (1.0 - u) : 0.0;
}

double TestFunction::support_bound() const
{
    double c = 0.0;
    if (const auto* s = std::get_if<IndicatorSum>(&kind)) {
        for (const auto& [I, b] : s->terms)
            if (b > 0.0 && I.length() > 0.0) c = std::max({c, std::abs(I.lo), std::abs(I.hi)});
        return c;
    }
    const auto& t = std::get<TriangularBump>(kind);
    return std::abs(t.center) + t.half_width;
}

double TestFunction::poisson_reference() const
{
    if (const auto* s = std::get_if<IndicatorSum>(&kind)) {
        // phi is piecewise constant between the interval endpoints
        std::vector<double> cuts;
        for (const auto& [I, b] : s->terms) {
            cuts.push_back(I.lo);
            cuts.push_back(I.hi);
        }
        std::sort(cuts.begin(), cuts.end());
        cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());
        double integral = 0.0;
        for (std::size_t i = 0; i + 1 < cuts.size(); ++i) {
            const double mid = 0.5 * (cuts[i] + cuts[i + 1]);
            integral += (cuts[i + 1] - cuts[i]) * (1.0 - std::exp(-(*this)(mid)));
        }
        return std::exp(-integral);
    }
    const auto& t = std::get<TriangularBump>(kind);
    if (t.height == 0.0) return 1.0;
    // \int_{-w}^{w} (1 - e^{-h(1-|x|/w)}) dx = 2w (1 - (1 - e^{-h}) / h)
    return std::exp(-2.0 * t.half_width * (1.0 + std::expm1(-t.height) / t.height));
}

std::vector<TestFunction> default_test_functions()
{
    std::vector<TestFunction> out;
    out.push_back({TestFunction::IndicatorSum{{{Interval{0.0, 1.0}, 1.0}}}, "ind_0_1"});
    out.push_back({TestFunction::IndicatorSum{{{Interval{-2.0, -1.0}, 1.0}, {Interval{1.0, 3.0}, 2.0}}}, "ind_pair"});
    out.push_back({TestFunction::TriangularBump{0.0, 1.0, 1.0}, "bump_0"});
    return out;
}

std::vector<double> PointProcessSample::points() const
{
    std::vector<double> x(energies.size());
    for (std::size_t j = 0; j < energies.size(); ++j) x[j] = point(j);
    return x;
}

PointProcessSample rescale(std::span<const double> spectrum, int n, double window, double offset, std::size_t index)
{
    PointProcessSample s;
    s.spacing = mean_spacing(n);
    s.offset = offset;
    s.window = window;
    s.index = index;
    for (double e : spectrum)
        if (std::abs((e - offset) / s.spacing) <= window) s.energies.push_back(e);
    std::sort(s.energies.begin(), s.energies.end());
    return s;
}

double evaluate(const PointProcessSample& sample, const TestFunction& phi)
{
    double v = 0.0;
    for (std::size_t j = 0; j < sample.energies.size(); ++j) v += phi(sample.point(j));
    return v;
}

LaplaceEstimate laplace_functional(std::span<const PointProcessSample> samples, const TestFunction& phi)
{
    if (samples.size() < 2) throw std::invalid_argument("laplace_functional: need at least two samples");
    for (const auto& s : samples)
        if (phi.support_bound() > s.window)
            throw SupportExceedsWindow("support bound " + std::to_string(phi.support_bound()) + " exceeds window " +
                                       std::to_string(s.window));
    std::vector<double> values(samples.size());
    for (std::size_t r = 0; r < samples.size(); ++r) values[r] = std::exp(-evaluate(samples[r], phi));
    double total = 0.0;
    for (double v : values) total += v;
    const double N = static_cast<double>(values.size());
    const stats::MeanSe est = stats::jackknife(
        values.size(), [&](std::size_t skip) { return (total - values[skip]) / (N - 1.0); }, total / N);
    LaplaceEstimate out;
    out.id = phi.id;
    out.estimate = est.mean;
    out.se = est.se;
    out.reference = phi.poisson_reference();
    out.samples = samples.size();
    return out;
}

stats::MeanSe dos_count(std::span<const PointProcessSample> samples, Interval interval)
{
    std::vector<double> counts;
    counts.reserve(samples.size());
    for (const auto& s : samples) {
        std::size_t c = 0;
        for (std::size_t j = 0; j < s.energies.size(); ++j) c += interval.contains(s.point(j));
        counts.push_back(static_cast<double>(c));
    }
    return stats::mean_se(counts);
}

SemiPerturbed semi_perturbed(const spectral::SpectrumLadder& ladder, const model::ModelParams& params)
{
    const int n = params.n;
    const double rho = params.rho_value();
    const int n0 = static_cast<int>(std::floor(rho * n));
    if (!(rho * n > 2.0 * params.n_bath) || n0 < params.n_bath || n0 >= n)
        throw SplitInvalid("rho n = " + std::to_string(rho * n) + " must exceed 2 n_B = " + std::to_string(2 * params.n_bath) +
                           " with n_B <= n0 < n");
    if (ladder.top < n0) throw SplitInvalid("ladder does not reach the split scale n0 = " + std::to_string(n0));
    SemiPerturbed out;
    out.n0 = n0;
    out.n1 = n - n0;
    out.bound = 2.0 * model::power_of(params.alpha, n0);
    const spectral::LabeledSpectrum& base = ladder.at(n0);
    const std::uint64_t tail_count = 1ULL << out.n1;
    out.values.resize(base.size() * tail_count);
    for (std::uint64_t tail = 0; tail < tail_count; ++tail) {
        double shift = 0.0;
        for (int x = n0 + 1; x <= n; ++x) shift += (((tail >> (x - n0 - 1)) & 1ULL) ? -1.0 : 1.0) * ladder.h_at(x);
        for (std::uint64_t mu = 0; mu < base.size(); ++mu) out.values[mu | (tail << n0)] = base.energy(mu) + shift;
    }
    if (ladder.top >= n) {
        const spectral::LabeledSpectrum& full = ladder.at(n);
        double dev = 0.0;
        for (std::uint64_t eta = 0; eta < full.size(); ++eta) dev = std::max(dev, std::abs(full.energy(eta) - out.values[eta]));
        out.certificate = dev;
    }
    return out;
}

std::vector<double> gap_ratios(const PointProcessSample& sample)
{
    if (sample.energies.size() < 3) throw TooFewLevels("sample " + std::to_string(sample.index) + " has fewer than 3 points");
    std::vector<double> r;
    const std::vector<double> x = sample.points();
    for (std::size_t j = 0; j + 2 < x.size(); ++j) {
        const double a = x[j + 1] - x[j], b = x[j + 2] - x[j + 1];
        const double hi = std::max(a, b);
        r.push_back(hi > 0.0 ? std::min(a, b) / hi : 1.0);
    }
    return r;
}

GapRatioEstimate gap_ratio(std::span<const PointProcessSample> samples)
{
    std::vector<double> sums, counts;
    for (const auto& s : samples) {
        const std::vector<double> r = gap_ratios(s);
        double t = 0.0;
        for (double v : r) t += v;
        sums.push_back(t);
        counts.push_back(static_cast<double>(r.size()));
    }
    const stats::MeanSe est = stats::ratio_jackknife(sums, counts);
    GapRatioEstimate out;
    out.mean = est.mean;
    out.se = est.se;
    double c = 0.0;
    for (double v : counts) c += v;
    out.ratios = static_cast<std::size_t>(c);
    return out;
}

} // namespace qsun::pointprocess
