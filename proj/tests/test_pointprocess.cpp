#include "qsun/errors.hpp"
#include "qsun/model.hpp"
#include "qsun/pointprocess.hpp"
#include "qsun/rng.hpp"
#include "qsun/spectral.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

using namespace qsun;
using namespace qsun::pointprocess;

namespace {

// exp(-\int (1 - e^{-phi})) by a fine midpoint rule, independent of the closed forms.
double reference_by_quadrature(const TestFunction& phi)
{
    const double c = phi.support_bound() + 1.0;
    const int steps = 400000;
    const double dx = 2.0 * c / steps;
    double s = 0.0;
    for (int i = 0; i < steps; ++i) s += 1.0 - std::exp(-phi(-c + (i + 0.5) * dx));
    return std::exp(-s * dx);
}

// Unit-intensity Poisson process on [-window, window], returned as samples
// with spacing 1 and offset 0.
std::vector<PointProcessSample> poisson_samples(std::size_t count, double window, std::uint64_t seed)
{
    rng::Stream stream(seed, 3);
    std::vector<PointProcessSample> out;
    for (std::size_t r = 0; r < count; ++r) {
        PointProcessSample s;
        s.window = window;
        s.index = r;
        double x = -window;
        while (true) {
            x += -std::log1p(-stream.uniform());
            if (x > window) break;
            s.energies.push_back(x);
        }
        out.push_back(std::move(s));
    }
    return out;
}

} // namespace

TEST_CASE("mean spacing formula")
{
    CHECK(mean_spacing(1) == doctest::Approx(std::sqrt(2.0 * std::numbers::pi / 12.0) / 2.0).epsilon(1e-15));
    CHECK(mean_spacing(10) / mean_spacing(9) == doctest::Approx(0.5 * std::sqrt(10.0 / 9.0)).epsilon(1e-14));
}

TEST_CASE("Poisson reference matches quadrature")
{
    for (const auto& phi : default_test_functions()) {
        INFO(phi.id);
        CHECK(phi.poisson_reference() == doctest::Approx(reference_by_quadrature(phi)).epsilon(1e-6));
    }
    const TestFunction tall{TestFunction::TriangularBump{0.5, 2.0, 3.0}, "tall"};
    CHECK(tall.poisson_reference() == doctest::Approx(reference_by_quadrature(tall)).epsilon(1e-6));
    // overlapping indicator terms add up
    const TestFunction overlap{TestFunction::IndicatorSum{{{Interval{0.0, 2.0}, 1.0}, {Interval{1.0, 3.0}, 0.5}}}, "overlap"};
    CHECK(overlap(1.5) == 1.5);
    CHECK(overlap.poisson_reference() == doctest::Approx(reference_by_quadrature(overlap)).epsilon(1e-6));
    CHECK(overlap.support_bound() == 3.0);
    CHECK(default_test_functions()[1].poisson_reference() ==
          doctest::Approx(std::exp(-(1.0 - std::exp(-1.0)) - 2.0 * (1.0 - std::exp(-2.0)))).epsilon(1e-15));
}

TEST_CASE("Laplace functional and gap ratio on a simulated Poisson process")
{
    const auto samples = poisson_samples(4000, 25.0, 11);
    for (const auto& phi : default_test_functions()) {
        const LaplaceEstimate est = laplace_functional(samples, phi);
        INFO(phi.id << " estimate " << est.estimate << " se " << est.se);
        CHECK(est.samples == samples.size());
        CHECK(est.se > 0.0);
        CHECK(std::abs(est.estimate - est.reference) < 4.0 * est.se);
    }
    const GapRatioEstimate r = gap_ratio(samples);
    INFO("gap ratio " << r.mean << " se " << r.se);
    CHECK(std::abs(r.mean - poisson_gap_ratio) < 4.0 * r.se);
    CHECK(r.se < 0.005);
    const stats::MeanSe dos = dos_count(samples, Interval{-1.0, 1.0});
    CHECK(std::abs(dos.mean - 2.0) < 4.0 * dos.se);
}

TEST_CASE("Laplace functional checks the window")
{
    auto samples = poisson_samples(5, 2.0, 1);
    const TestFunction wide{TestFunction::IndicatorSum{{{Interval{1.0, 3.0}, 1.0}}}, "wide"};
    CHECK_THROWS_AS(laplace_functional(samples, wide), SupportExceedsWindow);
    CHECK_THROWS_AS(laplace_functional(std::span(samples).first(1), default_test_functions()[0]), std::invalid_argument);
}

TEST_CASE("rescale keeps the window and inverts")
{
    const int n = 6;
    const double s = mean_spacing(n);
    std::vector<double> spectrum{0.3, -5.0 * s, 2.0 * s, 3.0 * s + 0.1, -0.1, 10.0};
    const PointProcessSample p = rescale(spectrum, n, 4.0, 0.1, 7);
    CHECK(p.index == 7);
    CHECK(std::is_sorted(p.energies.begin(), p.energies.end()));
    for (double e : spectrum) {
        const bool inside = std::abs((e - 0.1) / s) <= 4.0;
        CHECK(std::count(p.energies.begin(), p.energies.end(), e) == (inside ? 1 : 0));
    }
    for (std::size_t j = 0; j < p.energies.size(); ++j) CHECK(p.energy_of(p.point(j)) == doctest::Approx(p.energies[j]).epsilon(1e-15));
    CHECK(p.points().size() == p.energies.size());
}

TEST_CASE("evaluate sums the test function over points")
{
    PointProcessSample p;
    p.energies = {-1.5, 0.25, 0.5, 2.0};
    CHECK(evaluate(p, default_test_functions()[0]) == 2.0);
    CHECK(evaluate(p, default_test_functions()[1]) == 1.0 + 2.0);
    CHECK(evaluate(p, default_test_functions()[2]) == doctest::Approx(0.75 + 0.5));
}

TEST_CASE("gap ratios of a regular lattice and of short samples")
{
    PointProcessSample p;
    p.energies = {0.0, 1.0, 2.0, 4.0};
    const auto r = gap_ratios(p);
    REQUIRE(r.size() == 2);
    CHECK(r[0] == 1.0);
    CHECK(r[1] == 0.5);
    p.energies = {0.0, 1.0};
    CHECK_THROWS_AS(gap_ratios(p), TooFewLevels);
}

TEST_CASE("semi-perturbed spectrum")
{
    model::ModelParams p;
    p.n = 9;
    p.alpha = 0.1;
    p.rho = 0.5;
    spectral::LadderOptions opts;
    for (std::uint64_t r = 0; r < 3; ++r) {
        const auto ladder = spectral::label_ladder(p, model::sample_disorder(p, r), opts);
        const SemiPerturbed sp = semi_perturbed(ladder, p);
        CHECK(sp.n0 == 4);
        CHECK(sp.n1 == 5);
        CHECK(sp.values.size() == ladder.at(9).size());
        CHECK(sp.bound == doctest::Approx(2e-4));
        CHECK(sp.certificate >= 0.0);
        CHECK(sp.certificate <= sp.bound);
        // oracle: recompute one label by hand
        const std::uint64_t eta = 0b101100110;
        double tail = 0.0;
        for (int x = 5; x <= 9; ++x) tail += (((eta >> (x - 1)) & 1ULL) ? -1.0 : 1.0) * ladder.h_at(x);
        CHECK(sp.values[eta] == doctest::Approx(ladder.at(4).energy(eta & 0xF) + tail).epsilon(1e-15));
    }
}

TEST_CASE("semi-perturbed spectrum is exact without coupling")
{
    model::ModelParams p;
    p.n = 8;
    p.alpha = 0.0;
    p.rho = 0.5;
    const auto ladder = spectral::label_ladder(p, model::sample_disorder(p, 2), spectral::LadderOptions{});
    const SemiPerturbed sp = semi_perturbed(ladder, p);
    CHECK(sp.certificate <= 1e-13);
}

TEST_CASE("semi-perturbed split validity")
{
    model::ModelParams p;
    p.n = 5;
    p.alpha = 0.1;
    p.rho = 0.3;
    const auto ladder = spectral::label_ladder(p, model::sample_disorder(p, 0), spectral::LadderOptions{});
    CHECK_THROWS_AS(semi_perturbed(ladder, p), SplitInvalid);
}
