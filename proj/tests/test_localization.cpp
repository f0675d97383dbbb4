#include "qsun/localization.hpp"
#include "qsun/model.hpp"
#include "qsun/resonance.hpp"
#include "qsun/spectral.hpp"

#include <doctest.h>

#include <cmath>

using namespace qsun;

TEST_CASE("overlaps of a basis state")
{
    Eigen::VectorXd e = Eigen::VectorXd::Zero(16);
    e(0b1010) = 1.0;
    for (int ell = 1; ell <= 4; ++ell) {
        CHECK(localization::tail_overlap(e, 0b1010, ell) == 1.0);
        CHECK(localization::tail_defect(e, 0b1010, ell) == 0.0);
    }
    // differs from 0b0010 only at site 4
    CHECK(localization::tail_overlap(e, 0b0010, 4) == 0.0);
    CHECK(localization::tail_overlap(e, 0b0010, 5) == 1.0);
    CHECK(localization::site_defect(e, 0b0010, 4) == 1.0);
    CHECK(localization::site_defect(e, 0b0010, 3) == 0.0);
    CHECK(localization::ipr(e) == 1.0);
}

TEST_CASE("ipr of a uniform vector is the dimension")
{
    const Eigen::VectorXd u = Eigen::VectorXd::Constant(32, 1.0 / std::sqrt(32.0));
    CHECK(localization::ipr(u) == doctest::Approx(32.0));
}

TEST_CASE("tail overlap plus defect is one and overlap is monotone in ell")
{
    Eigen::VectorXd psi(16);
    for (int k = 0; k < 16; ++k) psi(k) = std::cos(0.7 * k + 0.3);
    psi.normalize();
    for (std::uint64_t s : {0ull, 5ull, 15ull}) {
        double prev = 0.0;
        for (int ell = 1; ell <= 5; ++ell) {
            const double o = localization::tail_overlap(psi, s, ell);
            CHECK(o + localization::tail_defect(psi, s, ell) == doctest::Approx(1.0).epsilon(1e-14));
            CHECK(o >= prev - 1e-15);
            prev = o;
        }
    }
}

TEST_CASE("free-model eigenvectors are product states")
{
    model::ModelParams p;
    p.n = 6;
    p.alpha = 0.0;
    spectral::LadderOptions opts;
    opts.vectors_at_top = true;
    const auto ladder = spectral::label_ladder(p, model::sample_disorder(p, 4), opts);
    const auto gen = resonance::trace_genealogy(ladder, p.theta, p.n_bath);
    const auto rep = localization::localization_report(ladder, gen);
    CHECK(rep.vectors.size() == 64);
    for (const auto& v : rep.vectors) {
        CHECK(v.ipr == doctest::Approx(1.0));
        for (double d : v.tail_defects) CHECK(d <= 1e-20);
    }
}

TEST_CASE("ell star and the ipr bound")
{
    model::ModelParams p;
    p.n = 8;
    p.alpha = 0.05;
    spectral::LadderOptions opts;
    opts.vectors_at_top = true;
    for (std::uint64_t r = 0; r < 5; ++r) {
        const auto ladder = spectral::label_ladder(p, model::sample_disorder(p, r), opts);
        const auto gen = resonance::trace_genealogy(ladder, p.theta, p.n_bath);
        const auto rep = localization::localization_report(ladder, gen);
        const auto ls = localization::ell_star(gen);
        if (!ls) {
            CHECK_FALSE(gen.step(7).A);
            CHECK_FALSE(localization::ipr_bound_check(rep, 1e9));
            continue;
        }
        for (int m = *ls; m < 8; ++m) CHECK(gen.step(m).A);
        if (*ls > gen.m0) CHECK_FALSE(gen.step(*ls - 1).A);
        const double C = *localization::fitted_ipr_constant(rep);
        CHECK(localization::ipr_bound_check(rep, C));
        CHECK_FALSE(localization::ipr_bound_check(rep, 0.99 * C));
    }
}
