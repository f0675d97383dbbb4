#include "qsun/errors.hpp"
#include "qsun/model.hpp"
#include "qsun/perturbation.hpp"
#include "qsun/resonance.hpp"

#include <doctest.h>

#include <cmath>

using namespace qsun;

namespace {

struct Found {
    perturbation::PatchProblem problem;
    bool single_block = false;
};

// First resonant patch (size >= 2) of H_{n-1/2} over realizations; when
// single_block is requested all patch vectors must share the sign of Z_n.
Found find_patch(double alpha, int n, bool single_block, std::uint64_t seed = 1)
{
    model::ModelParams p;
    p.n = n;
    p.alpha = alpha;
    p.master_seed = seed;
    for (std::uint64_t r = 0; r < 2000; ++r) {
        const auto dis = model::sample_disorder(p, r);
        auto prob = perturbation::make_patch_problem(p, dis, n, 0, 1);
        const std::vector<double> d(prob.d.data(), prob.d.data() + prob.d.size());
        const auto part = resonance::partition_patches(d, resonance::resonance_threshold(alpha, p.theta, n - 1));
        for (const auto& q : part.patches) {
            if (q.size() < 2) continue;
            bool same = true;
            int sign = 0;
            for (std::size_t j = q.begin; j < q.end; ++j) {
                double zn = 0.0;
                for (Eigen::Index b = 0; b < prob.Q.rows(); ++b)
                    zn += model::spin(static_cast<std::uint64_t>(b), n) * prob.Q(b, static_cast<Eigen::Index>(j)) * prob.Q(b, static_cast<Eigen::Index>(j));
                const int s = zn > 0.5 ? 1 : (zn < -0.5 ? -1 : 0);
                if (s == 0 || (sign != 0 && s != sign)) same = false;
                sign = s;
            }
            if (single_block && !same) continue;
            prob.first = q.begin;
            prob.k = q.size();
            return {prob, same};
        }
    }
    throw std::runtime_error("no resonant patch found");
}

Eigen::MatrixXd spectral_projector(const Eigen::MatrixXd& H, std::size_t first, std::size_t k)
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H);
    const Eigen::MatrixXd U = es.eigenvectors().middleCols(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(k));
    return U * U.transpose();
}

} // namespace

TEST_CASE("contour projector equals the spectral projector")
{
    const auto f = find_patch(0.4, 5, false);
    const auto& p = f.problem;
    for (double g : {0.0, 0.3, -0.5}) {
        const auto res = perturbation::patch_projector(p, g);
        const Eigen::MatrixXd H = p.H0 + g * p.coupling * p.V;
        CHECK((res.P - spectral_projector(H, p.first, p.k)).cwiseAbs().maxCoeff() < 1e-10);
        CHECK(res.idempotency < 1e-8);
        CHECK(res.imag_residue < 1e-10);
    }
}

TEST_CASE("contour too close to a level is rejected")
{
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(2, 2);
    H(0, 0) = 0.0;
    H(1, 1) = 1.0;
    CHECK_THROWS_AS(perturbation::contour_projector(H, {0.0, 1.0, 64}, 0.1), ContourTooClose);
    CHECK_NOTHROW(perturbation::contour_projector(H, {0.0, 0.5, 64}, 0.1));
}

TEST_CASE("B_m^o: partial sums reproduce P(g) and B_1 matches a finite difference")
{
    const auto f = find_patch(0.4, 5, false);
    const auto& p = f.problem;
    const auto bmo = perturbation::series_Bmo(p, 14);
    CHECK(bmo.bounds_ok());
    CHECK(bmo.imag_residue < 1e-10);
    auto to_eig = [&](const Eigen::MatrixXd& M) { return Eigen::MatrixXd(p.Q.transpose() * M * p.Q); };

    const double g = 0.4;
    Eigen::MatrixXd sum = bmo.B[0];
    double gk = 1.0;
    const Eigen::MatrixXd exact = to_eig(perturbation::patch_projector(p, g, 1024).P);
    double prev = INFINITY;
    for (int m = 1; m <= 14; ++m) {
        gk *= g;
        sum += gk * bmo.B[static_cast<std::size_t>(m)];
        const double err = (sum - exact).cwiseAbs().maxCoeff();
        CHECK(err < prev);
        prev = err;
    }
    CHECK(prev < 1e-12);

    const double eps = 1e-3;
    const Eigen::MatrixXd fd =
        (to_eig(perturbation::patch_projector(p, eps).P) - to_eig(perturbation::patch_projector(p, -eps).P)) / (2.0 * eps);
    const double scale = bmo.B[1].cwiseAbs().maxCoeff();
    CHECK(scale > 0.0);
    CHECK((fd - bmo.B[1]).cwiseAbs().maxCoeff() < 1e-4 * scale + 1e-10);
}

TEST_CASE("projected series: L = R^T, symmetry and truncation error")
{
    const auto f = find_patch(0.4, 5, true);
    const auto& p = f.problem;
    REQUIRE(f.single_block);
    const int K = 6;
    const auto bmo = perturbation::series_Bmo(p, K);
    const auto ser = perturbation::projected_hamiltonian_series(p, bmo, K, false);
    for (int m = 1; m <= K; ++m) {
        const auto& R = ser.R[static_cast<std::size_t>(m)];
        const auto& L = ser.L[static_cast<std::size_t>(m)];
        CHECK((L - R.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, R.cwiseAbs().maxCoeff()));
    }
    CHECK(ser.max_asymmetry < 1e-12);
    // V flips site n, so a patch inside one Z_n block has no odd orders
    for (int k = 1; k <= K; k += 2) CHECK(ser.Bt_norms[static_cast<std::size_t>(k)] < 1e-14);
    CHECK(ser.Bt_norms[2] > 0.0);

    const double g = 0.5;
    const Eigen::VectorXd direct = p.direct_patch_spectrum(g);
    double prev = INFINITY;
    for (int order : {0, 2, 4}) {
        const double err = (ser.spectrum(g, order) - direct).cwiseAbs().maxCoeff();
        const double next = std::pow(g, order + 2) * ser.Bt_norms[static_cast<std::size_t>(order + 2)];
        CHECK(err <= 2.0 * next + 1e-13);
        CHECK(err < prev);
        prev = err;
    }
}

TEST_CASE("projected series spectrum for a mixed-block patch")
{
    const auto f = find_patch(0.4, 5, false, 7);
    const auto& p = f.problem;
    const auto bmo = perturbation::series_Bmo(p, 5);
    const auto ser = perturbation::projected_hamiltonian_series(p, bmo, 5, false);
    const double err = (ser.spectrum(0.3, 3) - p.direct_patch_spectrum(0.3)).cwiseAbs().maxCoeff();
    const double pred = 2.0 * std::max(std::pow(0.3, 4) * ser.Bt_norms[4], std::pow(0.3, 5) * ser.Bt_norms[5]) + 1e-13;
    CHECK(err <= pred);
}

TEST_CASE("phi tilde is the spread of the diagonal")
{
    const auto f = find_patch(0.4, 5, true);
    const auto bmo = perturbation::series_Bmo(f.problem, 2);
    const auto ser = perturbation::projected_hamiltonian_series(f.problem, bmo, 2, false);
    const Eigen::MatrixXd H = ser.evaluate(0.2);
    CHECK(perturbation::phi_tilde(ser, 0.2) == doctest::Approx(H(H.rows() - 1, H.rows() - 1) - H(0, 0)));
    CHECK(perturbation::phi_tilde(ser, 0.0) == doctest::Approx(2.0 * f.problem.half_width()));
}

TEST_CASE("anti-resonance series tracks the exact level sum")
{
    model::ModelParams p;
    p.n = 5;
    p.alpha = 0.3;
    const auto dis = model::sample_disorder(p, 3);
    auto prob = perturbation::make_patch_problem(p, dis, 5, 0, 1);
    // pick two isolated levels
    std::vector<std::size_t> iso;
    for (std::size_t r = 0; r < static_cast<std::size_t>(prob.d.size()); ++r) {
        const double e = prob.d(static_cast<Eigen::Index>(r));
        const bool left = r == 0 || e - prob.d(static_cast<Eigen::Index>(r - 1)) > 2 * prob.clearance;
        const bool right = r + 1 == static_cast<std::size_t>(prob.d.size()) || prob.d(static_cast<Eigen::Index>(r + 1)) - e > 2 * prob.clearance;
        if (left && right) iso.push_back(r);
    }
    REQUIRE(iso.size() >= 2);
    const auto a = iso.front(), b = iso.back();
    const auto ser = perturbation::antires_series(prob, a, b, 6);
    CHECK(ser.a0 == doctest::Approx(prob.d(static_cast<Eigen::Index>(a)) + prob.d(static_cast<Eigen::Index>(b))));
    for (double g : {0.2, 0.5}) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(prob.H0 + g * prob.coupling * prob.V), Eigen::EigenvaluesOnly);
        const double exact = es.eigenvalues()(static_cast<Eigen::Index>(a)) + es.eigenvalues()(static_cast<Eigen::Index>(b));
        CHECK(std::abs(ser.evaluate(g) - exact) < 1e-11);
    }
    // a level inside a resonant patch is not isolated
    const std::vector<double> d(prob.d.data(), prob.d.data() + prob.d.size());
    for (std::size_t r = 1; r < d.size(); ++r)
        if (d[r] - d[r - 1] <= 2 * prob.clearance) {
            CHECK_THROWS_AS(perturbation::antires_series(prob, r, a, 2), NotIsolated);
            break;
        }
}

TEST_CASE("operator norm")
{
    Eigen::MatrixXd A(2, 2);
    A << 3, 0, 0, -4;
    CHECK(perturbation::operator_norm(A) == doctest::Approx(4.0));
}
