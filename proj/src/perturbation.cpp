#include "qsun/perturbation.hpp"

#include "qsun/errors.hpp"
#include "qsun/resonance.hpp"

#include <Eigen/LU>
#include <Eigen/SVD>

#include <cmath>
#include <complex>
#include <numbers>

namespace qsun::perturbation {

namespace {

using cd = std::complex<double>;

cd node_point(const Contour& c, int j)
{
    const double phi = 2.0 * std::numbers::pi * (j + 0.5) / c.nodes;
    return {c.center + c.radius * std::cos(phi), c.radius * std::sin(phi)};
}

// dz / (2 pi i) for the trapezoidal rule: r e^{i phi} / N
cd node_weight(const Contour& c, int j)
{
    const double phi = 2.0 * std::numbers::pi * (j + 0.5) / c.nodes;
    return cd(c.radius * std::cos(phi), c.radius * std::sin(phi)) / static_cast<double>(c.nodes);
}

Eigen::MatrixXd patch_mask(const PatchProblem& p)
{
    const Eigen::Index dim = p.d.size();
    Eigen::MatrixXd P0 = Eigen::MatrixXd::Zero(dim, dim);
    for (std::size_t j = p.first; j < p.first + p.k; ++j) P0(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) = 1.0;
    return P0;
}

void check_contour(const Eigen::VectorXd& eig, const Contour& c, double clearance)
{
    for (Eigen::Index i = 0; i < eig.size(); ++i) {
        const double dist = std::abs(std::abs(eig(i) - c.center) - c.radius);
        if (dist < 0.1 * clearance)
            throw ContourTooClose("eigenvalue " + std::to_string(eig(i)) + " lies " + std::to_string(dist) +
                                  " from the contour (clearance " + std::to_string(clearance) + ")");
    }
}

} // namespace

double operator_norm(const Eigen::MatrixXd& A)
{
    if (A.size() == 0) return 0.0;
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    return svd.singularValues()(0);
}

Eigen::VectorXd PatchProblem::direct_patch_spectrum(double g) const
{
    const spectral::Eigensystem es = spectral::diagonalize(Eigen::MatrixXd(H0 + (g * coupling) * V), false);
    return es.values.segment(static_cast<Eigen::Index>(first), static_cast<Eigen::Index>(k));
}

PatchProblem make_patch_problem(Eigen::MatrixXd H0, Eigen::MatrixXd V, double coupling, std::size_t first, std::size_t k,
                                double clearance, int n, double alpha, double theta)
{
    PatchProblem p;
    p.n = n;
    p.alpha = alpha;
    p.theta = theta;
    spectral::Eigensystem es = spectral::diagonalize(H0, true);
    p.d = es.values;
    p.Q = std::move(*es.vectors);
    p.Vq = p.Q.transpose() * V * p.Q;
    p.Vq = 0.5 * (p.Vq + p.Vq.transpose()).eval();
    p.H0 = std::move(H0);
    p.V = std::move(V);
    p.coupling = coupling;
    p.first = first;
    p.k = k;
    p.clearance = clearance;
    if (k < 1 || first + k > static_cast<std::size_t>(p.d.size())) throw std::invalid_argument("make_patch_problem: patch outside the spectrum");
    return p;
}

PatchProblem make_patch_problem(const model::ModelParams& params, const model::DisorderRealization& disorder, int n,
                                std::size_t first, std::size_t k)
{
    model::HamiltonianMatrix H0 = model::assemble(params, disorder, model::Level::half(n - 1));
    return make_patch_problem(std::move(H0.entries), model::coupling_operator(n), model::power_of(params.alpha, n), first, k,
                              resonance::resonance_threshold(params.alpha, params.theta, n - 1) / 2.0, n, params.alpha,
                              params.theta);
}

ProjectorResult contour_projector(const Eigen::MatrixXd& H, const Contour& contour, double clearance)
{
    const spectral::Eigensystem es = spectral::diagonalize(H, false);
    check_contour(es.values, contour, clearance);
    const Eigen::Index dim = H.rows();
    const Eigen::MatrixXcd Hc = H.cast<cd>();
    const Eigen::MatrixXcd I = Eigen::MatrixXcd::Identity(dim, dim);
    Contour c = contour;
    for (;;) {
        Eigen::MatrixXcd S = Eigen::MatrixXcd::Zero(dim, dim);
        for (int j = 0; j < c.nodes; ++j) {
            const cd z = node_point(c, j);
            Eigen::PartialPivLU<Eigen::MatrixXcd> lu(z * I - Hc);
            S += node_weight(c, j) * lu.solve(I);
        }
        ProjectorResult out;
        out.P = S.real();
        out.P = 0.5 * (out.P + out.P.transpose()).eval();
        out.imag_residue = S.imag().cwiseAbs().maxCoeff();
        out.nodes = c.nodes;
        out.idempotency = (out.P * out.P - out.P).cwiseAbs().maxCoeff();
        if (out.idempotency <= 1e-8 || c.nodes >= 4096) return out;
        c.nodes *= 2;
    }
}

Contour patch_contour(const PatchProblem& problem, int nodes)
{
    return {problem.center(), problem.half_width() + problem.clearance, nodes};
}

ProjectorResult patch_projector(const PatchProblem& problem, double g, int nodes)
{
    return contour_projector(Eigen::MatrixXd(problem.H0 + (g * problem.coupling) * problem.V), patch_contour(problem, nodes),
                             problem.clearance);
}

bool BmoSeries::bounds_ok() const
{
    for (std::size_t m = 1; m < norms.size(); ++m)
        if (!(norms[m] <= bounds[m])) return false;
    return true;
}

BmoSeries series_Bmo(const PatchProblem& problem, int M, int nodes, bool check_bounds)
{
    check_contour(problem.d, patch_contour(problem, nodes), problem.clearance);
    const Eigen::Index dim = problem.d.size();
    const double n = problem.n;
    const double base = std::pow(2.0 * model::power_of(problem.alpha, 1.0 - problem.theta), n) * 2.0 *
                        model::power_of(problem.alpha, problem.theta);
    const Eigen::MatrixXd Vc = problem.coupling * problem.Vq;

    for (int attempt = 0;; ++attempt) {
        const Contour c = patch_contour(problem, nodes);
        std::vector<Eigen::MatrixXd> Sr(static_cast<std::size_t>(M + 1), Eigen::MatrixXd::Zero(dim, dim));
        std::vector<Eigen::MatrixXd> Si(static_cast<std::size_t>(M + 1), Eigen::MatrixXd::Zero(dim, dim));
        Eigen::VectorXd Dr(dim), Di(dim);
        for (int j = 0; j < c.nodes; ++j) {
            const cd z = node_point(c, j);
            const cd w = node_weight(c, j);
            for (Eigen::Index a = 0; a < dim; ++a) {
                const cd v = 1.0 / (z - problem.d(a));
                Dr(a) = v.real();
                Di(a) = v.imag();
            }
            // W_0 = D (diagonal); W_t = W_{t-1} Vc D
            Eigen::MatrixXd Wr = Eigen::MatrixXd::Zero(dim, dim), Wi = Eigen::MatrixXd::Zero(dim, dim);
            Wr.diagonal() = Dr;
            Wi.diagonal() = Di;
            for (int t = 1; t <= M; ++t) {
                const Eigen::MatrixXd Xr = Wr * Vc, Xi = Wi * Vc;
                Wr = Xr * Dr.asDiagonal();
                Wr.noalias() -= Xi * Di.asDiagonal();
                Wi = Xr * Di.asDiagonal();
                Wi.noalias() += Xi * Dr.asDiagonal();
                Sr[static_cast<std::size_t>(t)] += w.real() * Wr - w.imag() * Wi;
                Si[static_cast<std::size_t>(t)] += w.real() * Wi + w.imag() * Wr;
            }
        }
        BmoSeries out;
        out.nodes = c.nodes;
        out.B.push_back(patch_mask(problem));
        out.norms.push_back(1.0);
        out.bounds.push_back(1.0);
        for (int t = 1; t <= M; ++t) {
            const auto& R = Sr[static_cast<std::size_t>(t)];
            out.B.push_back(0.5 * (R + R.transpose()));
            out.norms.push_back(operator_norm(out.B.back()));
            out.bounds.push_back(std::pow(base, t));
            out.imag_residue = std::max(out.imag_residue, Si[static_cast<std::size_t>(t)].cwiseAbs().maxCoeff());
        }
        if (!check_bounds || out.bounds_ok()) return out;
        if (attempt == 1) throw BoundViolated("||B_m^o|| exceeds ((2 alpha^{1-theta})^n 2 alpha^theta)^m after doubling nodes");
        nodes *= 2;
    }
}

bool ProjectedSeries::bounds_ok() const
{
    for (std::size_t m = 1; m < R_norms.size(); ++m)
        if (!(R_norms[m] <= RL_bounds[m]) || !(L_norms[m] <= RL_bounds[m]) || !(Bt_norms[m] <= Bt_bounds[m])) return false;
    return true;
}

Eigen::MatrixXd ProjectedSeries::evaluate(double g, int order) const
{
    if (order < 0) order = K;
    Eigen::MatrixXd H = H_P0;
    double gk = 1.0;
    for (int k = 1; k <= order && k < static_cast<int>(Bt.size()); ++k) {
        gk *= g;
        H += gk * Bt[static_cast<std::size_t>(k)];
    }
    return H;
}

Eigen::VectorXd ProjectedSeries::spectrum(double g, int order) const
{
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(evaluate(g, order), Eigen::EigenvaluesOnly);
    return es.eigenvalues();
}

ProjectedSeries projected_hamiltonian_series(const PatchProblem& problem, const BmoSeries& bmo, int K, bool check_bounds)
{
    if (K < 0 || static_cast<int>(bmo.B.size()) <= K) throw std::invalid_argument("projected_hamiltonian_series: need K <= M");
    const Eigen::Index dim = problem.d.size();
    const auto first = static_cast<Eigen::Index>(problem.first);
    const auto k = static_cast<Eigen::Index>(problem.k);
    const std::vector<Eigen::MatrixXd>& B = bmo.B;

    ProjectedSeries s;
    s.K = K;
    s.center = problem.center();
    s.H_P0 = problem.d.segment(first, k).asDiagonal();
    const Eigen::MatrixXd& P0 = B[0];
    s.R.push_back(P0);
    s.L.push_back(P0);
    for (int m = 1; m <= K; ++m) {
        Eigen::MatrixXd r = B[static_cast<std::size_t>(m)] * P0;
        Eigen::MatrixXd l = P0 * B[static_cast<std::size_t>(m)];
        for (int i = 1; i < m; ++i) {
            const double f = static_cast<double>(m - i) / m;
            r.noalias() += f * (B[static_cast<std::size_t>(m - i)] * s.R[static_cast<std::size_t>(i)]);
            l.noalias() += f * (s.L[static_cast<std::size_t>(i)] * B[static_cast<std::size_t>(m - i)]);
        }
        s.R.push_back(std::move(r));
        s.L.push_back(std::move(l));
    }

    // Shifting H0 by the patch centre leaves every tilde B_k (k >= 1)
    // unchanged, since sum_i L^{(i)} R^{(k-i)} vanishes, but avoids cancelling
    // large diagonal terms.
    const Eigen::VectorXd shifted = problem.d.array() - s.center;
    const Eigen::MatrixXd Vc = problem.coupling * problem.Vq;
    const double tb = 2.0 * model::power_of(problem.alpha, 1.0 - problem.theta);
    s.Bt.push_back(Eigen::MatrixXd::Zero(k, k));
    s.R_norms.push_back(1.0);
    s.L_norms.push_back(1.0);
    s.Bt_norms.push_back(0.0);
    s.RL_bounds.push_back(1.0);
    s.Bt_bounds.push_back(1.0);
    for (int kk = 1; kk <= K; ++kk) {
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(dim, dim);
        for (int i = 0; i <= kk; ++i)
            acc.noalias() += s.L[static_cast<std::size_t>(i)] * shifted.asDiagonal() * s.R[static_cast<std::size_t>(kk - i)];
        for (int i = 0; i <= kk - 1; ++i)
            acc.noalias() += s.L[static_cast<std::size_t>(i)] * Vc * s.R[static_cast<std::size_t>(kk - 1 - i)];
        const Eigen::MatrixXd blk = acc.block(first, first, k, k);
        s.max_asymmetry = std::max(s.max_asymmetry, (blk - blk.transpose()).cwiseAbs().maxCoeff());
        s.Bt.push_back(0.5 * (blk + blk.transpose()));
        s.Bt_norms.push_back(operator_norm(s.Bt.back()));
        s.R_norms.push_back(operator_norm(s.R[static_cast<std::size_t>(kk)]));
        s.L_norms.push_back(operator_norm(s.L[static_cast<std::size_t>(kk)]));
        s.RL_bounds.push_back(std::pow(tb, problem.n * kk));
        s.Bt_bounds.push_back(std::pow(2.0 * tb, problem.n * kk));
    }
    if (check_bounds && !s.bounds_ok()) throw BoundViolated("R/L or tilde B coefficient exceeds its stated envelope");
    return s;
}

double phi_tilde(const ProjectedSeries& series, double g)
{
    const Eigen::MatrixXd H = series.evaluate(g);
    const Eigen::Index k = H.rows();
    if (k < 2) throw std::invalid_argument("phi_tilde: patch size must be at least 2");
    return H(k - 1, k - 1) - H(0, 0);
}

bool AntiResonanceSeries::bounds_ok() const
{
    for (std::size_t k = 1; k < b.size(); ++k)
        if (!(std::abs(b[k]) <= 2.0)) return false;
    return true;
}

double AntiResonanceSeries::evaluate(double g) const
{
    double v = a0, gk = 1.0;
    for (std::size_t k = 1; k < coefficients.size(); ++k) {
        gk *= g;
        v += gk * coefficients[k];
    }
    return v;
}

AntiResonanceSeries antires_series(const PatchProblem& problem, std::size_t rank_a, std::size_t rank_b, int K, int nodes)
{
    const auto N = static_cast<std::size_t>(problem.d.size());
    auto isolated = [&](std::size_t r) {
        const double e = problem.d(static_cast<Eigen::Index>(r));
        const double gap = 2.0 * problem.clearance;
        if (r > 0 && !(e - problem.d(static_cast<Eigen::Index>(r - 1)) > gap)) return false;
        if (r + 1 < N && !(problem.d(static_cast<Eigen::Index>(r + 1)) - e > gap)) return false;
        return true;
    };
    if (rank_a >= N || rank_b >= N) throw std::invalid_argument("antires_series: rank outside the spectrum");
    if (!isolated(rank_a) || !isolated(rank_b)) throw NotIsolated("level closer than twice the clearance to a neighbour");

    AntiResonanceSeries out;
    out.tilde_alpha = resonance::alpha_tilde(problem.alpha, problem.theta);
    out.coefficients.assign(static_cast<std::size_t>(K + 1), 0.0);
    out.b.assign(static_cast<std::size_t>(K + 1), 0.0);
    for (std::size_t r : {rank_a, rank_b}) {
        PatchProblem single = problem;
        single.first = r;
        single.k = 1;
        const BmoSeries bmo = series_Bmo(single, K, nodes);
        const ProjectedSeries ps = projected_hamiltonian_series(single, bmo, K);
        out.a0 += ps.H_P0(0, 0);
        for (int k = 1; k <= K; ++k) out.coefficients[static_cast<std::size_t>(k)] += ps.Bt[static_cast<std::size_t>(k)](0, 0);
    }
    for (int k = 1; k <= K; ++k)
        out.b[static_cast<std::size_t>(k)] = out.coefficients[static_cast<std::size_t>(k)] / std::pow(out.tilde_alpha, problem.n * k);
    return out;
}

} // namespace qsun::perturbation
