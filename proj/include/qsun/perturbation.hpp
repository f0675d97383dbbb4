#pragma once

#include "qsun/model.hpp"
#include "qsun/spectral.hpp"

#include <Eigen/Dense>

#include <vector>

namespace qsun::perturbation {

// A patch of H0 = H_{n-1/2} perturbed by g * coupling * V with V = X_1 X_n.
// Everything is stored in the eigenbasis of H0, where resolvents are diagonal.
struct PatchProblem {
    int n = 0;
    double alpha = 0.0;
    double theta = 0.0;
    Eigen::MatrixXd H0;     // product basis
    Eigen::MatrixXd V;      // product basis
    Eigen::VectorXd d;      // eigenvalues of H0, ascending
    Eigen::MatrixXd Q;      // eigenvectors of H0
    Eigen::MatrixXd Vq;     // Q^T V Q
    double coupling = 0.0;  // alpha^n
    std::size_t first = 0;  // patch = ranks [first, first + k) of d
    std::size_t k = 1;
    double clearance = 0.0; // alpha^{theta (n-1)} / 2

    double center() const { return 0.5 * (d(static_cast<Eigen::Index>(first)) + d(static_cast<Eigen::Index>(first + k - 1))); }
    double half_width() const { return 0.5 * (d(static_cast<Eigen::Index>(first + k - 1)) - d(static_cast<Eigen::Index>(first))); }
    // Patch eigenvalues of H0 + g coupling V by direct diagonalization.
    Eigen::VectorXd direct_patch_spectrum(double g) const;
};

PatchProblem make_patch_problem(Eigen::MatrixXd H0, Eigen::MatrixXd V, double coupling, std::size_t first, std::size_t k,
                                double clearance, int n, double alpha, double theta);

// H0 = Half(n-1) of the realization, V = X_1 X_n, coupling alpha^n and the
// patch given by its rank range in the spectrum of H0.
PatchProblem make_patch_problem(const model::ModelParams& params, const model::DisorderRealization& disorder, int n,
                                std::size_t first, std::size_t k);

struct Contour {
    double center = 0.0;
    double radius = 0.0;
    int nodes = 256;
};

struct ProjectorResult {
    Eigen::MatrixXd P;
    int nodes = 0;
    double idempotency = 0.0;  // max |P^2 - P|
    double imag_residue = 0.0; // max |Im| discarded
};

// Trapezoidal quadrature of (1/2 pi i) \oint (z - H)^{-1} dz on a circle,
// one LU solve per node. Throws ContourTooClose if an eigenvalue of H lies
// within 0.1 * clearance of the circle; doubles the nodes while
// |P^2 - P| > 1e-8 (up to 4096 nodes).
ProjectorResult contour_projector(const Eigen::MatrixXd& H, const Contour& contour, double clearance);

// Contour around the patch: center at the hull midpoint, radius half-width + clearance.
Contour patch_contour(const PatchProblem& problem, int nodes = 256);

// Projector of the perturbed patch at coupling g, in the product basis.
ProjectorResult patch_projector(const PatchProblem& problem, double g, int nodes = 256);

struct BmoSeries {
    std::vector<Eigen::MatrixXd> B; // B[m] = B_m^o in the H0 eigenbasis, B[0] = P_0
    std::vector<double> norms;      // ||B_m^o||, index m
    std::vector<double> bounds;     // ((2 alpha^{1-theta})^n 2 alpha^theta)^m
    int nodes = 0;
    double imag_residue = 0.0;

    bool bounds_ok() const;
};

// B_m^o = (alpha^n)^m / (2 pi i) \oint R (V R)^m dz for m = 1..M on shared
// nodes. If a bound fails the node count is doubled once before throwing
// BoundViolated (unless check_bounds is false).
BmoSeries series_Bmo(const PatchProblem& problem, int M, int nodes = 256, bool check_bounds = true);

struct ProjectedSeries {
    int K = 0;
    double center = 0.0;               // energy offset removed before assembly
    Eigen::MatrixXd H_P0;              // k x k, diagonal of patch eigenvalues
    std::vector<Eigen::MatrixXd> Bt;   // Bt[k] = tilde B_k (k x k), Bt[0] unused
    std::vector<Eigen::MatrixXd> R;    // R^{(m)} in the H0 eigenbasis, R[0] = P_0
    std::vector<Eigen::MatrixXd> L;    // L^{(m)}
    std::vector<double> R_norms, L_norms, Bt_norms;
    std::vector<double> RL_bounds;     // ((2 alpha^{1-theta})^n)^m
    std::vector<double> Bt_bounds;     // (4 alpha^{1-theta})^{n k}
    double max_asymmetry = 0.0;        // over tilde B_k before symmetrization

    bool bounds_ok() const;
    // H_{P,0} + sum_{k<=order} g^k tilde B_k (order defaults to K).
    Eigen::MatrixXd evaluate(double g, int order = -1) const;
    Eigen::VectorXd spectrum(double g, int order = -1) const;
};

// Runs the recursions m R^{(m)} = m B_m P_0 + sum_{i=1}^{m-1} (m-i) B_{m-i} R^{(i)}
// and its mirror for L, then assembles the coefficients of
// H_P(g) = L(g) H_g R(g) restricted to the unperturbed patch:
//   tilde B_k = sum_i L^{(i)} H0 R^{(k-i)} + alpha^n sum_i L^{(i)} V R^{(k-1-i)}.
ProjectedSeries projected_hamiltonian_series(const PatchProblem& problem, const BmoSeries& bmo, int K,
                                             bool check_bounds = true);

// <E_k(0)| H_P(g) |E_k(0)> - <E_1(0)| H_P(g) |E_1(0)> from the truncated series.
double phi_tilde(const ProjectedSeries& series, double g);

struct AntiResonanceSeries {
    double a0 = 0.0;                  // a_n(0)
    std::vector<double> coefficients; // raw Taylor coefficients c_k of a_n(g), index k (c_0 unused)
    std::vector<double> b;            // b_k = c_k / tilde alpha^{n k}
    double tilde_alpha = 0.0;

    bool bounds_ok() const;
    double evaluate(double g) const;
};

// a_n(g) = E_1(g) + E_2(g) for two isolated levels of H0 given by rank,
// each expanded with a rank-one contour projector. Throws NotIsolated if
// either level has a neighbour closer than twice the clearance.
AntiResonanceSeries antires_series(const PatchProblem& problem, std::size_t rank_a, std::size_t rank_b, int K,
                                   int nodes = 256);

// Operator 2-norm (largest singular value).
double operator_norm(const Eigen::MatrixXd& A);

} // namespace qsun::perturbation
