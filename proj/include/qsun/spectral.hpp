#pragma once

#include "qsun/model.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

namespace qsun::spectral {

// sigma in Sigma_m packed into bits: bit (i-1) holds site i, 0 <-> +1.
struct Configuration {
    std::uint64_t bits = 0;
    int m = 0;

    int spin(int site) const { return ((bits >> (site - 1)) & 1ULL) ? -1 : +1; }
    // (sigma, mu): appends site m+1 carrying mu.
    Configuration append(int mu) const { return {bits | (mu < 0 ? (1ULL << m) : 0ULL), m + 1}; }
    // Restriction to sites 1..k.
    Configuration prefix(int k) const { return {bits & ((1ULL << k) - 1), k}; }
    friend bool operator==(const Configuration&, const Configuration&) = default;
};

struct Eigensystem {
    Eigen::VectorXd values;                 // ascending
    std::optional<Eigen::MatrixXd> vectors; // columns aligned with values
    std::size_t ties = 0;                   // adjacent pairs closer than 1e-13 max(1,|H|)
};

// Dense symmetric eigensolver (LAPACK). Couplings that split the matrix into
// independent blocks are detected from the sparsity pattern and each block
// is solved separately; the result is identical up to rounding to a solve of
// the full matrix. Vectors use the phase convention that the first
// significant component (|v_k| > 1e-8 max|v|) is positive.
Eigensystem diagonalize(const Eigen::MatrixXd& H, bool want_vectors);
inline Eigensystem diagonalize(const model::HamiltonianMatrix& H, bool want_vectors)
{
    return diagonalize(H.entries, want_vectors);
}

struct LabeledSpectrum {
    int scale = 0;
    std::vector<double> eigenvalues;         // ascending
    std::vector<std::uint32_t> labels;       // labels[j]: configuration of the j-th eigenvalue
    std::vector<std::uint32_t> positions;    // inverse of labels
    std::optional<Eigen::MatrixXd> vectors;  // columns aligned with eigenvalues

    std::size_t size() const { return eigenvalues.size(); }
    double energy(std::uint64_t config) const { return eigenvalues[positions[config]]; }
    Configuration label(std::size_t j) const { return {labels[j], scale}; }
};

struct HalfLevel {
    double value;
    std::uint32_t label; // (sigma, mu) at scale m+1
};

struct SpectrumLadder {
    int n_bath = 1;
    int top = 0;
    double alpha = 0.0;
    std::vector<double> h;                // h[i-1], all sites of the realization
    std::vector<LabeledSpectrum> scales;  // scales[m - n_bath]
    std::vector<double> max_deviation;    // Weyl deviation per scale (0 at the base)
    std::size_t ties = 0;

    const LabeledSpectrum& at(int m) const { return scales.at(static_cast<std::size_t>(m - n_bath)); }
    double h_at(int site) const { return h.at(static_cast<std::size_t>(site - 1)); }

    // Spectrum of H_{m+1/2} = H_m + h_{m+1} Z_{m+1}, built arithmetically
    // from the scale-m spectrum as {E_sigma + mu h_{m+1}}, sorted by value
    // with ties broken by ascending label.
    std::vector<HalfLevel> half_step(int m) const;
};

struct LadderOptions {
    int top = -1;               // highest scale computed; -1 means params.n
    bool vectors_at_top = false;
    int max_scale = model::default_max_scale;
};

// Inductive labeling: at the base scale ascending eigenvalue <-> ascending
// configuration index; at each later scale the j-th smallest eigenvalue of
// H_m inherits the label of the j-th smallest half-step value. Throws
// WeylViolation if any deviation exceeds alpha^m + 1e-12.
SpectrumLadder label_ladder(const model::ModelParams& params, const model::DisorderRealization& disorder,
                            const LadderOptions& options = {});

// max over sigma in Sigma_{m_start-1} of |E_{(sigma,mubar)} - (E_sigma + sum mubar(x) h_x)|,
// where bit t of suffix_bits carries mubar(m_start + t).
double cumulative_label_error(const SpectrumLadder& ladder, int m_start, int m_end, std::uint64_t suffix_bits);

// Little-endian binary dump of eigenvalues and labels per scale:
//   "QSLD" | u32 version=1 | i32 n_bath | i32 top | f64 alpha | u32 n_fields | f64 h[n_fields]
//   then per scale m = n_bath..top: i32 m | u64 count | f64 eigenvalues[count] | u32 labels[count]
void write_ladder(std::ostream& out, const SpectrumLadder& ladder);
SpectrumLadder read_ladder(std::istream& in);

} // namespace qsun::spectral
