#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <variant>
#include <vector>

namespace qsun::model {

// exp(k * ln(base)) with base = 0 mapped to 0 for k > 0. Thresholds and
// couplings are formed this way throughout to avoid pow drift.
double power_of(double base, double k);

struct BathSpec {
    // c*I + a * sum_{i=1..n_B} 2^{1-i} Z_i; for n_B = 1 this is diag(c+a, c-a).
    struct DefaultDiagonal {
        double center = 0.5;
        double half_gap = 0.3;
    };
    struct ExplicitMatrix {
        Eigen::MatrixXd entries;
    };

    std::variant<DefaultDiagonal, ExplicitMatrix> kind = DefaultDiagonal{};
    double norm_bound = 1.1;
};

struct ModelParams {
    int n = 8;
    int n_bath = 1;
    double alpha = 0.1;
    double theta = 0.8;
    BathSpec bath;
    std::optional<double> rho; // unset: midpoint of the admissible interval
    std::uint64_t master_seed = 1;

    // Splitting constant actually used (explicit rho or the default midpoint).
    double rho_value() const;
    // Admissible open interval for rho given alpha and theta.
    std::pair<double, double> rho_interval() const;
};

// Throws ValidationError naming the offending field and its valid range.
// alpha = 0 is accepted as the free model; the rho interval is then empty
// and any explicit rho in (0,1) is used as given (default 1/2).
void validate(const ModelParams& params);

struct DisorderRealization {
    std::vector<double> h; // h[i-1] is the field on site i
    std::vector<double> g; // g[i-1] is the coupling disorder on site i
    std::uint64_t index = 0;

    double h_at(int site) const { return h.at(static_cast<std::size_t>(site - 1)); }
    double g_at(int site) const { return g.at(static_cast<std::size_t>(site - 1)); }
};

DisorderRealization sample_disorder(const ModelParams& params, std::uint64_t realization_index);

struct HamiltonianMatrix {
    Eigen::MatrixXd entries;
    int scale = 0;      // m
    bool half = false;  // true for H_{m+1/2}, dim 2^{m+1}

    Eigen::Index dim() const { return entries.rows(); }
};

struct Level {
    enum class Kind { Full, Half };
    Kind kind = Kind::Full;
    int m = 0;

    static Level full(int m) { return {Kind::Full, m}; }
    static Level half(int m) { return {Kind::Half, m}; }
};

inline constexpr int default_max_scale = 14;

// Bath matrix on 2^{n_B} states; checks symmetry, the norm bound and the
// gap / anti-gap non-degeneracy condition (tolerance 1e-10).
HamiltonianMatrix build_bath(const BathSpec& spec, int n_bath);

// Full(m): H_B (x) I + sum_{i=n_B+1..m} (h_i Z_i + alpha^i g_i X_1 X_i).
// Half(m): Full(m) + h_{m+1} Z_{m+1} on 2^{m+1} states.
// Site i is bit (i-1) of the basis index; bit value 0 means Z_i = +1.
HamiltonianMatrix assemble(const ModelParams& params, const DisorderRealization& disorder, Level level,
                           int max_scale = default_max_scale);

// alpha^m g_m X_1 X_m on 2^m states: the coupling added between Half(m-1)
// and Full(m), with the disorder amplitude g left out (unit strength).
Eigen::MatrixXd coupling_operator(int m);

// Free configuration energies: bath level plus sum of sigma(i) h_i,
// indexed by basis state (bath bits hold the bath eigenstate index in
// ascending eigenvalue order). Only meaningful for alpha = 0.
std::vector<double> free_energies(const ModelParams& params, const DisorderRealization& disorder, int m);

// Z-eigenvalue of site i in basis state k.
inline int spin(std::uint64_t k, int site) { return ((k >> (site - 1)) & 1ULL) ? -1 : +1; }

} // namespace qsun::model
