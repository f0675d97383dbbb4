#include "qsun/model.hpp"

#include "qsun/errors.hpp"
#include "qsun/rng.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace qsun::model {

double power_of(double base, double k)
{
    if (base == 0.0) return k > 0.0 ? 0.0 : 1.0;
    return std::exp(k * std::log(base));
}

std::pair<double, double> ModelParams::rho_interval() const
{
    if (alpha <= 0.0) return {0.0, 0.0};
    const double l = std::log(2.0) / std::log(1.0 / alpha);
    return {l, l / theta};
}

double ModelParams::rho_value() const
{
    if (rho) return *rho;
    if (alpha <= 0.0) return 0.5;
    const double l = std::log(2.0) / std::log(1.0 / alpha);
    return l * (1.0 + 1.0 / theta) / 2.0;
}

namespace {

std::string fmt(double x)
{
    std::ostringstream os;
    os.precision(6);
    os << x;
    return os.str();
}

} // namespace

void validate(const ModelParams& p)
{
    if (p.n_bath < 1) throw ValidationError("n_bath must satisfy 1 <= n_bath < n (got " + std::to_string(p.n_bath) + ")");
    if (p.n <= p.n_bath)
        throw ValidationError("n must satisfy n > n_bath = " + std::to_string(p.n_bath) + " (got " + std::to_string(p.n) + ")");
    if (!(p.alpha >= 0.0 && p.alpha < 1.0)) throw ValidationError("alpha must lie in (0, 1) (got " + fmt(p.alpha) + ")");
    if (!(p.theta > 2.0 / 3.0 && p.theta < 1.0)) throw ValidationError("theta must lie in (2/3, 1) (got " + fmt(p.theta) + ")");
    if (p.alpha > 0.0) {
        if (p.theta * p.n * std::log(1.0 / p.alpha) >= 700.0)
            throw ValidationError("theta * n * ln(1/alpha) must stay below 700 (got " +
                                  fmt(p.theta * p.n * std::log(1.0 / p.alpha)) + ")");
        const auto [lo, hi] = p.rho_interval();
        const double r = p.rho_value();
        if (!(r > lo && r < hi && r < 1.0)) {
            if (lo >= 1.0)
                throw ValidationError("alpha must lie in (0, 0.5) so that an admissible rho exists (got " + fmt(p.alpha) + ")");
            throw ValidationError("rho must lie in (" + fmt(lo) + ", " + fmt(std::min(hi, 1.0)) + ") (got " + fmt(r) + ")");
        }
    } else if (p.rho && !(*p.rho > 0.0 && *p.rho < 1.0)) {
        throw ValidationError("rho must lie in (0, 1) (got " + fmt(*p.rho) + ")");
    }
    if (!(p.bath.norm_bound > 0.0)) throw ValidationError("bath norm bound must be positive (got " + fmt(p.bath.norm_bound) + ")");
    build_bath(p.bath, p.n_bath);
}

DisorderRealization sample_disorder(const ModelParams& params, std::uint64_t realization_index)
{
    DisorderRealization d;
    d.index = realization_index;
    d.h.resize(static_cast<std::size_t>(params.n));
    d.g.resize(static_cast<std::size_t>(params.n));
    for (int i = 1; i <= params.n; ++i) {
        d.h[static_cast<std::size_t>(i - 1)] = rng::disorder_value(params.master_seed, realization_index, i, rng::Field::h);
        d.g[static_cast<std::size_t>(i - 1)] = rng::disorder_value(params.master_seed, realization_index, i, rng::Field::g);
    }
    return d;
}

HamiltonianMatrix build_bath(const BathSpec& spec, int n_bath)
{
    if (n_bath < 1 || n_bath > 12) throw ValidationError("n_bath must lie in [1, 12] (got " + std::to_string(n_bath) + ")");
    const Eigen::Index dim = Eigen::Index(1) << n_bath;
    HamiltonianMatrix hb;
    hb.scale = n_bath;
    if (const auto* dd = std::get_if<BathSpec::DefaultDiagonal>(&spec.kind)) {
        hb.entries = Eigen::MatrixXd::Zero(dim, dim);
        for (Eigen::Index k = 0; k < dim; ++k) {
            double e = dd->center;
            for (int i = 1; i <= n_bath; ++i) e += dd->half_gap * std::ldexp(1.0, 1 - i) * spin(static_cast<std::uint64_t>(k), i);
            hb.entries(k, k) = e;
        }
    } else {
        const auto& m = std::get<BathSpec::ExplicitMatrix>(spec.kind).entries;
        if (m.rows() != dim || m.cols() != dim)
            throw ValidationError("explicit bath matrix must be " + std::to_string(dim) + "x" + std::to_string(dim));
        if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw ValidationError("explicit bath matrix must be symmetric");
        hb.entries = 0.5 * (m + m.transpose());
    }

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hb.entries, Eigen::EigenvaluesOnly);
    const Eigen::VectorXd& e = es.eigenvalues();
    const double norm = e.cwiseAbs().maxCoeff();
    if (norm > spec.norm_bound)
        throw ValidationError("bath norm " + fmt(norm) + " exceeds the bound C_B = " + fmt(spec.norm_bound));
    double gap = INFINITY, antigap = INFINITY;
    for (Eigen::Index i = 0; i < e.size(); ++i) {
        if (i + 1 < e.size()) gap = std::min(gap, e(i + 1) - e(i));
        for (Eigen::Index j = i; j < e.size(); ++j) antigap = std::min(antigap, std::abs(e(i) + e(j)));
    }
    if (gap <= 1e-10) throw DegenerateBath("minimal bath gap " + fmt(gap) + " <= 1e-10");
    if (antigap <= 1e-10) throw DegenerateBath("minimal bath anti-gap " + fmt(antigap) + " <= 1e-10");
    return hb;
}

HamiltonianMatrix assemble(const ModelParams& params, const DisorderRealization& disorder, Level level, int max_scale)
{
    const int m = level.m;
    const bool half = level.kind == Level::Kind::Half;
    if (m < params.n_bath || m > params.n || (half && m + 1 > params.n))
        throw ValidationError("scale m must satisfy n_bath <= m <= n (got " + std::to_string(m) + (half ? "+1/2" : "") + ")");
    const int bits = half ? m + 1 : m;
    if (bits > max_scale)
        throw DimensionOverflow("dense dimension 2^" + std::to_string(bits) + " exceeds the limit 2^" + std::to_string(max_scale));

    const HamiltonianMatrix hb = build_bath(params.bath, params.n_bath);
    const std::uint64_t dim = 1ULL << bits;
    const std::uint64_t bath_dim = 1ULL << params.n_bath;
    const std::uint64_t bath_mask = bath_dim - 1;

    HamiltonianMatrix H;
    H.scale = m;
    H.half = half;
    H.entries = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    auto& A = H.entries;

    std::vector<double> coupling(static_cast<std::size_t>(m + 1), 0.0);
    for (int i = params.n_bath + 1; i <= m; ++i)
        coupling[static_cast<std::size_t>(i)] = power_of(params.alpha, i) * disorder.g_at(i);

    for (std::uint64_t k = 0; k < dim; ++k) {
        const auto col = static_cast<Eigen::Index>(k);
        const std::uint64_t rest = k & ~bath_mask;
        const std::uint64_t b = k & bath_mask;
        for (std::uint64_t b2 = 0; b2 < bath_dim; ++b2)
            A(static_cast<Eigen::Index>(rest | b2), col) = hb.entries(static_cast<Eigen::Index>(b2), static_cast<Eigen::Index>(b));
        double diag = 0.0;
        for (int i = params.n_bath + 1; i <= bits; ++i) diag += spin(k, i) * disorder.h_at(i);
        A(col, col) += diag;
        for (int i = params.n_bath + 1; i <= m; ++i) {
            const std::uint64_t l = k ^ (1ULL | (1ULL << (i - 1)));
            A(static_cast<Eigen::Index>(l), col) = coupling[static_cast<std::size_t>(i)];
        }
    }
    return H;
}

Eigen::MatrixXd coupling_operator(int m)
{
    const Eigen::Index dim = Eigen::Index(1) << m;
    Eigen::MatrixXd V = Eigen::MatrixXd::Zero(dim, dim);
    for (Eigen::Index k = 0; k < dim; ++k) V(k ^ (Eigen::Index(1) | (Eigen::Index(1) << (m - 1))), k) = 1.0;
    return V;
}

std::vector<double> free_energies(const ModelParams& params, const DisorderRealization& disorder, int m)
{
    const HamiltonianMatrix hb = build_bath(params.bath, params.n_bath);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(hb.entries, Eigen::EigenvaluesOnly);
    const std::uint64_t dim = 1ULL << m;
    const std::uint64_t bath_mask = (1ULL << params.n_bath) - 1;
    std::vector<double> e(dim);
    for (std::uint64_t k = 0; k < dim; ++k) {
        double v = es.eigenvalues()(static_cast<Eigen::Index>(k & bath_mask));
        for (int i = params.n_bath + 1; i <= m; ++i) v += spin(k, i) * disorder.h_at(i);
        e[k] = v;
    }
    return e;
}

} // namespace qsun::model
