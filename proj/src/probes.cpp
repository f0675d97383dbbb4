#include "qsun/probes.hpp"

#include "qsun/errors.hpp"
#include "qsun/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace qsun::probes {

namespace {

std::size_t words_for(int m) { return static_cast<std::size_t>((m + 63) / 64); }

std::uint64_t last_word_mask(int m)
{
    const int r = m % 64;
    return r == 0 ? ~0ULL : ((1ULL << r) - 1);
}

// Relative sign patterns rho_i = sigma_1 * sigma_{i+1} as packed words.
std::vector<std::vector<std::uint64_t>> relative_patterns(const MultiConfiguration& multi)
{
    std::vector<std::vector<std::uint64_t>> rho;
    for (int i = 1; i < multi.k(); ++i) {
        std::vector<std::uint64_t> r(words_for(multi.m));
        for (std::size_t w = 0; w < r.size(); ++w) r[w] = multi.configs[0][w] ^ multi.configs[static_cast<std::size_t>(i)][w];
        rho.push_back(std::move(r));
    }
    return rho;
}

double log_multinomial(int m, std::span<const std::size_t> sizes)
{
    double v = std::lgamma(m + 1.0);
    for (std::size_t l : sizes) v -= std::lgamma(static_cast<double>(l) + 1.0);
    return v;
}

// Calls visit(sizes) for every composition of m into `parts` non-negative parts.
void for_each_composition(int m, int parts, const std::function<void(std::span<const std::size_t>)>& visit)
{
    std::vector<std::size_t> sizes(static_cast<std::size_t>(parts), 0);
    std::function<void(int, int)> rec = [&](int idx, int left) {
        if (idx == parts - 1) {
            sizes[static_cast<std::size_t>(idx)] = static_cast<std::size_t>(left);
            visit(sizes);
            return;
        }
        for (int l = 0; l <= left; ++l) {
            sizes[static_cast<std::size_t>(idx)] = static_cast<std::size_t>(l);
            rec(idx + 1, left - l);
        }
    };
    rec(0, m);
}

} // namespace

int MultiConfiguration::spin(int which, int site) const
{
    const auto& c = configs.at(static_cast<std::size_t>(which));
    const auto b = static_cast<std::size_t>(site - 1);
    return ((c[b / 64] >> (b % 64)) & 1ULL) ? -1 : +1;
}

MultiConfiguration MultiConfiguration::from_spins(const std::vector<std::vector<int>>& spins)
{
    MultiConfiguration mc;
    if (spins.empty()) return mc;
    mc.m = static_cast<int>(spins[0].size());
    for (const auto& s : spins) {
        if (static_cast<int>(s.size()) != mc.m) throw std::invalid_argument("from_spins: ragged input");
        std::vector<std::uint64_t> w(words_for(mc.m), 0);
        for (std::size_t x = 0; x < s.size(); ++x)
            if (s[x] < 0) w[x / 64] |= 1ULL << (x % 64);
        mc.configs.push_back(std::move(w));
    }
    return mc;
}

std::vector<std::size_t> MultiConfiguration::class_sizes() const
{
    const int kk = k();
    if (kk < 1) return {};
    std::vector<std::size_t> sizes(std::size_t(1) << (kk - 1), 0);
    if (kk == 1) {
        sizes[0] = static_cast<std::size_t>(m);
        return sizes;
    }
    const auto rho = relative_patterns(*this);
    for (int x = 0; x < m; ++x) {
        std::size_t tau = 0;
        for (int t = 0; t < kk - 1; ++t)
            if ((rho[static_cast<std::size_t>(t)][static_cast<std::size_t>(x / 64)] >> (x % 64)) & 1ULL) tau |= std::size_t(1) << t;
        ++sizes[tau];
    }
    return sizes;
}

bool is_typical_sizes(std::span<const std::size_t> sizes, int m, int k, double exponent)
{
    const double target = m / std::ldexp(1.0, k - 1);
    const double tol = std::pow(static_cast<double>(m), exponent);
    for (std::size_t l : sizes)
        if (std::abs(static_cast<double>(l) - target) > tol) return false;
    return true;
}

Typicality typicality(const MultiConfiguration& multi, double exponent)
{
    const int k = multi.k();
    if (k <= 1) return Typicality::Typical;
    const auto sizes = multi.class_sizes();
    if (is_typical_sizes(sizes, multi.m, k, exponent)) return Typicality::Typical;
    if (std::find(sizes.begin(), sizes.end(), 0) == sizes.end()) return Typicality::Atypical;
    // Empty class: degenerate when the relative patterns obey a product
    // relation with at least two factors (rho_i rho_j ... = +-1 pointwise).
    const auto rho = relative_patterns(multi);
    const std::size_t words = words_for(multi.m);
    const std::uint64_t tail = last_word_mask(multi.m);
    for (std::uint64_t subset = 1; subset < (1ULL << (k - 1)); ++subset) {
        if (std::popcount(subset) < 2) continue;
        bool zero = true, ones = true;
        for (std::size_t w = 0; w < words; ++w) {
            std::uint64_t x = 0;
            for (int t = 0; t < k - 1; ++t)
                if ((subset >> t) & 1ULL) x ^= rho[static_cast<std::size_t>(t)][w];
            const std::uint64_t mask = w + 1 == words ? tail : ~0ULL;
            zero &= (x & mask) == 0;
            ones &= (x & mask) == mask;
        }
        if (zero || ones) return Typicality::Degenerate;
    }
    return Typicality::Atypical;
}

long double tuples_with_sizes(int m, std::span<const std::size_t> sizes)
{
    std::size_t total = 0;
    for (std::size_t l : sizes) total += l;
    if (total != static_cast<std::size_t>(m)) return 0.0L;
    if (m <= 60) {
        // exact multinomial as a product of binomials in 128-bit integers
        unsigned __int128 mult = 1;
        std::size_t used = 0;
        for (std::size_t l : sizes) {
            unsigned __int128 binom = 1;
            for (std::size_t i = 1; i <= l; ++i) binom = binom * (used + i) / i;
            used += l;
            mult *= binom;
        }
        return std::ldexp(static_cast<long double>(mult), m);
    }
    return std::exp(static_cast<long double>(log_multinomial(m, sizes)) + m * std::log(2.0L));
}

long double typical_count(int m, int k, double exponent)
{
    if (k == 1) return std::ldexp(1.0L, m);
    long double total = 0.0L;
    for_each_composition(m, 1 << (k - 1), [&](std::span<const std::size_t> sizes) {
        if (is_typical_sizes(sizes, m, k, exponent)) total += tuples_with_sizes(m, sizes);
    });
    return total;
}

double log_atypical_fraction_exact(int m, int k, double exponent)
{
    if (k == 1) return -std::numeric_limits<double>::infinity();
    const int parts = 1 << (k - 1);
    const double log_total = m * std::log(static_cast<double>(parts));
    std::vector<double> logs;
    for_each_composition(m, parts, [&](std::span<const std::size_t> sizes) {
        if (!is_typical_sizes(sizes, m, k, exponent)) logs.push_back(log_multinomial(m, sizes) - log_total);
    });
    if (logs.empty()) return -std::numeric_limits<double>::infinity();
    const double mx = *std::max_element(logs.begin(), logs.end());
    double s = 0.0;
    for (double v : logs) s += std::exp(v - mx);
    return mx + std::log(s);
}

FractionEstimate atypical_fraction(int m, int k, std::uint64_t trials, std::uint64_t seed, double exponent)
{
    if (trials < 10000) throw std::invalid_argument("atypical_fraction: need at least 10^4 trials");
    FractionEstimate out;
    out.trials = trials;
    if (k == 1) return out;
    rng::Stream stream(seed, 0xA7);
    const std::size_t words = words_for(m);
    const std::uint64_t tail = last_word_mask(m);
    MultiConfiguration mc;
    mc.m = m;
    mc.configs.assign(static_cast<std::size_t>(k), std::vector<std::uint64_t>(words));
    std::uint64_t atypical = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        for (auto& c : mc.configs) {
            for (auto& w : c) w = stream.next_bits();
            c.back() &= tail;
        }
        atypical += !is_typical_sizes(mc.class_sizes(), m, k, exponent);
    }
    const double p = static_cast<double>(atypical) / static_cast<double>(trials);
    out.fraction = p;
    out.se = std::sqrt(p * (1.0 - p) / static_cast<double>(trials));
    return out;
}

double gaussian_mass(double a, double b, double var)
{
    const double s = std::sqrt(2.0 * var);
    return 0.5 * (std::erf(b / s) - std::erf(a / s));
}

FactorizationResult free_factorization(const MultiConfiguration& multi, const std::vector<std::pair<double, double>>& intervals,
                                       std::uint64_t trials, std::uint64_t seed)
{
    const int k = multi.k();
    if (static_cast<int>(intervals.size()) != k) throw std::invalid_argument("free_factorization: one interval per configuration");
    rng::Stream stream(seed, 0xFAC7);
    std::vector<std::vector<int>> spins(static_cast<std::size_t>(k), std::vector<int>(static_cast<std::size_t>(multi.m)));
    for (int i = 0; i < k; ++i)
        for (int x = 1; x <= multi.m; ++x) spins[static_cast<std::size_t>(i)][static_cast<std::size_t>(x - 1)] = multi.spin(i, x);

    std::vector<double> h(static_cast<std::size_t>(multi.m));
    std::vector<std::uint64_t> hits(static_cast<std::size_t>(k), 0);
    std::uint64_t joint = 0;
    for (std::uint64_t t = 0; t < trials; ++t) {
        for (double& v : h) v = stream.centered();
        bool all = true;
        for (int i = 0; i < k; ++i) {
            double e = 0.0;
            const auto& s = spins[static_cast<std::size_t>(i)];
            for (std::size_t x = 0; x < h.size(); ++x) e += s[x] * h[x];
            const auto& [a, b] = intervals[static_cast<std::size_t>(i)];
            const bool in = e >= a && e <= b;
            hits[static_cast<std::size_t>(i)] += in;
            all &= in;
        }
        joint += all;
    }
    FactorizationResult out;
    const double T = static_cast<double>(trials);
    out.joint = static_cast<double>(joint) / T;
    out.mc_err = std::sqrt(out.joint * (1.0 - out.joint) / T);
    out.product = 1.0;
    double lengths = 1.0;
    for (int i = 0; i < k; ++i) {
        const auto& [a, b] = intervals[static_cast<std::size_t>(i)];
        out.product *= gaussian_mass(a, b, multi.m / 12.0);
        out.marginals.push_back(static_cast<double>(hits[static_cast<std::size_t>(i)]) / T);
        lengths *= b - a;
    }
    out.envelope = 2.0 * out.mc_err + 0.05 * lengths / std::sqrt(static_cast<double>(multi.m));
    return out;
}

double ConvolutionDensity::mass() const
{
    long double s = 0.0L;
    for (double v : values) s += v;
    return static_cast<double>(s * step);
}

ConvolutionDensity uniform_density(double step)
{
    const double half = 0.5 / step;
    const long long H = std::llround(half);
    if (std::abs(half - static_cast<double>(H)) > 1e-9) throw std::invalid_argument("uniform_density: 1/(2 step) must be an integer");
    ConvolutionDensity f;
    f.step = step;
    f.offset = H;
    f.values.assign(static_cast<std::size_t>(2 * H + 1), 1.0);
    f.values.front() = 0.5;
    f.values.back() = 0.5;
    return f;
}

ConvolutionDensity convolve_uniform(const ConvolutionDensity& f)
{
    const long long H = std::llround(0.5 / f.step);
    const auto N = static_cast<long long>(f.values.size());
    ConvolutionDensity g;
    g.step = f.step;
    g.offset = f.offset + H;
    g.values.assign(static_cast<std::size_t>(N + 2 * H), 0.0);
    std::vector<long double> prefix(static_cast<std::size_t>(N + 1), 0.0L);
    for (long long j = 0; j < N; ++j) prefix[static_cast<std::size_t>(j + 1)] = prefix[static_cast<std::size_t>(j)] + f.values[static_cast<std::size_t>(j)];
    auto at = [&](long long j) { return (j >= 0 && j < N) ? static_cast<long double>(f.values[static_cast<std::size_t>(j)]) : 0.0L; };
    // g[i] = step * (sum_{j=i-2H}^{i} f[j] - f[i-2H]/2 - f[i]/2)
    for (long long i = 0; i < N + 2 * H; ++i) {
        const long long lo = std::max(0LL, i - 2 * H), hi = std::min(N - 1, i);
        const long double window = lo <= hi ? prefix[static_cast<std::size_t>(hi + 1)] - prefix[static_cast<std::size_t>(lo)] : 0.0L;
        g.values[static_cast<std::size_t>(i)] = static_cast<double>(f.step * (window - 0.5L * at(i - 2 * H) - 0.5L * at(i)));
    }
    return g;
}

double sup_distance_to_gaussian(const ConvolutionDensity& f, int n)
{
    const double var = n / 12.0;
    const double norm = 1.0 / std::sqrt(2.0 * std::numbers::pi * var);
    double sup = 0.0;
    for (std::size_t j = 0; j < f.values.size(); ++j) {
        const double x = f.x(j);
        sup = std::max(sup, std::abs(f.values[j] - norm * std::exp(-x * x / (2.0 * var))));
    }
    return sup;
}

std::vector<LcltRow> lclt_check(const std::vector<int>& n_list, double step)
{
    if (n_list.empty()) return {};
    if (!std::is_sorted(n_list.begin(), n_list.end()) || n_list.front() < 1) throw std::invalid_argument("lclt_check: n_list must be ascending and positive");
    std::vector<LcltRow> rows;
    for (int n : n_list) rows.push_back({n, 0.0, 0.0, 0.0});
    for (int pass = 0; pass < 2; ++pass) {
        const double h = pass == 0 ? step : step / 2.0;
        ConvolutionDensity f = uniform_density(h);
        double mass_err = std::abs(f.mass() - 1.0);
        int current = 1;
        for (auto& row : rows) {
            while (current < row.n) {
                f = convolve_uniform(f);
                ++current;
                mass_err = std::max(mass_err, std::abs(f.mass() - 1.0));
            }
            const double v = std::sqrt(static_cast<double>(row.n)) * sup_distance_to_gaussian(f, row.n);
            if (pass == 0) {
                row.scaled_sup = v;
                row.mass_error = mass_err;
            } else {
                row.scaled_sup_half = v;
            }
        }
    }
    for (const auto& row : rows)
        if (std::abs(row.scaled_sup - row.scaled_sup_half) > 0.1 * std::abs(row.scaled_sup_half))
            throw GridTooCoarse("n = " + std::to_string(row.n) + ": step and step/2 differ by more than 10%");
    return rows;
}

GapReport gap_antigap(std::span<const double> spectrum)
{
    std::vector<double> e(spectrum.begin(), spectrum.end());
    std::sort(e.begin(), e.end());
    GapReport r;
    r.dmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < e.size(); ++i) r.dmin = std::min(r.dmin, e[i + 1] - e[i]);
    r.dplus = std::numeric_limits<double>::infinity();
    if (!e.empty()) {
        std::size_t i = 0, j = e.size() - 1;
        while (i <= j) {
            const double s = e[i] + e[j];
            r.dplus = std::min(r.dplus, std::abs(s));
            if (s < 0.0) {
                ++i;
            } else {
                if (j == 0) break;
                --j;
            }
        }
    }
    r.zero_gap = r.dmin <= 0.0;
    r.zero_antigap = r.dplus <= 0.0;
    return r;
}

} // namespace qsun::probes
