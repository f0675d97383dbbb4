#include "qsun/spectral.hpp"

#include "qsun/errors.hpp"

#include <lapacke.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>

extern "C" void openblas_set_num_threads(int);

namespace qsun::spectral {

namespace {

void single_threaded_blas()
{
    static std::once_flag flag;
    std::call_once(flag, [] { openblas_set_num_threads(1); });
}

// Connected components of the nonzero pattern; component ids are assigned in
// order of the smallest member index.
std::vector<int> components(const Eigen::MatrixXd& H, int& count)
{
    const Eigen::Index n = H.rows();
    std::vector<int> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[static_cast<std::size_t>(x)] != x) {
            parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
            x = parent[static_cast<std::size_t>(x)];
        }
        return x;
    };
    for (Eigen::Index j = 0; j < n; ++j) {
        const double* col = H.col(j).data();
        for (Eigen::Index i = j + 1; i < n; ++i) {
            if (col[i] != 0.0) {
                int a = find(static_cast<int>(i)), b = find(static_cast<int>(j));
                if (a != b) parent[static_cast<std::size_t>(std::max(a, b))] = std::min(a, b);
            }
        }
    }
    std::vector<int> id(static_cast<std::size_t>(n), -1), root_id(static_cast<std::size_t>(n), -1);
    count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        const int r = find(static_cast<int>(i));
        if (root_id[static_cast<std::size_t>(r)] < 0) root_id[static_cast<std::size_t>(r)] = count++;
        id[static_cast<std::size_t>(i)] = root_id[static_cast<std::size_t>(r)];
    }
    return id;
}

void solve_block(Eigen::MatrixXd& A, Eigen::VectorXd& w, bool want_vectors)
{
    const lapack_int n = static_cast<lapack_int>(A.rows());
    w.resize(n);
    if (n == 1) {
        w(0) = A(0, 0);
        A(0, 0) = 1.0;
        return;
    }
    lapack_int info = 0;
    if (want_vectors) {
        info = LAPACKE_dsyevd(LAPACK_COL_MAJOR, 'V', 'L', n, A.data(), n, w.data());
    } else {
        lapack_int found = 0;
        std::vector<lapack_int> support(2 * static_cast<std::size_t>(n));
        double dummy = 0.0;
        info = LAPACKE_dsyevr(LAPACK_COL_MAJOR, 'N', 'A', 'L', n, A.data(), n, 0.0, 0.0, 0, 0, 0.0, &found, w.data(),
                              &dummy, 1, support.data());
    }
    if (info != 0) throw Error("LAPACK eigensolver failed with info = " + std::to_string(info));
}

} // namespace

Eigensystem diagonalize(const Eigen::MatrixXd& H, bool want_vectors)
{
    single_threaded_blas();
    const Eigen::Index n = H.rows();
    if (H.cols() != n) throw std::invalid_argument("diagonalize: matrix must be square");
    Eigensystem out;
    if (n == 0) {
        out.values.resize(0);
        if (want_vectors) out.vectors = Eigen::MatrixXd(0, 0);
        return out;
    }

    int count = 0;
    const std::vector<int> comp = components(H, count);
    std::vector<std::vector<Eigen::Index>> members(static_cast<std::size_t>(count));
    for (Eigen::Index i = 0; i < n; ++i) members[static_cast<std::size_t>(comp[static_cast<std::size_t>(i)])].push_back(i);

    struct Pair {
        double value;
        int block;
        Eigen::Index column;
    };
    std::vector<Pair> all;
    all.reserve(static_cast<std::size_t>(n));
    std::vector<Eigen::MatrixXd> vecs(static_cast<std::size_t>(count));
    for (int c = 0; c < count; ++c) {
        const auto& idx = members[static_cast<std::size_t>(c)];
        const auto bn = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd A(bn, bn);
        for (Eigen::Index j = 0; j < bn; ++j)
            for (Eigen::Index i = 0; i < bn; ++i) A(i, j) = H(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
        Eigen::VectorXd w;
        solve_block(A, w, want_vectors);
        for (Eigen::Index j = 0; j < bn; ++j) all.push_back({w(j), c, j});
        if (want_vectors) vecs[static_cast<std::size_t>(c)] = std::move(A);
    }
    std::stable_sort(all.begin(), all.end(), [](const Pair& a, const Pair& b) {
        if (a.value != b.value) return a.value < b.value;
        return a.block < b.block;
    });

    out.values.resize(n);
    for (Eigen::Index j = 0; j < n; ++j) out.values(j) = all[static_cast<std::size_t>(j)].value;
    const double scale = std::max(1.0, std::max(std::abs(out.values(0)), std::abs(out.values(n - 1))));
    for (Eigen::Index j = 0; j + 1 < n; ++j)
        if (out.values(j + 1) - out.values(j) < 1e-13 * scale) ++out.ties;

    if (want_vectors) {
        Eigen::MatrixXd V = Eigen::MatrixXd::Zero(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            const Pair& p = all[static_cast<std::size_t>(j)];
            const auto& idx = members[static_cast<std::size_t>(p.block)];
            const auto& B = vecs[static_cast<std::size_t>(p.block)];
            for (std::size_t r = 0; r < idx.size(); ++r) V(idx[r], j) = B(static_cast<Eigen::Index>(r), p.column);
            const double cutoff = 1e-8 * V.col(j).cwiseAbs().maxCoeff();
            for (Eigen::Index r = 0; r < n; ++r) {
                if (std::abs(V(r, j)) > cutoff) {
                    if (V(r, j) < 0.0) V.col(j) *= -1.0;
                    break;
                }
            }
        }
        out.vectors = std::move(V);
    }
    return out;
}

std::vector<HalfLevel> SpectrumLadder::half_step(int m) const
{
    const LabeledSpectrum& s = at(m);
    const double hm = h_at(m + 1);
    const std::uint32_t flip = 1U << m;
    const std::size_t N = s.size();
    // Both shifted copies are already sorted; merge them. mu = +1 keeps bit m clear.
    std::vector<HalfLevel> plus(N), minus(N), out(2 * N);
    for (std::size_t j = 0; j < N; ++j) {
        plus[j] = {s.eigenvalues[j] + hm, s.labels[j]};
        minus[j] = {s.eigenvalues[j] - hm, s.labels[j] | flip};
    }
    auto less = [](const HalfLevel& a, const HalfLevel& b) {
        if (a.value != b.value) return a.value < b.value;
        return a.label < b.label;
    };
    // Within one copy the order is by value; equal values inside a copy come
    // from ties at scale m and are reordered by label here.
    std::stable_sort(plus.begin(), plus.end(), less);
    std::stable_sort(minus.begin(), minus.end(), less);
    std::merge(plus.begin(), plus.end(), minus.begin(), minus.end(), out.begin(), less);
    return out;
}

SpectrumLadder label_ladder(const model::ModelParams& params, const model::DisorderRealization& disorder,
                            const LadderOptions& options)
{
    const int top = options.top < 0 ? params.n : options.top;
    if (top < params.n_bath || top > params.n) throw ValidationError("ladder top scale must lie in [n_bath, n]");
    if (top > options.max_scale)
        throw DimensionOverflow("ladder top 2^" + std::to_string(top) + " exceeds the limit 2^" + std::to_string(options.max_scale));

    SpectrumLadder ladder;
    ladder.n_bath = params.n_bath;
    ladder.top = top;
    ladder.alpha = params.alpha;
    ladder.h = disorder.h;

    {
        const auto hb = model::build_bath(params.bath, params.n_bath);
        const bool vec = options.vectors_at_top && top == params.n_bath;
        Eigensystem es = diagonalize(hb, vec);
        LabeledSpectrum base;
        base.scale = params.n_bath;
        base.eigenvalues.assign(es.values.data(), es.values.data() + es.values.size());
        base.labels.resize(base.eigenvalues.size());
        std::iota(base.labels.begin(), base.labels.end(), 0U);
        base.positions = base.labels;
        if (vec) base.vectors = std::move(es.vectors);
        ladder.ties += es.ties;
        ladder.scales.push_back(std::move(base));
        ladder.max_deviation.push_back(0.0);
    }

    for (int m = params.n_bath + 1; m <= top; ++m) {
        const std::vector<HalfLevel> half = ladder.half_step(m - 1);
        const bool vec = options.vectors_at_top && m == top;
        Eigensystem es = diagonalize(model::assemble(params, disorder, model::Level::full(m), options.max_scale), vec);
        LabeledSpectrum s;
        s.scale = m;
        const std::size_t N = half.size();
        s.eigenvalues.assign(es.values.data(), es.values.data() + es.values.size());
        s.labels.resize(N);
        s.positions.assign(N, 0U);
        double dev = 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            s.labels[j] = half[j].label;
            s.positions[half[j].label] = static_cast<std::uint32_t>(j);
            dev = std::max(dev, std::abs(s.eigenvalues[j] - half[j].value));
        }
        const double bound = model::power_of(params.alpha, m) + 1e-12;
        if (dev > bound)
            throw WeylViolation("scale " + std::to_string(m) + ": deviation " + std::to_string(dev) + " exceeds alpha^m + 1e-12 = " +
                                std::to_string(bound));
        if (vec) s.vectors = std::move(es.vectors);
        ladder.ties += es.ties;
        ladder.max_deviation.push_back(dev);
        ladder.scales.push_back(std::move(s));
    }
    return ladder;
}

double cumulative_label_error(const SpectrumLadder& ladder, int m_start, int m_end, std::uint64_t suffix_bits)
{
    if (!(ladder.n_bath < m_start && m_start <= m_end && m_end <= ladder.top))
        throw std::invalid_argument("cumulative_label_error: need n_bath < m_start <= m_end <= top");
    const LabeledSpectrum& lo = ladder.at(m_start - 1);
    const LabeledSpectrum& hi = ladder.at(m_end);
    double shift = 0.0;
    for (int x = m_start; x <= m_end; ++x) shift += (((suffix_bits >> (x - m_start)) & 1ULL) ? -1.0 : 1.0) * ladder.h_at(x);
    const std::uint64_t high = suffix_bits << (m_start - 1);
    double err = 0.0;
    for (std::uint64_t sigma = 0; sigma < lo.size(); ++sigma)
        err = std::max(err, std::abs(hi.energy(sigma | high) - (lo.energy(sigma) + shift)));
    return err;
}

namespace {

template <typename T>
void put(std::ostream& out, T value)
{
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &value, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T get(std::istream& in)
{
    unsigned char buf[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(T))) throw Error("ladder dump truncated");
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + sizeof(T));
    T value;
    std::memcpy(&value, buf, sizeof(T));
    return value;
}

} // namespace

void write_ladder(std::ostream& out, const SpectrumLadder& ladder)
{
    out.write("QSLD", 4);
    put<std::uint32_t>(out, 1);
    put<std::int32_t>(out, ladder.n_bath);
    put<std::int32_t>(out, ladder.top);
    put<double>(out, ladder.alpha);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(ladder.h.size()));
    for (double v : ladder.h) put<double>(out, v);
    for (const auto& s : ladder.scales) {
        put<std::int32_t>(out, s.scale);
        put<std::uint64_t>(out, s.size());
        for (double v : s.eigenvalues) put<double>(out, v);
        for (std::uint32_t l : s.labels) put<std::uint32_t>(out, l);
    }
}

SpectrumLadder read_ladder(std::istream& in)
{
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, "QSLD", 4) != 0) throw Error("not a ladder dump");
    if (get<std::uint32_t>(in) != 1) throw Error("unsupported ladder dump version");
    SpectrumLadder ladder;
    ladder.n_bath = get<std::int32_t>(in);
    ladder.top = get<std::int32_t>(in);
    ladder.alpha = get<double>(in);
    ladder.h.resize(get<std::uint32_t>(in));
    for (double& v : ladder.h) v = get<double>(in);
    for (int m = ladder.n_bath; m <= ladder.top; ++m) {
        LabeledSpectrum s;
        s.scale = get<std::int32_t>(in);
        const auto count = get<std::uint64_t>(in);
        s.eigenvalues.resize(count);
        s.labels.resize(count);
        s.positions.resize(count);
        for (double& v : s.eigenvalues) v = get<double>(in);
        for (std::size_t j = 0; j < count; ++j) {
            s.labels[j] = get<std::uint32_t>(in);
            s.positions.at(s.labels[j]) = static_cast<std::uint32_t>(j);
        }
        ladder.scales.push_back(std::move(s));
        ladder.max_deviation.push_back(0.0);
    }
    return ladder;
}

} // namespace qsun::spectral
