#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace qsun::stats {

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    std::size_t count = 0;
};

// Plain sample mean with standard error s/sqrt(N).
MeanSe mean_se(std::span<const double> values);

// Leave-one-out jackknife of an arbitrary statistic over per-realization
// blocks. For the mean it coincides with mean_se.
MeanSe jackknife(std::size_t blocks, const std::function<double(std::size_t skip)>& statistic,
                 double full_value);

// Ratio-of-sums estimator (sum num / sum den) with jackknife error.
MeanSe ratio_jackknife(std::span<const double> num, std::span<const double> den);

double median(std::vector<double> values);

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};
LineFit least_squares(std::span<const double> x, std::span<const double> y);

// Mergeable aggregate: count, sum, sum of squares. Merges are associative
// up to floating rounding; the harness merges in a fixed tree order.
struct Moments {
    std::size_t count = 0;
    double sum = 0.0;
    double sum_sq = 0.0;

    void add(double x)
    {
        ++count;
        sum += x;
        sum_sq += x * x;
    }
    void merge(const Moments& other)
    {
        count += other.count;
        sum += other.sum;
        sum_sq += other.sum_sq;
    }
    double mean() const { return count ? sum / static_cast<double>(count) : 0.0; }
    double variance() const;
    double se() const;
};

// Reduces items[0..n) pairwise in a tree whose shape depends only on n.
template <typename T, typename Merge>
T tree_reduce(std::vector<T> items, Merge merge)
{
    if (items.empty()) return T{};
    while (items.size() > 1) {
        std::vector<T> next;
        next.reserve((items.size() + 1) / 2);
        for (std::size_t i = 0; i + 1 < items.size(); i += 2) {
            T a = std::move(items[i]);
            merge(a, items[i + 1]);
            next.push_back(std::move(a));
        }
        if (items.size() % 2) next.push_back(std::move(items.back()));
        items = std::move(next);
    }
    return std::move(items.front());
}

} // namespace qsun::stats
