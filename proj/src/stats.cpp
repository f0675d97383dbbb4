#include "qsun/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace qsun::stats {

MeanSe mean_se(std::span<const double> values)
{
    MeanSe out;
    out.count = values.size();
    if (values.empty()) return out;
    double sum = 0.0;
    for (double v : values) sum += v;
    out.mean = sum / static_cast<double>(values.size());
    if (values.size() < 2) return out;
    double ss = 0.0;
    for (double v : values) ss += (v - out.mean) * (v - out.mean);
    const double n = static_cast<double>(values.size());
    out.se = std::sqrt(ss / (n - 1.0) / n);
    return out;
}

MeanSe jackknife(std::size_t blocks, const std::function<double(std::size_t skip)>& statistic,
                 double full_value)
{
    MeanSe out;
    out.count = blocks;
    out.mean = full_value;
    if (blocks < 2) return out;
    std::vector<double> loo(blocks);
    double avg = 0.0;
    for (std::size_t i = 0; i < blocks; ++i) {
        loo[i] = statistic(i);
        avg += loo[i];
    }
    avg /= static_cast<double>(blocks);
    double ss = 0.0;
    for (double v : loo) ss += (v - avg) * (v - avg);
    const double n = static_cast<double>(blocks);
    out.se = std::sqrt((n - 1.0) / n * ss);
    return out;
}

MeanSe ratio_jackknife(std::span<const double> num, std::span<const double> den)
{
    if (num.size() != den.size()) throw std::invalid_argument("ratio_jackknife: size mismatch");
    double sn = 0.0, sd = 0.0;
    for (std::size_t i = 0; i < num.size(); ++i) {
        sn += num[i];
        sd += den[i];
    }
    const double full = sd != 0.0 ? sn / sd : 0.0;
    return jackknife(
        num.size(),
        [&](std::size_t skip) {
            const double d = sd - den[skip];
            return d != 0.0 ? (sn - num[skip]) / d : 0.0;
        },
        full);
}

double median(std::vector<double> values)
{
    if (values.empty()) return std::nan("");
    const std::size_t mid = values.size() / 2;
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
    const double upper = values[mid];
    if (values.size() % 2) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
    return 0.5 * (lower + upper);
}

LineFit least_squares(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("least_squares: need >= 2 points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
    }
    LineFit fit;
    fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.intercept = my - fit.slope * mx;
    return fit;
}

double Moments::variance() const
{
    if (count < 2) return 0.0;
    const double n = static_cast<double>(count);
    const double m = sum / n;
    return std::max(0.0, (sum_sq - n * m * m) / (n - 1.0));
}

double Moments::se() const
{
    return count < 2 ? 0.0 : std::sqrt(variance() / static_cast<double>(count));
}

} // namespace qsun::stats
