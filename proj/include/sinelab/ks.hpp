#pragma once

#include "sinelab/error.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace sinelab {

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Kolmogorov survival function Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2).
inline double kolmogorov_survival(double x)
{
    if (x <= 0.0) {
        return 1.0;
    }
    if (x < 0.3) {
        // Alternate series in the small-x regime: 1 - sqrt(2pi)/x sum exp(-(2k-1)^2 pi^2 / (8x^2)).
        const double pi = 3.14159265358979323846;
        double s = 0.0;
        for (int k = 1; k <= 5; ++k) {
            const double m = 2.0 * k - 1.0;
            s += std::exp(-m * m * pi * pi / (8.0 * x * x));
        }
        return std::clamp(1.0 - std::sqrt(2.0 * pi) / x * s, 0.0, 1.0);
    }
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double term = std::exp(-2.0 * k * k * x * x);
        sum += (k % 2 == 1 ? term : -term);
        if (term < 1e-18) {
            break;
        }
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Asymptotic p-value with the Stephens small-sample correction.
inline double ks_p_value(double d, double n_eff)
{
    const double root = std::sqrt(n_eff);
    return kolmogorov_survival((root + 0.12 + 0.11 / root) * d);
}

inline KsResult ks_one_sample(std::span<const double> samples, const std::function<double(double)>& cdf)
{
    if (samples.empty()) {
        throw SizeError("KS test of an empty sample");
    }
    std::vector<double> x(samples.begin(), samples.end());
    std::sort(x.begin(), x.end());
    const double n = static_cast<double>(x.size());
    double d = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double f = cdf(x[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return {d, ks_p_value(d, n)};
}

inline KsResult ks_two_sample(std::span<const double> a, std::span<const double> b)
{
    if (a.empty() || b.empty()) {
        throw SizeError("KS test of an empty sample");
    }
    std::vector<double> x(a.begin(), a.end());
    std::vector<double> y(b.begin(), b.end());
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    const double n = static_cast<double>(x.size());
    const double m = static_cast<double>(y.size());
    std::size_t i = 0;
    std::size_t j = 0;
    double d = 0.0;
    while (i < x.size() && j < y.size()) {
        const double v = std::min(x[i], y[j]);
        while (i < x.size() && x[i] == v) ++i;
        while (j < y.size() && y[j] == v) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
    }
    return {d, ks_p_value(d, n * m / (n + m))};
}

} // namespace sinelab
