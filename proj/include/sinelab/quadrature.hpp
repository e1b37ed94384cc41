#pragma once

#include "sinelab/error.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

namespace sinelab::quad {

/// Gauss-Legendre rule on [-1, 1].
struct Rule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

/// Gauss-Legendre nodes and weights of order n, by Newton iteration on P_n.
inline Rule compute_gauss_legendre(unsigned n)
{
    Rule r;
    r.nodes.resize(n);
    r.weights.resize(n);
    const unsigned half = (n + 1) / 2;
    for (unsigned i = 0; i < half; ++i) {
        double x = std::cos(M_PI * (i + 0.75) / (n + 0.5));
        double dp = 0.0;
        for (int iter = 0; iter < 100; ++iter) {
            double p0 = 1.0;
            double p1 = x;
            for (unsigned k = 2; k <= n; ++k) {
                const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
                p0 = p1;
                p1 = p2;
            }
            dp = n * (x * p1 - p0) / (x * x - 1.0);
            const double dx = p1 / dp;
            x -= dx;
            if (std::abs(dx) < 1e-16) {
                break;
            }
        }
        const double w = 2.0 / ((1.0 - x * x) * dp * dp);
        r.nodes[i] = -x;
        r.nodes[n - 1 - i] = x;
        r.weights[i] = w;
        r.weights[n - 1 - i] = w;
    }
    if (n % 2 == 1) {
        r.nodes[n / 2] = 0.0;
    }
    return r;
}

inline const Rule& gauss_legendre(unsigned n)
{
    if (n < 2 || n > 256) {
        throw DomainError("Gauss-Legendre order must lie in [2, 256], got " + std::to_string(n));
    }
    static std::mutex mutex;
    static std::map<unsigned, std::unique_ptr<Rule>> cache;
    std::lock_guard lock(mutex);
    auto& slot = cache[n];
    if (!slot) {
        slot = std::make_unique<Rule>(compute_gauss_legendre(n));
    }
    return *slot;
}

/// Sorted, deduplicated breakpoints clipped to [lo, hi], endpoints included.
inline std::vector<double> clip_breaks(std::vector<double> breaks, double lo, double hi)
{
    breaks.push_back(lo);
    breaks.push_back(hi);
    std::erase_if(breaks, [&](double b) { return !(b >= lo && b <= hi); });
    std::sort(breaks.begin(), breaks.end());
    breaks.erase(std::unique(breaks.begin(), breaks.end()), breaks.end());
    return breaks;
}

/// Composite Gauss-Legendre over [lo, hi], split at `breaks`, panels no wider than `max_width`.
template <class F>
double integrate(F&& f, double lo, double hi, std::vector<double> breaks, double max_width,
                 unsigned order = 16)
{
    if (!(hi > lo)) {
        return 0.0;
    }
    const Rule& rule = gauss_legendre(order);
    const auto pts = clip_breaks(std::move(breaks), lo, hi);
    double total = 0.0;
    for (std::size_t s = 0; s + 1 < pts.size(); ++s) {
        const double a = pts[s];
        const double b = pts[s + 1];
        if (b <= a) {
            continue;
        }
        const auto panels = static_cast<std::size_t>(std::max(1.0, std::ceil((b - a) / max_width)));
        const double width = (b - a) / static_cast<double>(panels);
        for (std::size_t p = 0; p < panels; ++p) {
            const double pa = a + width * static_cast<double>(p);
            const double half = 0.5 * width;
            const double mid = pa + half;
            double acc = 0.0;
            for (std::size_t i = 0; i < rule.nodes.size(); ++i) {
                acc += rule.weights[i] * f(mid + half * rule.nodes[i]);
            }
            total += half * acc;
        }
    }
    return total;
}

} // namespace sinelab::quad
