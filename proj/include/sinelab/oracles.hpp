#pragma once

// Brute-force references. Deliberately independent of the fast paths: their own
// kernel formula, Boost quadrature rules, no closed forms.

#include "sinelab/error.hpp"
#include "sinelab/test_function.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace sinelab::oracles {

namespace detail {

using GK = boost::math::quadrature::gauss_kronrod<double, 15>;

inline double sine_kernel_sq(double d)
{
    if (std::abs(d) < 1e-8) {
        return 1.0 / (std::numbers::pi * std::numbers::pi);
    }
    const double k = std::sin(d) / (std::numbers::pi * d);
    return k * k;
}

// Segment edges: breakpoints of h, each gap cut into 2^level equal pieces.
inline std::vector<double> refined_edges(const TestFunction& h, int level, double max_piece)
{
    auto br = h.breakpoints();
    br.push_back(h.support().lo);
    br.push_back(h.support().hi);
    std::sort(br.begin(), br.end());
    br.erase(std::unique(br.begin(), br.end()), br.end());
    std::vector<double> edges{br.front()};
    for (std::size_t i = 0; i + 1 < br.size(); ++i) {
        const double len = br[i + 1] - br[i];
        const int base = static_cast<int>(std::ceil(len / max_piece));
        const int pieces = std::max(1, base) << level;
        for (int p = 1; p <= pieces; ++p) {
            edges.push_back(br[i] + len * p / pieces);
        }
    }
    return edges;
}

template <class F>
double panel_sum(F&& f, const std::vector<double>& edges)
{
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
        if (edges[i + 1] > edges[i]) {
            total += GK::integrate(f, edges[i], edges[i + 1], 0);
        }
    }
    return total;
}

} // namespace detail

/// int h^2 K(x,x) dx - int int h(x) h(y) K(x,y)^2 dx dy by nested panel Gauss-Kronrod,
/// refined until two successive levels agree to 1e-7.
inline double variance_double_integral(const TestFunction& h)
{
    const double pi = std::numbers::pi;
    double previous = 0.0;
    for (int level = 0; level <= 12; ++level) {
        const auto edges = detail::refined_edges(h, level, 1.0);
        const double diag = detail::panel_sum([&](double x) { double v = h(x); return v * v; }, edges) / pi;
        const double cross = detail::panel_sum(
            [&](double x) {
                const double hx = h(x);
                if (hx == 0.0) {
                    return 0.0;
                }
                return hx * detail::panel_sum([&](double y) { return h(y) * detail::sine_kernel_sq(x - y); }, edges);
            },
            edges);
        const double value = diag - cross;
        if (level > 0 && std::abs(value - previous) <= 1e-7 * std::max(1.0, std::abs(value))) {
            return value;
        }
        previous = value;
    }
    throw AccuracyError("variance double integral did not converge after 12 refinements");
}

/// (1/2pi^2) int |u| f^(u) conj(g^(u)) du by direct panel quadrature with tail doubling.
inline double pairing_quadrature(const TestFunction& f, const TestFunction& g)
{
    const double pi = std::numbers::pi;
    const double rate = f.reach() + g.reach();
    const double width = std::min(0.5, 1.0 / rate);
    auto integrand = [&](double u) { return u * std::real(f.fourier(u) * std::conj(g.fourier(u))); };
    auto piece = [&](double a, double b) {
        const auto panels = static_cast<int>(std::ceil((b - a) / width));
        double total = 0.0;
        for (int p = 0; p < panels; ++p) {
            total += detail::GK::integrate(integrand, a + (b - a) * p / panels, a + (b - a) * (p + 1) / panels, 0);
        }
        return total;
    };
    double upper = 256.0 / std::max(f.support().length(), g.support().length());
    double value = piece(0.0, upper);
    double last_step = 0.0;
    for (int doubling = 0; doubling < 10; ++doubling) {
        const double step = piece(upper, 2.0 * upper);
        value += step;
        upper *= 2.0;
        // A 1/u^3 tail shrinks each doubling step by 4; a jump leaves it flat.
        if (doubling >= 3 && std::abs(step) > 0.5 * std::abs(last_step) && std::abs(step) > 1e-12) {
            throw NonMembershipError("pairing integral does not converge; input is not in H^{1/2}");
        }
        if (doubling >= 3 && std::abs(step) < 1e-11) {
            return (value + step / 3.0) / (pi * pi);
        }
        last_step = step;
    }
    return (value + last_step / 3.0) / (pi * pi);
}

namespace detail {

// Ci(x) for large x from the asymptotic auxiliary functions.
inline double cosine_integral_large(double x)
{
    const double x2 = x * x;
    const double f = (1.0 - 2.0 / x2 + 24.0 / (x2 * x2)) / x;
    const double g = (1.0 - 6.0 / x2 + 120.0 / (x2 * x2)) / x2;
    return f * std::sin(x) - g * std::cos(x);
}

} // namespace detail

/// int_0^cutoff sum a_i cos(b_i y) / y dy on period-aligned panels, plus the
/// asymptotic tail beyond the cutoff.
inline double oscillatory_log_quadrature(std::span<const double> a, std::span<const double> b, double cutoff)
{
    using Gauss = boost::math::quadrature::gauss<double, 10>;
    if (a.size() != b.size() || a.empty()) {
        throw DomainError("coefficient vectors must match and be nonempty");
    }
    double sum = 0.0;
    double max_freq = 0.0;
    double min_freq = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < a.size(); ++i) {
        sum += a[i];
        if (b[i] == 0.0) {
            throw DomainError("frequencies must be nonzero");
        }
        max_freq = std::max(max_freq, std::abs(b[i]));
        min_freq = std::min(min_freq, std::abs(b[i]));
    }
    if (std::abs(sum) > 1e-12) {
        throw DivergenceError("coefficients must sum to zero");
    }
    if (min_freq * cutoff < 50.0) {
        throw AccuracyError("cutoff too small for the asymptotic tail bound");
    }
    // sum a_i cos(b_i y) = -2 sum a_i sin^2(b_i y / 2), free of cancellation near 0.
    auto integrand = [&](double y) {
        double s = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double v = std::sin(0.5 * b[i] * y);
            s += a[i] * v * v;
        }
        return -2.0 * s / y;
    };
    const double period = 2.0 * std::numbers::pi / max_freq;
    const auto panels = static_cast<long>(std::ceil(cutoff / period));
    double total = 0.0;
    for (long p = 0; p < panels; ++p) {
        const double lo = period * static_cast<double>(p);
        const double hi = std::min(cutoff, lo + period);
        total += Gauss::integrate(integrand, lo, hi);
    }
    double tail = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        tail -= a[i] * detail::cosine_integral_large(std::abs(b[i]) * cutoff);
    }
    return total + tail;
}

} // namespace sinelab::oracles
