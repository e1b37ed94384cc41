#pragma once

#include "sinelab/error.hpp"
#include "sinelab/quadrature.hpp"
#include "sinelab/test_function.hpp"

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <span>
#include <utility>
#include <vector>

namespace sinelab {

/// t^2 ln|t| / (2 pi^2), with theta(0) = 0.
inline double theta(double t)
{
    if (t == 0.0) {
        return 0.0;
    }
    return t * t * std::log(std::abs(t)) / (2.0 * std::numbers::pi * std::numbers::pi);
}

struct ZCovarianceModel {
    double tau = 1.0;

    ZCovarianceModel() = default;
    explicit ZCovarianceModel(double tau_) : tau(tau_)
    {
        if (!(tau > 0.0 && tau <= 1.0)) {
            throw DomainError("tau must lie in (0, 1]");
        }
    }
};

namespace detail {

inline void require_unit_time(double t)
{
    if (!(t >= 0.0 && t <= 1.0)) {
        throw DomainError("time must lie in [0, 1]");
    }
}

} // namespace detail

inline double w_cov(const ZCovarianceModel& m, double t, double s)
{
    detail::require_unit_time(t);
    detail::require_unit_time(s);
    const double tau = m.tau;
    return 0.5 * theta(t - s) - (1.0 - s / tau) * theta(t) - (s / tau) * theta(t - tau) +
           (t / tau) * (1.0 - s / tau) * theta(tau);
}

inline double z_covariance(const ZCovarianceModel& m, double t, double s)
{
    return w_cov(m, t, s) + w_cov(m, s, t);
}

inline double g_t_eval(const ZCovarianceModel& m, double t, double x)
{
    detail::require_unit_time(t);
    const double tau = m.tau;
    if (t <= tau) {
        if (x >= 0.0 && x <= t) return x * (t / tau - 1.0);
        if (x > t && x <= tau) return t * (x / tau - 1.0);
        return 0.0;
    }
    if (x >= 0.0 && x <= tau) return x * (t / tau - 1.0);
    if (x > tau && x <= t) return t - x;
    return 0.0;
}

/// g_t as a piecewise-linear test function.
inline TestFunction make_g_t(const ZCovarianceModel& m, double t)
{
    detail::require_unit_time(t);
    const double tau = m.tau;
    if (t == 0.0 || t == tau) {
        return TestFunction::piecewise_linear({0.0, tau}, {0.0, 0.0});
    }
    const double mid = std::min(t, tau);
    const double end = std::max(t, tau);
    return TestFunction::piecewise_linear({0.0, mid, end}, {0.0, mid * (t / tau - 1.0), 0.0});
}

/// f(x) = (1/tau) int_0^tau 1_[0,s](x) ds = 1 - x/tau on [0, tau].
inline TestFunction make_f(const ZCovarianceModel& m)
{
    return TestFunction::piecewise_linear({0.0, m.tau}, {1.0, 0.0});
}

/// hat g_t(y) = h_t(y) / y^2, h_t(y) = 1 - e^{-ity} - (t/tau)(1 - e^{-i tau y}).
inline std::complex<double> g_t_hat(const ZCovarianceModel& m, double t, double y)
{
    detail::require_unit_time(t);
    const double tau = m.tau;
    if (std::abs(y) < 1e-4) {
        // hat g_t(y) = sum_{k>=2} (-iy)^{k-2} (t^k - t tau^{k-1}) / k!
        std::complex<double> sum = 0.0;
        std::complex<double> power = 1.0;
        double fact = 2.0;
        double tk = t * t;
        double tauk = tau;
        for (int k = 2; k <= 8; ++k) {
            sum += power * ((tk - t * tauk) / fact);
            power *= std::complex<double>(0.0, -y);
            fact *= k + 1;
            tk *= t;
            tauk *= tau;
        }
        return sum;
    }
    const double st = std::sin(0.5 * t * y);
    const double su = std::sin(0.5 * tau * y);
    const double re = 2.0 * st * st - (t / tau) * 2.0 * su * su;
    const double im = std::sin(t * y) - (t / tau) * std::sin(tau * y);
    return std::complex<double>(re, im) / (y * y);
}

/// Positions and slope changes of a piecewise-linear function (second distributional derivative).
inline std::vector<std::pair<double, double>> slope_jumps(const std::vector<Knot>& knots)
{
    std::vector<std::pair<double, double>> out;
    double prev = 0.0;
    for (std::size_t i = 0; i < knots.size(); ++i) {
        double slope = 0.0;
        if (i + 1 < knots.size()) {
            slope = (knots[i + 1].left - knots[i].right) / (knots[i + 1].x - knots[i].x);
        }
        out.emplace_back(knots[i].x, slope - prev);
        prev = slope;
    }
    return out;
}

namespace detail {

inline double pairing_closed_form(const std::vector<Knot>& a, const std::vector<Knot>& b)
{
    const auto ja = slope_jumps(a);
    const auto jb = slope_jumps(b);
    double total = 0.0;
    for (const auto& [x, da] : ja) {
        for (const auto& [y, db] : jb) {
            total += da * db * theta(x - y);
        }
    }
    return total;
}

// (1/pi^2) int_0^U u Re(f^ conj g^) du on panels sized by the oscillation rate.
inline double pairing_panels(const TestFunction& f, const TestFunction& g, double upper)
{
    const double rate = f.reach() + g.reach();
    const double width = std::min(0.5, 2.0 / rate);
    auto integrand = [&](double u) { return u * std::real(f.fourier(u) * std::conj(g.fourier(u))); };
    return quad::integrate(integrand, 0.0, upper, {}, width, 16) / (std::numbers::pi * std::numbers::pi);
}

} // namespace detail

/// <f, g>_{1/2} = (1 / 2 pi^2) int |u| f^(u) conj(g^(u)) du.
inline double sobolev_half_pairing(const TestFunction& f, const TestFunction& g)
{
    if (!f.is_continuous() || !g.is_continuous()) {
        throw NonMembershipError("function with a jump is not in H^{1/2}; the pairing integral diverges");
    }
    const auto kf = f.knots();
    const auto kg = g.knots();
    if (kf && kg) {
        return detail::pairing_closed_form(*kf, *kg);
    }
    // Tail: |u f^ g^| <= u env_f(u) env_g(u); stop once it is negligible against the peak.
    const double peak = std::max(1e-300, f.l1_norm() * g.l1_norm());
    const double scale = 1.0 / std::max(f.support().length(), g.support().length());
    double upper = 10.0 * scale;
    while (upper * f.fourier_envelope(upper) * g.fourier_envelope(upper) > 1e-14 * peak * scale &&
           upper < 1e9 * scale) {
        upper *= 2.0;
    }
    const double first = detail::pairing_panels(f, g, upper);
    const double second = detail::pairing_panels(f, g, 2.0 * upper);
    if (std::abs(second - first) > 1e-8 * std::max(1.0, std::abs(second))) {
        throw AccuracyError("pairing quadrature did not settle under tail doubling");
    }
    return second;
}

inline double sobolev_half_norm_sq(const TestFunction& f) { return sobolev_half_pairing(f, f); }

/// Var S_h = (1/4pi^2)[2 int_{|s|>=2} |h^|^2 + int_{|s|<2} |s| |h^|^2], evaluated as
/// ||h||^2/pi - (1/2pi^2) int_0^2 (2 - s) |h^(s)|^2 ds.
inline double variance_sine_fourier(const TestFunction& h)
{
    const double diam = h.support().length();
    const double width = std::min(0.25, 4.0 / diam);
    auto integrand = [&](double s) { return (2.0 - s) * std::norm(h.fourier(s)); };
    const double inner = quad::integrate(integrand, 0.0, 2.0, {}, width, 16);
    const double pi = std::numbers::pi;
    return h.l2_norm_sq() / pi - inner / (2.0 * pi * pi);
}

/// -sum a_i ln|b_i| = int_0^inf sum a_i cos(b_i y) / y dy when sum a_i = 0.
inline double log_cosine_integral(std::span<const double> a, std::span<const double> b)
{
    if (a.size() != b.size() || a.empty()) {
        throw DomainError("log_cosine_integral needs matching nonempty coefficient vectors");
    }
    double sum = 0.0;
    double mass = 0.0;
    for (double v : a) {
        sum += v;
        mass += std::abs(v);
    }
    if (std::abs(sum) > 1e-12 * std::max(1.0, mass)) {
        throw DivergenceError("coefficients must sum to zero for the integral to converge");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (b[i] == 0.0) {
            throw DomainError("frequencies must be nonzero");
        }
        total -= a[i] * std::log(std::abs(b[i]));
    }
    return total;
}

/// ||g_t - g_s||^2_{1/2} = 2 (Theta(t, s) - theta(t - s)).
inline double tightness_modulus(const ZCovarianceModel& m, double t, double s)
{
    detail::require_unit_time(t);
    detail::require_unit_time(s);
    const double tau = m.tau;
    const double r = (t - s) / tau;
    const double big_theta = r * (theta(t) - theta(s) + theta(s - tau) - theta(t - tau) - r * theta(tau));
    return 2.0 * (big_theta - theta(t - s));
}

} // namespace sinelab
