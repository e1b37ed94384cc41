#pragma once

#include "sinelab/error.hpp"
#include "sinelab/sampler.hpp"
#include "sinelab/spectral.hpp"
#include "sinelab/test_function.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <numbers>
#include <ostream>
#include <span>
#include <vector>

namespace sinelab {

inline double linear_statistic(const Configuration& cfg, const TestFunction& h)
{
    double s = 0.0;
    for (double x : cfg.points) s += h(x);
    return s;
}

/// E S_h = (1/pi) int h.
inline double expected_linear_statistic(const TestFunction& h) { return h.integral() / std::numbers::pi; }

/// pi^{-1} sqrt(ln N): the normalization of the counting process.
inline double xi_scale(double n_scale)
{
    if (!(n_scale > 1.0)) {
        throw DomainError("N must exceed 1 for the log normalization");
    }
    return std::sqrt(std::log(n_scale)) / std::numbers::pi;
}

/// V_N = pi^{-2} ln N.
inline double log_variance(double n_scale)
{
    const double s = xi_scale(n_scale);
    return s * s;
}

namespace detail {

inline void require_span(const Configuration& cfg, double n_scale)
{
    if (!cfg.window.contains(Window(0.0, n_scale))) {
        throw DomainError("configuration window does not cover [0, N]");
    }
}

inline void require_times(std::span<const double> times)
{
    for (double t : times) {
        if (!(t >= 0.0 && t <= 1.0)) {
            throw DomainError("times must lie in [0, 1]");
        }
    }
}

// Points of the configuration in [0, N], ascending.
inline std::span<const double> points_in_span(const Configuration& cfg, double n_scale)
{
    const auto lo = std::lower_bound(cfg.points.begin(), cfg.points.end(), 0.0);
    const auto hi = std::upper_bound(cfg.points.begin(), cfg.points.end(), n_scale);
    return {lo, hi};
}

} // namespace detail

/// xi_t = (#[0, tN] - tN/pi) / (pi^{-1} sqrt(ln N)).
inline std::vector<double> xi_path(const Configuration& cfg, double n_scale, std::span<const double> times)
{
    detail::require_span(cfg, n_scale);
    detail::require_times(times);
    const double sigma = xi_scale(n_scale);
    const auto pts = detail::points_in_span(cfg, n_scale);
    std::vector<double> out;
    out.reserve(times.size());
    for (double t : times) {
        const auto count = static_cast<double>(std::upper_bound(pts.begin(), pts.end(), t * n_scale) - pts.begin());
        out.push_back((count - t * n_scale / std::numbers::pi) / sigma);
    }
    return out;
}

/// int_0^t xi_s ds, exact: each point x contributes (t - x/N)_+.
inline double xi_time_integral(std::span<const double> pts, double n_scale, double t)
{
    double s = 0.0;
    for (double x : pts) {
        const double y = x / n_scale;
        if (y > t) break;
        s += t - y;
    }
    return (s - t * t * n_scale / (2.0 * std::numbers::pi)) / xi_scale(n_scale);
}

struct PathStatistics {
    std::vector<double> times;
    std::vector<double> xi;
    std::vector<double> xi_integral;  ///< int_0^t xi_s ds
    double eta = 0.0;
    std::vector<double> z;
    double n_scale = 0.0;
    double tau = 1.0;
    std::uint64_t seed = 0;
    double route_discrepancy = 0.0;     ///< max gap between time-integral and linear-statistic routes
    double reconstruction_defect = 0.0; ///< max |int xi - (t eta + z_t / sigma)|, linear-statistic values

    void write_csv(std::ostream& os) const
    {
        os << std::setprecision(17);
        os << "# N=" << n_scale << " tau=" << tau << " eta=" << eta << " seed=" << seed << '\n';
        os << "t,xi,z\n";
        for (std::size_t i = 0; i < times.size(); ++i) {
            os << times[i] << ',' << xi[i] << ',' << z[i] << '\n';
        }
    }
};

/// eta = tau^{-1} int_0^tau xi, z_t = pi^{-1} sqrt(ln N) (int_0^t xi - t eta), by exact
/// event integration and, independently, as centred linear statistics of f^N and g_t^N.
inline PathStatistics eta_z_decomposition(const Configuration& cfg, double n_scale, double tau,
                                          std::span<const double> times)
{
    detail::require_span(cfg, n_scale);
    detail::require_times(times);
    const ZCovarianceModel model(tau);
    auto has = [&](double v) { return std::any_of(times.begin(), times.end(), [&](double t) { return t == v; }); };
    if (!has(0.0) || !has(tau)) {
        throw DomainError("time grid must contain 0 and tau");
    }
    const double sigma = xi_scale(n_scale);
    const auto pts = detail::points_in_span(cfg, n_scale);

    PathStatistics out;
    out.times.assign(times.begin(), times.end());
    out.xi = xi_path(cfg, n_scale, times);
    out.n_scale = n_scale;
    out.tau = tau;
    out.seed = cfg.seed;
    out.eta = xi_time_integral(pts, n_scale, tau) / tau;

    const auto f_n = TestFunction::scaled(make_f(model), n_scale);
    const double eta_b = (linear_statistic(cfg, f_n) - expected_linear_statistic(f_n)) / sigma;
    double gap = std::abs(eta_b - out.eta);
    double defect = 0.0;
    for (double t : times) {
        const double integral = xi_time_integral(pts, n_scale, t);
        out.xi_integral.push_back(integral);
        out.z.push_back(sigma * (integral - t * out.eta));
        const auto g_n = TestFunction::scaled(make_g_t(model, t), n_scale);
        const double z_b = linear_statistic(cfg, g_n) - expected_linear_statistic(g_n);
        gap = std::max(gap, std::abs(z_b - out.z.back()));
        defect = std::max(defect, std::abs(integral - (t * eta_b + z_b / sigma)));
    }
    out.route_discrepancy = gap;
    out.reconstruction_defect = defect;
    return out;
}

/// int_0^1 phi(t) xi_t dt, exact: a point at x contributes int_{x/N}^1 phi.
inline double weighted_xi_integral(const Configuration& cfg, double n_scale, const TestFunction& phi)
{
    detail::require_span(cfg, n_scale);
    if (phi.support().lo < 0.0 || phi.support().hi > 1.0) {
        throw DomainError("time weight must be supported in [0, 1]");
    }
    const double total = phi.primitive(1.0);
    double s = 0.0;
    for (double x : detail::points_in_span(cfg, n_scale)) s += total - phi.primitive(x / n_scale);
    return (s - n_scale * phi.first_moment() / std::numbers::pi) / xi_scale(n_scale);
}

namespace detail {

// int_{-inf}^y Phi(v) dv with Phi the primitive of a piecewise-linear phi.
inline double second_primitive(const TestFunction& phi, double y)
{
    const auto k = phi.knots();
    if (!k) {
        throw DomainError("second primitive requires a piecewise-linear function");
    }
    if (y <= k->front().x) {
        return 0.0;
    }
    double total = 0.0;
    double level = 0.0;
    for (std::size_t i = 0; i + 1 < k->size(); ++i) {
        const double x0 = (*k)[i].x;
        const double len = (*k)[i + 1].x - x0;
        const double a = (*k)[i].right;
        const double slope = len > 0.0 ? ((*k)[i + 1].left - a) / len : 0.0;
        const double d = std::min(y, x0 + len) - x0;
        total += d * (level + d * (a / 2.0 + d * slope / 6.0));
        if (y <= x0 + len) {
            return total;
        }
        level += len * (a + 0.5 * slope * len);
    }
    return total + (y - k->back().x) * level;
}

} // namespace detail

/// xi, eta and z for the ergodic family: #[0, tN] replaced by S_{phi_t^N}.
inline PathStatistics ergodic_path(const Configuration& cfg, const TestFunction& phi, double n_scale, double tau,
                                   std::span<const double> times)
{
    detail::require_times(times);
    const ZCovarianceModel model(tau);
    const Window reach(phi.support().lo, phi.support().hi + n_scale);
    if (!cfg.window.contains(reach)) {
        throw DomainError("configuration window does not cover the support of phi_1^N");
    }
    if (std::abs(phi.integral() - 1.0) > 1e-10) {
        throw DomainError("ergodic weight base must integrate to 1");
    }
    const double sigma = xi_scale(n_scale);
    const double pi = std::numbers::pi;
    std::vector<double> pts;
    for (double x : cfg.points) {
        if (x >= reach.lo && x <= reach.hi) pts.push_back(x);
    }
    std::vector<double> prim(pts.size());
    std::vector<double> prim2(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        prim[i] = phi.primitive(pts[i]);
        prim2[i] = detail::second_primitive(phi, pts[i]);
    }
    // S_{phi_t^N} and int_0^t S_{phi_s^N} ds, centred and normalized.
    auto stat = [&](double t) {
        double s = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) s += prim[i] - phi.primitive(pts[i] - t * n_scale);
        return (s - t * n_scale / pi) / sigma;
    };
    auto integral = [&](double t) {
        double s = 0.0;
        for (std::size_t i = 0; i < pts.size(); ++i) {
            s += t * prim[i] - (prim2[i] - detail::second_primitive(phi, pts[i] - t * n_scale)) / n_scale;
        }
        return (s - t * t * n_scale / (2.0 * pi)) / sigma;
    };
    PathStatistics out;
    out.times.assign(times.begin(), times.end());
    out.n_scale = n_scale;
    out.tau = tau;
    out.seed = cfg.seed;
    out.eta = integral(tau) / tau;
    for (double t : times) {
        out.xi.push_back(stat(t));
        out.xi_integral.push_back(integral(t));
        out.z.push_back(sigma * (out.xi_integral.back() - t * out.eta));
    }
    return out;
}

struct ErgodicWeight {
    TestFunction base;
    double t = 1.0;
    double n_scale = 1.0;

    ErgodicWeight(TestFunction base_, double t_, double n_scale_) : base(std::move(base_)), t(t_), n_scale(n_scale_)
    {
        if (std::abs(base.integral() - 1.0) > 1e-10) {
            throw DomainError("ergodic weight base must integrate to 1");
        }
        if (!(t >= 0.0 && t <= 1.0)) {
            throw DomainError("time must lie in [0, 1]");
        }
        if (!(n_scale > 0.0)) {
            throw DomainError("N must be positive");
        }
    }
};

/// phi_t^N(x) = int_0^{tN} phi(x - u) du = Phi(x) - Phi(x - tN).
inline double ergodic_weight_eval(const ErgodicWeight& w, double x)
{
    const double span = w.t * w.n_scale;
    if (span == 0.0) {
        return 0.0;
    }
    return w.base.primitive(x) - w.base.primitive(x - span);
}

/// phi_t^N as a test function (convolution of phi with 1_[0, tN]).
inline TestFunction ergodic_weight_function(const ErgodicWeight& w)
{
    const double span = w.t * w.n_scale;
    if (span == 0.0) {
        return TestFunction::zero();
    }
    return TestFunction::convolved(w.base, TestFunction::indicator(0.0, span));
}

} // namespace sinelab
