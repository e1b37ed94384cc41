#include "sinelab/rng.hpp"
#include "sinelab/sampler.hpp"
#include "sinelab/spectral.hpp"
#include "sinelab/statistics.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

using namespace sinelab;

namespace {

constexpr double pi = std::numbers::pi;

Configuration handmade(double n)
{
    Configuration cfg;
    cfg.window = Window(-5.0, n + 5.0);
    cfg.points = {-3.0, 0.5, 0.2 * n, 0.2 * n + 1.0, 0.45 * n, 0.7 * n, 0.95 * n, n + 2.0};
    return cfg;
}

Configuration sampled(double n, std::uint64_t seed)
{
    const Window w(-20.0, n + 20.0);
    const auto op = build_operator(w, default_node_count(w, 4.0), {{0.0, n}, true});
    RngStream rng(seed, 0);
    return sample_dpp(op, rng);
}

} // namespace

TEST(LinearStatistic, SumsAndExpectation)
{
    const auto cfg = handmade(10.0);
    EXPECT_DOUBLE_EQ(linear_statistic(cfg, TestFunction::indicator(0.0, 10.0)), 6.0);
    EXPECT_DOUBLE_EQ(expected_linear_statistic(TestFunction::indicator(0.0, 10.0)), 10.0 / pi);
}

TEST(Normalization, LogScale)
{
    EXPECT_DOUBLE_EQ(xi_scale(std::exp(1.0)), 1.0 / pi);
    EXPECT_DOUBLE_EQ(log_variance(100.0), std::log(100.0) / (pi * pi));
    EXPECT_THROW(xi_scale(1.0), DomainError);
}

TEST(XiPath, CountsAgainstIntensity)
{
    const double n = 100.0;
    const auto cfg = handmade(n);
    const std::vector<double> times{0.0, 0.2, 0.5, 1.0};
    const auto xi = xi_path(cfg, n, times);
    const double s = xi_scale(n);
    EXPECT_DOUBLE_EQ(xi[0], 0.0);
    EXPECT_NEAR(xi[1], (2.0 - 20.0 / pi) / s, 1e-13);
    EXPECT_NEAR(xi[2], (4.0 - 50.0 / pi) / s, 1e-13);
    EXPECT_NEAR(xi[3], (6.0 - 100.0 / pi) / s, 1e-13);
    EXPECT_THROW(xi_path(cfg, n, std::vector<double>{1.2}), DomainError);
    Configuration narrow = cfg;
    narrow.window = Window(0.0, 50.0);
    EXPECT_THROW(xi_path(narrow, n, times), DomainError);
}

TEST(XiPath, TimeIntegralIsExact)
{
    const double n = 100.0;
    const auto cfg = handmade(n);
    const auto pts = detail::points_in_span(cfg, n);
    // Riemann sum of the step path converges to the event-driven value.
    for (double t : {0.3, 1.0}) {
        const int steps = 200000;
        double riemann = 0.0;
        for (int i = 0; i < steps; ++i) {
            const std::vector<double> mid{t * (i + 0.5) / steps};
            riemann += xi_path(cfg, n, mid)[0] * t / steps;
        }
        EXPECT_NEAR(xi_time_integral(pts, n, t), riemann, 1e-4) << t;
    }
}

TEST(EtaZ, RoutesAgreeOnSampledConfiguration)
{
    const double n = 60.0;
    const auto cfg = sampled(n, 31);
    for (double tau : {0.5, 1.0}) {
        std::vector<double> times{0.0, 0.1, 0.25, 0.5, 0.75, 1.0};
        const auto p = eta_z_decomposition(cfg, n, tau, times);
        EXPECT_LT(p.route_discrepancy, 1e-9);
        EXPECT_LT(p.reconstruction_defect, 1e-9);
        for (std::size_t i = 0; i < times.size(); ++i) {
            if (times[i] == 0.0 || times[i] == tau) {
                EXPECT_EQ(p.z[i], 0.0) << "t = " << times[i];
            }
        }
    }
    EXPECT_THROW(eta_z_decomposition(cfg, n, 0.5, std::vector<double>{0.0, 1.0}), DomainError);
}

TEST(EtaZ, CsvHasHeaderAndRows)
{
    const double n = 40.0;
    const auto p = eta_z_decomposition(handmade(n), n, 1.0, std::vector<double>{0.0, 0.5, 1.0});
    std::ostringstream os;
    p.write_csv(os);
    const auto text = os.str();
    EXPECT_NE(text.find("# N=40"), std::string::npos);
    EXPECT_NE(text.find("t,xi,z\n"), std::string::npos);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 5);
}

TEST(WeightedIntegral, ConstantWeightIsFullTimeIntegral)
{
    const double n = 80.0;
    const auto cfg = sampled(n, 5);
    const auto pts = detail::points_in_span(cfg, n);
    const auto one = TestFunction::indicator(0.0, 1.0);
    EXPECT_NEAR(weighted_xi_integral(cfg, n, one), xi_time_integral(pts, n, 1.0), 1e-12);
    const auto half = TestFunction::indicator(0.0, 0.5);
    EXPECT_NEAR(weighted_xi_integral(cfg, n, half), xi_time_integral(pts, n, 0.5), 1e-12);
    EXPECT_THROW(weighted_xi_integral(cfg, n, TestFunction::indicator(0.5, 1.5)), DomainError);
}

TEST(SecondPrimitive, PiecewiseLinearValues)
{
    // phi = 1 on [0, 2]: Phi(y) = y, second primitive y^2 / 2, then linear growth.
    const auto box = TestFunction::indicator(0.0, 2.0);
    EXPECT_EQ(detail::second_primitive(box, -1.0), 0.0);
    EXPECT_NEAR(detail::second_primitive(box, 1.0), 0.5, 1e-15);
    EXPECT_NEAR(detail::second_primitive(box, 2.0), 2.0, 1e-15);
    EXPECT_NEAR(detail::second_primitive(box, 3.0), 4.0, 1e-15);
    // Tent of height 1 on [0, 2]: total Phi = 1 beyond 2.
    const auto tent = TestFunction::piecewise_linear({0.0, 1.0, 2.0}, {0.0, 1.0, 0.0});
    EXPECT_NEAR(detail::second_primitive(tent, 1.0), 1.0 / 6.0, 1e-15);
    EXPECT_NEAR(detail::second_primitive(tent, 2.0), 1.0, 1e-15);
    EXPECT_NEAR(detail::second_primitive(tent, 5.0), 4.0, 1e-15);
}

TEST(ErgodicWeight, ValidationAndShape)
{
    const auto phi = TestFunction::indicator(0.0, 1.0);
    EXPECT_THROW(ErgodicWeight(TestFunction::indicator(0.0, 2.0), 0.5, 10.0), DomainError);
    EXPECT_THROW(ErgodicWeight(phi, 1.5, 10.0), DomainError);
    const ErgodicWeight w(phi, 0.5, 10.0);
    EXPECT_DOUBLE_EQ(ergodic_weight_eval(w, -0.5), 0.0);
    EXPECT_DOUBLE_EQ(ergodic_weight_eval(w, 0.5), 0.5);
    EXPECT_DOUBLE_EQ(ergodic_weight_eval(w, 3.0), 1.0);
    EXPECT_DOUBLE_EQ(ergodic_weight_eval(w, 5.5), 0.5);
    const auto f = ergodic_weight_function(w);
    for (double x : {-0.5, 0.25, 3.0, 5.25, 6.5}) {
        EXPECT_NEAR(f(x), ergodic_weight_eval(w, x), 1e-12) << x;
    }
    EXPECT_EQ(ergodic_weight_eval(ErgodicWeight(phi, 0.0, 10.0), 0.5), 0.0);
}

TEST(ErgodicPath, MatchesLinearStatisticsAndDecomposition)
{
    const double n = 60.0;
    const auto cfg = sampled(n, 8);
    const auto phi = TestFunction::piecewise_linear({-1.0, 0.0, 1.0}, {0.0, 1.0, 0.0});
    const std::vector<double> times{0.0, 0.3, 0.6, 1.0};
    const auto p = ergodic_path(cfg, phi, n, 0.6, times);
    const double s = xi_scale(n);
    for (std::size_t i = 0; i < times.size(); ++i) {
        const ErgodicWeight w(phi, times[i], n);
        double stat = 0.0;
        for (double x : cfg.points) stat += ergodic_weight_eval(w, x);
        EXPECT_NEAR(p.xi[i], (stat - times[i] * n / pi) / s, 1e-10) << times[i];
        // int_0^t xi = t eta + z_t / sigma
        EXPECT_NEAR(p.xi_integral[i], times[i] * p.eta + p.z[i] / s, 1e-10);
    }
    EXPECT_EQ(p.z[0], 0.0);
    EXPECT_NEAR(p.z[2], 0.0, 1e-12);
}

TEST(ErgodicPath, TimeIntegralMatchesQuadrature)
{
    const double n = 50.0;
    const auto cfg = sampled(n, 9);
    const auto phi = TestFunction::indicator(-0.5, 0.5);
    const std::vector<double> times{0.0, 0.7, 1.0};
    const auto p = ergodic_path(cfg, phi, n, 1.0, times);
    const int steps = 20000;
    double riemann = 0.0;
    for (int i = 0; i < steps; ++i) {
        const double t = 0.7 * (i + 0.5) / steps;
        const auto q = ergodic_path(cfg, phi, n, 1.0, std::vector<double>{0.0, t, 1.0});
        riemann += q.xi[1] * 0.7 / steps;
    }
    EXPECT_NEAR(p.xi_integral[1], riemann, 1e-5);
}
