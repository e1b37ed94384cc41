#pragma once

#include "sinelab/cumulants.hpp"
#include "sinelab/error.hpp"
#include "sinelab/kernels.hpp"
#include "sinelab/oracles.hpp"
#include "sinelab/rng.hpp"
#include "sinelab/spectral.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace sinelab {

struct IdentityCheck {
    std::string name;
    std::string suite;
    double defect = 0.0;
    double tolerance = 0.0;
    std::size_t cases = 0;
    bool passed = true;
    std::string detail;
};

struct IdentityReport {
    std::vector<IdentityCheck> checks;

    bool passed() const
    {
        return std::all_of(checks.begin(), checks.end(), [](const IdentityCheck& c) { return c.passed; });
    }

    nlohmann::json to_json() const
    {
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& c : checks) {
            rows.push_back({{"identity", c.name},
                            {"suite", c.suite},
                            {"defect", c.defect},
                            {"tolerance", c.tolerance},
                            {"cases", c.cases},
                            {"passed", c.passed},
                            {"detail", c.detail}});
        }
        return {{"identities", rows}, {"passed", passed()}};
    }
};

struct IdentityOptions {
    std::uint64_t seed = 1;
    std::string inject_fault;  ///< identity name whose defect is perturbed
};

inline const std::vector<std::string>& identity_scopes()
{
    static const std::vector<std::string> scopes{"combinatorial", "overlap", "intlog", "trace", "scaling",
                                                 "covariance"};
    return scopes;
}

namespace detail {

struct SuiteRunner {
    IdentityReport& report;
    const IdentityOptions& options;
    std::string suite;

    void add(std::string name, double defect, double tolerance, std::size_t cases, std::string note = {})
    {
        if (options.inject_fault == name) {
            defect += 10.0 * tolerance + 1.0;
        }
        const bool ok = std::isfinite(defect) && defect <= tolerance;
        report.checks.push_back({std::move(name), suite, defect, tolerance, cases, ok, std::move(note)});
    }
};

// Zero-sum vector of length n with entries spread over [-1, 1].
inline std::vector<double> zero_sum(RngStream& rng, std::size_t n)
{
    std::vector<double> v(n);
    double s = 0.0;
    for (double& x : v) {
        x = 2.0 * rng.uniform() - 1.0;
        s += x;
    }
    for (double& x : v) x -= s / static_cast<double>(n);
    double fix = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) fix += v[i];
    v.back() = -fix;
    return v;
}

inline std::vector<int> random_blocks(RngStream& rng, int total)
{
    std::vector<int> blocks;
    int left = total;
    while (left > 0) {
        const int b = 1 + static_cast<int>(rng.uniform() * left);
        blocks.push_back(b);
        left -= b;
    }
    if (blocks.size() < 2) {
        blocks = {total - 1, 1};
    }
    return blocks;
}

inline void combinatorial_suite(SuiteRunner& run, RngStream rng)
{
    double worst_t = 0.0;
    std::size_t t_cases = 0;
    for (std::size_t d = 1; d <= 3; ++d) {
        for (const auto& k : multi_indices_up_to(d, kMaxCumulantOrder)) {
            if (k.order() < 2) continue;
            const Rational t = combinatorial_T(k);
            worst_t = std::max(worst_t, std::abs(boost::rational_cast<double>(t)));
            ++t_cases;
        }
    }
    run.add("combinatorial_T_vanishes", worst_t, 0.0, t_cases, "exact rational arithmetic");

    for (int order = 3; order <= 5; ++order) {
        double worst = 0.0;
        for (int i = 0; i < 100; ++i) {
            const auto u = zero_sum(rng, static_cast<std::size_t>(order));
            worst = std::max(worst, std::abs(G_function(u)));
        }
        run.add("G_vanishes_order_" + std::to_string(order), worst, 1e-9, 100);
    }
    double worst2 = 0.0;
    double ratio = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double a = 2.0 * rng.uniform() - 1.0;
        const std::vector<double> u{a, -a};
        const double g = G_function(u);
        worst2 = std::max(worst2, std::abs(g - std::abs(a)));
        ratio = g / std::abs(a);
    }
    run.add("G_order_2_equals_abs_u1", worst2, 1e-12, 100, "G(u, -u) / |u| = " + std::to_string(ratio));
}

inline void overlap_suite(SuiteRunner& run, RngStream rng)
{
    const double fault = run.options.inject_fault == "overlap_intersection_equals_2_plus_J" ? 1e-6 : 0.0;
    double worst = 0.0;
    std::string note;
    std::size_t cases = 0;
    for (int i = 0; i < 1000; ++i) {
        const int total = 2 + static_cast<int>(rng.uniform() * 7.0);
        const auto blocks = random_blocks(rng, total);
        auto v = zero_sum(rng, static_cast<std::size_t>(total));
        for (double& x : v) x *= 1.5;
        ++cases;
        try {
            const double overlap = soshnikov_overlap(blocks, v, fault);
            worst = std::max(worst, std::abs(overlap - std::max(2.0 + J_function(blocks, v), 0.0)));
        } catch (const std::logic_error& e) {
            worst = std::numeric_limits<double>::infinity();
            note = e.what();
            break;
        }
    }
    // The fault enters through the identity itself, so the defect is recorded unperturbed.
    run.report.checks.push_back(
        {"overlap_intersection_equals_2_plus_J", run.suite, worst, 1e-12, cases, worst <= 1e-12, note});
}

inline void intlog_suite(SuiteRunner& run, RngStream rng)
{
    const std::vector<double> a0{1.0, -1.0};
    const std::vector<double> b0{1.0, 2.0};
    const double ln2 = oracles::oscillatory_log_quadrature(a0, b0, 1e6);
    run.add("log_cosine_ln2_instance", std::abs(ln2 - log_cosine_integral(a0, b0)), 1e-4, 1);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
        const std::size_t n = 2 + static_cast<std::size_t>(rng.uniform() * 4.0);
        auto a = zero_sum(rng, n);
        std::vector<double> b(n);
        for (double& x : b) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.2 + 4.8 * rng.uniform());
        const double quad = oracles::oscillatory_log_quadrature(a, b, 1e4);
        worst = std::max(worst, std::abs(quad - log_cosine_integral(a, b)));
    }
    run.add("log_cosine_closed_form", worst, 1e-4, 50);
}

inline void trace_suite(SuiteRunner& run)
{
    struct Case {
        Window window;
        TestFunction h;
    };
    const std::vector<Case> cases{
        {Window(0.0, 5.0), TestFunction::indicator(0.0, 5.0)},
        {Window(-5.0, 15.0), TestFunction::indicator(0.0, 10.0)},
        {Window(0.0, 20.0), TestFunction::piecewise_linear({2.0, 8.0, 15.0}, {0.0, 1.0, 0.0})},
    };
    double lower = 0.0;
    double upper = 0.0;
    double comm = 0.0;
    for (const auto& c : cases) {
        const auto op = build_operator(c.window, default_node_count(c.window), {c.h.breakpoints(), false});
        const auto d = operator_defect_checks(op, c.h);
        lower = std::max(lower, -d.defect_trace);
        upper = std::max(upper, d.defect_trace - d.variance);
        comm = std::max(comm, d.commutator_hs_sq - 2.0 * d.variance);
    }
    run.add("defect_trace_nonnegative", std::max(lower, 0.0), 1e-10, cases.size());
    run.add("defect_trace_below_variance", std::max(upper, 0.0), 1e-9, cases.size());
    run.add("commutator_below_twice_variance", std::max(comm, 0.0), 1e-9, cases.size());
}

inline void scaling_suite(SuiteRunner& run)
{
    const ZCovarianceModel model(1.0);
    const auto k = make_g_t(model, 0.5);
    const double base = sobolev_half_norm_sq(k);
    double worst = 0.0;
    for (double delta : {0.5, 2.0, 10.0}) {
        const double scaled = sobolev_half_norm_sq(TestFunction::scaled(k, 1.0 / delta));
        worst = std::max(worst, std::abs(scaled - base) / base);
    }
    run.add("half_norm_scale_invariance", worst, 1e-8, 3);
}

inline void covariance_suite(SuiteRunner& run)
{
    double worst = 0.0;
    std::size_t cases = 0;
    for (double tau : {0.5, 1.0}) {
        const ZCovarianceModel model(tau);
        for (int i = 0; i <= 10; ++i) {
            for (int j = 0; j <= 10; ++j) {
                const double t = i / 10.0;
                const double s = j / 10.0;
                const double pairing = sobolev_half_pairing(make_g_t(model, t), make_g_t(model, s));
                worst = std::max(worst, std::abs(pairing - z_covariance(model, t, s)));
                ++cases;
            }
        }
    }
    run.add("pairing_equals_z_covariance", worst, 1e-6, cases);
}

} // namespace detail

/// Runs the named identity suites; "all" selects every suite and "none" selects nothing.
inline IdentityReport run_identities(const std::vector<std::string>& scopes, const IdentityOptions& options = {})
{
    std::vector<std::string> selected;
    for (const auto& s : scopes) {
        if (s == "all") {
            selected = identity_scopes();
            break;
        }
        if (s == "none") continue;
        if (std::find(identity_scopes().begin(), identity_scopes().end(), s) == identity_scopes().end()) {
            throw UsageError("unknown identity scope \"" + s + "\"");
        }
        if (std::find(selected.begin(), selected.end(), s) == selected.end()) selected.push_back(s);
    }
    IdentityReport report;
    const RngStream root(options.seed, 0x1de);
    const auto& all = identity_scopes();
    for (const auto& s : selected) {
        detail::SuiteRunner run{report, options, s};
        const RngStream rng = root.child(static_cast<std::uint64_t>(std::find(all.begin(), all.end(), s) - all.begin()));
        if (s == "combinatorial") detail::combinatorial_suite(run, rng);
        else if (s == "overlap") detail::overlap_suite(run, rng);
        else if (s == "intlog") detail::intlog_suite(run, rng);
        else if (s == "trace") detail::trace_suite(run);
        else if (s == "scaling") detail::scaling_suite(run);
        else if (s == "covariance") detail::covariance_suite(run);
    }
    return report;
}

} // namespace sinelab
