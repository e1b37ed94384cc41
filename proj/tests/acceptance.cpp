// Acceptance suite: one PASS/FAIL line per criterion, details indented below it.
// Usage: acceptance [criterion numbers...]   (default: all twelve)

#include "sinelab/cumulants.hpp"
#include "sinelab/identities.hpp"
#include "sinelab/kernels.hpp"
#include "sinelab/mc.hpp"
#include "sinelab/oracles.hpp"
#include "sinelab/sampler.hpp"
#include "sinelab/spectral.hpp"
#include "sinelab/statistics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <numbers>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace sinelab;

namespace {

constexpr double pi = std::numbers::pi;
const double kLogTen = std::log(10.0) / (pi * pi);

struct Outcome {
    bool passed = true;
    std::vector<std::string> notes;

    // Records a sub-check; the criterion passes only if every sub-check does.
    void require(bool ok, const std::string& what)
    {
        passed = passed && ok;
        notes.push_back(std::string(ok ? "ok   " : "MISS ") + what);
    }
    void note(const std::string& what) { notes.push_back("     " + what); }
};

std::string fmt(double v, int precision = 6)
{
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

unsigned worker_threads()
{
    if (const char* env = std::getenv("SINE_LAB_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// 1. Variance log law on a decade ladder.
Outcome variance_log_law()
{
    Outcome o;
    std::vector<double> residual;
    double previous = 0.0;
    for (int e = 2; e <= 5; ++e) {
        const double n = std::pow(10.0, e);
        const double v = variance_sine_fourier(TestFunction::indicator(0.0, n));
        residual.push_back(v - std::log(n) / (pi * pi));
        if (e > 2) {
            o.require(std::abs(v - previous - kLogTen) < 5e-3,
                      "decade step to N=1e" + std::to_string(e) + ": " + fmt(v - previous) + " vs " + fmt(kLogTen));
        }
        previous = v;
    }
    const auto [lo, hi] = std::minmax_element(residual.begin(), residual.end());
    o.require(*hi - *lo < 0.02, "residual range width " + fmt(*hi - *lo) + " < 0.02");
    return o;
}

// 2. Pairing closed form against the covariance formula on a 101 x 101 grid.
Outcome covariance_closed_form()
{
    Outcome o;
    for (double tau : {0.5, 1.0}) {
        const ZCovarianceModel m(tau);
        std::vector<TestFunction> g;
        for (int i = 0; i <= 100; ++i) g.push_back(make_g_t(m, i / 100.0));
        double worst = 0.0;
        for (int i = 0; i <= 100; ++i) {
            for (int j = 0; j <= 100; ++j) {
                worst = std::max(worst, std::abs(sobolev_half_pairing(g[i], g[j]) - z_covariance(m, i / 100.0, j / 100.0)));
            }
        }
        o.require(worst < 1e-6, "tau=" + fmt(tau) + ": max defect " + fmt(worst, 3));
    }
    return o;
}

Outcome from_identities(const std::string& scope, const std::set<std::string>& names = {})
{
    Outcome o;
    IdentityOptions opts;
    opts.seed = 20240601;
    for (const auto& c : run_identities({scope}, opts).checks) {
        if (!names.empty() && !names.count(c.name)) continue;
        std::string line = c.name + ": defect " + fmt(c.defect, 3) + " (tol " + fmt(c.tolerance, 3) + ", " +
                           std::to_string(c.cases) + " cases)";
        if (!c.detail.empty()) line += "; " + c.detail;
        o.require(c.passed, line);
    }
    return o;
}

// 5. Fourier formula, double integral and operator trace on random piecewise-linear functions.
Outcome three_routes()
{
    Outcome o;
    RngStream rng(555, 5);
    double worst_quad = 0.0;
    double worst_trace = 0.0;
    for (int f = 0; f < 20; ++f) {
        const int inner = 2 + static_cast<int>(rng.uniform() * 4.0);
        std::vector<double> xs{0.0};
        for (int i = 0; i < inner; ++i) xs.push_back(40.0 * rng.uniform());
        xs.push_back(40.0 * (0.5 + 0.5 * rng.uniform()));
        std::sort(xs.begin(), xs.end());
        xs.front() = 40.0 * 0.5 * rng.uniform() * 0.5;
        std::sort(xs.begin(), xs.end());
        xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
        std::vector<double> ys(xs.size(), 0.0);
        for (std::size_t i = 1; i + 1 < ys.size(); ++i) ys[i] = 2.0 * rng.uniform() - 1.0;
        const auto h = TestFunction::piecewise_linear(xs, ys);
        const double fourier = variance_sine_fourier(h);
        const double quad = oracles::variance_double_integral(h);
        const Window w(xs.front(), xs.back());
        const auto op = build_operator(w, default_node_count(w), {h.breakpoints(), false});
        const double trace = operator_defect_checks(op, h).variance;
        worst_quad = std::max(worst_quad, std::abs(quad - fourier) / fourier);
        worst_trace = std::max(worst_trace, std::abs(trace - fourier) / fourier);
    }
    o.require(worst_quad < 1e-5, "double integral vs Fourier: max relative gap " + fmt(worst_quad, 3));
    o.require(worst_trace < 1e-5, "operator trace vs Fourier: max relative gap " + fmt(worst_trace, 3));
    return o;
}

// 6. Trace cumulants against log-determinant cumulants, orders 2 to 4.
Outcome cumulant_oracle()
{
    Outcome o;
    struct Case {
        std::string name;
        TestFunction h;
    };
    const ZCovarianceModel model(1.0);
    const std::vector<Case> cases{{"indicator [0,20]", TestFunction::indicator(0.0, 20.0)},
                                  {"g_0.5 dilated to [0,20]", TestFunction::scaled(make_g_t(model, 0.5), 20.0)}};
    for (const auto& c : cases) {
        const Window w(0.0, 20.0);
        const auto op = build_operator(w, default_node_count(w), {c.h.breakpoints(), false});
        const std::vector<TestFunction> hs{c.h};
        const auto table = cumulant_from_logdet(op, hs, 4);
        for (int order = 2; order <= 4; ++order) {
            const double tr = cumulant_from_traces(op, hs, MultiIndex{order});
            const double ld = table.raw(MultiIndex{order});
            const double rel = std::abs(ld - tr) / std::abs(tr);
            o.require(rel < 1e-4, c.name + " order " + std::to_string(order) + ": traces " + fmt(tr, 8) +
                                      ", log-det " + fmt(ld, 8) + ", relative gap " + fmt(rel, 3));
        }
    }
    return o;
}

// 7. Normalized third cumulant of the counting statistic across N.
Outcome cumulant_decay()
{
    Outcome o;
    const std::vector<double> ladder{50.0, 200.0, 800.0, 3200.0};
    std::vector<double> a3;
    for (double n : ladder) {
        const Window w(0.0, n);
        const auto op = build_operator(w, default_node_count(w, 3.0), {{}, false});
        const std::vector<TestFunction> hs{TestFunction::indicator(0.0, n)};
        const double b3 = cumulant_from_traces(op, hs, MultiIndex{3});
        a3.push_back(std::abs(b3) / std::pow(log_variance(n), 1.5));
        o.note("N=" + fmt(n) + ": |A3| = " + fmt(a3.back(), 8) + " (nodes " + std::to_string(op.size()) + ")");
    }
    for (std::size_t i = 1; i < a3.size(); ++i) {
        const double ratio = a3[i] / a3[i - 1];
        o.require(a3[i] < a3[i - 1], "strict decrease N=" + fmt(ladder[i - 1]) + " -> " + fmt(ladder[i]));
        o.require(ratio >= 0.5 && ratio <= 1.0, "ratio A3(" + fmt(ladder[i]) + ")/A3(" + fmt(ladder[i - 1]) +
                                                    ") = " + fmt(ratio) + " in [0.5, 1.0]");
    }
    return o;
}

// 9. DPP counts on [0, 100] and the gap law against the GUE bulk.
Outcome sampler_validity()
{
    Outcome o;
    const Window w(0.0, 100.0);
    const auto op = build_operator(w, default_node_count(w, 6.0));
    const RngStream root(909, 9);
    std::vector<double> counts(2000);
    std::vector<std::vector<double>> rows =
        run_replicas(op, root.child(0), 2000, worker_threads(),
                     [](const Configuration& c) { return std::vector<double>{static_cast<double>(c.size())}; });
    for (std::size_t r = 0; r < rows.size(); ++r) counts[r] = rows[r][0];
    const auto mean = sample_mean_se(counts);
    const auto var = sample_covariance(counts, counts);
    const double target_var = variance_sine_fourier(TestFunction::indicator(0.0, 100.0));
    o.require(std::abs(mean.value - 100.0 / pi) <= 3.0 * mean.se,
              "mean count " + fmt(mean.value) + " vs " + fmt(100.0 / pi) + " (SE " + fmt(mean.se, 3) + ")");
    o.require(std::abs(var.value - target_var) <= 3.0 * var.se,
              "count variance " + fmt(var.value) + " vs " + fmt(target_var) + " (SE " + fmt(var.se, 3) + ")");

    CrossValidationOptions cv;
    cv.nodes_per_unit = 6.0;
    CrossValidation best;
    int attempt = 0;
    for (; attempt <= 3; ++attempt) {
        best = cross_validate_samplers(5000, root.child(1).child(static_cast<std::uint64_t>(attempt)), cv);
        if (best.p_value > 0.01) break;
    }
    o.require(best.p_value > 0.01, "gap KS vs GUE bulk: D = " + fmt(best.ks_statistic, 4) + ", p = " +
                                       fmt(best.p_value, 4) + " (retries used " + std::to_string(std::min(attempt, 3)) +
                                       ")");
    return o;
}

const Check* find(const ExperimentResult& r, double n, const std::string& name)
{
    for (const auto& c : r.checks) {
        if (c.n_scale == n && c.statistic == name) return &c;
    }
    return nullptr;
}

// 10. Functional decomposition at desk scale.
Outcome functional_decomposition()
{
    Outcome o;
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::eta_z;
    cfg.n_list = {50.0, 200.0, 800.0};
    cfg.replicas = 2000;
    cfg.tau = 1.0;
    cfg.times = {0.0, 0.25, 0.5, 0.75, 1.0};
    cfg.seed = 1010;
    cfg.nodes_per_unit = 3.0;
    RunOptions opts;
    opts.threads = worker_threads();
    const auto r = run_experiment(cfg, opts);

    for (double n : cfg.n_list) {
        const auto* pin = find(r, n, "max_abs_z_at_0_and_tau");
        const auto* rec = find(r, n, "max_reconstruction_defect");
        o.require(pin && pin->estimate == 0.0, "N=" + fmt(n) + ": z_0 = z_tau = 0 exactly");
        o.require(rec && rec->estimate <= 1e-9, "N=" + fmt(n) + ": reconstruction defect " + fmt(rec->estimate, 3));
    }
    for (double t : {0.25, 0.5, 0.75}) {
        for (double s : {0.25, 0.5, 0.75}) {
            if (s < t) continue;
            const auto* c = find(r, 800.0, "cov_z(" + fmt(t) + "," + fmt(s) + ")");
            const double tol = std::max(3.0 * c->se, 0.3 * std::abs(c->target));
            o.require(std::abs(c->estimate - c->target) <= tol,
                      "N=800 Cov(z_" + fmt(t) + ", z_" + fmt(s) + ") = " + fmt(c->estimate) + " vs " + fmt(c->target) +
                          " (tol " + fmt(tol, 3) + "; exact finite-N " + fmt(*c->exact_finite_n) + ")");
        }
    }
    const auto* ks = find(r, 800.0, "ks_p_eta_vs_exact_normal");
    o.require(ks->estimate > 0.01, "N=800 KS p-value of eta vs exact-variance normal " + fmt(ks->estimate, 4));
    std::vector<double> sums;
    for (double n : cfg.n_list) {
        double s = 0.0;
        for (double t : {0.25, 0.5, 0.75}) s += std::abs(find(r, n, "cov_eta_z(" + fmt(t) + ")")->estimate);
        sums.push_back(s);
        o.note("N=" + fmt(n) + ": sum |Cov(eta, z_t)| = " + fmt(s));
    }
    std::vector<double> logs;
    for (double n : cfg.n_list) logs.push_back(std::log(n));
    const double slope = trend_slope(logs, sums);
    o.require(slope < 0.0, "|Cov(eta, z)| trend slope vs ln N " + fmt(slope, 3) + " < 0");
    return o;
}

// 11. Main-order asymptotic for a step weight and a zero-mass weight.
Outcome main_order()
{
    Outcome o;
    ExperimentConfig cfg;
    cfg.kind = ExperimentKind::main_order;
    cfg.n_list = {50.0, 200.0, 800.0};
    cfg.replicas = 2000;
    cfg.seed = 1111;
    cfg.nodes_per_unit = 3.0;
    cfg.phis.push_back({"half", TestFunction::indicator(0.0, 0.5), {}});
    cfg.phis.push_back({"zero_mass", TestFunction::piecewise_linear({0.0, 0.25, 0.75, 1.0}, {0.0, 1.0, -1.0, 0.0}), {}});
    RunOptions opts;
    opts.threads = worker_threads();
    const auto r = run_experiment(cfg, opts);
    for (double n : cfg.n_list) {
        const auto* h = find(r, n, "var_int_phi_xi[half]");
        const auto* z = find(r, n, "var_int_phi_xi[zero_mass]");
        o.note("N=" + fmt(n) + ": Var int phi xi (half) = " + fmt(h->estimate) + " +- " + fmt(h->se, 3) +
               " (exact finite-N " + fmt(*h->exact_finite_n) + ", limit 0.125); zero-mass = " + fmt(z->estimate));
    }
    const auto* th = find(r, 0.0, "trend_abs_var_minus_target[half]");
    const auto* tz = find(r, 0.0, "trend_var[zero_mass]");
    o.require(th->estimate < 0.0, "|Var - 0.125| trend slope " + fmt(th->estimate, 3) + " < 0");
    o.require(tz->estimate < 0.0, "zero-mass variance trend slope " + fmt(tz->estimate, 3) + " < 0");
    return o;
}

// 12. Ergodic variance ratio at N = 1e4.
Outcome ergodic_ratio()
{
    Outcome o;
    const double n = 1e4;
    const auto bump = test_function_from_json({{"type", "bump"}, {"lo", -1.0}, {"hi", 1.0}});
    for (const auto& [name, phi] : {std::pair{std::string("indicator [0,1]"), TestFunction::indicator(0.0, 1.0)},
                                    std::pair{std::string("bump on [-1,1]"), bump}}) {
        const double v = variance_sine_fourier(ergodic_weight_function(ErgodicWeight(phi, 1.0, n)));
        const double ratio = v / log_variance(n);
        o.require(ratio >= 0.9 && ratio <= 1.1, name + ": Var / (ln N / pi^2) = " + fmt(ratio) + " in [0.9, 1.1]");
    }
    return o;
}

struct Criterion {
    int id;
    std::string title;
    double budget_seconds;
    std::function<Outcome()> run;
};

} // namespace

int main(int argc, char** argv)
{
    const std::vector<Criterion> all{
        {1, "variance log law", 2.0, variance_log_law},
        {2, "covariance closed form", 60.0, covariance_closed_form},
        {3, "combinatorial identities", 30.0, [] { return from_identities("combinatorial"); }},
        {4, "overlap identity", 1.0, [] { return from_identities("overlap"); }},
        {5, "three-route variance agreement", 120.0, three_routes},
        {6, "cumulant oracle agreement", 120.0, cumulant_oracle},
        {7, "cumulant decay trend", 600.0, cumulant_decay},
        {8, "log-cosine integral", 60.0, [] { return from_identities("intlog"); }},
        {9, "sampler validity", 900.0, sampler_validity},
        {10, "functional decomposition", 1200.0, functional_decomposition},
        {11, "main-order asymptotic", 900.0, main_order},
        {12, "ergodic statistics", 10.0, ergodic_ratio},
    };
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

    int failures = 0;
    for (const auto& c : all) {
        if (!selected.empty() && !selected.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome out;
        try {
            out = c.run();
        } catch (const std::exception& e) {
            out.require(false, std::string("exception: ") + e.what());
        }
        const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        out.require(elapsed < c.budget_seconds, "runtime " + fmt(elapsed, 3) + " s < " + fmt(c.budget_seconds) + " s");
        std::cout << (out.passed ? "PASS" : "FAIL") << " criterion " << c.id << ": " << c.title << '\n';
        for (const auto& n : out.notes) std::cout << "    " << n << '\n';
        std::cout.flush();
        failures += out.passed ? 0 : 1;
    }
    std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << '\n';
    return failures == 0 ? 0 : 1;
}
