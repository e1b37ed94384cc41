#pragma once

#include "sinelab/error.hpp"
#include "sinelab/kernels.hpp"
#include "sinelab/ks.hpp"
#include "sinelab/rng.hpp"
#include "sinelab/sampler.hpp"
#include "sinelab/spectral.hpp"
#include "sinelab/statistics.hpp"
#include "sinelab/test_function.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <mutex>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef SINELAB_VERSION
#define SINELAB_VERSION "0.0.0"
#endif

namespace sinelab {

inline constexpr const char* kVersion = SINELAB_VERSION;

// ---------------------------------------------------------------------------
// Sample statistics

/// Pairwise summation in a fixed order: the result depends only on the input order.
inline double pairwise_sum(std::span<const double> x)
{
    if (x.size() <= 8) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const std::size_t half = x.size() / 2;
    return pairwise_sum(x.first(half)) + pairwise_sum(x.subspan(half));
}

inline double sample_mean(std::span<const double> x) { return pairwise_sum(x) / static_cast<double>(x.size()); }

struct Estimate {
    double value = 0.0;
    double se = 0.0;
};

/// Sample covariance with the standard error of the product-moment estimator.
inline Estimate sample_covariance(std::span<const double> x, std::span<const double> y)
{
    if (x.size() != y.size() || x.size() < 2) {
        throw SizeError("covariance needs two equally long samples of size >= 2");
    }
    const double n = static_cast<double>(x.size());
    const double mx = sample_mean(x);
    const double my = sample_mean(y);
    std::vector<double> prod(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) prod[i] = (x[i] - mx) * (y[i] - my);
    const double cov = pairwise_sum(prod) / (n - 1.0);
    const double mp = pairwise_sum(prod) / n;
    std::vector<double> dev(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) dev[i] = (prod[i] - mp) * (prod[i] - mp);
    const double var_prod = pairwise_sum(dev) / (n - 1.0);
    return {cov, std::sqrt(var_prod / n)};
}

inline Estimate sample_mean_se(std::span<const double> x)
{
    const double m = sample_mean(x);
    const auto v = sample_covariance(x, x).value;
    return {m, std::sqrt(v / static_cast<double>(x.size()))};
}

/// Unbiased k-statistics kappa_1..kappa_4.
inline std::vector<double> empirical_cumulants(std::span<const double> x, int max_order = 4)
{
    if (x.size() < 30) {
        throw SizeError("k-statistics need at least 30 samples");
    }
    if (max_order < 1 || max_order > 4) {
        throw DomainError("k-statistics are available up to order 4");
    }
    const double n = static_cast<double>(x.size());
    const double m = sample_mean(x);
    std::vector<double> d2(x.size()), d3(x.size()), d4(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double d = x[i] - m;
        d2[i] = d * d;
        d3[i] = d2[i] * d;
        d4[i] = d2[i] * d2[i];
    }
    const double s2 = pairwise_sum(d2);
    const double s3 = pairwise_sum(d3);
    const double s4 = pairwise_sum(d4);
    std::vector<double> k{m};
    k.push_back(s2 / (n - 1.0));
    k.push_back(n * s3 / ((n - 1.0) * (n - 2.0)));
    const double m2 = s2 / n;
    const double m4 = s4 / n;
    k.push_back(n * n * ((n + 1.0) * m4 - 3.0 * (n - 1.0) * m2 * m2) / ((n - 1.0) * (n - 2.0) * (n - 3.0)));
    k.resize(static_cast<std::size_t>(max_order));
    return k;
}

/// Normal-theory standard errors of the k-statistics.
inline std::vector<double> k_statistic_se(double variance, std::size_t n)
{
    const double s = static_cast<double>(n);
    const double v = variance;
    return {std::sqrt(v / s), v * std::sqrt(2.0 / (s - 1.0)), std::sqrt(6.0 / s) * std::pow(v, 1.5),
            std::sqrt(24.0 / s) * v * v};
}

inline KsResult ks_test(std::span<const double> samples, const std::function<double(double)>& cdf)
{
    if (samples.size() < 30) {
        throw SizeError("KS test needs at least 30 samples, got " + std::to_string(samples.size()));
    }
    return ks_one_sample(samples, cdf);
}

inline double normal_cdf(double x, double variance)
{
    return 0.5 * std::erfc(-x / std::sqrt(2.0 * variance));
}

/// Least-squares slope of y against x.
inline double trend_slope(std::span<const double> x, std::span<const double> y)
{
    const double mx = sample_mean(x);
    const double my = sample_mean(y);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return den > 0.0 ? num / den : 0.0;
}

// ---------------------------------------------------------------------------
// Configuration

enum class ExperimentKind { fd_clt, eta_z, main_order, ergodic };

inline std::string to_string(ExperimentKind k)
{
    switch (k) {
    case ExperimentKind::fd_clt: return "fd-clt";
    case ExperimentKind::eta_z: return "eta-z";
    case ExperimentKind::main_order: return "main-order";
    case ExperimentKind::ergodic: return "ergodic";
    }
    return "?";
}

/// Test function from its JSON description.
inline TestFunction test_function_from_json(const nlohmann::json& j)
{
    if (!j.is_object() || !j.contains("type")) {
        throw ConfigError("test function must be an object with a \"type\" field");
    }
    const auto type = j.at("type").get<std::string>();
    auto allow = [&](std::set<std::string> keys) {
        keys.insert("type");
        keys.insert("name");
        for (const auto& [k, v] : j.items()) {
            if (!keys.count(k)) throw ConfigError("unknown field \"" + k + "\" in " + type + " test function");
        }
    };
    if (type == "indicator") {
        allow({"lo", "hi"});
        return TestFunction::indicator(j.at("lo").get<double>(), j.at("hi").get<double>());
    }
    if (type == "piecewise_linear") {
        allow({"x", "y"});
        const auto x = j.at("x").get<std::vector<double>>();
        const auto y = j.at("y").get<std::vector<double>>();
        return TestFunction::piecewise_linear(x, y);
    }
    if (type == "bump") {
        // C exp(1 / (s^2 - 1)) on s in (-1, 1), mapped to [lo, hi], tabulated and normalized to unit mass.
        allow({"lo", "hi", "points"});
        const double lo = j.at("lo").get<double>();
        const double hi = j.at("hi").get<double>();
        const int points = j.value("points", 401);
        if (!(hi > lo) || points < 3) {
            throw ConfigError("bump needs lo < hi and at least 3 points");
        }
        std::vector<double> x(static_cast<std::size_t>(points));
        std::vector<double> y(x.size());
        for (int i = 0; i < points; ++i) {
            const double s = -1.0 + 2.0 * i / (points - 1);
            x[static_cast<std::size_t>(i)] = lo + (hi - lo) * (s + 1.0) / 2.0;
            y[static_cast<std::size_t>(i)] = std::abs(s) < 1.0 ? std::exp(1.0 / (s * s - 1.0)) : 0.0;
        }
        const double mass = TestFunction::tabulated(x, y).integral();
        for (double& v : y) v /= mass;
        return TestFunction::tabulated(x, y);
    }
    throw ConfigError("unknown test function type \"" + type + "\"");
}

struct NamedFunction {
    std::string name;
    TestFunction function;
    nlohmann::json spec;
};

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::fd_clt;
    std::vector<double> n_list{50.0, 200.0, 800.0};
    int replicas = 2000;
    double tau = 1.0;
    std::vector<double> times{0.5, 1.0};
    std::uint64_t seed = 1;
    double padding = 20.0;
    double nodes_per_unit = kDefaultNodesPerUnit;
    std::string output;
    std::vector<NamedFunction> phis;
    int retries = 3;
    double p_threshold = 0.01;

    void validate() const
    {
        if (replicas < 100) {
            throw ConfigError("replicas: " + std::to_string(replicas) + " is below the minimum 100");
        }
        if (padding < 20.0) {
            throw ConfigError("padding: must be at least 20");
        }
        if (n_list.empty()) {
            throw ConfigError("N: at least one value required");
        }
        for (double n : n_list) {
            if (!(n > 1.0)) throw ConfigError("N: every value must exceed 1");
        }
        if (!(tau > 0.0 && tau <= 1.0)) {
            throw ConfigError("tau: must lie in (0, 1]");
        }
        for (double t : times) {
            if (!(t >= 0.0 && t <= 1.0)) throw ConfigError("times: every value must lie in [0, 1]");
        }
        if (!(nodes_per_unit > 2.0)) {
            throw ConfigError("nodes_per_unit: must exceed 2 (node spacing below 0.5)");
        }
        if (retries < 0) {
            throw ConfigError("retries: must be nonnegative");
        }
        switch (kind) {
        case ExperimentKind::fd_clt: {
            std::set<double> distinct;
            for (double t : times) {
                if (t > 0.0) distinct.insert(t);
            }
            if (distinct.size() < 2) {
                throw ConfigError("times: fd-clt needs at least 2 distinct times in (0, 1]");
            }
            break;
        }
        case ExperimentKind::eta_z:
            if (std::find(times.begin(), times.end(), tau) == times.end() ||
                std::find(times.begin(), times.end(), 0.0) == times.end()) {
                throw ConfigError("times: eta-z needs 0 and tau in the time grid");
            }
            break;
        case ExperimentKind::main_order:
            if (phis.empty()) {
                throw ConfigError("phis: main-order needs at least one weight");
            }
            for (const auto& p : phis) {
                if (p.function.support().lo < 0.0 || p.function.support().hi > 1.0) {
                    throw ConfigError("phis: weight \"" + p.name + "\" must be supported in [0, 1]");
                }
            }
            break;
        case ExperimentKind::ergodic:
            if (phis.size() != 1) {
                throw ConfigError("phi: ergodic needs exactly one weight");
            }
            if (std::abs(phis[0].function.integral() - 1.0) > 1e-10) {
                throw ConfigError("phi: weight must integrate to 1, got " +
                                  std::to_string(phis[0].function.integral()));
            }
            if (std::find(times.begin(), times.end(), tau) == times.end() ||
                std::find(times.begin(), times.end(), 0.0) == times.end()) {
                throw ConfigError("times: ergodic needs 0 and tau in the time grid");
            }
            if (phis[0].function.support().lo < -padding || phis[0].function.support().hi > padding) {
                throw ConfigError("phi: support must fit inside the padding");
            }
            break;
        }
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j;
        j["kind"] = to_string(kind);
        j["N"] = n_list;
        j["replicas"] = replicas;
        j["tau"] = tau;
        j["times"] = times;
        j["seed"] = seed;
        j["padding"] = padding;
        j["nodes_per_unit"] = nodes_per_unit;
        j["retries"] = retries;
        j["p_threshold"] = p_threshold;
        if (!output.empty()) j["output"] = output;
        if (kind == ExperimentKind::ergodic && !phis.empty()) {
            j["phi"] = phis[0].spec;
        } else if (!phis.empty()) {
            j["phis"] = nlohmann::json::array();
            for (const auto& p : phis) j["phis"].push_back(p.spec);
        }
        return j;
    }

    /// FNV-1a over the canonical JSON dump.
    std::string hash() const
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : to_json().dump()) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        std::ostringstream os;
        os << std::hex << std::setw(16) << std::setfill('0') << h;
        return os.str();
    }
};

inline ExperimentConfig config_from_json(const nlohmann::json& j)
{
    if (!j.is_object()) {
        throw ConfigError("config must be a JSON object");
    }
    static const std::set<std::string> known{"kind", "N", "replicas", "tau", "times", "seed", "padding",
                                             "nodes_per_unit", "output", "phis", "phi", "retries", "p_threshold"};
    for (const auto& [k, v] : j.items()) {
        if (!known.count(k)) throw ConfigError("unknown field \"" + k + "\"");
    }
    ExperimentConfig c;
    try {
        const auto kind = j.at("kind").get<std::string>();
        if (kind == "fd-clt") c.kind = ExperimentKind::fd_clt;
        else if (kind == "eta-z") c.kind = ExperimentKind::eta_z;
        else if (kind == "main-order") c.kind = ExperimentKind::main_order;
        else if (kind == "ergodic") c.kind = ExperimentKind::ergodic;
        else throw ConfigError("kind: unknown experiment kind \"" + kind + "\"");
        if (j.contains("N")) c.n_list = j.at("N").get<std::vector<double>>();
        if (j.contains("replicas")) c.replicas = j.at("replicas").get<int>();
        if (j.contains("tau")) c.tau = j.at("tau").get<double>();
        if (j.contains("times")) c.times = j.at("times").get<std::vector<double>>();
        if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
        if (j.contains("padding")) c.padding = j.at("padding").get<double>();
        if (j.contains("nodes_per_unit")) c.nodes_per_unit = j.at("nodes_per_unit").get<double>();
        if (j.contains("output")) c.output = j.at("output").get<std::string>();
        if (j.contains("retries")) c.retries = j.at("retries").get<int>();
        if (j.contains("p_threshold")) c.p_threshold = j.at("p_threshold").get<double>();
        auto named = [](const nlohmann::json& spec, std::size_t i) {
            return NamedFunction{spec.value("name", "phi" + std::to_string(i)), test_function_from_json(spec), spec};
        };
        if (j.contains("phis")) {
            std::size_t i = 0;
            for (const auto& spec : j.at("phis")) c.phis.push_back(named(spec, i++));
        }
        if (j.contains("phi")) {
            if (j.contains("phis")) throw ConfigError("phi and phis are mutually exclusive");
            c.phis.push_back(named(j.at("phi"), 0));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed field: ") + e.what());
    } catch (const DomainError& e) {
        throw ConfigError(std::string("invalid test function: ") + e.what());
    }
    c.validate();
    return c;
}

inline ExperimentConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open config file " + path);
    }
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return config_from_json(j);
}

// ---------------------------------------------------------------------------
// Results

struct Check {
    double n_scale = 0.0;
    std::string statistic;
    double estimate = 0.0;
    double se = 0.0;
    double target = 0.0;
    double tolerance = 0.0;
    std::string verdict;  ///< "pass", "fail" or "info"
    std::optional<double> exact_finite_n;

    double discrepancy() const { return estimate - target; }
};

struct ExperimentResult {
    ExperimentConfig config;
    std::vector<Check> checks;
    nlohmann::json extra = nlohmann::json::object();
    std::string timestamp;

    bool passed() const
    {
        return std::none_of(checks.begin(), checks.end(), [](const Check& c) { return c.verdict == "fail"; });
    }

    /// Called for every check as it is added; lets callers keep partial results.
    std::function<void(const Check&)> sink;

    void add(Check c)
    {
        checks.push_back(std::move(c));
        if (sink) sink(checks.back());
    }

    nlohmann::json to_json() const
    {
        nlohmann::json j;
        j["version"] = kVersion;
        j["config"] = config.to_json();
        j["config_hash"] = config.hash();
        j["seed"] = config.seed;
        j["timestamp"] = timestamp;
        j["note"] = "tolerances are calibration choices, not derived error bars";
        nlohmann::json rows = nlohmann::json::array();
        for (const auto& c : checks) {
            nlohmann::json r{{"N", c.n_scale},          {"statistic", c.statistic}, {"estimate", c.estimate},
                             {"se", c.se},              {"target", c.target},       {"discrepancy", c.discrepancy()},
                             {"tolerance", c.tolerance}, {"verdict", c.verdict}};
            r["exact_finite_N"] = c.exact_finite_n ? nlohmann::json(*c.exact_finite_n) : nlohmann::json();
            rows.push_back(r);
        }
        j["checks"] = rows;
        j["extra"] = extra;
        j["passed"] = passed();
        return j;
    }

    void write_csv(std::ostream& os) const
    {
        os << "# version=" << kVersion << " seed=" << config.seed << " config_hash=" << config.hash() << '\n';
        os << "N,statistic,estimate,se,target,discrepancy,tolerance,exact_finite_N,verdict\n";
        os << std::setprecision(17);
        for (const auto& c : checks) {
            os << c.n_scale << ',' << c.statistic << ',' << c.estimate << ',' << c.se << ',' << c.target << ','
               << c.discrepancy() << ',' << c.tolerance << ',';
            if (c.exact_finite_n) os << *c.exact_finite_n;
            os << ',' << c.verdict << '\n';
        }
    }
};

inline std::string utc_timestamp()
{
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream os;
    os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return os.str();
}

// ---------------------------------------------------------------------------
// Replica engine

struct RunOptions {
    unsigned threads = 1;
    std::function<void(const std::string&)> log;
    std::function<void(const Check&)> on_check;
};

/// Runs `replicas` samples on disjoint streams; row r depends only on (seed, stream, r).
template <class Fn>
std::vector<std::vector<double>> run_replicas(const DiscretizedKernelOperator& op, const RngStream& base,
                                              int replicas, unsigned threads, Fn&& per_config)
{
    std::vector<std::vector<double>> rows(static_cast<std::size_t>(replicas));
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        while (true) {
            const int r = next.fetch_add(1);
            if (r >= replicas) return;
            try {
                RngStream rng = base.child(static_cast<std::uint64_t>(r));
                rows[static_cast<std::size_t>(r)] = per_config(sample_dpp(op, rng));
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(replicas);
            }
        }
    };
    const unsigned n_workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(replicas)));
    std::vector<std::thread> pool;
    for (unsigned w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
    return rows;
}

inline std::vector<double> column(const std::vector<std::vector<double>>& rows, std::size_t c)
{
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
}

namespace detail {

inline DiscretizedKernelOperator experiment_operator(const ExperimentConfig& cfg, double n_scale,
                                                     std::vector<double> breaks)
{
    const Window w(-cfg.padding, n_scale + cfg.padding);
    breaks.push_back(0.0);
    breaks.push_back(n_scale);
    return build_operator(w, default_node_count(w, cfg.nodes_per_unit), {std::move(breaks), true});
}

inline RngStream experiment_stream(const ExperimentConfig& cfg, std::size_t n_index, int attempt)
{
    return RngStream(cfg.seed, n_index).child(static_cast<std::uint64_t>(attempt));
}

inline void log(const RunOptions& o, const std::string& msg)
{
    if (o.log) o.log(msg);
}

inline std::string fmt_t(double t)
{
    std::ostringstream os;
    os << t;
    return os.str();
}

inline std::vector<double> distinct_positive(const std::vector<double>& times)
{
    std::vector<double> out;
    for (double t : times) {
        if (t > 0.0 && std::find(out.begin(), out.end(), t) == out.end()) out.push_back(t);
    }
    return out;
}

// Cov(S_a, S_b) by polarization of exact variances.
inline double exact_covariance(const TestFunction& a, const TestFunction& b)
{
    const double va = variance_sine_fourier(a);
    const double vb = variance_sine_fourier(b);
    const double vab = variance_sine_fourier(TestFunction::combination(1.0, a, 1.0, b));
    return 0.5 * (vab - va - vb);
}

inline Check tolerance_check(double n, std::string name, const Estimate& e, double target, double floor_abs,
                             double rel = 0.0)
{
    Check c;
    c.n_scale = n;
    c.statistic = std::move(name);
    c.estimate = e.value;
    c.se = e.se;
    c.target = target;
    c.tolerance = std::max({3.0 * e.se, floor_abs, rel * std::abs(target)});
    c.verdict = std::abs(e.value - target) <= c.tolerance ? "pass" : "fail";
    return c;
}

inline Check info(double n, std::string name, double estimate, double se = 0.0, double target = 0.0)
{
    Check c;
    c.n_scale = n;
    c.statistic = std::move(name);
    c.estimate = estimate;
    c.se = se;
    c.target = target;
    c.verdict = "info";
    return c;
}

inline Check trend_check(std::string name, const std::vector<double>& n_list, const std::vector<double>& values,
                         bool want_decrease)
{
    std::vector<double> logs;
    for (double n : n_list) logs.push_back(std::log(n));
    const double slope = trend_slope(logs, values);
    Check c;
    c.n_scale = 0.0;
    c.statistic = std::move(name);
    c.estimate = slope;
    c.target = 0.0;
    if (n_list.size() < 2) {
        c.verdict = "info";
    } else {
        c.verdict = (want_decrease ? slope < 0.0 : slope > 0.0) ? "pass" : "fail";
    }
    return c;
}

// KS with the retry rule: rerun the sampling on fresh streams while p < threshold.
template <class Sampler>
std::pair<KsResult, int> ks_with_retries(const ExperimentConfig& cfg, Sampler&& draw,
                                         const std::function<double(double)>& cdf)
{
    KsResult ks;
    int attempt = 0;
    for (; attempt <= cfg.retries; ++attempt) {
        ks = ks_test(draw(attempt), cdf);
        if (ks.p_value > cfg.p_threshold) break;
    }
    return {ks, std::min(attempt, cfg.retries)};
}

} // namespace detail

/// Finite-dimensional CLT for the counting process, normalized by exact variances.
inline ExperimentResult run_fd_clt(const ExperimentConfig& cfg, const RunOptions& opts = {})
{
    cfg.validate();
    ExperimentResult res;
    res.config = cfg;
    res.sink = opts.on_check;
    const auto times = cfg.times;
    const std::size_t d = times.size();
    std::vector<std::vector<double>> k3_by_t(d), k4_by_t(d);
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        const double n = cfg.n_list[ni];
        std::vector<double> breaks;
        for (double t : times) breaks.push_back(t * n);
        const auto op = detail::experiment_operator(cfg, n, breaks);
        detail::log(opts, "fd-clt: N=" + detail::fmt_t(n) + " operator n=" + std::to_string(op.size()));
        const auto rows = run_replicas(op, detail::experiment_stream(cfg, ni, 0), cfg.replicas, opts.threads,
                                       [&](const Configuration& c) { return xi_path(c, n, times); });
        const double v_n = log_variance(n);
        std::vector<double> exact_var(d);
        std::vector<TestFunction> ind;
        for (std::size_t i = 0; i < d; ++i) {
            ind.push_back(times[i] > 0.0 ? TestFunction::indicator(0.0, times[i] * n) : TestFunction::zero());
            exact_var[i] = variance_sine_fourier(ind[i]);
        }
        std::vector<std::vector<double>> hat(d);
        for (std::size_t i = 0; i < d; ++i) {
            hat[i] = column(rows, i);
            const double scale = exact_var[i] > 0.0 ? std::sqrt(v_n / exact_var[i]) : 0.0;
            for (double& v : hat[i]) v *= scale;
        }
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i; j < d; ++j) {
                if (times[i] == 0.0 || times[j] == 0.0) continue;
                const std::string tag = "(" + detail::fmt_t(times[i]) + "," + detail::fmt_t(times[j]) + ")";
                const auto cov = sample_covariance(hat[i], hat[j]);
                if (i == j || times[i] == times[j]) {
                    auto c = detail::tolerance_check(n, "cov_exactnorm" + tag, cov, 1.0, 0.0);
                    c.exact_finite_n = 1.0;
                    res.add(c);
                } else {
                    auto c = detail::tolerance_check(n, "cov_exactnorm" + tag, cov, 0.5, 0.15);
                    c.exact_finite_n = detail::exact_covariance(ind[i], ind[j]) / std::sqrt(exact_var[i] * exact_var[j]);
                    res.add(c);
                }
                const auto raw = sample_covariance(column(rows, i), column(rows, j));
                res.add(detail::info(n, "cov_lognorm" + tag, raw.value, raw.se, i == j ? 1.0 : 0.5));
            }
        }
        for (std::size_t i = 0; i < d; ++i) {
            if (times[i] == 0.0) continue;
            const auto k = empirical_cumulants(hat[i]);
            const auto se = k_statistic_se(k[1], hat[i].size());
            res.add(detail::info(n, "k3_xi(" + detail::fmt_t(times[i]) + ")", k[2], se[2]));
            res.add(detail::info(n, "k4_xi(" + detail::fmt_t(times[i]) + ")", k[3], se[3]));
            k3_by_t[i].push_back(std::abs(k[2]));
            k4_by_t[i].push_back(std::abs(k[3]));
        }
    }
    for (std::size_t i = 0; i < d; ++i) {
        if (times[i] == 0.0) continue;
        for (auto [name, values] : {std::pair{"k3", &k3_by_t[i]}, std::pair{"k4", &k4_by_t[i]}}) {
            auto c = detail::trend_check(std::string("trend_abs_") + name + "_xi(" + detail::fmt_t(times[i]) + ")",
                                         cfg.n_list, *values, true);
            c.verdict = "info";
            res.add(c);
        }
    }
    return res;
}

/// Shared (eta, z) reporting for the counting process and its ergodic analogue.
namespace detail {

struct EtaZSample {
    std::vector<double> eta;
    std::vector<std::vector<double>> z;  ///< per time
    double max_abs_z_pinned = 0.0;        ///< max |z| at t = 0 and t = tau
};

inline EtaZSample collect_eta_z(const std::vector<std::vector<double>>& rows, std::size_t d, double tau,
                                const std::vector<double>& times)
{
    EtaZSample s;
    s.eta = column(rows, 0);
    for (std::size_t i = 0; i < d; ++i) s.z.push_back(column(rows, 1 + i));
    for (std::size_t i = 0; i < d; ++i) {
        if (times[i] == 0.0 || times[i] == tau) {
            for (double v : s.z[i]) s.max_abs_z_pinned = std::max(s.max_abs_z_pinned, std::abs(v));
        }
    }
    return s;
}

inline void report_eta_z(ExperimentResult& res, const ExperimentConfig& cfg, double n, const EtaZSample& s,
                         const KsResult& ks, int retries_used, double eta_variance,
                         const std::function<double(double, double)>& exact_z_cov, double& eta_z_cov_sum)
{
    const ZCovarianceModel model(cfg.tau);
    const auto& times = cfg.times;
    Check pin = info(n, "max_abs_z_at_0_and_tau", s.max_abs_z_pinned);
    pin.tolerance = 0.0;
    pin.verdict = s.max_abs_z_pinned == 0.0 ? "pass" : "fail";
    res.add(pin);

    Check k = info(n, "ks_p_eta_vs_exact_normal", ks.p_value, 0.0, cfg.p_threshold);
    k.tolerance = cfg.p_threshold;
    k.verdict = ks.p_value > cfg.p_threshold ? "pass" : "fail";
    res.add(k);
    res.add(info(n, "ks_statistic_eta", ks.statistic));
    res.add(info(n, "ks_retries_used", retries_used));
    const auto var_eta = sample_covariance(s.eta, s.eta);
    auto ve = detail::info(n, "var_eta", var_eta.value, var_eta.se, 0.5);
    ve.exact_finite_n = eta_variance;
    res.add(ve);

    eta_z_cov_sum = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double t = times[i];
        if (t == 0.0 || t == cfg.tau) continue;
        const auto c = sample_covariance(s.eta, s.z[i]);
        auto chk = detail::tolerance_check(n, "cov_eta_z(" + fmt_t(t) + ")", c, 0.0, 0.0);
        chk.verdict = "info";
        res.add(chk);
        eta_z_cov_sum += std::abs(c.value);
    }
    for (std::size_t i = 0; i < times.size(); ++i) {
        for (std::size_t j = i; j < times.size(); ++j) {
            const double t = times[i];
            const double u = times[j];
            if (t == 0.0 || u == 0.0 || t == cfg.tau || u == cfg.tau) continue;
            const auto c = sample_covariance(s.z[i], s.z[j]);
            auto chk = tolerance_check(n, "cov_z(" + fmt_t(t) + "," + fmt_t(u) + ")", c, z_covariance(model, t, u),
                                       0.0, 0.30);
            chk.exact_finite_n = exact_z_cov(t, u);
            res.add(chk);
        }
    }
}

} // namespace detail

/// (eta, z) decomposition: KS of eta against its exact-variance normal, Cov(z) against the
/// closed form, Cov(eta, z) against 0.
inline ExperimentResult run_eta_z(const ExperimentConfig& cfg, const RunOptions& opts = {})
{
    cfg.validate();
    ExperimentResult res;
    res.config = cfg;
    res.sink = opts.on_check;
    const ZCovarianceModel model(cfg.tau);
    const auto& times = cfg.times;
    const std::size_t d = times.size();
    std::vector<double> eta_z_trend;
    double max_route = 0.0;
    double max_reconstruction = 0.0;
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        const double n = cfg.n_list[ni];
        std::vector<double> breaks;
        for (double t : times) breaks.push_back(t * n);
        breaks.push_back(cfg.tau * n);
        const auto op = detail::experiment_operator(cfg, n, breaks);
        detail::log(opts, "eta-z: N=" + detail::fmt_t(n) + " operator n=" + std::to_string(op.size()));
        std::mutex m;
        double route = 0.0;
        double recon = 0.0;
        auto per = [&](const Configuration& c) {
            const auto p = eta_z_decomposition(c, n, cfg.tau, times);
            {
                std::lock_guard<std::mutex> lock(m);
                route = std::max(route, p.route_discrepancy);
                recon = std::max(recon, p.reconstruction_defect);
            }
            std::vector<double> row{p.eta};
            row.insert(row.end(), p.z.begin(), p.z.end());
            return row;
        };
        std::vector<std::vector<double>> rows;
        auto draw = [&](int attempt) {
            rows = run_replicas(op, detail::experiment_stream(cfg, ni, attempt), cfg.replicas, opts.threads, per);
            return column(rows, 0);
        };
        const auto f_n = TestFunction::scaled(make_f(model), n);
        const double eta_var = variance_sine_fourier(f_n) / log_variance(n);
        const auto [ks, used] = detail::ks_with_retries(cfg, draw, [&](double x) { return normal_cdf(x, eta_var); });
        const auto s = detail::collect_eta_z(rows, d, cfg.tau, times);
        auto exact_z = [&](double t, double u) {
            const auto gt = TestFunction::scaled(make_g_t(model, t), n);
            const auto gu = TestFunction::scaled(make_g_t(model, u), n);
            return t == u ? variance_sine_fourier(gt) : detail::exact_covariance(gt, gu);
        };
        double sum = 0.0;
        detail::report_eta_z(res, cfg, n, s, ks, used, eta_var, exact_z, sum);
        eta_z_trend.push_back(sum);

        Check rc = detail::info(n, "max_reconstruction_defect", recon);
        rc.tolerance = 1e-9;
        rc.verdict = recon <= 1e-9 ? "pass" : "fail";
        res.add(rc);
        Check rt = detail::info(n, "max_route_discrepancy", route);
        rt.tolerance = 1e-9;
        rt.verdict = route <= 1e-9 ? "pass" : "fail";
        res.add(rt);
        max_route = std::max(max_route, route);
        max_reconstruction = std::max(max_reconstruction, recon);
    }
    res.add(detail::trend_check("trend_sum_abs_cov_eta_z", cfg.n_list, eta_z_trend, true));
    res.extra["max_route_discrepancy"] = max_route;
    res.extra["max_reconstruction_defect"] = max_reconstruction;
    return res;
}

namespace detail {

// psi(y) = int_y^1 phi on [0, 1] for piecewise-constant phi; int phi xi = (S_{psi^N} - E) / sigma.
inline std::optional<TestFunction> main_order_kernel(const TestFunction& phi)
{
    const auto k = phi.knots();
    if (!k) return std::nullopt;
    for (std::size_t i = 0; i + 1 < k->size(); ++i) {
        if ((*k)[i].right != (*k)[i + 1].left) return std::nullopt;
    }
    std::vector<double> xs{0.0};
    for (const auto& kn : *k) {
        if (kn.x > 0.0 && kn.x < 1.0) xs.push_back(kn.x);
    }
    xs.push_back(1.0);
    std::vector<double> ys;
    const double total = phi.primitive(1.0);
    for (double x : xs) ys.push_back(total - phi.primitive(x));
    return TestFunction::piecewise_linear(xs, ys);
}

} // namespace detail

/// Main-order asymptotic: int phi xi dt against the rank-one limit eta int phi.
inline ExperimentResult run_main_order(const ExperimentConfig& cfg, const RunOptions& opts = {})
{
    cfg.validate();
    ExperimentResult res;
    res.config = cfg;
    res.sink = opts.on_check;
    const std::size_t m = cfg.phis.size();
    std::vector<std::vector<double>> var_track(m);
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        const double n = cfg.n_list[ni];
        std::vector<double> breaks;
        for (const auto& p : cfg.phis) {
            for (double b : p.function.breakpoints()) breaks.push_back(b * n);
        }
        const auto op = detail::experiment_operator(cfg, n, breaks);
        detail::log(opts, "main-order: N=" + detail::fmt_t(n) + " operator n=" + std::to_string(op.size()));
        const auto rows = run_replicas(op, detail::experiment_stream(cfg, ni, 0), cfg.replicas, opts.threads,
                                       [&](const Configuration& c) {
                                           std::vector<double> r;
                                           for (const auto& p : cfg.phis) r.push_back(weighted_xi_integral(c, n, p.function));
                                           return r;
                                       });
        const double v_n = log_variance(n);
        for (std::size_t i = 0; i < m; ++i) {
            const auto& p = cfg.phis[i];
            const auto xs = column(rows, i);
            const auto v = sample_covariance(xs, xs);
            const double integral = p.function.integral();
            const double target = 0.5 * integral * integral;
            auto c = detail::info(n, "var_int_phi_xi[" + p.name + "]", v.value, v.se, target);
            if (auto psi = detail::main_order_kernel(p.function)) {
                c.exact_finite_n = variance_sine_fourier(TestFunction::scaled(*psi, n)) / v_n;
            }
            res.add(c);
            if (target > 0.0) {
                res.add(detail::info(n, "var_ratio[" + p.name + "]", v.value / target, v.se / target, 1.0));
                var_track[i].push_back(std::abs(v.value - target));
            } else {
                var_track[i].push_back(v.value);
            }
            for (std::size_t j = i + 1; j < m; ++j) {
                const auto ys = column(rows, j);
                const auto cov = sample_covariance(xs, ys);
                const double vy = sample_covariance(ys, ys).value;
                const double corr = cov.value / std::sqrt(v.value * vy);
                res.add(detail::info(n, "corr[" + p.name + "," + cfg.phis[j].name + "]", corr, 0.0,
                                     integral * cfg.phis[j].function.integral() >= 0.0 ? 1.0 : -1.0));
                if (std::abs(integral - cfg.phis[j].function.integral()) < 1e-12) {
                    std::vector<double> diff(xs.size());
                    for (std::size_t r = 0; r < xs.size(); ++r) diff[r] = xs[r] - ys[r];
                    const auto vd = sample_covariance(diff, diff);
                    res.add(detail::info(n, "var_diff[" + p.name + "," + cfg.phis[j].name + "]", vd.value, vd.se, 0.0));
                }
            }
        }
    }
    for (std::size_t i = 0; i < m; ++i) {
        const auto& p = cfg.phis[i];
        const double integral = p.function.integral();
        const std::string name = std::abs(integral) > 1e-12 ? "trend_abs_var_minus_target[" + p.name + "]"
                                                            : "trend_var[" + p.name + "]";
        res.add(detail::trend_check(name, cfg.n_list, var_track[i], true));
    }
    return res;
}

/// Ergodic statistics: S_{phi_t^N} in place of #[0, tN], with exact variances of the
/// convolved weights.
inline ExperimentResult run_ergodic(const ExperimentConfig& cfg, const RunOptions& opts = {})
{
    cfg.validate();
    ExperimentResult res;
    res.config = cfg;
    res.sink = opts.on_check;
    const ZCovarianceModel model(cfg.tau);
    const auto& phi = cfg.phis.front().function;
    const auto& times = cfg.times;
    const std::size_t d = times.size();
    std::vector<double> eta_z_trend;
    for (std::size_t ni = 0; ni < cfg.n_list.size(); ++ni) {
        const double n = cfg.n_list[ni];
        std::vector<double> breaks;
        for (double t : times) breaks.push_back(t * n);
        const auto op = detail::experiment_operator(cfg, n, breaks);
        detail::log(opts, "ergodic: N=" + detail::fmt_t(n) + " operator n=" + std::to_string(op.size()));
        std::vector<std::vector<double>> rows;
        auto per = [&](const Configuration& c) {
            const auto p = ergodic_path(c, phi, n, cfg.tau, times);
            std::vector<double> row{p.eta};
            row.insert(row.end(), p.z.begin(), p.z.end());
            row.insert(row.end(), p.xi.begin(), p.xi.end());
            return row;
        };
        auto draw = [&](int attempt) {
            rows = run_replicas(op, detail::experiment_stream(cfg, ni, attempt), cfg.replicas, opts.threads, per);
            return column(rows, 0);
        };
        const double v_n = log_variance(n);
        auto weight = [&](double t) { return ergodic_weight_function(ErgodicWeight(phi, t, n)); };
        const auto f_conv = TestFunction::convolved(phi, TestFunction::scaled(make_f(model), n));
        const double eta_var = variance_sine_fourier(f_conv) / v_n;
        const auto [ks, used] = detail::ks_with_retries(cfg, draw, [&](double x) { return normal_cdf(x, eta_var); });
        const auto s = detail::collect_eta_z(rows, d, cfg.tau, times);
        auto exact_z = [&](double t, double u) {
            const auto gt = TestFunction::convolved(phi, TestFunction::scaled(make_g_t(model, t), n));
            if (t == u) return variance_sine_fourier(gt);
            const auto gu = TestFunction::convolved(phi, TestFunction::scaled(make_g_t(model, u), n));
            const auto sum = TestFunction::convolved(
                phi, TestFunction::scaled(TestFunction::combination(1.0, make_g_t(model, t), 1.0, make_g_t(model, u)), n));
            return 0.5 * (variance_sine_fourier(sum) - variance_sine_fourier(gt) - variance_sine_fourier(gu));
        };
        double sum = 0.0;
        detail::report_eta_z(res, cfg, n, s, ks, used, eta_var, exact_z, sum);
        eta_z_trend.push_back(sum);

        std::vector<double> exact_var(d, 0.0);
        for (std::size_t i = 0; i < d; ++i) {
            if (times[i] == 0.0) continue;
            exact_var[i] = variance_sine_fourier(weight(times[i]));
            res.add(detail::info(n, "var_ratio_phi_t(" + detail::fmt_t(times[i]) + ")", exact_var[i] / v_n, 0.0, 1.0));
        }
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i + 1; j < d; ++j) {
                if (times[i] == 0.0 || times[j] == 0.0 || times[i] == times[j]) continue;
                auto xi_i = column(rows, 1 + d + i);
                auto xi_j = column(rows, 1 + d + j);
                for (double& v : xi_i) v *= std::sqrt(v_n / exact_var[i]);
                for (double& v : xi_j) v *= std::sqrt(v_n / exact_var[j]);
                const auto cov = sample_covariance(xi_i, xi_j);
                res.add(detail::tolerance_check(
                    n, "cov_exactnorm(" + detail::fmt_t(times[i]) + "," + detail::fmt_t(times[j]) + ")", cov, 0.5, 0.15));
            }
        }
    }
    res.add(detail::trend_check("trend_sum_abs_cov_eta_z", cfg.n_list, eta_z_trend, true));
    return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {})
{
    ExperimentResult r;
    switch (cfg.kind) {
    case ExperimentKind::fd_clt: r = run_fd_clt(cfg, opts); break;
    case ExperimentKind::eta_z: r = run_eta_z(cfg, opts); break;
    case ExperimentKind::main_order: r = run_main_order(cfg, opts); break;
    case ExperimentKind::ergodic: r = run_ergodic(cfg, opts); break;
    }
    r.timestamp = utc_timestamp();
    return r;
}

} // namespace sinelab
