#pragma once

#include "sinelab/error.hpp"
#include "sinelab/kernels.hpp"
#include "sinelab/ks.hpp"
#include "sinelab/linalg.hpp"
#include "sinelab/rng.hpp"
#include "sinelab/window.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

namespace sinelab {

struct Configuration {
    std::vector<double> points;
    Window window;
    std::uint64_t seed = 0;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// Throws unless points are strictly increasing and inside the window.
inline void validate_configuration(const Configuration& cfg)
{
    for (std::size_t i = 0; i < cfg.points.size(); ++i) {
        if (!cfg.window.contains(cfg.points[i])) {
            throw DomainError("configuration point " + std::to_string(cfg.points[i]) + " outside its window");
        }
        if (i > 0 && !(cfg.points[i] > cfg.points[i - 1])) {
            throw DomainError("configuration points must be strictly increasing");
        }
    }
}

inline constexpr double kResidualFloor = 1e-12;
inline constexpr int kMaxResampleFailures = 100;

namespace detail {

// Draw from the density on [l, r] that is linear between f0 at l and f1 at r.
inline double linear_density_draw(double l, double r, double f0, double f1, double u)
{
    const double len = r - l;
    if (len <= 0.0) {
        return l;
    }
    const double slope = (f1 - f0) / len;
    const double mass = 0.5 * (f0 + f1) * len;
    const double target = u * mass;
    if (std::abs(slope) * len < 1e-12 * std::max(f0, f1)) {
        return l + u * len;
    }
    // Solve f0 t + slope t^2 / 2 = target for t in [0, len], cancellation-free root.
    const double disc = std::max(0.0, f0 * f0 + 2.0 * slope * target);
    const double t = 2.0 * target / (f0 + std::sqrt(disc));
    return l + std::clamp(t, 0.0, len);
}

// Position inside the cell of node a, density interpolated linearly from the node values.
inline double refine_in_cell(const DiscretizedKernelOperator& op, const Eigen::VectorXd& q, std::size_t a,
                             RngStream& rng)
{
    const auto& x = op.nodes;
    const std::size_t n = x.size();
    auto density = [&](std::size_t b) { return std::max(0.0, q[static_cast<Eigen::Index>(b)]) / op.weights[b]; };
    const double here = density(a);
    const double lo = a == 0 ? op.window.lo : 0.5 * (x[a - 1] + x[a]);
    const double hi = a + 1 == n ? op.window.hi : 0.5 * (x[a] + x[a + 1]);
    auto at = [&](double y, std::size_t b) {
        const double s = (y - x[a]) / (x[b] - x[a]);
        return here + s * (density(b) - here);
    };
    const double f_lo = a == 0 ? here : at(lo, a - 1);
    const double f_hi = a + 1 == n ? here : at(hi, a + 1);
    const double left_mass = 0.5 * (f_lo + here) * (x[a] - lo);
    const double right_mass = 0.5 * (here + f_hi) * (hi - x[a]);
    const double pick = rng.uniform() * (left_mass + right_mass);
    const double u = rng.uniform_open();
    if (pick < left_mass) {
        return linear_density_draw(lo, x[a], f_lo, here, u);
    }
    return linear_density_draw(x[a], hi, here, f_hi, u);
}

} // namespace detail

/// HKPV: Bernoulli selection of eigenvectors, then chain-rule sampling of the projection DPP
/// with a pivoted-Cholesky update of the conditional kernel.
inline Configuration sample_dpp(const DiscretizedKernelOperator& op, RngStream& rng)
{
    if (!op.has_eigenvectors()) {
        throw DomainError("sample_dpp needs an operator built with eigenvectors");
    }
    std::vector<Eigen::Index> chosen;
    for (Eigen::Index i = 0; i < op.eigenvalues.size(); ++i) {
        if (rng.uniform() < op.eigenvalues[i]) {
            chosen.push_back(i);
        }
    }
    Configuration cfg;
    cfg.window = op.window;
    cfg.seed = rng.seed();
    const auto n = static_cast<Eigen::Index>(op.size());
    const auto m = static_cast<Eigen::Index>(chosen.size());
    if (m == 0) {
        return cfg;
    }
    Eigen::MatrixXd y(n, m);
    for (Eigen::Index c = 0; c < m; ++c) y.col(c) = op.eigenvectors.col(chosen[static_cast<std::size_t>(c)]);

    Eigen::VectorXd q = y.rowwise().squaredNorm();
    Eigen::MatrixXd e(n, m);
    Eigen::VectorXd col(n);
    cfg.points.reserve(static_cast<std::size_t>(m));
    for (Eigen::Index s = 0; s < m; ++s) {
        int failures = 0;
        while (true) {
            const double total = q.cwiseMax(0.0).sum();
            double target = rng.uniform() * total;
            Eigen::Index a = 0;
            for (; a + 1 < n; ++a) {
                target -= std::max(0.0, q[a]);
                if (target < 0.0) break;
            }
            col.noalias() = y * y.row(a).transpose();
            if (s > 0) {
                col.noalias() -= e.leftCols(s) * e.row(a).head(s).transpose();
            }
            const double residual = col[a];
            if (!(residual >= kResidualFloor)) {
                q[a] = 0.0;
                if (++failures >= kMaxResampleFailures) {
                    throw DegeneracyError("projection update stayed singular after 100 resamples");
                }
                continue;
            }
            cfg.points.push_back(detail::refine_in_cell(op, q, static_cast<std::size_t>(a), rng));
            e.col(s) = col / std::sqrt(residual);
            q -= e.col(s).cwiseAbs2();
            q[a] = 0.0;
            break;
        }
    }
    std::sort(cfg.points.begin(), cfg.points.end());
    return cfg;
}

/// Integrated semicircle law on [-1, 1], normalized to 1.
inline double semicircle_cdf(double u)
{
    u = std::clamp(u, -1.0, 1.0);
    return 0.5 + (u * std::sqrt(1.0 - u * u) + std::asin(u)) / std::numbers::pi;
}

/// Bulk eigenvalues of a beta = 2 tridiagonal matrix, unfolded to the requested intensity
/// and centred on the window.
inline Configuration sample_gue_bulk(std::size_t matrix_dim, const Window& window, RngStream& rng,
                                     double intensity = 1.0 / std::numbers::pi)
{
    if (matrix_dim < 50) {
        throw DomainError("GUE bulk sampler needs matrix_dim >= 50");
    }
    if (!(intensity > 0.0)) {
        throw DomainError("intensity must be positive");
    }
    const double dim = static_cast<double>(matrix_dim);
    if (window.length() * intensity > dim / 4.0) {
        throw CoverageError("window spans " + std::to_string(window.length() * intensity) +
                            " unfolded spacings, more than matrix_dim/4 = " + std::to_string(dim / 4.0));
    }
    std::vector<double> diag(matrix_dim);
    std::vector<double> off(matrix_dim - 1);
    for (double& v : diag) v = rng.normal();
    for (std::size_t i = 0; i < off.size(); ++i) {
        off[i] = rng.chi(2.0 * (dim - 1.0 - static_cast<double>(i))) / std::numbers::sqrt2;
    }
    const std::vector<double> eig = linalg::tridiagonal_eigenvalues(std::move(diag), std::move(off));

    Configuration cfg;
    cfg.window = window;
    cfg.seed = rng.seed();
    const double radius = 2.0 * std::sqrt(dim);
    const double centre = 0.5 * (window.lo + window.hi);
    for (double lambda : eig) {
        const double unfolded = dim * semicircle_cdf(lambda / radius);
        if (unfolded < 0.25 * dim || unfolded > 0.75 * dim) {
            continue;
        }
        const double x = centre + (unfolded - 0.5 * dim) / intensity;
        if (window.contains(x)) {
            cfg.points.push_back(x);
        }
    }
    std::sort(cfg.points.begin(), cfg.points.end());
    cfg.points.erase(std::unique(cfg.points.begin(), cfg.points.end()), cfg.points.end());
    return cfg;
}

inline std::vector<double> consecutive_gaps(const Configuration& cfg)
{
    std::vector<double> gaps;
    for (std::size_t i = 1; i < cfg.points.size(); ++i) gaps.push_back(cfg.points[i] - cfg.points[i - 1]);
    return gaps;
}

/// Gaps from independent DPP replicas on stream children 0, 1, ... until `count` are collected.
inline std::vector<double> dpp_gaps(const DiscretizedKernelOperator& op, const RngStream& rng, std::size_t count)
{
    std::vector<double> out;
    for (std::uint64_t r = 0; out.size() < count; ++r) {
        RngStream child = rng.child(r);
        const auto g = consecutive_gaps(sample_dpp(op, child));
        out.insert(out.end(), g.begin(), g.end());
    }
    out.resize(count);
    return out;
}

inline std::vector<double> gue_gaps(std::size_t matrix_dim, const Window& window, const RngStream& rng,
                                    std::size_t count, double intensity = 1.0 / std::numbers::pi)
{
    std::vector<double> out;
    for (std::uint64_t r = 0; out.size() < count; ++r) {
        RngStream child = rng.child(r);
        const auto g = consecutive_gaps(sample_gue_bulk(matrix_dim, window, child, intensity));
        out.insert(out.end(), g.begin(), g.end());
    }
    out.resize(count);
    return out;
}

struct CrossValidationOptions {
    double window_length = 100.0;
    double nodes_per_unit = kDefaultNodesPerUnit;
    std::size_t matrix_dim = 400;
    double gue_intensity = 1.0 / std::numbers::pi;
};

struct CrossValidation {
    double ks_statistic = 0.0;
    double p_value = 1.0;
};

/// Two-sample KS test between consecutive gaps of the DPP sampler and the GUE bulk sampler,
/// both read on windows of the same length.
inline CrossValidation cross_validate_samplers(std::size_t n_gaps, const RngStream& rng,
                                               const CrossValidationOptions& options = {})
{
    if (n_gaps < 1000) {
        throw DomainError("cross validation needs at least 1000 gaps");
    }
    const Window w(0.0, options.window_length);
    const auto op = build_operator(w, default_node_count(w, options.nodes_per_unit));
    const auto a = dpp_gaps(op, rng.child(0), n_gaps);
    const auto b = gue_gaps(options.matrix_dim, w, rng.child(1), n_gaps, options.gue_intensity);
    const auto ks = ks_two_sample(a, b);
    return {ks.statistic, ks.p_value};
}

inline void write_configuration(std::ostream& os, const Configuration& cfg)
{
    os << "# window " << std::setprecision(17) << cfg.window.lo << ' ' << cfg.window.hi << '\n';
    os << "# seed " << cfg.seed << '\n';
    for (double x : cfg.points) os << std::setprecision(17) << x << '\n';
}

inline Configuration read_configuration(std::istream& is)
{
    Configuration cfg;
    bool have_window = false;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::istringstream ls(line);
        if (line[0] == '#') {
            std::string hash;
            std::string key;
            ls >> hash >> key;
            if (key == "window") {
                double lo = 0.0;
                double hi = 0.0;
                ls >> lo >> hi;
                cfg.window = Window(lo, hi);
                have_window = true;
            } else if (key == "seed") {
                ls >> cfg.seed;
            }
            continue;
        }
        double x = 0.0;
        if (!(ls >> x)) {
            throw DomainError("unparsable configuration line: " + line);
        }
        cfg.points.push_back(x);
    }
    if (!have_window) {
        throw DomainError("configuration file lacks a '# window' header");
    }
    validate_configuration(cfg);
    return cfg;
}

} // namespace sinelab
