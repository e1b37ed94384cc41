#pragma once

#include "sinelab/error.hpp"
#include "sinelab/linalg.hpp"
#include "sinelab/multi_index.hpp"
#include "sinelab/quadrature.hpp"
#include "sinelab/test_function.hpp"
#include "sinelab/window.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace sinelab {

/// sin(x - y) / (pi (x - y)).
inline double eval_sine_kernel(double x, double y)
{
    const double d = x - y;
    if (std::abs(d) < 1e-6) {
        const double d2 = d * d;
        return (1.0 - d2 / 6.0 * (1.0 - d2 / 20.0 * (1.0 - d2 / 42.0))) / std::numbers::pi;
    }
    return std::sin(d) / (std::numbers::pi * d);
}

struct SineKernel {
    double operator()(double x, double y) const { return eval_sine_kernel(x, y); }
};

inline constexpr double kDefaultNodesPerUnit = 12.0;
inline constexpr double kEigenSlack = 1e-8;

/// Nyström discretization of the sine kernel restricted to a window.
struct DiscretizedKernelOperator {
    Window window;
    std::vector<double> nodes;
    std::vector<double> weights;
    Eigen::MatrixXd matrix;        ///< sqrt(w_i) K(x_i, x_j) sqrt(w_j)
    Eigen::VectorXd eigenvalues;   ///< ascending, clamped to [0, 1]
    Eigen::MatrixXd eigenvectors;  ///< columns; empty when built eigenvalues-only
    double min_raw_eigenvalue = 0.0;
    double max_raw_eigenvalue = 0.0;

    std::size_t size() const { return nodes.size(); }
    bool has_eigenvectors() const { return eigenvectors.size() > 0; }
};

struct BuildOptions {
    /// Interior points where panels must break (kinks of the test functions in use).
    std::vector<double> breakpoints;
    bool eigenvectors = true;
};

inline std::size_t default_node_count(const Window& w, double nodes_per_unit = kDefaultNodesPerUnit)
{
    return static_cast<std::size_t>(std::max(2.0, std::ceil(w.length() * nodes_per_unit)));
}

namespace detail {

// Nodes per breakpoint segment, proportional to segment length, summing to n.
inline std::vector<std::size_t> allocate_nodes(const std::vector<double>& edges, std::size_t n)
{
    const std::size_t segs = edges.size() - 1;
    if (n < 2 * segs) {
        throw ResolutionError("too few nodes for the requested panel breakpoints");
    }
    const double total = edges.back() - edges.front();
    std::vector<std::size_t> count(segs, 2);
    std::size_t remaining = n - 2 * segs;
    std::vector<double> share(segs);
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < segs; ++s) {
        share[s] = static_cast<double>(remaining) * (edges[s + 1] - edges[s]) / total;
        const auto whole = static_cast<std::size_t>(std::floor(share[s]));
        count[s] += whole;
        assigned += whole;
        share[s] -= static_cast<double>(whole);
    }
    std::vector<std::size_t> order(segs);
    for (std::size_t s = 0; s < segs; ++s) order[s] = s;
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return share[a] > share[b]; });
    for (std::size_t r = 0; r < remaining - assigned; ++r) {
        ++count[order[r % segs]];
    }
    return count;
}

} // namespace detail

/// Gauss-Legendre panel nodes (at most 64 per panel) and weights on `window`.
inline void panel_nodes(const Window& window, std::size_t n_nodes, const std::vector<double>& breakpoints,
                        std::vector<double>& nodes, std::vector<double>& weights)
{
    std::vector<double> interior;
    for (double b : breakpoints) {
        if (b > window.lo && b < window.hi) {
            interior.push_back(b);
        }
    }
    const auto edges = quad::clip_breaks(interior, window.lo, window.hi);
    const auto counts = detail::allocate_nodes(edges, n_nodes);
    nodes.clear();
    weights.clear();
    for (std::size_t s = 0; s + 1 < edges.size(); ++s) {
        const std::size_t panels = (counts[s] + 63) / 64;
        const double width = (edges[s + 1] - edges[s]) / static_cast<double>(panels);
        for (std::size_t p = 0; p < panels; ++p) {
            const std::size_t m = counts[s] / panels + (p < counts[s] % panels ? 1 : 0);
            const auto& rule = quad::gauss_legendre(static_cast<unsigned>(m));
            const double a = edges[s] + width * static_cast<double>(p);
            for (std::size_t i = 0; i < m; ++i) {
                nodes.push_back(a + 0.5 * width * (rule.nodes[i] + 1.0));
                weights.push_back(0.5 * width * rule.weights[i]);
            }
        }
    }
}

inline DiscretizedKernelOperator build_operator(const Window& window, std::size_t n_nodes,
                                                const BuildOptions& options = {})
{
    if (n_nodes < 2) {
        throw ResolutionError("build_operator needs at least 2 nodes");
    }
    const double spacing = window.length() / static_cast<double>(n_nodes);
    if (spacing >= 0.5) {
        throw ResolutionError("mean node spacing " + std::to_string(spacing) + " is not below 0.5");
    }
    DiscretizedKernelOperator op;
    op.window = window;
    panel_nodes(window, n_nodes, options.breakpoints, op.nodes, op.weights);

    const auto n = static_cast<Eigen::Index>(op.nodes.size());
    op.matrix.resize(n, n);
    std::vector<double> root(op.weights.size());
    for (std::size_t i = 0; i < root.size(); ++i) root[i] = std::sqrt(op.weights[i]);
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = j; i < n; ++i) {
            const double v = root[i] * eval_sine_kernel(op.nodes[i], op.nodes[j]) * root[j];
            op.matrix(i, j) = v;
            op.matrix(j, i) = v;
        }
    }

    Eigen::MatrixXd work = op.matrix;
    op.eigenvalues = linalg::symmetric_eigen(work, options.eigenvectors);
    if (options.eigenvectors) {
        op.eigenvectors = std::move(work);
    }
    op.min_raw_eigenvalue = n ? op.eigenvalues.minCoeff() : 0.0;
    op.max_raw_eigenvalue = n ? op.eigenvalues.maxCoeff() : 0.0;
    if (op.min_raw_eigenvalue < -kEigenSlack || op.max_raw_eigenvalue > 1.0 + kEigenSlack) {
        throw DiscretizationError("eigenvalue outside [-1e-8, 1+1e-8]: min " +
                                  std::to_string(op.min_raw_eigenvalue) + ", max " +
                                  std::to_string(op.max_raw_eigenvalue));
    }
    op.eigenvalues = op.eigenvalues.cwiseMax(0.0).cwiseMin(1.0);
    return op;
}

inline DiscretizedKernelOperator build_operator(const Window& window)
{
    return build_operator(window, default_node_count(window));
}

namespace detail {

inline void require_support(const DiscretizedKernelOperator& op, const TestFunction& h)
{
    if (!op.window.contains(h.support())) {
        throw DomainError("test function support [" + std::to_string(h.support().lo) + ", " +
                          std::to_string(h.support().hi) + "] is not inside the operator window");
    }
}

} // namespace detail

/// Values of prod_l h_l^{a_l} at the operator nodes.
inline Eigen::VectorXd node_values(const DiscretizedKernelOperator& op, std::span<const TestFunction> h,
                                   const MultiIndex& power)
{
    if (power.dim() != h.size()) {
        throw DomainError("multi-index dimension does not match the number of test functions");
    }
    Eigen::VectorXd d = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(op.size()));
    for (std::size_t l = 0; l < h.size(); ++l) {
        if (power[l] == 0) {
            continue;
        }
        detail::require_support(op, h[l]);
        for (std::size_t i = 0; i < op.size(); ++i) {
            d[static_cast<Eigen::Index>(i)] *= std::pow(h[l](op.nodes[i]), power[l]);
        }
    }
    return d;
}

/// tr(D_1 M D_2 M ... D_j M) for diagonal weights D_i given at the nodes.
inline double trace_diagonal_product(const DiscretizedKernelOperator& op, std::span<const Eigen::VectorXd> diags)
{
    if (diags.empty()) {
        throw DomainError("trace of an empty product");
    }
    const bool all_ones = std::all_of(diags.begin(), diags.end(), [](const Eigen::VectorXd& d) {
        return (d.array() == 1.0).all();
    });
    if (all_ones) {
        return op.eigenvalues.array().pow(static_cast<double>(diags.size())).sum();
    }
    const Eigen::MatrixXd& m = op.matrix;
    if (diags.size() == 1) {
        return diags[0].dot(m.diagonal());
    }
    Eigen::MatrixXd p = diags[0].asDiagonal() * m;
    for (std::size_t i = 1; i + 1 < diags.size(); ++i) {
        p = (p * diags[i].asDiagonal()) * m;
    }
    // tr(P D M) = sum_ab P_ab D_b M_ba, and M is symmetric.
    return ((p * diags.back().asDiagonal()).array() * m.array()).sum();
}

/// tr(h^{a^1} K h^{a^2} K ... h^{a^j} K_D) on the discretized operator.
inline double trace_weighted_product(const DiscretizedKernelOperator& op, std::span<const TestFunction> h,
                                     std::span<const MultiIndex> blocks)
{
    std::vector<Eigen::VectorXd> diags;
    diags.reserve(blocks.size());
    for (const auto& a : blocks) diags.push_back(node_values(op, h, a));
    return trace_diagonal_product(op, diags);
}

struct DefectChecks {
    double defect_trace = 0.0;      ///< tr h^2 (K_D - K_D^2)
    double commutator_hs_sq = 0.0;  ///< ||[K_D, h]||_HS^2
    double variance = 0.0;          ///< tr h^2 K_D - tr (h K_D)^2
};

inline DefectChecks operator_defect_checks(const DiscretizedKernelOperator& op, const TestFunction& h)
{
    detail::require_support(op, h);
    const auto n = static_cast<Eigen::Index>(op.size());
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = h(op.nodes[static_cast<std::size_t>(i)]);
    const Eigen::MatrixXd& m = op.matrix;
    const Eigen::ArrayXXd m2 = m.array().square();

    const double tr_h2k = (v.array().square() * m.diagonal().array()).sum();
    const double tr_hk_sq = v.dot(m2.matrix() * v);
    const Eigen::VectorXd row_sq = m2.rowwise().sum();

    DefectChecks out;
    out.defect_trace = (v.array().square() * (m.diagonal() - row_sq).array()).sum();
    double comm = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = v[i] - v[j];
            comm += m2(i, j) * d * d;
        }
    }
    out.commutator_hs_sq = comm;
    out.variance = tr_h2k - tr_hk_sq;
    return out;
}

} // namespace sinelab
