#pragma once

#include "sinelab/error.hpp"
#include "sinelab/kernels.hpp"
#include "sinelab/multi_index.hpp"
#include "sinelab/quadrature.hpp"
#include "sinelab/test_function.hpp"

#include <Eigen/Dense>
#include <boost/rational.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <numeric>
#include <span>
#include <vector>

namespace sinelab {

using Rational = boost::rational<long long>;
using Composition = std::vector<MultiIndex>;

inline constexpr int kMaxCumulantOrder = 6;

/// Ordered tuples (a^1, ..., a^j) of nonzero multi-indices with a^1 + ... + a^j = k.
inline std::vector<Composition> enumerate_compositions(const MultiIndex& k, int j)
{
    if (j < 1 || j > k.order()) {
        throw DomainError("composition count j must lie in [1, |k|]");
    }
    std::vector<Composition> out;
    Composition current;
    std::function<void(const MultiIndex&, int)> rec = [&](const MultiIndex& rest, int parts) {
        if (parts == 1) {
            current.push_back(rest);
            out.push_back(current);
            current.pop_back();
            return;
        }
        // Enumerate all a <= rest componentwise, nonzero, leaving at least parts-1 units.
        std::vector<int> a(rest.dim(), 0);
        while (true) {
            std::size_t i = 0;
            while (i < a.size() && a[i] == rest[i]) {
                a[i] = 0;
                ++i;
            }
            if (i == a.size()) {
                break;
            }
            ++a[i];
            const MultiIndex part(a);
            if (rest.order() - part.order() >= parts - 1) {
                std::vector<int> r(rest.dim());
                for (std::size_t l = 0; l < r.size(); ++l) r[l] = rest[l] - a[l];
                current.push_back(part);
                rec(MultiIndex(r), parts - 1);
                current.pop_back();
            }
        }
    };
    rec(k, j);
    std::sort(out.begin(), out.end());
    return out;
}

namespace detail {

inline long long factorial_ll(int n)
{
    long long f = 1;
    for (int i = 2; i <= n; ++i) f *= i;
    return f;
}

inline long long multi_factorial_ll(const MultiIndex& a)
{
    long long f = 1;
    for (int e : a.entries()) f *= factorial_ll(e);
    return f;
}

inline void require_order(const MultiIndex& k, int lo)
{
    if (k.order() < lo) {
        throw DomainError("multi-index order " + std::to_string(k.order()) + " is below " + std::to_string(lo));
    }
    if (k.order() > kMaxCumulantOrder) {
        throw SizeError("multi-index order " + std::to_string(k.order()) + " exceeds 6");
    }
}

} // namespace detail

/// sum_j ((-1)^{j+1}/j) sum_{a^1+...+a^j=k} 1/(a^1!...a^j!), exactly.
inline Rational combinatorial_T(const MultiIndex& k)
{
    detail::require_order(k, 2);
    Rational total = 0;
    for (int j = 1; j <= k.order(); ++j) {
        Rational inner = 0;
        for (const auto& comp : enumerate_compositions(k, j)) {
            long long denom = 1;
            for (const auto& a : comp) denom *= detail::multi_factorial_ll(a);
            inner += Rational(1, denom);
        }
        total += Rational(j % 2 == 1 ? 1 : -1, j) * inner;
    }
    return total;
}

/// B_k = k! sum_j ((-1)^{j+1}/j) sum_{compositions} tr(h^{a^1}K ... h^{a^j}K_D) / (a^1!...a^j!).
inline double cumulant_from_traces(const DiscretizedKernelOperator& op, std::span<const TestFunction> h,
                                   const MultiIndex& k)
{
    detail::require_order(k, 1);
    if (k.dim() != h.size()) {
        throw DomainError("multi-index dimension does not match the number of test functions");
    }
    double total = 0.0;
    for (int j = 1; j <= k.order(); ++j) {
        double inner = 0.0;
        for (const auto& comp : enumerate_compositions(k, j)) {
            double denom = 1.0;
            for (const auto& a : comp) denom *= a.factorial();
            inner += trace_weighted_product(op, h, comp) / denom;
        }
        total += (j % 2 == 1 ? 1.0 : -1.0) / j * inner;
    }
    return k.factorial() * total;
}

/// Raw cumulants B_k with the normalization A_k = B_k / V_N^{|k_f|/2}.
class CumulantTable {
public:
    CumulantTable() = default;
    CumulantTable(std::size_t dimension, double v_n, std::vector<bool> growing)
        : dimension_(dimension), v_n_(v_n), growing_(std::move(growing))
    {
        if (!(v_n_ > 0.0)) {
            throw DomainError("normalization V_N must be positive");
        }
        if (growing_.empty()) {
            growing_.assign(dimension_, false);
        }
        if (growing_.size() != dimension_) {
            throw DomainError("split mask must have one flag per statistic");
        }
    }

    std::size_t dimension() const { return dimension_; }
    double v_n() const { return v_n_; }
    const std::vector<bool>& growing() const { return growing_; }

    void set(const MultiIndex& k, double b) { entries_[k] = b; }
    bool contains(const MultiIndex& k) const { return entries_.count(k) > 0; }
    double raw(const MultiIndex& k) const
    {
        auto it = entries_.find(k);
        if (it == entries_.end()) {
            throw DomainError("cumulant " + k.str() + " not in table");
        }
        return it->second;
    }

    /// |k_f| = total order over the variance-growing statistics.
    int growing_order(const MultiIndex& k) const
    {
        int s = 0;
        for (std::size_t l = 0; l < k.dim(); ++l) {
            if (growing_[l]) s += k[l];
        }
        return s;
    }

    double normalized(const MultiIndex& k) const
    {
        return raw(k) / std::pow(v_n_, 0.5 * growing_order(k));
    }

    const std::map<MultiIndex, double>& entries() const { return entries_; }

    nlohmann::json to_json() const
    {
        nlohmann::json j;
        j["dimension"] = dimension_;
        j["V_N"] = v_n_;
        nlohmann::json list = nlohmann::json::array();
        for (const auto& [k, b] : entries_) {
            list.push_back({{"k", k.entries()}, {"B", b}, {"A", normalized(k)}});
        }
        j["entries"] = list;
        return j;
    }

private:
    std::size_t dimension_ = 0;
    double v_n_ = 1.0;
    std::vector<bool> growing_;
    std::map<MultiIndex, double> entries_;
};

/// All multi-indices of dimension d with 1 <= |k| <= max_order, ordered by |k|.
inline std::vector<MultiIndex> multi_indices_up_to(std::size_t d, int max_order)
{
    std::vector<MultiIndex> out;
    std::vector<int> a(d, 0);
    while (true) {
        std::size_t i = 0;
        while (i < d && a[i] == max_order) {
            a[i] = 0;
            ++i;
        }
        if (i == d) {
            break;
        }
        ++a[i];
        MultiIndex k(a);
        if (k.order() <= max_order) {
            out.push_back(k);
        }
    }
    std::stable_sort(out.begin(), out.end(), [](const MultiIndex& x, const MultiIndex& y) {
        return x.order() < y.order() || (x.order() == y.order() && x < y);
    });
    return out;
}

inline CumulantTable cumulant_table_from_traces(const DiscretizedKernelOperator& op, std::span<const TestFunction> h,
                                                int max_order, double v_n = 1.0, std::vector<bool> growing = {})
{
    CumulantTable table(h.size(), v_n, std::move(growing));
    for (const auto& k : multi_indices_up_to(h.size(), max_order)) {
        table.set(k, cumulant_from_traces(op, h, k));
    }
    return table;
}

namespace detail {

// Central-difference stencils for the m-th derivative, offsets in units of the step.
struct Stencil {
    std::vector<int> offsets;
    std::vector<double> coeffs;
    int power;
};

inline const Stencil& stencil(int order)
{
    static const Stencil s[5] = {
        {{0}, {1.0}, 0},
        {{-1, 1}, {-0.5, 0.5}, 1},
        {{-1, 0, 1}, {1.0, -2.0, 1.0}, 2},
        {{-2, -1, 1, 2}, {-0.5, 1.0, -1.0, 0.5}, 3},
        {{-2, -1, 0, 1, 2}, {1.0, -4.0, 6.0, -4.0, 1.0}, 4},
    };
    return s[order];
}

} // namespace detail

/// Cumulants from finite differences of C(y) = log det(I + (e^{y.h} - 1) K_D).
/// The step in y_l is step / max|h_l| over the nodes.
inline CumulantTable cumulant_from_logdet(const DiscretizedKernelOperator& op, std::span<const TestFunction> h,
                                          int max_order, double v_n = 1.0, std::vector<bool> growing = {},
                                          double step = 3e-2)
{
    if (max_order < 1 || max_order > 4) {
        throw SizeError("log-det cumulants are available up to order 4");
    }
    const std::size_t d = h.size();
    const auto n = static_cast<Eigen::Index>(op.size());
    std::vector<Eigen::VectorXd> values;
    std::vector<double> steps;
    for (std::size_t l = 0; l < d; ++l) {
        values.push_back(node_values(op, h, MultiIndex::unit(d, l)));
        const double amplitude = values.back().cwiseAbs().maxCoeff();
        if (!(amplitude > 0.0)) {
            throw DegeneracyError("log-det cumulants need test functions that are nonzero at the nodes");
        }
        steps.push_back(step / amplitude);
    }

    // Extended precision: the order-4 stencil divides LU round-off by step^4.
    std::map<std::pair<std::vector<int>, int>, long double> cache;
    auto log_det = [&](const std::vector<int>& offsets, int refinement) {
        const auto key = std::make_pair(offsets, refinement);
        if (auto it = cache.find(key); it != cache.end()) {
            return it->second;
        }
        using MatrixXld = Eigen::Matrix<long double, Eigen::Dynamic, Eigen::Dynamic>;
        const long double shrink = 1.0L / static_cast<long double>(1 << refinement);
        std::vector<long double> diag(static_cast<std::size_t>(n), 0.0L);
        for (Eigen::Index i = 0; i < n; ++i) {
            long double e = 0.0L;
            for (std::size_t l = 0; l < d; ++l) {
                e += shrink * static_cast<long double>(steps[l]) * offsets[l] * static_cast<long double>(values[l][i]);
            }
            diag[static_cast<std::size_t>(i)] = std::expm1(e);
        }
        MatrixXld a(n, n);
        for (Eigen::Index j = 0; j < n; ++j) {
            for (Eigen::Index i = 0; i < n; ++i) {
                a(i, j) = diag[static_cast<std::size_t>(i)] * static_cast<long double>(op.matrix(i, j));
            }
            a(j, j) += 1.0L;
        }
        const Eigen::PartialPivLU<MatrixXld> lu(a);
        const MatrixXld& u = lu.matrixLU();
        long double log_abs = 0.0L;
        double sign = lu.permutationP().determinant();
        for (Eigen::Index i = 0; i < n; ++i) {
            const long double p = u(i, i);
            sign *= p < 0.0L ? -1.0 : 1.0;
            log_abs += std::log(std::abs(p));
        }
        if (!(sign > 0.0) || !std::isfinite(static_cast<double>(log_abs))) {
            throw RescalingError("determinant of I + (e^{y.h} - 1) K_D is not positive and finite at refinement " +
                                 std::to_string(refinement) +
                                 " (log|det| = " + std::to_string(static_cast<double>(log_abs)) + ")");
        }
        cache.emplace(key, log_abs);
        return log_abs;
    };

    auto derivative = [&](const MultiIndex& k, int refinement) {
        long double scale = 1.0L;
        for (std::size_t l = 0; l < d; ++l) {
            scale *= std::pow(static_cast<long double>(steps[l]) / static_cast<long double>(1 << refinement), k[l]);
        }
        std::vector<const detail::Stencil*> st;
        for (std::size_t l = 0; l < d; ++l) st.push_back(&detail::stencil(k[l]));
        std::vector<std::size_t> pos(d, 0);
        std::vector<int> offsets(d, 0);
        long double total = 0.0L;
        while (true) {
            long double coeff = 1.0L;
            for (std::size_t l = 0; l < d; ++l) {
                offsets[l] = st[l]->offsets[pos[l]];
                coeff *= st[l]->coeffs[pos[l]];
            }
            total += coeff * log_det(offsets, refinement);
            std::size_t l = 0;
            while (l < d && ++pos[l] == st[l]->offsets.size()) {
                pos[l] = 0;
                ++l;
            }
            if (l == d) {
                break;
            }
        }
        return static_cast<double>(total / scale);
    };

    CumulantTable table(d, v_n, std::move(growing));
    for (const auto& k : multi_indices_up_to(d, max_order)) {
        const double coarse = derivative(k, 0);
        const double fine = derivative(k, 1);
        table.set(k, (4.0 * fine - coarse) / 3.0);
    }
    return table;
}

namespace detail {

inline void require_blocks(std::span<const int> blocks, std::span<const double> v)
{
    if (blocks.empty()) {
        throw DomainError("at least one block is required");
    }
    int total = 0;
    for (int b : blocks) {
        if (b < 1) {
            throw DomainError("block sizes must be positive");
        }
        total += b;
    }
    if (total != static_cast<int>(v.size())) {
        throw DomainError("block sizes do not add up to the number of variables");
    }
    double sum = 0.0;
    double mass = 0.0;
    for (double x : v) {
        sum += x;
        mass += std::abs(x);
    }
    if (std::abs(sum) > 1e-12 * std::max(1.0, mass)) {
        throw DomainError("variables must sum to zero");
    }
}

// Partial sums of v at the interior block boundaries.
inline std::vector<double> boundary_sums(std::span<const int> blocks, std::span<const double> v)
{
    std::vector<double> out;
    double s = 0.0;
    std::size_t i = 0;
    for (std::size_t m = 0; m + 1 < blocks.size(); ++m) {
        for (int r = 0; r < blocks[m]; ++r) s += v[i++];
        out.push_back(s);
    }
    return out;
}

} // namespace detail

/// J = -max(0, boundary partial sums) - max(0, -boundary partial sums); 0 for one block.
inline double J_function(std::span<const int> blocks, std::span<const double> v)
{
    detail::require_blocks(blocks, v);
    double hi = 0.0;
    double lo = 0.0;
    for (double p : detail::boundary_sums(blocks, v)) {
        hi = std::max(hi, p);
        lo = std::min(lo, p);
    }
    return -hi + lo;
}

/// Length of the intersection of [-1, 1] shifted by 0 and by each boundary partial sum,
/// i.e. int prod K^(y - c_i) dy with K^ = 1_[-1,1]. Checked against max(2 + J, 0).
inline double soshnikov_overlap(std::span<const int> blocks, std::span<const double> v, double fault = 0.0)
{
    detail::require_blocks(blocks, v);
    if (blocks.size() < 2) {
        throw DomainError("the overlap identity needs at least two blocks");
    }
    double lo = -1.0;
    double hi = 1.0;
    for (double c : detail::boundary_sums(blocks, v)) {
        lo = std::max(lo, c - 1.0);
        hi = std::min(hi, c + 1.0);
    }
    const double overlap = std::max(0.0, hi - lo) + fault;
    const double via_j = std::max(2.0 + J_function(blocks, v), 0.0);
    if (std::abs(overlap - via_j) > 1e-12) {
        throw std::logic_error("overlap identity violated: intersection " + std::to_string(overlap) +
                               " vs max(2 + J, 0) " + std::to_string(via_j));
    }
    return overlap;
}

/// G(u) = sum_j ((-1)^j / j) sum_{l^1+...+l^j=|k|} sum_sigma max(0, block partial sums of u^sigma) / (l^1!...l^j!).
inline double G_function(std::span<const double> u)
{
    const int n = static_cast<int>(u.size());
    if (n < 2) {
        throw DomainError("G needs at least two variables");
    }
    if (n > kMaxCumulantOrder) {
        throw SizeError("G enumeration is limited to 6 variables");
    }
    std::vector<int> all(1, n);
    detail::require_blocks(all, u);

    std::vector<std::vector<double>> perms;
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    do {
        std::vector<double> p;
        for (int i : idx) p.push_back(u[static_cast<std::size_t>(i)]);
        perms.push_back(std::move(p));
    } while (std::next_permutation(idx.begin(), idx.end()));

    double total = 0.0;
    // Compositions of n as bit masks of the n-1 cut positions.
    for (unsigned mask = 0; mask < (1u << (n - 1)); ++mask) {
        std::vector<int> blocks;
        int run = 1;
        for (int c = 0; c < n - 1; ++c) {
            if (mask & (1u << c)) {
                blocks.push_back(run);
                run = 1;
            } else {
                ++run;
            }
        }
        blocks.push_back(run);
        const int j = static_cast<int>(blocks.size());
        double weight = (j % 2 == 0 ? 1.0 : -1.0) / j;
        for (int b : blocks) weight /= static_cast<double>(detail::factorial_ll(b));
        double acc = 0.0;
        for (const auto& p : perms) {
            double m = 0.0;
            for (double s : detail::boundary_sums(blocks, p)) m = std::max(m, s);
            acc += m;
        }
        total += weight * acc;
    }
    return total;
}

struct FourierTraceOptions {
    double tail_tolerance = 1e-12;
    std::size_t node_budget = 400'000'000;
};

/// tr(h^{a^1} K ... h^{a^j} K_D) for h_l^N(x) = h_l(x / N), from the hyperplane integral
/// (2 pi)^{-|k|} int_{sum v = 0} prod hat h(v_i) max(2 + J, 0) dS.
inline double fourier_trace(std::span<const TestFunction> h, const Composition& composition, double n_scale,
                            const FourierTraceOptions& options = {})
{
    if (composition.empty()) {
        throw DomainError("empty composition");
    }
    std::vector<std::size_t> fn;
    std::vector<int> blocks;
    for (const auto& a : composition) {
        if (a.dim() != h.size()) {
            throw DomainError("multi-index dimension does not match the number of test functions");
        }
        if (a.is_zero()) {
            throw DomainError("composition parts must be nonzero");
        }
        blocks.push_back(a.order());
        for (std::size_t l = 0; l < a.dim(); ++l) {
            for (int r = 0; r < a[l]; ++r) fn.push_back(l);
        }
    }
    const int n = static_cast<int>(fn.size());
    if (n > 3) {
        throw SizeError("hyperplane quadrature is limited to |k| <= 3");
    }
    std::vector<TestFunction> hs;
    for (const auto& f : h) hs.push_back(TestFunction::scaled(f, n_scale));
    const double pi = std::numbers::pi;
    const double prefactor = std::pow(2.0 * pi, -n);

    auto weight = [&](std::span<const double> v) { return std::max(2.0 + J_function(blocks, v), 0.0); };

    if (n == 1) {
        // Single variable pinned at 0: (2pi)^{-1} h^(0) * 2.
        return prefactor * std::real(hs[fn[0]].fourier(0.0)) * 2.0;
    }

    // Truncation radius for unclamped directions, from the two slowest-decaying factors.
    std::vector<double> ratio_at;
    auto decay = [&](double r) {
        std::vector<double> rs;
        for (std::size_t i : fn) rs.push_back(hs[i].fourier_envelope(r) / std::max(1e-300, hs[i].l1_norm()));
        std::sort(rs.rbegin(), rs.rend());
        return rs[0] * rs[1];
    };
    double radius = 1.0 / n_scale;
    while (decay(radius) > options.tail_tolerance && radius < 1e12) radius *= 2.0;

    double rate = 0.0;
    for (std::size_t i : fn) rate += hs[i].reach();
    const double width = 2.0 / std::max(rate, 1e-12);
    const bool first_clamped = blocks.size() >= 2 && blocks[0] == 1;

    auto count_nodes = [&](double lo, double hi) { return 16.0 * std::ceil((hi - lo) / width); };

    if (n == 2) {
        const double lo = first_clamped ? -2.0 : -radius;
        const double hi = first_clamped ? 2.0 : radius;
        if (count_nodes(lo, hi) > static_cast<double>(options.node_budget)) {
            throw SizeError("hyperplane grid exceeds the node budget");
        }
        auto f = [&](double p) {
            const double v[2] = {p, -p};
            const double w = weight(v);
            if (w == 0.0) return 0.0;
            return std::real(hs[fn[0]].fourier(p) * hs[fn[1]].fourier(-p)) * w;
        };
        return prefactor * quad::integrate(f, lo, hi, {0.0, -2.0, 2.0}, width, 16);
    }

    // n == 3: outer p1 = v1, inner p2 = v2, v3 = -p1 - p2.
    const bool second_clamped = blocks.size() >= 2 && !(blocks.size() == 2 && blocks[0] == 1);
    const double lo1 = first_clamped ? -2.0 : -radius;
    const double hi1 = first_clamped ? 2.0 : radius;
    const double inner_len = second_clamped ? 4.0 : 2.0 * radius;
    if (count_nodes(lo1, hi1) * count_nodes(0.0, inner_len) > static_cast<double>(options.node_budget)) {
        throw SizeError("hyperplane grid exceeds the node budget");
    }
    auto outer = [&](double p1) {
        const std::complex<double> h1 = hs[fn[0]].fourier(p1);
        auto inner = [&](double p2) {
            const double v[3] = {p1, p2, -p1 - p2};
            const double w = weight(v);
            if (w == 0.0) return 0.0;
            return std::real(h1 * hs[fn[1]].fourier(p2) * hs[fn[2]].fourier(-p1 - p2)) * w;
        };
        const double lo2 = second_clamped ? -p1 - 2.0 : -radius;
        const double hi2 = second_clamped ? -p1 + 2.0 : radius;
        std::vector<double> br{-p1, 0.0, 2.0 + std::min(0.0, p1) - p1, std::max(0.0, p1) - p1 - 2.0,
                               -p1 - 2.0, -p1 + 2.0};
        return quad::integrate(inner, lo2, hi2, std::move(br), width, 16);
    };
    return prefactor * quad::integrate(outer, lo1, hi1, {0.0, -2.0, 2.0, -4.0, 4.0}, width, 16);
}

} // namespace sinelab
