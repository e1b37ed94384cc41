#include "sinelab/kernels.hpp"
#include "sinelab/spectral.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <vector>

using namespace sinelab;

namespace {

constexpr double pi = std::numbers::pi;

// L/pi - (2/pi^2) int_0^L (L - s) sin^2 s / s^2 ds, evaluated in 30-digit arithmetic.
constexpr double kVarIndicator5 = 0.39401944472135921;
constexpr double kVarIndicator10 = 0.4631936990626828;

} // namespace

TEST(SineKernel, DiagonalIsIntensity)
{
    EXPECT_DOUBLE_EQ(eval_sine_kernel(3.0, 3.0), 1.0 / pi);
    EXPECT_NEAR(eval_sine_kernel(1e-7, 0.0), 1.0 / pi, 1e-15);
}

TEST(SineKernel, OffDiagonalValuesAndSymmetry)
{
    EXPECT_DOUBLE_EQ(eval_sine_kernel(1.0, 0.0), std::sin(1.0) / pi);
    EXPECT_DOUBLE_EQ(eval_sine_kernel(0.0, 2.5), eval_sine_kernel(2.5, 0.0));
    EXPECT_NEAR(eval_sine_kernel(pi, 0.0), 0.0, 1e-16);
    // Series branch and direct branch agree across the switch.
    EXPECT_NEAR(eval_sine_kernel(0.999e-6, 0.0), eval_sine_kernel(1.001e-6, 0.0), 1e-15);
}

TEST(BuildOperator, RejectsCoarseSpacing)
{
    EXPECT_THROW(build_operator(Window(0.0, 10.0), 20), ResolutionError);
    EXPECT_THROW(build_operator(Window(0.0, 10.0), 1), ResolutionError);
    EXPECT_NO_THROW(build_operator(Window(0.0, 10.0), 21));
}

TEST(BuildOperator, SpectrumInUnitIntervalWithTraceIntensity)
{
    const Window w(0.0, 30.0);
    const auto op = build_operator(w);
    EXPECT_EQ(op.size(), default_node_count(w));
    EXPECT_GE(op.min_raw_eigenvalue, -kEigenSlack);
    EXPECT_LE(op.max_raw_eigenvalue, 1.0 + kEigenSlack);
    EXPECT_NEAR(op.eigenvalues.sum(), 30.0 / pi, 1e-10);
    EXPECT_NEAR(op.matrix.trace(), 30.0 / pi, 1e-12);
}

TEST(BuildOperator, EigenvectorsAreOrthonormal)
{
    const auto op = build_operator(Window(-5.0, 5.0));
    ASSERT_TRUE(op.has_eigenvectors());
    const auto n = op.eigenvectors.cols();
    const Eigen::MatrixXd gram = op.eigenvectors.transpose() * op.eigenvectors;
    EXPECT_LT((gram - Eigen::MatrixXd::Identity(n, n)).norm(), 1e-10);
    const Eigen::MatrixXd back = op.eigenvectors * op.eigenvalues.asDiagonal() * op.eigenvectors.transpose();
    EXPECT_LT((back - op.matrix).norm(), 1e-10);
}

TEST(BuildOperator, EigenvaluesOnlyMatchesFullSolve)
{
    const Window w(0.0, 12.0);
    const auto full = build_operator(w, default_node_count(w));
    const auto vals = build_operator(w, default_node_count(w), {{}, false});
    EXPECT_FALSE(vals.has_eigenvectors());
    EXPECT_LT((full.eigenvalues - vals.eigenvalues).cwiseAbs().maxCoeff(), 1e-11);
}

TEST(BuildOperator, NodesRespectBreakpoints)
{
    const auto op = build_operator(Window(0.0, 10.0), 120, {{3.3, 7.1}, true});
    double sum = 0.0;
    for (double w : op.weights) sum += w;
    EXPECT_NEAR(sum, 10.0, 1e-12);
    // No panel straddles a breakpoint: the weights left of 3.3 integrate to exactly 3.3.
    double left = 0.0;
    for (std::size_t i = 0; i < op.size(); ++i) {
        if (op.nodes[i] < 3.3) left += op.weights[i];
    }
    EXPECT_NEAR(left, 3.3, 1e-12);
}

TEST(Traces, VarianceOfIndicatorMatchesReference)
{
    for (auto [len, ref] : {std::pair{5.0, kVarIndicator5}, std::pair{10.0, kVarIndicator10}}) {
        const auto h = TestFunction::indicator(0.0, len);
        const auto op = build_operator(Window(0.0, len));
        const auto d = operator_defect_checks(op, h);
        EXPECT_NEAR(d.variance, ref, 1e-9) << "length " << len;
    }
}

TEST(Traces, WeightedProductReducesToPowerSums)
{
    const Window w(0.0, 15.0);
    const auto op = build_operator(w);
    const std::vector<TestFunction> h{TestFunction::indicator(0.0, 15.0)};
    const std::vector<MultiIndex> one{MultiIndex{1}};
    const std::vector<MultiIndex> two{MultiIndex{1}, MultiIndex{1}};
    EXPECT_NEAR(trace_weighted_product(op, h, one), 15.0 / pi, 1e-12);
    EXPECT_NEAR(trace_weighted_product(op, h, two), op.eigenvalues.array().square().sum(), 1e-10);
}

TEST(Traces, NodeValuesRejectSupportOutsideWindow)
{
    const auto op = build_operator(Window(0.0, 5.0));
    const std::vector<TestFunction> h{TestFunction::indicator(-1.0, 2.0)};
    EXPECT_THROW(node_values(op, h, MultiIndex{1}), DomainError);
    EXPECT_THROW(node_values(op, h, MultiIndex{1, 0}), DomainError);
}

TEST(DefectChecks, OrderedAsExpected)
{
    const auto h = TestFunction::indicator(0.0, 5.0);
    const auto op = build_operator(Window(0.0, 5.0));
    const auto d = operator_defect_checks(op, h);
    EXPECT_GE(d.defect_trace, -1e-10);
    EXPECT_LE(d.defect_trace, d.variance + 1e-9);
    EXPECT_LE(d.commutator_hs_sq, 2.0 * d.variance + 1e-9);
    // For an indicator equal to the window, h = 1 on every node: no commutator.
    EXPECT_NEAR(d.commutator_hs_sq, 0.0, 1e-12);
    EXPECT_NEAR(d.defect_trace, d.variance, 1e-10);
}

TEST(DefectChecks, TentInsideLargerWindow)
{
    const auto h = TestFunction::piecewise_linear({2.0, 8.0, 15.0}, {0.0, 1.0, 0.0});
    const auto op = build_operator(Window(0.0, 20.0), default_node_count(Window(0.0, 20.0)), {h.breakpoints(), true});
    const auto d = operator_defect_checks(op, h);
    EXPECT_NEAR(d.variance, variance_sine_fourier(h), 1e-7);
    EXPECT_LE(d.commutator_hs_sq, 2.0 * d.variance + 1e-9);
}
