#pragma once

#include "sinelab/error.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace sinelab::linalg {

/// Eigenvalues (ascending) of a symmetric matrix; `a` is overwritten by the
/// eigenvectors (as columns) when `vectors` is set.
inline Eigen::VectorXd symmetric_eigen(Eigen::MatrixXd& a, bool vectors)
{
    if (a.rows() == 0) {
        return Eigen::VectorXd();
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, vectors ? Eigen::ComputeEigenvectors
                                                                     : Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw DiscretizationError("symmetric eigensolver did not converge");
    }
    if (vectors) {
        a = solver.eigenvectors();
    }
    return solver.eigenvalues();
}

/// Eigenvalues (ascending) of the symmetric tridiagonal matrix with diagonal `d`
/// and off-diagonal `e`.
inline std::vector<double> tridiagonal_eigenvalues(const std::vector<double>& d, const std::vector<double>& e)
{
    if (d.empty()) {
        return {};
    }
    if (e.size() + 1 != d.size()) {
        throw DomainError("off-diagonal must be one shorter than the diagonal");
    }
    const Eigen::Map<const Eigen::VectorXd> diag(d.data(), static_cast<Eigen::Index>(d.size()));
    const Eigen::Map<const Eigen::VectorXd> off(e.data(), static_cast<Eigen::Index>(e.size()));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver;
    solver.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw DegeneracyError("tridiagonal eigensolver did not converge");
    }
    return {solver.eigenvalues().data(), solver.eigenvalues().data() + solver.eigenvalues().size()};
}

} // namespace sinelab::linalg
