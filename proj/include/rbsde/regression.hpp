#pragma once

#include "rbsde/common.hpp"

#include <vector>

namespace rbsde {

/// Polynomial basis of total degree <= `degree` in the state coordinates.
struct RegressionBasis {
    int degree = 2;
};

/// Least-squares estimator of E[target | X_k] for one cross-section of paths.
///
/// Features are centred and scaled per coordinate before the monomials are
/// formed. A cross-section with no spread (every path at the same state, as
/// at the initial time or with frozen dynamics) is fitted by the sample mean,
/// and for a single path the estimate is the target itself. A rank-deficient
/// design with genuine spread falls back to the mean and raises `fallback()`.
class CrossSectionRegression {
public:
    /// `states` is paths x n.
    CrossSectionRegression(const Matrix& states, RegressionBasis basis);

    /// Fitted conditional expectation at every path of the cross-section.
    Vector fit(const Vector& targets) const;

    bool fallback() const { return fallback_; }
    bool degenerate() const { return degenerate_; }
    Eigen::Index columns() const { return design_.cols(); }

private:
    Matrix design_;
    Eigen::ColPivHouseholderQR<Matrix> qr_;
    bool degenerate_ = false;
    bool fallback_ = false;
};

/// Number of monomials of total degree <= degree in n variables.
Eigen::Index monomial_count(int n, int degree);

}  // namespace rbsde
