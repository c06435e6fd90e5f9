#include "rbsde/regression.hpp"

#include <cmath>

namespace rbsde {

namespace {

void compositions(int pos, int left, std::vector<int>& c, std::vector<std::vector<int>>& out) {
    if (pos == static_cast<int>(c.size()) - 1) {
        c[pos] = left;
        out.push_back(c);
        return;
    }
    for (int a = left; a >= 0; --a) {
        c[pos] = a;
        compositions(pos + 1, left - a, c, out);
    }
}

// Exponent tuples with total degree <= degree, graded order.
void exponents(int n, int degree, std::vector<std::vector<int>>& out) {
    std::vector<int> c(n, 0);
    for (int total = 0; total <= degree; ++total) compositions(0, total, c, out);
}

}  // namespace

Eigen::Index monomial_count(int n, int degree) {
    std::vector<std::vector<int>> ex;
    exponents(n, degree, ex);
    return static_cast<Eigen::Index>(ex.size());
}

CrossSectionRegression::CrossSectionRegression(const Matrix& states, RegressionBasis basis) {
    if (basis.degree < 0) throw PreconditionError("regression degree must be >= 0");
    const Eigen::Index m = states.rows();
    const int n = static_cast<int>(states.cols());

    Vector mean = states.colwise().mean();
    Vector scale(n);
    bool spread = false;
    for (int j = 0; j < n; ++j) {
        const double var = (states.col(j).array() - mean[j]).square().mean();
        scale[j] = var > 0 ? std::sqrt(var) : 1.0;
        // relative threshold: identical states up to rounding count as no spread
        if (std::sqrt(var) > 1e-12 * (1.0 + std::abs(mean[j]))) spread = true;
    }
    if (m <= 1 || !spread || basis.degree == 0) {
        degenerate_ = (m <= 1 || !spread);
        design_ = Matrix::Ones(m, 1);
        qr_.compute(design_);
        return;
    }

    std::vector<std::vector<int>> ex;
    exponents(n, basis.degree, ex);
    design_.resize(m, static_cast<Eigen::Index>(ex.size()));
    for (Eigen::Index i = 0; i < m; ++i) {
        for (std::size_t c = 0; c < ex.size(); ++c) {
            double v = 1.0;
            for (int j = 0; j < n; ++j) {
                const double z = (states(i, j) - mean[j]) / scale[j];
                for (int p = 0; p < ex[c][j]; ++p) v *= z;
            }
            design_(i, static_cast<Eigen::Index>(c)) = v;
        }
    }
    qr_.compute(design_);
    if (qr_.rank() < design_.cols()) {
        fallback_ = true;
        design_ = Matrix::Ones(m, 1);
        qr_.compute(design_);
    }
}

Vector CrossSectionRegression::fit(const Vector& targets) const {
    if (targets.size() != design_.rows()) throw PreconditionError("regression target size mismatch");
    if (design_.rows() == 1) return targets;
    if (design_.cols() == 1) {
        // Mean fit; constant targets are returned untouched.
        if ((targets.array() == targets[0]).all()) return targets;
        return Vector::Constant(targets.size(), targets.mean());
    }
    const Vector coef = qr_.solve(targets);
    return design_ * coef;
}

}  // namespace rbsde
