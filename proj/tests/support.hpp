#pragma once
// Shared helpers for the unit and acceptance tests.
#include "rbsde/problem_model.hpp"

#include <cmath>
#include <string>

namespace rbsde::test {

/// One-dimensional instance with singleton controls and zero coefficients;
/// callers overwrite the maps they need.
inline GameInstance zero_instance(int n = 1, int d = 1, double T = 1.0) {
    Coefficients c;
    c.drift = [n](double, const Vector&, const Vector&, const Vector&) { return Vector(Vector::Zero(n)); };
    c.diffusion = [n, d](double, const Vector&, const Vector&, const Vector&) { return Matrix(Matrix::Zero(n, d)); };
    c.driver = [](double, const Vector&, double, const Vector&, const Vector&, const Vector&) { return 0.0; };
    c.terminal = [](const Vector&) { return 0.0; };
    c.obstacle = [](double, const Vector&) { return -1.0; };
    c.declared_lipschitz = 1.0;
    c.declared_growth = 1.0;
    return GameInstance{n, d, T, c, ControlGrid::scalar({0.0}, "u"), ControlGrid::scalar({0.0}, "v"), "custom", {}};
}

inline bool near(double a, double b, double tol) { return std::abs(a - b) <= tol; }

}  // namespace rbsde::test
