#pragma once

#include "rbsde/common.hpp"

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace rbsde {

/// Finite stand-in for a compact control set. Points share one dimension and
/// are pairwise distinct; positions in `points()` are the control indices used
/// everywhere else in the library.
class ControlGrid {
public:
    ControlGrid(std::vector<Vector> points, std::string label);

    /// Convenience for scalar controls.
    static ControlGrid scalar(const std::vector<double>& values, std::string label);

    const std::vector<Vector>& points() const { return points_; }
    const Vector& operator[](std::size_t i) const { return points_[i]; }
    std::size_t size() const { return points_.size(); }
    Eigen::Index dimension() const { return points_.front().size(); }
    const std::string& label() const { return label_; }

private:
    std::vector<Vector> points_;
    std::string label_;
};

using DriftFn = std::function<Vector(double t, const Vector& x, const Vector& u, const Vector& v)>;
using DiffusionFn = std::function<Matrix(double t, const Vector& x, const Vector& u, const Vector& v)>;
using DriverFn = std::function<double(double t, const Vector& x, double y, const Vector& z,
                                      const Vector& u, const Vector& v)>;
using TerminalFn = std::function<double(const Vector& x)>;
using ObstacleFn = std::function<double(double t, const Vector& x)>;

/// Coefficient maps of the controlled forward-backward system. `drift` is
/// R^n-valued, `diffusion` returns an n x d matrix, `driver` is the running
/// cost f(t, x, y, z, u, v), `terminal` the payoff at the horizon and
/// `obstacle` the lower barrier h(t, x).
struct Coefficients {
    DriftFn drift;
    DiffusionFn diffusion;
    DriverFn driver;
    TerminalFn terminal;
    ObstacleFn obstacle;
    double declared_lipschitz = 1.0;
    double declared_growth = 1.0;
};

using ParamMap = std::map<std::string, double>;

/// Complete problem datum. Immutable after construction and safe to share
/// across threads (the coefficient maps are pure).
struct GameInstance {
    int n = 1;     // state dimension
    int d = 1;     // Brownian dimension
    double T = 1;  // horizon
    Coefficients coeffs;
    ControlGrid u_grid;
    ControlGrid v_grid;
    std::string label;
    ParamMap params;  // resolved parameter values, echoed into results

    double obstacle(double t, const Vector& x) const { return coeffs.obstacle(t, x); }
    double terminal(const Vector& x) const { return coeffs.terminal(x); }
};

/// Axis-aligned probe region for assumption checks.
struct ProbeBox {
    double lo = -10.0;
    double hi = 10.0;
};

struct Violation {
    std::string assumption;
    double t = 0.0;
    Vector witness;
    double observed = 0.0;
    Vector partner;  // second point of the probe pair for Lipschitz checks, empty otherwise
};

struct ValidationReport {
    bool passed = true;
    std::vector<Violation> violations;
    std::map<std::string, double> estimated_lipschitz;
};

/// Relative slack on declared constants before a probe counts as a violation.
inline constexpr double kValidationSlack = 1.05;

/// Probes Lipschitz and linear-growth bounds of every coefficient and the
/// barrier condition h(T, x) <= terminal(x) on quasi-random state pairs and
/// all control pairs. Deterministic for a given seed.
///
/// Assumption ids: "lipschitz.<coef>", "growth.<coef>" and "barrier", where
/// <coef> is one of drift, diffusion, driver, terminal, obstacle.
///
/// Throws EvaluationError if a coefficient throws, returns a non-finite value
/// or a value of the wrong shape; the message names the offending point.
ValidationReport validate_instance(const GameInstance& instance, int probe_count, std::uint64_t seed,
                                   ProbeBox box = {});

/// Names accepted by builtin_instance, in a fixed order.
const std::vector<std::string>& builtin_instance_names();

/// Default parameter values of a builtin instance.
ParamMap builtin_defaults(const std::string& name);

/// Builds a named benchmark instance. `overrides` may only name parameters
/// that appear in builtin_defaults(name).
GameInstance builtin_instance(const std::string& name, const ParamMap& overrides = {});

/// Replaces the control grids of an instance. The coefficient maps must accept
/// points of the new grids' dimension.
GameInstance with_control_grids(GameInstance instance, ControlGrid u_grid, ControlGrid v_grid);

}  // namespace rbsde
