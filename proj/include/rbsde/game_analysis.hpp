#pragma once

#include "rbsde/backward_solver.hpp"
#include "rbsde/forward_sde.hpp"
#include "rbsde/isaacs_pde.hpp"
#include "rbsde/problem_model.hpp"

#include <cstdint>
#include <vector>

namespace rbsde {

/// Lower value W: solves the obstacle equation with the sup-inf Hamiltonian.
ValueField lower_value(const GameInstance& instance, const SpaceTimeGrid& grid, Exec exec = Exec::parallel);

/// Upper value U: solves the obstacle equation with the inf-sup Hamiltonian.
ValueField upper_value(const GameInstance& instance, const SpaceTimeGrid& grid, Exec exec = Exec::parallel);

struct HamiltonianSample {
    double t = 0;
    Vector x;
    double y = 0;
    Vector q;
    Matrix hessian;
};

/// max over samples of H+ - H-. Nonnegative; zero certifies the Isaacs
/// condition on the sample.
double isaacs_gap(const GameInstance& instance, const std::vector<HamiltonianSample>& samples);

/// Samples at every node of slice k of a field, with derivatives taken by
/// central differences.
std::vector<HamiltonianSample> field_samples(const ValueField& field, int k, double fraction = kInteriorFraction);

/// Isaacs condition tolerance.
inline constexpr double kIsaacsTolerance = 1e-12;

struct DppReport {
    double t = 0;
    double delta = 0;
    std::vector<Vector> sample_points;
    std::vector<double> residuals;
    double max_residual = 0;
};

/// Re-solves the obstacle equation on [t_k, t_{k+delta}] from the field's slice
/// at t_{k+delta} and compares with the field's slice at t_k on the interior
/// sub-box nodes.
DppReport dpp_residual(const ValueField& field, const GameInstance& instance, int t_index, int delta_steps,
                       double fraction = kInteriorFraction);

struct MonteCarloSettings {
    std::size_t paths = 10000;
    int steps = 50;
    std::uint64_t seed = 1;
    RegressionBasis basis{};
};

struct DppMonteCarloReport {
    double grid_value = 0;
    double mc_value = 0;
    double std_error = 0;
    double tolerance = 0;  // 3 standard errors + 5 dx
    bool within = false;
};

/// Probabilistic cross-check of the DPP: with feedback controls read off the
/// field's discrete Hamiltonian, applies the backward semigroup by Monte Carlo
/// to the field slice at t+delta (interpolated, floored at the obstacle) and
/// compares with the grid value at (t, x0).
DppMonteCarloReport dpp_monte_carlo(const ValueField& field, const GameInstance& instance, const Vector& x0,
                                    int t_index, int delta_steps, const MonteCarloSettings& mc,
                                    Exec exec = Exec::parallel);

struct ConvergenceTable {
    std::vector<double> m_schedule;
    std::vector<double> sup_gaps;
    bool monotone_ok = false;
    // Both order checks run over non-boundary nodes.
    double max_monotone_violation = 0;  // max over nodes and consecutive m of (W_{m_i} - W_{m_{i+1}})^+
    double max_order_violation = 0;     // max over nodes of (W_m - W)^+
    bool gaps_nonincreasing = false;
};

/// Nodewise tolerance for the penalization order and W <= U.
inline constexpr double kOrderTolerance = 1e-12;

ConvergenceTable penalization_convergence(const GameInstance& instance, const SpaceTimeGrid& grid,
                                          const std::vector<double>& m_schedule, Exec exec = Exec::parallel);

struct ComparisonReport {
    double max_violation = 0;    // max (W - U)^+ over all nodes
    double max_gap = 0;          // max (U - W) over all nodes
    double interior_sup_diff = 0;  // max |U - W| on the interior sub-box
};

ComparisonReport value_comparison(const ValueField& lower, const ValueField& upper);

struct TimeContinuityFit {
    std::vector<double> deltas;
    std::vector<double> moduli;  // max |w(t) - w(t+delta)| / (1 + |x|)
    double exponent = 0;
    double constant = 0;
};

/// Log-log fit of the time modulus of a field over the x samples and the
/// slices with t in [t_lo, t_hi] (t + delta <= T).
TimeContinuityFit time_continuity_profile(const ValueField& field, const std::vector<Vector>& x_samples,
                                          const std::vector<double>& delta_schedule, double t_lo, double t_hi);

/// Feedback controls read off the discrete Hamiltonian of a field: u is the
/// outer maximizer, v the inner minimizer attained against it.
struct FeedbackPair {
    ControlPath u;
    ControlPath v;
};

FeedbackPair optimal_feedback(const ValueField& field, const GameInstance& instance);

/// Minimizing response of v to a given u feedback rule.
ControlPath best_response_v(const ValueField& field, const GameInstance& instance, FeedbackFn u_rule);

}  // namespace rbsde
