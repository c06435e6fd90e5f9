#pragma once

#include "rbsde/common.hpp"
#include "rbsde/forward_sde.hpp"
#include "rbsde/problem_model.hpp"
#include "rbsde/regression.hpp"

#include <span>
#include <vector>

namespace rbsde {

enum class Scheme { reflected, penalized };

/// Discrete (Y, Z, K) along a path bundle. K is cumulative: K(i, 0) = 0 and
/// K(i, k+1) - K(i, k) is the push applied at node k.
class BackwardSolution {
public:
    BackwardSolution(std::size_t paths, int steps, int d, Scheme scheme, double penalty);

    std::size_t paths() const { return paths_; }
    int steps() const { return steps_; }
    int d() const { return d_; }
    Scheme scheme() const { return scheme_; }
    double penalty() const { return penalty_; }  // m for the penalized scheme, 0 otherwise

    double& Y(std::size_t i, int k) { return Y_[i * (steps_ + 1) + k]; }
    double Y(std::size_t i, int k) const { return Y_[i * (steps_ + 1) + k]; }
    double& K(std::size_t i, int k) { return K_[i * (steps_ + 1) + k]; }
    double K(std::size_t i, int k) const { return K_[i * (steps_ + 1) + k]; }
    double& obstacle(std::size_t i, int k) { return h_[i * (steps_ + 1) + k]; }
    double obstacle(std::size_t i, int k) const { return h_[i * (steps_ + 1) + k]; }
    Eigen::Map<Vector> Z(std::size_t i, int k) { return {Z_.data() + (i * steps_ + k) * d_, d_}; }
    Eigen::Map<const Vector> Z(std::size_t i, int k) const { return {Z_.data() + (i * steps_ + k) * d_, d_}; }

    /// Sample mean of Y at the first node.
    double y0() const;

    /// Standard error of the mean of Y one node after the start; a proxy for
    /// the Monte Carlo error of y0().
    double y0_std_error() const;

    /// True if any time step's regression fell back to the sample mean.
    bool regression_fallback() const { return fallback_; }
    void set_regression_fallback() { fallback_ = true; }

    const std::vector<double>& raw_Y() const { return Y_; }

private:
    std::size_t paths_;
    int steps_, d_;
    Scheme scheme_;
    double penalty_;
    bool fallback_ = false;
    std::vector<double> Y_, K_, h_, Z_;
};

/// Tolerance for the terminal-above-obstacle precondition.
inline constexpr double kBarrierTolerance = 1e-10;

/// Reflected BSDE by backward induction with projection onto the obstacle:
///   yhat_k = E[Y_{k+1} | X_k] + f(t_k, X_k, y_pred, Z_k, u_k, v_k) dt,
///   Y_k = max(yhat_k, h(t_k, X_k)),  dK_k = Y_k - yhat_k,
/// with Z_k = E[Y_{k+1} dB_k | X_k] / dt and one predictor-corrector sweep on y.
/// Z is reported as zero wherever the diffusion matrix vanishes.
BackwardSolution solve_reflected(const GameInstance& instance, const PathBundle& bundle,
                                 std::span<const double> terminal, RegressionBasis basis,
                                 Exec exec = Exec::parallel);

/// Penalized BSDE with driver f + m (y - h)^-; the penalty is solved
/// semi-implicitly per node (see penalized_update). m = 0 gives the
/// unconstrained BSDE.
BackwardSolution solve_penalized(const GameInstance& instance, const PathBundle& bundle,
                                 std::span<const double> terminal, RegressionBasis basis, double m,
                                 Exec exec = Exec::parallel);

/// Exact solution y of y = yhat + m dt (y - h)^-.
inline double penalized_update(double yhat, double obstacle, double m_dt) {
    return yhat >= obstacle ? yhat : (yhat + m_dt * obstacle) / (1.0 + m_dt);
}

/// Backward semigroup: Y at the first node of a reflected solve on the
/// bundle's interval with terminal data `eta`. An empty interval returns the
/// mean of eta.
double backward_semigroup(const GameInstance& instance, const PathBundle& bundle, std::span<const double> eta,
                          RegressionBasis basis, Exec exec = Exec::parallel);

struct CostEstimate {
    double value = 0;
    double std_error = 0;
};

/// J(t, x0; u, v): simulate on `mesh` (which must end at the horizon) and solve
/// the reflected BSDE with terminal payoff at X_T.
CostEstimate cost_functional(const GameInstance& instance, const Vector& x0, const ControlPath& u,
                             const ControlPath& v, const TimeMesh& mesh, std::size_t paths,
                             RegressionBasis basis, std::uint64_t seed, Exec exec = Exec::parallel);

/// Brute-force optimal stopping along one deterministic path with zero
/// running cost: the best of stopping at any node before the last or holding
/// to maturity.
double snell_oracle(std::span<const double> obstacle_values, double terminal);

/// Per-path sum of (Y_k - h_k)(K_{k+1} - K_k).
std::vector<double> skorokhod_sums(const BackwardSolution& solution);

}  // namespace rbsde
