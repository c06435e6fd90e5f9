#pragma once

#include "rbsde/common.hpp"
#include "rbsde/problem_model.hpp"

#include <span>
#include <utility>
#include <vector>

namespace rbsde {

/// Lower game: sup over u of inf over v. Upper game: inf over v of sup over u.
enum class Side { lower, upper };

enum class BoundaryPolicy { dirichlet_terminal_extension, linear_extrapolation };

/// Truncated box times a uniform time mesh on [0, T]. Nodes are stored with
/// the first coordinate varying fastest.
class SpaceTimeGrid {
public:
    SpaceTimeGrid(std::vector<std::pair<double, double>> box, std::vector<int> nx, int nt, double T,
                  BoundaryPolicy boundary = BoundaryPolicy::linear_extrapolation);

    int dims() const { return static_cast<int>(box_.size()); }
    double lo(int j) const { return box_[j].first; }
    double hi(int j) const { return box_[j].second; }
    int nx(int j) const { return nx_[j]; }
    double dx(int j) const { return dx_[j]; }
    double min_dx() const;
    int nt() const { return nt_; }
    double T() const { return T_; }
    double dt() const { return T_ / nt_; }
    double time(int k) const { return k == nt_ ? T_ : k * dt(); }
    BoundaryPolicy boundary() const { return boundary_; }
    const std::vector<std::pair<double, double>>& box() const { return box_; }
    const std::vector<int>& points() const { return nx_; }

    std::size_t node_count() const { return nodes_; }
    std::size_t stride(int j) const { return stride_[j]; }
    int index(std::size_t flat, int j) const { return static_cast<int>((flat / stride_[j]) % nx_[j]); }
    double coordinate(std::size_t flat, int j) const { return lo(j) + index(flat, j) * dx_[j]; }
    Vector point(std::size_t flat) const;
    bool is_boundary(std::size_t flat) const;

    /// True if the node lies in the centred sub-box covering `fraction` of
    /// every side (0.6 = inner 60%).
    bool in_sub_box(std::size_t flat, double fraction) const;

    /// Same grid with a different number of time steps.
    SpaceTimeGrid with_steps(int nt) const;

    bool same_layout(const SpaceTimeGrid& other) const;

private:
    std::vector<std::pair<double, double>> box_;
    std::vector<int> nx_;
    std::vector<double> dx_;
    std::vector<std::size_t> stride_;
    std::size_t nodes_;
    int nt_;
    double T_;
    BoundaryPolicy boundary_;
};

/// Interior sub-box used for every sup-norm comparison.
inline constexpr double kInteriorFraction = 0.6;

/// Explicit-scheme stability bound dt <= dx^2 / (n * a_max + 1), where a_max is
/// the largest diagonal entry of sigma sigma^T over grid nodes and controls,
/// raised by |b_i| dx_i at nodes where the drift is upwinded.
struct CflReport {
    double max_diffusion = 0;
    double required_dt = 0;
    int min_steps = 0;
    bool satisfied = false;
};

CflReport check_cfl(const GameInstance& instance, const SpaceTimeGrid& grid);

/// Smallest admissible nt for a box and resolution.
int min_cfl_steps(const GameInstance& instance, const std::vector<std::pair<double, double>>& box,
                  const std::vector<int>& nx);

struct HamiltonianValue {
    double value = 0;
    std::size_t argmax_u = 0;
    std::size_t arginf_v = 0;
};

/// Scans a payoff table payoff(iu, iv) for the lower (max-min) or upper
/// (min-max) value. Ties go to the lowest index; the reported indices are the
/// outer optimizer and the inner optimizer attained against it.
HamiltonianValue minimax(Side side, const Matrix& payoff);

/// H(t, x, y, q, X) = opt { 1/2 tr(sigma sigma^T X) + q.b + f(t, x, y, sigma^T q, u, v) }.
HamiltonianValue eval_hamiltonian(Side side, const GameInstance& instance, double t, const Vector& x, double y,
                                  const Vector& q, const Matrix& hessian);

enum class FieldKind { lower, upper, penalized };

/// Value samples on every time slice of a grid.
class ValueField {
public:
    ValueField(SpaceTimeGrid grid, FieldKind kind, double penalty = 0.0);

    const SpaceTimeGrid& grid() const { return grid_; }
    FieldKind kind() const { return kind_; }
    double penalty() const { return penalty_; }
    Side side() const { return kind_ == FieldKind::upper ? Side::upper : Side::lower; }

    std::span<double> slice(int k) { return slices_[k]; }
    std::span<const double> slice(int k) const { return slices_[k]; }
    double at(int k, std::size_t flat) const { return slices_[k][flat]; }

    /// Multilinear interpolation in space on slice k; x is clamped to the box.
    double sample(int k, const Vector& x) const;

    /// Node of slice k nearest to x.
    std::size_t nearest_node(const Vector& x) const;

private:
    SpaceTimeGrid grid_;
    FieldKind kind_;
    double penalty_;
    std::vector<std::vector<double>> slices_;
};

/// How a step treats the obstacle after the explicit Hamiltonian update.
struct ObstacleMode {
    enum class Kind { project, penalize } kind = Kind::project;
    double m = 0;

    static ObstacleMode projection() { return {Kind::project, 0.0}; }
    static ObstacleMode penalty(double m) { return {Kind::penalize, m}; }
};

/// One backward step from slice k+1 (`next`) to slice k (`out`):
///   w_hat = next + dt * H(t_k, x, next, Dnext, D^2 next), then the obstacle
/// mode is applied; boundary nodes follow the grid's policy.
/// The serial and OpenMP versions are bit-identical.
void step_slice(Side side, ObstacleMode mode, const GameInstance& instance, const SpaceTimeGrid& grid, int k,
                std::span<const double> next, std::span<double> out, Exec exec = Exec::parallel);

/// Applies step_slice from index `k_end` down to `k_start`, starting from
/// `terminal_slice` at k_end. Returns the slice at k_start.
std::vector<double> propagate_backward(Side side, ObstacleMode mode, const GameInstance& instance,
                                       const SpaceTimeGrid& grid, std::span<const double> terminal_slice,
                                       int k_end, int k_start, Exec exec = Exec::parallel);

/// Obstacle Isaacs equation min{w - h, -w_t - H(...)} = 0 with w(T) = terminal.
/// Throws CflError if the grid violates the stability bound.
ValueField solve_obstacle_pde(Side side, const GameInstance& instance, const SpaceTimeGrid& grid,
                              Exec exec = Exec::parallel);

/// Penalized equation with driver f + m (y - h)^- and no projection.
ValueField solve_penalized_pde(const GameInstance& instance, const SpaceTimeGrid& grid, double m,
                               Side side = Side::lower, Exec exec = Exec::parallel);

/// Payoff table of the discrete generator at one node of `slice` (rows are u
/// indices, columns v indices). Boundary nodes use the nearest interior node.
Matrix node_payoff(const GameInstance& instance, const SpaceTimeGrid& grid, double t, std::span<const double> slice,
                   std::size_t flat);

/// Samples the terminal payoff on the grid nodes.
std::vector<double> terminal_slice(const GameInstance& instance, const SpaceTimeGrid& grid);

struct ResidualReport {
    double sup_residual = 0;
    std::vector<double> per_slice;  // k = 0 .. nt-1
};

/// Discrete min-equation residual
///   r = min(w_k - h_k, (w_k - w_{k+1}) / dt - H(t_k, x, w_k, Dw_k, D^2 w_k))
/// on non-boundary nodes inside the sub-box `fraction`, for slices with
/// t_k <= t_max.
ResidualReport complementarity_residual(const ValueField& field, const GameInstance& instance,
                                        double fraction = 1.0, double t_max = -1.0);

/// Largest |w(k, x) - w(k, x')| / dx over adjacent node pairs inside the sub-box.
double discrete_lipschitz(const ValueField& field, int k, double fraction = kInteriorFraction);

}  // namespace rbsde
