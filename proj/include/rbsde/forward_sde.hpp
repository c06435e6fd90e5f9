#pragma once

#include "rbsde/common.hpp"
#include "rbsde/problem_model.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <variant>
#include <vector>

namespace rbsde {

/// Uniform mesh t0 < t1 with `steps` intervals. The degenerate mesh
/// t0 == t1 with zero steps is allowed and represents an empty interval.
class TimeMesh {
public:
    TimeMesh(double t0, double t1, int steps);

    double t0() const { return t0_; }
    double t1() const { return t1_; }
    int steps() const { return steps_; }
    double dt() const { return dt_; }
    double time(int k) const { return k == steps_ ? t1_ : t0_ + k * dt_; }

private:
    double t0_, t1_;
    int steps_;
    double dt_;
};

/// Feedback control: maps (t, x) to an index into a ControlGrid.
using FeedbackFn = std::function<std::size_t(double t, const Vector& x)>;

/// Admissible control restricted to computable forms: a constant index, a
/// per-step schedule of indices, or a Markov feedback rule.
class ControlPath {
public:
    static ControlPath constant(std::size_t index);
    static ControlPath piecewise(std::vector<std::size_t> per_step);
    static ControlPath feedback(FeedbackFn rule);

    /// Index applied on step k at state x. Throws PreconditionError if the
    /// result is out of range for `grid_size`.
    std::size_t at(int k, double t, const Vector& x, std::size_t grid_size) const;

    /// Checks static compatibility with a grid and a mesh.
    void check(std::size_t grid_size, int steps) const;

private:
    std::variant<std::size_t, std::vector<std::size_t>, FeedbackFn> rule_;
};

/// Simulated trajectories. Storage is row-major per path:
///   state(i, k) has n entries, increment(i, k) has d entries.
class PathBundle {
public:
    PathBundle(TimeMesh mesh, std::size_t paths, int n, int d, std::uint64_t seed);

    const TimeMesh& mesh() const { return mesh_; }
    std::size_t paths() const { return paths_; }
    int steps() const { return mesh_.steps(); }
    int n() const { return n_; }
    int d() const { return d_; }
    std::uint64_t seed() const { return seed_; }

    Eigen::Map<const Vector> state(std::size_t i, int k) const {
        return {states_.data() + offset_state(i, k), n_};
    }
    Eigen::Map<Vector> state(std::size_t i, int k) { return {states_.data() + offset_state(i, k), n_}; }
    Eigen::Map<const Vector> increment(std::size_t i, int k) const {
        return {dB_.data() + offset_inc(i, k), d_};
    }
    Eigen::Map<Vector> increment(std::size_t i, int k) { return {dB_.data() + offset_inc(i, k), d_}; }
    std::size_t u_index(std::size_t i, int k) const { return u_[i * steps() + k]; }
    std::size_t v_index(std::size_t i, int k) const { return v_[i * steps() + k]; }
    void set_controls(std::size_t i, int k, std::size_t u, std::size_t v) {
        u_[i * steps() + k] = u;
        v_[i * steps() + k] = v;
    }

    const std::vector<double>& raw_states() const { return states_; }
    const std::vector<double>& raw_increments() const { return dB_; }

private:
    std::size_t offset_state(std::size_t i, int k) const {
        return (i * static_cast<std::size_t>(steps() + 1) + k) * n_;
    }
    std::size_t offset_inc(std::size_t i, int k) const { return (i * static_cast<std::size_t>(steps()) + k) * d_; }

    TimeMesh mesh_;
    std::size_t paths_;
    int n_, d_;
    std::uint64_t seed_;
    std::vector<double> states_;
    std::vector<double> dB_;
    std::vector<std::size_t> u_, v_;
};

/// |X| beyond this aborts the simulation with a DivergenceError.
inline constexpr double kDivergenceBound = 1e9;

/// Independent normal stream for one path, keyed by (seed, path). Parallel
/// and serial simulation draw identical increments.
std::mt19937_64 path_engine(std::uint64_t seed, std::size_t path);

/// Euler-Maruyama for the controlled SDE
///   X_{k+1} = X_k + b(t_k, X_k, u_k, v_k) dt + sigma(t_k, X_k, u_k, v_k) dB_k.
/// Increments depend only on (seed, path, step), so bundles with a shared
/// seed are driven by common random numbers whatever x0 and the controls are.
PathBundle simulate_paths(const GameInstance& instance, const Vector& x0, const TimeMesh& mesh,
                          const ControlPath& u, const ControlPath& v, std::size_t paths, std::uint64_t seed,
                          Exec exec = Exec::parallel);

struct MomentEstimate {
    double sup_moment = 0;        // E[sup_k |X_k|^p]
    double increment_moment = 0;  // E[sup_k |X_k - x0|^p]
};

/// Monte Carlo moments of a bundle; p must be 2 or 4.
MomentEstimate empirical_moments(const PathBundle& bundle, int p);

}  // namespace rbsde
