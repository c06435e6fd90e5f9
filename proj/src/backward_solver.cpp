#include "rbsde/backward_solver.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace rbsde {

BackwardSolution::BackwardSolution(std::size_t paths, int steps, int d, Scheme scheme, double penalty)
    : paths_(paths),
      steps_(steps),
      d_(d),
      scheme_(scheme),
      penalty_(penalty),
      Y_(paths * (steps + 1), 0.0),
      K_(paths * (steps + 1), 0.0),
      h_(paths * (steps + 1), 0.0),
      Z_(paths * steps * d, 0.0) {}

double BackwardSolution::y0() const {
    double s = 0;
    for (std::size_t i = 0; i < paths_; ++i) s += Y(i, 0);
    return s / paths_;
}

double BackwardSolution::y0_std_error() const {
    if (paths_ < 2 || steps_ < 1) return 0.0;
    double mean = 0;
    for (std::size_t i = 0; i < paths_; ++i) mean += Y(i, 1);
    mean /= paths_;
    double ss = 0;
    for (std::size_t i = 0; i < paths_; ++i) ss += (Y(i, 1) - mean) * (Y(i, 1) - mean);
    return std::sqrt(ss / (paths_ - 1) / paths_);
}

namespace {

BackwardSolution solve_backward(const GameInstance& g, const PathBundle& bundle, std::span<const double> terminal,
                                RegressionBasis basis, Scheme scheme, double m, Exec exec) {
    const std::size_t M = bundle.paths();
    const int N = bundle.steps();
    const int d = bundle.d();
    const auto& mesh = bundle.mesh();
    const double dt = mesh.dt();
    if (terminal.size() != M) throw PreconditionError("terminal data needs one value per path");
    if (scheme == Scheme::penalized && !(m >= 0)) throw PreconditionError("penalty m must be >= 0");

    BackwardSolution sol(M, N, d, scheme, scheme == Scheme::penalized ? m : 0.0);
    const auto paths = static_cast<std::ptrdiff_t>(M);
    const bool par = exec == Exec::parallel;

#pragma omp parallel for schedule(static) if (par)
    for (std::ptrdiff_t i = 0; i < paths; ++i) {
        for (int k = 0; k <= N; ++k) {
            sol.obstacle(i, k) = g.obstacle(mesh.time(k), bundle.state(i, k));
        }
    }

    for (std::size_t i = 0; i < M; ++i) {
        const double h = sol.obstacle(i, N);
        if (terminal[i] < h - kBarrierTolerance * (1.0 + std::abs(h))) {
            throw PreconditionError("terminal value " + std::to_string(terminal[i]) + " below obstacle " +
                                    std::to_string(h) + " on path " + std::to_string(i));
        }
        sol.Y(i, N) = terminal[i];
    }

    std::vector<double> push(M * static_cast<std::size_t>(std::max(N, 0)), 0.0);
    Matrix states(static_cast<Eigen::Index>(M), g.n);
    Vector target(static_cast<Eigen::Index>(M));
    Matrix z_est(static_cast<Eigen::Index>(M), d);

    for (int k = N - 1; k >= 0; --k) {
        const double t = mesh.time(k);
        for (std::size_t i = 0; i < M; ++i) states.row(i) = bundle.state(i, k).transpose();
        CrossSectionRegression reg(states, basis);
        if (reg.fallback()) sol.set_regression_fallback();

        for (std::size_t i = 0; i < M; ++i) target[i] = sol.Y(i, k + 1);
        const Vector cond = reg.fit(target);
        // E[(Y_{k+1} - E[Y_{k+1} | X_k]) dB_k | X_k] equals E[Y_{k+1} dB_k | X_k]; the centred form has far
        // smaller variance and vanishes when Y_{k+1} is deterministic.
        for (int j = 0; j < d; ++j) {
            for (std::size_t i = 0; i < M; ++i) {
                target[i] = (sol.Y(i, k + 1) - cond[i]) * bundle.increment(i, k)[j];
            }
            z_est.col(j) = reg.fit(target) / dt;
        }

#pragma omp parallel for schedule(static) if (par)
        for (std::ptrdiff_t i = 0; i < paths; ++i) {
            const Vector x = bundle.state(i, k);
            const Vector& u = g.u_grid[bundle.u_index(i, k)];
            const Vector& v = g.v_grid[bundle.v_index(i, k)];
            Vector z = z_est.row(i).transpose();
            if (g.coeffs.diffusion(t, x, u, v).isZero(0.0)) z.setZero();

            const double c = cond[i];
            const double y_pred = c + dt * g.coeffs.driver(t, x, c, z, u, v);
            const double yhat = c + dt * g.coeffs.driver(t, x, y_pred, z, u, v);
            const double h = sol.obstacle(i, k);
            double y;
            double dk;
            if (scheme == Scheme::reflected) {
                y = std::max(yhat, h);
                dk = y - yhat;
            } else {
                const double m_dt = m * dt;
                y = penalized_update(yhat, h, m_dt);
                dk = y < h ? m_dt * (h - y) : 0.0;
            }
            sol.Y(i, k) = y;
            sol.Z(i, k) = z;
            push[i * N + k] = dk;
        }
    }

    for (std::size_t i = 0; i < M; ++i) {
        sol.K(i, 0) = 0.0;
        for (int k = 0; k < N; ++k) sol.K(i, k + 1) = sol.K(i, k) + push[i * N + k];
    }
    return sol;
}

}  // namespace

BackwardSolution solve_reflected(const GameInstance& instance, const PathBundle& bundle,
                                 std::span<const double> terminal, RegressionBasis basis, Exec exec) {
    return solve_backward(instance, bundle, terminal, basis, Scheme::reflected, 0.0, exec);
}

BackwardSolution solve_penalized(const GameInstance& instance, const PathBundle& bundle,
                                 std::span<const double> terminal, RegressionBasis basis, double m, Exec exec) {
    return solve_backward(instance, bundle, terminal, basis, Scheme::penalized, m, exec);
}

double backward_semigroup(const GameInstance& instance, const PathBundle& bundle, std::span<const double> eta,
                          RegressionBasis basis, Exec exec) {
    if (eta.size() != bundle.paths()) throw PreconditionError("eta needs one value per path");
    if (bundle.steps() == 0) {
        const auto& mesh = bundle.mesh();
        double s = 0;
        bool constant = true;
        for (std::size_t i = 0; i < eta.size(); ++i) {
            const double h = instance.obstacle(mesh.t1(), bundle.state(i, 0));
            if (eta[i] < h - kBarrierTolerance * (1.0 + std::abs(h))) {
                throw PreconditionError("eta below obstacle on path " + std::to_string(i));
            }
            s += eta[i];
            constant = constant && eta[i] == eta[0];
        }
        return constant ? eta[0] : s / eta.size();
    }
    return solve_reflected(instance, bundle, eta, basis, exec).y0();
}

CostEstimate cost_functional(const GameInstance& instance, const Vector& x0, const ControlPath& u,
                             const ControlPath& v, const TimeMesh& mesh, std::size_t paths,
                             RegressionBasis basis, std::uint64_t seed, Exec exec) {
    if (std::abs(mesh.t1() - instance.T) > 1e-12 * (1.0 + instance.T)) {
        throw PreconditionError("cost_functional mesh must end at the horizon");
    }
    const PathBundle bundle = simulate_paths(instance, x0, mesh, u, v, paths, seed, exec);
    std::vector<double> terminal(paths);
    for (std::size_t i = 0; i < paths; ++i) terminal[i] = instance.terminal(bundle.state(i, mesh.steps()));
    const BackwardSolution sol = solve_reflected(instance, bundle, terminal, basis, exec);
    return {sol.y0(), sol.y0_std_error()};
}

double snell_oracle(std::span<const double> obstacle_values, double terminal) {
    double best = terminal;
    for (std::size_t k = 0; k + 1 < obstacle_values.size(); ++k) best = std::max(best, obstacle_values[k]);
    return best;
}

std::vector<double> skorokhod_sums(const BackwardSolution& solution) {
    std::vector<double> sums(solution.paths(), 0.0);
    for (std::size_t i = 0; i < solution.paths(); ++i) {
        double s = 0;
        for (int k = 0; k < solution.steps(); ++k) {
            s += (solution.Y(i, k) - solution.obstacle(i, k)) * (solution.K(i, k + 1) - solution.K(i, k));
        }
        sums[i] = s;
    }
    return sums;
}

}  // namespace rbsde
