#include "rbsde/game_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

namespace rbsde {

ValueField lower_value(const GameInstance& instance, const SpaceTimeGrid& grid, Exec exec) {
    return solve_obstacle_pde(Side::lower, instance, grid, exec);
}

ValueField upper_value(const GameInstance& instance, const SpaceTimeGrid& grid, Exec exec) {
    return solve_obstacle_pde(Side::upper, instance, grid, exec);
}

double isaacs_gap(const GameInstance& instance, const std::vector<HamiltonianSample>& samples) {
    double gap = 0;
    for (const auto& s : samples) {
        const double lo = eval_hamiltonian(Side::lower, instance, s.t, s.x, s.y, s.q, s.hessian).value;
        const double hi = eval_hamiltonian(Side::upper, instance, s.t, s.x, s.y, s.q, s.hessian).value;
        gap = std::max(gap, hi - lo);
    }
    return gap;
}

std::vector<HamiltonianSample> field_samples(const ValueField& field, int k, double fraction) {
    const auto& grid = field.grid();
    const auto w = field.slice(k);
    const int n = grid.dims();
    std::vector<HamiltonianSample> out;
    for (std::size_t flat = 0; flat < grid.node_count(); ++flat) {
        if (grid.is_boundary(flat) || !grid.in_sub_box(flat, fraction)) continue;
        HamiltonianSample s;
        s.t = grid.time(k);
        s.x = grid.point(flat);
        s.y = w[flat];
        s.q.resize(n);
        s.hessian = Matrix::Zero(n, n);
        for (int j = 0; j < n; ++j) {
            const std::size_t st = grid.stride(j);
            const double h = grid.dx(j);
            s.q[j] = (w[flat + st] - w[flat - st]) / (2 * h);
            s.hessian(j, j) = (w[flat + st] - 2 * w[flat] + w[flat - st]) / (h * h);
        }
        if (n == 2) {
            const std::size_t sx = grid.stride(0), sy = grid.stride(1);
            const double c = (w[flat + sx + sy] - w[flat + sx - sy] - w[flat - sx + sy] + w[flat - sx - sy]) /
                             (4 * grid.dx(0) * grid.dx(1));
            s.hessian(0, 1) = s.hessian(1, 0) = c;
        }
        out.push_back(std::move(s));
    }
    return out;
}

DppReport dpp_residual(const ValueField& field, const GameInstance& instance, int t_index, int delta_steps,
                       double fraction) {
    const auto& grid = field.grid();
    if (t_index < 0 || delta_steps < 0 || t_index + delta_steps > grid.nt()) {
        throw PreconditionError("dpp_residual needs 0 <= t_index and t_index + delta_steps <= nt");
    }
    const ObstacleMode mode =
        field.kind() == FieldKind::penalized ? ObstacleMode::penalty(field.penalty()) : ObstacleMode::projection();
    const auto resolved = propagate_backward(field.side(), mode, instance, grid, field.slice(t_index + delta_steps),
                                             t_index + delta_steps, t_index);
    DppReport report;
    report.t = grid.time(t_index);
    report.delta = grid.time(t_index + delta_steps) - report.t;
    const auto original = field.slice(t_index);
    for (std::size_t flat = 0; flat < grid.node_count(); ++flat) {
        if (!grid.in_sub_box(flat, fraction)) continue;
        report.sample_points.push_back(grid.point(flat));
        const double r = std::abs(original[flat] - resolved[flat]);
        report.residuals.push_back(r);
        report.max_residual = std::max(report.max_residual, r);
    }
    return report;
}

namespace {

int slice_for_time(const SpaceTimeGrid& grid, double t) {
    const int k = static_cast<int>(std::floor(t / grid.dt() + 1e-9));
    return std::clamp(k, 0, grid.nt() - 1);
}

struct FeedbackState {
    ValueField field;
    GameInstance instance;

    HamiltonianValue optimum(double t, const Vector& x) const {
        const int k = slice_for_time(field.grid(), t);
        const Matrix payoff =
            node_payoff(instance, field.grid(), field.grid().time(k), field.slice(k + 1), field.nearest_node(x));
        return minimax(field.side(), payoff);
    }
};

}  // namespace

FeedbackPair optimal_feedback(const ValueField& field, const GameInstance& instance) {
    auto state = std::make_shared<const FeedbackState>(FeedbackState{field, instance});
    return {ControlPath::feedback([state](double t, const Vector& x) { return state->optimum(t, x).argmax_u; }),
            ControlPath::feedback([state](double t, const Vector& x) { return state->optimum(t, x).arginf_v; })};
}

ControlPath best_response_v(const ValueField& field, const GameInstance& instance, FeedbackFn u_rule) {
    auto state = std::make_shared<const FeedbackState>(FeedbackState{field, instance});
    return ControlPath::feedback([state, u_rule = std::move(u_rule)](double t, const Vector& x) {
        const auto& grid = state->field.grid();
        const int k = slice_for_time(grid, t);
        const Matrix payoff = node_payoff(state->instance, grid, grid.time(k), state->field.slice(k + 1),
                                          state->field.nearest_node(x));
        const auto iu = static_cast<Eigen::Index>(u_rule(t, x));
        Eigen::Index best = 0;
        for (Eigen::Index iv = 1; iv < payoff.cols(); ++iv) {
            if (payoff(iu, iv) < payoff(iu, best)) best = iv;
        }
        return static_cast<std::size_t>(best);
    });
}

DppMonteCarloReport dpp_monte_carlo(const ValueField& field, const GameInstance& instance, const Vector& x0,
                                    int t_index, int delta_steps, const MonteCarloSettings& mc, Exec exec) {
    const auto& grid = field.grid();
    if (t_index < 0 || delta_steps < 1 || t_index + delta_steps > grid.nt()) {
        throw PreconditionError("dpp_monte_carlo needs a nonempty interval inside the grid");
    }
    const int k_end = t_index + delta_steps;
    const TimeMesh mesh(grid.time(t_index), grid.time(k_end), mc.steps);
    const FeedbackPair fb = optimal_feedback(field, instance);
    const PathBundle bundle = simulate_paths(instance, x0, mesh, fb.u, fb.v, mc.paths, mc.seed, exec);

    // Interpolation may dip below a non-convex obstacle between nodes.
    std::vector<double> eta(mc.paths);
    for (std::size_t i = 0; i < mc.paths; ++i) {
        const Vector x = bundle.state(i, mesh.steps());
        eta[i] = std::max(field.sample(k_end, x), instance.obstacle(mesh.t1(), x));
    }
    const BackwardSolution sol = solve_reflected(instance, bundle, eta, mc.basis, exec);

    DppMonteCarloReport r;
    r.grid_value = field.sample(t_index, x0);
    r.mc_value = sol.y0();
    r.std_error = sol.y0_std_error();
    r.tolerance = 3 * r.std_error + 5 * grid.min_dx();
    r.within = std::abs(r.mc_value - r.grid_value) <= r.tolerance;
    return r;
}

ConvergenceTable penalization_convergence(const GameInstance& instance, const SpaceTimeGrid& grid,
                                          const std::vector<double>& m_schedule, Exec exec) {
    if (m_schedule.empty()) throw PreconditionError("penalization schedule is empty");
    for (std::size_t i = 0; i < m_schedule.size(); ++i) {
        if (!(m_schedule[i] > 0)) throw PreconditionError("penalization schedule must be positive");
        if (i > 0 && !(m_schedule[i] > m_schedule[i - 1])) {
            throw PreconditionError("penalization schedule must be strictly increasing");
        }
    }
    const ValueField reference = lower_value(instance, grid, exec);
    ConvergenceTable table;
    table.m_schedule = m_schedule;
    std::unique_ptr<ValueField> previous;
    for (double m : m_schedule) {
        auto current = std::make_unique<ValueField>(solve_penalized_pde(instance, grid, m, Side::lower, exec));
        double gap = 0;
        for (int k = 0; k <= grid.nt(); ++k) {
            const auto w = current->slice(k);
            const auto ref = reference.slice(k);
            for (std::size_t flat = 0; flat < grid.node_count(); ++flat) {
                // Boundary nodes are set by extrapolation, which is not a monotone
                // operation; the order statements concern the scheme's own nodes.
                if (grid.is_boundary(flat)) continue;
                table.max_order_violation = std::max(table.max_order_violation, w[flat] - ref[flat]);
                if (previous) {
                    table.max_monotone_violation =
                        std::max(table.max_monotone_violation, previous->at(k, flat) - w[flat]);
                }
                if (grid.in_sub_box(flat, kInteriorFraction)) gap = std::max(gap, std::abs(w[flat] - ref[flat]));
            }
        }
        table.sup_gaps.push_back(gap);
        previous = std::move(current);
    }
    table.monotone_ok = table.max_monotone_violation <= kOrderTolerance;
    table.gaps_nonincreasing = true;
    for (std::size_t i = 1; i < table.sup_gaps.size(); ++i) {
        if (table.sup_gaps[i] > table.sup_gaps[i - 1]) table.gaps_nonincreasing = false;
    }
    return table;
}

ComparisonReport value_comparison(const ValueField& lower, const ValueField& upper) {
    const auto& grid = lower.grid();
    if (!grid.same_layout(upper.grid())) throw PreconditionError("value_comparison needs identical grids");
    ComparisonReport r;
    for (int k = 0; k <= grid.nt(); ++k) {
        const auto w = lower.slice(k);
        const auto u = upper.slice(k);
        for (std::size_t flat = 0; flat < grid.node_count(); ++flat) {
            const double diff = u[flat] - w[flat];
            r.max_violation = std::max(r.max_violation, -diff);
            r.max_gap = std::max(r.max_gap, diff);
            if (grid.in_sub_box(flat, kInteriorFraction)) {
                r.interior_sup_diff = std::max(r.interior_sup_diff, std::abs(diff));
            }
        }
    }
    return r;
}

TimeContinuityFit time_continuity_profile(const ValueField& field, const std::vector<Vector>& x_samples,
                                          const std::vector<double>& delta_schedule, double t_lo, double t_hi) {
    if (delta_schedule.size() < 3) throw PreconditionError("time continuity fit needs at least 3 deltas");
    if (x_samples.empty()) throw PreconditionError("time continuity fit needs x samples");
    const auto& grid = field.grid();
    TimeContinuityFit fit;
    for (double delta : delta_schedule) {
        const int s = static_cast<int>(std::lround(delta / grid.dt()));
        if (s < 1) throw PreconditionError("delta below the grid time step");
        double modulus = 0;
        for (int k = 0; k + s <= grid.nt(); ++k) {
            const double t = grid.time(k);
            if (t < t_lo - 1e-12 || t > t_hi + 1e-12) continue;
            for (const auto& x : x_samples) {
                const double diff = std::abs(field.sample(k, x) - field.sample(k + s, x));
                modulus = std::max(modulus, diff / (1.0 + x.norm()));
            }
        }
        if (!(modulus > 0)) throw PreconditionError("time modulus vanished; no rate to fit");
        fit.deltas.push_back(s * grid.dt());
        fit.moduli.push_back(modulus);
    }
    // least squares on (log delta, log modulus)
    const std::size_t n = fit.deltas.size();
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += std::log(fit.deltas[i]);
        my += std::log(fit.moduli[i]);
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = std::log(fit.deltas[i]) - mx;
        sxy += dx * (std::log(fit.moduli[i]) - my);
        sxx += dx * dx;
    }
    if (!(sxx > 0)) throw PreconditionError("time continuity fit needs distinct deltas");
    fit.exponent = sxy / sxx;
    fit.constant = std::exp(my - fit.exponent * mx);
    return fit;
}

}  // namespace rbsde
