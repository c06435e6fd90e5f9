#include "rbsde/isaacs_pde.hpp"

#include "rbsde/backward_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace rbsde {

// ---------------------------------------------------------------------------
// Grid

SpaceTimeGrid::SpaceTimeGrid(std::vector<std::pair<double, double>> box, std::vector<int> nx, int nt, double T,
                             BoundaryPolicy boundary)
    : box_(std::move(box)), nx_(std::move(nx)), nodes_(1), nt_(nt), T_(T), boundary_(boundary) {
    if (box_.empty() || box_.size() != nx_.size()) {
        throw ConfigError("grid box and point counts must have the same nonzero dimension");
    }
    if (box_.size() > 2) throw ConfigError("grid solves support at most two space dimensions");
    if (nt < 1) throw ConfigError("grid needs nt >= 1");
    if (!(T > 0)) throw ConfigError("grid horizon must be positive");
    for (std::size_t j = 0; j < box_.size(); ++j) {
        if (!(box_[j].first < box_[j].second)) throw ConfigError("grid box needs lo < hi in every dimension");
        if (nx_[j] < 3) throw ConfigError("grid needs nx >= 3 in every dimension");
        dx_.push_back((box_[j].second - box_[j].first) / (nx_[j] - 1));
        stride_.push_back(nodes_);
        nodes_ *= static_cast<std::size_t>(nx_[j]);
    }
}

double SpaceTimeGrid::min_dx() const { return *std::min_element(dx_.begin(), dx_.end()); }

Vector SpaceTimeGrid::point(std::size_t flat) const {
    Vector x(dims());
    for (int j = 0; j < dims(); ++j) x[j] = coordinate(flat, j);
    return x;
}

bool SpaceTimeGrid::is_boundary(std::size_t flat) const {
    for (int j = 0; j < dims(); ++j) {
        const int i = index(flat, j);
        if (i == 0 || i == nx_[j] - 1) return true;
    }
    return false;
}

bool SpaceTimeGrid::in_sub_box(std::size_t flat, double fraction) const {
    for (int j = 0; j < dims(); ++j) {
        const double margin = 0.5 * (1.0 - fraction) * (hi(j) - lo(j));
        const double x = coordinate(flat, j);
        const double eps = 1e-12 * (hi(j) - lo(j));
        if (x < lo(j) + margin - eps || x > hi(j) - margin + eps) return false;
    }
    return true;
}

SpaceTimeGrid SpaceTimeGrid::with_steps(int nt) const { return SpaceTimeGrid(box_, nx_, nt, T_, boundary_); }

bool SpaceTimeGrid::same_layout(const SpaceTimeGrid& other) const {
    return box_ == other.box_ && nx_ == other.nx_ && nt_ == other.nt_ && T_ == other.T_;
}

// ---------------------------------------------------------------------------
// CFL

namespace {

double effective_diffusion(const Matrix& a, const Vector& b, int i, double dx) {
    const double aii = a(i, i);
    return aii >= std::abs(b[i]) * dx ? aii : aii + std::abs(b[i]) * dx;
}

double max_effective_diffusion(const GameInstance& g, const std::vector<std::pair<double, double>>& box,
                               const std::vector<int>& nx) {
    const SpaceTimeGrid probe(box, nx, 1, g.T);
    double amax = 0;
    for (double frac : {0.0, 0.25, 0.5, 0.75, 1.0}) {
        const double t = frac * g.T;
        for (std::size_t flat = 0; flat < probe.node_count(); ++flat) {
            const Vector x = probe.point(flat);
            for (const auto& u : g.u_grid.points()) {
                for (const auto& v : g.v_grid.points()) {
                    const Matrix s = g.coeffs.diffusion(t, x, u, v);
                    const Matrix a = s * s.transpose();
                    const Vector b = g.coeffs.drift(t, x, u, v);
                    for (int i = 0; i < probe.dims(); ++i) {
                        amax = std::max(amax, effective_diffusion(a, b, i, probe.dx(i)));
                    }
                }
            }
        }
    }
    return amax;
}

int steps_for(double T, double required_dt) {
    int n = static_cast<int>(std::ceil(T / required_dt));
    while (T / n > required_dt) ++n;
    return std::max(n, 1);
}

}  // namespace

CflReport check_cfl(const GameInstance& instance, const SpaceTimeGrid& grid) {
    if (grid.dims() != instance.n) throw ConfigError("grid dimension differs from the state dimension");
    CflReport r;
    r.max_diffusion = max_effective_diffusion(instance, grid.box(), grid.points());
    const double dx = grid.min_dx();
    r.required_dt = dx * dx / (instance.n * r.max_diffusion + 1.0);
    r.min_steps = steps_for(grid.T(), r.required_dt);
    r.satisfied = grid.dt() <= r.required_dt;
    return r;
}

int min_cfl_steps(const GameInstance& instance, const std::vector<std::pair<double, double>>& box,
                  const std::vector<int>& nx) {
    const SpaceTimeGrid probe(box, nx, 1, instance.T);
    return check_cfl(instance, probe).min_steps;
}

// ---------------------------------------------------------------------------
// Hamiltonians

HamiltonianValue minimax(Side side, const Matrix& payoff) {
    HamiltonianValue best;
    const Eigen::Index nu = payoff.rows();
    const Eigen::Index nv = payoff.cols();
    if (side == Side::lower) {
        best.value = -std::numeric_limits<double>::infinity();
        for (Eigen::Index iu = 0; iu < nu; ++iu) {
            Eigen::Index jv = 0;
            for (Eigen::Index iv = 1; iv < nv; ++iv) {
                if (payoff(iu, iv) < payoff(iu, jv)) jv = iv;
            }
            if (payoff(iu, jv) > best.value) {
                best = {payoff(iu, jv), static_cast<std::size_t>(iu), static_cast<std::size_t>(jv)};
            }
        }
    } else {
        best.value = std::numeric_limits<double>::infinity();
        for (Eigen::Index iv = 0; iv < nv; ++iv) {
            Eigen::Index ju = 0;
            for (Eigen::Index iu = 1; iu < nu; ++iu) {
                if (payoff(iu, iv) > payoff(ju, iv)) ju = iu;
            }
            if (payoff(ju, iv) < best.value) {
                best = {payoff(ju, iv), static_cast<std::size_t>(ju), static_cast<std::size_t>(iv)};
            }
        }
    }
    return best;
}

HamiltonianValue eval_hamiltonian(Side side, const GameInstance& g, double t, const Vector& x, double y,
                                  const Vector& q, const Matrix& hessian) {
    Matrix payoff(g.u_grid.size(), g.v_grid.size());
    for (std::size_t iu = 0; iu < g.u_grid.size(); ++iu) {
        for (std::size_t iv = 0; iv < g.v_grid.size(); ++iv) {
            const Vector& u = g.u_grid[iu];
            const Vector& v = g.v_grid[iv];
            const Matrix s = g.coeffs.diffusion(t, x, u, v);
            const Vector b = g.coeffs.drift(t, x, u, v);
            const Vector z = s.transpose() * q;
            payoff(iu, iv) = 0.5 * (s * s.transpose() * hessian).trace() + q.dot(b) +
                             g.coeffs.driver(t, x, y, z, u, v);
        }
    }
    return minimax(side, payoff);
}

// ---------------------------------------------------------------------------
// Value fields

ValueField::ValueField(SpaceTimeGrid grid, FieldKind kind, double penalty)
    : grid_(std::move(grid)),
      kind_(kind),
      penalty_(penalty),
      slices_(grid_.nt() + 1, std::vector<double>(grid_.node_count(), 0.0)) {}

double ValueField::sample(int k, const Vector& x) const {
    const int n = grid_.dims();
    std::vector<int> base(n);
    std::vector<double> frac(n);
    for (int j = 0; j < n; ++j) {
        const double xc = std::clamp(x[j], grid_.lo(j), grid_.hi(j));
        const double s = (xc - grid_.lo(j)) / grid_.dx(j);
        int i = std::min(static_cast<int>(std::floor(s)), grid_.nx(j) - 2);
        base[j] = i;
        frac[j] = s - i;
    }
    double value = 0;
    for (int corner = 0; corner < (1 << n); ++corner) {
        double w = 1;
        std::size_t flat = 0;
        for (int j = 0; j < n; ++j) {
            const int bit = (corner >> j) & 1;
            w *= bit ? frac[j] : 1.0 - frac[j];
            flat += static_cast<std::size_t>(base[j] + bit) * grid_.stride(j);
        }
        if (w != 0) value += w * slices_[k][flat];
    }
    return value;
}

std::size_t ValueField::nearest_node(const Vector& x) const {
    std::size_t flat = 0;
    for (int j = 0; j < grid_.dims(); ++j) {
        const double s = (std::clamp(x[j], grid_.lo(j), grid_.hi(j)) - grid_.lo(j)) / grid_.dx(j);
        flat += static_cast<std::size_t>(std::lround(s)) * grid_.stride(j);
    }
    return flat;
}

// ---------------------------------------------------------------------------
// Stencil and step kernel

namespace {

/// Difference quotients of a slice at an interior node.
struct Stencil {
    double w = 0;
    Vector q_central, q_forward, q_backward;
    Vector second;            // diagonal second differences
    double cross_pos = 0;     // mixed derivative, splitting for a12 >= 0
    double cross_neg = 0;     // mixed derivative, splitting for a12 < 0
};

Stencil stencil_at(const SpaceTimeGrid& grid, std::span<const double> w, std::size_t flat) {
    const int n = grid.dims();
    Stencil s;
    s.w = w[flat];
    s.q_central.resize(n);
    s.q_forward.resize(n);
    s.q_backward.resize(n);
    s.second.resize(n);
    for (int j = 0; j < n; ++j) {
        const std::size_t st = grid.stride(j);
        const double h = grid.dx(j);
        const double wp = w[flat + st];
        const double wm = w[flat - st];
        s.q_central[j] = (wp - wm) / (2 * h);
        s.q_forward[j] = (wp - s.w) / h;
        s.q_backward[j] = (s.w - wm) / h;
        s.second[j] = (wp - 2 * s.w + wm) / (h * h);
    }
    if (n == 2) {
        const std::size_t sx = grid.stride(0), sy = grid.stride(1);
        const double denom = 2 * grid.dx(0) * grid.dx(1);
        const double axis = w[flat + sx] + w[flat - sx] + w[flat + sy] + w[flat - sy];
        s.cross_pos = (w[flat + sx + sy] + w[flat - sx - sy] - axis + 2 * s.w) / denom;
        s.cross_neg = -(w[flat + sx - sy] + w[flat - sx + sy] - axis + 2 * s.w) / denom;
    }
    return s;
}

/// Monotone discrete generator plus running cost for one control pair.
double discrete_generator(const GameInstance& g, const SpaceTimeGrid& grid, double t, const Vector& x,
                          const Stencil& s, const Vector& u, const Vector& v) {
    const Matrix sig = g.coeffs.diffusion(t, x, u, v);
    const Matrix a = sig * sig.transpose();
    const Vector b = g.coeffs.drift(t, x, u, v);
    double value = 0;
    for (int j = 0; j < grid.dims(); ++j) {
        value += 0.5 * a(j, j) * s.second[j];
        if (a(j, j) >= std::abs(b[j]) * grid.dx(j)) {
            value += b[j] * s.q_central[j];
        } else {
            value += b[j] * (b[j] > 0 ? s.q_forward[j] : s.q_backward[j]);
        }
    }
    if (grid.dims() == 2) {
        const double a12 = a(0, 1);
        value += a12 * (a12 >= 0 ? s.cross_pos : s.cross_neg);
    }
    const Vector z = sig.transpose() * s.q_central;
    return value + g.coeffs.driver(t, x, s.w, z, u, v);
}

HamiltonianValue discrete_hamiltonian(Side side, const GameInstance& g, const SpaceTimeGrid& grid, double t,
                                      const Vector& x, const Stencil& s) {
    Matrix payoff(g.u_grid.size(), g.v_grid.size());
    for (std::size_t iu = 0; iu < g.u_grid.size(); ++iu) {
        for (std::size_t iv = 0; iv < g.v_grid.size(); ++iv) {
            payoff(iu, iv) = discrete_generator(g, grid, t, x, s, g.u_grid[iu], g.v_grid[iv]);
        }
    }
    return minimax(side, payoff);
}

double apply_obstacle(ObstacleMode mode, double w_hat, double h, double dt) {
    return mode.kind == ObstacleMode::Kind::project ? std::max(w_hat, h) : penalized_update(w_hat, h, mode.m * dt);
}

void fill_boundary(ObstacleMode mode, const GameInstance& g, const SpaceTimeGrid& grid, int k,
                   std::span<double> out) {
    const double t = grid.time(k);
    const double dt = grid.dt();
    const std::size_t nodes = grid.node_count();
    if (grid.boundary() == BoundaryPolicy::dirichlet_terminal_extension) {
        for (std::size_t flat = 0; flat < nodes; ++flat) {
            if (!grid.is_boundary(flat)) continue;
            const Vector x = grid.point(flat);
            out[flat] = apply_obstacle(mode, g.terminal(x), g.obstacle(t, x), dt);
        }
        return;
    }
    // Linear extrapolation from the two nearest nodes, one dimension at a
    // time; later dimensions see the values already set for earlier ones.
    for (int j = 0; j < grid.dims(); ++j) {
        const std::size_t st = grid.stride(j);
        for (std::size_t flat = 0; flat < nodes; ++flat) {
            const int i = grid.index(flat, j);
            if (i != 0 && i != grid.nx(j) - 1) continue;
            bool interior_later = true;
            for (int jj = j + 1; jj < grid.dims(); ++jj) {
                const int ii = grid.index(flat, jj);
                if (ii == 0 || ii == grid.nx(jj) - 1) interior_later = false;
            }
            // nodes on the boundary of a later dimension are handled with it
            if (!interior_later) continue;
            const std::size_t near = i == 0 ? flat + st : flat - st;
            const std::size_t far = i == 0 ? flat + 2 * st : flat - 2 * st;
            // with three points the second neighbour is itself a boundary node
            const double extrap = grid.nx(j) >= 4 ? 2 * out[near] - out[far] : out[near];
            out[flat] = apply_obstacle(mode, extrap, g.obstacle(t, grid.point(flat)), dt);
        }
    }
}

void update_node(Side side, ObstacleMode mode, const GameInstance& g, const SpaceTimeGrid& grid, double t,
                 double dt, std::span<const double> next, std::span<double> out, std::size_t flat) {
    const Vector x = grid.point(flat);
    const Stencil s = stencil_at(grid, next, flat);
    const double w_hat = s.w + dt * discrete_hamiltonian(side, g, grid, t, x, s).value;
    out[flat] = apply_obstacle(mode, w_hat, g.obstacle(t, x), dt);
}

}  // namespace

void step_slice(Side side, ObstacleMode mode, const GameInstance& g, const SpaceTimeGrid& grid, int k,
                std::span<const double> next, std::span<double> out, Exec exec) {
    const double t = grid.time(k);
    const double dt = grid.dt();
    const auto nodes = static_cast<std::ptrdiff_t>(grid.node_count());
    if (exec == Exec::serial) {
        for (std::ptrdiff_t flat = 0; flat < nodes; ++flat) {
            if (!grid.is_boundary(flat)) update_node(side, mode, g, grid, t, dt, next, out, flat);
        }
    } else {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t flat = 0; flat < nodes; ++flat) {
            if (!grid.is_boundary(flat)) update_node(side, mode, g, grid, t, dt, next, out, flat);
        }
    }
    fill_boundary(mode, g, grid, k, out);
}

Matrix node_payoff(const GameInstance& g, const SpaceTimeGrid& grid, double t, std::span<const double> slice,
                   std::size_t flat) {
    std::size_t inner = 0;
    for (int j = 0; j < grid.dims(); ++j) {
        const int i = std::clamp(grid.index(flat, j), 1, grid.nx(j) - 2);
        inner += static_cast<std::size_t>(i) * grid.stride(j);
    }
    const Vector x = grid.point(inner);
    const Stencil s = stencil_at(grid, slice, inner);
    Matrix payoff(g.u_grid.size(), g.v_grid.size());
    for (std::size_t iu = 0; iu < g.u_grid.size(); ++iu) {
        for (std::size_t iv = 0; iv < g.v_grid.size(); ++iv) {
            payoff(iu, iv) = discrete_generator(g, grid, t, x, s, g.u_grid[iu], g.v_grid[iv]);
        }
    }
    return payoff;
}

std::vector<double> terminal_slice(const GameInstance& instance, const SpaceTimeGrid& grid) {
    std::vector<double> w(grid.node_count());
    for (std::size_t flat = 0; flat < w.size(); ++flat) w[flat] = instance.terminal(grid.point(flat));
    return w;
}

std::vector<double> propagate_backward(Side side, ObstacleMode mode, const GameInstance& instance,
                                       const SpaceTimeGrid& grid, std::span<const double> terminal, int k_end,
                                       int k_start, Exec exec) {
    if (k_start < 0 || k_end > grid.nt() || k_start > k_end) {
        throw PreconditionError("propagate_backward needs 0 <= k_start <= k_end <= nt");
    }
    if (terminal.size() != grid.node_count()) throw PreconditionError("slice size does not match the grid");
    std::vector<double> cur(terminal.begin(), terminal.end());
    std::vector<double> prev(cur.size());
    for (int k = k_end - 1; k >= k_start; --k) {
        step_slice(side, mode, instance, grid, k, cur, prev, exec);
        std::swap(cur, prev);
    }
    return cur;
}

namespace {

void require_cfl(const GameInstance& instance, const SpaceTimeGrid& grid) {
    const CflReport cfl = check_cfl(instance, grid);
    if (!cfl.satisfied) {
        throw CflError("time step " + std::to_string(grid.dt()) + " violates the stability bound; need dt <= " +
                           std::to_string(cfl.required_dt) + " (nt >= " + std::to_string(cfl.min_steps) + ")",
                       cfl.required_dt, cfl.min_steps);
    }
}

ValueField solve_field(Side side, ObstacleMode mode, FieldKind kind, const GameInstance& instance,
                       const SpaceTimeGrid& grid, Exec exec) {
    require_cfl(instance, grid);
    ValueField field(grid, kind, mode.kind == ObstacleMode::Kind::penalize ? mode.m : 0.0);
    const auto term = terminal_slice(instance, grid);
    std::copy(term.begin(), term.end(), field.slice(grid.nt()).begin());
    for (int k = grid.nt() - 1; k >= 0; --k) {
        step_slice(side, mode, instance, grid, k, field.slice(k + 1), field.slice(k), exec);
    }
    return field;
}

}  // namespace

ValueField solve_obstacle_pde(Side side, const GameInstance& instance, const SpaceTimeGrid& grid, Exec exec) {
    return solve_field(side, ObstacleMode::projection(), side == Side::lower ? FieldKind::lower : FieldKind::upper,
                       instance, grid, exec);
}

ValueField solve_penalized_pde(const GameInstance& instance, const SpaceTimeGrid& grid, double m, Side side,
                               Exec exec) {
    if (!(m >= 0)) throw PreconditionError("penalty m must be >= 0");
    return solve_field(side, ObstacleMode::penalty(m), FieldKind::penalized, instance, grid, exec);
}

ResidualReport complementarity_residual(const ValueField& field, const GameInstance& instance, double fraction,
                                        double t_max) {
    if (field.kind() == FieldKind::penalized) {
        throw PreconditionError("complementarity residual needs a lower or upper field");
    }
    const auto& grid = field.grid();
    ResidualReport report;
    report.per_slice.assign(grid.nt(), 0.0);
    for (int k = 0; k < grid.nt(); ++k) {
        const double t = grid.time(k);
        if (t_max >= 0 && t > t_max + 1e-12) continue;
        const auto cur = field.slice(k);
        const auto next = field.slice(k + 1);
        double worst = 0;
        for (std::size_t flat = 0; flat < grid.node_count(); ++flat) {
            if (grid.is_boundary(flat) || !grid.in_sub_box(flat, fraction)) continue;
            const Vector x = grid.point(flat);
            const Stencil s = stencil_at(grid, cur, flat);
            const double ham = discrete_hamiltonian(field.side(), instance, grid, t, x, s).value;
            const double r = std::min(cur[flat] - instance.obstacle(t, x), (cur[flat] - next[flat]) / grid.dt() - ham);
            worst = std::max(worst, std::abs(r));
        }
        report.per_slice[k] = worst;
        report.sup_residual = std::max(report.sup_residual, worst);
    }
    return report;
}

double discrete_lipschitz(const ValueField& field, int k, double fraction) {
    const auto& grid = field.grid();
    const auto w = field.slice(k);
    double worst = 0;
    for (std::size_t flat = 0; flat < grid.node_count(); ++flat) {
        if (!grid.in_sub_box(flat, fraction)) continue;
        for (int j = 0; j < grid.dims(); ++j) {
            if (grid.index(flat, j) + 1 >= grid.nx(j)) continue;
            const std::size_t nb = flat + grid.stride(j);
            if (!grid.in_sub_box(nb, fraction)) continue;
            worst = std::max(worst, std::abs(w[nb] - w[flat]) / grid.dx(j));
        }
    }
    return worst;
}

}  // namespace rbsde
