#include "rbsde/isaacs_pde.hpp"
#include "rbsde/oracles.hpp"
#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

using namespace rbsde;
using rbsde::test::zero_instance;

namespace {

SpaceTimeGrid cfl_grid(const GameInstance& g, std::vector<std::pair<double, double>> box, std::vector<int> nx,
                       BoundaryPolicy policy = BoundaryPolicy::linear_extrapolation) {
    const int nt = min_cfl_steps(g, box, nx);
    return SpaceTimeGrid(std::move(box), std::move(nx), nt, g.T, policy);
}

SpaceTimeGrid put_grid(int nx) { return cfl_grid(builtin_instance("american_put"), {{20.0, 300.0}}, {nx}); }

// Correlated heat equation in two dimensions with payoff x_0 x_1: the exact
// solution x_0 x_1 + a_01 (T - t) is reproduced by the stencil.
GameInstance correlated_heat() {
    auto g = zero_instance(2, 2);
    g.coeffs.diffusion = [](double, const Vector&, const Vector&, const Vector&) {
        Matrix s(2, 2);
        s << 1.0, 0.0, 0.5, 0.8;
        return s;
    };
    g.coeffs.terminal = [](const Vector& x) { return x[0] * x[1]; };
    g.coeffs.obstacle = [](double, const Vector&) { return -100.0; };
    return g;
}

}  // namespace

TEST_CASE("grid layout") {
    const SpaceTimeGrid g({{0.0, 1.0}, {-1.0, 1.0}}, {11, 5}, 10, 1.0);
    CHECK(g.node_count() == 55);
    CHECK(g.stride(0) == 1);
    CHECK(g.stride(1) == 11);
    CHECK(g.coordinate(12, 0) == doctest::Approx(0.1));
    CHECK(g.coordinate(12, 1) == doctest::Approx(-0.5));
    CHECK(g.is_boundary(0));
    CHECK_FALSE(g.is_boundary(12));
    CHECK(g.time(10) == 1.0);
    CHECK_THROWS_AS(SpaceTimeGrid({{0.0, 1.0}}, {2}, 10, 1.0), ConfigError);
    CHECK_THROWS_AS(SpaceTimeGrid({{1.0, 0.0}}, {5}, 10, 1.0), ConfigError);
    CHECK_THROWS_AS(SpaceTimeGrid({{0.0, 1.0}, {0.0, 1.0}, {0.0, 1.0}}, {3, 3, 3}, 10, 1.0), ConfigError);
    const SpaceTimeGrid line({{0.0, 10.0}}, {11}, 4, 1.0);
    int inside = 0;
    for (std::size_t i = 0; i < line.node_count(); ++i) inside += line.in_sub_box(i, 0.6);
    CHECK(inside == 7);  // x in [2, 8]
}

TEST_CASE("Hamiltonian examples") {
    auto g = zero_instance(2, 2);
    g.coeffs.diffusion = [](double, const Vector&, const Vector&, const Vector&) { return Matrix(Matrix::Identity(2, 2)); };
    const auto h = eval_hamiltonian(Side::lower, g, 0.0, Vector::Zero(2), 0.0, Vector::Zero(2), Matrix::Identity(2, 2));
    CHECK(h.value == doctest::Approx(1.0));

    const auto mm = builtin_instance("minimax_gap");
    const auto lo = eval_hamiltonian(Side::lower, mm, 0.0, Vector::Zero(1), 0.0, Vector::Zero(1), Matrix::Zero(1, 1));
    const auto up = eval_hamiltonian(Side::upper, mm, 0.0, Vector::Zero(1), 0.0, Vector::Zero(1), Matrix::Zero(1, 1));
    CHECK(lo.value == -1.0);
    CHECK(up.value == 1.0);

    const auto put = builtin_instance("american_put");
    const auto v = eval_hamiltonian(Side::lower, put, 0.0, Vector::Constant(1, 100.0), 5.0, Vector::Constant(1, -0.4),
                                    Matrix::Constant(1, 1, 0.001));
    CHECK(v.value == doctest::Approx(-2.05).epsilon(1e-12));
}

TEST_CASE("minimax scan ties and optimizers") {
    Matrix p(2, 2);
    p << -1, 1, 1, -1;
    const auto lo = minimax(Side::lower, p);
    CHECK(lo.value == -1);
    CHECK(lo.argmax_u == 0);
    CHECK(lo.arginf_v == 0);
    const auto up = minimax(Side::upper, p);
    CHECK(up.value == 1);
    CHECK(up.arginf_v == 0);
    CHECK(up.argmax_u == 1);
    Matrix q(2, 3);
    q << 3, 1, 2, 0, 5, 1;
    const auto a = minimax(Side::lower, q);  // row minima (1, 0) -> u = 0, v = 1
    CHECK(a.value == 1);
    CHECK(a.argmax_u == 0);
    CHECK(a.arginf_v == 1);
    const auto b = minimax(Side::upper, q);  // column maxima (3, 5, 2) -> v = 2, u = 0
    CHECK(b.value == 2);
    CHECK(b.arginf_v == 2);
    CHECK(b.argmax_u == 0);
}

TEST_CASE("lower Hamiltonian never exceeds the upper one") {
    const auto mm = builtin_instance("minimax_gap");
    std::mt19937_64 gen(3);
    std::normal_distribution<double> nrm;
    for (int i = 0; i < 200; ++i) {
        const Vector x = Vector::Constant(1, nrm(gen));
        const Vector q = Vector::Constant(1, nrm(gen));
        const Matrix X = Matrix::Constant(1, 1, nrm(gen));
        const double y = nrm(gen);
        CHECK(eval_hamiltonian(Side::lower, mm, 0.3, x, y, q, X).value <=
              eval_hamiltonian(Side::upper, mm, 0.3, x, y, q, X).value);
    }
}

TEST_CASE("exact solutions of the stencil") {
    for (const char* name : {"no_obstacle_linear", "deterministic_stop"}) {
        CAPTURE(name);
        const auto g = builtin_instance(name, std::string(name) == "no_obstacle_linear"
                                                  ? ParamMap{{"c0", 1.0}, {"c1", 0.0}}
                                                  : ParamMap{});
        const auto grid = cfl_grid(g, {{-2.0, 2.0}}, {41});
        for (Side side : {Side::lower, Side::upper}) {
            const auto w = solve_obstacle_pde(side, g, grid);
            double err = 0;
            for (int k = 0; k <= grid.nt(); ++k) {
                for (std::size_t i = 0; i < grid.node_count(); ++i) {
                    err = std::max(err, std::abs(w.at(k, i) - (g.T - grid.time(k))));
                }
            }
            CHECK(err <= 1e-12);
        }
    }
}

TEST_CASE("two-dimensional correlated diffusion with cross derivatives") {
    const auto g = correlated_heat();
    const auto grid = cfl_grid(g, {{-1.0, 1.0}, {-1.0, 1.0}}, {21, 21});
    const auto w = solve_obstacle_pde(Side::lower, g, grid);
    double err = 0;
    for (std::size_t i = 0; i < grid.node_count(); ++i) {
        const Vector x = grid.point(i);
        err = std::max(err, std::abs(w.at(0, i) - (x[0] * x[1] + 0.5 * g.T)));
    }
    CHECK(err <= 1e-10);
    const auto serial = solve_obstacle_pde(Side::lower, g, grid, Exec::serial);
    for (std::size_t i = 0; i < grid.node_count(); ++i) CHECK(serial.at(0, i) == w.at(0, i));
}

TEST_CASE("American put against the binomial tree") {
    const auto g = builtin_instance("american_put");
    const auto grid = put_grid(281);
    const auto w = solve_obstacle_pde(Side::lower, g, grid);
    const double reference = crr_american_put(100, 100, 0.05, 0.2, 1.0, 2000);
    CHECK(std::abs(w.sample(0, Vector::Constant(1, 100.0)) - reference) / reference <= 0.01);
}

TEST_CASE("field invariants: terminal slice and obstacle dominance") {
    for (const auto& name : builtin_instance_names()) {
        CAPTURE(name);
        const auto g = builtin_instance(name);
        const auto grid = name == "american_put" ? put_grid(71) : cfl_grid(g, {{-3.0, 3.0}}, {31});
        for (Side side : {Side::lower, Side::upper}) {
            const auto w = solve_obstacle_pde(side, g, grid);
            const auto term = terminal_slice(g, grid);
            for (std::size_t i = 0; i < grid.node_count(); ++i) CHECK(w.at(grid.nt(), i) == term[i]);
            double worst = 0;
            for (int k = 0; k <= grid.nt(); ++k) {
                for (std::size_t i = 0; i < grid.node_count(); ++i) {
                    worst = std::max(worst, g.obstacle(grid.time(k), grid.point(i)) - w.at(k, i));
                }
            }
            CHECK(worst <= 1e-12);
        }
    }
}

TEST_CASE("CFL refusal reports the required step") {
    const auto g = builtin_instance("american_put");
    const SpaceTimeGrid coarse({{20.0, 300.0}}, {141}, 10, 1.0);
    const auto report = check_cfl(g, coarse);
    CHECK_FALSE(report.satisfied);
    try {
        solve_obstacle_pde(Side::lower, g, coarse);
        FAIL("expected CflError");
    } catch (const CflError& e) {
        CHECK(e.required_steps() == report.min_steps);
        CHECK(e.required_dt() == doctest::Approx(report.required_dt));
    }
    CHECK(check_cfl(g, coarse.with_steps(report.min_steps)).satisfied);
    CHECK_FALSE(check_cfl(g, coarse.with_steps(report.min_steps - 1)).satisfied);
}

TEST_CASE("penalized equation") {
    SUBCASE("zero penalty on a slack obstacle equals the obstacle solve") {
        const auto g = builtin_instance("no_obstacle_linear", {{"c0", 1.0}, {"c1", 0.0}});
        const auto grid = cfl_grid(g, {{-2.0, 2.0}}, {21});
        const auto a = solve_penalized_pde(g, grid, 0.0);
        const auto b = solve_obstacle_pde(Side::lower, g, grid);
        for (int k = 0; k <= grid.nt(); ++k) {
            for (std::size_t i = 0; i < grid.node_count(); ++i) CHECK(a.at(k, i) == b.at(k, i));
        }
    }
    SUBCASE("deterministic_stop converges from below") {
        const auto g = builtin_instance("deterministic_stop");
        const SpaceTimeGrid grid({{-1.0, 1.0}}, {11}, 1000, g.T);
        const auto w = solve_penalized_pde(g, grid, 100.0);
        for (std::size_t i = 0; i < grid.node_count(); ++i) {
            CHECK(w.at(0, i) >= g.T - 0.05);
            CHECK(w.at(0, i) <= g.T);
        }
    }
    SUBCASE("nodewise order in m and below the reflected field") {
        for (const auto& name : builtin_instance_names()) {
            CAPTURE(name);
            const auto g = builtin_instance(name);
            const auto grid = name == "american_put" ? put_grid(71) : cfl_grid(g, {{-3.0, 3.0}}, {31});
            const auto w1 = solve_penalized_pde(g, grid, 1.0);
            const auto w10 = solve_penalized_pde(g, grid, 10.0);
            const auto w = solve_obstacle_pde(Side::lower, g, grid);
            double order = 0, above = 0;
            for (int k = 0; k <= grid.nt(); ++k) {
                for (std::size_t i = 0; i < grid.node_count(); ++i) {
                    if (grid.is_boundary(i)) continue;  // extrapolated layer
                    order = std::max(order, w1.at(k, i) - w10.at(k, i));
                    above = std::max(above, w10.at(k, i) - w.at(k, i));
                }
            }
            CHECK(order <= 1e-12);
            CHECK(above <= 1e-12);
        }
    }
}

TEST_CASE("scheme monotonicity in the terminal slice") {
    const auto g = builtin_instance("american_put");
    const auto grid = put_grid(71);
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    const auto base = terminal_slice(g, grid);
    for (int trial = 0; trial < 10; ++trial) {
        auto raised = base;
        for (auto& v : raised) v += unif(gen);
        for (Side side : {Side::lower, Side::upper}) {
            const auto a = propagate_backward(side, ObstacleMode::projection(), g, grid, base, grid.nt(), 0);
            const auto b = propagate_backward(side, ObstacleMode::projection(), g, grid, raised, grid.nt(), 0);
            double worst = 0;
            for (std::size_t i = 0; i < grid.node_count(); ++i) worst = std::max(worst, a[i] - b[i]);
            CHECK(worst <= 1e-12);
        }
    }
}

TEST_CASE("complementarity residual") {
    {
        const auto g = builtin_instance("deterministic_stop");
        const auto grid = cfl_grid(g, {{-2.0, 2.0}}, {41});
        const auto r = complementarity_residual(solve_obstacle_pde(Side::lower, g, grid), g);
        CHECK(r.sup_residual <= grid.dt() + grid.min_dx());
        CHECK(r.per_slice.size() == static_cast<std::size_t>(grid.nt()));
    }
    {
        const auto g = builtin_instance("no_obstacle_linear", {{"c0", 1.0}, {"c1", 0.0}});
        const auto grid = cfl_grid(g, {{-2.0, 2.0}}, {41});
        CHECK(complementarity_residual(solve_obstacle_pde(Side::lower, g, grid), g).sup_residual <= 1e-8);
    }
    {
        const auto g = builtin_instance("american_put");
        double previous = 1e300;
        for (int nx : {71, 141, 281}) {
            CAPTURE(nx);
            const auto r = complementarity_residual(solve_obstacle_pde(Side::lower, g, put_grid(nx)), g,
                                                    kInteriorFraction, 0.5);
            CHECK(r.sup_residual < previous);
            previous = r.sup_residual;
        }
    }
    const auto g = builtin_instance("deterministic_stop");
    const auto grid = cfl_grid(g, {{-2.0, 2.0}}, {11});
    CHECK_THROWS_AS(complementarity_residual(solve_penalized_pde(g, grid, 1.0), g), PreconditionError);
}

TEST_CASE("spatial Lipschitz constant is stable under refinement") {
    for (const auto& name : builtin_instance_names()) {
        CAPTURE(name);
        const auto g = builtin_instance(name);
        std::vector<double> lips;
        for (int nx : {71, 141, 281}) {
            const auto grid = name == "american_put" ? put_grid(nx) : cfl_grid(g, {{-3.0, 3.0}}, {nx});
            lips.push_back(discrete_lipschitz(solve_obstacle_pde(Side::lower, g, grid), 0));
        }
        const auto [lo, hi] = std::minmax_element(lips.begin(), lips.end());
        if (*hi == 0.0) continue;  // constant-in-x fields
        CHECK(*hi <= 1.5 * *lo);
    }
}

TEST_CASE("boundary policies and serial/parallel agreement") {
    const auto g = builtin_instance("minimax_gap");
    for (auto policy : {BoundaryPolicy::linear_extrapolation, BoundaryPolicy::dirichlet_terminal_extension}) {
        const auto grid = cfl_grid(g, {{-3.0, 3.0}}, {61}, policy);
        for (Side side : {Side::lower, Side::upper}) {
            const auto a = solve_obstacle_pde(side, g, grid, Exec::serial);
            const auto b = solve_obstacle_pde(side, g, grid, Exec::parallel);
            for (int k = 0; k <= grid.nt(); ++k) {
                const auto sa = a.slice(k);
                const auto sb = b.slice(k);
                CHECK(std::equal(sa.begin(), sa.end(), sb.begin()));
            }
        }
    }
    const auto d = cfl_grid(g, {{-3.0, 3.0}}, {61}, BoundaryPolicy::dirichlet_terminal_extension);
    const auto w = solve_obstacle_pde(Side::lower, g, d);
    // boundary-insensitivity: shrinking the box moves interior values by less than dx
    const auto wide = solve_obstacle_pde(Side::lower, g, cfl_grid(g, {{-4.0, 4.0}}, {81}));
    const auto narrow = solve_obstacle_pde(Side::lower, g, cfl_grid(g, {{-3.0, 3.0}}, {61}));
    for (double x : {-1.0, 0.0, 0.5, 1.0}) {
        const Vector p = Vector::Constant(1, x);
        CHECK(std::abs(wide.sample(0, p) - narrow.sample(0, p)) < 0.1);
        CHECK(std::isfinite(w.sample(0, p)));
    }
}

TEST_CASE("value field sampling") {
    const auto g = builtin_instance("american_put");
    const SpaceTimeGrid grid({{0.0, 10.0}}, {11}, 5, 1.0);
    ValueField f(grid, FieldKind::lower);
    for (std::size_t i = 0; i < grid.node_count(); ++i) f.slice(0)[i] = 2.0 * grid.point(i)[0];
    CHECK(f.sample(0, Vector::Constant(1, 3.25)) == doctest::Approx(6.5));
    CHECK(f.sample(0, Vector::Constant(1, -5.0)) == 0.0);
    CHECK(f.sample(0, Vector::Constant(1, 50.0)) == 20.0);
    CHECK(f.nearest_node(Vector::Constant(1, 3.4)) == 3);
    (void)g;
}
