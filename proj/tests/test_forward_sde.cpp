#include "rbsde/forward_sde.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace rbsde;
using rbsde::test::zero_instance;

namespace {

const ControlPath kFixed = ControlPath::constant(0);

GameInstance brownian() {
    auto g = zero_instance();
    g.coeffs.diffusion = [](double, const Vector&, const Vector&, const Vector&) { return Matrix(Matrix::Ones(1, 1)); };
    return g;
}

// Slope of log(y) against log(x).
double loglog_slope(const std::vector<double>& x, const std::vector<double>& y) {
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += std::log(x[i]);
        my += std::log(y[i]);
    }
    mx /= x.size();
    my /= y.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (std::log(x[i]) - mx) * (std::log(y[i]) - my);
        sxx += (std::log(x[i]) - mx) * (std::log(x[i]) - mx);
    }
    return sxy / sxx;
}

}  // namespace

TEST_CASE("time mesh") {
    const TimeMesh mesh(0.0, 1.0, 10);
    CHECK(mesh.dt() == doctest::Approx(0.1));
    CHECK(mesh.time(10) == 1.0);
    CHECK_THROWS_AS(TimeMesh(1.0, 0.5, 3), PreconditionError);
    CHECK_THROWS_AS(TimeMesh(0.0, 1.0, 0), PreconditionError);
    CHECK_NOTHROW(TimeMesh(0.5, 0.5, 0));
}

TEST_CASE("frozen dynamics keep the initial point") {
    const auto g = zero_instance();
    const auto b = simulate_paths(g, Vector::Constant(1, 5.0), TimeMesh(0, 1, 20), kFixed, kFixed, 8, 1);
    for (std::size_t i = 0; i < b.paths(); ++i) {
        for (int k = 0; k <= b.steps(); ++k) CHECK(b.state(i, k)[0] == 5.0);
    }
}

TEST_CASE("constant drift is integrated exactly") {
    auto g = zero_instance();
    g.coeffs.drift = [](double, const Vector&, const Vector&, const Vector&) { return Vector(Vector::Ones(1)); };
    const auto b = simulate_paths(g, Vector::Zero(1), TimeMesh(0, 1, 10), kFixed, kFixed, 3, 1);
    for (std::size_t i = 0; i < b.paths(); ++i) {
        for (int k = 0; k <= 10; ++k) CHECK(b.state(i, k)[0] == doctest::Approx(k / 10.0).epsilon(1e-14));
    }
}

TEST_CASE("geometric Brownian motion mean matches the lognormal moment") {
    const auto g = builtin_instance("american_put");
    const std::size_t M = 10000;
    const auto b = simulate_paths(g, Vector::Constant(1, 100.0), TimeMesh(0, 1, 250), kFixed, kFixed, M, 2024);
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < M; ++i) {
        const double x = b.state(i, 250)[0];
        sum += x;
        sq += x * x;
    }
    const double mean = sum / M;
    const double se = std::sqrt((sq / M - mean * mean) / (M - 1));
    CHECK(std::abs(mean - 100.0 * std::exp(0.05)) <= 3 * se);
}

TEST_CASE("Brownian increments are centred with variance dt") {
    const auto g = brownian();
    const std::size_t M = 4000;
    const int N = 20;
    const auto b = simulate_paths(g, Vector::Zero(1), TimeMesh(0, 1, N), kFixed, kFixed, M, 9);
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < M; ++i) {
        for (int k = 0; k < N; ++k) {
            const double db = b.increment(i, k)[0];
            sum += db;
            sq += db * db;
        }
    }
    const double count = static_cast<double>(M) * N;
    CHECK(std::abs(sum / count) <= 4 * std::sqrt(b.mesh().dt() / count));
    CHECK(sq / count == doctest::Approx(b.mesh().dt()).epsilon(0.05));
    for (std::size_t i = 0; i < M; ++i) CHECK(b.state(i, 0)[0] == 0.0);
}

TEST_CASE("simulation is reproducible and serial equals parallel bit for bit") {
    const auto g = builtin_instance("american_put");
    const TimeMesh mesh(0, 1, 50);
    const Vector x0 = Vector::Constant(1, 100.0);
    const auto a = simulate_paths(g, x0, mesh, kFixed, kFixed, 500, 77, Exec::parallel);
    const auto b = simulate_paths(g, x0, mesh, kFixed, kFixed, 500, 77, Exec::serial);
    const auto c = simulate_paths(g, x0, mesh, kFixed, kFixed, 500, 77, Exec::parallel);
    CHECK(a.raw_states() == b.raw_states());
    CHECK(a.raw_increments() == b.raw_increments());
    CHECK(a.raw_states() == c.raw_states());
    const auto d = simulate_paths(g, x0, mesh, kFixed, kFixed, 500, 78);
    CHECK(a.raw_increments() != d.raw_increments());
}

TEST_CASE("common random numbers across initial points") {
    const auto g = builtin_instance("american_put");
    const TimeMesh mesh(0, 1, 20);
    const auto a = simulate_paths(g, Vector::Constant(1, 100.0), mesh, kFixed, kFixed, 50, 3);
    const auto b = simulate_paths(g, Vector::Constant(1, 90.0), mesh, kFixed, kFixed, 50, 3);
    CHECK(a.raw_increments() == b.raw_increments());
}

TEST_CASE("controls: piecewise and feedback indices are recorded") {
    auto g = with_control_grids(zero_instance(), ControlGrid::scalar({-1.0, 1.0}, "u"),
                                ControlGrid::scalar({0.0}, "v"));
    g.coeffs.drift = [](double, const Vector&, const Vector& u, const Vector&) { return Vector(u); };
    const TimeMesh mesh(0, 1, 4);
    const auto pw = ControlPath::piecewise({1, 1, 0, 0});
    const auto b = simulate_paths(g, Vector::Zero(1), mesh, pw, kFixed, 2, 1);
    CHECK(b.state(0, 2)[0] == doctest::Approx(0.5));
    CHECK(b.state(0, 4)[0] == doctest::Approx(0.0));
    CHECK(b.u_index(1, 0) == 1);
    CHECK(b.u_index(1, 3) == 0);

    const auto fb = ControlPath::feedback([](double, const Vector& x) { return x[0] < 0.3 ? 1u : 0u; });
    const auto c = simulate_paths(g, Vector::Zero(1), mesh, fb, kFixed, 1, 1);
    CHECK(c.u_index(0, 0) == 1);
    CHECK(c.u_index(0, 1) == 1);
    CHECK(c.u_index(0, 2) == 0);

    CHECK_THROWS_AS(simulate_paths(g, Vector::Zero(1), mesh, ControlPath::constant(2), kFixed, 1, 1),
                    PreconditionError);
    CHECK_THROWS_AS(simulate_paths(g, Vector::Zero(1), mesh, ControlPath::piecewise({0, 1}), kFixed, 1, 1),
                    PreconditionError);
    const auto bad = ControlPath::feedback([](double, const Vector&) { return std::size_t{5}; });
    CHECK_THROWS_AS(simulate_paths(g, Vector::Zero(1), mesh, bad, kFixed, 1, 1), PreconditionError);
}

TEST_CASE("divergence names the path and the step") {
    auto g = zero_instance();
    g.coeffs.drift = [](double, const Vector& x, const Vector&, const Vector&) { return Vector(1e3 * x); };
    try {
        simulate_paths(g, Vector::Ones(1), TimeMesh(0, 1, 10), kFixed, kFixed, 4, 1);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(e.path() == 0);
        CHECK(e.step() >= 1);
        CHECK(std::string(e.what()).find("path 0") != std::string::npos);
    }
    CHECK_THROWS_AS(simulate_paths(g, Vector::Constant(1, std::nan("")), TimeMesh(0, 1, 2), kFixed, kFixed, 1, 1),
                    PreconditionError);
    CHECK_THROWS_AS(simulate_paths(zero_instance(), Vector::Zero(1), TimeMesh(0, 1, 2), kFixed, kFixed, 0, 1),
                    PreconditionError);
}

TEST_CASE("empirical moments") {
    const auto frozen = simulate_paths(zero_instance(2, 1), Vector::Constant(2, std::sqrt(2.0)), TimeMesh(0, 1, 5),
                                       kFixed, kFixed, 4, 1);
    const auto m = empirical_moments(frozen, 2);
    CHECK(m.sup_moment == doctest::Approx(4.0));
    CHECK(m.increment_moment == 0.0);
    CHECK_THROWS_AS(empirical_moments(frozen, 3), PreconditionError);

    for (double delta : {0.1, 0.05, 0.025}) {
        const auto b = simulate_paths(brownian(), Vector::Zero(1), TimeMesh(0, delta, 50), kFixed, kFixed, 10000, 4);
        const auto bm = empirical_moments(b, 2);
        CHECK(bm.increment_moment <= 4.1 * delta);
        CHECK(bm.sup_moment >= 0.0);
    }

    const auto put = simulate_paths(builtin_instance("american_put"), Vector::Constant(1, 100.0), TimeMesh(0, 1, 20),
                                    kFixed, kFixed, 200, 5);
    CHECK(empirical_moments(put, 2).sup_moment >= 100.0 * 100.0);
    CHECK(empirical_moments(put, 4).sup_moment >= std::pow(100.0, 4));
}

TEST_CASE("increment moment scales linearly in the horizon") {
    const auto g = builtin_instance("american_put");
    std::vector<double> deltas{0.2, 0.1, 0.05, 0.025}, moments;
    for (double delta : deltas) {
        const auto b = simulate_paths(g, Vector::Constant(1, 100.0), TimeMesh(0, delta, 40), kFixed, kFixed, 4000, 6);
        moments.push_back(empirical_moments(b, 2).increment_moment);
    }
    CHECK(std::abs(loglog_slope(deltas, moments) - 1.0) <= 0.15);
}

TEST_CASE("initial-condition Lipschitz constant is stable") {
    const auto g = builtin_instance("american_put");
    const TimeMesh mesh(0, 1, 50);
    const auto base = simulate_paths(g, Vector::Constant(1, 100.0), mesh, kFixed, kFixed, 2000, 8);
    std::vector<double> ratios;
    for (double sep : {1.0, 0.1, 0.01}) {
        const auto other = simulate_paths(g, Vector::Constant(1, 100.0 + sep), mesh, kFixed, kFixed, 2000, 8);
        double acc = 0;
        for (std::size_t i = 0; i < base.paths(); ++i) {
            double sup = 0;
            for (int k = 0; k <= mesh.steps(); ++k) {
                sup = std::max(sup, (base.state(i, k) - other.state(i, k)).squaredNorm());
            }
            acc += sup;
        }
        ratios.push_back(acc / base.paths() / (sep * sep));
    }
    const auto [lo, hi] = std::minmax_element(ratios.begin(), ratios.end());
    CHECK(*hi <= 2.0 * *lo);
}
