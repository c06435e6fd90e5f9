#include "rbsde/forward_sde.hpp"

#include <omp.h>

#include <cmath>
#include <limits>
#include <optional>
#include <string>

namespace rbsde {

void set_thread_limit(int threads) {
    if (threads > 0) omp_set_num_threads(threads);
}

TimeMesh::TimeMesh(double t0, double t1, int steps) : t0_(t0), t1_(t1), steps_(steps), dt_(0.0) {
    if (!(std::isfinite(t0) && std::isfinite(t1)) || t0 < 0) {
        throw PreconditionError("time mesh needs finite 0 <= t0 <= t1");
    }
    if (steps == 0 && t0 == t1) return;
    if (steps < 1 || !(t0 < t1)) {
        throw PreconditionError("time mesh needs t0 < t1 and steps >= 1 (or an empty interval)");
    }
    dt_ = (t1 - t0) / steps;
}

ControlPath ControlPath::constant(std::size_t index) {
    ControlPath c;
    c.rule_ = index;
    return c;
}

ControlPath ControlPath::piecewise(std::vector<std::size_t> per_step) {
    ControlPath c;
    c.rule_ = std::move(per_step);
    return c;
}

ControlPath ControlPath::feedback(FeedbackFn rule) {
    ControlPath c;
    c.rule_ = std::move(rule);
    return c;
}

std::size_t ControlPath::at(int k, double t, const Vector& x, std::size_t grid_size) const {
    std::size_t idx = 0;
    if (auto* c = std::get_if<std::size_t>(&rule_)) {
        idx = *c;
    } else if (auto* s = std::get_if<std::vector<std::size_t>>(&rule_)) {
        idx = s->at(static_cast<std::size_t>(k));
    } else {
        idx = std::get<FeedbackFn>(rule_)(t, x);
    }
    if (idx >= grid_size) {
        throw PreconditionError("control index " + std::to_string(idx) + " out of range at step " +
                                std::to_string(k));
    }
    return idx;
}

void ControlPath::check(std::size_t grid_size, int steps) const {
    if (auto* c = std::get_if<std::size_t>(&rule_)) {
        if (*c >= grid_size) throw PreconditionError("constant control index out of range");
    } else if (auto* s = std::get_if<std::vector<std::size_t>>(&rule_)) {
        if (s->size() != static_cast<std::size_t>(steps)) {
            throw PreconditionError("piecewise control needs one index per step");
        }
        for (auto i : *s) {
            if (i >= grid_size) throw PreconditionError("piecewise control index out of range");
        }
    }
}

PathBundle::PathBundle(TimeMesh mesh, std::size_t paths, int n, int d, std::uint64_t seed)
    : mesh_(mesh),
      paths_(paths),
      n_(n),
      d_(d),
      seed_(seed),
      states_(paths * static_cast<std::size_t>(mesh.steps() + 1) * n, 0.0),
      dB_(paths * static_cast<std::size_t>(mesh.steps()) * d, 0.0),
      u_(paths * static_cast<std::size_t>(mesh.steps()), 0),
      v_(paths * static_cast<std::size_t>(mesh.steps()), 0) {}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct PathFailure {
    std::size_t path;
    int step;
    std::string what;
};

// Simulates one path in place. Returns the failure, if any, instead of
// throwing so the OpenMP loop never unwinds through a parallel region.
std::optional<PathFailure> simulate_one(const GameInstance& g, const Vector& x0, const ControlPath& u,
                                        const ControlPath& v, PathBundle& bundle, std::size_t i) {
    const auto& mesh = bundle.mesh();
    const double dt = mesh.dt();
    const double sqdt = std::sqrt(dt);
    auto gen = path_engine(bundle.seed(), i);
    std::normal_distribution<double> normal(0.0, 1.0);

    bundle.state(i, 0) = x0;
    Vector x = x0;
    for (int k = 0; k < mesh.steps(); ++k) {
        auto dB = bundle.increment(i, k);
        for (int j = 0; j < bundle.d(); ++j) dB[j] = sqdt * normal(gen);

        const double t = mesh.time(k);
        std::size_t iu = 0, iv = 0;
        try {
            iu = u.at(k, t, x, g.u_grid.size());
            iv = v.at(k, t, x, g.v_grid.size());
        } catch (const std::exception& e) {
            return PathFailure{i, k, e.what()};
        }
        bundle.set_controls(i, k, iu, iv);
        const Vector& cu = g.u_grid[iu];
        const Vector& cv = g.v_grid[iv];
        x += g.coeffs.drift(t, x, cu, cv) * dt + g.coeffs.diffusion(t, x, cu, cv) * dB;
        if (!x.allFinite() || x.cwiseAbs().maxCoeff() > kDivergenceBound) {
            return PathFailure{i, k + 1, "state diverged"};
        }
        bundle.state(i, k + 1) = x;
    }
    return std::nullopt;
}

[[noreturn]] void raise(const PathFailure& f) {
    const std::string msg = f.what + " on path " + std::to_string(f.path) + " at step " + std::to_string(f.step);
    if (f.what == "state diverged") throw DivergenceError(msg, f.path, static_cast<std::size_t>(f.step));
    throw PreconditionError(msg);
}

}  // namespace

std::mt19937_64 path_engine(std::uint64_t seed, std::size_t path) {
    std::uint64_t s = splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(path) + 0x632be59bd9b4e019ULL));
    std::seed_seq seq{static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(s >> 32)};
    return std::mt19937_64(seq);
}

PathBundle simulate_paths(const GameInstance& instance, const Vector& x0, const TimeMesh& mesh,
                          const ControlPath& u, const ControlPath& v, std::size_t paths, std::uint64_t seed,
                          Exec exec) {
    if (paths < 1) throw PreconditionError("simulate_paths needs at least one path");
    if (x0.size() != instance.n) throw PreconditionError("initial point has wrong dimension");
    if (!x0.allFinite()) throw PreconditionError("initial point is not finite");
    u.check(instance.u_grid.size(), mesh.steps());
    v.check(instance.v_grid.size(), mesh.steps());

    PathBundle bundle(mesh, paths, instance.n, instance.d, seed);
    const auto m = static_cast<std::ptrdiff_t>(paths);

    std::optional<PathFailure> first;
    if (exec == Exec::serial) {
        for (std::ptrdiff_t i = 0; i < m && !first; ++i) {
            first = simulate_one(instance, x0, u, v, bundle, static_cast<std::size_t>(i));
        }
    } else {
        std::vector<std::optional<PathFailure>> failures(paths);
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < m; ++i) {
            failures[i] = simulate_one(instance, x0, u, v, bundle, static_cast<std::size_t>(i));
        }
        // Report the lowest failing path, matching the serial order.
        for (auto& f : failures) {
            if (f) {
                first = f;
                break;
            }
        }
    }
    if (first) raise(*first);
    return bundle;
}

MomentEstimate empirical_moments(const PathBundle& bundle, int p) {
    if (p != 2 && p != 4) throw PreconditionError("empirical_moments supports p = 2 or 4");
    double sup_sum = 0, inc_sum = 0;
    for (std::size_t i = 0; i < bundle.paths(); ++i) {
        const Vector x0 = bundle.state(i, 0);
        double sup_abs = 0, sup_inc = 0;
        for (int k = 0; k <= bundle.steps(); ++k) {
            sup_abs = std::max(sup_abs, bundle.state(i, k).squaredNorm());
            sup_inc = std::max(sup_inc, (bundle.state(i, k) - x0).squaredNorm());
        }
        sup_sum += p == 2 ? sup_abs : sup_abs * sup_abs;
        inc_sum += p == 2 ? sup_inc : sup_inc * sup_inc;
    }
    MomentEstimate est{sup_sum / bundle.paths(), inc_sum / bundle.paths()};
    if (!std::isfinite(est.sup_moment) || !std::isfinite(est.increment_moment)) {
        throw DivergenceError("moment estimate overflowed", 0, 0);
    }
    return est;
}

}  // namespace rbsde
