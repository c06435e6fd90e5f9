#include "rbsde/problem_model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <sstream>
#include <tuple>

namespace rbsde {

ControlGrid::ControlGrid(std::vector<Vector> points, std::string label)
    : points_(std::move(points)), label_(std::move(label)) {
    if (points_.empty()) {
        throw ConfigError("control grid '" + label_ + "' is empty");
    }
    const auto k = points_.front().size();
    if (k < 1) {
        throw ConfigError("control grid '" + label_ + "' has zero-dimensional points");
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
        if (points_[i].size() != k) {
            throw ConfigError("control grid '" + label_ + "' mixes point dimensions");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (points_[i] == points_[j]) {
                throw ConfigError("control grid '" + label_ + "' has duplicate points");
            }
        }
    }
}

ControlGrid ControlGrid::scalar(const std::vector<double>& values, std::string label) {
    std::vector<Vector> pts;
    pts.reserve(values.size());
    for (double v : values) {
        pts.push_back(Vector::Constant(1, v));
    }
    return ControlGrid(std::move(pts), std::move(label));
}

namespace {

std::string format_point(double t, const Vector& x) {
    std::ostringstream os;
    os.precision(6);
    os << "(t=" << t << ", x=[";
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        os << (i ? ", " : "") << x[i];
    }
    os << "])";
    return os.str();
}

// Radical inverse in the given base; the Halton sequence is one radical
// inverse per coordinate with distinct prime bases.
double radical_inverse(std::uint64_t i, unsigned base) {
    double inv = 1.0 / base;
    double f = inv;
    double r = 0.0;
    while (i > 0) {
        r += f * static_cast<double>(i % base);
        i /= base;
        f *= inv;
    }
    return r;
}

constexpr std::array<unsigned, 24> kPrimes = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37,
                                              41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89};

/// Halton points with a seeded Cranley-Patterson rotation.
class QuasiRandom {
public:
    QuasiRandom(std::size_t dims, std::uint64_t seed) : shift_(dims) {
        if (dims > kPrimes.size()) {
            throw ConfigError("probe dimension too large for the Halton generator");
        }
        std::mt19937_64 gen(seed);
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        for (auto& s : shift_) s = unif(gen);
    }

    std::vector<double> point(std::uint64_t index) const {
        std::vector<double> p(shift_.size());
        for (std::size_t j = 0; j < shift_.size(); ++j) {
            double v = radical_inverse(index + 1, kPrimes[j]) + shift_[j];
            p[j] = v - std::floor(v);
        }
        return p;
    }

private:
    std::vector<double> shift_;
};

double checked(double value, const char* what, double t, const Vector& x) {
    if (!std::isfinite(value)) {
        throw EvaluationError(std::string(what) + " is not finite at " + format_point(t, x));
    }
    return value;
}

template <class F>
auto guarded(const char* what, double t, const Vector& x, F&& f) {
    try {
        return f();
    } catch (const EvaluationError&) {
        throw;
    } catch (const std::exception& e) {
        throw EvaluationError(std::string(what) + " failed at " + format_point(t, x) + ": " + e.what());
    }
}

struct Probe {
    double t;
    Vector x, x2;
    double y, y2;
    Vector z, z2;
};

class Validator {
public:
    Validator(const GameInstance& g, ValidationReport& report) : g_(g), report_(report) {
        for (const char* c : {"drift", "diffusion", "driver", "terminal", "obstacle"}) {
            report_.estimated_lipschitz[c] = 0.0;
        }
    }

    void check(const Probe& p) {
        const auto& c = g_.coeffs;
        const double lip = kValidationSlack * c.declared_lipschitz;
        const double dx = (p.x - p.x2).norm();
        const double grow1 = kValidationSlack * c.declared_growth * (1.0 + p.x.norm());

        for (const auto& u : g_.u_grid.points()) {
            for (const auto& v : g_.v_grid.points()) {
                Vector b1 = eval_drift(p.t, p.x, u, v);
                Vector b2 = eval_drift(p.t, p.x2, u, v);
                Matrix s1 = eval_diffusion(p.t, p.x, u, v);
                Matrix s2 = eval_diffusion(p.t, p.x2, u, v);
                if (dx > 0) {
                    quotient("drift", p, (b1 - b2).norm() / dx, lip);
                    quotient("diffusion", p, (s1 - s2).norm() / dx, lip);
                }
                bound("growth.drift", p, b1.norm(), grow1);
                bound("growth.diffusion", p, s1.norm(), grow1);

                const double f1 = eval_driver(p.t, p.x, p.y, p.z, u, v);
                const double f2 = eval_driver(p.t, p.x2, p.y2, p.z2, u, v);
                const double dist = dx + std::abs(p.y - p.y2) + (p.z - p.z2).norm();
                if (dist > 0) {
                    quotient("driver", p, std::abs(f1 - f2) / dist, lip);
                }
                const double f0 = eval_driver(p.t, p.x, 0.0, Vector::Zero(g_.d), u, v);
                bound("growth.driver", p, std::abs(f0), grow1);
            }
        }

        const double phi1 = eval_terminal(p.x);
        const double phi2 = eval_terminal(p.x2);
        const double h1 = eval_obstacle(p.t, p.x);
        const double h2 = eval_obstacle(p.t, p.x2);
        if (dx > 0) {
            quotient("terminal", p, std::abs(phi1 - phi2) / dx, lip);
            quotient("obstacle", p, std::abs(h1 - h2) / dx, lip);
        }
        bound("growth.terminal", p, std::abs(phi1), grow1);
        bound("growth.obstacle", p, std::abs(h1), grow1);

        const double hT = eval_obstacle(g_.T, p.x);
        if (hT > phi1) {
            report_.violations.push_back({"barrier", g_.T, p.x, hT - phi1, {}});
        }
    }

private:
    void quotient(const std::string& coef, const Probe& p, double q, double limit) {
        auto& est = report_.estimated_lipschitz[coef];
        est = std::max(est, q);
        if (q > limit) {
            report_.violations.push_back({"lipschitz." + coef, p.t, p.x, q, p.x2});
        }
    }

    void bound(const std::string& id, const Probe& p, double value, double limit) {
        if (value > limit) {
            report_.violations.push_back({id, p.t, p.x, value, {}});
        }
    }

    Vector eval_drift(double t, const Vector& x, const Vector& u, const Vector& v) const {
        Vector b = guarded("drift", t, x, [&] { return g_.coeffs.drift(t, x, u, v); });
        if (b.size() != g_.n) throw EvaluationError("drift has wrong dimension at " + format_point(t, x));
        if (!b.allFinite()) throw EvaluationError("drift is not finite at " + format_point(t, x));
        return b;
    }

    Matrix eval_diffusion(double t, const Vector& x, const Vector& u, const Vector& v) const {
        Matrix s = guarded("diffusion", t, x, [&] { return g_.coeffs.diffusion(t, x, u, v); });
        if (s.rows() != g_.n || s.cols() != g_.d) {
            throw EvaluationError("diffusion has wrong shape at " + format_point(t, x));
        }
        if (!s.allFinite()) throw EvaluationError("diffusion is not finite at " + format_point(t, x));
        return s;
    }

    double eval_driver(double t, const Vector& x, double y, const Vector& z, const Vector& u,
                       const Vector& v) const {
        return checked(guarded("driver", t, x, [&] { return g_.coeffs.driver(t, x, y, z, u, v); }),
                       "driver", t, x);
    }

    double eval_terminal(const Vector& x) const {
        return checked(guarded("terminal", g_.T, x, [&] { return g_.coeffs.terminal(x); }), "terminal",
                       g_.T, x);
    }

    double eval_obstacle(double t, const Vector& x) const {
        return checked(guarded("obstacle", t, x, [&] { return g_.coeffs.obstacle(t, x); }), "obstacle", t,
                       x);
    }

    const GameInstance& g_;
    ValidationReport& report_;
};

}  // namespace

ValidationReport validate_instance(const GameInstance& instance, int probe_count, std::uint64_t seed,
                                   ProbeBox box) {
    if (probe_count < 2) {
        throw PreconditionError("validate_instance needs probe_count >= 2");
    }
    if (!(box.lo < box.hi)) {
        throw PreconditionError("probe box must satisfy lo < hi");
    }
    const int n = instance.n;
    const int d = instance.d;
    // Coordinates: t, x, x', y, y', z, z'.
    const std::size_t dims = 1 + 2 * static_cast<std::size_t>(n) + 2 + 2 * static_cast<std::size_t>(d);
    QuasiRandom qr(dims, seed);
    const double width = box.hi - box.lo;

    ValidationReport report;
    Validator validator(instance, report);
    for (int i = 0; i < probe_count; ++i) {
        const auto q = qr.point(static_cast<std::uint64_t>(i));
        std::size_t c = 0;
        Probe p;
        p.t = instance.T * q[c++];
        p.x.resize(n);
        p.x2.resize(n);
        for (int j = 0; j < n; ++j) p.x[j] = box.lo + width * q[c++];
        for (int j = 0; j < n; ++j) p.x2[j] = box.lo + width * q[c++];
        p.y = -10.0 + 20.0 * q[c++];
        p.y2 = -10.0 + 20.0 * q[c++];
        p.z.resize(d);
        p.z2.resize(d);
        for (int j = 0; j < d; ++j) p.z[j] = -10.0 + 20.0 * q[c++];
        for (int j = 0; j < d; ++j) p.z2[j] = -10.0 + 20.0 * q[c++];
        validator.check(p);

        // A nearby pair catches local slope violations that far pairs average out.
        Probe near = p;
        near.x2 = p.x + 1e-3 * width * (p.x2 - p.x).normalized();
        near.y2 = p.y + 1e-3 * (p.y2 - p.y);
        near.z2 = p.z + 1e-3 * (p.z2 - p.z);
        if (!near.x2.allFinite()) near.x2 = p.x;
        validator.check(near);
    }

    auto witness = [](const Violation& v) {
        return std::vector<double>(v.witness.data(), v.witness.data() + v.witness.size());
    };
    std::stable_sort(report.violations.begin(), report.violations.end(),
                     [&](const Violation& a, const Violation& b) {
                         const auto wa = witness(a);
                         const auto wb = witness(b);
                         return std::tie(a.assumption, a.t, wa, a.observed) <
                                std::tie(b.assumption, b.t, wb, b.observed);
                     });
    report.passed = report.violations.empty();
    return report;
}

// ---------------------------------------------------------------------------
// Builtin instances

namespace {

double pos(double a) { return a > 0 ? a : 0.0; }

double param(const ParamMap& p, const char* key) { return p.at(key); }

ParamMap resolve(const std::string& name, const ParamMap& overrides) {
    ParamMap params = builtin_defaults(name);
    for (const auto& [k, v] : overrides) {
        auto it = params.find(k);
        if (it == params.end()) {
            std::string known;
            for (const auto& [kk, _] : params) known += (known.empty() ? "" : ", ") + kk;
            throw ConfigError("instance '" + name + "' has no parameter '" + k + "' (known: " + known + ")");
        }
        it->second = v;
    }
    if (params.at("T") <= 0) {
        throw ConfigError("instance '" + name + "': horizon T must be positive");
    }
    return params;
}

Matrix constant_matrix(int rows, int cols, double value) { return Matrix::Constant(rows, cols, value); }

GameInstance american_put(const ParamMap& p) {
    const double r = param(p, "r");
    const double sigma = param(p, "sigma");
    const double strike = param(p, "strike");
    Coefficients c;
    c.drift = [r](double, const Vector& x, const Vector&, const Vector&) -> Vector { return r * x; };
    c.diffusion = [sigma](double, const Vector& x, const Vector&, const Vector&) -> Matrix {
        return constant_matrix(1, 1, sigma * x[0]);
    };
    c.driver = [r](double, const Vector&, double y, const Vector&, const Vector&, const Vector&) {
        return -r * y;
    };
    c.terminal = [strike](const Vector& x) { return pos(strike - x[0]); };
    c.obstacle = [strike](double, const Vector& x) { return pos(strike - x[0]); };
    c.declared_lipschitz = std::max({1.0, std::abs(r), std::abs(sigma)});
    c.declared_growth = std::max({1.0, strike, std::abs(r), std::abs(sigma)});
    return GameInstance{1, 1, param(p, "T"), std::move(c), ControlGrid::scalar({0.0}, "u"),
                        ControlGrid::scalar({0.0}, "v"), "american_put", p};
}

GameInstance lemma45(const ParamMap& p) {
    const double C = param(p, "C");
    const double theta = param(p, "theta");
    const double rho = param(p, "rho");
    if (C <= 0) throw ConfigError("lemma45: C must be positive");
    Coefficients c;
    c.drift = [](double, const Vector&, const Vector&, const Vector&) -> Vector { return Vector::Zero(1); };
    c.diffusion = [](double, const Vector&, const Vector&, const Vector&) -> Matrix {
        return Matrix::Zero(1, 1);
    };
    c.driver = [C, theta](double, const Vector&, double y, const Vector& z, const Vector&, const Vector&) {
        return C * (std::abs(y) + z.norm()) - 0.5 * theta;
    };
    c.terminal = [](const Vector&) { return 0.0; };
    c.obstacle = [rho](double, const Vector&) { return -rho; };
    c.declared_lipschitz = C;
    c.declared_growth = std::max({1.0, 0.5 * std::abs(theta), std::abs(rho)});
    return GameInstance{1, 1, param(p, "T"), std::move(c), ControlGrid::scalar({0.0}, "u"),
                        ControlGrid::scalar({0.0}, "v"), "lemma45", p};
}

GameInstance minimax_gap(const ParamMap& p) {
    const double sigma = param(p, "sigma");
    const double T = param(p, "T");
    Coefficients c;
    c.drift = [](double, const Vector&, const Vector&, const Vector&) -> Vector { return Vector::Zero(1); };
    c.diffusion = [sigma](double, const Vector&, const Vector&, const Vector&) -> Matrix {
        return constant_matrix(1, 1, sigma);
    };
    c.driver = [](double, const Vector&, double, const Vector&, const Vector& u, const Vector& v) {
        return u.dot(v);
    };
    c.terminal = [](const Vector& x) { return -0.5 * std::abs(x[0]); };
    c.obstacle = [T](double t, const Vector& x) { return -0.5 * std::abs(x[0]) - (T - t); };
    c.declared_lipschitz = std::max(1.0, std::abs(sigma));
    c.declared_growth = std::max({1.0, T, std::abs(sigma)});
    return GameInstance{1, 1, T, std::move(c), ControlGrid::scalar({-1.0, 1.0}, "u"),
                        ControlGrid::scalar({-1.0, 1.0}, "v"), "minimax_gap", p};
}

GameInstance no_obstacle_linear(const ParamMap& p) {
    const double c0 = param(p, "c0");
    const double c1 = param(p, "c1");
    const double sigma = param(p, "sigma");
    const double T = param(p, "T");
    const double barrier = c1 - 1.0 - std::abs(c0) * T;
    Coefficients c;
    c.drift = [](double, const Vector&, const Vector&, const Vector&) -> Vector { return Vector::Zero(1); };
    c.diffusion = [sigma](double, const Vector&, const Vector&, const Vector&) -> Matrix {
        return constant_matrix(1, 1, sigma);
    };
    c.driver = [c0](double, const Vector&, double, const Vector&, const Vector&, const Vector&) { return c0; };
    c.terminal = [c1](const Vector&) { return c1; };
    c.obstacle = [barrier](double, const Vector&) { return barrier; };
    c.declared_lipschitz = std::max(1.0, std::abs(sigma));
    c.declared_growth = std::max({1.0, std::abs(c0), std::abs(c1), std::abs(barrier), std::abs(sigma)});
    return GameInstance{1, 1, T, std::move(c), ControlGrid::scalar({0.0}, "u"),
                        ControlGrid::scalar({0.0}, "v"), "no_obstacle_linear", p};
}

GameInstance deterministic_stop(const ParamMap& p) {
    const double T = param(p, "T");
    Coefficients c;
    c.drift = [](double, const Vector&, const Vector&, const Vector&) -> Vector { return Vector::Zero(1); };
    c.diffusion = [](double, const Vector&, const Vector&, const Vector&) -> Matrix {
        return Matrix::Zero(1, 1);
    };
    c.driver = [](double, const Vector&, double, const Vector&, const Vector&, const Vector&) { return 0.0; };
    c.terminal = [](const Vector&) { return 0.0; };
    c.obstacle = [T](double t, const Vector&) { return T - t; };
    c.declared_lipschitz = 1.0;
    c.declared_growth = std::max(1.0, T);
    return GameInstance{1, 1, T, std::move(c), ControlGrid::scalar({0.0}, "u"),
                        ControlGrid::scalar({0.0}, "v"), "deterministic_stop", p};
}

}  // namespace

const std::vector<std::string>& builtin_instance_names() {
    static const std::vector<std::string> names = {"american_put", "lemma45", "minimax_gap",
                                                   "no_obstacle_linear", "deterministic_stop"};
    return names;
}

ParamMap builtin_defaults(const std::string& name) {
    if (name == "american_put") return {{"r", 0.05}, {"sigma", 0.2}, {"strike", 100.0}, {"T", 1.0}};
    if (name == "lemma45") return {{"C", 1.0}, {"theta", 1.0}, {"rho", 1.0}, {"T", 1.0}};
    if (name == "minimax_gap") return {{"sigma", 0.5}, {"T", 1.0}};
    if (name == "no_obstacle_linear") return {{"c0", 1.0}, {"c1", 0.0}, {"sigma", 0.3}, {"T", 1.0}};
    if (name == "deterministic_stop") return {{"T", 1.0}};
    std::string valid;
    for (const auto& n : builtin_instance_names()) valid += (valid.empty() ? "" : ", ") + n;
    throw NotFoundError("unknown instance '" + name + "'; valid names: " + valid);
}

GameInstance builtin_instance(const std::string& name, const ParamMap& overrides) {
    const ParamMap p = resolve(name, overrides);
    if (name == "american_put") return american_put(p);
    if (name == "lemma45") return lemma45(p);
    if (name == "minimax_gap") return minimax_gap(p);
    if (name == "no_obstacle_linear") return no_obstacle_linear(p);
    return deterministic_stop(p);
}

GameInstance with_control_grids(GameInstance instance, ControlGrid u_grid, ControlGrid v_grid) {
    instance.u_grid = std::move(u_grid);
    instance.v_grid = std::move(v_grid);
    return instance;
}

}  // namespace rbsde
