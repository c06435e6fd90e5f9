#include "rbsde/oracles.hpp"

#include "rbsde/common.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace rbsde {

double crr_american_put(double spot, double strike, double rate, double volatility, double maturity, int steps) {
    if (steps < 1 || !(volatility > 0) || !(maturity > 0)) {
        throw PreconditionError("binomial tree needs steps >= 1, volatility > 0 and maturity > 0");
    }
    const double dt = maturity / steps;
    const double up = std::exp(volatility * std::sqrt(dt));
    const double down = 1.0 / up;
    const double p = (std::exp(rate * dt) - down) / (up - down);
    const double disc = std::exp(-rate * dt);
    if (!(p > 0 && p < 1)) throw PreconditionError("binomial tree probability outside (0, 1)");

    std::vector<double> values(steps + 1);
    for (int j = 0; j <= steps; ++j) {
        const double s = spot * std::pow(up, steps - j) * std::pow(down, j);
        values[j] = std::max(strike - s, 0.0);
    }
    for (int i = steps - 1; i >= 0; --i) {
        for (int j = 0; j <= i; ++j) {
            const double s = spot * std::pow(up, i - j) * std::pow(down, j);
            const double cont = disc * (p * values[j] + (1 - p) * values[j + 1]);
            values[j] = std::max(cont, strike - s);
        }
    }
    return values[0];
}

double lemma45_closed_form(double C, double theta, double s, double end) {
    return -(theta / (2 * C)) * (1.0 - std::exp(C * (s - end)));
}

}  // namespace rbsde
