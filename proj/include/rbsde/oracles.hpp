#pragma once

namespace rbsde {

/// Cox-Ross-Rubinstein binomial tree for an American put. Independent of the
/// PDE and BSDE solvers; used as the external reference for american_put.
double crr_american_put(double spot, double strike, double rate, double volatility, double maturity, int steps);

/// Explicit solution of the reflected BSDE
///   -dY = (C(|Y| + |Z|) - theta/2) ds + dK - Z dB,  Y_{end} = 0,  Y >= -rho
/// on [s, end] while the obstacle stays slack:
///   Y_s = -(theta / 2C) (1 - exp(C (s - end))).
double lemma45_closed_form(double C, double theta, double s, double end);

}  // namespace rbsde
