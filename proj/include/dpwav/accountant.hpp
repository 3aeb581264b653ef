#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace dpwav::rdp {

// One subsampled-Gaussian invocation: Poisson sampling probability q and the
// noise standard deviation expressed in units of sensitivity.
struct MechanismParams {
  double q = 1.0;
  double noise_multiplier = 1.0;
};

// Accumulated RDP over a fixed grid of orders. Ledgers are values;
// composition returns a new ledger.
struct RdpLedger {
  std::vector<double> orders;
  std::vector<double> eps_rdp;
  int steps = 0;

  explicit RdpLedger(std::vector<double> order_grid);
};

// Default order grid: integers 2..64 plus {128, 256}.
std::vector<double> default_orders();

// RDP of the plain Gaussian mechanism: alpha / (2 sigma^2).
double rdp_gaussian(double noise_multiplier, double alpha);

// RDP of the Poisson-subsampled Gaussian mechanism at integer order alpha,
// via the binomial-expansion bound
//   log( sum_{k=0..alpha} C(alpha,k) (1-q)^(alpha-k) q^k e^{k(k-1)/(2 sigma^2)} ) / (alpha-1),
// evaluated in log-space. q = 1 reduces to the plain mechanism (any alpha);
// q = 0 costs nothing.
double rdp_subsampled_gaussian(const MechanismParams& p, double alpha);

// Adds `steps` invocations of the mechanism to every order.
RdpLedger compose(const RdpLedger& ledger, const MechanismParams& p, int steps);

// Converts to (epsilon, delta): minimizes eps_rdp(alpha) + log(1/delta)/(alpha-1)
// by brute-force scan over the whole grid. Returns epsilon and the
// minimizing order.
std::pair<double, double> to_epsilon(const RdpLedger& ledger, double delta);

// Vanilla-equivalent noise multiplier for accounting a wavelet-scheme step:
// sigma_haar * sqrt((2 + log2(m)) / 2).
double effective_noise_multiplier(double sigma_haar, std::size_t m);

} // namespace dpwav::rdp
