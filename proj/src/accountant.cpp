#include "dpwav/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "dpwav/haar.hpp"

namespace dpwav::rdp {

RdpLedger::RdpLedger(std::vector<double> order_grid) : orders(std::move(order_grid)) {
  if (orders.empty()) throw std::invalid_argument("order grid must be non-empty");
  for (double a : orders)
    if (!(a > 1.0)) throw std::invalid_argument("all orders must exceed 1");
  eps_rdp.assign(orders.size(), 0.0);
}

std::vector<double> default_orders() {
  std::vector<double> orders;
  for (int a = 2; a <= 64; ++a) orders.push_back(static_cast<double>(a));
  orders.push_back(128.0);
  orders.push_back(256.0);
  return orders;
}

double rdp_gaussian(double noise_multiplier, double alpha) {
  if (!(noise_multiplier > 0.0)) throw std::invalid_argument("noise multiplier must be positive");
  if (!(alpha > 1.0)) throw std::invalid_argument("order must exceed 1");
  return alpha / (2.0 * noise_multiplier * noise_multiplier);
}

static double log_binomial(int n, int k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

static double log_sum_exp(const std::vector<double>& terms) {
  double hi = -std::numeric_limits<double>::infinity();
  for (double t : terms) hi = std::max(hi, t);
  if (!std::isfinite(hi)) return hi;
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - hi);
  return hi + std::log(acc);
}

double rdp_subsampled_gaussian(const MechanismParams& p, double alpha) {
  if (p.q < 0.0 || p.q > 1.0) throw std::invalid_argument("sampling probability out of [0,1]");
  if (!(p.noise_multiplier > 0.0))
    throw std::invalid_argument("noise multiplier must be positive");
  if (!(alpha > 1.0)) throw std::invalid_argument("order must exceed 1");

  if (p.q == 0.0) return 0.0; // mechanism ignores the data
  if (p.q == 1.0) return rdp_gaussian(p.noise_multiplier, alpha);

  if (alpha != std::floor(alpha))
    throw std::invalid_argument("subsampled RDP requires an integer order");
  int a = static_cast<int>(alpha);

  double log_q = std::log(p.q);
  double log_1mq = std::log1p(-p.q);
  double inv_2s2 = 1.0 / (2.0 * p.noise_multiplier * p.noise_multiplier);

  std::vector<double> terms(a + 1);
  for (int k = 0; k <= a; ++k) {
    double t = log_binomial(a, k);
    if (k > 0) t += k * log_q;
    if (a - k > 0) t += (a - k) * log_1mq;
    t += static_cast<double>(k) * (k - 1.0) * inv_2s2;
    terms[k] = t;
  }
  return log_sum_exp(terms) / (alpha - 1.0);
}

RdpLedger compose(const RdpLedger& ledger, const MechanismParams& p, int steps) {
  if (steps < 0) throw std::invalid_argument("step count must be non-negative");
  RdpLedger out = ledger;
  if (steps == 0) return out;
  for (std::size_t i = 0; i < out.orders.size(); ++i)
    out.eps_rdp[i] += steps * rdp_subsampled_gaussian(p, out.orders[i]);
  out.steps += steps;
  return out;
}

std::pair<double, double> to_epsilon(const RdpLedger& ledger, double delta) {
  if (ledger.orders.empty()) throw std::invalid_argument("empty ledger");
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("delta must lie in (0,1)");

  double log_inv_delta = std::log(1.0 / delta);
  double best_eps = std::numeric_limits<double>::infinity();
  double best_order = ledger.orders.front();
  for (std::size_t i = 0; i < ledger.orders.size(); ++i) {
    double eps = ledger.eps_rdp[i] + log_inv_delta / (ledger.orders[i] - 1.0);
    if (eps < best_eps) {
      best_eps = eps;
      best_order = ledger.orders[i];
    }
  }
  return {best_eps, best_order};
}

double effective_noise_multiplier(double sigma_haar, std::size_t m) {
  if (!(sigma_haar > 0.0)) throw std::invalid_argument("sigma_haar must be positive");
  double levels = static_cast<double>(haar::level_count(m)); // throws unless m = 2^n
  return sigma_haar * std::sqrt((2.0 + levels) / 2.0);
}

} // namespace dpwav::rdp
