#include "dpwav/noise.hpp"

#include <stdexcept>

#include "dpwav/clipping.hpp"
#include "dpwav/haar.hpp"

namespace dpwav::mech {

std::vector<double> gaussian_noise(std::size_t len, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("negative noise scale");
  std::vector<double> out(len, 0.0);
  if (sigma == 0.0) return out;
  for (double& x : out) x = sigma * standard_normal(rng);
  return out;
}

// Adds N(0, (scale/W_j)^2) to every coefficient of d in place.
static void add_weighted_coefficient_noise(haar::WaveletDecomposition& d, double scale,
                                           Rng& rng) {
  if (scale == 0.0) return;
  std::vector<double> weights = haar::haar_weights(d.m);
  for (std::size_t j = 0; j < d.m; ++j)
    d.coeffs[j] += (scale / weights[j]) * standard_normal(rng);
}

std::vector<double> wavelet_noise(const std::vector<double>& v, double sigma, Rng& rng) {
  if (sigma < 0.0) throw std::invalid_argument("negative noise scale");
  haar::WaveletDecomposition d = haar::haar_forward(v);
  add_weighted_coefficient_noise(d, sigma, rng);
  return haar::haar_inverse(d);
}

std::vector<double> wavelet_noise_clipped(const std::vector<double>& v, double c,
                                          double sigma, Rng& rng) {
  if (!(c > 0.0)) throw std::invalid_argument("clipping norm must be positive");
  if (sigma < 0.0) throw std::invalid_argument("negative noise scale");
  haar::WaveletDecomposition d = haar::haar_forward(v);
  d.coeffs = clip_flat(d.coeffs, c);
  // sigma == 0 short-circuits before the product so c = inf cannot NaN.
  add_weighted_coefficient_noise(d, sigma == 0.0 ? 0.0 : sigma * c, rng);
  return haar::haar_inverse(d);
}

} // namespace dpwav::mech
