#pragma once

#include <vector>

#include "dpwav/rng.hpp"

namespace dpwav::mech {

// Gaussian noise scale plus the injection scheme it feeds.
struct NoiseSpec {
  enum class Scheme { Standard, Wavelet };
  double sigma = 0.0; // standard deviation, absolute units
  Scheme scheme = Scheme::Standard;
};

// i.i.d. N(0, sigma^2) samples. sigma = 0 returns zeros without consuming
// the generator, so disabled-noise runs share RNG streams with their
// noised counterparts.
std::vector<double> gaussian_noise(std::size_t len, double sigma, Rng& rng);

// Forward Haar transform of v (zero-padded), independent N(0, (sigma/W)^2)
// on every coefficient with W the per-coefficient Haar weight, inverse
// transform, truncation to the original length. Unbiased in expectation.
std::vector<double> wavelet_noise(const std::vector<double>& v, double sigma, Rng& rng);

// Same pipeline with the full coefficient vector first clipped to L2 norm
// c, and noise scaled to the clipping norm: N(0, (sigma*c/W)^2).
std::vector<double> wavelet_noise_clipped(const std::vector<double>& v, double c,
                                          double sigma, Rng& rng);

} // namespace dpwav::mech
