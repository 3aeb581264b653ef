#pragma once

#include <vector>

#include "dpwav/layered_vector.hpp"

namespace dpwav::mech {

// L2 clipping applied to per-example gradients before noising. Flat bounds
// the whole concatenated vector; PerLayer bounds each layer separately.
struct ClippingPolicy {
  enum class Kind { Flat, PerLayer };
  Kind kind = Kind::Flat;
  double c = 1.0;                 // Flat bound
  std::vector<double> per_layer;  // PerLayer bounds, one per layer

  static ClippingPolicy flat(double c);
  static ClippingPolicy per_layer_bounds(std::vector<double> bounds);
};

// Scales v by 1/max(1, ||v||/C), per layer for PerLayer policies. Inputs
// already within bound are returned unchanged bit-for-bit.
LayeredVector clip(const LayeredVector& v, const ClippingPolicy& policy);

// Scales a flat vector to L2 norm at most c (used for coefficient-space
// clipping).
std::vector<double> clip_flat(const std::vector<double>& v, double c);

// L2 sensitivity enforced by the policy: C for Flat, sqrt(sum C_j^2) for
// PerLayer (the norm bound of the concatenated clipped vector).
double sensitivity(const ClippingPolicy& policy);

// Median of gradient-norm samples from a warm-up pass; lower of the two
// middle values for even counts. The result is frozen as C for the run.
double median_clip_estimate(const std::vector<double>& norms);

} // namespace dpwav::mech
