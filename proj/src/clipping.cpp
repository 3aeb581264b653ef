#include "dpwav/clipping.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dpwav::mech {

ClippingPolicy ClippingPolicy::flat(double c) {
  if (!(c > 0.0)) throw std::invalid_argument("clipping norm must be positive");
  ClippingPolicy p;
  p.kind = Kind::Flat;
  p.c = c;
  return p;
}

ClippingPolicy ClippingPolicy::per_layer_bounds(std::vector<double> bounds) {
  if (bounds.empty()) throw std::invalid_argument("per-layer bounds must be non-empty");
  for (double c : bounds)
    if (!(c > 0.0)) throw std::invalid_argument("clipping norm must be positive");
  ClippingPolicy p;
  p.kind = Kind::PerLayer;
  p.per_layer = std::move(bounds);
  return p;
}

static void scale_layer(std::vector<double>& values, double norm, double bound) {
  if (norm <= bound) return; // max(1, norm/bound) = 1: unchanged
  double s = bound / norm;
  for (double& v : values) v *= s;
}

LayeredVector clip(const LayeredVector& v, const ClippingPolicy& policy) {
  LayeredVector out = v;
  if (policy.kind == ClippingPolicy::Kind::Flat) {
    double norm = v.l2_norm();
    if (norm > policy.c) {
      double s = policy.c / norm;
      out *= s;
    }
    return out;
  }
  if (policy.per_layer.size() != v.layers.size())
    throw std::invalid_argument("per-layer clipping bounds do not match layer count");
  for (std::size_t j = 0; j < out.layers.size(); ++j) {
    double ss = 0.0;
    for (double x : out.layers[j].values) ss += x * x;
    scale_layer(out.layers[j].values, std::sqrt(ss), policy.per_layer[j]);
  }
  return out;
}

std::vector<double> clip_flat(const std::vector<double>& v, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("clipping norm must be positive");
  double ss = 0.0;
  for (double x : v) ss += x * x;
  double norm = std::sqrt(ss);
  if (norm <= c) return v;
  std::vector<double> out(v);
  double s = c / norm;
  for (double& x : out) x *= s;
  return out;
}

double sensitivity(const ClippingPolicy& policy) {
  if (policy.kind == ClippingPolicy::Kind::Flat) return policy.c;
  double ss = 0.0;
  for (double c : policy.per_layer) ss += c * c;
  return std::sqrt(ss);
}

double median_clip_estimate(const std::vector<double>& norms) {
  if (norms.empty()) throw std::invalid_argument("median of empty sample");
  std::vector<double> sorted(norms);
  std::sort(sorted.begin(), sorted.end());
  std::size_t n = sorted.size();
  return n % 2 == 1 ? sorted[n / 2] : sorted[n / 2 - 1];
}

} // namespace dpwav::mech
