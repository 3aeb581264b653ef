#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace dpwav {

// A model's parameters or gradients as an ordered list of named flat
// segments. Flattening order is the declared layer order, which is fixed
// per run and recorded in run manifests.
struct LayeredVector {
  struct Layer {
    std::string name;
    std::vector<double> values;
  };

  std::vector<Layer> layers;

  std::size_t total_size() const;
  double l2_norm() const;

  std::vector<double> flatten() const;
  // Rebuilds a LayeredVector with this one's layer names/shapes from a flat
  // vector. Throws if the flat length does not match total_size().
  LayeredVector unflatten(const std::vector<double>& flat) const;

  bool same_shape(const LayeredVector& other) const;

  LayeredVector& operator+=(const LayeredVector& other);
  LayeredVector& operator*=(double s);
  // this += s * other
  void axpy(double s, const LayeredVector& other);
  void fill(double value);

  static LayeredVector zeros_like(const LayeredVector& shape);
};

} // namespace dpwav
