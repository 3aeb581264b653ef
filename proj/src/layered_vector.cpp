#include "dpwav/layered_vector.hpp"

#include <cmath>
#include <stdexcept>

namespace dpwav {

std::size_t LayeredVector::total_size() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.values.size();
  return n;
}

double LayeredVector::l2_norm() const {
  double ss = 0.0;
  for (const auto& l : layers)
    for (double v : l.values) ss += v * v;
  return std::sqrt(ss);
}

std::vector<double> LayeredVector::flatten() const {
  std::vector<double> flat;
  flat.reserve(total_size());
  for (const auto& l : layers) flat.insert(flat.end(), l.values.begin(), l.values.end());
  return flat;
}

LayeredVector LayeredVector::unflatten(const std::vector<double>& flat) const {
  if (flat.size() != total_size())
    throw std::invalid_argument("unflatten: flat length does not match layer shapes");
  LayeredVector out;
  out.layers.reserve(layers.size());
  std::size_t pos = 0;
  for (const auto& l : layers) {
    LayeredVector::Layer seg;
    seg.name = l.name;
    seg.values.assign(flat.begin() + pos, flat.begin() + pos + l.values.size());
    pos += l.values.size();
    out.layers.push_back(std::move(seg));
  }
  return out;
}

bool LayeredVector::same_shape(const LayeredVector& other) const {
  if (layers.size() != other.layers.size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i].name != other.layers[i].name) return false;
    if (layers[i].values.size() != other.layers[i].values.size()) return false;
  }
  return true;
}

LayeredVector& LayeredVector::operator+=(const LayeredVector& other) {
  if (!same_shape(other)) throw std::invalid_argument("LayeredVector shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i)
    for (std::size_t j = 0; j < layers[i].values.size(); ++j)
      layers[i].values[j] += other.layers[i].values[j];
  return *this;
}

LayeredVector& LayeredVector::operator*=(double s) {
  for (auto& l : layers)
    for (double& v : l.values) v *= s;
  return *this;
}

void LayeredVector::axpy(double s, const LayeredVector& other) {
  if (!same_shape(other)) throw std::invalid_argument("LayeredVector shape mismatch");
  for (std::size_t i = 0; i < layers.size(); ++i)
    for (std::size_t j = 0; j < layers[i].values.size(); ++j)
      layers[i].values[j] += s * other.layers[i].values[j];
}

void LayeredVector::fill(double value) {
  for (auto& l : layers)
    for (double& v : l.values) v = value;
}

LayeredVector LayeredVector::zeros_like(const LayeredVector& shape) {
  LayeredVector out = shape;
  out.fill(0.0);
  return out;
}

} // namespace dpwav
