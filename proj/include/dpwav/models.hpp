#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "dpwav/data.hpp"
#include "dpwav/layered_vector.hpp"
#include "dpwav/rng.hpp"

namespace dpwav::models {

// Fully connected classifier with ReLU hidden activations and a softmax
// cross-entropy head. dims = [input, hidden..., classes]; no hidden entries
// gives multinomial logistic regression. Parameters live in a LayeredVector
// with layers "fcI.weight" (out x in, row-major) and "fcI.bias".
struct Model {
  std::vector<std::size_t> dims;
  LayeredVector params;
};

Model make_logistic(std::size_t input_dim, std::size_t classes);
Model make_mlp(const std::vector<std::size_t>& dims);

// Kaiming-uniform fan-in weight init, zero biases. Deterministic per seed.
void init_params(Model& model, Rng& rng);

std::vector<double> forward(const Model& model, std::span<const double> x);

// Cross-entropy loss (via log-sum-exp) and its gradient for one example.
std::pair<double, LayeredVector> loss_and_gradient(const Model& model,
                                                   std::span<const double> x, int label);

// One independent gradient per example; no cross-example averaging.
std::vector<LayeredVector> per_example_gradients(const Model& model,
                                                 const data::Dataset& batch,
                                                 const std::vector<std::size_t>& indices);

struct OptimizerState {
  enum class Rule { Sgd, Adam, AdaGrad };
  Rule rule = Rule::Sgd;
  double learning_rate = 0.1;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int step = 0;
  LayeredVector first_moment;  // Adam
  LayeredVector second_moment; // Adam / AdaGrad accumulator

  static OptimizerState sgd(double lr);
  static OptimizerState adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                             double eps = 1e-8);
  static OptimizerState adagrad(double lr, double eps = 1e-8);
};

// In-place descent step; moment vectors are shaped on first use.
void apply_update(LayeredVector& params, OptimizerState& state, const LayeredVector& gradient);

// Mean cross-entropy and top-1 accuracy (ties resolve to the lowest class).
std::pair<double, double> evaluate(const Model& model, const data::Dataset& dataset);

} // namespace dpwav::models
