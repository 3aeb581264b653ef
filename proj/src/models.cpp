#include "dpwav/models.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace dpwav::models {

namespace {

std::string weight_name(std::size_t i) { return "fc" + std::to_string(i) + ".weight"; }
std::string bias_name(std::size_t i) { return "fc" + std::to_string(i) + ".bias"; }

double log_sum_exp(const std::vector<double>& z) {
  double hi = *std::max_element(z.begin(), z.end());
  double acc = 0.0;
  for (double v : z) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

// z = W x + b with W row-major (out x in).
void affine(const std::vector<double>& w, const std::vector<double>& b,
            std::span<const double> x, std::vector<double>& z) {
  std::size_t out = b.size();
  std::size_t in = x.size();
  z.resize(out);
  for (std::size_t r = 0; r < out; ++r) {
    double acc = b[r];
    const double* row = &w[r * in];
    for (std::size_t c = 0; c < in; ++c) acc += row[c] * x[c];
    z[r] = acc;
  }
}

} // namespace

Model make_logistic(std::size_t input_dim, std::size_t classes) {
  return make_mlp({input_dim, classes});
}

Model make_mlp(const std::vector<std::size_t>& dims) {
  if (dims.size() < 2) throw std::invalid_argument("model needs input and output dims");
  for (std::size_t d : dims)
    if (d == 0) throw std::invalid_argument("zero-sized layer");
  Model m;
  m.dims = dims;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    m.params.layers.push_back({weight_name(i), std::vector<double>(dims[i + 1] * dims[i], 0.0)});
    m.params.layers.push_back({bias_name(i), std::vector<double>(dims[i + 1], 0.0)});
  }
  return m;
}

void init_params(Model& model, Rng& rng) {
  for (std::size_t i = 0; i + 1 < model.dims.size(); ++i) {
    double bound = std::sqrt(6.0 / static_cast<double>(model.dims[i]));
    for (double& w : model.params.layers[2 * i].values)
      w = bound * (2.0 * uniform01(rng) - 1.0);
    for (double& b : model.params.layers[2 * i + 1].values) b = 0.0;
  }
}

std::vector<double> forward(const Model& model, std::span<const double> x) {
  if (x.size() != model.dims.front()) throw std::invalid_argument("input dimension mismatch");
  std::vector<double> cur(x.begin(), x.end());
  std::vector<double> next;
  std::size_t layer_count = model.dims.size() - 1;
  for (std::size_t i = 0; i < layer_count; ++i) {
    affine(model.params.layers[2 * i].values, model.params.layers[2 * i + 1].values, cur, next);
    if (i + 1 < layer_count)
      for (double& v : next) v = v > 0.0 ? v : 0.0;
    cur.swap(next);
  }
  return cur;
}

std::pair<double, LayeredVector> loss_and_gradient(const Model& model,
                                                   std::span<const double> x, int label) {
  if (x.size() != model.dims.front()) throw std::invalid_argument("input dimension mismatch");
  std::size_t layer_count = model.dims.size() - 1;
  if (label < 0 || static_cast<std::size_t>(label) >= model.dims.back())
    throw std::invalid_argument("label out of range");

  // Forward pass keeping pre- and post-activation values per layer.
  std::vector<std::vector<double>> activations(layer_count + 1);
  std::vector<std::vector<double>> pre(layer_count);
  activations[0].assign(x.begin(), x.end());
  for (std::size_t i = 0; i < layer_count; ++i) {
    affine(model.params.layers[2 * i].values, model.params.layers[2 * i + 1].values,
           activations[i], pre[i]);
    activations[i + 1] = pre[i];
    if (i + 1 < layer_count)
      for (double& v : activations[i + 1]) v = v > 0.0 ? v : 0.0;
  }

  const std::vector<double>& logits = activations[layer_count];
  double lse = log_sum_exp(logits);
  double loss = lse - logits[static_cast<std::size_t>(label)];

  LayeredVector grad = LayeredVector::zeros_like(model.params);

  // dL/dlogits = softmax - onehot
  std::vector<double> delta(logits.size());
  for (std::size_t j = 0; j < logits.size(); ++j)
    delta[j] = std::exp(logits[j] - lse) - (static_cast<int>(j) == label ? 1.0 : 0.0);

  for (std::size_t i = layer_count; i-- > 0;) {
    const std::vector<double>& input = activations[i];
    std::vector<double>& dw = grad.layers[2 * i].values;
    std::vector<double>& db = grad.layers[2 * i + 1].values;
    std::size_t out = db.size();
    std::size_t in = input.size();
    for (std::size_t r = 0; r < out; ++r) {
      db[r] = delta[r];
      double* dw_row = &dw[r * in];
      for (std::size_t c = 0; c < in; ++c) dw_row[c] = delta[r] * input[c];
    }
    if (i == 0) break;
    const std::vector<double>& w = model.params.layers[2 * i].values;
    std::vector<double> prev_delta(in, 0.0);
    for (std::size_t r = 0; r < out; ++r) {
      const double* w_row = &w[r * in];
      for (std::size_t c = 0; c < in; ++c) prev_delta[c] += w_row[c] * delta[r];
    }
    // ReLU subgradient, zero at zero.
    for (std::size_t c = 0; c < in; ++c)
      if (pre[i - 1][c] <= 0.0) prev_delta[c] = 0.0;
    delta.swap(prev_delta);
  }
  return {loss, std::move(grad)};
}

std::vector<LayeredVector> per_example_gradients(const Model& model,
                                                 const data::Dataset& batch,
                                                 const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw std::invalid_argument("empty batch");
  std::vector<LayeredVector> grads;
  grads.reserve(indices.size());
  for (std::size_t idx : indices) {
    if (idx >= batch.size()) throw std::invalid_argument("example index out of range");
    grads.push_back(loss_and_gradient(model, batch.row(idx), batch.labels[idx]).second);
  }
  return grads;
}

OptimizerState OptimizerState::sgd(double lr) {
  OptimizerState s;
  s.rule = Rule::Sgd;
  s.learning_rate = lr;
  return s;
}

OptimizerState OptimizerState::adam(double lr, double beta1, double beta2, double eps) {
  OptimizerState s;
  s.rule = Rule::Adam;
  s.learning_rate = lr;
  s.beta1 = beta1;
  s.beta2 = beta2;
  s.eps = eps;
  return s;
}

OptimizerState OptimizerState::adagrad(double lr, double eps) {
  OptimizerState s;
  s.rule = Rule::AdaGrad;
  s.learning_rate = lr;
  s.eps = eps;
  return s;
}

void apply_update(LayeredVector& params, OptimizerState& state, const LayeredVector& gradient) {
  if (!params.same_shape(gradient)) throw std::invalid_argument("gradient shape mismatch");

  switch (state.rule) {
    case OptimizerState::Rule::Sgd:
      params.axpy(-state.learning_rate, gradient);
      ++state.step;
      return;
    case OptimizerState::Rule::Adam: {
      if (state.first_moment.layers.empty()) {
        state.first_moment = LayeredVector::zeros_like(params);
        state.second_moment = LayeredVector::zeros_like(params);
      }
      ++state.step;
      double bc1 = 1.0 - std::pow(state.beta1, state.step);
      double bc2 = 1.0 - std::pow(state.beta2, state.step);
      for (std::size_t i = 0; i < params.layers.size(); ++i) {
        auto& p = params.layers[i].values;
        auto& m = state.first_moment.layers[i].values;
        auto& v = state.second_moment.layers[i].values;
        const auto& g = gradient.layers[i].values;
        for (std::size_t j = 0; j < p.size(); ++j) {
          m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
          v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
          double m_hat = m[j] / bc1;
          double v_hat = v[j] / bc2;
          p[j] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.eps);
        }
      }
      return;
    }
    case OptimizerState::Rule::AdaGrad: {
      if (state.second_moment.layers.empty())
        state.second_moment = LayeredVector::zeros_like(params);
      ++state.step;
      for (std::size_t i = 0; i < params.layers.size(); ++i) {
        auto& p = params.layers[i].values;
        auto& acc = state.second_moment.layers[i].values;
        const auto& g = gradient.layers[i].values;
        for (std::size_t j = 0; j < p.size(); ++j) {
          acc[j] += g[j] * g[j];
          p[j] -= state.learning_rate * g[j] / (std::sqrt(acc[j]) + state.eps);
        }
      }
      return;
    }
  }
}

std::pair<double, double> evaluate(const Model& model, const data::Dataset& dataset) {
  if (dataset.size() == 0) throw std::invalid_argument("empty dataset");
  double loss_sum = 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    std::vector<double> logits = forward(model, dataset.row(i));
    double lse = log_sum_exp(logits);
    loss_sum += lse - logits[static_cast<std::size_t>(dataset.labels[i])];
    std::size_t argmax = 0;
    for (std::size_t j = 1; j < logits.size(); ++j)
      if (logits[j] > logits[argmax]) argmax = j;
    if (static_cast<int>(argmax) == dataset.labels[i]) ++correct;
  }
  return {loss_sum / static_cast<double>(dataset.size()),
          static_cast<double>(correct) / static_cast<double>(dataset.size())};
}

} // namespace dpwav::models
