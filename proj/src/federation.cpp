#include "dpwav/federation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dpwav/haar.hpp"
#include "dpwav/noise.hpp"

namespace dpwav::fed {

std::string mechanism_name(Mechanism m) {
  switch (m) {
    case Mechanism::NonPrivate: return "nonprivate";
    case Mechanism::DpSgd: return "dpsgd";
    case Mechanism::DpSgdWav: return "dpsgd-wav";
    case Mechanism::DpFedAvg: return "dpfedavg";
    case Mechanism::DpFedAvgWav: return "dpfedavg-wav";
  }
  throw std::logic_error("unreachable");
}

Mechanism mechanism_from_name(const std::string& name) {
  if (name == "nonprivate") return Mechanism::NonPrivate;
  if (name == "dpsgd") return Mechanism::DpSgd;
  if (name == "dpsgd-wav") return Mechanism::DpSgdWav;
  if (name == "dpfedavg") return Mechanism::DpFedAvg;
  if (name == "dpfedavg-wav") return Mechanism::DpFedAvgWav;
  throw std::invalid_argument("unknown mechanism: " + name);
}

models::OptimizerState OptimizerConfig::make() const {
  switch (rule) {
    case models::OptimizerState::Rule::Sgd: return models::OptimizerState::sgd(learning_rate);
    case models::OptimizerState::Rule::Adam: return models::OptimizerState::adam(learning_rate);
    case models::OptimizerState::Rule::AdaGrad:
      return models::OptimizerState::adagrad(learning_rate);
  }
  throw std::logic_error("unreachable");
}

std::vector<ClientDataset> partition_iid(const data::Dataset& dataset,
                                         std::size_t total_clients, std::uint64_t seed) {
  if (total_clients == 0) throw std::invalid_argument("need at least one client");
  if (dataset.size() < total_clients)
    throw std::invalid_argument("fewer examples than clients");

  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  // Fisher-Yates with our own uniform draws for cross-platform determinism.
  for (std::size_t i = order.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    if (j >= i) j = i - 1;
    std::swap(order[i - 1], order[j]);
  }

  std::size_t base = dataset.size() / total_clients;
  std::size_t remainder = dataset.size() % total_clients;

  std::vector<ClientDataset> shards(total_clients);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < total_clients; ++k) {
    std::size_t take = base + (k < remainder ? 1 : 0);
    ClientDataset shard;
    shard.examples.dim = dataset.dim;
    shard.examples.class_count = dataset.class_count;
    shard.examples.features.reserve(take * dataset.dim);
    shard.examples.labels.reserve(take);
    for (std::size_t t = 0; t < take; ++t, ++pos) {
      auto row = dataset.row(order[pos]);
      shard.examples.features.insert(shard.examples.features.end(), row.begin(), row.end());
      shard.examples.labels.push_back(dataset.labels[order[pos]]);
    }
    shards[k] = std::move(shard);
  }
  return shards;
}

std::vector<std::size_t> sample_clients(std::size_t total_clients, double q_c, Rng& rng) {
  if (!(q_c > 0.0 && q_c <= 1.0))
    throw std::invalid_argument("client sampling probability must lie in (0,1]");
  std::vector<std::size_t> sampled;
  for (std::size_t k = 0; k < total_clients; ++k)
    if (uniform01(rng) < q_c) sampled.push_back(k);
  return sampled;
}

ResolvedNoise resolve_noise(const FederationConfig& cfg, std::size_t param_count) {
  ResolvedNoise r;
  r.sigma_config = cfg.sigma;
  bool wavelet =
      cfg.mechanism == Mechanism::DpSgdWav || cfg.mechanism == Mechanism::DpFedAvgWav;
  if (!wavelet) {
    r.sigma_haar = 0.0;
    r.sigma_accounting = cfg.sigma;
    r.wavelet_m = 0;
    return r;
  }
  r.wavelet_m = haar::next_power_of_two(param_count);
  double factor =
      std::sqrt((2.0 + static_cast<double>(haar::level_count(r.wavelet_m))) / 2.0);
  if (cfg.sigma == 0.0) {
    r.sigma_haar = 0.0;
    r.sigma_accounting = 0.0;
    return r;
  }
  if (cfg.sigma_is_effective) {
    // Configured value is the vanilla-equivalent multiplier; derive the
    // per-coefficient scale so the accountant sees exactly the configured one.
    r.sigma_haar = cfg.sigma / factor;
    r.sigma_accounting = cfg.sigma;
  } else {
    r.sigma_haar = cfg.sigma;
    r.sigma_accounting = rdp::effective_noise_multiplier(cfg.sigma, r.wavelet_m);
  }
  return r;
}

namespace {

// Poisson lot: include each local example independently with rate
// lot_size / d_k. Consumes exactly d_k draws, so every mechanism sees the
// same stream.
std::vector<std::size_t> sample_lot(std::size_t d_k, std::size_t lot_size, Rng& rng) {
  double q = static_cast<double>(lot_size) / static_cast<double>(d_k);
  std::vector<std::size_t> lot;
  for (std::size_t i = 0; i < d_k; ++i)
    if (uniform01(rng) < q) lot.push_back(i);
  return lot;
}

} // namespace

LayeredVector client_local_train(models::Model model, const ClientDataset& client,
                                 const FederationConfig& cfg, const ResolvedNoise& noise,
                                 Rng& rng) {
  std::size_t d_k = client.cardinality();
  if (cfg.lot_size > d_k) throw std::invalid_argument("lot size exceeds client dataset");

  models::OptimizerState opt = cfg.optimizer.make();
  const mech::ClippingPolicy& policy = cfg.clip.policy;
  double s_f = mech::sensitivity(policy);
  double inv_lot = 1.0 / static_cast<double>(cfg.lot_size);

  for (int n = 0; n < cfg.local_iterations; ++n) {
    std::vector<std::size_t> lot = sample_lot(d_k, cfg.lot_size, rng);
    std::vector<LayeredVector> grads;
    if (!lot.empty()) grads = models::per_example_gradients(model, client.examples, lot);

    LayeredVector estimate;
    if (cfg.mechanism == Mechanism::DpSgdWav) {
      // Per-example transform and coefficient clipping, one noise draw per
      // lot on the summed coefficients, then reconstruction.
      std::size_t m = noise.wavelet_m;
      std::vector<double> coeff_sum(m, 0.0);
      std::size_t original_len = model.params.total_size();
      for (const auto& g : grads) {
        haar::WaveletDecomposition d = haar::haar_forward(g.flatten());
        std::vector<double> clipped = mech::clip_flat(d.coeffs, policy.c);
        for (std::size_t j = 0; j < m; ++j) coeff_sum[j] += clipped[j];
      }
      if (noise.sigma_haar > 0.0) {
        std::vector<double> weights = haar::haar_weights(m);
        double scale = noise.sigma_haar * policy.c;
        for (std::size_t j = 0; j < m; ++j)
          coeff_sum[j] += (scale / weights[j]) * standard_normal(rng);
      }
      haar::WaveletDecomposition sum_d{std::move(coeff_sum), m, original_len};
      estimate = model.params.unflatten(haar::haar_inverse(sum_d));
      estimate *= inv_lot;
    } else {
      LayeredVector sum = LayeredVector::zeros_like(model.params);
      bool clip_examples = cfg.mechanism != Mechanism::NonPrivate;
      for (const auto& g : grads) sum += clip_examples ? mech::clip(g, policy) : g;
      if (cfg.mechanism == Mechanism::DpSgd && cfg.sigma > 0.0) {
        std::vector<double> flat = sum.flatten();
        std::vector<double> z = mech::gaussian_noise(flat.size(), cfg.sigma * s_f, rng);
        for (std::size_t j = 0; j < flat.size(); ++j) flat[j] += z[j];
        sum = sum.unflatten(flat);
      }
      estimate = std::move(sum);
      estimate *= inv_lot;
    }
    models::apply_update(model.params, opt, estimate);
  }
  return model.params;
}

LayeredVector server_aggregate(const std::vector<std::pair<std::size_t, LayeredVector>>& updates,
                               const std::vector<std::size_t>& client_sizes, double q_c) {
  if (updates.empty()) throw std::invalid_argument("no client updates to aggregate");
  std::vector<const std::pair<std::size_t, LayeredVector>*> sorted;
  sorted.reserve(updates.size());
  for (const auto& u : updates) sorted.push_back(&u);
  std::sort(sorted.begin(), sorted.end(),
            [](const auto* a, const auto* b) { return a->first < b->first; });

  double d_total = 0.0;
  for (std::size_t s : client_sizes) d_total += static_cast<double>(s);

  LayeredVector agg = LayeredVector::zeros_like(sorted.front()->second);
  for (const auto* u : sorted) {
    if (u->first >= client_sizes.size()) throw std::invalid_argument("client index out of range");
    double w = static_cast<double>(client_sizes[u->first]) / (q_c * d_total);
    agg.axpy(w, u->second);
  }
  return agg;
}

LayeredVector server_noise(const LayeredVector& w, const FederationConfig& cfg,
                           const ResolvedNoise& noise, double sensitivity,
                           std::size_t global_size, Rng& rng) {
  if (cfg.mechanism != Mechanism::DpFedAvg && cfg.mechanism != Mechanism::DpFedAvgWav)
    throw std::invalid_argument("server noise applies to the FedAvg mechanisms only");

  double z = cfg.mechanism == Mechanism::DpFedAvg ? cfg.sigma : noise.sigma_haar;
  if (z == 0.0) return w;
  double sigma_server =
      z * sensitivity / (cfg.client_sampling * static_cast<double>(global_size));

  std::vector<double> flat = w.flatten();
  if (cfg.mechanism == Mechanism::DpFedAvg) {
    std::vector<double> noise_vec = mech::gaussian_noise(flat.size(), sigma_server, rng);
    for (std::size_t j = 0; j < flat.size(); ++j) flat[j] += noise_vec[j];
  } else {
    flat = mech::wavelet_noise(flat, sigma_server, rng);
  }
  return w.unflatten(flat);
}

namespace {

void validate_config(const FederationConfig& cfg, const data::Dataset& train,
                     const std::vector<ClientDataset>& shards) {
  if (cfg.rounds <= 0 || cfg.local_iterations <= 0)
    throw std::invalid_argument("rounds and local iterations must be positive");
  if (cfg.lot_size == 0) throw std::invalid_argument("lot size must be positive");
  if (!(cfg.client_sampling > 0.0 && cfg.client_sampling <= 1.0))
    throw std::invalid_argument("client sampling probability must lie in (0,1]");
  if (cfg.sigma < 0.0) throw std::invalid_argument("noise multiplier must be non-negative");
  if (cfg.model_dims.size() < 2) throw std::invalid_argument("model dims unset");
  if (cfg.model_dims.front() != train.dim)
    throw std::invalid_argument("model input dim does not match dataset");
  if (cfg.model_dims.back() != static_cast<std::size_t>(train.class_count))
    throw std::invalid_argument("model output dim does not match class count");

  std::size_t min_shard = shards.front().cardinality();
  for (const auto& s : shards) min_shard = std::min(min_shard, s.cardinality());
  if (cfg.lot_size > min_shard)
    throw std::invalid_argument("lot size exceeds smallest client dataset");

  if (cfg.mechanism == Mechanism::DpSgdWav &&
      cfg.clip.policy.kind != mech::ClippingPolicy::Kind::Flat)
    throw std::invalid_argument("coefficient-space clipping requires a flat bound");
  if (cfg.sigma > 0.0 && !std::isfinite(mech::sensitivity(cfg.clip.policy)) &&
      cfg.mechanism != Mechanism::NonPrivate)
    throw std::invalid_argument("noise requires a finite clipping bound");
}

// Median warm-up: per-example norms at the initial parameters over a public
// proxy prefix, in the space the mechanism clips in.
double estimate_median_clip(const models::Model& model, const data::Dataset& train,
                            std::size_t proxy_count, bool coefficient_space) {
  std::size_t n = std::min(proxy_count, train.size());
  if (n == 0) throw std::invalid_argument("empty clip proxy sample");
  std::vector<double> norms;
  norms.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    LayeredVector g = models::loss_and_gradient(model, train.row(i), train.labels[i]).second;
    if (coefficient_space) {
      haar::WaveletDecomposition d = haar::haar_forward(g.flatten());
      double ss = 0.0;
      for (double c : d.coeffs) ss += c * c;
      norms.push_back(std::sqrt(ss));
    } else {
      norms.push_back(g.l2_norm());
    }
  }
  return mech::median_clip_estimate(norms);
}

} // namespace

std::pair<std::vector<RoundMetrics>, RunInfo> run(const FederationConfig& cfg,
                                                  const data::Dataset& train,
                                                  const data::Dataset& test) {
  std::vector<ClientDataset> shards =
      partition_iid(train, cfg.total_clients, derive_seed(cfg.seed, kStreamPartition));
  validate_config(cfg, train, shards);

  models::Model model = models::make_mlp(cfg.model_dims);
  Rng init_rng(derive_seed(cfg.seed, kStreamInit));
  models::init_params(model, init_rng);

  FederationConfig resolved_cfg = cfg;
  if (cfg.clip.use_median) {
    double c = estimate_median_clip(model, train, cfg.clip.median_proxy_count,
                                    cfg.mechanism == Mechanism::DpSgdWav);
    resolved_cfg.clip.policy = mech::ClippingPolicy::flat(c);
  }

  std::size_t param_count = model.params.total_size();
  ResolvedNoise noise = resolve_noise(resolved_cfg, param_count);
  double s_f = mech::sensitivity(resolved_cfg.clip.policy);

  RunInfo info;
  info.noise = noise;
  info.resolved_clip = resolved_cfg.clip.policy;
  info.sensitivity = s_f;
  info.param_count = param_count;
  for (const auto& l : model.params.layers) info.flatten_order.emplace_back(l.name, l.values.size());

  std::size_t min_shard = shards.front().cardinality();
  std::vector<std::size_t> client_sizes(shards.size());
  for (std::size_t k = 0; k < shards.size(); ++k) {
    client_sizes[k] = shards[k].cardinality();
    min_shard = std::min(min_shard, client_sizes[k]);
  }

  bool lot_level = cfg.mechanism == Mechanism::DpSgd || cfg.mechanism == Mechanism::DpSgdWav;
  bool client_level =
      cfg.mechanism == Mechanism::DpFedAvg || cfg.mechanism == Mechanism::DpFedAvgWav;
  if (cfg.mechanism == Mechanism::NonPrivate) {
    info.accounting = "none";
  } else if (lot_level) {
    // One subsampled-Gaussian invocation per local step; equal i.i.d. shards
    // make the rate uniform across clients (worst case: smallest shard).
    info.accounting = "lot-level";
    info.accounting_q =
        static_cast<double>(cfg.lot_size) / static_cast<double>(min_shard);
    info.accounting_steps_per_round = cfg.local_iterations;
  } else {
    info.accounting = "client-level";
    info.accounting_q = cfg.client_sampling;
    info.accounting_steps_per_round = 1;
  }

  rdp::RdpLedger ledger(rdp::default_orders());
  rdp::MechanismParams charge{info.accounting_q, noise.sigma_accounting};
  bool accountable = cfg.mechanism != Mechanism::NonPrivate && noise.sigma_accounting > 0.0;

  std::vector<RoundMetrics> metrics;
  metrics.reserve(static_cast<std::size_t>(cfg.rounds));
  for (int t = 1; t <= cfg.rounds; ++t) {
    Rng sampling_rng(derive_seed(cfg.seed, kStreamSampling, static_cast<std::uint64_t>(t)));
    std::vector<std::size_t> sampled =
        sample_clients(cfg.total_clients, cfg.client_sampling, sampling_rng);

    std::vector<std::pair<std::size_t, LayeredVector>> updates;
    updates.reserve(sampled.size());
    for (std::size_t k : sampled) {
      Rng client_rng(
          derive_seed(cfg.seed, kStreamClient, static_cast<std::uint64_t>(t), k));
      models::Model local = model;
      updates.emplace_back(
          k, client_local_train(std::move(local), shards[k], resolved_cfg, noise, client_rng));
    }

    // Empty sampled set: skip aggregation, still charge the accountant.
    if (!updates.empty()) {
      LayeredVector agg = server_aggregate(updates, client_sizes, cfg.client_sampling);
      if (client_level) {
        Rng noise_rng(
            derive_seed(cfg.seed, kStreamServerNoise, static_cast<std::uint64_t>(t)));
        agg = server_noise(agg, resolved_cfg, noise, s_f, train.size(), noise_rng);
      }
      model.params = std::move(agg);
    }

    RoundMetrics rm;
    rm.round = t;
    rm.sampled_client_count = static_cast<int>(sampled.size());
    if (cfg.mechanism == Mechanism::NonPrivate) {
      rm.epsilon_spent = 0.0;
    } else if (!accountable) {
      rm.epsilon_spent = std::numeric_limits<double>::infinity();
    } else {
      ledger = rdp::compose(ledger, charge, info.accounting_steps_per_round);
      rm.epsilon_spent = rdp::to_epsilon(ledger, cfg.delta).first;
    }
    auto [train_loss, train_acc] = models::evaluate(model, train);
    (void)train_acc;
    auto [test_loss, test_acc] = models::evaluate(model, test);
    (void)test_loss;
    rm.train_loss = train_loss;
    rm.test_accuracy = test_acc;
    metrics.push_back(rm);
  }
  return {std::move(metrics), std::move(info)};
}

} // namespace dpwav::fed
