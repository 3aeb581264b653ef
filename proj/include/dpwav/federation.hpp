#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpwav/accountant.hpp"
#include "dpwav/clipping.hpp"
#include "dpwav/data.hpp"
#include "dpwav/layered_vector.hpp"
#include "dpwav/models.hpp"
#include "dpwav/rng.hpp"

namespace dpwav::fed {

enum class Mechanism { NonPrivate, DpSgd, DpSgdWav, DpFedAvg, DpFedAvgWav };

std::string mechanism_name(Mechanism m);
Mechanism mechanism_from_name(const std::string& name);

struct OptimizerConfig {
  models::OptimizerState::Rule rule = models::OptimizerState::Rule::Sgd;
  double learning_rate = 0.1;

  models::OptimizerState make() const;
};

// Clipping setup. With use_median the flat bound is estimated once before
// training as the median norm over a public proxy prefix of the training
// set, then frozen for the run.
struct ClipConfig {
  mech::ClippingPolicy policy = mech::ClippingPolicy::flat(1.0);
  bool use_median = false;
  std::size_t median_proxy_count = 64;
};

struct FederationConfig {
  std::size_t total_clients = 10; // K_t
  double client_sampling = 1.0;   // q_c, Poisson inclusion probability
  int rounds = 10;                // T
  int local_iterations = 1;       // N
  std::size_t lot_size = 16;      // L_n
  ClipConfig clip;
  // Noise multiplier z in units of sensitivity. For wavelet mechanisms this
  // is sigma_haar unless sigma_is_effective, in which case it is the
  // vanilla-equivalent multiplier and sigma_haar is derived from the padded
  // coefficient length.
  double sigma = 0.0;
  bool sigma_is_effective = false;
  Mechanism mechanism = Mechanism::NonPrivate;
  OptimizerConfig optimizer;
  double delta = 1e-5;
  std::uint64_t seed = 0;
  std::vector<std::size_t> model_dims; // [input, hidden..., classes]
};

struct ClientDataset {
  data::Dataset examples;
  std::size_t cardinality() const { return examples.size(); } // d_k
};

struct RoundMetrics {
  int round = 0;
  double train_loss = 0.0;
  double test_accuracy = 0.0;
  double epsilon_spent = 0.0; // +inf when z = 0 on a DP mechanism, 0 when non-private
  int sampled_client_count = 0;
};

// Noise parameters resolved against a concrete model size.
struct ResolvedNoise {
  double sigma_config = 0.0;     // as configured
  double sigma_haar = 0.0;       // per-coefficient multiplier (wavelet mechanisms)
  double sigma_accounting = 0.0; // multiplier charged to the accountant
  std::size_t wavelet_m = 0;     // padded coefficient length (0 = no transform)
};

// Everything needed to reproduce the run, recorded into manifests.
struct RunInfo {
  ResolvedNoise noise;
  mech::ClippingPolicy resolved_clip = mech::ClippingPolicy::flat(1.0);
  double sensitivity = 0.0;
  std::string accounting; // "lot-level" | "client-level" | "none"
  double accounting_q = 0.0;
  int accounting_steps_per_round = 0;
  std::size_t param_count = 0;
  std::vector<std::pair<std::string, std::size_t>> flatten_order;
};

// Shuffled equal shards (remainder spread over the first shards);
// deterministic per seed, disjoint and covering.
std::vector<ClientDataset> partition_iid(const data::Dataset& dataset, std::size_t total_clients,
                                         std::uint64_t seed);

// Poisson client sampling: independent Bernoulli(q_c) per client, ascending
// indices. May be empty.
std::vector<std::size_t> sample_clients(std::size_t total_clients, double q_c, Rng& rng);

// Runs N local iterations starting from the broadcast parameters and
// returns the trained parameters. The mechanism decides clipping and noise
// placement; lots are Poisson samples with per-example rate lot_size/d_k
// and the gradient estimate is the (clipped, noised) sum divided by the
// nominal lot size.
LayeredVector client_local_train(models::Model model, const ClientDataset& client,
                                 const FederationConfig& cfg, const ResolvedNoise& noise,
                                 Rng& rng);

// Weighted aggregation with weights d_k / (q_c * d), summed in ascending
// client-index order.
LayeredVector server_aggregate(const std::vector<std::pair<std::size_t, LayeredVector>>& updates,
                               const std::vector<std::size_t>& client_sizes, double q_c);

// Aggregation-side noise for the FedAvg mechanisms: sigma_server =
// z * C / (q_c * d), injected element-wise (DpFedAvg) or through the
// wavelet pipeline (DpFedAvgWav). z = 0 returns w unchanged.
LayeredVector server_noise(const LayeredVector& w, const FederationConfig& cfg,
                           const ResolvedNoise& noise, double sensitivity,
                           std::size_t global_size, Rng& rng);

// Resolves wavelet/accounting noise parameters for a model with the given
// parameter count.
ResolvedNoise resolve_noise(const FederationConfig& cfg, std::size_t param_count);

// Full simulation: initialization, then T rounds of broadcast, local
// training, aggregation, accounting and evaluation.
std::pair<std::vector<RoundMetrics>, RunInfo> run(const FederationConfig& cfg,
                                                  const data::Dataset& train,
                                                  const data::Dataset& test);

} // namespace dpwav::fed
