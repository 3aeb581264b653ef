#include "dpwav/federation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "dpwav/haar.hpp"

namespace dpwav::fed {
namespace {

FederationConfig base_config(Mechanism mechanism) {
  FederationConfig cfg;
  cfg.mechanism = mechanism;
  cfg.total_clients = 4;
  cfg.client_sampling = 1.0;
  cfg.rounds = 3;
  cfg.local_iterations = 1;
  cfg.lot_size = 5;
  cfg.clip.policy = mech::ClippingPolicy::flat(1.0);
  cfg.sigma = 0.0;
  cfg.optimizer.rule = models::OptimizerState::Rule::Sgd;
  cfg.optimizer.learning_rate = 0.5;
  cfg.seed = 17;
  return cfg;
}

TEST(PartitionIid, EqualShards) {
  data::Dataset ds = data::synthetic_blobs(100, 3, 2, 0.5, 1);
  auto shards = partition_iid(ds, 10, 42);
  ASSERT_EQ(shards.size(), 10u);
  for (const auto& s : shards) EXPECT_EQ(s.cardinality(), 10u);
}

TEST(PartitionIid, RemainderGoesToFirstShards) {
  data::Dataset ds = data::synthetic_blobs(101, 3, 2, 0.5, 1);
  auto shards = partition_iid(ds, 10, 42);
  EXPECT_EQ(shards[0].cardinality(), 11u);
  for (std::size_t k = 1; k < 10; ++k) EXPECT_EQ(shards[k].cardinality(), 10u);
}

TEST(PartitionIid, ShardsCoverDatasetAsMultiset) {
  data::Dataset ds = data::synthetic_blobs(57, 4, 3, 0.5, 7);
  auto shards = partition_iid(ds, 5, 99);
  std::multiset<std::vector<double>> original, sharded;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto row = ds.row(i);
    original.insert(std::vector<double>(row.begin(), row.end()));
  }
  std::size_t total = 0;
  for (const auto& s : shards) {
    total += s.cardinality();
    for (std::size_t i = 0; i < s.cardinality(); ++i) {
      auto row = s.examples.row(i);
      sharded.insert(std::vector<double>(row.begin(), row.end()));
    }
  }
  EXPECT_EQ(total, ds.size());
  EXPECT_EQ(original, sharded);
}

TEST(PartitionIid, DeterministicPerSeed) {
  data::Dataset ds = data::synthetic_blobs(60, 3, 2, 0.5, 5);
  auto a = partition_iid(ds, 6, 1234);
  auto b = partition_iid(ds, 6, 1234);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].examples.features, b[k].examples.features);
    EXPECT_EQ(a[k].examples.labels, b[k].examples.labels);
  }
}

TEST(PartitionIid, FewerExamplesThanClientsThrows) {
  data::Dataset ds = data::synthetic_blobs(4, 3, 2, 0.5, 5);
  EXPECT_THROW(partition_iid(ds, 5, 1), std::invalid_argument);
}

TEST(SampleClients, FullParticipation) {
  Rng rng(3);
  std::vector<std::size_t> all = sample_clients(25, 1.0, rng);
  ASSERT_EQ(all.size(), 25u);
  for (std::size_t k = 0; k < 25; ++k) EXPECT_EQ(all[k], k);
}

TEST(SampleClients, BinomialMean) {
  Rng rng(1001);
  double total = 0.0;
  const int trials = 10000;
  for (int t = 0; t < trials; ++t) total += sample_clients(100, 0.1, rng).size();
  EXPECT_NEAR(total / trials, 10.0, 0.3);
}

TEST(SampleClients, DeterministicPerSeed) {
  Rng a(5), b(5);
  EXPECT_EQ(sample_clients(50, 0.3, a), sample_clients(50, 0.3, b));
}

TEST(SampleClients, RejectsBadProbability) {
  Rng rng(1);
  EXPECT_THROW(sample_clients(10, 0.0, rng), std::invalid_argument);
  EXPECT_THROW(sample_clients(10, 1.5, rng), std::invalid_argument);
}

LayeredVector single_layer(std::vector<double> values) {
  LayeredVector v;
  v.layers.push_back({"w", std::move(values)});
  return v;
}

TEST(ServerAggregate, WeightedByDataSizes) {
  std::vector<std::pair<std::size_t, LayeredVector>> updates;
  updates.emplace_back(0, single_layer({4.0}));
  updates.emplace_back(1, single_layer({0.0}));
  LayeredVector agg = server_aggregate(updates, {1, 3}, 1.0);
  EXPECT_DOUBLE_EQ(agg.layers[0].values[0], 1.0); // (1/4)*4 + (3/4)*0
}

TEST(ServerAggregate, EqualSizesFullParticipationIsPlainAverage) {
  std::vector<std::pair<std::size_t, LayeredVector>> updates;
  updates.emplace_back(0, single_layer({2.0, 4.0}));
  updates.emplace_back(1, single_layer({4.0, 0.0}));
  LayeredVector agg = server_aggregate(updates, {10, 10}, 1.0);
  EXPECT_DOUBLE_EQ(agg.layers[0].values[0], 3.0);
  EXPECT_DOUBLE_EQ(agg.layers[0].values[1], 2.0);
}

TEST(ServerAggregate, OrderInvariantBitForBit) {
  std::vector<std::pair<std::size_t, LayeredVector>> forward_order, reversed;
  for (std::size_t k = 0; k < 5; ++k) {
    std::vector<double> vals = {0.1 * static_cast<double>(k + 1), 1.0 / (k + 2.0)};
    forward_order.emplace_back(k, single_layer(vals));
  }
  reversed.assign(forward_order.rbegin(), forward_order.rend());
  std::vector<std::size_t> sizes = {3, 4, 5, 6, 7};
  LayeredVector a = server_aggregate(forward_order, sizes, 0.5);
  LayeredVector b = server_aggregate(reversed, sizes, 0.5);
  EXPECT_EQ(a.layers[0].values, b.layers[0].values);
}

TEST(ServerAggregate, EmptyThrows) {
  EXPECT_THROW(server_aggregate({}, {1}, 1.0), std::invalid_argument);
}

TEST(ServerNoise, ZeroMultiplierUnchanged) {
  FederationConfig cfg = base_config(Mechanism::DpFedAvgWav);
  ResolvedNoise noise = resolve_noise(cfg, 8);
  LayeredVector w = single_layer({1.0, 2.0, 3.0});
  Rng rng(1);
  LayeredVector out = server_noise(w, cfg, noise, 1.0, 100, rng);
  EXPECT_EQ(out.layers[0].values, w.layers[0].values);
}

TEST(ServerNoise, WrongMechanismThrows) {
  FederationConfig cfg = base_config(Mechanism::DpSgd);
  ResolvedNoise noise = resolve_noise(cfg, 8);
  LayeredVector w = single_layer({1.0});
  Rng rng(1);
  EXPECT_THROW(server_noise(w, cfg, noise, 1.0, 100, rng), std::invalid_argument);
}

TEST(ServerNoise, SigmaFormulaStdDev) {
  // z = 1, C = 1, q_c = 0.5, d = 200 -> sigma = 0.01.
  FederationConfig cfg = base_config(Mechanism::DpFedAvg);
  cfg.sigma = 1.0;
  cfg.client_sampling = 0.5;
  ResolvedNoise noise = resolve_noise(cfg, 1 << 14);
  LayeredVector w = single_layer(std::vector<double>(1 << 14, 0.0));
  Rng rng(8);
  LayeredVector out = server_noise(w, cfg, noise, 1.0, 200, rng);
  double ss = 0.0;
  for (double v : out.layers[0].values) ss += v * v;
  double std_dev = std::sqrt(ss / (1 << 14));
  EXPECT_NEAR(std_dev, 0.01, 0.0005);
}

TEST(ServerNoise, WaveletVarianceMatchesOracle) {
  FederationConfig cfg = base_config(Mechanism::DpFedAvgWav);
  cfg.sigma = 1.0;
  cfg.client_sampling = 0.5;
  const std::size_t m = 8;
  ResolvedNoise noise = resolve_noise(cfg, m);
  ASSERT_EQ(noise.wavelet_m, m);
  double sigma_server = noise.sigma_haar * 1.0 / (0.5 * 200.0);

  std::vector<double> weights = haar::haar_weights(m);
  std::vector<double> stds(m);
  for (std::size_t i = 0; i < m; ++i) stds[i] = sigma_server / weights[i];
  std::vector<double> expected = haar::variance_propagation(m, stds);

  LayeredVector w = single_layer(std::vector<double>(m, 0.0));
  Rng rng(9);
  const int reps = 100000;
  std::vector<double> sum_sq(m, 0.0);
  for (int r = 0; r < reps; ++r) {
    LayeredVector out = server_noise(w, cfg, noise, 1.0, 200, rng);
    for (std::size_t i = 0; i < m; ++i) sum_sq[i] += out.layers[0].values[i] * out.layers[0].values[i];
  }
  for (std::size_t i = 0; i < m; ++i)
    EXPECT_NEAR(sum_sq[i] / reps, expected[i], 0.02 * expected[i]) << "element " << i;
}

TEST(ResolveNoise, EffectiveModeRoundTripsThroughAccountant) {
  FederationConfig cfg = base_config(Mechanism::DpSgdWav);
  cfg.sigma = 1.0;
  cfg.sigma_is_effective = true;
  ResolvedNoise noise = resolve_noise(cfg, 210); // pads to 256
  EXPECT_EQ(noise.wavelet_m, 256u);
  EXPECT_NEAR(noise.sigma_accounting, 1.0, 1e-12);
  EXPECT_NEAR(noise.sigma_haar, 1.0 / std::sqrt((2.0 + 8.0) / 2.0), 1e-12);
}

TEST(ResolveNoise, DirectModeMapsUpThroughSavingFactor) {
  FederationConfig cfg = base_config(Mechanism::DpSgdWav);
  cfg.sigma = 1.0;
  ResolvedNoise noise = resolve_noise(cfg, 8);
  EXPECT_NEAR(noise.sigma_accounting, std::sqrt(2.5), 1e-12);
  EXPECT_DOUBLE_EQ(noise.sigma_haar, 1.0);
}

TEST(ClientLocalTrain, OneExampleOneIterationHandTrace) {
  // Single client holding one example; lot rate 1 keeps it every time.
  data::Dataset ds = data::synthetic_blobs(2, 3, 2, 0.4, 21);
  ClientDataset client;
  client.examples = data::take_prefix(ds, 1);

  FederationConfig cfg = base_config(Mechanism::DpFedAvg);
  cfg.total_clients = 1;
  cfg.lot_size = 1;
  cfg.local_iterations = 1;
  cfg.clip.policy = mech::ClippingPolicy::flat(0.5);
  cfg.model_dims = {3, 2};

  models::Model model = models::make_logistic(3, 2);
  Rng init(derive_seed(cfg.seed, kStreamInit));
  models::init_params(model, init);

  LayeredVector expected = model.params;
  LayeredVector g =
      models::loss_and_gradient(model, client.examples.row(0), client.examples.labels[0]).second;
  expected.axpy(-cfg.optimizer.learning_rate, mech::clip(g, cfg.clip.policy));

  ResolvedNoise noise = resolve_noise(cfg, model.params.total_size());
  Rng rng(55);
  LayeredVector got = client_local_train(model, client, cfg, noise, rng);
  for (std::size_t l = 0; l < expected.layers.size(); ++l)
    EXPECT_EQ(got.layers[l].values, expected.layers[l].values);
}

TEST(ClientLocalTrain, LotSizeExceedingClientDataThrows) {
  data::Dataset ds = data::synthetic_blobs(4, 3, 2, 0.4, 21);
  ClientDataset client;
  client.examples = ds;
  FederationConfig cfg = base_config(Mechanism::NonPrivate);
  cfg.lot_size = 10;
  cfg.model_dims = {3, 2};
  models::Model model = models::make_logistic(3, 2);
  ResolvedNoise noise;
  Rng rng(1);
  EXPECT_THROW(client_local_train(model, client, cfg, noise, rng), std::invalid_argument);
}

FederationConfig run_config(Mechanism mechanism, std::uint64_t seed) {
  FederationConfig cfg;
  cfg.mechanism = mechanism;
  cfg.total_clients = 20;
  cfg.client_sampling = 1.0;
  cfg.rounds = 50;
  cfg.local_iterations = 1;
  cfg.lot_size = 10;
  cfg.clip.policy = mech::ClippingPolicy::flat(1.0);
  cfg.sigma = 0.0;
  cfg.optimizer.learning_rate = 0.5;
  cfg.seed = seed;
  cfg.model_dims = {5, 2};
  return cfg;
}

TEST(Run, NonPrivateLearnsSeparableBlobs) {
  auto [train, test] = data::split_at(data::synthetic_blobs(500, 5, 2, 0.2, 11), 400);
  auto [metrics, info] = run(run_config(Mechanism::NonPrivate, 3), train, test);
  ASSERT_EQ(metrics.size(), 50u);
  EXPECT_GE(metrics.back().test_accuracy, 0.95);
  EXPECT_EQ(info.accounting, "none");
}

TEST(Run, EpsilonStrictlyIncreasesForDpMechanisms) {
  auto [train, test] = data::split_at(data::synthetic_blobs(250, 5, 2, 0.4, 31), 200);
  for (Mechanism m :
       {Mechanism::DpSgd, Mechanism::DpSgdWav, Mechanism::DpFedAvg, Mechanism::DpFedAvgWav}) {
    FederationConfig cfg = run_config(m, 5);
    cfg.rounds = 5;
    cfg.sigma = 1.0;
    cfg.client_sampling = 0.5;
    auto [metrics, info] = run(cfg, train, test);
    double prev = 0.0;
    for (const auto& rm : metrics) {
      EXPECT_GT(rm.epsilon_spent, prev) << mechanism_name(m);
      EXPECT_TRUE(std::isfinite(rm.epsilon_spent));
      prev = rm.epsilon_spent;
    }
  }
}

TEST(Run, DeterministicMetricsPerSeed) {
  auto [train, test] = data::split_at(data::synthetic_blobs(250, 5, 2, 0.4, 41), 200);
  FederationConfig cfg = run_config(Mechanism::DpSgd, 7);
  cfg.rounds = 5;
  cfg.sigma = 1.0;
  auto [m1, i1] = run(cfg, train, test);
  auto [m2, i2] = run(cfg, train, test);
  ASSERT_EQ(m1.size(), m2.size());
  for (std::size_t i = 0; i < m1.size(); ++i) {
    EXPECT_EQ(m1[i].train_loss, m2[i].train_loss);
    EXPECT_EQ(m1[i].test_accuracy, m2[i].test_accuracy);
    EXPECT_EQ(m1[i].epsilon_spent, m2[i].epsilon_spent);
    EXPECT_EQ(m1[i].sampled_client_count, m2[i].sampled_client_count);
  }
}

TEST(Run, AggregateWeightsSumToOneAtFullParticipation) {
  // With q_c = 1 and equal shards the aggregation is an exact average:
  // aggregating identical updates must reproduce them bit-for-bit.
  std::vector<std::pair<std::size_t, LayeredVector>> updates;
  for (std::size_t k = 0; k < 4; ++k) updates.emplace_back(k, single_layer({0.5, -0.25}));
  LayeredVector agg = server_aggregate(updates, {10, 10, 10, 10}, 1.0);
  EXPECT_DOUBLE_EQ(agg.layers[0].values[0], 0.5);
  EXPECT_DOUBLE_EQ(agg.layers[0].values[1], -0.25);
}

TEST(Run, MedianClipResolvesAndIsRecorded) {
  auto [train, test] = data::split_at(data::synthetic_blobs(250, 5, 2, 0.4, 51), 200);
  FederationConfig cfg = run_config(Mechanism::DpSgd, 9);
  cfg.rounds = 2;
  cfg.sigma = 1.0;
  cfg.clip.use_median = true;
  cfg.clip.median_proxy_count = 32;
  auto [metrics, info] = run(cfg, train, test);
  EXPECT_EQ(info.resolved_clip.kind, mech::ClippingPolicy::Kind::Flat);
  EXPECT_GT(info.resolved_clip.c, 0.0);
  EXPECT_DOUBLE_EQ(info.sensitivity, info.resolved_clip.c);
}

TEST(ServerAggregate, UnequalShardWeightsSumToOneAtFullParticipation) {
  std::vector<std::pair<std::size_t, LayeredVector>> updates;
  for (std::size_t k = 0; k < 3; ++k) updates.emplace_back(k, single_layer({1.0}));
  LayeredVector agg = server_aggregate(updates, {1, 3, 6}, 1.0);
  EXPECT_NEAR(agg.layers[0].values[0], 1.0, 1e-15);
}

TEST(Run, PerLayerClippingEndToEnd) {
  auto [train, test] = data::split_at(data::synthetic_blobs(250, 5, 2, 0.4, 81), 200);
  FederationConfig cfg = run_config(Mechanism::DpSgd, 19);
  cfg.rounds = 4;
  cfg.sigma = 1.0;
  cfg.clip.policy = mech::ClippingPolicy::per_layer_bounds({0.6, 0.8}); // weight, bias
  auto [metrics, info] = run(cfg, train, test);
  EXPECT_DOUBLE_EQ(info.sensitivity, 1.0); // sqrt(0.36 + 0.64)
  for (const auto& rm : metrics) EXPECT_TRUE(std::isfinite(rm.train_loss));
}

TEST(Run, AdaptiveOptimizersTrainThroughWaveletMechanism) {
  auto [train, test] = data::split_at(data::synthetic_blobs(500, 5, 2, 0.2, 91), 400);
  for (auto rule : {models::OptimizerState::Rule::Adam, models::OptimizerState::Rule::AdaGrad}) {
    FederationConfig cfg = run_config(Mechanism::DpSgdWav, 29);
    cfg.rounds = 25;
    cfg.sigma = 1.0;
    cfg.sigma_is_effective = true;
    cfg.optimizer.rule = rule;
    cfg.optimizer.learning_rate = 0.05;
    auto [metrics, info] = run(cfg, train, test);
    EXPECT_GE(metrics.back().test_accuracy, 0.9);
    EXPECT_LT(metrics.back().train_loss, metrics.front().train_loss);
  }
}

TEST(Run, EmptySampledRoundsStillChargeAccountant) {
  auto [train, test] = data::split_at(data::synthetic_blobs(250, 5, 2, 0.4, 71), 200);
  FederationConfig cfg = run_config(Mechanism::DpFedAvg, 23);
  cfg.total_clients = 2;
  cfg.client_sampling = 0.05; // most rounds sample nobody
  cfg.rounds = 20;
  cfg.sigma = 1.0;
  cfg.lot_size = 5;
  auto [metrics, info] = run(cfg, train, test);

  bool saw_empty = false;
  double prev_eps = 0.0;
  double prev_loss = -1.0;
  for (const auto& rm : metrics) {
    EXPECT_GT(rm.epsilon_spent, prev_eps); // charged even when nobody trained
    if (rm.sampled_client_count == 0 && prev_loss >= 0.0)
      EXPECT_EQ(rm.train_loss, prev_loss); // model unchanged on skipped rounds
    saw_empty = saw_empty || rm.sampled_client_count == 0;
    prev_eps = rm.epsilon_spent;
    prev_loss = rm.train_loss;
  }
  EXPECT_TRUE(saw_empty);
}

// The degeneracy equivalences across all five mechanisms are covered by the
// acceptance suite; this is the single-mechanism smoke version.
TEST(Run, DpFedAvgWithZeroNoiseMatchesNonPrivate) {
  auto [train, test] = data::split_at(data::synthetic_blobs(250, 5, 2, 0.4, 61), 200);
  FederationConfig nonpriv = run_config(Mechanism::NonPrivate, 13);
  nonpriv.rounds = 8;
  FederationConfig fedavg = run_config(Mechanism::DpFedAvg, 13);
  fedavg.rounds = 8;
  fedavg.clip.policy =
      mech::ClippingPolicy::flat(std::numeric_limits<double>::infinity());
  auto [m1, i1] = run(nonpriv, train, test);
  auto [m2, i2] = run(fedavg, train, test);
  for (std::size_t i = 0; i < m1.size(); ++i) {
    EXPECT_EQ(m1[i].train_loss, m2[i].train_loss);
    EXPECT_EQ(m1[i].test_accuracy, m2[i].test_accuracy);
  }
}

} // namespace
} // namespace dpwav::fed
