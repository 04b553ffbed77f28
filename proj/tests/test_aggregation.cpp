#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>

#include "fassl/aggregation.hpp"
#include "fassl/errors.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fassl;

namespace {

const StrategyKind kAll[] = {StrategyKind::FedAvg, StrategyKind::FairAvg, StrategyKind::Loss, StrategyKind::FedU,
                             StrategyKind::LDawa};

ParamTree random_tree(Rng& rng) {
  return ParamTree({{"backbone.fc1.weight", fixture::random_tensor(rng, {3, 2})},
                    {"backbone.fc1.bias", fixture::random_tensor(rng, {2})},
                    {"backbone.fc2.weight", fixture::random_tensor(rng, {2, 2})},
                    {"head.proj.fc1.weight", fixture::random_tensor(rng, {2, 2})},
                    {"head.proj.fc1.bias", fixture::random_tensor(rng, {2})}});
}

ParamTree scalar_tree(double v) { return ParamTree({{"backbone.x.weight", Tensor::scalar(v)}}); }

ClientUpdate update(std::uint64_t id, ParamTree p, std::size_t n = 1, double loss = 1.0) {
  return ClientUpdate{id, std::move(p), n, loss};
}

std::vector<ClientUpdate> random_updates(Rng& rng, std::size_t count) {
  std::vector<std::uint64_t> ids(50);
  std::iota(ids.begin(), ids.end(), 0);
  rng.shuffle(ids);
  std::vector<ClientUpdate> out;
  for (std::size_t i = 0; i < count; ++i) {
    out.push_back(update(ids[i], random_tree(rng), 1 + rng.index(40), rng.uniform(0.0, 3.0)));
  }
  return out;
}

Strategy strategy(StrategyKind k) {
  Strategy s;
  s.kind = k;
  return s;
}

}  // namespace

TEST(Beta, FedAvgExamples) {
  auto b = beta_fedavg({update(0, scalar_tree(0), 1), update(1, scalar_tree(0), 1)});
  EXPECT_EQ(b, (std::vector<double>{0.5, 0.5}));
  b = beta_fedavg({update(0, scalar_tree(0), 1), update(1, scalar_tree(0), 3)});
  EXPECT_EQ(b, (std::vector<double>{0.25, 0.75}));
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    auto w = beta_fedavg(random_updates(rng, 1 + rng.index(8)));
    EXPECT_NEAR(std::accumulate(w.begin(), w.end(), 0.0), 1.0, 1e-12);
  }
}

TEST(Beta, FairAvgExamples) {
  std::vector<ClientUpdate> four;
  for (int i = 0; i < 4; ++i) four.push_back(update(i, scalar_tree(0), 1 + i));
  EXPECT_EQ(beta_fairavg(four), std::vector<double>(4, 0.25));
  EXPECT_EQ(beta_fairavg({update(0, scalar_tree(0), 7)}), std::vector<double>{1.0});
  std::vector<ClientUpdate> equal;
  for (int i = 0; i < 3; ++i) equal.push_back(update(i, scalar_tree(0), 5));
  EXPECT_EQ(beta_fairavg(equal), beta_fedavg(equal));
}

TEST(Beta, LossExamples) {
  auto b = beta_loss({update(0, scalar_tree(0), 1, 1.0), update(1, scalar_tree(0), 1, 1.0)});
  EXPECT_EQ(b, (std::vector<double>{0.5, 0.5}));
  b = beta_loss({update(0, scalar_tree(0), 1, 1.0), update(1, scalar_tree(0), 1, 3.0)});
  EXPECT_EQ(b, (std::vector<double>{0.25, 0.75}));
  b = beta_loss({update(0, scalar_tree(0), 1, 0.0), update(1, scalar_tree(0), 1, 0.0)});
  EXPECT_EQ(b, (std::vector<double>{0.5, 0.5}));
  EXPECT_THROW(beta_loss({update(0, scalar_tree(0), 1, -1.0)}), ContractError);
  b = beta_loss({update(0, scalar_tree(0), 1, 1.0), update(1, scalar_tree(0), 1, 3.0)}, LossWeighting::Inverse);
  EXPECT_NEAR(b[0], 0.75, 1e-15);
  EXPECT_NEAR(b[1], 0.25, 1e-15);
}

TEST(Aggregate, FedAvgHandExample) {
  const ParamTree g = scalar_tree(1.0);
  const ParamTree out = aggregate(strategy(StrategyKind::FedAvg), g,
                                  {update(0, scalar_tree(0.0), 1), update(1, scalar_tree(4.0), 3)});
  EXPECT_EQ(out.at("backbone.x.weight")[0], 3.0);
}

TEST(Aggregate, Contracts) {
  const ParamTree g = scalar_tree(1.0);
  EXPECT_THROW(aggregate(strategy(StrategyKind::FedAvg), g, {}), ContractError);
  ParamTree other({{"backbone.x.weight", Tensor::vector({1, 2})}});
  EXPECT_THROW(aggregate(strategy(StrategyKind::FedAvg), g, {update(0, scalar_tree(1)), update(1, other)}),
               ContractError);
  EXPECT_THROW(aggregate(strategy(StrategyKind::FedAvg), g, {update(0, other)}), ContractError);
  Strategy bad = strategy(StrategyKind::FedU);
  bad.fedu_mu = 0.0;
  EXPECT_THROW(aggregate(bad, g, {update(0, scalar_tree(1))}), ContractError);
}

// Randomized algebra suite: 1000 fixtures, every strategy.
TEST(AggregationProperties, AlgebraOverRandomFixtures) {
  Rng rng(2025);
  std::size_t cases = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const ParamTree global = random_tree(rng);
    const std::size_t s = 1 + rng.index(5);
    std::vector<ClientUpdate> ups = random_updates(rng, s);

    std::vector<ClientUpdate> unanimous = ups;
    for (auto& u : unanimous) u.params = ups.front().params;

    for (StrategyKind k : kAll) {
      const Strategy st = strategy(k);
      // idempotence on unanimous input (FedU gate may reject every head: then heads
      // come from the global model, so compare with the gate open)
      Strategy open = st;
      open.fedu_mu = 1e9;
      EXPECT_EQ(aggregate(open, global, unanimous), ups.front().params) << to_string(k);
      EXPECT_EQ(aggregate(open, global, {ups.front()}), ups.front().params) << to_string(k);

      std::vector<ClientUpdate> shuffled = ups;
      rng.shuffle(shuffled);
      const ParamTree out = aggregate(st, global, ups);
      EXPECT_EQ(aggregate(st, global, shuffled), out) << to_string(k);
      EXPECT_TRUE(out.congruent(global));

      if (k == StrategyKind::FedAvg || k == StrategyKind::FairAvg || k == StrategyKind::Loss) {
        for (const auto& [name, t] : out.entries()) {
          for (std::size_t j = 0; j < t.size(); ++j) {
            double lo = ups.front().params.at(name)[j], hi = lo;
            for (const auto& u : ups) {
              lo = std::min(lo, u.params.at(name)[j]);
              hi = std::max(hi, u.params.at(name)[j]);
            }
            EXPECT_GE(t[j], lo);
            EXPECT_LE(t[j], hi);
          }
        }
        std::vector<double> b = k == StrategyKind::FedAvg    ? beta_fedavg(ups)
                                : k == StrategyKind::FairAvg ? beta_fairavg(ups)
                                                             : beta_loss(ups);
        EXPECT_NEAR(std::accumulate(b.begin(), b.end(), 0.0), 1.0, 1e-12);
        for (double v : b) EXPECT_GE(v, 0.0);
      }
      ++cases;
    }
    std::vector<ClientUpdate> same_n = ups;
    for (auto& u : same_n) u.n_samples = 17;
    EXPECT_EQ(aggregate(strategy(StrategyKind::FedAvg), global, same_n),
              aggregate(strategy(StrategyKind::FairAvg), global, same_n));
  }
  EXPECT_GE(cases, 1000u);
}

TEST(Ldawa, MatchesDirectFormula) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const ParamTree global = random_tree(rng);
    auto ups = random_updates(rng, 3);
    std::sort(ups.begin(), ups.end(), [](auto& a, auto& b) { return a.client_id < b.client_id; });
    std::vector<ParamTree> trees;
    for (const auto& u : ups) trees.push_back(u.params);
    const ParamTree expected = oracle::ldawa(global, trees);
    const ParamTree got = aggregate(strategy(StrategyKind::LDawa), global, ups);
    for (const auto& [name, t] : expected.entries())
      for (std::size_t j = 0; j < t.size(); ++j) EXPECT_NEAR(got.at(name)[j], t[j], 1e-10) << name;
  }
}

TEST(Ldawa, Examples) {
  Rng rng(32);
  const ParamTree global = random_tree(rng);
  EXPECT_EQ(ldawa_aggregate(global, {update(0, global), update(1, global)}), global);

  // Orthogonal client gets zero weight; parallel client keeps full weight.
  const ParamTree g({{"backbone.l.weight", Tensor::vector({1, 0})}});
  const ParamTree par({{"backbone.l.weight", Tensor::vector({2, 0})}});
  const ParamTree orth({{"backbone.l.weight", Tensor::vector({0, 5})}});
  EXPECT_EQ(ldawa_aggregate(g, {update(0, par), update(1, orth)}).at("backbone.l.weight"), Tensor::vector({2, 0}));

  // Anti-correlated only: clamped to zero, uniform fallback.
  const ParamTree anti({{"backbone.l.weight", Tensor::vector({-1, 0})}});
  const ParamTree anti2({{"backbone.l.weight", Tensor::vector({-3, 0})}});
  EXPECT_EQ(ldawa_aggregate(g, {update(0, anti), update(1, anti2)}).at("backbone.l.weight"),
            Tensor::vector({-2, 0}));
}

TEST(Ldawa, EqualCosinesReduceToFairAvg) {
  Rng rng(33);
  const ParamTree global = random_tree(rng);
  std::vector<ClientUpdate> ups;
  for (int i = 0; i < 3; ++i) {
    ParamTree p = global;
    for (const auto& n : p.names())
      for (auto& v : p.at(n).mutable_data()) v *= 1.0 + i;
    ups.push_back(update(i, p, 1 + 5 * i));
  }
  const ParamTree a = ldawa_aggregate(global, ups);
  const ParamTree b = aggregate(strategy(StrategyKind::FairAvg), global, ups);
  for (const auto& [name, t] : b.entries())
    for (std::size_t j = 0; j < t.size(); ++j) EXPECT_NEAR(a.at(name)[j], t[j], 1e-12);
}

TEST(FedU, GateOpenEqualsFedAvg) {
  Rng rng(41);
  for (int trial = 0; trial < 20; ++trial) {
    const ParamTree global = random_tree(rng);
    auto ups = random_updates(rng, 4);
    Strategy st = strategy(StrategyKind::FedU);
    st.fedu_mu = 1e12;
    EXPECT_EQ(aggregate(st, global, ups), aggregate(strategy(StrategyKind::FedAvg), global, ups));
  }
}

TEST(FedU, GateClosedKeepsGlobalHeads) {
  Rng rng(42);
  const ParamTree global = random_tree(rng);
  auto ups = random_updates(rng, 3);
  std::sort(ups.begin(), ups.end(), [](auto& a, auto& b) { return a.client_id < b.client_id; });
  const ParamTree out = fedu_aggregate(global, ups, 1e-12);
  const ParamTree fedavg = aggregate(strategy(StrategyKind::FedAvg), global, ups);
  EXPECT_EQ(out.with_prefix("head."), global.with_prefix("head."));
  EXPECT_EQ(out.with_prefix("backbone."), fedavg.with_prefix("backbone."));
}

TEST(FedU, MixedGateAveragesInsideClientsOnly) {
  Rng rng(43);
  const ParamTree global = random_tree(rng);
  // Client 0: tiny backbone perturbation (inside); client 1: large (outside).
  ParamTree inside = random_tree(rng), outside = random_tree(rng);
  for (const auto& n : global.with_prefix("backbone.").names()) {
    inside.set(n, global.at(n));
    inside.at(n).mutable_data()[0] += 1e-3;
    Tensor far = global.at(n);
    for (auto& v : far.mutable_data()) v = -10.0 * v + 3.0;
    outside.set(n, far);
  }
  const ParamTree out = fedu_aggregate(global, {update(0, inside, 2), update(1, outside, 6)}, 0.5);
  // head oracle: only client 0 passes, so heads equal its heads
  EXPECT_EQ(out.with_prefix("head."), inside.with_prefix("head."));
  for (const auto& n : global.with_prefix("backbone.").names()) {
    for (std::size_t j = 0; j < global.at(n).size(); ++j) {
      EXPECT_NEAR(out.at(n)[j], 0.25 * inside.at(n)[j] + 0.75 * outside.at(n)[j], 1e-14);
    }
  }
}

TEST(ScopeApply, FullAndBackbone) {
  Rng rng(51);
  const ParamTree global = random_tree(rng);
  const ParamTree agg = random_tree(rng);
  EXPECT_EQ(scope_apply(Scope::Full, global, agg), agg);
  const ParamTree bb = agg.with_prefix("backbone.");
  const ParamTree out = scope_apply(Scope::Backbone, global, bb);
  EXPECT_EQ(out.with_prefix("head."), global.with_prefix("head."));
  EXPECT_EQ(out.with_prefix("backbone."), bb);
  EXPECT_THROW(scope_apply(Scope::Backbone, global, agg), ContractError);
  EXPECT_THROW(scope_apply(Scope::Full, global, bb), ContractError);
}
