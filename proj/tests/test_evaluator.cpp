#include <gtest/gtest.h>

#include "fassl/checkpoint.hpp"
#include "fassl/errors.hpp"
#include "fassl/evaluator.hpp"
#include "fassl/model.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fassl;

namespace {

// Small integer coordinates so exact distance ties actually occur.
Tensor lattice(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<double> v(n * d);
  for (auto& x : v) x = static_cast<double>(static_cast<int>(rng.index(5)) - 2);
  return Tensor({n, d}, v);
}

std::vector<std::size_t> random_labels(Rng& rng, std::size_t n, std::size_t classes) {
  std::vector<std::size_t> out(n);
  for (auto& l : out) l = rng.index(classes);
  return out;
}

}  // namespace

TEST(Knn, MatchesBruteForceScan) {
  Rng rng(61);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t d = 2 + rng.index(3);
    const Tensor train = trial % 2 ? lattice(rng, 20, d) : fixture::random_tensor(rng, {20, d});
    const Tensor test = trial % 2 ? lattice(rng, 10, d) : fixture::random_tensor(rng, {10, d});
    const auto tl = random_labels(rng, 20, 4), ql = random_labels(rng, 10, 4);
    for (std::size_t k : {1u, 3u}) {
      for (Distance dist : {Distance::Cosine, Distance::Euclidean}) {
        const double got = knn_retrieval_accuracy(train, tl, test, ql, k, dist);
        const double want = oracle::knn_brute(oracle::to_matrix(train), tl, oracle::to_matrix(test), ql, k,
                                              dist == Distance::Cosine);
        EXPECT_EQ(got, want) << "trial " << trial << " k " << k;
      }
    }
  }
}

TEST(Knn, TiePrefersLowerTrainingIndex) {
  const Tensor train = Tensor::matrix({{1, 0}, {2, 0}, {0, 1}});
  const Tensor query = Tensor::matrix({{5, 0}});
  // rows 0 and 1 are equidistant in cosine; row 0 wins
  EXPECT_EQ(knn_retrieval_accuracy(train, {0, 1, 2}, query, {0}, 1), 1.0);
  EXPECT_EQ(knn_retrieval_accuracy(train, {1, 0, 2}, query, {0}, 1), 0.0);
}

TEST(Knn, Examples) {
  const Tensor train = Tensor::matrix({{1, 0}, {0, 1}, {-1, 0}});
  const std::vector<std::size_t> tl = {0, 1, 2};
  EXPECT_EQ(knn_retrieval_accuracy(train, tl, Tensor::matrix({{0, 1}}), {1}, 1), 1.0);
  // k = n: a query is correct iff its label appears anywhere in train
  EXPECT_EQ(knn_retrieval_accuracy(train, tl, Tensor::matrix({{0, 1}, {1, 1}}), {2, 5}, 3), 0.5);
  EXPECT_THROW(knn_retrieval_accuracy(Tensor({0, 2}), {}, Tensor::matrix({{0, 1}}), {1}, 1), ContractError);
  EXPECT_THROW(knn_retrieval_accuracy(train, tl, Tensor::matrix({{0, 1, 2}}), {1}, 1), ContractError);
  EXPECT_THROW(knn_retrieval_accuracy(train, tl, Tensor::matrix({{0, 1}}), {1}, 4), ContractError);
}

TEST(Knn, InvariantToCommonScaling) {
  Rng rng(62);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = fixture::random_tensor(rng, {15, 4});
    const Tensor b = fixture::random_tensor(rng, {8, 4});
    const auto tl = random_labels(rng, 15, 3), ql = random_labels(rng, 8, 3);
    Tensor a2 = a, b2 = b;
    for (auto& v : a2.mutable_data()) v *= 4.0;
    for (auto& v : b2.mutable_data()) v *= 4.0;
    EXPECT_EQ(knn_retrieval_accuracy(a, tl, b, ql, 1), knn_retrieval_accuracy(a2, tl, b2, ql, 1));
  }
}

TEST(EvaluateGlobal, BoundsDeterminismAndNoMutation) {
  const auto tasks = downstream_suite(3);
  const ParamTree p = init_encoder(EncoderConfig{}, 1);
  const auto before = checkpoint::to_bytes(p);
  const auto accs = evaluate_global(p, tasks, 10);
  ASSERT_EQ(accs.size(), tasks.size());
  for (std::size_t i = 0; i < accs.size(); ++i) {
    EXPECT_EQ(accs[i].task, tasks[i].name);
    EXPECT_EQ(accs[i].round, 10u);
    EXPECT_EQ(accs[i].k, 1u);
    EXPECT_GE(accs[i].top1_retrieval, 0.0);
    EXPECT_LE(accs[i].top1_retrieval, 1.0);
  }
  EXPECT_EQ(checkpoint::to_bytes(p), before);
  EXPECT_THROW(evaluate_global(p, {}, 1), ContractError);
}

TEST(EvaluateGlobal, ZeroBackboneIsDegenerateTieBreak) {
  const auto tasks = downstream_suite(4);
  ParamTree p = init_encoder(EncoderConfig{}, 1);
  for (const auto& n : p.names()) p.set(n, Tensor(p.at(n).shape(), 0.0));
  const auto a = evaluate_global(p, tasks, 1);
  const auto b = evaluate_global(p, tasks, 1);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].top1_retrieval, b[i].top1_retrieval);
    // every query ties with all training rows; index 0 wins
    const auto train_labels = tasks[i].train.labels();
    double expected = 0.0;
    for (auto l : tasks[i].test.labels()) expected += l == train_labels[0] ? 1.0 : 0.0;
    EXPECT_DOUBLE_EQ(a[i].top1_retrieval, expected / static_cast<double>(tasks[i].test.size()));
  }
}

TEST(EvaluateGlobal, RandomEncoderBeatsChance) {
  const auto tasks = downstream_suite(0);
  const auto accs = evaluate_global(init_encoder(EncoderConfig{}, 0), tasks, 1);
  for (const auto& a : accs) {
    if (a.task == "band_profile") {
      EXPECT_GT(a.top1_retrieval, 1.0 / 6.0);
    }
  }
}

TEST(Tracker, KeepsStrictMaximum) {
  OptimaTracker t;
  t.update(1, {{"t", 1, 0.10, 1}}, "r1");
  EXPECT_EQ(t.at("t").best_round, 1u);
  t.update(2, {{"t", 2, 0.12, 1}}, "r2");
  t.update(3, {{"t", 3, 0.11, 1}}, "r3");
  EXPECT_EQ(t.at("t").best_accuracy, 0.12);
  EXPECT_EQ(t.at("t").best_round, 2u);
  EXPECT_EQ(t.at("t").checkpoint, "r2");
  t.update(4, {{"t", 4, 0.12, 1}}, "r4");
  EXPECT_EQ(t.at("t").best_round, 2u);
  EXPECT_THROW(t.update(4, {{"t", 4, 0.5, 1}}, "x"), ContractError);
  EXPECT_THROW(t.update(2, {{"t", 2, 0.5, 1}}, "x"), ContractError);
  EXPECT_EQ(t.to_csv(), "task,best_round,best_accuracy\nt,2,0.120000\n");
}

TEST(Tracker, FirstEvaluationInstallsEvenAtZero) {
  OptimaTracker t;
  t.update(5, {{"a", 5, 0.0, 1}}, "c");
  EXPECT_EQ(t.at("a").best_round, 5u);
  EXPECT_EQ(t.at("a").best_accuracy, 0.0);
}

TEST(Tracker, IndependentOfTaskOrderWithinRound) {
  Rng rng(71);
  OptimaTracker a, b;
  for (std::size_t r = 1; r <= 30; ++r) {
    std::vector<TaskAccuracy> accs = {{"x", r, rng.index(20) / 20.0, 1}, {"y", r, rng.index(20) / 20.0, 1},
                                      {"z", r, rng.index(20) / 20.0, 1}};
    a.update(r, accs, "c");
    std::reverse(accs.begin(), accs.end());
    b.update(r, accs, "c");
  }
  EXPECT_EQ(a.to_csv(), b.to_csv());
}

TEST(Tracker, MonotoneAndMatchesEarliestArgmax) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(stream_seed(seed, "tracker"));
    OptimaTracker t;
    std::vector<double> seq;
    double prev_best = -1.0;
    std::size_t round = 0;
    for (int i = 0; i < 25; ++i) {
      round += 1 + rng.index(3);
      const double acc = static_cast<double>(rng.index(8)) / 8.0;  // coarse grid forces ties
      seq.push_back(acc);
      t.update(round, {{"task", round, acc, 1}}, "c");
      EXPECT_GE(t.at("task").best_accuracy, prev_best);
      prev_best = t.at("task").best_accuracy;
    }
    const auto best = std::max_element(seq.begin(), seq.end());  // first maximum
    EXPECT_EQ(t.at("task").best_accuracy, *best);
  }
}
