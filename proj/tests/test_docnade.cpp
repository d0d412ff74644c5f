#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctxnade/docnade.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace ctxnade;

namespace {
Document doc_of(std::vector<WordId> ids) {
  Document d;
  d.tokens = std::move(ids);
  return d;
}

DocNADEParams zero_params(std::size_t K, std::size_t H, Activation g = Activation::Sigmoid) {
  return zeros_like(init_params(K, H, 1, g));
}
}  // namespace

TEST(InitParams, DeterministicAndBounded) {
  const auto a = init_params(50, 8, 7, Activation::Sigmoid, 2);
  const auto b = init_params(50, 8, 7, Activation::Sigmoid, 2);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, init_params(50, 8, 8, Activation::Sigmoid, 2));
  const double bound = std::sqrt(6.0 / 58.0);
  for (double x : a.W.flat()) EXPECT_LE(std::abs(x), bound);
  for (double x : a.U.flat()) EXPECT_LE(std::abs(x), bound);
  EXPECT_TRUE(std::all_of(a.b.begin(), a.b.end(), [](double x) { return x == 0.0; }));
  EXPECT_TRUE(std::all_of(a.e.begin(), a.e.end(), [](double x) { return x == 0.0; }));
  EXPECT_EQ(a.depth(), 2u);
  EXPECT_THROW(init_params(0, 8, 1), DimensionError);
  EXPECT_THROW(init_params(5, 8, 1, Activation::Sigmoid, 0), DimensionError);
}

TEST(PrefixAccumulator, OneStepUnroll) {
  auto p = init_params(10, 4, 3);
  oracle::randomize(p, 1);
  auto act = start_prefix(p);
  EXPECT_EQ(act.a, p.e);
  prefix_advance(act, 6, p);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(act.a[j], p.e[j] + p.W(j, 6));
}

TEST(PrefixAccumulator, MatchesNaiveRecomputeAndIsOrderFree) {
  std::mt19937_64 rng(11);
  auto p = init_params(40, 6, 2, Activation::Sigmoid, 2);
  oracle::randomize(p, 5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto doc = oracle::random_doc(40, 15, rng);
    auto act = start_prefix(p);
    for (std::size_t i = 0; i < doc.size(); ++i) {
      const auto h = hidden(act, p);
      const auto ref = oracle::naive_hidden(doc.tokens, i, p);
      for (std::size_t j = 0; j < h.size(); ++j) EXPECT_NEAR(h[j], ref[j], 1e-12);
      prefix_advance(act, doc.tokens[i], p);
    }
    auto shuffled = doc.tokens;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    const auto h1 = oracle::naive_hidden(doc.tokens, doc.size(), p);
    const auto h2 = doc_representation(doc_of(shuffled), p);
    for (std::size_t j = 0; j < h1.size(); ++j) EXPECT_NEAR(h1[j], h2[j], 1e-12);
  }
}

TEST(Hidden, EmptyPrefixAndZeroParams) {
  auto p = zero_params(5, 3);
  const auto h = hidden(start_prefix(p), p);
  for (double x : h) EXPECT_DOUBLE_EQ(x, 0.5);
  p.e = {1.0, -1.0, 0.0};
  const auto h2 = hidden(start_prefix(p), p);
  EXPECT_NEAR(h2[0], 1.0 / (1.0 + std::exp(-1.0)), 1e-15);
  EXPECT_NEAR(h2[1], 1.0 / (1.0 + std::exp(1.0)), 1e-15);
  auto t = zero_params(5, 3, Activation::Tanh);
  for (double x : hidden(start_prefix(t), t)) EXPECT_EQ(x, 0.0);
}

TEST(Hidden, DeepLayersMatchOracle) {
  auto p = init_params(20, 5, 4, Activation::Tanh, 3);
  oracle::randomize(p, 9);
  const std::vector<WordId> words{3, 7, 7, 19};
  auto act = start_prefix(p);
  for (WordId v : words) prefix_advance(act, v, p);
  const auto h = hidden(act, p);
  const auto ref = oracle::naive_hidden(words, words.size(), p);
  for (std::size_t j = 0; j < h.size(); ++j) EXPECT_NEAR(h[j], ref[j], 1e-12);
  EXPECT_EQ(hidden_layers(act.a, p).size(), 3u);
}

TEST(Conditional, ZeroParamsGiveUniform) {
  const auto p = zero_params(7, 4);
  const auto lp = conditional_log_prob(hidden(start_prefix(p), p), p);
  for (double x : lp) EXPECT_NEAR(x, -std::log(7.0), 1e-14);
}

TEST(Conditional, TwoWordExample) {
  auto p = zero_params(2, 1);
  p.b = {1.0, 0.0};
  const auto lp = conditional_log_prob(hidden(start_prefix(p), p), p);
  EXPECT_NEAR(lp[0], -0.31326168751822286, 1e-12);
  EXPECT_NEAR(lp[1], -1.3132616875182228, 1e-12);
}

TEST(Conditional, NormalizedForRandomParams) {
  std::mt19937_64 rng(3);
  auto p = init_params(60, 6, 3);
  oracle::randomize(p, 4, 2.0);
  for (int t = 0; t < 50; ++t) {
    const auto doc = oracle::random_doc(60, 8, rng);
    auto act = start_prefix(p);
    for (WordId v : doc.tokens) prefix_advance(act, v, p);
    const auto lp = conditional_log_prob(hidden(act, p), p);
    double s = 0.0;
    for (double x : lp) s += std::exp(x);
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
}

TEST(Likelihood, ZeroParamsGiveMinusDLogK) {
  const auto p = zero_params(5, 3);
  EXPECT_NEAR(doc_log_likelihood(doc_of({0, 1, 2}), p), -3.0 * std::log(5.0), 1e-12);
  EXPECT_NEAR(doc_log_likelihood(doc_of({4}), p), -std::log(5.0), 1e-14);
}

TEST(Likelihood, MatchesNaiveOracle) {
  std::mt19937_64 rng(21);
  for (std::size_t depth : {1u, 2u}) {
    auto p = init_params(30, 5, 6, Activation::Sigmoid, depth);
    oracle::randomize(p, 8 + depth);
    for (int t = 0; t < 50; ++t) {
      std::uniform_int_distribution<std::size_t> len(1, 25);
      const auto doc = oracle::random_doc(30, len(rng), rng);
      const double a = doc_log_likelihood(doc, p);
      const double b = oracle::naive_docnade_loglik(doc, p);
      EXPECT_LE(std::abs(a - b) / std::max(1.0, std::abs(b)), 1e-9);
      EXPECT_LT(a, 0.0);
    }
  }
}

TEST(Likelihood, RejectsEmptyAndOutOfRange) {
  const auto p = zero_params(5, 3);
  EXPECT_THROW(doc_log_likelihood(Document{}, p), Error);
  EXPECT_THROW(doc_log_likelihood(doc_of({5}), p), DimensionError);
}

TEST(Likelihood, LinearCost) {
  const auto p = init_params(30, 5, 1);
  std::mt19937_64 rng(2);
  for (std::size_t D : {1u, 7u, 40u}) {
    OpCounts c;
    doc_log_likelihood(oracle::random_doc(30, D, rng), p, &c);
    EXPECT_EQ(c.hidden_evals, D);
    EXPECT_EQ(c.accumulator_adds, D);
  }
}

TEST(Gradients, OutputBiasExample) {
  const auto p = zero_params(4, 2);
  auto g = zeros_like(p);
  const double nll = doc_gradients(doc_of({1}), p, g);
  EXPECT_NEAR(nll, std::log(4.0), 1e-14);
  EXPECT_NEAR(g.b[0], 0.25, 1e-14);
  EXPECT_NEAR(g.b[1], -0.75, 1e-14);
  EXPECT_NEAR(g.b[2], 0.25, 1e-14);
  for (double x : g.W.flat()) EXPECT_EQ(x, 0.0);  // a single word never enters a prefix
}

TEST(Gradients, FiniteDifferenceCheck) {
  std::mt19937_64 rng(13);
  for (Activation g : {Activation::Sigmoid, Activation::Tanh}) {
    for (std::size_t depth : {1u, 2u}) {
      auto p = init_params(12, 4, 3, g, depth);
      oracle::randomize(p, 17 + depth);
      const auto doc = oracle::random_doc(12, 9, rng);
      const auto r = oracle::check_gradients(
          p, [&](const DocNADEParams& q) { return -doc_log_likelihood(doc, q); },
          [&](const DocNADEParams& q, DocNADEParams& gr) { doc_gradients(doc, q, gr); });
      EXPECT_LE(r.max_error, 1e-6) << to_string(g) << " depth " << depth << " worst " << r.worst_tensor;
      EXPECT_GT(r.coordinates, 0u);
    }
  }
}

TEST(Gradients, RepeatedWordsAccumulate) {
  auto p = init_params(6, 3, 2);
  oracle::randomize(p, 3);
  const auto doc = doc_of({2, 2, 2, 5, 2});
  const auto r = oracle::check_gradients(
      p, [&](const DocNADEParams& q) { return -doc_log_likelihood(doc, q); },
      [&](const DocNADEParams& q, DocNADEParams& gr) { doc_gradients(doc, q, gr); });
  EXPECT_LE(r.max_error, 1e-6) << r.worst_tensor;
}

TEST(Training, DeterministicAndImproves) {
  const auto docs = synthetic::two_topic_corpus(40, 20, 5);
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.seed = 3;
  cfg.optimizer.learning_rate = 0.01;
  const auto a = train(docs, docs, 20, 6, Activation::Sigmoid, 1, cfg);
  const auto b = train(docs, docs, 20, 6, Activation::Sigmoid, 1, cfg);
  EXPECT_EQ(a.params, b.params);
  ASSERT_EQ(a.history.epochs.size(), 15u);
  EXPECT_LT(a.history.epochs.back().train_nll_per_word, a.history.epochs.front().train_nll_per_word);
  const auto init = init_params(20, 6, 3);
  auto ll = [&](const DocNADEParams& q) { return mean_perplexity(docs, [&](const Document& d) { return doc_log_likelihood(d, q); }); };
  EXPECT_LT(ll(a.params), ll(init));
}

TEST(Training, ZeroEpochsReturnsInitialParams) {
  const auto docs = synthetic::two_topic_corpus(10, 10, 1);
  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 4;
  const auto r = train(docs, {}, 10, 3, Activation::Tanh, 2, cfg);
  EXPECT_EQ(r.params, init_params(10, 3, 4, Activation::Tanh, 2));
  EXPECT_TRUE(r.history.epochs.empty());
}

TEST(Training, EarlyStoppingRestoresBest) {
  const auto train_docs = synthetic::two_topic_corpus(20, 20, 2);
  const auto valid = synthetic::two_topic_corpus(10, 20, 9, 10, 20, 0.5);
  TrainConfig cfg;
  cfg.epochs = 60;
  cfg.patience = 2;
  cfg.optimizer.learning_rate = 0.05;
  const auto r = train(train_docs, valid, 20, 8, Activation::Sigmoid, 1, cfg);
  const double ppl = mean_perplexity(valid, [&](const Document& d) { return doc_log_likelihood(d, r.params); });
  EXPECT_NEAR(ppl, r.history.best_validation_ppl, 1e-9 * ppl);
  for (const auto& e : r.history.epochs) EXPECT_GE(e.validation_ppl, r.history.best_validation_ppl);
}

TEST(Training, BatchingAndSgd) {
  const auto docs = synthetic::two_topic_corpus(12, 10, 4);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 5;
  cfg.optimizer.kind = OptimizerKind::SGD;
  cfg.optimizer.learning_rate = 0.05;
  const auto r = train(docs, {}, 10, 4, Activation::Sigmoid, 1, cfg);
  EXPECT_NE(r.params, init_params(10, 4, cfg.seed));
  EXPECT_TRUE(std::isnan(r.history.epochs.back().validation_ppl));
}
