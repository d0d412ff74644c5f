#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ctxnade/eval.hpp"
#include "support/oracles.hpp"
#include "support/synthetic.hpp"

using namespace ctxnade;

namespace {
Document doc_of(std::vector<WordId> ids, std::vector<int> labels = {}) {
  Document d;
  d.tokens = std::move(ids);
  d.labels = std::move(labels);
  return d;
}
}  // namespace

TEST(Perplexity, UniformModelIsK) {
  const auto m = make_docnade_model(zeros_like(init_params(37, 4, 1)));
  std::mt19937_64 rng(1);
  std::vector<Document> docs;
  for (int n = 0; n < 6; ++n) docs.push_back(oracle::random_doc(37, 3 + n, rng));
  const auto r = perplexity(docs, m);
  EXPECT_NEAR(r.ppl, 37.0, 37.0 * 1e-12);
  EXPECT_EQ(r.doc_count, 6u);
  EXPECT_EQ(r.token_counts[2], 5u);
}

TEST(Perplexity, HandComputedTwoDocuments) {
  const std::vector<double> lp{-2.0, -6.0};
  const std::vector<std::size_t> len{2, 3};
  EXPECT_NEAR(perplexity_from_logprobs(lp, len), std::exp(1.5), 1e-12);
  const std::vector<double> one{-4.0 * std::log(9.0)};
  const std::vector<std::size_t> four{4};
  EXPECT_NEAR(perplexity_from_logprobs(one, four), 9.0, 1e-12);
  EXPECT_THROW(perplexity_from_logprobs({}, {}), Error);
}

TEST(Perplexity, OrderAndDuplicationInvariant) {
  auto p = init_params(20, 4, 3);
  oracle::randomize(p, 2);
  const auto m = make_docnade_model(p);
  std::mt19937_64 rng(5);
  std::vector<Document> docs;
  for (int n = 0; n < 8; ++n) docs.push_back(oracle::random_doc(20, 2 + n, rng));
  const double base = perplexity(docs, m).ppl;
  EXPECT_GE(base, 1.0);
  auto rev = docs;
  std::reverse(rev.begin(), rev.end());
  EXPECT_NEAR(perplexity(rev, m).ppl, base, 1e-12 * base);
  auto twice = docs;
  twice.insert(twice.end(), docs.begin(), docs.end());
  EXPECT_NEAR(perplexity(twice, m).ppl, base, 1e-12 * base);
  EXPECT_THROW(perplexity(std::vector<Document>{}, m), Error);
}

TEST(Perplexity, CtxModelsScoredAtLambdaZero) {
  auto p = init_ctx_params(15, 3, 2, Activation::Sigmoid, 1, {0.9, EmbeddingMode::SharedW});
  oracle::randomize(p, 7);
  TopicModel m{ModelKind::CtxDocNADE, p};
  std::mt19937_64 rng(3);
  std::vector<Document> docs{oracle::random_doc(15, 6, rng), oracle::random_doc(15, 4, rng)};
  EXPECT_EQ(perplexity(docs, m).ppl, perplexity(docs, make_docnade_model(p.dn)).ppl);
}

TEST(ExtractTopics, RankingAndTies) {
  Matrix W(2, 3);
  W(0, 0) = 3, W(0, 1) = 1, W(0, 2) = 2;
  W(1, 0) = 1, W(1, 1) = 1, W(1, 2) = 0;
  const auto t = extract_topics(W, 2);
  ASSERT_EQ(t.size(), 2u);
  EXPECT_EQ(t[0].words, (std::vector<WordId>{0, 2}));
  EXPECT_EQ(t[0].scores, (std::vector<double>{3, 2}));
  EXPECT_EQ(t[1].words, (std::vector<WordId>{0, 1}));
  EXPECT_THROW(extract_topics(W, 4), Error);
  EXPECT_THROW(extract_topics(W, 0), Error);
}

TEST(ExtractTopics, ScoresNonIncreasingAndDistinct) {
  auto p = init_params(50, 6, 9);
  for (const auto& t : extract_topics(p.W, 10)) {
    for (std::size_t n = 1; n < t.scores.size(); ++n) EXPECT_GE(t.scores[n - 1], t.scores[n]);
    std::set<WordId> ids(t.words.begin(), t.words.end());
    EXPECT_EQ(ids.size(), 10u);
  }
}

TEST(Npmi, IdenticalWordsScoreOne) {
  const std::vector<Document> ref{doc_of({0, 1}), doc_of({1, 2}), doc_of({2})};
  const auto r = npmi_coherence({{1, 1}}, ref, 5, 2);
  EXPECT_DOUBLE_EQ(r.topic_npmi[0], 1.0);
}

TEST(Npmi, IndependentPairScoresZero) {
  // each short document is one window: p(a)=p(b)=1/2, p(a,b)=1/4
  const std::vector<Document> ref{doc_of({0, 1}), doc_of({0}), doc_of({1}), doc_of({2})};
  const auto r = npmi_coherence({{0, 1}}, ref, 10, 2);
  EXPECT_EQ(r.windows, 4u);
  EXPECT_NEAR(r.topic_npmi[0], 0.0, 1e-10);
}

TEST(Npmi, NeverCooccurringPair) {
  std::vector<Document> ref;
  for (int n = 0; n < 50; ++n) ref.push_back(doc_of({0}));
  for (int n = 0; n < 50; ++n) ref.push_back(doc_of({1}));
  const auto r = npmi_coherence({{0, 1}}, ref, 20, 2);
  EXPECT_EQ(r.windows, 100u);
  EXPECT_EQ(r.zero_cooccurrence_pairs, 1u);
  const double expected = std::log(1e-12 / 0.25) / -std::log(1e-12);
  EXPECT_NEAR(r.topic_npmi[0], expected, 1e-12);
  EXPECT_NEAR(expected, -0.94983, 1e-5);
}

TEST(Npmi, SlidingWindowCounts) {
  // windows of size 2 over [0 1 2 0]: {0,1} {1,2} {2,0}
  const auto r = npmi_coherence({{0, 1, 2}}, {doc_of({0, 1, 2, 0})}, 2, 3);
  EXPECT_EQ(r.windows, 3u);
  // p0 = 2/3, p1 = 2/3, p2 = 2/3, every pair co-occurs in exactly one window
  const double p = 2.0 / 3.0, pij = 1.0 / 3.0;
  const double one = std::log((pij + 1e-12) / (p * p)) / -std::log(pij + 1e-12);
  EXPECT_NEAR(r.topic_npmi[0], one, 1e-12);
  EXPECT_NEAR(r.mean, one, 1e-12);
}

TEST(Npmi, AbsentWordsAreExcluded) {
  const auto r = npmi_coherence({{0, 9}, {9, 8}}, {doc_of({0, 1})}, 2, 2);
  EXPECT_EQ(r.excluded_pairs, 2u);
  EXPECT_TRUE(std::isnan(r.topic_npmi[0]));
  EXPECT_TRUE(std::isnan(r.mean));
  EXPECT_THROW(npmi_coherence({{0, 1}}, {doc_of({0})}, 1, 2), Error);
  EXPECT_THROW(npmi_coherence({{0, 1}}, {}, 2, 2), Error);
}

TEST(Npmi, PlantedBeatsRandomAndStaysInRange) {
  int wins = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto pc = synthetic::planted_topic_corpus(seed);
    std::mt19937_64 rng(seed * 7919);
    std::vector<std::vector<WordId>> random_sets;
    for (std::size_t t = 0; t < pc.topics.size(); ++t) {
      std::vector<WordId> ids(pc.K);
      std::iota(ids.begin(), ids.end(), WordId{0});
      std::shuffle(ids.begin(), ids.end(), rng);
      random_sets.emplace_back(ids.begin(), ids.begin() + 10);
    }
    const auto planted = npmi_coherence(pc.topics, pc.docs, 20, 10);
    const auto random = npmi_coherence(random_sets, pc.docs, 20, 10);
    for (const auto* r : {&planted, &random}) {
      for (double x : r->topic_npmi) {
        if (!std::isnan(x)) {
          EXPECT_GE(x, -1.0);
          EXPECT_LE(x, 1.0);
        }
      }
    }
    wins += planted.mean > random.mean;
  }
  EXPECT_GE(wins, 18);
}

TEST(Npmi, FunctionRange) {
  EXPECT_EQ(npmi(0.5, 0.5, 1.0), 1.0);
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(1e-6, 1.0);
  for (int t = 0; t < 1000; ++t) {
    const double pi = u(rng), pj = u(rng);
    const double pij = std::min(pi, pj) * u(rng);
    const double v = npmi(pi, pj, pij);
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(Retrieval, CountsAndCosine) {
  EXPECT_EQ(retrieval_count(0.02, 100), 2u);
  EXPECT_EQ(retrieval_count(0.02, 101), 3u);
  EXPECT_EQ(retrieval_count(0.001, 50), 1u);
  EXPECT_EQ(retrieval_count(1.0, 7), 7u);
  EXPECT_EQ(retrieval_count(0.3, 10), 3u);
  bool degenerate = false;
  EXPECT_EQ(cosine_similarity(Vector{0, 0}, Vector{1, 0}, &degenerate), -1.0);
  EXPECT_TRUE(degenerate);
  EXPECT_NEAR(cosine_similarity(Vector{1, 1}, Vector{2, 2}), 1.0, 1e-15);
}

TEST(Retrieval, FullFractionIsLabelPrior) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> n(0, 1);
  std::vector<Vector> idx, qs;
  std::vector<std::vector<int>> il, ql;
  for (int k = 0; k < 30; ++k) {
    idx.push_back({n(rng), n(rng), n(rng)});
    il.push_back({k % 3 == 0 ? 0 : 1});
  }
  for (int k = 0; k < 9; ++k) {
    qs.push_back({n(rng), n(rng), n(rng)});
    ql.push_back({k % 2});
  }
  const auto r = precision_at_fractions(qs, ql, idx, il, {1.0});
  for (std::size_t q = 0; q < qs.size(); ++q) EXPECT_EQ(r.per_query[q][0], ql[q][0] == 0 ? 10.0 / 30 : 20.0 / 30);
  EXPECT_NEAR(r.mean_precision[0], (5 * 10.0 / 30 + 4 * 20.0 / 30) / 9, 1e-12);
}

TEST(Retrieval, SeparatedClustersArePerfect) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> n(0, 0.05);
  std::vector<Vector> idx, qs;
  std::vector<std::vector<int>> il, ql;
  for (int k = 0; k < 200; ++k) {
    const double s = k % 2 ? 1.0 : -1.0;
    idx.push_back({s + n(rng), n(rng)});
    il.push_back({k % 2});
    if (k < 40) {
      qs.push_back({s + n(rng), n(rng)});
      ql.push_back({k % 2});
    }
  }
  const auto r = precision_at_fractions(qs, ql, idx, il, {0.02, 0.5});
  EXPECT_EQ(r.mean_precision[0], 1.0);
  EXPECT_EQ(r.mean_precision[1], 1.0);
  EXPECT_EQ(r.retrieved[0], 4u);
}

TEST(Retrieval, RotationInvariant) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> n(0, 1);
  std::vector<Vector> idx, qs;
  std::vector<std::vector<int>> il, ql;
  for (int k = 0; k < 40; ++k) {
    idx.push_back({n(rng) + (k % 2), n(rng), n(rng)});
    il.push_back({k % 2});
  }
  for (int k = 0; k < 10; ++k) {
    qs.push_back({n(rng) + (k % 2), n(rng), n(rng)});
    ql.push_back({k % 2});
  }
  const double a = 0.7, b = -1.3;
  auto rotate = [&](Vector v) {
    const double x = std::cos(a) * v[0] - std::sin(a) * v[1], y = std::sin(a) * v[0] + std::cos(a) * v[1];
    const double y2 = std::cos(b) * y - std::sin(b) * v[2], z = std::sin(b) * y + std::cos(b) * v[2];
    return Vector{x, y2, z};
  };
  auto ri = idx, rq = qs;
  for (auto& v : ri) v = rotate(v);
  for (auto& v : rq) v = rotate(v);
  const std::vector<double> fr{0.05, 0.1, 0.25, 0.5};
  const auto r1 = precision_at_fractions(qs, ql, idx, il, fr);
  const auto r2 = precision_at_fractions(rq, ql, ri, il, fr);
  for (std::size_t f = 0; f < fr.size(); ++f) EXPECT_NEAR(r1.mean_precision[f], r2.mean_precision[f], 1e-12);
}

TEST(Retrieval, ZeroVectorsAndMultiLabel) {
  const std::vector<Vector> idx{{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  const std::vector<std::vector<int>> il{{0}, {0, 1}, {1}, {1}};
  const auto r = precision_at_fractions({{1, 0}}, {{0, 1}}, idx, il, {0.5});
  // ranking: doc1 (1.0), doc3 (0.707); label 0 -> 1/2, label 1 -> 2/2
  EXPECT_NEAR(r.mean_precision[0], 0.75, 1e-15);
  EXPECT_EQ(r.zero_norm_vectors, 1u);
  EXPECT_THROW(precision_at_fractions({{1, 0}}, {{}}, idx, il, {0.5}), Error);
  EXPECT_THROW(precision_at_fractions({{1, 0}}, {{0}}, idx, il, {0.0}), Error);
}

TEST(Retrieval, TiesPreferLowerIndex) {
  const std::vector<Vector> idx{{1, 0}, {2, 0}, {3, 0}};
  const auto r = precision_at_fractions({{1, 0}}, {{7}}, idx, {{1}, {7}, {7}}, {0.34});
  EXPECT_EQ(r.retrieved[0], 2u);
  EXPECT_EQ(r.per_query[0][0], 0.5);
}

TEST(MacroF1, AnalyticCases) {
  const auto perfect = macro_f1({{0}, {1}, {1}}, {{0}, {1}, {1}}, {0, 1});
  EXPECT_EQ(perfect.macro_f1, 1.0);
  EXPECT_EQ(perfect.accuracy, 1.0);

  const auto majority = macro_f1({{0}, {0}, {0}, {0}}, {{0}, {0}, {1}, {1}}, {0, 1});
  EXPECT_EQ(majority.per_class_f1, (std::vector<double>{2.0 / 3.0, 0.0}));
  EXPECT_EQ(majority.macro_f1, 1.0 / 3.0);

  const auto three = macro_f1({{0}, {0}, {1}, {2}, {1}}, {{0}, {0}, {1}, {1}, {2}}, {0, 1, 2});
  EXPECT_EQ(three.per_class_f1, (std::vector<double>{1.0, 0.5, 0.0}));
  EXPECT_EQ(three.macro_f1, 0.5);
}

TEST(MacroF1, RelabelingInvariant) {
  const std::vector<std::vector<int>> pred{{0}, {1}, {2}, {2}, {1}, {0}, {0}};
  const std::vector<std::vector<int>> truth{{0}, {2}, {2}, {1}, {1}, {0}, {1}};
  auto relabel = [](std::vector<std::vector<int>> v) {
    const int map[3] = {5, 3, 9};
    for (auto& l : v) l[0] = map[l[0]];
    return v;
  };
  EXPECT_NEAR(macro_f1(pred, truth, {0, 1, 2}).macro_f1, macro_f1(relabel(pred), relabel(truth), {3, 5, 9}).macro_f1,
              1e-15);
}

namespace {
void separable(std::size_t n, std::uint64_t seed, std::vector<Vector>& X, std::vector<std::vector<int>>& y) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1, 1);
  while (X.size() < n) {
    Vector x{u(rng), u(rng), u(rng)};
    const double m = x[0] + 0.5 * x[1];
    if (std::abs(m) < 0.1) continue;
    X.push_back(x);
    y.push_back({m > 0 ? 1 : 0});
  }
}
}  // namespace

TEST(Classifier, SeparableDataFitsAndLossDescends) {
  std::vector<Vector> X;
  std::vector<std::vector<int>> y;
  separable(200, 3, X, y);
  const auto m = train_classifier(X, y, false, {1e-4, 2000, 1e-8});
  EXPECT_GE(evaluate_classifier(m, X, y).macro_f1, 0.99);
  for (std::size_t k = 1; k < m.loss_history.size(); ++k) EXPECT_LE(m.loss_history[k], m.loss_history[k - 1]);
  EXPECT_GT(m.iterations, 0u);
  for (double w : m.weights.flat()) EXPECT_TRUE(std::isfinite(w));
  EXPECT_THROW(evaluate_classifier(m, {{1.0}}, {{0}}), DimensionError);
}

TEST(Classifier, ShrinkageIsMonotone) {
  std::vector<Vector> X;
  std::vector<std::vector<int>> y;
  separable(100, 5, X, y);
  double prev = std::numeric_limits<double>::infinity();
  for (double l2 : {0.01, 0.1, 1.0, 100.0}) {
    const double wn = train_classifier(X, y, false, {l2, 5000, 1e-10}).weight_norm();
    EXPECT_LT(wn, prev) << l2;
    prev = wn;
  }
  EXPECT_LT(prev, 0.01);
}

TEST(Classifier, MultiLabelHeads) {
  std::vector<Vector> X;
  std::vector<std::vector<int>> y;
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  for (int n = 0; n < 150; ++n) {
    Vector x{u(rng), u(rng)};
    std::vector<int> l;
    if (x[0] > 0) l.push_back(0);
    if (x[1] > 0) l.push_back(1);
    if (l.empty()) l.push_back(2);
    X.push_back(x);
    y.push_back(l);
  }
  const auto m = train_classifier(X, y, true, {1e-4, 3000, 1e-8});
  EXPECT_EQ(m.classes.size(), 3u);
  EXPECT_EQ(m.weights.rows(), 3u);
  EXPECT_TRUE(m.multi_label);
  const auto r = evaluate_classifier(m, X, y);
  EXPECT_GE(r.macro_f1, 0.85);
  EXPECT_THROW(train_classifier(X, y, false), Error);
}

TEST(Classifier, RejectsSingleClass) {
  EXPECT_THROW(train_classifier({{1.0}, {2.0}}, {{4}, {4}}, false), Error);
  EXPECT_THROW(train_classifier({{1.0}, {2.0, 1.0}}, {{0}, {1}}, false), DimensionError);
}

TEST(Classifier, Deterministic) {
  std::vector<Vector> X;
  std::vector<std::vector<int>> y;
  separable(60, 11, X, y);
  EXPECT_EQ(train_classifier(X, y, false).weights, train_classifier(X, y, false).weights);
}
