#pragma once

// Evaluation protocols: held-out perplexity, topic extraction, sliding-window
// NPMI coherence, precision-at-fraction retrieval and logistic-regression
// categorization with macro-F1.

#include <algorithm>
#include <concepts>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "ctxnade/corpus.hpp"
#include "ctxnade/model.hpp"
#include "ctxnade/numerics.hpp"

namespace ctxnade {

// ---------------------------------------------------------------- perplexity

struct PPLReport {
  double ppl = 0.0;
  std::vector<double> per_doc_logprob;
  std::vector<std::size_t> token_counts;
  std::size_t doc_count = 0;
  std::size_t oov_dropped = 0;
};

/// exp(-(1/z) sum_t log p(v^t) / |v^t|)
inline double perplexity_from_logprobs(std::span<const double> logprobs, std::span<const std::size_t> lengths) {
  if (logprobs.empty()) throw Error("perplexity: empty test set");
  if (logprobs.size() != lengths.size()) throw DimensionError("perplexity: logprob/length count mismatch");
  double acc = 0.0;
  for (std::size_t t = 0; t < logprobs.size(); ++t) {
    if (lengths[t] == 0) throw Error("perplexity: zero-length document");
    acc += logprobs[t] / static_cast<double>(lengths[t]);
  }
  return std::exp(-acc / static_cast<double>(logprobs.size()));
}

template <class LogProbFn>
  requires std::invocable<LogProbFn&, const Document&>
PPLReport perplexity(const std::vector<Document>& docs, LogProbFn&& log_prob) {
  if (docs.empty()) throw Error("perplexity: empty test set");
  PPLReport r;
  r.doc_count = docs.size();
  for (const auto& d : docs) {
    r.per_doc_logprob.push_back(log_prob(d));
    r.token_counts.push_back(d.size());
    r.oov_dropped += d.oov_dropped;
  }
  r.ppl = perplexity_from_logprobs(r.per_doc_logprob, r.token_counts);
  return r;
}

/// Context-fused models are scored with the LM component switched off.
inline PPLReport perplexity(const std::vector<Document>& docs, const TopicModel& model) {
  return perplexity(docs, [&](const Document& d) { return model.exact_log_likelihood(d); });
}

// -------------------------------------------------------------------- topics

struct Topic {
  std::size_t id = 0;
  std::vector<WordId> words;
  std::vector<double> scores;
};

/// Row j of W ranked by descending weight, ties to the lower word id.
inline std::vector<Topic> extract_topics(const Matrix& W, std::size_t top_n) {
  if (top_n == 0 || top_n > W.cols()) {
    throw Error("extract_topics: top_n=" + std::to_string(top_n) + " must be in 1.." + std::to_string(W.cols()));
  }
  std::vector<Topic> topics;
  std::vector<WordId> ids(W.cols());
  for (std::size_t j = 0; j < W.rows(); ++j) {
    const auto row = W.row(j);
    std::iota(ids.begin(), ids.end(), WordId{0});
    std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(top_n), ids.end(),
                      [&](WordId a, WordId b) { return row[a] != row[b] ? row[a] > row[b] : a < b; });
    Topic t;
    t.id = j;
    t.words.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(top_n));
    for (WordId w : t.words) t.scores.push_back(row[w]);
    topics.push_back(std::move(t));
  }
  return topics;
}

// ----------------------------------------------------------------- coherence

inline constexpr double kNpmiEpsilon = 1e-12;

/// log((p_ij + eps) / (p_i p_j)) / -log(p_ij + eps), clamped to [-1, 1].
inline double npmi(double p_i, double p_j, double p_ij, double eps = kNpmiEpsilon) {
  const double joint = p_ij + eps;
  const double denom = -std::log(joint);
  if (denom <= 0.0) return 1.0;  // p_ij == 1: the pair fills every window
  const double value = std::log(joint / (p_i * p_j)) / denom;
  return std::clamp(value, -1.0, 1.0);
}

struct CoherenceReport {
  std::vector<double> topic_npmi;  // NaN when a topic has no scorable pair
  double mean = std::numeric_limits<double>::quiet_NaN();
  std::size_t window = 0;
  std::size_t top_n = 0;
  std::size_t windows = 0;
  std::size_t excluded_pairs = 0;  // a word never occurs in the reference corpus
  std::size_t zero_cooccurrence_pairs = 0;
};

/// Boolean document co-occurrence in sliding windows. A document shorter than
/// the window counts as one window; otherwise every offset 0..L-window does.
inline CoherenceReport npmi_coherence(const std::vector<std::vector<WordId>>& topics,
                                      const std::vector<Document>& reference, std::size_t window, std::size_t top_n) {
  if (window < 2) throw Error("npmi_coherence: window must be >= 2");
  if (reference.empty()) throw Error("npmi_coherence: reference corpus is empty");
  CoherenceReport report;
  report.window = window;
  report.top_n = top_n;

  // Slot per distinct topic word; pairs keyed by (slot_lo, slot_hi).
  std::unordered_map<WordId, std::size_t> slot;
  std::vector<std::vector<std::size_t>> topic_slots;
  for (const auto& t : topics) {
    std::vector<std::size_t> s;
    for (std::size_t n = 0; n < std::min(top_n, t.size()); ++n) {
      auto [it, inserted] = slot.emplace(t[n], slot.size());
      s.push_back(it->second);
    }
    topic_slots.push_back(std::move(s));
  }
  const std::size_t M = slot.size();
  std::map<std::pair<std::size_t, std::size_t>, std::uint64_t> pair_count;
  for (const auto& s : topic_slots) {
    for (std::size_t a = 0; a < s.size(); ++a) {
      for (std::size_t b = a + 1; b < s.size(); ++b) pair_count[{std::min(s[a], s[b]), std::max(s[a], s[b])}] = 0;
    }
  }
  std::vector<std::uint64_t> single(M, 0);
  std::vector<std::uint32_t> in_window(M, 0);
  std::vector<std::size_t> present;
  std::uint64_t n_windows = 0;

  auto slot_of = [&](WordId w) -> std::ptrdiff_t {
    auto it = slot.find(w);
    return it == slot.end() ? -1 : static_cast<std::ptrdiff_t>(it->second);
  };
  auto tally = [&] {
    ++n_windows;
    present.clear();
    for (std::size_t s = 0; s < M; ++s) {
      if (in_window[s]) present.push_back(s);
    }
    for (std::size_t s : present) ++single[s];
    for (std::size_t a = 0; a < present.size(); ++a) {
      for (std::size_t b = a + 1; b < present.size(); ++b) {
        auto it = pair_count.find({present[a], present[b]});
        if (it != pair_count.end()) ++it->second;
      }
    }
  };

  for (const auto& doc : reference) {
    const auto& tok = doc.tokens;
    if (tok.empty()) continue;
    std::fill(in_window.begin(), in_window.end(), 0);
    const std::size_t first = std::min(window, tok.size());
    for (std::size_t k = 0; k < first; ++k) {
      if (auto s = slot_of(tok[k]); s >= 0) ++in_window[static_cast<std::size_t>(s)];
    }
    tally();
    for (std::size_t end = first; end < tok.size(); ++end) {
      if (auto s = slot_of(tok[end - window]); s >= 0) --in_window[static_cast<std::size_t>(s)];
      if (auto s = slot_of(tok[end]); s >= 0) ++in_window[static_cast<std::size_t>(s)];
      tally();
    }
  }
  report.windows = n_windows;
  const double N = static_cast<double>(n_windows);

  double sum = 0.0;
  std::size_t scored_topics = 0;
  for (const auto& s : topic_slots) {
    double topic_sum = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < s.size(); ++a) {
      for (std::size_t b = a + 1; b < s.size(); ++b) {
        const std::uint64_t ci = single[s[a]];
        const std::uint64_t cj = single[s[b]];
        if (ci == 0 || cj == 0) {
          ++report.excluded_pairs;
          continue;
        }
        const std::uint64_t cij =
            s[a] == s[b] ? ci : pair_count.at({std::min(s[a], s[b]), std::max(s[a], s[b])});
        if (cij == 0) ++report.zero_cooccurrence_pairs;
        topic_sum += npmi(ci / N, cj / N, cij / N);
        ++pairs;
      }
    }
    if (pairs == 0) {
      report.topic_npmi.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    report.topic_npmi.push_back(topic_sum / static_cast<double>(pairs));
    sum += report.topic_npmi.back();
    ++scored_topics;
  }
  if (scored_topics > 0) report.mean = sum / static_cast<double>(scored_topics);
  return report;
}

inline CoherenceReport npmi_coherence(const std::vector<Topic>& topics, const std::vector<Document>& reference,
                                      std::size_t window, std::size_t top_n) {
  std::vector<std::vector<WordId>> words;
  for (const auto& t : topics) words.push_back(t.words);
  return npmi_coherence(words, reference, window, top_n);
}

// ----------------------------------------------------------------- retrieval

struct RetrievalReport {
  std::vector<double> fractions;
  std::vector<double> mean_precision;             // per fraction
  std::vector<std::vector<double>> per_query;     // [query][fraction]
  std::vector<std::size_t> retrieved;             // documents retrieved per fraction
  std::size_t zero_norm_vectors = 0;
};

inline double cosine_similarity(std::span<const double> a, std::span<const double> b, bool* degenerate = nullptr) {
  const double na = norm(a);
  const double nb = norm(b);
  if (na == 0.0 || nb == 0.0) {
    if (degenerate) *degenerate = true;
    return -1.0;
  }
  return dot(a, b) / (na * nb);
}

/// Number of documents retrieved at fraction f of an index of size n (at least one).
inline std::size_t retrieval_count(double f, std::size_t n) {
  const double raw = f * static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(raw - 1e-9 * std::max(1.0, raw)));
  return std::clamp<std::size_t>(k, 1, n);
}

/// Each query ranks the index by cosine similarity (ties to the lower index).
/// Precision is averaged over the query's labels, then over queries.
inline RetrievalReport precision_at_fractions(const std::vector<Vector>& query_vecs,
                                              const std::vector<std::vector<int>>& query_labels,
                                              const std::vector<Vector>& index_vecs,
                                              const std::vector<std::vector<int>>& index_labels,
                                              const std::vector<double>& fractions) {
  if (query_vecs.size() != query_labels.size() || index_vecs.size() != index_labels.size()) {
    throw DimensionError("precision_at_fractions: vectors and labels differ in count");
  }
  if (query_vecs.empty() || index_vecs.empty()) throw Error("precision_at_fractions: empty query or index set");
  for (double f : fractions) {
    if (!(f > 0.0 && f <= 1.0)) throw Error("retrieval fraction " + std::to_string(f) + " outside (0, 1]");
  }
  for (const auto* labels : {&query_labels, &index_labels}) {
    for (const auto& l : *labels) {
      if (l.empty()) throw Error("precision_at_fractions: every document must carry a label");
    }
  }
  RetrievalReport report;
  report.fractions = fractions;
  report.mean_precision.assign(fractions.size(), 0.0);
  for (double f : fractions) report.retrieved.push_back(retrieval_count(f, index_vecs.size()));

  std::vector<bool> index_zero(index_vecs.size());
  for (std::size_t k = 0; k < index_vecs.size(); ++k) {
    index_zero[k] = norm(index_vecs[k]) == 0.0;
    report.zero_norm_vectors += index_zero[k];
  }

  std::vector<double> sims(index_vecs.size());
  std::vector<std::size_t> order(index_vecs.size());
  for (std::size_t q = 0; q < query_vecs.size(); ++q) {
    if (norm(query_vecs[q]) == 0.0) ++report.zero_norm_vectors;
    for (std::size_t k = 0; k < index_vecs.size(); ++k) {
      if (index_vecs[k].size() != query_vecs[q].size()) throw DimensionError("precision_at_fractions: dimension mismatch");
      sims[k] = cosine_similarity(query_vecs[q], index_vecs[k]);
    }
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });

    std::vector<double> row;
    for (std::size_t fi = 0; fi < fractions.size(); ++fi) {
      const std::size_t n = report.retrieved[fi];
      double label_mean = 0.0;
      for (int label : query_labels[q]) {
        std::size_t hits = 0;
        for (std::size_t r = 0; r < n; ++r) {
          const auto& l = index_labels[order[r]];
          hits += std::binary_search(l.begin(), l.end(), label);
        }
        label_mean += static_cast<double>(hits) / static_cast<double>(n);
      }
      label_mean /= static_cast<double>(query_labels[q].size());
      row.push_back(label_mean);
      report.mean_precision[fi] += label_mean;
    }
    report.per_query.push_back(std::move(row));
  }
  for (auto& p : report.mean_precision) p /= static_cast<double>(query_vecs.size());
  return report;
}

inline RetrievalReport precision_at_fractions(const std::vector<Document>& queries, const std::vector<Document>& index,
                                              const TopicModel& model, const std::vector<double>& fractions) {
  std::vector<std::vector<int>> ql, il;
  for (const auto& d : queries) ql.push_back(d.labels);
  for (const auto& d : index) il.push_back(d.labels);
  return precision_at_fractions(model.text_vectors(queries), ql, model.text_vectors(index), il, fractions);
}

// ------------------------------------------------------------ classification

struct LogRegConfig {
  double l2 = 1e-3;
  std::size_t max_iterations = 2000;
  double tolerance = 1e-8;  // on the gradient norm
};

/// Softmax heads for single-label data, independent one-vs-all heads otherwise.
struct LogRegModel {
  std::size_t dim = 0;
  std::vector<int> classes;
  Matrix weights;  // classes x (dim + 1), bias last
  double l2 = 0.0;
  bool multi_label = false;
  std::vector<double> loss_history;
  std::size_t iterations = 0;

  double weight_norm() const {
    double acc = 0.0;
    for (std::size_t c = 0; c < weights.rows(); ++c) {
      for (std::size_t k = 0; k < dim; ++k) acc += weights(c, k) * weights(c, k);
    }
    return std::sqrt(acc);
  }

  Vector scores(std::span<const double> x) const {
    if (x.size() != dim) throw DimensionError("classifier expects dimension " + std::to_string(dim));
    Vector s(classes.size());
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const auto w = weights.row(c);
      s[c] = w[dim] + dot(w.first(dim), x);
    }
    return s;
  }

  std::vector<int> predict(std::span<const double> x) const {
    const Vector s = scores(x);
    if (!multi_label) return {classes[static_cast<std::size_t>(std::max_element(s.begin(), s.end()) - s.begin())]};
    std::vector<int> out;
    for (std::size_t c = 0; c < s.size(); ++c) {
      if (s[c] > 0.0) out.push_back(classes[c]);
    }
    return out;
  }
};

namespace detail {

/// Regularized mean cross-entropy and its gradient at w.
inline double logreg_objective(const Matrix& w, const std::vector<Vector>& X, const std::vector<std::vector<double>>& Y,
                               double l2, bool multi_label, Matrix* grad) {
  const std::size_t C = w.rows();
  const std::size_t dim = w.cols() - 1;
  const double inv_n = 1.0 / static_cast<double>(X.size());
  if (grad) grad->fill(0.0);
  double loss = 0.0;
  Vector z(C);
  for (std::size_t n = 0; n < X.size(); ++n) {
    for (std::size_t c = 0; c < C; ++c) z[c] = w(c, dim) + dot(w.row(c).first(dim), X[n]);
    Vector dz(C);
    if (multi_label) {
      for (std::size_t c = 0; c < C; ++c) {
        // log(1 + exp(z)) - y z, computed stably
        const double softplus = z[c] > 0 ? z[c] + std::log1p(std::exp(-z[c])) : std::log1p(std::exp(z[c]));
        loss += softplus - Y[n][c] * z[c];
        dz[c] = sigmoid(z[c]) - Y[n][c];
      }
    } else {
      const Vector lp = log_softmax(z);
      for (std::size_t c = 0; c < C; ++c) {
        loss -= Y[n][c] * lp[c];
        dz[c] = std::exp(lp[c]) - Y[n][c];
      }
    }
    if (grad) {
      for (std::size_t c = 0; c < C; ++c) {
        auto g = grad->row(c);
        const double d = dz[c] * inv_n;
        for (std::size_t k = 0; k < dim; ++k) g[k] += d * X[n][k];
        g[dim] += d;
      }
    }
  }
  loss *= inv_n;
  for (std::size_t c = 0; c < C; ++c) {
    for (std::size_t k = 0; k < dim; ++k) {
      loss += 0.5 * l2 * w(c, k) * w(c, k);
      if (grad) (*grad)(c, k) += l2 * w(c, k);
    }
  }
  return loss;
}

}  // namespace detail

/// Full-batch gradient descent with Armijo backtracking; starts from zero
/// weights so the fit is deterministic.
inline LogRegModel train_classifier(const std::vector<Vector>& X, const std::vector<std::vector<int>>& labels,
                                    bool multi_label, const LogRegConfig& cfg = {}) {
  if (X.empty() || X.size() != labels.size()) throw DimensionError("train_classifier: need one label set per vector");
  if (!(cfg.l2 >= 0.0)) throw Error("train_classifier: l2 strength must be >= 0");
  const std::size_t dim = X.front().size();
  for (const auto& x : X) {
    if (x.size() != dim) throw DimensionError("train_classifier: vectors differ in dimension");
  }
  std::set<int> class_set;
  for (std::size_t n = 0; n < labels.size(); ++n) {
    if (labels[n].empty()) throw Error("train_classifier: unlabeled training vector " + std::to_string(n));
    if (!multi_label && labels[n].size() != 1) throw Error("train_classifier: multi-label input without multi_label");
    class_set.insert(labels[n].begin(), labels[n].end());
  }
  if (class_set.size() < 2) throw Error("train_classifier: need at least 2 classes");

  LogRegModel model;
  model.dim = dim;
  model.classes.assign(class_set.begin(), class_set.end());
  model.l2 = cfg.l2;
  model.multi_label = multi_label;
  const std::size_t C = model.classes.size();
  std::vector<std::vector<double>> Y(X.size(), std::vector<double>(C, 0.0));
  for (std::size_t n = 0; n < labels.size(); ++n) {
    for (int l : labels[n]) {
      const auto c = std::lower_bound(model.classes.begin(), model.classes.end(), l) - model.classes.begin();
      Y[n][static_cast<std::size_t>(c)] = 1.0;
    }
  }

  Matrix w(C, dim + 1), grad(C, dim + 1), trial(C, dim + 1);
  double loss = detail::logreg_objective(w, X, Y, cfg.l2, multi_label, &grad);
  model.loss_history.push_back(loss);
  double step = 1.0;
  for (std::size_t it = 0; it < cfg.max_iterations; ++it) {
    const double gnorm2 = dot(grad.flat(), grad.flat());
    if (std::sqrt(gnorm2) <= cfg.tolerance) break;
    double trial_loss = 0.0;
    step = std::min(step * 2.0, 1e6);
    for (;;) {
      for (std::size_t k = 0; k < w.size(); ++k) trial.flat()[k] = w.flat()[k] - step * grad.flat()[k];
      trial_loss = detail::logreg_objective(trial, X, Y, cfg.l2, multi_label, nullptr);
      if (trial_loss <= loss - 0.5 * step * gnorm2 || step < 1e-20) break;
      step *= 0.5;
    }
    if (trial_loss > loss) break;  // no descent possible at machine precision
    std::swap(w, trial);
    loss = detail::logreg_objective(w, X, Y, cfg.l2, multi_label, &grad);
    model.loss_history.push_back(loss);
    model.iterations = it + 1;
  }
  model.weights = std::move(w);
  return model;
}

struct ClassificationReport {
  double macro_f1 = 0.0;
  double accuracy = 0.0;  // exact-match for multi-label
  std::vector<int> classes;
  std::vector<double> per_class_f1;
};

/// Unweighted mean over `classes` of 2TP / (2TP + FP + FN); an empty
/// denominator scores 0.
inline ClassificationReport macro_f1(const std::vector<std::vector<int>>& predicted,
                                     const std::vector<std::vector<int>>& truth, std::vector<int> classes) {
  if (predicted.size() != truth.size()) throw DimensionError("macro_f1: prediction/truth count mismatch");
  if (classes.empty()) throw Error("macro_f1: no classes");
  std::sort(classes.begin(), classes.end());
  ClassificationReport r;
  r.classes = classes;
  std::size_t exact = 0;
  std::vector<std::size_t> tp(classes.size()), fp(classes.size()), fn(classes.size());
  for (std::size_t n = 0; n < truth.size(); ++n) {
    std::set<int> p(predicted[n].begin(), predicted[n].end());
    std::set<int> t(truth[n].begin(), truth[n].end());
    exact += p == t;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const bool in_p = p.count(classes[c]) > 0;
      const bool in_t = t.count(classes[c]) > 0;
      tp[c] += in_p && in_t;
      fp[c] += in_p && !in_t;
      fn[c] += !in_p && in_t;
    }
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < classes.size(); ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    const double f1 = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
    r.per_class_f1.push_back(f1);
    sum += f1;
  }
  r.macro_f1 = sum / static_cast<double>(classes.size());
  r.accuracy = truth.empty() ? 0.0 : static_cast<double>(exact) / static_cast<double>(truth.size());
  return r;
}

/// Classes scored are the model's classes plus any label only seen in test.
inline ClassificationReport evaluate_classifier(const LogRegModel& model, const std::vector<Vector>& X,
                                                const std::vector<std::vector<int>>& labels) {
  if (X.size() != labels.size()) throw DimensionError("evaluate_classifier: need one label set per vector");
  std::set<int> classes(model.classes.begin(), model.classes.end());
  std::vector<std::vector<int>> predicted;
  for (std::size_t n = 0; n < X.size(); ++n) {
    predicted.push_back(model.predict(X[n]));
    classes.insert(labels[n].begin(), labels[n].end());
  }
  return macro_f1(predicted, labels, {classes.begin(), classes.end()});
}

}  // namespace ctxnade
