#pragma once

// Bag-of-words neural autoregressive topic model.
//
// Each conditional p(v_i = w | v_<i) is a softmax over b + U h_i where
// h_i = g(e + sum_{k<i} W[:, v_k]). The running sum is carried across
// positions, so a document of length D costs D accumulator additions and
// D hidden evaluations. Deep variants stack g(e_d + W_d h_{d-1}) layers.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "ctxnade/corpus.hpp"
#include "ctxnade/numerics.hpp"
#include "ctxnade/training.hpp"

namespace ctxnade {

/// Instrumentation for the linear-cost invariants.
struct OpCounts {
  std::size_t hidden_evals = 0;
  std::size_t accumulator_adds = 0;
  std::size_t lstm_steps = 0;
};

struct DeepLayer {
  Matrix W;  // H x H
  Vector e;  // H

  friend bool operator==(const DeepLayer&, const DeepLayer&) = default;
};

struct DocNADEParams {
  Activation activation = Activation::Sigmoid;
  Matrix W;  // H x K; column W[:, v] is word v, row W[j, :] is topic j
  Matrix U;  // K x H
  Vector b;  // K
  Vector e;  // H
  std::vector<DeepLayer> layers;  // layers 2..depth

  std::size_t K() const { return W.cols(); }
  std::size_t H() const { return W.rows(); }
  std::size_t depth() const { return layers.size() + 1; }

  friend bool operator==(const DocNADEParams&, const DocNADEParams&) = default;
};

/// Visits every trainable tensor in declaration order.
template <class P, class F>
  requires std::is_same_v<std::remove_const_t<P>, DocNADEParams>
void for_each_tensor(P& p, F&& fn) {
  fn("W", p.W.flat());
  fn("U", p.U.flat());
  fn("b", std::span(p.b));
  fn("e", std::span(p.e));
  for (std::size_t d = 0; d < p.layers.size(); ++d) {
    const std::string suffix = std::to_string(d + 2);
    fn("W_" + suffix, p.layers[d].W.flat());
    fn("e_" + suffix, std::span(p.layers[d].e));
  }
}

inline DocNADEParams zeros_like(const DocNADEParams& p) {
  DocNADEParams z;
  z.activation = p.activation;
  z.W = Matrix(p.W.rows(), p.W.cols());
  z.U = Matrix(p.U.rows(), p.U.cols());
  z.b.assign(p.b.size(), 0.0);
  z.e.assign(p.e.size(), 0.0);
  for (const auto& l : p.layers) z.layers.push_back({Matrix(l.W.rows(), l.W.cols()), Vector(l.e.size(), 0.0)});
  return z;
}

namespace detail {

template <class P>
std::vector<Parameter> zip_parameters(P& value, P& grad) {
  std::vector<Parameter> out;
  for_each_tensor(value, [&](const std::string& name, std::span<double> v) { out.push_back({name, v, {}}); });
  std::size_t k = 0;
  for_each_tensor(grad, [&](const std::string&, std::span<double> g) { out[k++].grad = g; });
  return out;
}

inline void fill_uniform(std::span<double> xs, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& x : xs) x = dist(rng);
}

inline double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

}  // namespace detail

inline std::vector<Parameter> make_parameters(DocNADEParams& value, DocNADEParams& grad) {
  return detail::zip_parameters(value, grad);
}

/// Weights uniform in +-sqrt(6 / (fan_in + fan_out)), biases zero.
inline DocNADEParams init_params(std::size_t K, std::size_t H, std::uint64_t seed, Activation g = Activation::Sigmoid,
                                 std::size_t depth = 1) {
  if (K < 1 || H < 1) throw DimensionError("init_params: K and H must be >= 1");
  if (depth < 1) throw DimensionError("init_params: depth must be >= 1");
  std::mt19937_64 rng(seed);
  DocNADEParams p;
  p.activation = g;
  p.W = Matrix(H, K);
  p.U = Matrix(K, H);
  p.b.assign(K, 0.0);
  p.e.assign(H, 0.0);
  detail::fill_uniform(p.W.flat(), detail::glorot_bound(H, K), rng);
  detail::fill_uniform(p.U.flat(), detail::glorot_bound(H, K), rng);
  for (std::size_t d = 2; d <= depth; ++d) {
    DeepLayer layer{Matrix(H, H), Vector(H, 0.0)};
    detail::fill_uniform(layer.W.flat(), detail::glorot_bound(H, H), rng);
    p.layers.push_back(std::move(layer));
  }
  return p;
}

inline void check_word(WordId v, std::size_t K) {
  if (v >= K) throw DimensionError("word id " + std::to_string(v) + " out of range for K=" + std::to_string(K));
}

/// Running pre-activation e + sum_{k<i} W[:, v_k] at position i (1-based).
struct PrefixActivation {
  Vector a;
  std::size_t position = 1;
};

inline PrefixActivation start_prefix(const DocNADEParams& p) { return {p.e, 1}; }

inline void prefix_advance(PrefixActivation& act, WordId v, const DocNADEParams& p, OpCounts* counts = nullptr) {
  check_word(v, p.K());
  const std::size_t K = p.K();
  const double* col = p.W.flat().data() + v;
  for (std::size_t j = 0; j < act.a.size(); ++j) act.a[j] += col[j * K];
  ++act.position;
  if (counts) ++counts->accumulator_adds;
}

/// Outputs of every layer for a given pre-activation; back() is the top.
inline std::vector<Vector> hidden_layers(std::span<const double> a, const DocNADEParams& p) {
  std::vector<Vector> out;
  out.reserve(p.depth());
  out.push_back(activate(a, p.activation));
  for (const auto& layer : p.layers) out.push_back(activate(affine(layer.W, out.back(), layer.e), p.activation));
  return out;
}

inline Vector hidden(const PrefixActivation& act, const DocNADEParams& p) { return hidden_layers(act.a, p).back(); }

/// log p(v_i = w | ...) for every w, given the (possibly combined) hidden state h.
inline Vector conditional_log_prob(std::span<const double> h, const DocNADEParams& p) {
  return log_softmax(affine(p.U, h, p.b));
}

/// Accumulates db, dU for -log p(v | h) and returns (log p(v | h), dL/dh).
inline std::pair<double, Vector> output_backward(std::span<const double> h, WordId v, const DocNADEParams& p,
                                                 DocNADEParams& grads) {
  const Vector logp = conditional_log_prob(h, p);
  Vector dlogits(logp.size());
  for (std::size_t w = 0; w < logp.size(); ++w) dlogits[w] = std::exp(logp[w]);
  dlogits[v] -= 1.0;
  for (std::size_t w = 0; w < dlogits.size(); ++w) grads.b[w] += dlogits[w];
  add_outer(grads.U, dlogits, h);
  Vector dh(h.size(), 0.0);
  add_transpose_product(p.U, dlogits, dh);
  return {logp[v], std::move(dh)};
}

inline void require_nonempty(const Document& doc) {
  if (doc.empty()) throw Error("document is empty");
}

inline double doc_log_likelihood(const Document& doc, const DocNADEParams& p, OpCounts* counts = nullptr) {
  require_nonempty(doc);
  PrefixActivation act = start_prefix(p);
  double logp = 0.0;
  for (WordId v : doc.tokens) {
    check_word(v, p.K());
    const Vector h = hidden(act, p);
    if (counts) ++counts->hidden_evals;
    logp += conditional_log_prob(h, p)[v];
    prefix_advance(act, v, p, counts);
  }
  return logp;
}

/// Per-position layer outputs kept for the backward pass.
struct DocNADETape {
  std::vector<std::vector<Vector>> layers;  // [position][layer]
};

inline DocNADETape forward_tape(const Document& doc, const DocNADEParams& p, OpCounts* counts = nullptr) {
  require_nonempty(doc);
  DocNADETape tape;
  tape.layers.reserve(doc.size());
  PrefixActivation act = start_prefix(p);
  for (WordId v : doc.tokens) {
    check_word(v, p.K());
    tape.layers.push_back(hidden_layers(act.a, p));
    if (counts) ++counts->hidden_evals;
    prefix_advance(act, v, p, counts);
  }
  return tape;
}

/// Back-propagates dL/dh_top at every position into W, e and the deep layers.
/// W's column for word v_k collects the pre-activation gradients of every
/// later position, which is a reverse running sum.
inline void backward_tape(const Document& doc, const DocNADEParams& p, const DocNADETape& tape,
                          const std::vector<Vector>& dh_top, DocNADEParams& grads,
                          bool accumulate_word_columns = true) {
  const std::size_t D = doc.size();
  const std::size_t H = p.H();
  const std::size_t K = p.K();
  Vector later(H, 0.0);  // sum of pre-activation gradients at positions > i
  double* gW = grads.W.flat().data();
  for (std::size_t i = D; i-- > 0;) {
    const auto& hs = tape.layers[i];
    Vector dz(H);
    for (std::size_t j = 0; j < H; ++j) dz[j] = dh_top[i][j] * activation_grad_from_output(hs.back()[j], p.activation);
    for (std::size_t d = p.layers.size(); d-- > 0;) {
      auto& gl = grads.layers[d];
      for (std::size_t j = 0; j < H; ++j) gl.e[j] += dz[j];
      add_outer(gl.W, dz, hs[d]);
      Vector dh_below(H, 0.0);
      add_transpose_product(p.layers[d].W, dz, dh_below);
      for (std::size_t j = 0; j < H; ++j) dz[j] = dh_below[j] * activation_grad_from_output(hs[d][j], p.activation);
    }
    const WordId v = doc.tokens[i];
    if (accumulate_word_columns) {
      for (std::size_t j = 0; j < H; ++j) gW[j * K + v] += later[j];
    }
    for (std::size_t j = 0; j < H; ++j) {
      grads.e[j] += dz[j];
      later[j] += dz[j];
    }
  }
}

/// Accumulates gradients of -log p(doc) into grads and returns -log p(doc).
inline double doc_gradients(const Document& doc, const DocNADEParams& p, DocNADEParams& grads) {
  const DocNADETape tape = forward_tape(doc, p);
  std::vector<Vector> dh(doc.size());
  double logp = 0.0;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    auto [lp, d] = output_backward(tape.layers[i].back(), doc.tokens[i], p, grads);
    logp += lp;
    dh[i] = std::move(d);
  }
  backward_tape(doc, p, tape, dh, grads);
  return -logp;
}

/// h(v*) = g(e + sum over the whole document), composed through deep layers.
inline Vector doc_representation(const Document& doc, const DocNADEParams& p) {
  require_nonempty(doc);
  PrefixActivation act = start_prefix(p);
  for (WordId v : doc.tokens) prefix_advance(act, v, p);
  return hidden(act, p);
}

/// exp of the mean per-document, per-word negative log-likelihood.
template <class LogProbFn>
double mean_perplexity(const std::vector<Document>& docs, LogProbFn&& log_prob) {
  if (docs.empty()) throw Error("perplexity: empty document set");
  double acc = 0.0;
  for (const auto& d : docs) acc += log_prob(d) / static_cast<double>(d.size());
  return std::exp(-acc / static_cast<double>(docs.size()));
}

struct DocNADETrainResult {
  DocNADEParams params;
  TrainHistory history;
};

/// Trains from init_params(K, H, seed, g, depth). The validation split drives
/// early stopping when cfg.patience > 0.
inline DocNADETrainResult train(const std::vector<Document>& train_docs, const std::vector<Document>& validation,
                                std::size_t K, std::size_t H, Activation g, std::size_t depth, const TrainConfig& cfg) {
  if (train_docs.empty()) throw Error("train: training split is empty");
  DocNADETrainResult result{init_params(K, H, cfg.seed, g, depth), {}};
  Optimizer opt(cfg.optimizer);
  auto rng = make_shuffle_rng(cfg.seed);
  result.history = run_training(
      result.params, train_docs, cfg, opt, rng,
      [](const Document& d, const DocNADEParams& p, DocNADEParams& gr) { return doc_gradients(d, p, gr); },
      [&](const DocNADEParams& p) -> std::optional<double> {
        if (validation.empty()) return std::nullopt;
        return mean_perplexity(validation, [&](const Document& d) { return doc_log_likelihood(d, p); });
      },
      "train");
  return result;
}

}  // namespace ctxnade
