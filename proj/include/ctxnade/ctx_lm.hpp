#pragma once

// Language-model fused DocNADE.
//
// An LSTM reads [BOS, v_1, ..., v_{D-1}] using the columns of the shared
// word matrix W (optionally plus a frozen pre-trained table E) as its input
// embeddings. Its top output after i inputs is blended into the DocNADE
// hidden state for position i:
//
//   h_i = h_i^DN + lambda * h_i^LM,   p(v_i = w | ...) = softmax(b + U h_i)[w]
//
// W therefore receives gradient along two paths: the bag-of-words prefix
// sums and the LSTM input lookups. E never receives gradient.

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <type_traits>
#include <vector>

#include "ctxnade/corpus.hpp"
#include "ctxnade/docnade.hpp"
#include "ctxnade/numerics.hpp"
#include "ctxnade/training.hpp"

namespace ctxnade {

enum class EmbeddingMode { SharedW, SharedWPlusE };

inline std::string to_string(EmbeddingMode m) { return m == EmbeddingMode::SharedW ? "W" : "W+E"; }

struct MixtureConfig {
  double lambda = 0.0;
  EmbeddingMode mode = EmbeddingMode::SharedW;

  friend bool operator==(const MixtureConfig&, const MixtureConfig&) = default;
};

/// Gate rows are stacked as [input, forget, output, candidate], H rows each.
struct LSTMLayer {
  Matrix Wx;    // 4H x H_in
  Matrix Wh;    // 4H x H
  Vector bias;  // 4H

  friend bool operator==(const LSTMLayer&, const LSTMLayer&) = default;
};

struct LSTMParams {
  std::vector<LSTMLayer> layers;
  Vector w_bos;  // learned begin-of-document input, H

  std::size_t H() const { return w_bos.size(); }
  std::size_t depth() const { return layers.size(); }

  friend bool operator==(const LSTMParams&, const LSTMParams&) = default;
};

template <class P, class F>
  requires std::is_same_v<std::remove_const_t<P>, LSTMParams>
void for_each_tensor(P& p, F&& fn) {
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::string suffix = std::to_string(l + 1);
    fn("lstm_Wx_" + suffix, p.layers[l].Wx.flat());
    fn("lstm_Wh_" + suffix, p.layers[l].Wh.flat());
    fn("lstm_b_" + suffix, std::span(p.layers[l].bias));
  }
  fn("w_bos", std::span(p.w_bos));
}

inline LSTMParams zeros_like(const LSTMParams& p) {
  LSTMParams z;
  for (const auto& l : p.layers) {
    z.layers.push_back({Matrix(l.Wx.rows(), l.Wx.cols()), Matrix(l.Wh.rows(), l.Wh.cols()), Vector(l.bias.size(), 0.0)});
  }
  z.w_bos.assign(p.w_bos.size(), 0.0);
  return z;
}

/// Stacked LSTM of equal width H; forget-gate biases start at 1.
inline LSTMParams init_lstm(std::size_t H, std::size_t depth, std::uint64_t seed) {
  if (H < 1 || depth < 1) throw DimensionError("init_lstm: H and depth must be >= 1");
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  LSTMParams p;
  const double bound = detail::glorot_bound(H, H);
  for (std::size_t l = 0; l < depth; ++l) {
    LSTMLayer layer{Matrix(4 * H, H), Matrix(4 * H, H), Vector(4 * H, 0.0)};
    detail::fill_uniform(layer.Wx.flat(), bound, rng);
    detail::fill_uniform(layer.Wh.flat(), bound, rng);
    for (std::size_t j = H; j < 2 * H; ++j) layer.bias[j] = 1.0;
    p.layers.push_back(std::move(layer));
  }
  p.w_bos.assign(H, 0.0);
  detail::fill_uniform(p.w_bos, bound, rng);
  return p;
}

struct CtxModelParams {
  DocNADEParams dn;
  LSTMParams lm;
  MixtureConfig mix;
  std::shared_ptr<const EmbeddingTable> prior;  // required for SharedWPlusE; never trained

  std::size_t K() const { return dn.K(); }
  std::size_t H() const { return dn.H(); }

  void validate() const {
    if (!std::isfinite(mix.lambda) || mix.lambda < 0.0) throw Error("mixture weight lambda must be finite and >= 0");
    if (lm.H() != dn.H()) throw DimensionError("LSTM width must equal the DocNADE hidden size");
    if (mix.mode == EmbeddingMode::SharedWPlusE) {
      if (!prior) throw Error("embedding mode W+E requires an embedding table");
      if (prior->dimension() != dn.H() || prior->vocab_size() != dn.K()) {
        throw DimensionError("embedding table is " + std::to_string(prior->vocab_size()) + "x" +
                             std::to_string(prior->dimension()) + ", model needs " + std::to_string(dn.K()) + "x" +
                             std::to_string(dn.H()));
      }
    }
  }
};

template <class P, class F>
  requires std::is_same_v<std::remove_const_t<P>, CtxModelParams>
void for_each_tensor(P& p, F&& fn) {
  for_each_tensor(p.dn, fn);
  for_each_tensor(p.lm, fn);
}

inline CtxModelParams zeros_like(const CtxModelParams& p) {
  return {zeros_like(p.dn), zeros_like(p.lm), p.mix, p.prior};
}

inline std::vector<Parameter> make_parameters(CtxModelParams& value, CtxModelParams& grad) {
  return detail::zip_parameters(value, grad);
}

/// DocNADE part identical to init_params(K, H, seed, g, depth); LSTM of the same depth.
inline CtxModelParams init_ctx_params(std::size_t K, std::size_t H, std::uint64_t seed, Activation g,
                                      std::size_t depth, MixtureConfig mix,
                                      std::shared_ptr<const EmbeddingTable> prior = nullptr) {
  CtxModelParams p{init_params(K, H, seed, g, depth), init_lstm(H, depth, seed), mix, std::move(prior)};
  p.validate();
  return p;
}

inline constexpr WordId kBos = std::numeric_limits<WordId>::max();

inline Vector lm_input_vector(WordId v, const CtxModelParams& p) {
  if (v == kBos) return p.lm.w_bos;
  check_word(v, p.K());
  const std::size_t H = p.H();
  const std::size_t K = p.K();
  Vector x(H);
  const double* W = p.dn.W.flat().data();
  for (std::size_t j = 0; j < H; ++j) x[j] = W[j * K + v];
  if (p.mix.mode == EmbeddingMode::SharedWPlusE) {
    const auto e = p.prior->E.row(v);
    for (std::size_t j = 0; j < H; ++j) x[j] += e[j];
  }
  return x;
}

struct LMState {
  std::vector<Vector> h;  // per layer
  std::vector<Vector> c;

  const Vector& top() const { return h.back(); }
};

inline LMState initial_lm_state(const LSTMParams& p) {
  return {std::vector<Vector>(p.depth(), Vector(p.H(), 0.0)), std::vector<Vector>(p.depth(), Vector(p.H(), 0.0))};
}

/// Everything one cell evaluation needs for its backward pass.
struct LSTMCellCache {
  Vector x, h_prev, c_prev;
  Vector i, f, o, g;
  Vector c, h;
};

inline LSTMCellCache lstm_cell_forward(const LSTMLayer& layer, std::span<const double> x, const Vector& h_prev,
                                       const Vector& c_prev) {
  const std::size_t H = h_prev.size();
  Vector z = affine(layer.Wx, x, layer.bias);
  const Vector zh = affine(layer.Wh, h_prev, Vector(4 * H, 0.0));
  for (std::size_t r = 0; r < z.size(); ++r) z[r] += zh[r];
  LSTMCellCache cache{Vector(x.begin(), x.end()), h_prev, c_prev, Vector(H), Vector(H), Vector(H), Vector(H),
                      Vector(H), Vector(H)};
  for (std::size_t j = 0; j < H; ++j) {
    cache.i[j] = sigmoid(z[j]);
    cache.f[j] = sigmoid(z[H + j]);
    cache.o[j] = sigmoid(z[2 * H + j]);
    cache.g[j] = std::tanh(z[3 * H + j]);
    cache.c[j] = cache.f[j] * c_prev[j] + cache.i[j] * cache.g[j];
    cache.h[j] = cache.o[j] * std::tanh(cache.c[j]);
  }
  return cache;
}

/// One time step through every layer; caches are appended per layer when given.
inline LMState lstm_step(const LMState& state, std::span<const double> x, const LSTMParams& p,
                         std::vector<LSTMCellCache>* caches = nullptr) {
  if (x.size() != p.H() || state.h.size() != p.depth()) throw DimensionError("lstm_step: shape mismatch");
  LMState next = state;
  std::span<const double> input = x;
  for (std::size_t l = 0; l < p.depth(); ++l) {
    LSTMCellCache cache = lstm_cell_forward(p.layers[l], input, state.h[l], state.c[l]);
    next.h[l] = cache.h;
    next.c[l] = cache.c;
    input = next.h[l];
    if (caches) caches->push_back(std::move(cache));
  }
  return next;
}

/// h_i^LM for i = 1..D: the top output after consuming [BOS, v_1, ..., v_{i-1}].
inline std::vector<Vector> lm_hidden_sequence(const Document& doc, const CtxModelParams& p, OpCounts* counts = nullptr,
                                              std::vector<std::vector<LSTMCellCache>>* tape = nullptr) {
  require_nonempty(doc);
  std::vector<Vector> out;
  out.reserve(doc.size());
  LMState state = initial_lm_state(p.lm);
  for (std::size_t t = 0; t < doc.size(); ++t) {
    const Vector x = lm_input_vector(t == 0 ? kBos : doc.tokens[t - 1], p);
    std::vector<LSTMCellCache>* step_cache = nullptr;
    if (tape) step_cache = &tape->emplace_back();
    state = lstm_step(state, x, p.lm, step_cache);
    if (counts) ++counts->lstm_steps;
    out.push_back(state.top());
  }
  return out;
}

inline Vector combined_hidden(std::span<const double> h_dn, std::span<const double> h_lm, double lambda) {
  if (h_dn.size() != h_lm.size()) throw DimensionError("combined_hidden: dimension mismatch");
  Vector h(h_dn.size());
  for (std::size_t j = 0; j < h.size(); ++j) h[j] = h_dn[j] + lambda * h_lm[j];
  return h;
}

inline double ctx_doc_log_likelihood(const Document& doc, const CtxModelParams& p, OpCounts* counts = nullptr) {
  require_nonempty(doc);
  const std::vector<Vector> h_lm = lm_hidden_sequence(doc, p, counts);
  PrefixActivation act = start_prefix(p.dn);
  double logp = 0.0;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const WordId v = doc.tokens[i];
    const Vector h = combined_hidden(hidden(act, p.dn), h_lm[i], p.mix.lambda);
    if (counts) ++counts->hidden_evals;
    logp += conditional_log_prob(h, p.dn)[v];
    prefix_advance(act, v, p.dn, counts);
  }
  return logp;
}

/// Selects which routes contribute to the gradient of the shared matrix W.
struct WordMatrixPaths {
  bool prefix = true;    // DocNADE bag-of-words accumulator
  bool lm_input = true;  // LSTM embedding lookups
};

namespace detail {

/// BPTT through one layer given dL/dh at every time step; returns dL/dx per step.
inline std::vector<Vector> lstm_layer_backward(const LSTMLayer& layer, const std::vector<const LSTMCellCache*>& cells,
                                               const std::vector<Vector>& dh_ext, LSTMLayer& grad) {
  const std::size_t T = cells.size();
  const std::size_t H = dh_ext.front().size();
  const std::size_t H_in = layer.Wx.cols();
  std::vector<Vector> dx(T, Vector(H_in, 0.0));
  Vector dh_next(H, 0.0), dc_next(H, 0.0);
  Vector dz(4 * H);
  for (std::size_t t = T; t-- > 0;) {
    const LSTMCellCache& cc = *cells[t];
    for (std::size_t j = 0; j < H; ++j) {
      const double dh = dh_ext[t][j] + dh_next[j];
      const double tc = std::tanh(cc.c[j]);
      const double dc = dc_next[j] + dh * cc.o[j] * (1.0 - tc * tc);
      dz[j] = dc * cc.g[j] * cc.i[j] * (1.0 - cc.i[j]);
      dz[H + j] = dc * cc.c_prev[j] * cc.f[j] * (1.0 - cc.f[j]);
      dz[2 * H + j] = dh * tc * cc.o[j] * (1.0 - cc.o[j]);
      dz[3 * H + j] = dc * cc.i[j] * (1.0 - cc.g[j] * cc.g[j]);
      dc_next[j] = dc * cc.f[j];
    }
    for (std::size_t r = 0; r < 4 * H; ++r) grad.bias[r] += dz[r];
    add_outer(grad.Wx, dz, cc.x);
    add_outer(grad.Wh, dz, cc.h_prev);
    add_transpose_product(layer.Wx, dz, dx[t]);
    std::fill(dh_next.begin(), dh_next.end(), 0.0);
    add_transpose_product(layer.Wh, dz, dh_next);
  }
  return dx;
}

}  // namespace detail

/// Accumulates exact gradients of -log p(doc) for every DocNADE and LSTM
/// tensor (full BPTT) into grads and returns -log p(doc).
inline double ctx_doc_gradients(const Document& doc, const CtxModelParams& p, CtxModelParams& grads,
                                WordMatrixPaths paths = {}) {
  require_nonempty(doc);
  const std::size_t D = doc.size();
  const std::size_t H = p.H();
  const std::size_t K = p.K();
  const double lambda = p.mix.lambda;

  std::vector<std::vector<LSTMCellCache>> lm_tape;
  lm_tape.reserve(D);
  const std::vector<Vector> h_lm = lm_hidden_sequence(doc, p, nullptr, &lm_tape);
  const DocNADETape dn_tape = forward_tape(doc, p.dn);

  std::vector<Vector> dh_dn(D), dh_lm(D);
  double logp = 0.0;
  for (std::size_t i = 0; i < D; ++i) {
    const Vector h = combined_hidden(dn_tape.layers[i].back(), h_lm[i], lambda);
    auto [lp, dh] = output_backward(h, doc.tokens[i], p.dn, grads.dn);
    logp += lp;
    dh_lm[i].resize(H);
    for (std::size_t j = 0; j < H; ++j) dh_lm[i][j] = lambda * dh[j];
    dh_dn[i] = std::move(dh);
  }
  backward_tape(doc, p.dn, dn_tape, dh_dn, grads.dn, paths.prefix);

  std::vector<Vector> dh_ext = std::move(dh_lm);
  for (std::size_t l = p.lm.depth(); l-- > 0;) {
    std::vector<const LSTMCellCache*> cells(D);
    for (std::size_t t = 0; t < D; ++t) cells[t] = &lm_tape[t][l];
    dh_ext = detail::lstm_layer_backward(p.lm.layers[l], cells, dh_ext, grads.lm.layers[l]);
  }
  // dh_ext now holds dL/dx for the layer-1 inputs [BOS, v_1, ..., v_{D-1}].
  for (std::size_t j = 0; j < H; ++j) grads.lm.w_bos[j] += dh_ext[0][j];
  if (paths.lm_input) {
    double* gW = grads.dn.W.flat().data();
    for (std::size_t t = 1; t < D; ++t) {
      const WordId v = doc.tokens[t - 1];
      for (std::size_t j = 0; j < H; ++j) gW[j * K + v] += dh_ext[t][j];
    }
  }
  return -logp;
}

/// Document vector h^DN(v*) + lambda * h^LM after reading [BOS, v_1, ..., v_N].
inline Vector text_to_vec(const Document& doc, const CtxModelParams& p) {
  require_nonempty(doc);
  const Vector h_dn = doc_representation(doc, p.dn);
  LMState state = initial_lm_state(p.lm);
  state = lstm_step(state, lm_input_vector(kBos, p), p.lm);
  for (WordId v : doc.tokens) state = lstm_step(state, lm_input_vector(v, p), p.lm);
  return combined_hidden(h_dn, state.top(), p.mix.lambda);
}

struct CtxTrainConfig {
  TrainConfig base;
  std::size_t pretrain_epochs = 10;
};

struct CtxTrainResult {
  CtxModelParams params;
  TrainHistory history;
};

/// Phase one trains with lambda forced to 0 (the LSTM sees zero gradient);
/// phase two trains jointly at the configured lambda for base.epochs passes.
/// Validation perplexity is the exact DocNADE likelihood (lambda = 0).
inline CtxTrainResult pretrain_then_train(const std::vector<Document>& train_docs,
                                          const std::vector<Document>& validation, CtxModelParams init,
                                          const CtxTrainConfig& cfg) {
  if (train_docs.empty()) throw Error("pretrain_then_train: training split is empty");
  init.validate();
  CtxTrainResult result{std::move(init), {}};
  Optimizer opt(cfg.base.optimizer);
  auto rng = make_shuffle_rng(cfg.base.seed);
  auto grad_fn = [](const Document& d, const CtxModelParams& p, CtxModelParams& g) {
    return ctx_doc_gradients(d, p, g);
  };
  auto validate = [&](const CtxModelParams& p) -> std::optional<double> {
    if (validation.empty()) return std::nullopt;
    return mean_perplexity(validation, [&](const Document& d) { return doc_log_likelihood(d, p.dn); });
  };

  const double lambda = result.params.mix.lambda;
  TrainConfig phase1 = cfg.base;
  phase1.epochs = cfg.pretrain_epochs;
  phase1.patience = 0;
  result.params.mix.lambda = 0.0;
  result.history = run_training(result.params, train_docs, phase1, opt, rng, grad_fn, validate, "pretrain");
  result.params.mix.lambda = lambda;
  result.history =
      run_training(result.params, train_docs, cfg.base, opt, rng, grad_fn, validate, "joint", std::move(result.history));
  return result;
}

}  // namespace ctxnade
