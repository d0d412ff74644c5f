#pragma once

// Generic per-document gradient training loop shared by every model.
//
// A Params type P participates by providing, via ADL:
//   std::vector<Parameter> make_parameters(P& value, P& grad);
//   P zeros_like(const P&);

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "ctxnade/corpus.hpp"
#include "ctxnade/numerics.hpp"

namespace ctxnade {

struct TrainConfig {
  OptimizerConfig optimizer;
  std::size_t epochs = 1000;
  std::uint64_t seed = 1;
  std::size_t batch_size = 1;
  std::size_t patience = 0;  // 0 disables early stopping
};

struct EpochStats {
  std::string phase;
  std::size_t epoch = 0;
  double train_nll_per_word = 0.0;
  double validation_ppl = std::numeric_limits<double>::quiet_NaN();
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 1-based index into epochs; 0 when no validation was run
  double best_validation_ppl = std::numeric_limits<double>::quiet_NaN();
  double final_validation_ppl = std::numeric_limits<double>::quiet_NaN();
  bool stopped_early = false;
};

inline std::mt19937_64 make_shuffle_rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0x5eedu};
  return std::mt19937_64(seq);
}

/// Runs cfg.epochs passes over docs in a freshly shuffled order each epoch.
/// grad_fn(doc, params, grads) accumulates gradients of -log p(doc) into
/// grads and returns -log p(doc). validate(params) returns an optional
/// held-out perplexity; when cfg.patience > 0 and it is available, training
/// stops after `patience` epochs without improvement and params are reset to
/// the best epoch.
template <class P, class GradFn, class ValidateFn>
TrainHistory run_training(P& params, const std::vector<Document>& docs, const TrainConfig& cfg, Optimizer& opt,
                          std::mt19937_64& rng, GradFn&& grad_fn, ValidateFn&& validate, const std::string& phase,
                          TrainHistory history = {}) {
  if (cfg.epochs == 0) return history;
  if (docs.empty()) throw Error("training split is empty");
  if (cfg.batch_size < 1) throw Error("batch size must be >= 1");

  P grads = zeros_like(params);
  auto slots = make_parameters(params, grads);
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::optional<P> best;
  double best_ppl = std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  auto zero_grads = [&] {
    for (auto& s : slots) std::fill(s.grad.begin(), s.grad.end(), 0.0);
  };

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total_nll = 0.0;
    std::size_t total_words = 0;
    std::size_t in_batch = 0;

    auto flush = [&] {
      if (in_batch == 0) return;
      if (in_batch > 1) {
        const double scale = 1.0 / static_cast<double>(in_batch);
        for (auto& s : slots) {
          for (auto& g : s.grad) g *= scale;
        }
      }
      opt.step(slots);
      zero_grads();
      in_batch = 0;
    };

    zero_grads();
    for (std::size_t idx : order) {
      const double nll = grad_fn(docs[idx], params, grads);
      if (!std::isfinite(nll)) {
        throw NumericError(phase + " epoch " + std::to_string(epoch) + ": non-finite loss on document " +
                           std::to_string(idx));
      }
      total_nll += nll;
      total_words += docs[idx].size();
      if (++in_batch == cfg.batch_size) flush();
    }
    flush();

    EpochStats stats;
    stats.phase = phase;
    stats.epoch = epoch;
    stats.train_nll_per_word = total_nll / static_cast<double>(total_words);
    if (std::optional<double> ppl = validate(params)) {
      stats.validation_ppl = *ppl;
      history.final_validation_ppl = *ppl;
      if (*ppl < best_ppl) {
        best_ppl = *ppl;
        history.best_validation_ppl = *ppl;
        history.best_epoch = history.epochs.size() + 1;
        since_best = 0;
        if (cfg.patience > 0) best = params;
      } else {
        ++since_best;
      }
    }
    history.epochs.push_back(stats);
    if (cfg.patience > 0 && best && since_best >= cfg.patience) {
      history.stopped_early = true;
      break;
    }
  }
  if (best) params = std::move(*best);
  return history;
}

}  // namespace ctxnade
