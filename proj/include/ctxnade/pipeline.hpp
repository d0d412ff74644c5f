#pragma once

// End-to-end commands shared by the CLI and the integration tests: corpus
// preparation, training, evaluation and the lambda / training-fraction sweeps.
// Every report is written as CSV under the configured output directory.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <numeric>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ctxnade/checkpoint.hpp"
#include "ctxnade/config.hpp"
#include "ctxnade/corpus.hpp"
#include "ctxnade/ctx_lm.hpp"
#include "ctxnade/docnade.hpp"
#include "ctxnade/eval.hpp"
#include "ctxnade/model.hpp"

namespace ctxnade {

/// Shortest round-trip decimal form, so reports are byte-stable.
inline std::string fmt_num(double x) {
  if (std::isnan(x)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header) : out_(path) {
    if (!out_) throw Error("cannot write '" + path.string() + "'");
    row(header);
  }
  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
    out_ << '\n';
  }

 private:
  std::ofstream out_;
};

inline std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir.empty() ? "." : dir);
  std::filesystem::create_directories(p);
  return p;
}

inline VocabOptions vocab_options(const RunConfig& cfg) {
  VocabOptions o;
  o.mode = cfg.vocab_mode;
  if (cfg.max_vocab > 0) o.max_size = cfg.max_vocab;
  o.min_count = cfg.min_count;
  if (!cfg.stopwords.empty()) {
    std::ifstream in(cfg.stopwords);
    if (!in) throw CorpusError("cannot open stopword file '" + cfg.stopwords + "'");
    std::string w;
    while (in >> w) o.stopwords.insert(detail::lowercase(w));
  }
  return o;
}

inline void truncate_documents(std::vector<Document>& docs, std::size_t max_len) {
  if (max_len == 0) return;
  for (auto& d : docs) {
    if (d.tokens.size() > max_len) d.tokens.resize(max_len);
  }
}

/// Deterministic subsample of ceil(f * n) documents kept in original order.
inline std::vector<Document> subsample(const std::vector<Document>& docs, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("training fraction must lie in (0, 1]");
  if (fraction == 1.0) {
    if (docs.size() < 2) throw Error("training fraction 1 yields fewer than 2 documents");
    return docs;
  }
  const std::size_t keep = retrieval_count(fraction, docs.size());
  if (keep < 2) throw Error("training fraction " + fmt_num(fraction) + " yields fewer than 2 documents");
  std::vector<std::size_t> idx(docs.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto rng = make_shuffle_rng(seed ^ 0xf4ac7105ULL);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(keep);
  std::sort(idx.begin(), idx.end());
  std::vector<Document> out;
  for (auto i : idx) out.push_back(docs[i]);
  return out;
}

inline CorpusSplit load_split(const RunConfig& cfg, Diagnostics* diag = nullptr) {
  if (cfg.train.empty()) throw ConfigError("train: a training corpus is required");
  const auto train = load_corpus(cfg.train, diag);
  const auto valid = cfg.valid.empty() ? std::vector<RawRecord>{} : load_corpus(cfg.valid, diag);
  const auto test = cfg.test.empty() ? std::vector<RawRecord>{} : load_corpus(cfg.test, diag);
  CorpusSplit split = make_corpus_split(train, valid, test, vocab_options(cfg), diag);
  truncate_documents(split.train, cfg.max_doc_length);
  truncate_documents(split.validation, cfg.max_doc_length);
  truncate_documents(split.test, cfg.max_doc_length);
  if (cfg.train_fraction < 1.0) split.train = subsample(split.train, cfg.train_fraction, cfg.seed);
  return split;
}

/// Encodes a TSV corpus with an existing vocabulary (checkpoint evaluation).
inline std::vector<Document> load_encoded(const std::string& path, const Vocabulary& vocab,
                                          std::vector<std::string>& label_names, const RunConfig& cfg,
                                          Diagnostics* diag = nullptr) {
  auto docs = encode_records(load_corpus(path, diag), vocab, label_names, path, diag);
  truncate_documents(docs, cfg.max_doc_length);
  return docs;
}

struct TrainOutcome {
  Checkpoint checkpoint;
  TrainHistory history;
};

inline TrainOutcome train_model(const RunConfig& cfg, const CorpusSplit& split, Diagnostics* diag = nullptr) {
  cfg.validate();
  const std::size_t K = split.vocabulary.size();
  TrainConfig tc;
  tc.optimizer = cfg.optimizer_config();
  tc.epochs = cfg.epochs;
  tc.seed = cfg.seed;
  tc.batch_size = cfg.batch_size;
  tc.patience = cfg.patience;
  const Activation g = cfg.resolved_activation();

  TrainOutcome outcome;
  outcome.checkpoint.vocabulary = split.vocabulary;
  auto& model = outcome.checkpoint.model;
  model.kind = cfg.model;
  if (cfg.model == ModelKind::DocNADE) {
    auto r = train(split.train, split.validation, K, cfg.hidden, g, cfg.depth, tc);
    model.params.dn = std::move(r.params);
    outcome.history = std::move(r.history);
    return outcome;
  }
  MixtureConfig mix{cfg.lambda, EmbeddingMode::SharedW};
  std::shared_ptr<const EmbeddingTable> prior;
  if (cfg.model == ModelKind::CtxDocNADEe) {
    mix.mode = EmbeddingMode::SharedWPlusE;
    prior = std::make_shared<const EmbeddingTable>(load_embeddings(cfg.embeddings, split.vocabulary, cfg.hidden, diag));
  }
  CtxTrainConfig ctc{tc, cfg.pretrain_epochs};
  auto r = pretrain_then_train(split.train, split.validation,
                               init_ctx_params(K, cfg.hidden, cfg.seed, g, cfg.depth, mix, prior), ctc);
  model.params = std::move(r.params);
  outcome.history = std::move(r.history);
  return outcome;
}

// ------------------------------------------------------------------ reports

inline void write_history(const TrainHistory& h, const std::filesystem::path& path) {
  CsvWriter csv(path, {"phase", "epoch", "train_nll_per_word", "validation_ppl"});
  for (const auto& e : h.epochs) {
    csv.row({e.phase, std::to_string(e.epoch), fmt_num(e.train_nll_per_word), fmt_num(e.validation_ppl)});
  }
}

inline void write_ppl(const PPLReport& r, const std::filesystem::path& dir) {
  {
    CsvWriter csv(dir / "ppl.csv", {"doc", "tokens", "log_prob"});
    for (std::size_t t = 0; t < r.doc_count; ++t) {
      csv.row({std::to_string(t), std::to_string(r.token_counts[t]), fmt_num(r.per_doc_logprob[t])});
    }
  }
  CsvWriter csv(dir / "ppl_summary.csv", {"metric", "value"});
  csv.row({"ppl", fmt_num(r.ppl)});
  csv.row({"documents", std::to_string(r.doc_count)});
  csv.row({"tokens", std::to_string(std::accumulate(r.token_counts.begin(), r.token_counts.end(), std::size_t{0}))});
  csv.row({"oov_dropped", std::to_string(r.oov_dropped)});
}

inline void write_topics(const std::vector<Topic>& topics, const Vocabulary& vocab, const std::filesystem::path& path) {
  CsvWriter csv(path, {"topic", "rank", "word", "score"});
  for (const auto& t : topics) {
    for (std::size_t n = 0; n < t.words.size(); ++n) {
      csv.row({std::to_string(t.id), std::to_string(n + 1), vocab.token(t.words[n]), fmt_num(t.scores[n])});
    }
  }
}

inline void write_coherence(const CoherenceReport& r, const std::vector<Topic>& topics, const Vocabulary& vocab,
                            const std::filesystem::path& dir) {
  {
    CsvWriter csv(dir / "coherence.csv", {"topic", "npmi", "words"});
    for (std::size_t j = 0; j < r.topic_npmi.size(); ++j) {
      std::string words;
      for (std::size_t n = 0; n < topics[j].words.size(); ++n) words += (n ? " " : "") + vocab.token(topics[j].words[n]);
      csv.row({std::to_string(topics[j].id), fmt_num(r.topic_npmi[j]), words});
    }
  }
  CsvWriter csv(dir / "coherence_summary.csv", {"metric", "value"});
  csv.row({"mean_npmi", fmt_num(r.mean)});
  csv.row({"window", std::to_string(r.window)});
  csv.row({"top_n", std::to_string(r.top_n)});
  csv.row({"windows", std::to_string(r.windows)});
  csv.row({"excluded_pairs", std::to_string(r.excluded_pairs)});
  csv.row({"zero_cooccurrence_pairs", std::to_string(r.zero_cooccurrence_pairs)});
}

inline void write_retrieval(const RetrievalReport& r, const std::filesystem::path& path) {
  CsvWriter csv(path, {"fraction", "precision"});
  for (std::size_t f = 0; f < r.fractions.size(); ++f) csv.row({fmt_num(r.fractions[f]), fmt_num(r.mean_precision[f])});
}

inline void write_classification(const ClassificationReport& r, const std::vector<std::string>& label_names,
                                 const std::filesystem::path& path) {
  CsvWriter csv(path, {"metric", "value"});
  csv.row({"macro_f1", fmt_num(r.macro_f1)});
  csv.row({"accuracy", fmt_num(r.accuracy)});
  for (std::size_t c = 0; c < r.classes.size(); ++c) {
    const auto id = static_cast<std::size_t>(r.classes[c]);
    const std::string name = id < label_names.size() ? label_names[id] : std::to_string(id);
    csv.row({"f1:" + name, fmt_num(r.per_class_f1[c])});
  }
}

// --------------------------------------------------------------- evaluation

inline std::vector<std::vector<int>> labels_of(const std::vector<Document>& docs) {
  std::vector<std::vector<int>> out;
  for (const auto& d : docs) out.push_back(d.labels);
  return out;
}

inline bool any_multi_label(const std::vector<Document>& docs) {
  return std::any_of(docs.begin(), docs.end(), [](const Document& d) { return d.labels.size() > 1; });
}

inline ClassificationReport classify(const TopicModel& model, const std::vector<Document>& train_docs,
                                     const std::vector<Document>& test_docs, double l2) {
  LogRegConfig lc;
  lc.l2 = l2;
  const bool multi = any_multi_label(train_docs) || any_multi_label(test_docs);
  const auto clf = train_classifier(model.text_vectors(train_docs), labels_of(train_docs), multi, lc);
  return evaluate_classifier(clf, model.text_vectors(test_docs), labels_of(test_docs));
}

/// Index = training split, queries = test split.
inline RetrievalReport retrieve(const TopicModel& model, const std::vector<Document>& index,
                                const std::vector<Document>& queries, const std::vector<double>& fractions) {
  return precision_at_fractions(queries, index, model, fractions);
}

// ------------------------------------------------------------------- sweeps

struct LambdaSweepRow {
  double lambda = 0.0;
  double score = 0.0;  // validation PPL (ppl task) or precision at ir_fraction (ir task)
};

struct LambdaSweepResult {
  std::vector<LambdaSweepRow> rows;
  std::size_t best = 0;
};

/// One ctx model per lambda; validation picks the best (lowest PPL or highest precision).
inline LambdaSweepResult lambda_sweep(RunConfig cfg, const CorpusSplit& split, Diagnostics* diag = nullptr) {
  if (cfg.model == ModelKind::DocNADE) throw ConfigError("model: the lambda sweep needs ctx-docnade or ctx-docnadee");
  if (split.validation.empty()) throw ConfigError("valid: the lambda sweep needs a validation corpus");
  const auto root = ensure_dir(cfg.out);
  LambdaSweepResult result;
  for (double lambda : cfg.lambda_grid) {
    cfg.lambda = lambda;
    const auto outcome = train_model(cfg, split, diag);
    const auto dir = ensure_dir((root / ("lambda_" + fmt_num(lambda))).string());
    save_checkpoint(outcome.checkpoint, (dir / "model.bin").string());
    write_history(outcome.history, dir / "history.csv");
    LambdaSweepRow row{lambda, 0.0};
    if (cfg.task == Task::PPL) {
      row.score = perplexity(split.validation, outcome.checkpoint.model).ppl;
    } else {
      row.score = retrieve(outcome.checkpoint.model, split.train, split.validation, {cfg.ir_fraction}).mean_precision[0];
    }
    result.rows.push_back(row);
  }
  for (std::size_t i = 1; i < result.rows.size(); ++i) {
    const bool better = cfg.task == Task::PPL ? result.rows[i].score < result.rows[result.best].score
                                              : result.rows[i].score > result.rows[result.best].score;
    if (better) result.best = i;
  }
  CsvWriter csv(root / "lambda_sweep.csv",
                {"lambda", cfg.task == Task::PPL ? "validation_ppl" : "validation_precision", "selected"});
  for (std::size_t i = 0; i < result.rows.size(); ++i) {
    csv.row({fmt_num(result.rows[i].lambda), fmt_num(result.rows[i].score), i == result.best ? "1" : "0"});
  }
  return result;
}

struct FractionSweepRow {
  double fraction = 0.0;
  std::size_t train_docs = 0;
  double precision = 0.0;  // at cfg.ir_fraction
  double macro_f1 = 0.0;
  double accuracy = 0.0;
};

/// Trains on nested deterministic subsamples of the training split and
/// reports retrieval precision and macro-F1 on the test split for each.
inline std::vector<FractionSweepRow> training_fraction_sweep(RunConfig cfg, const CorpusSplit& split,
                                                             Diagnostics* diag = nullptr) {
  if (split.test.empty()) throw ConfigError("test: the training-fraction sweep needs a test corpus");
  const auto root = ensure_dir(cfg.out);
  std::vector<FractionSweepRow> rows;
  for (double f : cfg.train_fractions) {
    CorpusSplit sub = split;
    sub.train = subsample(split.train, f, cfg.seed);
    const auto outcome = train_model(cfg, sub, diag);
    const auto& model = outcome.checkpoint.model;
    FractionSweepRow row;
    row.fraction = f;
    row.train_docs = sub.train.size();
    row.precision = retrieve(model, sub.train, sub.test, {cfg.ir_fraction}).mean_precision[0];
    const auto cls = classify(model, sub.train, sub.test, cfg.l2);
    row.macro_f1 = cls.macro_f1;
    row.accuracy = cls.accuracy;
    rows.push_back(row);
  }
  CsvWriter csv(root / "fraction_sweep.csv",
                {"train_fraction", "train_docs", "precision_at_" + fmt_num(cfg.ir_fraction), "macro_f1", "accuracy"});
  for (const auto& r : rows) {
    csv.row({fmt_num(r.fraction), std::to_string(r.train_docs), fmt_num(r.precision), fmt_num(r.macro_f1),
             fmt_num(r.accuracy)});
  }
  return rows;
}

}  // namespace ctxnade
