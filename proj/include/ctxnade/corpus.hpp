#pragma once

// Labeled TSV corpora, vocabularies, document encoding and pre-trained
// embedding tables.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "ctxnade/numerics.hpp"

namespace ctxnade {

using WordId = std::uint32_t;

class CorpusError : public Error {
 public:
  using Error::Error;
};

/// Raised when a document has no in-vocabulary token left.
class EmptyDocumentError : public CorpusError {
 public:
  using CorpusError::CorpusError;
};

/// Collects warnings; when no sink is given they go to std::clog.
struct Diagnostics {
  std::vector<std::string> warnings;
  void warn(std::string msg) { warnings.push_back(std::move(msg)); }
};

namespace detail {

inline void warn(Diagnostics* diag, std::string msg) {
  if (diag) {
    diag->warn(std::move(msg));
  } else {
    std::clog << "warning: " << msg << '\n';
  }
}

inline std::vector<std::string> split_whitespace(std::string_view text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    const std::size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) out.emplace_back(text.substr(start, i - start));
  }
  return out;
}

inline std::string lowercase(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

inline void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

}  // namespace detail

struct RawRecord {
  std::vector<std::string> labels;
  std::string text;
};

/// Parses `label[:label...]<TAB>text` lines. Blank lines are skipped.
inline std::vector<RawRecord> parse_corpus(std::istream& in, const std::string& origin, Diagnostics* diag = nullptr) {
  std::vector<RawRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw CorpusError(origin + ":" + std::to_string(line_no) + ": missing TAB between labels and text");
    }
    RawRecord rec;
    std::string_view labels(line.data(), tab);
    std::size_t start = 0;
    while (start <= labels.size()) {
      const auto colon = labels.find(':', start);
      const auto end = colon == std::string_view::npos ? labels.size() : colon;
      if (end > start) rec.labels.emplace_back(labels.substr(start, end - start));
      if (colon == std::string_view::npos) break;
      start = colon + 1;
    }
    rec.text = line.substr(tab + 1);
    records.push_back(std::move(rec));
  }
  if (records.empty()) detail::warn(diag, origin + ": corpus contains no documents");
  return records;
}

inline std::vector<RawRecord> load_corpus(const std::string& path, Diagnostics* diag = nullptr) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open corpus file '" + path + "'");
  return parse_corpus(in, path, diag);
}

enum class VocabMode { RV, FV };

inline std::string to_string(VocabMode m) { return m == VocabMode::RV ? "RV" : "FV"; }

inline VocabMode parse_vocab_mode(const std::string& s) {
  if (s == "RV" || s == "rv") return VocabMode::RV;
  if (s == "FV" || s == "fv") return VocabMode::FV;
  throw Error("unknown vocabulary mode '" + s + "' (expected RV|FV)");
}

struct VocabOptions {
  VocabMode mode = VocabMode::FV;
  std::size_t max_size = std::numeric_limits<std::size_t>::max();
  std::size_t min_count = 1;
  std::set<std::string> stopwords;  // only consulted in RV mode
};

class Vocabulary {
 public:
  Vocabulary() = default;

  /// Ids must already be in final order; frequencies align with tokens.
  Vocabulary(std::vector<std::string> tokens, std::vector<std::uint64_t> frequency, VocabMode mode)
      : id_to_token_(std::move(tokens)), frequency_(std::move(frequency)), mode_(mode) {
    if (id_to_token_.empty()) throw CorpusError("vocabulary is empty");
    if (frequency_.size() != id_to_token_.size()) throw CorpusError("vocabulary frequency list size mismatch");
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
      if (!token_to_id_.emplace(id_to_token_[i], static_cast<WordId>(i)).second) {
        throw CorpusError("duplicate vocabulary token '" + id_to_token_[i] + "'");
      }
    }
  }

  std::size_t size() const { return id_to_token_.size(); }
  VocabMode mode() const { return mode_; }
  const std::string& token(WordId id) const { return id_to_token_.at(id); }
  std::uint64_t frequency(WordId id) const { return frequency_.at(id); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  std::optional<WordId> find(const std::string& token) const {
    auto it = token_to_id_.find(token);
    if (it == token_to_id_.end()) return std::nullopt;
    return it->second;
  }

  /// Applies the same normalization the vocabulary was built with.
  std::string normalize(std::string token) const {
    return mode_ == VocabMode::RV ? detail::lowercase(std::move(token)) : token;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) {
    return a.mode_ == b.mode_ && a.id_to_token_ == b.id_to_token_ && a.frequency_ == b.frequency_;
  }

  /// One `id<TAB>token<TAB>frequency` line per word.
  void write(std::ostream& out) const {
    for (std::size_t i = 0; i < size(); ++i) out << i << '\t' << id_to_token_[i] << '\t' << frequency_[i] << '\n';
  }

  static Vocabulary read(std::istream& in, VocabMode mode, const std::string& origin = "vocabulary") {
    std::vector<std::string> tokens;
    std::vector<std::uint64_t> freq;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      detail::strip_cr(line);
      if (line.empty()) continue;
      const auto t1 = line.find('\t');
      const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
      if (t2 == std::string::npos) throw CorpusError(origin + ":" + std::to_string(line_no) + ": malformed vocabulary line");
      std::size_t id = 0;
      std::uint64_t f = 0;
      const auto r1 = std::from_chars(line.data(), line.data() + t1, id);
      const auto r2 = std::from_chars(line.data() + t2 + 1, line.data() + line.size(), f);
      if (r1.ec != std::errc{} || r2.ec != std::errc{} || id != tokens.size()) {
        throw CorpusError(origin + ":" + std::to_string(line_no) + ": bad id or frequency");
      }
      tokens.push_back(line.substr(t1 + 1, t2 - t1 - 1));
      freq.push_back(f);
    }
    return Vocabulary(std::move(tokens), std::move(freq), mode);
  }

 private:
  std::vector<std::string> id_to_token_;
  std::vector<std::uint64_t> frequency_;
  std::unordered_map<std::string, WordId> token_to_id_;
  VocabMode mode_ = VocabMode::FV;
};

/// Ids are assigned by descending count, ties broken lexicographically.
inline Vocabulary build_vocabulary(const std::vector<std::string>& train_texts, const VocabOptions& opts) {
  if (train_texts.empty()) throw CorpusError("build_vocabulary: no training documents");
  if (opts.max_size < 1 || opts.min_count < 1) throw CorpusError("build_vocabulary: max_size and min_count must be >= 1");
  std::unordered_map<std::string, std::uint64_t> counts;
  for (const auto& text : train_texts) {
    for (auto& tok : detail::split_whitespace(text)) {
      if (opts.mode == VocabMode::RV) {
        tok = detail::lowercase(std::move(tok));
        if (opts.stopwords.count(tok)) continue;
      }
      ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, std::uint64_t>> entries;
  for (auto& [tok, n] : counts) {
    if (n >= opts.min_count) entries.emplace_back(tok, n);
  }
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  });
  if (entries.size() > opts.max_size) entries.resize(opts.max_size);
  if (entries.empty()) throw CorpusError("build_vocabulary: resulting vocabulary is empty");
  std::vector<std::string> tokens;
  std::vector<std::uint64_t> freq;
  for (auto& [tok, n] : entries) {
    tokens.push_back(tok);
    freq.push_back(n);
  }
  return Vocabulary(std::move(tokens), std::move(freq), opts.mode);
}

struct Document {
  std::vector<WordId> tokens;
  std::vector<int> labels;  // sorted label ids
  std::size_t oov_dropped = 0;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
};

inline Document encode_document(const std::string& raw_text, const Vocabulary& vocab) {
  Document doc;
  for (auto& tok : detail::split_whitespace(raw_text)) {
    if (auto id = vocab.find(vocab.normalize(std::move(tok)))) {
      doc.tokens.push_back(*id);
    } else {
      ++doc.oov_dropped;
    }
  }
  if (doc.tokens.empty()) {
    throw EmptyDocumentError("document has no in-vocabulary tokens (" + std::to_string(doc.oov_dropped) +
                             " dropped)");
  }
  return doc;
}

inline std::string decode_document(const Document& doc, const Vocabulary& vocab) {
  std::string out;
  for (std::size_t i = 0; i < doc.tokens.size(); ++i) {
    if (i) out += ' ';
    out += vocab.token(doc.tokens[i]);
  }
  return out;
}

struct CorpusSplit {
  std::vector<Document> train;
  std::vector<Document> validation;
  std::vector<Document> test;
  Vocabulary vocabulary;
  std::vector<std::string> label_names;
  std::size_t skipped_documents = 0;
  std::size_t oov_tokens = 0;
};

/// Maps label strings to ids through `names`, extending it as needed.
inline std::vector<int> intern_labels(const std::vector<std::string>& labels, std::vector<std::string>& names) {
  std::vector<int> ids;
  for (const auto& l : labels) {
    auto it = std::find(names.begin(), names.end(), l);
    if (it == names.end()) {
      names.push_back(l);
      it = names.end() - 1;
    }
    ids.push_back(static_cast<int>(it - names.begin()));
  }
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

/// Encodes records with a fixed vocabulary; rejected documents are skipped with a warning.
inline std::vector<Document> encode_records(const std::vector<RawRecord>& records, const Vocabulary& vocab,
                                            std::vector<std::string>& label_names, const std::string& split_name,
                                            Diagnostics* diag = nullptr, std::size_t* skipped = nullptr,
                                            std::size_t* oov = nullptr) {
  std::vector<Document> docs;
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      Document d = encode_document(records[i].text, vocab);
      d.labels = intern_labels(records[i].labels, label_names);
      if (oov) *oov += d.oov_dropped;
      docs.push_back(std::move(d));
    } catch (const EmptyDocumentError& e) {
      detail::warn(diag, split_name + " document " + std::to_string(i + 1) + " skipped: " + e.what());
      if (skipped) ++*skipped;
    }
  }
  return docs;
}

/// Builds the vocabulary from train only and encodes all three splits.
/// Label ids are assigned in sorted label-name order over all splits.
inline CorpusSplit make_corpus_split(const std::vector<RawRecord>& train, const std::vector<RawRecord>& validation,
                                     const std::vector<RawRecord>& test, const VocabOptions& opts,
                                     Diagnostics* diag = nullptr) {
  std::vector<std::string> texts;
  texts.reserve(train.size());
  for (const auto& r : train) texts.push_back(r.text);
  CorpusSplit split;
  split.vocabulary = build_vocabulary(texts, opts);

  std::set<std::string> all_labels;
  for (const auto* part : {&train, &validation, &test}) {
    for (const auto& r : *part) all_labels.insert(r.labels.begin(), r.labels.end());
  }
  split.label_names.assign(all_labels.begin(), all_labels.end());

  split.train = encode_records(train, split.vocabulary, split.label_names, "train", diag, &split.skipped_documents,
                               &split.oov_tokens);
  split.validation = encode_records(validation, split.vocabulary, split.label_names, "validation", diag,
                                    &split.skipped_documents, &split.oov_tokens);
  split.test = encode_records(test, split.vocabulary, split.label_names, "test", diag, &split.skipped_documents,
                              &split.oov_tokens);
  return split;
}

/// Static pre-trained vectors aligned to a vocabulary: one row per word id.
struct EmbeddingTable {
  Matrix E;
  std::vector<bool> covered;

  std::size_t dimension() const { return E.cols(); }
  std::size_t vocab_size() const { return E.rows(); }

  double coverage() const {
    if (covered.empty()) return 0.0;
    return static_cast<double>(std::count(covered.begin(), covered.end(), true)) / static_cast<double>(covered.size());
  }

  friend bool operator==(const EmbeddingTable&, const EmbeddingTable&) = default;
};

/// Reads GloVe-style `word v1 ... vH` lines. Duplicate words: the last line wins.
inline EmbeddingTable parse_embeddings(std::istream& in, const std::string& origin, const Vocabulary& vocab,
                                       std::size_t H, Diagnostics* diag = nullptr) {
  if (H == 0) throw CorpusError("embedding dimension must be >= 1");
  EmbeddingTable table{Matrix(vocab.size(), H), std::vector<bool>(vocab.size(), false)};
  std::string line;
  std::size_t line_no = 0;
  Vector values;
  while (std::getline(in, line)) {
    ++line_no;
    detail::strip_cr(line);
    const auto fields = detail::split_whitespace(line);
    if (fields.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no);
    if (fields.size() - 1 != H) {
      throw CorpusError(where + ": expected " + std::to_string(H) + " values for '" + fields[0] + "', found " +
                        std::to_string(fields.size() - 1));
    }
    values.assign(H, 0.0);
    for (std::size_t j = 0; j < H; ++j) {
      const auto& f = fields[j + 1];
      const auto res = std::from_chars(f.data(), f.data() + f.size(), values[j]);
      if (res.ec != std::errc{} || res.ptr != f.data() + f.size() || !std::isfinite(values[j])) {
        throw CorpusError(where + ": unreadable float '" + f + "'");
      }
    }
    if (auto id = vocab.find(vocab.normalize(fields[0]))) {
      auto row = table.E.row(*id);
      std::copy(values.begin(), values.end(), row.begin());
      table.covered[*id] = true;
    }
  }
  std::ostringstream msg;
  msg << origin << ": embedding coverage " << table.coverage() * 100.0 << "% of " << vocab.size() << " words";
  if (diag) diag->warn(msg.str());
  return table;
}

inline EmbeddingTable load_embeddings(const std::string& path, const Vocabulary& vocab, std::size_t H,
                                      Diagnostics* diag = nullptr) {
  std::ifstream in(path);
  if (!in) throw CorpusError("cannot open embedding file '" + path + "'");
  return parse_embeddings(in, path, vocab, H, diag);
}

}  // namespace ctxnade
