#pragma once

// Run configuration: a flat `key = value` file whose entries can be
// overridden one by one from the command line.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ctxnade/corpus.hpp"
#include "ctxnade/model.hpp"
#include "ctxnade/numerics.hpp"

namespace ctxnade {

class ConfigError : public Error {
 public:
  using Error::Error;
};

enum class Task { PPL, IR };

struct RunConfig {
  // model
  ModelKind model = ModelKind::DocNADE;
  std::size_t hidden = 200;
  std::size_t depth = 1;
  std::string activation = "auto";  // auto: sigmoid for the ppl task, tanh for ir
  Task task = Task::PPL;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double lr = 0.001;
  std::size_t epochs = 1000;
  std::size_t pretrain_epochs = 10;
  std::size_t patience = 10;
  std::size_t batch_size = 1;
  double lambda = 0.5;
  std::vector<double> lambda_grid = {1.0, 0.8, 0.5, 0.3, 0.1, 0.01, 0.001};
  std::string embeddings;
  std::uint64_t seed = 1;
  // corpus
  std::string train, valid, test, input;
  VocabMode vocab_mode = VocabMode::FV;
  std::size_t max_vocab = 0;  // 0: unlimited
  std::size_t min_count = 1;
  std::string stopwords;
  std::size_t max_doc_length = 0;  // 0: unlimited
  double train_fraction = 1.0;
  // evaluation
  std::string checkpoint;
  std::string out = ".";
  std::size_t top_n = 10;
  std::size_t window = 20;
  std::vector<double> fractions = {0.001, 0.002, 0.005, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0};
  double ir_fraction = 0.02;
  std::vector<double> train_fractions = {0.2, 0.4, 0.6, 0.8, 1.0};
  double l2 = 1e-3;

  Activation resolved_activation() const {
    if (activation == "auto") return task == Task::PPL ? Activation::Sigmoid : Activation::Tanh;
    return parse_activation(activation);
  }

  OptimizerConfig optimizer_config() const {
    OptimizerConfig o;
    o.kind = optimizer;
    o.learning_rate = lr;
    return o;
  }

  /// Sets one field from its textual form; unknown keys are rejected.
  void set(const std::string& key, const std::string& value);

  /// Throws ConfigError naming the first offending field.
  void validate() const {
    auto fail = [](const std::string& field, const std::string& why) { throw ConfigError(field + ": " + why); };
    if (hidden < 1) fail("hidden", "must be >= 1");
    if (depth < 1) fail("depth", "must be >= 1");
    if (!(lr > 0.0) || !std::isfinite(lr)) fail("lr", "must be > 0");
    if (batch_size < 1) fail("batch_size", "must be >= 1");
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) fail("lambda", "must be finite and >= 0");
    for (double l : lambda_grid) {
      if (!(l >= 0.0) || !std::isfinite(l)) fail("lambda_grid", "every value must be finite and >= 0");
    }
    if (!(train_fraction > 0.0 && train_fraction <= 1.0)) fail("train_fraction", "must lie in (0, 1]");
    for (double f : train_fractions) {
      if (!(f > 0.0 && f <= 1.0)) fail("train_fractions", "every value must lie in (0, 1]");
    }
    for (double f : fractions) {
      if (!(f > 0.0 && f <= 1.0)) fail("fractions", "every value must lie in (0, 1]");
    }
    if (!(ir_fraction > 0.0 && ir_fraction <= 1.0)) fail("ir_fraction", "must lie in (0, 1]");
    if (model == ModelKind::CtxDocNADEe && embeddings.empty()) fail("embeddings", "ctx-docnadee requires an embedding file");
    if (activation != "auto" && activation != "sigmoid" && activation != "tanh") {
      fail("activation", "expected auto|sigmoid|tanh");
    }
    if (window < 2) fail("window", "must be >= 2");
    if (top_n < 1) fail("top_n", "must be >= 1");
    if (min_count < 1) fail("min_count", "must be >= 1");
    if (!(l2 >= 0.0)) fail("l2", "must be >= 0");
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const std::string v = trim(value);
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size()) {
    throw ConfigError(key + ": cannot parse '" + value + "' as a number");
  }
  return out;
}

inline std::vector<double> parse_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (trim(item).empty()) continue;
    out.push_back(parse_number<double>(key, item));
  }
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

}  // namespace detail

inline void RunConfig::set(const std::string& raw_key, const std::string& value) {
  std::string key = raw_key;
  for (auto& c : key) {
    if (c == '-') c = '_';
  }
  using detail::parse_list;
  using detail::parse_number;
  const std::string v = detail::trim(value);
  try {
    if (key == "model") model = parse_model_kind(v);
    else if (key == "hidden") hidden = parse_number<std::size_t>(key, v);
    else if (key == "depth") depth = parse_number<std::size_t>(key, v);
    else if (key == "activation") activation = v;
    else if (key == "task") {
      if (v == "ppl") task = Task::PPL;
      else if (v == "ir") task = Task::IR;
      else throw ConfigError("task: expected ppl|ir");
    } else if (key == "optimizer") {
      if (v == "adam") optimizer = OptimizerKind::Adam;
      else if (v == "sgd") optimizer = OptimizerKind::SGD;
      else throw ConfigError("optimizer: expected adam|sgd");
    } else if (key == "lr") lr = parse_number<double>(key, v);
    else if (key == "epochs") epochs = parse_number<std::size_t>(key, v);
    else if (key == "pretrain_epochs") pretrain_epochs = parse_number<std::size_t>(key, v);
    else if (key == "patience") patience = parse_number<std::size_t>(key, v);
    else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, v);
    else if (key == "lambda") lambda = parse_number<double>(key, v);
    else if (key == "lambda_grid") lambda_grid = parse_list(key, v);
    else if (key == "embeddings") embeddings = v;
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, v);
    else if (key == "train") train = v;
    else if (key == "valid") valid = v;
    else if (key == "test") test = v;
    else if (key == "input") input = v;
    else if (key == "vocab_mode") vocab_mode = parse_vocab_mode(v);
    else if (key == "max_vocab") max_vocab = parse_number<std::size_t>(key, v);
    else if (key == "min_count") min_count = parse_number<std::size_t>(key, v);
    else if (key == "stopwords") stopwords = v;
    else if (key == "max_doc_length") max_doc_length = parse_number<std::size_t>(key, v);
    else if (key == "train_fraction") train_fraction = parse_number<double>(key, v);
    else if (key == "checkpoint") checkpoint = v;
    else if (key == "out") out = v;
    else if (key == "top_n") top_n = parse_number<std::size_t>(key, v);
    else if (key == "window") window = parse_number<std::size_t>(key, v);
    else if (key == "fractions") fractions = parse_list(key, v);
    else if (key == "ir_fraction") ir_fraction = parse_number<double>(key, v);
    else if (key == "train_fractions") train_fractions = parse_list(key, v);
    else if (key == "l2") l2 = parse_number<double>(key, v);
    else throw ConfigError("unknown configuration key '" + raw_key + "'");
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(key + ": " + e.what());
  }
}

/// Applies `key = value` lines; `#` starts a comment.
inline void apply_config_stream(RunConfig& cfg, std::istream& in, const std::string& origin) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    if (detail::trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    try {
      cfg.set(detail::trim(line.substr(0, eq)), line.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  apply_config_stream(cfg, in, path);
}

}  // namespace ctxnade
