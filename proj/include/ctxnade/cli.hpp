#pragma once

// Command-line front end. Exit codes: 0 success, 1 runtime failure,
// 2 usage or configuration error.

#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "ctxnade/pipeline.hpp"

namespace ctxnade::cli {

namespace detail {

struct OptionSpec {
  const char* key;
  const char* help;
  const char* commands;  // space separated subcommands accepting the option
};

// clang-format off
inline const std::vector<OptionSpec>& option_table() {
  static const std::vector<OptionSpec> table = {
      {"train", "training corpus (TSV labels<TAB>text); reference/index corpus for evaluation", "vocab train coherence ir classify sweep"},
      {"valid", "validation corpus (TSV)", "train sweep"},
      {"test", "test corpus (TSV)", "train ppl ir classify sweep"},
      {"input", "documents to embed (TSV)", "textvec"},
      {"vocab-mode", "RV or FV", "vocab train sweep"},
      {"max-vocab", "keep at most this many words (0: unlimited)", "vocab train sweep"},
      {"min-count", "minimum training count per word", "vocab train sweep"},
      {"stopwords", "stopword file (RV mode)", "vocab train sweep"},
      {"max-doc-length", "truncate documents to this many tokens (0: unlimited)", "train ppl coherence ir classify textvec sweep"},
      {"train-fraction", "train on this fraction of the training split", "train sweep"},
      {"model", "docnade | ctx-docnade | ctx-docnadee", "train sweep"},
      {"hidden", "hidden units / topics H", "train sweep"},
      {"depth", "number of hidden layers", "train sweep"},
      {"activation", "auto | sigmoid | tanh", "train sweep"},
      {"task", "ppl | ir (selects the default activation and the sweep criterion)", "train sweep"},
      {"optimizer", "adam | sgd", "train sweep"},
      {"lr", "learning rate", "train sweep"},
      {"epochs", "training passes (joint phase for ctx models)", "train sweep"},
      {"pretrain-epochs", "lambda = 0 passes before joint training", "train sweep"},
      {"patience", "early-stopping patience on validation PPL (0: off)", "train sweep"},
      {"batch-size", "documents per optimizer step", "train sweep"},
      {"lambda", "mixture weight of the LM component", "train sweep"},
      {"lambda-grid", "comma-separated lambda values to sweep", "sweep"},
      {"embeddings", "pre-trained embedding file (word v1 .. vH)", "train sweep"},
      {"seed", "random seed", "vocab train sweep"},
      {"checkpoint", "model checkpoint", "ppl topics coherence ir classify textvec"},
      {"top-n", "words per topic", "topics coherence"},
      {"window", "NPMI sliding-window size", "coherence"},
      {"fractions", "comma-separated retrieval fractions", "ir"},
      {"ir-fraction", "retrieval fraction used by sweeps", "sweep"},
      {"train-fractions", "comma-separated training fractions", "sweep"},
      {"l2", "L2 strength of the logistic-regression classifier", "classify sweep"},
  };
  return table;
}
// clang-format on

inline bool accepts(const OptionSpec& spec, const std::string& cmd) {
  std::istringstream ss(spec.commands);
  std::string c;
  while (ss >> c) {
    if (c == cmd) return true;
  }
  return false;
}

inline void log_warnings(const Diagnostics& diag, std::ostream& err) {
  for (const auto& w : diag.warnings) err << "warning: " << w << '\n';
}

inline Checkpoint require_checkpoint(const RunConfig& cfg) {
  if (cfg.checkpoint.empty()) throw ConfigError("checkpoint: a checkpoint file is required");
  return load_checkpoint(cfg.checkpoint);
}

inline void require(const std::string& value, const char* field) {
  if (value.empty()) throw ConfigError(std::string(field) + ": required for this command");
}

inline void run_command(const std::string& cmd, RunConfig& cfg, const std::string& sweep_kind, std::ostream& err) {
  cfg.validate();
  Diagnostics diag;
  const auto out = ensure_dir(cfg.out);

  if (cmd == "vocab") {
    const auto split = load_split(cfg, &diag);
    std::ofstream vf(out / "vocab.tsv");
    split.vocabulary.write(vf);
    err << "vocabulary: " << split.vocabulary.size() << " words\n";
  } else if (cmd == "train") {
    const auto split = load_split(cfg, &diag);
    log_warnings(diag, err);
    diag.warnings.clear();
    const auto outcome = train_model(cfg, split, &diag);
    save_checkpoint(outcome.checkpoint, (out / "model.bin").string());
    write_history(outcome.history, out / "history.csv");
    std::ofstream vf(out / "vocab.tsv");
    split.vocabulary.write(vf);
    if (!split.test.empty()) write_ppl(perplexity(split.test, outcome.checkpoint.model), out);
    err << "trained " << to_string(cfg.model) << " (K=" << split.vocabulary.size() << ", H=" << cfg.hidden << ") for "
        << outcome.history.epochs.size() << " epochs\n";
  } else if (cmd == "ppl") {
    require(cfg.test, "test");
    const auto ck = require_checkpoint(cfg);
    std::vector<std::string> names;
    const auto report = perplexity(load_encoded(cfg.test, ck.vocabulary, names, cfg, &diag), ck.model);
    write_ppl(report, out);
    err << "perplexity " << fmt_num(report.ppl) << " over " << report.doc_count << " documents\n";
  } else if (cmd == "topics") {
    const auto ck = require_checkpoint(cfg);
    write_topics(extract_topics(ck.model.params.dn.W, cfg.top_n), ck.vocabulary, out / "topics.csv");
  } else if (cmd == "coherence") {
    require(cfg.train, "train");
    const auto ck = require_checkpoint(cfg);
    std::vector<std::string> names;
    const auto reference = load_encoded(cfg.train, ck.vocabulary, names, cfg, &diag);
    const auto topics = extract_topics(ck.model.params.dn.W, cfg.top_n);
    const auto report = npmi_coherence(topics, reference, cfg.window, cfg.top_n);
    write_coherence(report, topics, ck.vocabulary, out);
    err << "mean NPMI " << fmt_num(report.mean) << " (window " << cfg.window << ")\n";
  } else if (cmd == "ir") {
    require(cfg.train, "train");
    require(cfg.test, "test");
    const auto ck = require_checkpoint(cfg);
    std::vector<std::string> names;
    const auto index = load_encoded(cfg.train, ck.vocabulary, names, cfg, &diag);
    const auto queries = load_encoded(cfg.test, ck.vocabulary, names, cfg, &diag);
    write_retrieval(retrieve(ck.model, index, queries, cfg.fractions), out / "retrieval.csv");
  } else if (cmd == "classify") {
    require(cfg.train, "train");
    require(cfg.test, "test");
    const auto ck = require_checkpoint(cfg);
    std::vector<std::string> names;
    const auto train_docs = load_encoded(cfg.train, ck.vocabulary, names, cfg, &diag);
    const auto test_docs = load_encoded(cfg.test, ck.vocabulary, names, cfg, &diag);
    const auto report = classify(ck.model, train_docs, test_docs, cfg.l2);
    write_classification(report, names, out / "classification.csv");
    err << "macro-F1 " << fmt_num(report.macro_f1) << ", accuracy " << fmt_num(report.accuracy) << '\n';
  } else if (cmd == "textvec") {
    require(cfg.input, "input");
    const auto ck = require_checkpoint(cfg);
    std::vector<std::string> names;
    const auto docs = load_encoded(cfg.input, ck.vocabulary, names, cfg, &diag);
    std::vector<std::string> header{"doc"};
    for (std::size_t j = 0; j < ck.model.H(); ++j) header.push_back("h" + std::to_string(j));
    CsvWriter csv(out / "textvec.csv", header);
    for (std::size_t d = 0; d < docs.size(); ++d) {
      std::vector<std::string> cells{std::to_string(d)};
      for (double x : ck.model.text_vector(docs[d])) cells.push_back(fmt_num(x));
      csv.row(cells);
    }
  } else if (cmd == "sweep") {
    const auto split = load_split(cfg, &diag);
    if (sweep_kind == "fraction") {
      for (const auto& r : training_fraction_sweep(cfg, split, &diag)) {
        err << "fraction " << fmt_num(r.fraction) << ": precision " << fmt_num(r.precision) << ", macro-F1 "
            << fmt_num(r.macro_f1) << '\n';
      }
    } else {
      const auto result = lambda_sweep(cfg, split, &diag);
      err << "selected lambda " << fmt_num(result.rows[result.best].lambda) << '\n';
    }
  }
  log_warnings(diag, err);
}

}  // namespace detail

inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Neural autoregressive topic models with language-model context"};
  app.require_subcommand(1);
  app.fallthrough(false);

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"vocab", "build and dump the training vocabulary"},
      {"train", "train a model and write a checkpoint"},
      {"ppl", "held-out perplexity of a checkpoint"},
      {"topics", "top words of every topic"},
      {"coherence", "sliding-window NPMI coherence of the topics"},
      {"ir", "precision-at-fraction document retrieval"},
      {"classify", "logistic-regression text categorization"},
      {"textvec", "document vectors"},
      {"sweep", "lambda-grid or training-fraction sweep"},
  };

  std::string config_path;
  std::string sweep_kind;
  std::map<std::string, std::map<std::string, std::string>> values;  // command -> key -> value
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    subs[name] = sub;
    sub->add_option("--config", config_path, "flat key = value configuration file");
    sub->add_option("--out", values[name]["out"], "output directory");
    for (const auto& spec : detail::option_table()) {
      if (detail::accepts(spec, name)) sub->add_option(std::string("--") + spec.key, values[name][spec.key], spec.help);
    }
    if (name == "sweep") {
      sub->add_option("--sweep", sweep_kind, "lambda | fraction (default: fraction when --train-fractions is given)")
          ->check(CLI::IsMember({"lambda", "fraction"}));
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return 0;
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  std::string cmd;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) cmd = name;
  }

  RunConfig cfg;
  try {
    if (!config_path.empty()) apply_config_file(cfg, config_path);
    auto* sub = subs.at(cmd);
    for (const auto& [key, value] : values[cmd]) {
      if (sub->count("--" + key) > 0) cfg.set(key, value);
    }
    if (cmd == "sweep" && sweep_kind.empty()) sweep_kind = sub->count("--train-fractions") ? "fraction" : "lambda";
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }

  try {
    detail::run_command(cmd, cfg, sweep_kind, err);
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace ctxnade::cli
