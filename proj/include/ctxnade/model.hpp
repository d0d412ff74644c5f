#pragma once

#include <memory>
#include <string>
#include <vector>

#include "ctxnade/ctx_lm.hpp"
#include "ctxnade/docnade.hpp"

namespace ctxnade {

enum class ModelKind { DocNADE, CtxDocNADE, CtxDocNADEe };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::DocNADE: return "docnade";
    case ModelKind::CtxDocNADE: return "ctx-docnade";
    case ModelKind::CtxDocNADEe: return "ctx-docnadee";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "docnade") return ModelKind::DocNADE;
  if (s == "ctx-docnade") return ModelKind::CtxDocNADE;
  if (s == "ctx-docnadee") return ModelKind::CtxDocNADEe;
  throw Error("unknown model '" + s + "' (expected docnade|ctx-docnade|ctx-docnadee)");
}

/// Any of the three variants. For plain DocNADE the LSTM is empty and lambda is 0.
struct TopicModel {
  ModelKind kind = ModelKind::DocNADE;
  CtxModelParams params;

  bool has_lm() const { return kind != ModelKind::DocNADE; }
  std::size_t K() const { return params.K(); }
  std::size_t H() const { return params.H(); }

  /// Exact likelihood: the LM component is ignored (lambda = 0).
  double exact_log_likelihood(const Document& doc) const { return doc_log_likelihood(doc, params.dn); }

  /// Likelihood under the trained mixture weight.
  double mixture_log_likelihood(const Document& doc) const {
    return has_lm() ? ctx_doc_log_likelihood(doc, params) : doc_log_likelihood(doc, params.dn);
  }

  Vector text_vector(const Document& doc) const {
    return has_lm() ? text_to_vec(doc, params) : doc_representation(doc, params.dn);
  }

  std::vector<Vector> text_vectors(const std::vector<Document>& docs) const {
    std::vector<Vector> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back(text_vector(d));
    return out;
  }
};

inline TopicModel make_docnade_model(DocNADEParams dn) {
  TopicModel m;
  m.kind = ModelKind::DocNADE;
  m.params.dn = std::move(dn);
  return m;
}

}  // namespace ctxnade
