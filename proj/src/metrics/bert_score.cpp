#include <cmath>

#include "lpcaps/error.hpp"
#include "lpcaps/metrics.hpp"

namespace lpcaps::metrics {

void SentenceEmbeddings::validate() const {
  if (tokens.size() != vectors.size()) {
    throw validation_error("embedding_shape",
                           "embedding has " + std::to_string(vectors.size()) +
                               " vectors for " + std::to_string(tokens.size()) + " tokens");
  }
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size()) {
      throw validation_error("dimension_mismatch", "embedding vectors differ in dimension");
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (!(norm > 0.0)) throw validation_error("embedding_shape", "zero-norm token vector");
  }
}

namespace {

std::vector<std::vector<double>> normalized(const std::vector<std::vector<double>>& vs) {
  std::vector<std::vector<double>> out;
  out.reserve(vs.size());
  for (const auto& v : vs) {
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    auto& u = out.emplace_back(v);
    for (double& x : u) x /= norm;
  }
  return out;
}

}  // namespace

BertScore bert_score(const SentenceEmbeddings& cand, const SentenceEmbeddings& ref) {
  if (cand.vectors.empty() || ref.vectors.empty()) {
    throw validation_error("empty_sentence", "BERT-Score needs non-empty sentences");
  }
  cand.validate();
  ref.validate();
  if (cand.vectors.front().size() != ref.vectors.front().size()) {
    throw validation_error("dimension_mismatch",
                           "candidate and reference embeddings differ in dimension");
  }
  const auto c = normalized(cand.vectors);
  const auto r = normalized(ref.vectors);

  std::vector<double> best_for_cand(c.size(), -2.0);
  std::vector<double> best_for_ref(r.size(), -2.0);
  for (std::size_t i = 0; i < c.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      double dot = 0.0;
      for (std::size_t d = 0; d < c[i].size(); ++d) dot += c[i][d] * r[j][d];
      best_for_cand[i] = std::max(best_for_cand[i], dot);
      best_for_ref[j] = std::max(best_for_ref[j], dot);
    }
  }
  BertScore s;
  for (double x : best_for_cand) s.precision += x;
  for (double x : best_for_ref) s.recall += x;
  s.precision /= static_cast<double>(c.size());
  s.recall /= static_cast<double>(r.size());
  const double denom = s.precision + s.recall;
  s.f1 = denom == 0.0 ? 0.0 : 2.0 * s.precision * s.recall / denom;
  return s;
}

}  // namespace lpcaps::metrics
