#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lpcaps/metrics.hpp"

namespace lpcaps::metrics {

/// Source of contextual token vectors for BERT-Score. Producing embeddings is
/// outside this toolkit; implementations only fetch them.
class EmbeddingProvider {
 public:
  virtual ~EmbeddingProvider() = default;
  virtual SentenceEmbeddings embed(const std::string& id, const std::string& text) = 0;
};

/// Reads a JSONL file of {"id", "tokens": [...], "vectors": [[...], ...]}.
class FileEmbeddingProvider final : public EmbeddingProvider {
 public:
  static FileEmbeddingProvider load(const std::filesystem::path& path);
  SentenceEmbeddings embed(const std::string& id, const std::string& text) override;
  std::size_t size() const { return by_id_.size(); }

 private:
  std::unordered_map<std::string, SentenceEmbeddings> by_id_;
};

/// POSTs {"id", "text"} to {base_url}/embed and expects
/// {"tokens": [...], "vectors": [[...], ...]} back.
class HttpEmbeddingProvider final : public EmbeddingProvider {
 public:
  explicit HttpEmbeddingProvider(std::string base_url, int timeout_sec = 30);
  SentenceEmbeddings embed(const std::string& id, const std::string& text) override;

 private:
  std::string base_url_;
  int timeout_sec_;
};

SentenceEmbeddings embeddings_from_json(const nlohmann::json& j);
nlohmann::json embeddings_to_json(const std::string& id, const SentenceEmbeddings& e);

enum class BleuMode { kCorpus, kSentence };

struct EvalOptions {
  BleuMode bleu_mode = BleuMode::kCorpus;
  double rouge_beta = kDefaultRougeBeta;
  MeteorOptions meteor;
  /// When false only the first reference of each candidate is scored.
  bool multi_ref = false;
};

struct Sentence {
  std::string id;
  std::string text;
};

struct EvalInput {
  std::vector<Sentence> candidates;
  /// references[i] holds one or more references for candidates[i]. The k-th
  /// extra reference (k >= 1) is looked up in the embedding provider as
  /// "<id>#<k>".
  std::vector<std::vector<Sentence>> references;
  /// Training captions for Novel_v / Novel_c. Without them Novel_v falls back
  /// to the reference vocabulary and Novel_c is left unset.
  std::optional<std::vector<std::string>> training;
  EmbeddingProvider* candidate_embeddings = nullptr;
  EmbeddingProvider* reference_embeddings = nullptr;
};

struct MetricReport {
  double b1 = 0, b2 = 0, b3 = 0, b4 = 0;
  double meteor = 0;
  double rouge_l = 0;
  std::optional<double> bert_s;
  std::size_t vocab = 0;
  double novel_v = 0;
  std::optional<double> novel_c;
  TokenStats avg_token;
  std::size_t n_pairs = 0;
  bool meteor_exhaustive = true;
};

MetricReport evaluate(const EvalInput& input, const EvalOptions& options = {});

/// Column set of the usual captioning results table, plus run settings.
nlohmann::json to_json(const MetricReport& report, const EvalOptions& options);

}  // namespace lpcaps::metrics
