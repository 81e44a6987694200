#include "lpcaps/evaluation.hpp"

#include <httplib.h>

#include <algorithm>

#include "lpcaps/error.hpp"
#include "lpcaps/io.hpp"
#include "../http_util.hpp"

namespace lpcaps::metrics {

using nlohmann::json;

SentenceEmbeddings embeddings_from_json(const json& j) {
  SentenceEmbeddings e;
  try {
    e.tokens = j.at("tokens").get<TokenSeq>();
    e.vectors = j.at("vectors").get<std::vector<std::vector<double>>>();
  } catch (const json::exception& ex) {
    throw validation_error("embedding_format", std::string("bad embedding record: ") + ex.what());
  }
  e.validate();
  return e;
}

json embeddings_to_json(const std::string& id, const SentenceEmbeddings& e) {
  return json{{"id", id}, {"tokens", e.tokens}, {"vectors", e.vectors}};
}

FileEmbeddingProvider FileEmbeddingProvider::load(const std::filesystem::path& path) {
  FileEmbeddingProvider provider;
  std::size_t line_no = 0;
  for (const auto& line : io::read_lines(path)) {
    ++line_no;
    if (io::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error&) {
      throw validation_error("malformed_line", path.string() + ":" + std::to_string(line_no) +
                                                   ": not a JSON object");
    }
    std::string id;
    if (!j.contains("id")) {
      throw validation_error("embedding_format", path.string() + ":" +
                                                     std::to_string(line_no) + ": missing id");
    }
    id = j["id"].is_string() ? j["id"].get<std::string>() : j["id"].dump();
    provider.by_id_[id] = embeddings_from_json(j);
  }
  return provider;
}

SentenceEmbeddings FileEmbeddingProvider::embed(const std::string& id, const std::string&) {
  const auto it = by_id_.find(id);
  if (it == by_id_.end()) {
    throw validation_error("missing_embedding", "no embedding for sentence id " + id);
  }
  return it->second;
}

HttpEmbeddingProvider::HttpEmbeddingProvider(std::string base_url, int timeout_sec)
    : base_url_(std::move(base_url)), timeout_sec_(timeout_sec) {}

SentenceEmbeddings HttpEmbeddingProvider::embed(const std::string& id, const std::string& text) {
  const auto [origin, prefix] = detail::split_base_url(base_url_);
  httplib::Client client(origin);
  client.set_connection_timeout(timeout_sec_);
  client.set_read_timeout(timeout_sec_);
  const json body{{"id", id}, {"text", text}};
  auto res = client.Post(prefix + "/embed", body.dump(), "application/json");
  if (!res) {
    throw runtime_error("embedding_unreachable",
                        "embedding endpoint unreachable: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw runtime_error("http_error",
                        "embedding endpoint returned HTTP " + std::to_string(res->status));
  }
  try {
    return embeddings_from_json(json::parse(res->body));
  } catch (const json::parse_error&) {
    throw runtime_error("embedding_format", "embedding endpoint returned invalid JSON");
  }
}

namespace {

std::string reference_id(const Sentence& s, std::size_t k) {
  return k == 0 ? s.id : s.id + "#" + std::to_string(k);
}

}  // namespace

MetricReport evaluate(const EvalInput& input, const EvalOptions& options) {
  if (input.candidates.empty()) throw validation_error("empty_corpus", "corpus is empty");
  if (input.candidates.size() != input.references.size()) {
    throw validation_error("length_mismatch",
                           "candidate and reference corpora differ in length (" +
                               std::to_string(input.candidates.size()) + " vs " +
                               std::to_string(input.references.size()) + ")");
  }

  const std::size_t n = input.candidates.size();
  std::vector<TokenSeq> cand_tokens;
  std::vector<std::vector<TokenSeq>> ref_tokens;
  cand_tokens.reserve(n);
  ref_tokens.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (input.references[i].empty()) {
      throw validation_error("empty_corpus", "candidate " + input.candidates[i].id +
                                                 " has no reference");
    }
    cand_tokens.push_back(tokenize(input.candidates[i].text));
    auto& refs = ref_tokens.emplace_back();
    const std::size_t used = options.multi_ref ? input.references[i].size() : 1;
    for (std::size_t k = 0; k < used; ++k) refs.push_back(tokenize(input.references[i][k].text));
  }

  MetricReport report;
  report.n_pairs = n;
  double* bleu_slots[4] = {&report.b1, &report.b2, &report.b3, &report.b4};
  for (int order = 1; order <= 4; ++order) {
    if (options.bleu_mode == BleuMode::kCorpus) {
      *bleu_slots[order - 1] = bleu_corpus_multi(cand_tokens, ref_tokens, order);
    } else {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        sum += bleu_sentence_smoothed(cand_tokens[i], ref_tokens[i], order);
      }
      *bleu_slots[order - 1] = sum / static_cast<double>(n);
    }
  }

  double rouge_sum = 0.0;
  double meteor_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best_rouge = 0.0;
    double best_meteor = 0.0;
    for (const auto& ref : ref_tokens[i]) {
      best_rouge = std::max(best_rouge, rouge_l(cand_tokens[i], ref, options.rouge_beta));
      const auto alignment = meteor_align(cand_tokens[i], ref, options.meteor);
      if (!alignment.exhaustive) report.meteor_exhaustive = false;
      best_meteor = std::max(best_meteor, meteor(cand_tokens[i], ref, options.meteor));
    }
    rouge_sum += best_rouge;
    meteor_sum += best_meteor;
  }
  report.rouge_l = rouge_sum / static_cast<double>(n);
  report.meteor = meteor_sum / static_cast<double>(n);

  if (input.candidate_embeddings != nullptr && input.reference_embeddings != nullptr) {
    double f_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto& c = input.candidates[i];
      const auto cand_emb = input.candidate_embeddings->embed(c.id, c.text);
      double best = -1.0;
      for (std::size_t k = 0; k < ref_tokens[i].size(); ++k) {
        const auto& r = input.references[i][k];
        const auto ref_emb = input.reference_embeddings->embed(reference_id(r, k), r.text);
        best = std::max(best, bert_score(cand_emb, ref_emb).f1);
      }
      f_sum += best;
    }
    report.bert_s = f_sum / static_cast<double>(n);
  }

  std::vector<std::string> generated;
  generated.reserve(n);
  for (const auto& c : input.candidates) generated.push_back(c.text);
  if (input.training) {
    const auto div = diversity(generated, *input.training);
    report.vocab = div.vocab;
    report.novel_v = div.novel_v;
    report.novel_c = div.novel_c;
    report.avg_token = div.tokens;
  } else {
    std::vector<std::string> ref_texts;
    for (const auto& refs : input.references) {
      for (const auto& r : refs) ref_texts.push_back(r.text);
    }
    const auto div = diversity(generated, ref_texts);
    report.vocab = div.vocab;
    report.novel_v = div.novel_v;
    report.avg_token = div.tokens;
  }
  return report;
}

json to_json(const MetricReport& report, const EvalOptions& options) {
  const auto optional_number = [](const std::optional<double>& v) {
    return v ? json(*v) : json(nullptr);
  };
  json stages = json::array();
  for (const auto s : options.meteor.stages) {
    stages.push_back(s == MatchStage::kExact ? "exact" : s == MatchStage::kStem ? "stem" : "synonym");
  }
  return json{
      {"b1", report.b1},
      {"b2", report.b2},
      {"b3", report.b3},
      {"b4", report.b4},
      {"meteor", report.meteor},
      {"rouge_l", report.rouge_l},
      {"bert_s", optional_number(report.bert_s)},
      {"vocab", report.vocab},
      {"novel_v", report.novel_v},
      {"novel_c", optional_number(report.novel_c)},
      {"avg_token", {{"mean", report.avg_token.mean}, {"std", report.avg_token.std}}},
      {"n_pairs", report.n_pairs},
      {"settings",
       {{"bleu", options.bleu_mode == BleuMode::kCorpus ? "corpus" : "sentence_add1"},
        {"rouge_beta", options.rouge_beta},
        {"meteor_stages", stages},
        {"meteor_exhaustive", report.meteor_exhaustive},
        {"multi_ref", options.multi_ref}}},
  };
}

}  // namespace lpcaps::metrics
