#include <CLI11.hpp>

#include <algorithm>
#include <iostream>
#include <set>
#include <sstream>

#include "lpcaps/abtest.hpp"
#include "lpcaps/abtest_server.hpp"
#include "lpcaps/cli.hpp"
#include "lpcaps/corpus.hpp"
#include "lpcaps/error.hpp"
#include "lpcaps/evaluation.hpp"
#include "lpcaps/instruct.hpp"
#include "lpcaps/io.hpp"
#include "lpcaps/llmgate.hpp"
#include "lpcaps/log.hpp"
#include "lpcaps/rng.hpp"
#include "lpcaps/sampler.hpp"

namespace lpcaps::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---------------------------------------------------------------------------
// Manifest

json RunManifest::to_json() const {
  json in = json::array();
  for (const auto& p : inputs) {
    in.push_back({{"path", p.string()},
                  {"sha256", fs::is_regular_file(p) ? io::sha256_hex(io::read_file(p)) : ""}});
  }
  json out = json::array();
  for (const auto& p : outputs) {
    out.push_back({{"path", p.string()},
                   {"sha256", fs::is_regular_file(p) ? io::sha256_hex(io::read_file(p)) : ""}});
  }
  return json{{"command", command},         {"config", config},
              {"seed", seed},               {"inputs", in},
              {"outputs", out},             {"tool_version", kToolVersion},
              {"extra", extra},             {"started_at", started_at},
              {"finished_at", finished_at}};
}

std::string RunManifest::fingerprint() const {
  auto j = to_json();
  j.erase("started_at");
  j.erase("finished_at");
  return io::sha256_hex(j.dump());
}

fs::path RunManifest::write() const {
  auto j = to_json();
  j["fingerprint"] = fingerprint();
  const auto path = fs::path(outputs.front().string() + ".manifest.json");
  io::write_file_atomic(path, j.dump(2) + "\n");
  return path;
}

namespace {

// ---------------------------------------------------------------------------
// Input helpers

bool has_extension(const fs::path& p, std::initializer_list<const char*> exts) {
  const auto ext = p.extension().string();
  return std::any_of(exts.begin(), exts.end(), [&](const char* e) { return ext == e; });
}

std::vector<corpus::TagRecord> load_records(const fs::path& path, const std::string& format,
                                            const corpus::CsvColumns& columns) {
  const bool csv = format == "csv" || (format == "auto" && has_extension(path, {".csv"}));
  return csv ? corpus::ingest_aspect_csv(path, columns) : corpus::ingest_jsonl(path);
}

struct SentenceSource {
  std::string field = "caption";
  std::string id_field;  // empty: first of id, track_id, sample_id, ytid
};

std::string pick_id(const json& j, const std::string& id_field, std::size_t index) {
  const auto as_string = [](const json& v) {
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  if (!id_field.empty()) {
    if (!j.contains(id_field)) {
      throw validation_error("malformed_line", "record " + std::to_string(index) +
                                                   " lacks id field " + id_field);
    }
    return as_string(j[id_field]);
  }
  for (const char* name : {"id", "track_id", "sample_id", "ytid"}) {
    if (j.contains(name)) return as_string(j[name]);
  }
  return std::to_string(index);
}

/// Reads captions as (id, one or more texts). JSONL lines use `field` (a
/// string, or an array of strings for multiple references); CSV uses the
/// `field` column; anything else is one caption per non-blank line.
std::vector<std::pair<std::string, std::vector<std::string>>> read_sentences(
    const fs::path& path, const SentenceSource& src) {
  std::vector<std::pair<std::string, std::vector<std::string>>> out;
  if (has_extension(path, {".jsonl", ".json", ".ndjson"})) {
    std::size_t index = 0;
    for (const auto& line : io::read_lines(path)) {
      if (io::trim(line).empty()) continue;
      json j;
      try {
        j = json::parse(line);
      } catch (const json::parse_error&) {
        throw validation_error("malformed_line", path.string() + ": line " +
                                                     std::to_string(index + 1) +
                                                     " is not valid JSON");
      }
      const auto id = pick_id(j, src.id_field, index);
      std::vector<std::string> texts;
      const std::string field = j.contains(src.field) ? src.field
                                : j.contains("captions") ? "captions"
                                                         : src.field;
      if (!j.contains(field) || j[field].is_null()) {
        throw validation_error("malformed_line",
                               path.string() + ": record " + id + " has no " + src.field);
      }
      if (j[field].is_array()) {
        texts = j[field].get<std::vector<std::string>>();
      } else {
        texts.push_back(j[field].get<std::string>());
      }
      out.emplace_back(id, std::move(texts));
      ++index;
    }
    return out;
  }
  if (has_extension(path, {".csv"})) {
    const auto table = corpus::read_csv(path);
    const auto text_col = table.column(src.field);
    if (!text_col) throw validation_error("missing_column", "CSV has no column " + src.field);
    std::optional<std::size_t> id_col;
    for (const auto& name : {src.id_field, std::string("id"), std::string("ytid"),
                             std::string("track_id"), std::string("sample_id")}) {
      if (!name.empty() && (id_col = table.column(name))) break;
    }
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& row = table.rows[r];
      const auto id = id_col && *id_col < row.size() ? row[*id_col] : std::to_string(r);
      out.emplace_back(id, std::vector<std::string>{*text_col < row.size() ? row[*text_col] : ""});
    }
    return out;
  }
  std::size_t index = 0;
  for (const auto& line : io::read_lines(path)) {
    if (io::trim(line).empty()) continue;
    out.emplace_back(std::to_string(index++), std::vector<std::string>{line});
  }
  return out;
}

void write_output(const fs::path& path, const std::string& content, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << content;
  } else {
    io::write_file_atomic(path, content);
  }
}

// ---------------------------------------------------------------------------
// Commands

struct Globals {
  std::uint64_t seed = 0;
};

struct IngestArgs {
  fs::path input;
  fs::path out;
  std::string format = "auto";
  corpus::CsvColumns columns;
};

int cmd_ingest(const Globals& g, const IngestArgs& a, std::ostream& out) {
  RunManifest m;
  m.command = "ingest";
  m.started_at = io::now_utc();
  m.seed = g.seed;
  const auto records = load_records(a.input, a.format, a.columns);
  io::write_file_atomic(a.out, corpus::serialize_records(records));
  m.config = {{"format", a.format},
              {"id_column", a.columns.id},
              {"aspect_column", a.columns.aspects}};
  m.inputs = {a.input};
  m.outputs = {a.out};
  m.extra = {{"records", records.size()}};
  m.finished_at = io::now_utc();
  m.write();
  out << "ingested " << records.size() << " records -> " << a.out.string() << "\n";
  return kOk;
}

struct GenerateArgs {
  fs::path input;
  fs::path out;
  fs::path captions_out;
  std::string format = "auto";
  corpus::CsvColumns columns;
  std::string kinds = "all";
  std::string provider = "mock";
  llmgate::GenerationConfig gen;
  fs::path cache_dir;
  fs::path instructions;
  std::string coverage_mode = "contiguous";
};

int cmd_generate(const Globals& g, GenerateArgs a, std::ostream& out, std::ostream& err) {
  RunManifest m;
  m.command = "generate";
  m.started_at = io::now_utc();
  m.seed = g.seed;
  a.gen.seed = g.seed;

  const auto records = load_records(a.input, a.format, a.columns);
  const auto kinds = instruct::parse_kind_list(a.kinds);
  const auto instructions = a.instructions.empty()
                                ? instruct::InstructionSet()
                                : instruct::InstructionSet::with_overrides(a.instructions);
  const auto coverage_mode = a.coverage_mode == "bag" ? instruct::CoverageMode::kBagOfTokens
                                                      : instruct::CoverageMode::kContiguous;
  if (a.coverage_mode != "bag" && a.coverage_mode != "contiguous") {
    throw validation_error("invalid_flag", "--coverage must be contiguous or bag");
  }

  std::shared_ptr<llmgate::Provider> provider;
  if (a.provider == "mock") {
    provider = std::make_shared<llmgate::MockProvider>(g.seed);
  } else if (a.provider == "http") {
    provider = std::make_shared<llmgate::HttpProvider>(llmgate::HttpProvider::from_env());
  } else {
    throw validation_error("invalid_flag", "--provider must be mock or http");
  }
  auto cache = std::make_shared<llmgate::ResponseCache>(
      a.cache_dir.empty() ? std::nullopt : std::optional<fs::path>(a.cache_dir));
  llmgate::Client client(provider, a.gen, cache);

  std::vector<llmgate::BatchItem> items;
  std::vector<const corpus::TagRecord*> owners;
  for (const auto& r : records) {
    for (const auto kind : kinds) {
      items.push_back({r.track_id, instruct::render_prompt(kind, r.tags, instructions), 0});
      owners.push_back(&r);
    }
  }

  std::vector<std::optional<corpus::PseudoCaption>> captions(items.size());
  json failures = json::array();
  std::size_t provider_failures = 0;
  std::vector<std::size_t> to_retry;

  const auto accept = [&](std::size_t i, const llmgate::GenerationResult& res) -> bool {
    corpus::PseudoCaption c;
    c.track_id = res.track_id;
    c.kind = res.kind;
    c.model_id = res.model_id;
    c.created_at = res.created_at;
    if (res.kind == instruct::InstructionKind::kAttributePrediction) {
      try {
        auto parsed = instruct::parse_attribute_response(res.raw_text);
        c.text = io::trim(parsed.description);
        c.new_attributes = std::move(parsed.new_attributes);
      } catch (const Error& e) {
        log::warn("unparseable attribute response for " + res.track_id + ": " + e.what());
        return false;
      }
    } else {
      c.text = io::trim(res.raw_text);
    }
    c.tag_coverage = instruct::tag_coverage(owners[i]->tags, c.text, coverage_mode);
    captions[i] = std::move(c);
    return true;
  };

  auto first = client.generate_batch(items);
  for (const auto& f : first.failures) {
    ++provider_failures;
    failures.push_back({{"index", f.index},
                        {"track_id", items[f.index].track_id},
                        {"kind", instruct::to_string(items[f.index].prompt.kind)},
                        {"code", f.code},
                        {"message", f.message}});
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (first.results[i] && !accept(i, *first.results[i])) to_retry.push_back(i);
  }
  // Unparseable attribute answers get one fresh re-ask, then are dropped.
  if (!to_retry.empty()) {
    std::vector<llmgate::BatchItem> retry_items;
    for (auto i : to_retry) {
      auto item = items[i];
      item.attempt = 1;
      retry_items.push_back(std::move(item));
    }
    auto second = client.generate_batch(retry_items);
    for (std::size_t k = 0; k < to_retry.size(); ++k) {
      const auto i = to_retry[k];
      const bool ok = second.results[k] && accept(i, *second.results[k]);
      if (!ok) {
        const bool provider_error = !second.results[k];
        if (provider_error) ++provider_failures;
        failures.push_back({{"index", i},
                            {"track_id", items[i].track_id},
                            {"kind", instruct::to_string(items[i].prompt.kind)},
                            {"code", provider_error ? "generation_failed" : "unparseable_response"},
                            {"message", provider_error ? "re-ask failed"
                                                       : "attribute response dropped after one retry"}});
      }
    }
  }

  std::vector<corpus::PseudoCaption> kept;
  for (auto& c : captions) {
    if (c) kept.push_back(std::move(*c));
  }
  const auto dataset = corpus::assemble(records, kept);
  io::write_file_atomic(a.out, corpus::serialize_dataset(dataset));

  m.inputs = {a.input};
  m.outputs = {a.out};
  if (!a.captions_out.empty()) {
    std::string lines;
    for (const auto& c : kept) lines += corpus::to_json(c).dump() + "\n";
    io::write_file_atomic(a.captions_out, lines);
    m.outputs.push_back(a.captions_out);
  }
  const fs::path failure_path = a.out.string() + ".failures.json";
  if (!failures.empty()) {
    io::write_file_atomic(failure_path, json{{"failures", failures}}.dump(2) + "\n");
    m.outputs.push_back(failure_path);
  } else {
    std::error_code ec;
    fs::remove(failure_path, ec);
  }
  m.config = {{"kinds", a.kinds},
              {"provider", a.provider},
              {"model", a.gen.model_id},
              {"temperature", a.gen.temperature},
              {"max_output_tokens", a.gen.max_output_tokens},
              {"max_retries", a.gen.max_retries},
              {"max_in_flight", a.gen.max_in_flight},
              {"coverage", a.coverage_mode},
              {"instructions", a.instructions.string()}};
  m.extra = {{"records", records.size()},
             {"requests", items.size()},
             {"captions", kept.size()},
             {"failures", failures.size()}};
  m.finished_at = io::now_utc();
  m.write();

  out << "generated " << kept.size() << " captions for " << dataset.size() << " tracks -> "
      << a.out.string() << "\n";
  if (!failures.empty()) {
    err << failures.size() << " item(s) failed; see " << failure_path.string() << "\n";
  }
  return provider_failures > 0 ? kRuntimeError : kOk;
}

struct AssembleArgs {
  fs::path records;
  fs::path captions;
  fs::path out;
};

int cmd_assemble(const Globals& g, const AssembleArgs& a, std::ostream& out) {
  RunManifest m;
  m.command = "assemble";
  m.started_at = io::now_utc();
  m.seed = g.seed;
  const auto records = corpus::ingest_jsonl(a.records);
  const auto captions = corpus::read_captions_jsonl(a.captions);
  const auto dataset = corpus::assemble(records, captions);
  io::write_file_atomic(a.out, corpus::serialize_dataset(dataset));
  m.inputs = {a.records, a.captions};
  m.outputs = {a.out};
  m.finished_at = io::now_utc();
  m.write();
  out << "assembled " << dataset.size() << " tracks -> " << a.out.string() << "\n";
  return kOk;
}

struct StatsArgs {
  fs::path dataset;
  fs::path out;
};

int cmd_stats(const Globals& g, const StatsArgs& a, std::ostream& out) {
  const auto dataset = corpus::read_dataset_jsonl(a.dataset);
  const auto s = corpus::stats(dataset);
  write_output(a.out, corpus::to_json(s).dump(2) + "\n", out);
  if (!a.out.empty() && a.out != "-") {
    RunManifest m;
    m.command = "stats";
    m.seed = g.seed;
    m.started_at = m.finished_at = io::now_utc();
    m.inputs = {a.dataset};
    m.outputs = {a.out};
    m.write();
  }
  return kOk;
}

struct EvalArgs {
  fs::path candidates;
  fs::path references;
  fs::path training;
  fs::path cand_embeddings;
  fs::path ref_embeddings;
  std::string embedding_url;
  std::string field = "caption";
  std::string ref_field;
  std::string training_field;
  std::string bleu = "corpus";
  double rouge_beta = metrics::kDefaultRougeBeta;
  bool stem = false;
  fs::path synonyms;
  bool multi_ref = false;
  fs::path out;
};

int cmd_eval(const Globals& g, const EvalArgs& a, std::ostream& out) {
  RunManifest m;
  m.command = "eval";
  m.started_at = io::now_utc();
  m.seed = g.seed;

  metrics::EvalOptions opts;
  if (a.bleu == "corpus") {
    opts.bleu_mode = metrics::BleuMode::kCorpus;
  } else if (a.bleu == "sentence") {
    opts.bleu_mode = metrics::BleuMode::kSentence;
  } else {
    throw validation_error("invalid_flag", "--bleu must be corpus or sentence");
  }
  opts.rouge_beta = a.rouge_beta;
  opts.multi_ref = a.multi_ref;
  if (a.stem) opts.meteor.stages.push_back(metrics::MatchStage::kStem);
  if (!a.synonyms.empty()) {
    opts.meteor.synonyms =
        std::make_shared<metrics::SynonymLexicon>(metrics::SynonymLexicon::load(a.synonyms));
    opts.meteor.stages.push_back(metrics::MatchStage::kSynonym);
  }

  metrics::EvalInput input;
  for (auto& [id, texts] : read_sentences(a.candidates, {a.field, ""})) {
    input.candidates.push_back({id, texts.front()});
  }
  for (auto& [id, texts] : read_sentences(a.references, {a.ref_field.empty() ? a.field : a.ref_field, ""})) {
    std::vector<metrics::Sentence> refs;
    for (auto& t : texts) refs.push_back({id, std::move(t)});
    input.references.push_back(std::move(refs));
  }
  m.inputs = {a.candidates, a.references};
  if (!a.training.empty()) {
    std::vector<std::string> training;
    for (auto& [id, texts] :
         read_sentences(a.training, {a.training_field.empty() ? a.field : a.training_field, ""})) {
      for (auto& t : texts) training.push_back(std::move(t));
    }
    input.training = std::move(training);
    m.inputs.push_back(a.training);
  }

  std::unique_ptr<metrics::EmbeddingProvider> cand_emb;
  std::unique_ptr<metrics::EmbeddingProvider> ref_emb;
  if (!a.embedding_url.empty()) {
    cand_emb = std::make_unique<metrics::HttpEmbeddingProvider>(a.embedding_url);
    ref_emb = std::make_unique<metrics::HttpEmbeddingProvider>(a.embedding_url);
  } else if (!a.cand_embeddings.empty() || !a.ref_embeddings.empty()) {
    if (a.cand_embeddings.empty() || a.ref_embeddings.empty()) {
      throw validation_error("missing_embedding",
                             "BERT-Score needs both --cand-embeddings and --ref-embeddings");
    }
    for (const auto& p : {a.cand_embeddings, a.ref_embeddings}) {
      if (!fs::is_regular_file(p)) {
        throw validation_error("missing_embedding", "embedding file not found: " + p.string());
      }
    }
    cand_emb = std::make_unique<metrics::FileEmbeddingProvider>(
        metrics::FileEmbeddingProvider::load(a.cand_embeddings));
    ref_emb = std::make_unique<metrics::FileEmbeddingProvider>(
        metrics::FileEmbeddingProvider::load(a.ref_embeddings));
    m.inputs.push_back(a.cand_embeddings);
    m.inputs.push_back(a.ref_embeddings);
  }
  input.candidate_embeddings = cand_emb.get();
  input.reference_embeddings = ref_emb.get();

  const auto report = metrics::evaluate(input, opts);
  const auto j = metrics::to_json(report, opts);
  write_output(a.out, j.dump(2) + "\n", out);
  if (!a.out.empty() && a.out != "-") {
    m.outputs = {a.out};
    m.config = j["settings"];
    m.finished_at = io::now_utc();
    m.write();
  }
  return kOk;
}

struct SampleArgs {
  fs::path input;
  fs::path out;
  std::size_t n = 0;
  std::string mode = "replacement";
  std::string format = "auto";
};

int cmd_sample(const Globals& g, const SampleArgs& a, std::ostream& out) {
  RunManifest m;
  m.command = "sample";
  m.started_at = io::now_utc();
  m.seed = g.seed;
  sampler::SamplingMode mode;
  if (a.mode == "replacement") {
    mode = sampler::SamplingMode::kWithReplacement;
  } else if (a.mode == "epoch") {
    mode = sampler::SamplingMode::kEpoch;
  } else {
    throw validation_error("invalid_flag", "--mode must be replacement or epoch");
  }
  const auto records = load_records(a.input, a.format, {});
  const auto index = sampler::TagIndex::build(records);
  std::string lines;
  for (const auto& d : sampler::sample_draws(index, a.n, g.seed, mode)) {
    lines += d.track_id + "\t" + d.anchor + "\n";
  }
  write_output(a.out, lines, out);
  if (!a.out.empty() && a.out != "-") {
    m.inputs = {a.input};
    m.outputs = {a.out};
    m.config = {{"n", a.n}, {"mode", a.mode}};
    m.extra = {{"rng", std::string(kRngAlgorithm)}, {"tags", index.size()}};
    m.finished_at = io::now_utc();
    m.write();
  }
  return kOk;
}

struct AbBuildArgs {
  fs::path ground_truth;
  std::vector<std::string> methods;  // name=path
  fs::path samples;
  std::size_t n_samples = 0;
  std::string study_id = "study";
  std::string field = "caption";
  std::string id_field;
  fs::path out;
};

int cmd_abtest_build(const Globals& g, const AbBuildArgs& a, std::ostream& out) {
  RunManifest m;
  m.command = "abtest build";
  m.started_at = io::now_utc();
  m.seed = g.seed;
  m.inputs = {a.ground_truth};

  std::map<std::string, std::string> gt;
  std::vector<std::string> gt_order;
  for (auto& [id, texts] : read_sentences(a.ground_truth, {a.field, a.id_field})) {
    if (gt.emplace(id, texts.front()).second) gt_order.push_back(id);
  }
  abtest::MethodCaptions methods;
  for (const auto& spec : a.methods) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw validation_error("invalid_flag", "--method expects name=path, got " + spec);
    }
    const auto name = spec.substr(0, eq);
    const fs::path path = spec.substr(eq + 1);
    auto& captions = methods[name];
    for (auto& [id, texts] : read_sentences(path, {a.field, a.id_field})) {
      captions.emplace(id, texts.front());
    }
    m.inputs.push_back(path);
  }
  if (methods.empty()) throw validation_error("invalid_flag", "at least one --method is required");

  std::vector<std::string> samples;
  if (!a.samples.empty()) {
    for (const auto& line : io::read_lines(a.samples)) {
      const auto id = io::trim(line);
      if (!id.empty()) samples.push_back(id);
    }
    m.inputs.push_back(a.samples);
  } else if (a.n_samples > 0) {
    samples = abtest::select_samples(gt_order, a.n_samples, g.seed);
  } else {
    samples = gt_order;
  }

  abtest::Study study;
  study.study_id = a.study_id;
  study.seed = g.seed;
  study.questions = abtest::build_study(samples, methods, gt, g.seed);
  auto store = abtest::StudyStore::create(std::move(study), a.out);

  m.outputs = {a.out / "study.json"};
  m.config = {{"study_id", a.study_id}, {"n_samples", samples.size()}, {"methods", methods.size()}};
  m.extra = {{"questions", store->study().questions.size()}};
  m.finished_at = io::now_utc();
  m.write();
  out << "built study " << a.study_id << " with " << store->study().questions.size()
      << " questions (" << samples.size() << " samples x " << methods.size() << " methods) -> "
      << (a.out / "study.json").string() << "\n";
  return kOk;
}

struct AbServeArgs {
  std::vector<fs::path> studies;
  std::string host = "127.0.0.1";
  int port = 8080;
  fs::path audio_dir;
  fs::path static_dir;
  std::size_t session_size = 20;
};

int cmd_abtest_serve(const AbServeArgs& a, std::ostream& out) {
  abtest::ServerOptions opts;
  if (!a.audio_dir.empty()) opts.audio_dir = a.audio_dir;
  if (!a.static_dir.empty()) opts.static_dir = a.static_dir;
  opts.session_size = a.session_size;
  abtest::StudyServer server(opts);
  for (const auto& dir : a.studies) server.add_study(abtest::StudyStore::open(dir));
  if (!server.bind(a.host, a.port)) {
    throw runtime_error("bind_failed",
                        "cannot bind " + a.host + ":" + std::to_string(a.port));
  }
  out << "serving on http://" << a.host << ":" << a.port << std::endl;
  return server.listen_after_bind() ? kOk : kRuntimeError;
}

struct AbReportArgs {
  fs::path study;
  bool as_json = false;
};

int cmd_abtest_report(const AbReportArgs& a, std::ostream& out) {
  const auto store = abtest::StudyStore::open(a.study);
  const auto results = store->results();
  if (a.as_json) {
    out << abtest::to_json(results).dump(2) << "\n";
  } else {
    out << abtest::format_report(results);
  }
  return kOk;
}

/// Expands `--config FILE` into ordinary flags. Keys name long options of the
/// selected subcommand (or global ones); anything already on the command line
/// is left alone.
std::vector<std::string> merge_config(CLI::App& app, const std::vector<std::string>& args) {
  std::vector<std::string> rest;
  std::optional<fs::path> config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      config = args[++i];
    } else if (args[i].rfind("--config=", 0) == 0) {
      config = args[i].substr(9);
    } else {
      rest.push_back(args[i]);
    }
  }
  if (!config) return rest;

  CLI::App* target = &app;
  for (const auto& a : rest) {
    if (a.empty() || a[0] == '-') continue;
    auto* sub = target->get_subcommand_no_throw(a);
    if (sub == nullptr) continue;
    target = sub;
    if (target->get_subcommands({}).empty()) break;
  }
  const auto given = [&](const std::string& key) {
    return std::any_of(rest.begin(), rest.end(), [&](const std::string& a) {
      return a == "--" + key || a.rfind("--" + key + "=", 0) == 0;
    });
  };

  std::vector<std::string> front;
  std::vector<std::string> back;
  for (const auto& [key, value] : io::read_key_values(*config)) {
    if (given(key)) continue;
    const bool global = app.get_option_no_throw("--" + key) != nullptr;
    const CLI::Option* opt = global ? app.get_option_no_throw("--" + key)
                                    : target->get_option_no_throw("--" + key);
    if (opt == nullptr) {
      throw validation_error("unknown_config_key",
                             config->string() + ": no option --" + key + " for this command");
    }
    auto& dest = global ? front : back;
    if (opt->get_expected_min() == 0) {
      if (value == "true" || value == "1" || value == "yes" || value == "on") {
        dest.push_back("--" + key);
      }
    } else {
      dest.push_back("--" + key + "=" + value);
    }
  }
  front.insert(front.end(), rest.begin(), rest.end());
  front.insert(front.end(), back.begin(), back.end());
  return front;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"LLM-based pseudo-caption toolkit for music tag datasets", "lpcaps"};
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "Flat key = value config file; flags override it");
  app.set_version_flag("--version", kToolVersion);

  Globals g;
  app.add_option("--seed", g.seed, "Seed for every stochastic component")->capture_default_str();

  const auto add_csv_columns = [](CLI::App* sub, corpus::CsvColumns& cols) {
    sub->add_option("--id-column", cols.id, "CSV id column")->capture_default_str();
    sub->add_option("--aspect-column", cols.aspects, "CSV aspect-list column")
        ->capture_default_str();
    sub->add_option("--start-column", cols.start)->capture_default_str();
    sub->add_option("--end-column", cols.end)->capture_default_str();
  };

  IngestArgs ingest;
  auto* ingest_cmd = app.add_subcommand("ingest", "Normalize a tag dataset into records JSONL");
  ingest_cmd->add_option("--input", ingest.input, "JSONL or MusicCaps-style CSV")->required();
  ingest_cmd->add_option("--out", ingest.out, "Records JSONL")->required();
  ingest_cmd->add_option("--format", ingest.format)
      ->check(CLI::IsMember({"auto", "jsonl", "csv"}))
      ->capture_default_str();
  add_csv_columns(ingest_cmd, ingest.columns);

  GenerateArgs gen;
  auto* gen_cmd = app.add_subcommand("generate", "Generate pseudo captions with an LLM");
  gen_cmd->add_option("--input", gen.input, "Records JSONL or aspect CSV")->required();
  gen_cmd->add_option("--out", gen.out, "Dataset JSONL")->required();
  gen_cmd->add_option("--captions-out", gen.captions_out, "Also write one caption per line");
  gen_cmd->add_option("--format", gen.format)
      ->check(CLI::IsMember({"auto", "jsonl", "csv"}))
      ->capture_default_str();
  add_csv_columns(gen_cmd, gen.columns);
  gen_cmd->add_option("--kinds", gen.kinds, "all, or a comma list of writing,summary,"
                                            "paraphrase,attribute_prediction")
      ->capture_default_str();
  gen_cmd->add_option("--provider", gen.provider, "mock or http")->capture_default_str();
  gen_cmd->add_option("--model", gen.gen.model_id)->capture_default_str();
  gen_cmd->add_option("--temperature", gen.gen.temperature)->capture_default_str();
  gen_cmd->add_option("--max-tokens", gen.gen.max_output_tokens)->capture_default_str();
  gen_cmd->add_option("--timeout", gen.gen.request_timeout_sec, "Seconds")->capture_default_str();
  gen_cmd->add_option("--max-retries", gen.gen.max_retries)->capture_default_str();
  gen_cmd->add_option("--max-in-flight", gen.gen.max_in_flight)->capture_default_str();
  gen_cmd->add_option("--backoff-ms", gen.gen.backoff_base_ms)->capture_default_str();
  gen_cmd->add_option("--cache-dir", gen.cache_dir, "Persistent response cache");
  gen_cmd->add_option("--instructions", gen.instructions, "Instruction override file");
  gen_cmd->add_option("--coverage", gen.coverage_mode, "contiguous or bag")
      ->capture_default_str();

  AssembleArgs assemble;
  auto* asm_cmd = app.add_subcommand("assemble", "Join records and captions into a dataset");
  asm_cmd->add_option("--records", assemble.records)->required();
  asm_cmd->add_option("--captions", assemble.captions)->required();
  asm_cmd->add_option("--out", assemble.out)->required();

  StatsArgs stats;
  auto* stats_cmd = app.add_subcommand("stats", "Dataset statistics");
  stats_cmd->add_option("--dataset", stats.dataset)->required();
  stats_cmd->add_option("--out", stats.out, "JSON output (default stdout)");

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "Caption metrics against references");
  eval_cmd->add_option("--candidates", ev.candidates)->required();
  eval_cmd->add_option("--references", ev.references)->required();
  eval_cmd->add_option("--training", ev.training, "Training captions for Novel_v / Novel_c");
  eval_cmd->add_option("--field", ev.field, "Caption field or column")->capture_default_str();
  eval_cmd->add_option("--ref-field", ev.ref_field);
  eval_cmd->add_option("--training-field", ev.training_field);
  eval_cmd->add_option("--cand-embeddings", ev.cand_embeddings);
  eval_cmd->add_option("--ref-embeddings", ev.ref_embeddings);
  eval_cmd->add_option("--embedding-url", ev.embedding_url);
  eval_cmd->add_option("--bleu", ev.bleu, "corpus or sentence")->capture_default_str();
  eval_cmd->add_option("--rouge-beta", ev.rouge_beta)->capture_default_str();
  eval_cmd->add_flag("--stem", ev.stem, "Add a stemmed METEOR stage");
  eval_cmd->add_option("--synonyms", ev.synonyms, "Synonym lexicon for METEOR");
  eval_cmd->add_flag("--multi-ref", ev.multi_ref);
  eval_cmd->add_option("--out", ev.out, "JSON report (default stdout)");

  SampleArgs sample;
  auto* sample_cmd = app.add_subcommand("sample", "Balanced tag-anchored sampling");
  sample_cmd->add_option("--input", sample.input)->required();
  sample_cmd->add_option("--n", sample.n)->required();
  sample_cmd->add_option("--mode", sample.mode, "replacement or epoch")->capture_default_str();
  sample_cmd->add_option("--out", sample.out, "id<TAB>anchor lines (default stdout)");

  auto* ab_cmd = app.add_subcommand("abtest", "A-vs-B caption study");
  ab_cmd->require_subcommand(1);
  AbBuildArgs ab_build;
  auto* ab_build_cmd = ab_cmd->add_subcommand("build", "Build a blinded question set");
  ab_build_cmd->add_option("--ground-truth", ab_build.ground_truth)->required();
  ab_build_cmd->add_option("--method", ab_build.methods, "name=path, repeatable")->required();
  ab_build_cmd->add_option("--samples", ab_build.samples, "File of sample ids");
  ab_build_cmd->add_option("--n-samples", ab_build.n_samples, "Randomly select this many");
  ab_build_cmd->add_option("--study-id", ab_build.study_id)->capture_default_str();
  ab_build_cmd->add_option("--field", ab_build.field)->capture_default_str();
  ab_build_cmd->add_option("--id-field", ab_build.id_field);
  ab_build_cmd->add_option("--out", ab_build.out, "Study state directory")->required();

  AbServeArgs ab_serve;
  auto* ab_serve_cmd = ab_cmd->add_subcommand("serve", "Serve the rating API");
  ab_serve_cmd->add_option("--study", ab_serve.studies, "Study directory, repeatable")
      ->required();
  ab_serve_cmd->add_option("--host", ab_serve.host)->capture_default_str();
  ab_serve_cmd->add_option("--port", ab_serve.port)->capture_default_str();
  ab_serve_cmd->add_option("--audio-dir", ab_serve.audio_dir);
  ab_serve_cmd->add_option("--static-dir", ab_serve.static_dir);
  ab_serve_cmd->add_option("--session-size", ab_serve.session_size)->capture_default_str();

  AbReportArgs ab_report;
  auto* ab_report_cmd = ab_cmd->add_subcommand("report", "Win/tie/lose per method");
  ab_report_cmd->add_option("--study", ab_report.study)->required();
  ab_report_cmd->add_flag("--json", ab_report.as_json);

  std::vector<std::string> argv;
  try {
    argv = merge_config(app, args);
  } catch (const Error& e) {
    err << "error [" << e.code() << "]: " << e.what() << "\n";
    return kValidationError;
  }
  std::vector<std::string> reversed(argv.rbegin(), argv.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kValidationError;
  }

  try {
    if (*ingest_cmd) return cmd_ingest(g, ingest, out);
    if (*gen_cmd) return cmd_generate(g, gen, out, err);
    if (*asm_cmd) return cmd_assemble(g, assemble, out);
    if (*stats_cmd) return cmd_stats(g, stats, out);
    if (*eval_cmd) return cmd_eval(g, ev, out);
    if (*sample_cmd) return cmd_sample(g, sample, out);
    if (*ab_build_cmd) return cmd_abtest_build(g, ab_build, out);
    if (*ab_serve_cmd) return cmd_abtest_serve(ab_serve, out);
    if (*ab_report_cmd) return cmd_abtest_report(ab_report, out);
  } catch (const Error& e) {
    err << "error [" << e.code() << "]: " << e.what() << "\n";
    return e.error_class() == ErrorClass::kValidation ? kValidationError : kRuntimeError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kRuntimeError;
  }
  return kValidationError;
}

}  // namespace lpcaps::cli
