#include "lpcaps/llmgate.hpp"

#include <httplib.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <thread>

#include <nlohmann/json.hpp>

#include "../http_util.hpp"
#include "lpcaps/error.hpp"
#include "lpcaps/io.hpp"
#include "lpcaps/text.hpp"

namespace lpcaps::llmgate {

using nlohmann::json;

void GenerationConfig::validate() const {
  const auto bad = [](const std::string& what) {
    return validation_error("invalid_config", what);
  };
  if (model_id.empty()) throw bad("model_id is empty");
  if (!(temperature >= 0.0)) throw bad("temperature must be >= 0");
  if (max_output_tokens <= 0) throw bad("max_output_tokens must be positive");
  if (request_timeout_sec <= 0) throw bad("request_timeout must be positive");
  if (max_retries < 0) throw bad("max_retries must be >= 0");
  if (max_in_flight <= 0 || max_in_flight > 1024) throw bad("max_in_flight must be in 1..1024");
  if (backoff_base_ms < 0) throw bad("backoff_base_ms must be >= 0");
  if (!(backoff_jitter >= 0.0 && backoff_jitter <= 1.0)) {
    throw bad("backoff_jitter must be in [0, 1]");
  }
}

bool is_retryable(const std::string& code) {
  return code == "rate_limited" || code == "timeout" || code == "server_error";
}

// ---------------------------------------------------------------------------
// Mock provider

namespace {

constexpr std::string_view kMockAttributePool[] = {
    "warm analog texture", "steady backbeat", "wide stereo mix",  "bright timbre",
    "laid-back mood",      "driving rhythm",  "lush reverb",      "crisp percussion",
    "mellow harmony",      "retro vibe",      "punchy low end",   "airy vocals",
};

std::string natural_join(std::span<const std::string> items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += i + 1 == items.size() ? " and " : ", ";
    out += items[i];
  }
  return out;
}

}  // namespace

std::string MockProvider::render(std::uint64_t seed, InstructionKind kind,
                                 std::span<const std::string> tags) {
  const auto list = natural_join(tags);
  switch (kind) {
    case InstructionKind::kWriting:
      return "This song featuring " + list + ".";
    case InstructionKind::kSummary:
      return "A song with " + list + ".";
    case InstructionKind::kParaphrase:
      return "A track that blends " + list + " into one piece.";
    case InstructionKind::kAttributePrediction: {
      Rng rng = Rng(seed).split(text::join(tags, "\x1f"));
      constexpr auto pool_size = std::size(kMockAttributePool);
      const auto first = rng.below(pool_size);
      const auto second = (first + 1 + rng.below(pool_size - 1)) % pool_size;
      instruct::AttributeResponse response;
      response.new_attributes = {std::string(kMockAttributePool[first]),
                                 std::string(kMockAttributePool[second])};
      response.description = "This song featuring " + list + ", with " +
                             response.new_attributes[0] + " and " +
                             response.new_attributes[1] + ".";
      return instruct::serialize_attribute_response(response);
    }
  }
  return {};
}

ChatReply MockProvider::complete(const ChatRequest& request) {
  calls_.fetch_add(1);
  {
    std::lock_guard lock(fail_mutex_);
    if (fail_ && fail_(request)) {
      throw runtime_error("mock_failure", "mock provider forced failure");
    }
  }
  return ChatReply{render(seed_, request.kind, request.tags), 0};
}

void MockProvider::fail_when(std::function<bool(const ChatRequest&)> predicate) {
  std::lock_guard lock(fail_mutex_);
  fail_ = std::move(predicate);
}

// ---------------------------------------------------------------------------
// HTTP provider

HttpProvider::HttpProvider(std::string base_url, std::string api_key)
    : base_url_(std::move(base_url)), api_key_(std::move(api_key)) {}

HttpProvider HttpProvider::from_env() {
  const char* key = std::getenv("LLM_API_KEY");
  if (key == nullptr || *key == '\0') {
    throw validation_error("missing_api_key", "LLM_API_KEY is not set");
  }
  const char* base = std::getenv("LLM_BASE_URL");
  return HttpProvider(base != nullptr && *base != '\0' ? base : "https://api.openai.com/v1",
                      key);
}

ChatReply HttpProvider::complete(const ChatRequest& request) {
  const auto [origin, prefix] = detail::split_base_url(base_url_);
  httplib::Client client(origin);
  client.set_connection_timeout(request.timeout_sec);
  client.set_read_timeout(request.timeout_sec);
  client.set_write_timeout(request.timeout_sec);
  client.set_bearer_token_auth(api_key_);

  const json body{{"model", request.model_id},
                  {"messages", json::array({{{"role", "user"}, {"content", request.text}}})},
                  {"temperature", request.temperature},
                  {"max_tokens", request.max_output_tokens}};
  auto res = client.Post(prefix + "/chat/completions", body.dump(), "application/json");
  if (!res) {
    const auto err = res.error();
    if (err == httplib::Error::Read || err == httplib::Error::Write ||
        err == httplib::Error::ConnectionTimeout) {
      throw runtime_error("timeout", "request timed out: " + httplib::to_string(err));
    }
    throw runtime_error("provider_unreachable",
                        "cannot reach " + origin + ": " + httplib::to_string(err));
  }
  if (res->status == 429) {
    throw runtime_error("rate_limited", "provider returned HTTP 429");
  }
  if (res->status >= 500) {
    throw runtime_error("server_error", "provider returned HTTP " + std::to_string(res->status));
  }
  if (res->status != 200) {
    throw runtime_error("http_error", "provider returned HTTP " + std::to_string(res->status));
  }
  ChatReply reply;
  try {
    const auto j = json::parse(res->body);
    const auto& choices = j.at("choices");
    if (choices.empty()) throw runtime_error("empty_completion", "completion has no choices");
    const auto& content = choices.at(0).at("message").at("content");
    if (content.is_string()) reply.content = content.get<std::string>();
    if (j.contains("created") && j["created"].is_number_integer()) {
      reply.created = j["created"].get<long long>();
    }
  } catch (const json::exception& e) {
    throw runtime_error("bad_response", std::string("malformed completion: ") + e.what());
  }
  return reply;
}

// ---------------------------------------------------------------------------
// Cache

ResponseCache::ResponseCache(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {}

std::string ResponseCache::key(const std::string& model_id, const std::string& prompt_text,
                               double temperature, int attempt) {
  char temp[32];
  std::snprintf(temp, sizeof temp, "%.17g", temperature);
  std::string material = model_id + '\x1f' + prompt_text + '\x1f' + temp;
  if (attempt > 0) material += '\x1f' + std::to_string(attempt);
  return io::sha256_hex(material);
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
  return *dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<ResponseCache::Entry> ResponseCache::get(const std::string& key) {
  std::lock_guard lock(mutex_);
  if (const auto it = memory_.find(key); it != memory_.end()) return it->second;
  if (!dir_) return std::nullopt;
  const auto path = path_for(key);
  std::error_code ec;
  if (!std::filesystem::exists(path, ec)) return std::nullopt;
  try {
    const auto j = json::parse(io::read_file(path));
    Entry e{j.at("model_id").get<std::string>(), j.at("raw_text").get<std::string>(),
            j.value("created_at", std::string())};
    memory_.emplace(key, e);
    return e;
  } catch (const std::exception&) {
    return std::nullopt;  // unreadable entries are regenerated
  }
}

void ResponseCache::put(const std::string& key, const Entry& entry) {
  std::lock_guard lock(mutex_);
  memory_[key] = entry;
  if (!dir_) return;
  const json j{{"key", key},
               {"model_id", entry.model_id},
               {"raw_text", entry.raw_text},
               {"created_at", entry.created_at}};
  io::write_file_atomic(path_for(key), j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Client

std::vector<std::chrono::milliseconds> backoff_schedule(const GenerationConfig& cfg, Rng& rng) {
  std::vector<std::chrono::milliseconds> delays;
  for (int retry = 0; retry < cfg.max_retries; ++retry) {
    const double base = static_cast<double>(cfg.backoff_base_ms) * std::ldexp(1.0, retry);
    const double jittered = base * (1.0 + cfg.backoff_jitter * rng.unit());
    delays.emplace_back(static_cast<long long>(std::floor(jittered)));
  }
  return delays;
}

namespace {

GenerationConfig validated(GenerationConfig cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

Client::Client(std::shared_ptr<Provider> provider, GenerationConfig cfg,
               std::shared_ptr<ResponseCache> cache)
    : provider_(std::move(provider)),
      cfg_(validated(std::move(cfg))),
      cache_(std::move(cache)),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }),
      slots_(cfg_.max_in_flight),
      jitter_rng_(Rng(cfg_.seed).split("backoff")) {
}

ChatReply Client::call_with_retries(const ChatRequest& request) {
  std::vector<std::chrono::milliseconds> delays;
  {
    std::lock_guard lock(rng_mutex_);
    delays = backoff_schedule(cfg_, jitter_rng_);
  }
  for (int attempt = 0;; ++attempt) {
    slots_.acquire();
    const auto now_in_flight = in_flight_.fetch_add(1) + 1;
    auto peak = peak_in_flight_.load();
    while (now_in_flight > peak && !peak_in_flight_.compare_exchange_weak(peak, now_in_flight)) {
    }
    requests_.fetch_add(1);
    try {
      auto reply = provider_->complete(request);
      in_flight_.fetch_sub(1);
      slots_.release();
      return reply;
    } catch (const Error& e) {
      in_flight_.fetch_sub(1);
      slots_.release();
      if (!is_retryable(e.code()) || attempt >= cfg_.max_retries) throw;
      sleeper_(delays[static_cast<std::size_t>(attempt)]);
    } catch (...) {
      in_flight_.fetch_sub(1);
      slots_.release();
      throw;
    }
  }
}

GenerationResult Client::generate(const Prompt& prompt, const std::string& track_id,
                                  int attempt) {
  GenerationResult result;
  result.track_id = track_id;
  result.kind = prompt.kind;
  result.model_id = cfg_.model_id;

  const auto key = ResponseCache::key(cfg_.model_id, prompt.text, cfg_.temperature, attempt);
  if (auto hit = cache_->get(key)) {
    result.raw_text = std::move(hit->raw_text);
    result.created_at = std::move(hit->created_at);
    result.from_cache = true;
    return result;
  }

  ChatRequest request;
  request.model_id = cfg_.model_id;
  request.text = prompt.text;
  request.temperature = cfg_.temperature;
  request.max_output_tokens = cfg_.max_output_tokens;
  request.timeout_sec = cfg_.request_timeout_sec;
  request.kind = prompt.kind;
  request.tags = prompt.tags;
  auto reply = call_with_retries(request);
  if (io::trim(reply.content).empty()) {
    throw runtime_error("empty_completion", "provider returned an empty completion");
  }
  result.raw_text = std::move(reply.content);
  result.created_at = reply.created ? io::format_utc(*reply.created) : io::now_utc();
  cache_->put(key, {result.model_id, result.raw_text, result.created_at});
  return result;
}

BatchResult Client::generate_batch(std::span<const BatchItem> items) {
  BatchResult out;
  out.results.resize(items.size());
  std::vector<std::optional<BatchFailure>> failures(items.size());
  std::atomic<std::size_t> next{0};
  const auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) {
      try {
        out.results[i] = generate(items[i].prompt, items[i].track_id, items[i].attempt);
      } catch (const Error& e) {
        failures[i] = BatchFailure{i, e.code(), e.what()};
      } catch (const std::exception& e) {
        failures[i] = BatchFailure{i, "internal_error", e.what()};
      }
    }
  };
  const auto n_workers =
      std::min<std::size_t>(items.size(), static_cast<std::size_t>(cfg_.max_in_flight));
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
  pool.clear();  // joins
  for (auto& f : failures) {
    if (f) out.failures.push_back(std::move(*f));
  }
  return out;
}

}  // namespace lpcaps::llmgate
