#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "lpcaps/instruct.hpp"
#include "lpcaps/rng.hpp"

namespace lpcaps::llmgate {

using instruct::InstructionKind;
using instruct::Prompt;

struct GenerationConfig {
  std::string model_id = "gpt-3.5-turbo";
  double temperature = 1.0;
  int max_output_tokens = 512;
  int request_timeout_sec = 60;
  int max_retries = 3;
  int max_in_flight = 4;
  /// First retry waits backoff_base_ms * (1 + backoff_jitter * u), u in [0, 1);
  /// each later retry doubles the base.
  int backoff_base_ms = 500;
  double backoff_jitter = 0.5;
  std::uint64_t seed = 0;

  /// Throws invalid_config.
  void validate() const;
};

struct GenerationResult {
  std::string track_id;
  InstructionKind kind = InstructionKind::kWriting;
  std::string raw_text;
  std::string model_id;
  std::string created_at;
  bool from_cache = false;
};

struct ChatRequest {
  std::string model_id;
  std::string text;
  double temperature = 1.0;
  int max_output_tokens = 512;
  int timeout_sec = 60;
  InstructionKind kind = InstructionKind::kWriting;
  std::vector<std::string> tags;
};

struct ChatReply {
  std::string content;
  /// Provider-reported creation time (epoch seconds), if any.
  std::optional<long long> created;
};

/// Error codes raised by providers. rate_limited, timeout and http_error with
/// a 5xx status are retried by Client; everything else surfaces at once.
bool is_retryable(const std::string& code);

class Provider {
 public:
  virtual ~Provider() = default;
  virtual ChatReply complete(const ChatRequest& request) = 0;
  virtual std::string name() const = 0;
};

/// Offline provider that fills a fixed sentence template per instruction
/// kind from the prompt's tags. Output depends only on (seed, kind, tags), and
/// every reply is stamped with the Unix epoch so whole runs are
/// byte-reproducible.
class MockProvider final : public Provider {
 public:
  explicit MockProvider(std::uint64_t seed = 0) : seed_(seed) {}

  ChatReply complete(const ChatRequest& request) override;
  std::string name() const override { return "mock"; }

  /// Requests matching the predicate fail with code mock_failure.
  void fail_when(std::function<bool(const ChatRequest&)> predicate);

  std::size_t calls() const { return calls_.load(); }

  static std::string render(std::uint64_t seed, InstructionKind kind,
                            std::span<const std::string> tags);

 private:
  std::uint64_t seed_;
  std::function<bool(const ChatRequest&)> fail_;
  std::mutex fail_mutex_;
  std::atomic<std::size_t> calls_{0};
};

/// Chat-completion endpoint: POST {base_url}/chat/completions with
/// {"model", "messages": [{"role": "user", "content"}], "temperature",
/// "max_tokens"}; the reply is choices[0].message.content.
class HttpProvider final : public Provider {
 public:
  HttpProvider(std::string base_url, std::string api_key);

  /// Reads LLM_BASE_URL (default https://api.openai.com/v1) and LLM_API_KEY.
  /// Throws missing_api_key when the key is unset.
  static HttpProvider from_env();

  ChatReply complete(const ChatRequest& request) override;
  std::string name() const override { return "http"; }

 private:
  std::string base_url_;
  std::string api_key_;
};

/// Content-addressed response cache. Entries live in memory and, when a
/// directory is given, as <dir>/<key[0:2]>/<key>.json written atomically.
class ResponseCache {
 public:
  struct Entry {
    std::string model_id;
    std::string raw_text;
    std::string created_at;
  };

  explicit ResponseCache(std::optional<std::filesystem::path> dir = std::nullopt);

  /// sha256 over model, prompt text and temperature; retry attempts after the
  /// first get their own key so a re-ask is not served the rejected answer.
  static std::string key(const std::string& model_id, const std::string& prompt_text,
                         double temperature, int attempt = 0);

  std::optional<Entry> get(const std::string& key);
  void put(const std::string& key, const Entry& entry);

 private:
  std::filesystem::path path_for(const std::string& key) const;

  std::optional<std::filesystem::path> dir_;
  std::mutex mutex_;
  std::unordered_map<std::string, Entry> memory_;
};

/// Delays before retry 1..max_retries. Non-decreasing for jitter <= 1.
std::vector<std::chrono::milliseconds> backoff_schedule(const GenerationConfig& cfg, Rng& rng);

struct BatchItem {
  std::string track_id;
  Prompt prompt;
  /// Distinguishes re-asks of the same prompt in the cache.
  int attempt = 0;
};

struct BatchFailure {
  std::size_t index = 0;
  std::string code;
  std::string message;
};

struct BatchResult {
  /// Same length and order as the input; empty where the item failed.
  std::vector<std::optional<GenerationResult>> results;
  std::vector<BatchFailure> failures;
};

/// Shareable across threads. At most cfg.max_in_flight provider calls are
/// outstanding at any moment, across all callers.
class Client {
 public:
  using Sleeper = std::function<void(std::chrono::milliseconds)>;

  Client(std::shared_ptr<Provider> provider, GenerationConfig cfg,
         std::shared_ptr<ResponseCache> cache = std::make_shared<ResponseCache>());

  GenerationResult generate(const Prompt& prompt, const std::string& track_id = {},
                            int attempt = 0);

  BatchResult generate_batch(std::span<const BatchItem> items);

  /// Replaces the real sleep between retries (tests record delays instead).
  void set_sleeper(Sleeper sleeper) { sleeper_ = std::move(sleeper); }

  std::size_t network_requests() const { return requests_.load(); }
  std::size_t peak_in_flight() const { return peak_in_flight_.load(); }
  const GenerationConfig& config() const { return cfg_; }

 private:
  ChatReply call_with_retries(const ChatRequest& request);

  std::shared_ptr<Provider> provider_;
  GenerationConfig cfg_;
  std::shared_ptr<ResponseCache> cache_;
  Sleeper sleeper_;
  std::counting_semaphore<1024> slots_;
  std::mutex rng_mutex_;
  Rng jitter_rng_;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> in_flight_{0};
  std::atomic<std::size_t> peak_in_flight_{0};
};

}  // namespace lpcaps::llmgate
