#include <gtest/gtest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <functional>
#include <random>
#include <thread>

#include "lpcaps/error.hpp"
#include "lpcaps/instruct.hpp"
#include "lpcaps/llmgate.hpp"
#include "support/fixtures.hpp"

namespace {

using namespace lpcaps::llmgate;
using lpcaps::Error;
using lpcaps::instruct::InstructionKind;
using lpcaps::instruct::render_prompt;
using Tags = std::vector<std::string>;

std::string code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

GenerationConfig fast_config() {
  GenerationConfig cfg;
  cfg.backoff_base_ms = 1;
  return cfg;
}

// Local chat-completion endpoint whose behaviour is set per test.
class FakeEndpoint {
 public:
  using Handler = std::function<void(const httplib::Request&, httplib::Response&)>;
  explicit FakeEndpoint(Handler handler) {
    server_.Post("/v1/chat/completions", [this, handler](const httplib::Request& req,
                                                         httplib::Response& res) {
      ++hits_;
      handler(req, res);
    });
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~FakeEndpoint() {
    server_.stop();
    thread_.join();
  }
  std::string base() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }
  int hits() const { return hits_.load(); }

 private:
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<int> hits_{0};
};

std::string completion(const std::string& content) {
  return nlohmann::json{{"created", 1700000000},
                        {"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}}}
      .dump();
}

TEST(Mock, WritingTemplate) {
  const Tags tags{"rock", "guitar"};
  EXPECT_EQ(MockProvider::render(0, InstructionKind::kWriting, tags),
            "This song featuring rock and guitar.");
  auto provider = std::make_shared<MockProvider>(7);
  Client client(provider, fast_config());
  const auto r = client.generate(render_prompt(InstructionKind::kWriting, tags), "t1");
  EXPECT_EQ(r.raw_text, "This song featuring rock and guitar.");
  EXPECT_EQ(r.track_id, "t1");
  EXPECT_EQ(r.model_id, "gpt-3.5-turbo");
  EXPECT_FALSE(r.from_cache);
}

TEST(Mock, AttributeOutputParses) {
  const Tags tags{"jazz", "piano", "mellow"};
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto raw = MockProvider::render(seed, InstructionKind::kAttributePrediction, tags);
    const auto parsed = lpcaps::instruct::parse_attribute_response(raw);
    EXPECT_EQ(parsed.new_attributes.size(), 2u);
    EXPECT_DOUBLE_EQ(lpcaps::instruct::tag_coverage(tags, parsed.description), 1.0);
  }
}

TEST(Cache, SecondIdenticalCallIsFree) {
  auto provider = std::make_shared<MockProvider>();
  Client client(provider, fast_config());
  const Tags tags{"rock"};
  const auto p = render_prompt(InstructionKind::kSummary, tags);
  const auto first = client.generate(p);
  const auto second = client.generate(p);
  EXPECT_EQ(first.raw_text, second.raw_text);
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(provider->calls(), 1u);
  EXPECT_EQ(client.network_requests(), 1u);
  client.generate(p, "", 1);
  EXPECT_EQ(provider->calls(), 2u);
}

TEST(Cache, KeyDependsOnModelPromptTemperature) {
  const auto k = ResponseCache::key("m", "p", 1.0);
  EXPECT_EQ(k.size(), 64u);
  EXPECT_EQ(k, ResponseCache::key("m", "p", 1.0));
  EXPECT_NE(k, ResponseCache::key("m2", "p", 1.0));
  EXPECT_NE(k, ResponseCache::key("m", "p2", 1.0));
  EXPECT_NE(k, ResponseCache::key("m", "p", 0.7));
  EXPECT_NE(k, ResponseCache::key("m", "p", 1.0, 1));
}

TEST(Cache, PersistsOnDisk) {
  fixtures::TempDir dir;
  const Tags tags{"ambient"};
  const auto p = render_prompt(InstructionKind::kParaphrase, tags);
  {
    Client client(std::make_shared<MockProvider>(), fast_config(),
                  std::make_shared<ResponseCache>(dir.path()));
    client.generate(p);
  }
  auto provider = std::make_shared<MockProvider>();
  Client client(provider, fast_config(), std::make_shared<ResponseCache>(dir.path()));
  EXPECT_TRUE(client.generate(p).from_cache);
  EXPECT_EQ(provider->calls(), 0u);
  const auto key = ResponseCache::key("gpt-3.5-turbo", p.text, 1.0);
  EXPECT_TRUE(std::filesystem::exists(dir / key.substr(0, 2) / (key + ".json")));
}

TEST(Backoff, NondecreasingAcrossRetries) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    GenerationConfig cfg;
    cfg.max_retries = 8;
    cfg.backoff_jitter = 1.0;
    lpcaps::Rng rng(seed);
    const auto delays = backoff_schedule(cfg, rng);
    ASSERT_EQ(delays.size(), 8u);
    for (std::size_t i = 1; i < delays.size(); ++i) EXPECT_GE(delays[i], delays[i - 1]);
  }
}

TEST(Config, Validation) {
  GenerationConfig cfg;
  cfg.temperature = -0.1;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), "invalid_config");
  cfg = {};
  cfg.max_retries = -1;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), "invalid_config");
  cfg = {};
  cfg.max_in_flight = 0;
  EXPECT_EQ(code_of([&] { cfg.validate(); }), "invalid_config");
}

TEST(Http, RateLimitedSurfacesAfterRetries) {
  FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
    res.status = 429;
    res.set_content("{}", "application/json");
  });
  auto cfg = fast_config();
  cfg.max_retries = 2;
  std::vector<std::chrono::milliseconds> slept;
  Client client(std::make_shared<HttpProvider>(ep.base(), "k"), cfg);
  client.set_sleeper([&](std::chrono::milliseconds d) { slept.push_back(d); });
  const Tags tags{"rock"};
  EXPECT_EQ(code_of([&] { client.generate(render_prompt(InstructionKind::kWriting, tags)); }),
            "rate_limited");
  EXPECT_EQ(ep.hits(), 3);
  ASSERT_EQ(slept.size(), 2u);
  EXPECT_LE(slept[0], slept[1]);
}

TEST(Http, RecoversAfterServerErrorAndSendsWireFormat) {
  std::atomic<int> calls{0};
  nlohmann::json seen;
  std::string auth;
  FakeEndpoint ep([&](const httplib::Request& req, httplib::Response& res) {
    if (calls++ == 0) {
      res.status = 503;
      return;
    }
    seen = nlohmann::json::parse(req.body);
    auth = req.get_header_value("Authorization");
    res.set_content(completion("A rock song."), "application/json");
  });
  Client client(std::make_shared<HttpProvider>(ep.base(), "secret"), fast_config());
  client.set_sleeper([](std::chrono::milliseconds) {});
  const Tags tags{"rock"};
  const auto p = render_prompt(InstructionKind::kWriting, tags);
  const auto r = client.generate(p);
  EXPECT_EQ(r.raw_text, "A rock song.");
  EXPECT_EQ(r.created_at, "2023-11-14T22:13:20Z");
  EXPECT_EQ(auth, "Bearer secret");
  EXPECT_EQ(seen["model"], "gpt-3.5-turbo");
  EXPECT_EQ(seen["messages"][0]["role"], "user");
  EXPECT_EQ(seen["messages"][0]["content"], p.text);
  EXPECT_DOUBLE_EQ(seen["temperature"].get<double>(), 1.0);
}

TEST(Http, ErrorMapping) {
  const Tags tags{"rock"};
  const auto p = render_prompt(InstructionKind::kWriting, tags);
  {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) { res.status = 401; });
    Client client(std::make_shared<HttpProvider>(ep.base(), "k"), fast_config());
    EXPECT_EQ(code_of([&] { client.generate(p); }), "http_error");
    EXPECT_EQ(ep.hits(), 1);
  }
  {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
      res.set_content(completion(""), "application/json");
    });
    Client client(std::make_shared<HttpProvider>(ep.base(), "k"), fast_config());
    EXPECT_EQ(code_of([&] { client.generate(p); }), "empty_completion");
  }
  {
    FakeEndpoint ep([](const httplib::Request&, httplib::Response& res) {
      res.set_content("not json", "application/json");
    });
    Client client(std::make_shared<HttpProvider>(ep.base(), "k"), fast_config());
    EXPECT_EQ(code_of([&] { client.generate(p); }), "bad_response");
  }
}

TEST(Http, UnreachableIsNotRetried) {
  const int port = fixtures::closed_port();
  Client client(std::make_shared<HttpProvider>("http://127.0.0.1:" + std::to_string(port), "k"),
                fast_config());
  int sleeps = 0;
  client.set_sleeper([&](std::chrono::milliseconds) { ++sleeps; });
  const Tags tags{"rock"};
  EXPECT_EQ(code_of([&] { client.generate(render_prompt(InstructionKind::kWriting, tags)); }),
            "provider_unreachable");
  EXPECT_EQ(sleeps, 0);
}

class SlowProvider final : public Provider {
 public:
  ChatReply complete(const ChatRequest& request) override {
    thread_local std::mt19937 gen(std::random_device{}());
    std::this_thread::sleep_for(std::chrono::milliseconds(std::uniform_int_distribution<>(0, 8)(gen)));
    if (request.tags.front() == "fail") throw lpcaps::runtime_error("server_error", "boom");
    return {"echo " + request.tags.front(), std::nullopt};
  }
  std::string name() const override { return "slow"; }
};

TEST(Batch, PreservesOrderAndBoundsConcurrency) {
  auto cfg = fast_config();
  cfg.max_in_flight = 3;
  cfg.max_retries = 0;
  Client client(std::make_shared<SlowProvider>(), cfg);
  std::vector<BatchItem> items;
  for (int i = 0; i < 40; ++i) {
    const Tags tags{"t" + std::to_string(i)};
    items.push_back({"id" + std::to_string(i), render_prompt(InstructionKind::kWriting, tags), 0});
  }
  const auto out = client.generate_batch(items);
  ASSERT_EQ(out.results.size(), 40u);
  for (int i = 0; i < 40; ++i) {
    ASSERT_TRUE(out.results[i].has_value());
    EXPECT_EQ(out.results[i]->raw_text, "echo t" + std::to_string(i));
    EXPECT_EQ(out.results[i]->track_id, "id" + std::to_string(i));
  }
  EXPECT_TRUE(out.failures.empty());
  EXPECT_LE(client.peak_in_flight(), 3u);
  EXPECT_GE(client.peak_in_flight(), 1u);
}

TEST(Batch, FailuresAreCollected) {
  auto cfg = fast_config();
  cfg.max_retries = 0;
  Client client(std::make_shared<SlowProvider>(), cfg);
  std::vector<BatchItem> items;
  for (const char* t : {"a", "fail", "c"}) {
    const Tags tags{t};
    items.push_back({t, render_prompt(InstructionKind::kWriting, tags), 0});
  }
  const auto out = client.generate_batch(items);
  EXPECT_TRUE(out.results[0].has_value());
  EXPECT_FALSE(out.results[1].has_value());
  EXPECT_TRUE(out.results[2].has_value());
  ASSERT_EQ(out.failures.size(), 1u);
  EXPECT_EQ(out.failures[0].index, 1u);
  EXPECT_EQ(out.failures[0].code, "server_error");

  const auto empty = client.generate_batch({});
  EXPECT_TRUE(empty.results.empty());
  EXPECT_TRUE(empty.failures.empty());
}

TEST(Batch, MockForcedFailure) {
  auto provider = std::make_shared<MockProvider>();
  provider->fail_when([](const ChatRequest& r) { return r.tags.front() == "b"; });
  Client client(provider, fast_config());
  std::vector<BatchItem> items;
  for (const char* t : {"a", "b", "c"}) {
    const Tags tags{t};
    items.push_back({t, render_prompt(InstructionKind::kWriting, tags), 0});
  }
  const auto out = client.generate_batch(items);
  EXPECT_EQ(std::count_if(out.results.begin(), out.results.end(),
                          [](const auto& r) { return r.has_value(); }),
            2);
  ASSERT_EQ(out.failures.size(), 1u);
  EXPECT_EQ(out.failures[0].index, 1u);
}

}  // namespace
