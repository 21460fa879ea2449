#include "decop/provider.hpp"

#include <gtest/gtest.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <cstdlib>
#include <thread>

using namespace decop;
using namespace decop::provider;

namespace {

ProviderConfig openai_config() {
  ProviderConfig cfg;
  cfg.kind = ProviderKind::OpenAIChat;
  cfg.model_name = "gpt-test";
  cfg.settings = quiz_settings();
  cfg.retry.base_delay = std::chrono::milliseconds(1);
  cfg.retry.max_delay = std::chrono::milliseconds(5);
  return cfg;
}

quiz::QuizInstance quiz_with_key(char key) {
  quiz::QuizInstance q;
  q.quiz_id = std::string("q") + key;
  q.paragraph_id = "p";
  q.options = {"a", "b", "c", "d"};
  q.answer_key = key;
  return q;
}

corpus::Document document() {
  corpus::Document d;
  d.doc_id = "doc";
  d.title = "Title";
  d.author = "Author";
  return d;
}

HttpResult ok(std::string_view content) { return {200, openai_style_body(content), std::nullopt}; }

// Local HTTP server on an ephemeral port, stopped on destruction.
class LocalServer {
 public:
  explicit LocalServer(std::function<void(const httplib::Request&, httplib::Response&)> handler) {
    server_.Post("/v1/chat/completions", std::move(handler));
    port_ = server_.bind_to_any_port("127.0.0.1");
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  ~LocalServer() {
    server_.stop();
    thread_.join();
  }
  std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

 private:
  httplib::Server server_;
  int port_ = 0;
  std::thread thread_;
};

}  // namespace

TEST(Settings, QuizDefaults) {
  const auto s = quiz_settings();
  EXPECT_EQ(s.max_tokens, 1);
  EXPECT_EQ(s.temperature, 0.0);
  EXPECT_EQ(s.seed, 2319);
  EXPECT_EQ(s.logit_bias.size(), 4u);
  for (const auto& [token, bias] : s.logit_bias) EXPECT_EQ(bias, 100);
  EXPECT_NO_THROW(validate_for_quiz(openai_config()));
}

TEST(Settings, QuizValidationRejectsSamplingSettings) {
  auto cfg = openai_config();
  cfg.settings.temperature = 0.2;
  EXPECT_THROW(validate_for_quiz(cfg), FatalProviderError);
  cfg = openai_config();
  cfg.settings.max_tokens = 5;
  EXPECT_THROW(validate_for_quiz(cfg), FatalProviderError);
  cfg = openai_config();
  cfg.settings.logit_bias.clear();
  EXPECT_THROW(validate_for_quiz(cfg), FatalProviderError);
}

TEST(ConfigJson, RoundTripAndAnthropicDefaults) {
  const auto cfg = provider_config_from_json(json::parse(
      R"({"kind":"openai-chat","model":"gpt-4o","rate_limits":{"requests_per_minute":60,"max_in_flight":3}})"));
  EXPECT_EQ(cfg.api_key_env, "OPENAI_API_KEY");
  EXPECT_EQ(cfg.limits.max_in_flight, 3);
  const auto back = provider_config_from_json(to_json(cfg));
  EXPECT_EQ(back.settings.logit_bias, cfg.settings.logit_bias);
  EXPECT_EQ(back.limits.requests_per_minute, 60);

  const auto claude = provider_config_from_json(json::parse(R"({"kind":"anthropic-chat","model":"claude"})"));
  EXPECT_EQ(claude.api_key_env, "ANTHROPIC_API_KEY");
  EXPECT_TRUE(claude.settings.logit_bias.empty());
  EXPECT_NO_THROW(validate_for_quiz(claude));
}

TEST(WireShape, OpenAIAndAnthropic) {
  const ChatPrompt prompt{"sys", "user text"};
  const auto o = build_wire_request(openai_config(), prompt);
  EXPECT_EQ(o.at("messages").size(), 2u);
  EXPECT_EQ(o.at("messages")[0].at("role"), "system");
  EXPECT_EQ(o.at("max_tokens"), 1);
  EXPECT_EQ(o.at("seed"), 2319);
  EXPECT_EQ(o.at("logit_bias").size(), 4u);
  EXPECT_EQ(o.at("top_logprobs"), 20);

  auto cfg = openai_config();
  cfg.kind = ProviderKind::AnthropicChat;
  const auto a = build_wire_request(cfg, prompt);
  EXPECT_EQ(a.at("system"), "sys");
  EXPECT_EQ(a.at("messages").size(), 1u);
  EXPECT_FALSE(a.contains("logit_bias"));
  EXPECT_FALSE(a.contains("seed"));
}

TEST(Fingerprint, StableAndVariantSalted) {
  const auto wire = build_wire_request(openai_config(), {"s", "u"});
  EXPECT_EQ(request_fingerprint(wire), request_fingerprint(wire));
  EXPECT_NE(request_fingerprint(wire), request_fingerprint(wire, 1));
  EXPECT_EQ(request_fingerprint(wire).size(), 64u);
}

TEST(ParseChoice, AcceptsLettersOnly) {
  EXPECT_EQ(parse_choice("A"), 'A');
  EXPECT_EQ(parse_choice(" b."), 'B');
  EXPECT_EQ(parse_choice("(C)"), 'C');
  EXPECT_THROW(parse_choice("E"), UnparseableChoice);
  EXPECT_THROW(parse_choice("AB"), UnparseableChoice);
  EXPECT_THROW(parse_choice(""), UnparseableChoice);
}

TEST(Completion, ExtractsBothShapes) {
  const auto c = extract_completion(ProviderKind::OpenAIChat, openai_style_body("B", {{"B", -0.1}, {"A", -2.5}}));
  EXPECT_EQ(c.text, "B");
  ASSERT_EQ(c.top_logprobs.size(), 2u);
  EXPECT_EQ(c.top_logprobs[1].first, "A");
  const auto a = extract_completion(ProviderKind::AnthropicChat, R"({"content":[{"type":"text","text":"D"}]})");
  EXPECT_EQ(a.text, "D");
  EXPECT_THROW(extract_completion(ProviderKind::OpenAIChat, "not json"), ProviderError);
}

TEST(SubmitQuiz, ScoresAgainstAnswerKey) {
  auto transport = std::make_shared<FunctionTransport>([](const json&) {
    return HttpResult{200, openai_style_body("C", {{"C", -0.05}, {" A", -3.0}}), std::nullopt};
  });
  ChatClient client(openai_config(), transport);
  const auto doc = document();
  const auto hit = submit_quiz(quiz_with_key('C'), doc, client);
  EXPECT_TRUE(hit.correct);
  EXPECT_EQ(hit.chosen, 'C');
  ASSERT_TRUE(hit.logprobs.has_value());
  EXPECT_DOUBLE_EQ(hit.logprobs->at('A'), -3.0);
  const auto miss = submit_quiz(quiz_with_key('A'), doc, client);
  EXPECT_FALSE(miss.correct);
  EXPECT_EQ(miss.model_name, "gpt-test");
}

TEST(ChatClient, CachesByFingerprint) {
  auto transport = std::make_shared<FunctionTransport>([](const json&) { return ok("A"); });
  ChatClient client(openai_config(), transport);
  client.complete({"s", "u"});
  const auto second = client.complete({"s", "u"});
  EXPECT_TRUE(second.from_cache);
  EXPECT_EQ(transport->calls(), 1u);
  client.complete({"s", "u"}, 1);
  EXPECT_EQ(transport->calls(), 2u);
}

TEST(ChatClient, PersistentCacheSurvivesRestart) {
  const auto path = std::filesystem::temp_directory_path() / "decop_response_cache.jsonl";
  std::filesystem::remove(path);
  auto transport = std::make_shared<FunctionTransport>([](const json&) { return ok("B"); });
  {
    ChatClient client(openai_config(), transport, std::make_shared<ResponseCache>(path));
    client.complete({"s", "u"});
  }
  ChatClient client(openai_config(), transport, std::make_shared<ResponseCache>(path));
  EXPECT_TRUE(client.complete({"s", "u"}).from_cache);
  EXPECT_EQ(transport->calls(), 1u);
}

TEST(ChatClient, RetriesRateLimitAndServerErrors) {
  std::atomic<int> n{0};
  auto transport = std::make_shared<FunctionTransport>([&](const json&) {
    const int i = n++;
    if (i == 0) return HttpResult{429, "slow down", std::chrono::milliseconds(1)};
    if (i == 1) return HttpResult{503, "busy", std::nullopt};
    return ok("D");
  });
  ChatClient client(openai_config(), transport);
  EXPECT_EQ(client.complete({"s", "u"}).completion.text, "D");
  EXPECT_EQ(transport->calls(), 3u);
}

TEST(ChatClient, GivesUpAfterRetryBudget) {
  auto transport = std::make_shared<FunctionTransport>([](const json&) -> HttpResult {
    throw TransportError("connection reset");
  });
  ChatClient client(openai_config(), transport);
  EXPECT_THROW(client.complete({"s", "u"}), ProviderError);
  EXPECT_EQ(transport->calls(), 3u);
}

TEST(ChatClient, AuthFailureIsFatalWithoutRetry) {
  auto transport = std::make_shared<FunctionTransport>([](const json&) { return HttpResult{401, "bad key", {}}; });
  ChatClient client(openai_config(), transport);
  EXPECT_THROW(client.complete({"s", "u"}), FatalProviderError);
  EXPECT_EQ(transport->calls(), 1u);
}

TEST(BatchSubmit, RespectsInFlightCapAndRecordsFailures) {
  auto cfg = openai_config();
  cfg.limits.max_in_flight = 3;
  auto transport = std::make_shared<FunctionTransport>([](const json& wire) {
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    const std::string user = wire.at("messages")[1].at("content");
    return ok(user.find("unparseable") != std::string::npos ? "Z" : "A");
  });
  ChatClient client(cfg, transport);
  std::vector<quiz::QuizInstance> quizzes;
  for (int i = 0; i < 30; ++i) {
    auto q = quiz_with_key('A');
    q.quiz_id = "q" + std::to_string(i);
    q.options[0] = i == 7 ? "unparseable" : "a" + std::to_string(i);
    quizzes.push_back(q);
  }
  const auto doc = document();
  const auto outcome = batch_submit(quizzes, [&](const quiz::QuizInstance&) -> const corpus::Document& { return doc; },
                                    client, 16);
  EXPECT_LE(transport->peak_in_flight(), 3);
  ASSERT_EQ(outcome.failures.size(), 1u);
  EXPECT_EQ(outcome.failures[0].index, 7u);
  EXPECT_EQ(outcome.failures[0].kind, "unparseable_choice");
  for (std::size_t i = 0; i < quizzes.size(); ++i) EXPECT_EQ(outcome.results[i].has_value(), i != 7);
}

TEST(BatchSubmit, FatalErrorAbortsBatch) {
  auto transport = std::make_shared<FunctionTransport>([](const json&) { return HttpResult{403, "forbidden", {}}; });
  ChatClient client(openai_config(), transport);
  std::vector<quiz::QuizInstance> quizzes(10, quiz_with_key('A'));
  for (int i = 0; i < 10; ++i) quizzes[i].options[1] = std::to_string(i);
  const auto doc = document();
  EXPECT_THROW(batch_submit(quizzes, [&](const quiz::QuizInstance&) -> const corpus::Document& { return doc; }, client),
               FatalProviderError);
  EXPECT_LT(transport->calls(), 10u);
}

TEST(HttpTransport, MissingKeyIsFatal) {
  auto cfg = openai_config();
  cfg.api_key_env = "DECOP_TEST_UNSET_KEY";
  ::unsetenv("DECOP_TEST_UNSET_KEY");
  EXPECT_THROW(make_http_transport(cfg), FatalProviderError);
}

TEST(HttpTransport, TalksToLocalServerAndHonoursRetryAfter) {
  std::atomic<int> hits{0};
  std::string seen_auth;
  json seen_body;
  LocalServer server([&](const httplib::Request& req, httplib::Response& res) {
    if (hits++ == 0) {
      res.status = 429;
      res.set_header("Retry-After", "0.01");
      res.set_content("rate limited", "text/plain");
      return;
    }
    seen_auth = req.get_header_value("Authorization");
    seen_body = json::parse(req.body);
    res.set_content(openai_style_body("B"), "application/json");
  });
  ::setenv("DECOP_TEST_KEY", "sk-local-test", 1);
  auto cfg = openai_config();
  cfg.api_key_env = "DECOP_TEST_KEY";
  cfg.base_url = server.base_url();
  ChatClient client(cfg, make_http_transport(cfg));
  const auto doc = document();
  const auto result = submit_quiz(quiz_with_key('B'), doc, client);
  EXPECT_TRUE(result.correct);
  EXPECT_EQ(hits.load(), 2);
  EXPECT_EQ(seen_auth, "Bearer sk-local-test");
  EXPECT_EQ(seen_body.at("max_tokens"), 1);
  EXPECT_EQ(seen_body.at("model"), "gpt-test");
}

TEST(HttpTransport, ConnectionRefusedIsRetriedThenReported) {
  ::setenv("DECOP_TEST_KEY", "sk-local-test", 1);
  auto cfg = openai_config();
  cfg.api_key_env = "DECOP_TEST_KEY";
  cfg.base_url = "http://127.0.0.1:1/v1";
  ChatClient client(cfg, make_http_transport(cfg));
  EXPECT_THROW(client.complete({"s", "u"}), ProviderError);
  EXPECT_EQ(client.network_requests(), 3u);
}
