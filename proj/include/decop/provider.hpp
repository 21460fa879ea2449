#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "decop/common.hpp"
#include "decop/corpus.hpp"
#include "decop/quiz.hpp"

namespace decop::provider {

using corpus::ProviderKind;

// Transport or HTTP failure that survived the retry budget.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, int status = 0) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

// Authentication or configuration failure. Aborts a batch.
class FatalProviderError : public ProviderError {
 public:
  using ProviderError::ProviderError;
};

class UnparseableChoice : public Error {
 public:
  explicit UnparseableChoice(const std::string& token)
      : Error("model answer '" + token + "' is not one of A, B, C, D"), token_(token) {}
  const std::string& token() const { return token_; }

 private:
  std::string token_;
};

struct RequestSettings {
  int max_tokens = 1;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;
  std::map<int, int> logit_bias;  // token id -> bias
  bool logprobs = false;
  std::optional<int> top_logprobs;
};

// max_tokens 1, temperature 0, seed 2319, +100 bias on the tokens for A-D,
// top 20 logprobs.
RequestSettings quiz_settings();
// temperature 0.1; room for three full rewrites.
RequestSettings paraphrase_settings();

struct RateLimits {
  int requests_per_minute = 0;  // 0 disables pacing
  int max_in_flight = 8;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{30'000};
};

struct ProviderConfig {
  ProviderKind kind = ProviderKind::OpenAIChat;
  std::string model_name;
  RequestSettings settings;
  RateLimits limits;
  RetryPolicy retry;
  std::string api_key_env;  // name of the environment variable holding the key
  std::string base_url;     // empty: provider default
  json mock;                // backend options when kind == Mock
};

// Missing fields take the quiz defaults (or paraphrase defaults when
// `for_paraphrase` is set).
ProviderConfig provider_config_from_json(const json& j, bool for_paraphrase = false);
json to_json(const ProviderConfig& cfg);

// Throws FatalProviderError unless max_tokens == 1, temperature == 0 and,
// for openai-chat, a logit bias is configured.
void validate_for_quiz(const ProviderConfig& cfg);

// Request body in the provider's wire shape. Mock providers receive the
// openai-chat shape.
//
// openai-chat:    {model, messages[{role,content}], max_tokens, temperature,
//                  seed?, logit_bias?{"<id>": bias}, logprobs?, top_logprobs?}
// anthropic-chat: {model, system?, messages[{role:user,content}], max_tokens,
//                  temperature}; logit bias and logprobs are not supported.
json build_wire_request(const ProviderConfig& cfg, const ChatPrompt& prompt);

// SHA-256 of the serialized wire request; `variant` > 0 salts the key so a
// deliberate regeneration does not hit the cached first answer.
std::string request_fingerprint(const json& wire_request, int variant = 0);

struct HttpResult {
  int status = 200;
  std::string body;
  std::optional<std::chrono::milliseconds> retry_after;
};

// Raised by transports for connection-level failures (retryable).
class TransportError : public Error {
 public:
  using Error::Error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResult post(const json& wire_request) = 0;
};

// Wraps a callable; counts calls and tracks peak concurrency.
class FunctionTransport : public Transport {
 public:
  using Handler = std::function<HttpResult(const json&)>;
  explicit FunctionTransport(Handler handler) : handler_(std::move(handler)) {}

  HttpResult post(const json& wire_request) override;

  std::size_t calls() const { return calls_.load(); }
  int peak_in_flight() const { return peak_.load(); }

 private:
  Handler handler_;
  std::atomic<std::size_t> calls_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> peak_{0};
};

// HTTPS transport for openai-chat / anthropic-chat. The API key is read from
// cfg.api_key_env; a missing variable is a FatalProviderError.
std::shared_ptr<Transport> make_http_transport(const ProviderConfig& cfg);

// Response body in the openai-chat shape, as produced by mock backends.
std::string openai_style_body(std::string_view content,
                              const std::vector<std::pair<std::string, double>>& top_logprobs = {});

struct Completion {
  std::string text;
  std::vector<std::pair<std::string, double>> top_logprobs;  // first token only
};

Completion extract_completion(ProviderKind kind, const std::string& body);

struct RawResponse {
  std::string fingerprint;
  std::string body;
  std::string received_at;  // ISO-8601 UTC
};

// Persistent response cache: append-only record-per-line file keyed by
// request fingerprint. Safe for concurrent use; one writer appends under a
// lock while readers look up the in-memory index.
class ResponseCache {
 public:
  ResponseCache() = default;  // in-memory only
  explicit ResponseCache(std::filesystem::path path);

  std::optional<RawResponse> lookup(const std::string& fingerprint) const;
  void store(const RawResponse& response);
  std::size_t size() const;

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, RawResponse> entries_;
  std::unique_ptr<JsonlAppender> log_;
};

class ChatClient {
 public:
  struct Reply {
    RawResponse raw;
    Completion completion;
    bool from_cache = false;
  };

  ChatClient(ProviderConfig cfg, std::shared_ptr<Transport> transport,
             std::shared_ptr<ResponseCache> cache = std::make_shared<ResponseCache>());

  // Cache first; otherwise sends with rate limiting, bounded concurrency and
  // retries on 429 / 5xx / transport errors. Throws ProviderError or
  // FatalProviderError.
  Reply complete(const ChatPrompt& prompt, int variant = 0);

  const ProviderConfig& config() const { return cfg_; }
  std::size_t network_requests() const { return network_requests_.load(); }
  std::size_t cache_hits() const { return cache_hits_.load(); }

 private:
  void acquire_slot();
  void release_slot();
  void pace();
  HttpResult send_with_retries(const json& wire, std::uint64_t jitter_seed);

  ProviderConfig cfg_;
  std::shared_ptr<Transport> transport_;
  std::shared_ptr<ResponseCache> cache_;

  std::mutex slot_mutex_;
  std::condition_variable slot_cv_;
  int in_flight_ = 0;

  std::mutex pace_mutex_;
  std::chrono::steady_clock::time_point next_start_{};

  std::atomic<std::size_t> network_requests_{0};
  std::atomic<std::size_t> cache_hits_{0};
};

// Strips surrounding whitespace and punctuation, uppercases, and accepts a
// single letter A-D. Throws UnparseableChoice.
char parse_choice(std::string_view token);

quiz::QuizResult submit_quiz(const quiz::QuizInstance& q, const corpus::Document& doc, ChatClient& client);

struct BatchFailure {
  std::size_t index = 0;
  std::string quiz_id;
  std::string paragraph_id;
  std::string kind;  // "unparseable_choice" or "provider_error"
  std::string message;
};

struct BatchOutcome {
  std::vector<std::optional<quiz::QuizResult>> results;  // input order
  std::vector<BatchFailure> failures;
};

using DocumentLookup = std::function<const corpus::Document&(const quiz::QuizInstance&)>;

// Runs up to `concurrency` quizzes at a time (capped by the client's
// in-flight limit). Per-item errors are recorded; a FatalProviderError stops
// the batch and is rethrown once in-flight work has drained. Successful
// responses are already in the response cache, so a rerun resumes.
BatchOutcome batch_submit(const std::vector<quiz::QuizInstance>& instances, const DocumentLookup& documents,
                          ChatClient& client, int concurrency = 0);

}  // namespace decop::provider
