#include "decop/provider.hpp"

#include <algorithm>
#include <cctype>
#include <ctime>
#include <exception>
#include <thread>

#include <fmt/chrono.h>
#include <fmt/format.h>

namespace decop::provider {

namespace {

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  return fmt::format("{:%Y-%m-%dT%H:%M:%SZ}", fmt::gmtime(now));
}

bool retryable_status(int status) { return status == 408 || status == 429 || status >= 500; }
bool fatal_status(int status) { return status == 400 || status == 401 || status == 403 || status == 404; }

json settings_to_json(const RequestSettings& s) {
  json j = {{"max_tokens", s.max_tokens}, {"temperature", s.temperature}, {"logprobs", s.logprobs}};
  if (s.seed) j["seed"] = *s.seed;
  if (s.top_logprobs) j["top_logprobs"] = *s.top_logprobs;
  if (!s.logit_bias.empty()) {
    json bias = json::object();
    for (const auto& [token, value] : s.logit_bias) bias[std::to_string(token)] = value;
    j["logit_bias"] = std::move(bias);
  }
  return j;
}

RequestSettings settings_from_json(const json& j, RequestSettings s) {
  if (j.contains("max_tokens")) s.max_tokens = j.at("max_tokens").get<int>();
  if (j.contains("temperature")) s.temperature = j.at("temperature").get<double>();
  if (j.contains("seed")) {
    s.seed = j.at("seed").is_null() ? std::nullopt : std::optional<std::int64_t>(j.at("seed").get<std::int64_t>());
  }
  if (j.contains("logprobs")) s.logprobs = j.at("logprobs").get<bool>();
  if (j.contains("top_logprobs")) {
    s.top_logprobs =
        j.at("top_logprobs").is_null() ? std::nullopt : std::optional<int>(j.at("top_logprobs").get<int>());
  }
  if (j.contains("logit_bias")) {
    s.logit_bias.clear();
    for (const auto& [token, value] : j.at("logit_bias").items()) {
      s.logit_bias[std::stoi(token)] = value.get<int>();
    }
  }
  return s;
}

}  // namespace

RequestSettings quiz_settings() {
  RequestSettings s;
  s.max_tokens = 1;
  s.temperature = 0.0;
  s.seed = 2319;
  s.logit_bias = {{32, 100}, {33, 100}, {34, 100}, {35, 100}};
  s.logprobs = true;
  s.top_logprobs = 20;
  return s;
}

RequestSettings paraphrase_settings() {
  RequestSettings s;
  s.max_tokens = 2048;
  s.temperature = 0.1;
  return s;
}

ProviderConfig provider_config_from_json(const json& j, bool for_paraphrase) {
  ProviderConfig cfg;
  cfg.kind = corpus::parse_provider_kind(j.at("kind").get<std::string>());
  cfg.model_name = j.at("model").get<std::string>();
  RequestSettings defaults = for_paraphrase ? paraphrase_settings() : quiz_settings();
  if (cfg.kind == ProviderKind::AnthropicChat) {
    defaults.seed.reset();
    defaults.logit_bias.clear();
    defaults.logprobs = false;
    defaults.top_logprobs.reset();
  }
  cfg.settings = settings_from_json(j.value("settings", json::object()), defaults);
  if (auto it = j.find("rate_limits"); it != j.end()) {
    cfg.limits.requests_per_minute = it->value("requests_per_minute", 0);
    cfg.limits.max_in_flight = it->value("max_in_flight", cfg.limits.max_in_flight);
  }
  if (auto it = j.find("retry"); it != j.end()) {
    cfg.retry.max_attempts = it->value("max_attempts", cfg.retry.max_attempts);
    cfg.retry.base_delay = std::chrono::milliseconds(it->value("base_delay_ms", cfg.retry.base_delay.count()));
    cfg.retry.max_delay = std::chrono::milliseconds(it->value("max_delay_ms", cfg.retry.max_delay.count()));
  }
  const char* default_env = cfg.kind == ProviderKind::AnthropicChat ? "ANTHROPIC_API_KEY" : "OPENAI_API_KEY";
  cfg.api_key_env = j.value("api_key_env", cfg.kind == ProviderKind::Mock ? "" : default_env);
  cfg.base_url = j.value("base_url", "");
  cfg.mock = j.value("mock", json::object());
  if (cfg.limits.max_in_flight < 1) throw FatalProviderError("rate_limits.max_in_flight must be >= 1");
  if (cfg.retry.max_attempts < 1) throw FatalProviderError("retry.max_attempts must be >= 1");
  return cfg;
}

json to_json(const ProviderConfig& cfg) {
  json j = {{"kind", corpus::to_string(cfg.kind)},
            {"model", cfg.model_name},
            {"settings", settings_to_json(cfg.settings)},
            {"rate_limits",
             {{"requests_per_minute", cfg.limits.requests_per_minute}, {"max_in_flight", cfg.limits.max_in_flight}}},
            {"retry",
             {{"max_attempts", cfg.retry.max_attempts},
              {"base_delay_ms", cfg.retry.base_delay.count()},
              {"max_delay_ms", cfg.retry.max_delay.count()}}},
            {"api_key_env", cfg.api_key_env}};
  if (!cfg.base_url.empty()) j["base_url"] = cfg.base_url;
  if (!cfg.mock.empty()) j["mock"] = cfg.mock;
  return j;
}

void validate_for_quiz(const ProviderConfig& cfg) {
  if (cfg.settings.max_tokens != 1) {
    throw FatalProviderError(fmt::format("quiz provider '{}' must use max_tokens 1", cfg.model_name));
  }
  if (cfg.settings.temperature != 0.0) {
    throw FatalProviderError(fmt::format("quiz provider '{}' must use temperature 0", cfg.model_name));
  }
  if (cfg.kind == ProviderKind::OpenAIChat && cfg.settings.logit_bias.empty()) {
    throw FatalProviderError(fmt::format("quiz provider '{}' needs a logit_bias for the option tokens", cfg.model_name));
  }
}

json build_wire_request(const ProviderConfig& cfg, const ChatPrompt& prompt) {
  const auto& s = cfg.settings;
  if (cfg.kind == ProviderKind::AnthropicChat) {
    json j = {{"model", cfg.model_name},
              {"max_tokens", s.max_tokens},
              {"temperature", s.temperature},
              {"messages", json::array({{{"role", "user"}, {"content", prompt.user}}})}};
    if (!prompt.system.empty()) j["system"] = prompt.system;
    return j;
  }
  json messages = json::array();
  if (!prompt.system.empty()) messages.push_back({{"role", "system"}, {"content", prompt.system}});
  messages.push_back({{"role", "user"}, {"content", prompt.user}});
  json j = {{"model", cfg.model_name},
            {"messages", std::move(messages)},
            {"max_tokens", s.max_tokens},
            {"temperature", s.temperature}};
  if (s.seed) j["seed"] = *s.seed;
  if (!s.logit_bias.empty()) {
    json bias = json::object();
    for (const auto& [token, value] : s.logit_bias) bias[std::to_string(token)] = value;
    j["logit_bias"] = std::move(bias);
  }
  if (s.logprobs) {
    j["logprobs"] = true;
    if (s.top_logprobs) j["top_logprobs"] = *s.top_logprobs;
  }
  return j;
}

std::string request_fingerprint(const json& wire_request, int variant) {
  std::string payload = wire_request.dump();
  if (variant > 0) payload += fmt::format("#variant={}", variant);
  return sha256_hex(payload);
}

HttpResult FunctionTransport::post(const json& wire_request) {
  ++calls_;
  const int now = ++in_flight_;
  int peak = peak_.load();
  while (now > peak && !peak_.compare_exchange_weak(peak, now)) {
  }
  struct Leave {
    std::atomic<int>& counter;
    ~Leave() { --counter; }
  } leave{in_flight_};
  return handler_(wire_request);
}

std::string openai_style_body(std::string_view content,
                              const std::vector<std::pair<std::string, double>>& top_logprobs) {
  json choice = {{"index", 0},
                 {"message", {{"role", "assistant"}, {"content", content}}},
                 {"finish_reason", "stop"}};
  if (!top_logprobs.empty()) {
    json top = json::array();
    for (const auto& [token, lp] : top_logprobs) top.push_back({{"token", token}, {"logprob", lp}});
    choice["logprobs"] = {
        {"content", json::array({{{"token", content}, {"logprob", top_logprobs.front().second}, {"top_logprobs", top}}})}};
  }
  return json{{"object", "chat.completion"}, {"choices", json::array({choice})}}.dump();
}

Completion extract_completion(ProviderKind kind, const std::string& body) {
  Completion c;
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    throw ProviderError(fmt::format("malformed response body: {}", e.what()));
  }
  try {
    if (kind == ProviderKind::AnthropicChat) {
      for (const auto& part : j.at("content")) {
        if (part.value("type", "") == "text") c.text += part.at("text").get<std::string>();
      }
      return c;
    }
    const auto& choice = j.at("choices").at(0);
    const auto& content = choice.at("message").at("content");
    if (!content.is_null()) c.text = content.get<std::string>();
    if (auto lp = choice.find("logprobs"); lp != choice.end() && lp->is_object()) {
      const auto& tokens = lp->value("content", json::array());
      if (!tokens.empty()) {
        for (const auto& t : tokens.at(0).value("top_logprobs", json::array())) {
          c.top_logprobs.emplace_back(t.at("token").get<std::string>(), t.at("logprob").get<double>());
        }
      }
    }
  } catch (const json::exception& e) {
    throw ProviderError(fmt::format("unexpected response shape: {}", e.what()));
  }
  return c;
}

ResponseCache::ResponseCache(std::filesystem::path path)
    : log_(std::make_unique<JsonlAppender>(std::move(path))) {
  for (const auto& r : log_->existing()) {
    RawResponse raw{r.at("fingerprint").get<std::string>(), r.at("body").get<std::string>(),
                    r.value("received_at", "")};
    entries_[raw.fingerprint] = std::move(raw);
  }
}

std::optional<RawResponse> ResponseCache::lookup(const std::string& fingerprint) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(fingerprint);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::store(const RawResponse& response) {
  std::unique_lock lock(mutex_);
  if (entries_.count(response.fingerprint)) return;
  if (log_) {
    log_->append({{"fingerprint", response.fingerprint},
                  {"body", response.body},
                  {"received_at", response.received_at}});
  }
  entries_.emplace(response.fingerprint, response);
}

std::size_t ResponseCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

ChatClient::ChatClient(ProviderConfig cfg, std::shared_ptr<Transport> transport,
                       std::shared_ptr<ResponseCache> cache)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), cache_(std::move(cache)) {
  if (!cache_) cache_ = std::make_shared<ResponseCache>();
}

void ChatClient::acquire_slot() {
  std::unique_lock lock(slot_mutex_);
  slot_cv_.wait(lock, [&] { return in_flight_ < cfg_.limits.max_in_flight; });
  ++in_flight_;
}

void ChatClient::release_slot() {
  {
    std::lock_guard lock(slot_mutex_);
    --in_flight_;
  }
  slot_cv_.notify_one();
}

void ChatClient::pace() {
  if (cfg_.limits.requests_per_minute <= 0) return;
  const auto interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
      std::chrono::minutes(1)) / cfg_.limits.requests_per_minute;
  std::chrono::steady_clock::time_point start;
  {
    std::lock_guard lock(pace_mutex_);
    start = std::max(std::chrono::steady_clock::now(), next_start_);
    next_start_ = start + interval;
  }
  std::this_thread::sleep_until(start);
}

HttpResult ChatClient::send_with_retries(const json& wire, std::uint64_t jitter_seed) {
  Rng jitter(jitter_seed);
  std::string last_error;
  int last_status = 0;
  for (int attempt = 1; attempt <= cfg_.retry.max_attempts; ++attempt) {
    std::optional<std::chrono::milliseconds> retry_after;
    try {
      pace();
      ++network_requests_;
      HttpResult r = transport_->post(wire);
      if (r.status >= 200 && r.status < 300) return r;
      last_status = r.status;
      last_error = fmt::format("HTTP {}: {}", r.status, r.body.substr(0, 200));
      if (fatal_status(r.status)) throw FatalProviderError(last_error, r.status);
      if (!retryable_status(r.status)) throw ProviderError(last_error, r.status);
      retry_after = r.retry_after;
    } catch (const TransportError& e) {
      last_status = 0;
      last_error = e.what();
    }
    if (attempt == cfg_.retry.max_attempts) break;
    std::chrono::milliseconds delay = cfg_.retry.base_delay * (1L << (attempt - 1));
    delay = std::chrono::milliseconds(static_cast<long long>(static_cast<double>(delay.count()) *
                                                            (0.5 + 0.5 * jitter.uniform())));
    if (retry_after) delay = *retry_after;
    std::this_thread::sleep_for(std::min(delay, cfg_.retry.max_delay));
  }
  throw ProviderError(fmt::format("giving up after {} attempts: {}", cfg_.retry.max_attempts, last_error),
                      last_status);
}

ChatClient::Reply ChatClient::complete(const ChatPrompt& prompt, int variant) {
  const json wire = build_wire_request(cfg_, prompt);
  const std::string fp = request_fingerprint(wire, variant);
  if (auto hit = cache_->lookup(fp)) {
    ++cache_hits_;
    return Reply{*hit, extract_completion(cfg_.kind, hit->body), true};
  }
  acquire_slot();
  HttpResult r;
  try {
    r = send_with_retries(wire, fnv1a64(fp));
  } catch (...) {
    release_slot();
    throw;
  }
  release_slot();
  RawResponse raw{fp, std::move(r.body), utc_now()};
  Completion completion = extract_completion(cfg_.kind, raw.body);
  cache_->store(raw);
  return Reply{std::move(raw), std::move(completion), false};
}

char parse_choice(std::string_view token) {
  std::size_t b = 0;
  std::size_t e = token.size();
  auto strip = [](char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isspace(u) || std::ispunct(u);
  };
  while (b < e && strip(token[b])) ++b;
  while (e > b && strip(token[e - 1])) --e;
  if (e - b != 1) throw UnparseableChoice(std::string(token));
  const char c = static_cast<char>(std::toupper(static_cast<unsigned char>(token[b])));
  if (c < 'A' || c > 'D') throw UnparseableChoice(std::string(token));
  return c;
}

quiz::QuizResult submit_quiz(const quiz::QuizInstance& q, const corpus::Document& doc, ChatClient& client) {
  const auto reply = client.complete(quiz::render_quiz_prompt(q, doc));
  quiz::QuizResult r;
  r.quiz_id = q.quiz_id;
  r.paragraph_id = q.paragraph_id;
  r.model_name = client.config().model_name;
  r.raw_response_id = reply.raw.fingerprint;
  r.chosen = parse_choice(reply.completion.text);
  r.correct = r.chosen == q.answer_key;
  if (!reply.completion.top_logprobs.empty()) {
    std::map<char, double> lp;
    for (const auto& [token, value] : reply.completion.top_logprobs) {
      try {
        const char letter = parse_choice(token);
        auto [it, inserted] = lp.emplace(letter, value);
        if (!inserted) it->second = std::max(it->second, value);
      } catch (const UnparseableChoice&) {
      }
    }
    r.logprobs = std::move(lp);
  }
  return r;
}

BatchOutcome batch_submit(const std::vector<quiz::QuizInstance>& instances, const DocumentLookup& documents,
                          ChatClient& client, int concurrency) {
  BatchOutcome out;
  out.results.resize(instances.size());
  if (instances.empty()) return out;

  int workers = concurrency > 0 ? concurrency : client.config().limits.max_in_flight;
  workers = std::min({workers, client.config().limits.max_in_flight, static_cast<int>(instances.size())});

  std::atomic<std::size_t> next{0};
  std::atomic<bool> abort{false};
  std::mutex failure_mutex;
  std::exception_ptr fatal;

  auto work = [&] {
    while (!abort.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= instances.size()) return;
      const auto& q = instances[i];
      BatchFailure failure{i, q.quiz_id, q.paragraph_id, "", ""};
      try {
        out.results[i] = submit_quiz(q, documents(q), client);
        continue;
      } catch (const FatalProviderError&) {
        std::lock_guard lock(failure_mutex);
        if (!fatal) fatal = std::current_exception();
        abort = true;
        return;
      } catch (const UnparseableChoice& e) {
        failure.kind = "unparseable_choice";
        failure.message = e.what();
      } catch (const Error& e) {
        failure.kind = "provider_error";
        failure.message = e.what();
      }
      std::lock_guard lock(failure_mutex);
      out.failures.push_back(std::move(failure));
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);
  std::sort(out.failures.begin(), out.failures.end(),
            [](const BatchFailure& a, const BatchFailure& b) { return a.index < b.index; });
  return out;
}

}  // namespace decop::provider
