#include "socialveil/http_backend.hpp"

#include <cstdlib>
#include <thread>

#include <httplib.h>

#include "socialveil/errors.hpp"

namespace socialveil {

HttpBackend::Options HttpBackend::Options::from_config(const BackendConfig& cfg) {
  Options o;
  o.base_url = cfg.base_url;
  const char* key = std::getenv(cfg.api_key_env.c_str());
  if (key == nullptr) {
    throw InputError("environment variable " + cfg.api_key_env + " is not set");
  }
  o.api_key = key;
  o.model_id = cfg.model_id;
  o.request_timeout_s = cfg.request_timeout_s;
  o.max_retries = cfg.max_retries;
  o.retry_backoff_s = cfg.retry_backoff_s;
  o.max_in_flight = cfg.max_in_flight;
  o.tokens_per_minute = cfg.tokens_per_minute;
  o.budget_window = cfg.budget_window;
  return o;
}

HttpBackend::Endpoint HttpBackend::split_url(const std::string& base_url) {
  size_t scheme_end = base_url.find("://");
  if (scheme_end == std::string::npos) throw InputError("base_url needs a scheme: " + base_url);
  size_t path_start = base_url.find('/', scheme_end + 3);
  Endpoint e;
  if (path_start == std::string::npos) {
    e.scheme_host_port = base_url;
  } else {
    e.scheme_host_port = base_url.substr(0, path_start);
    e.path = base_url.substr(path_start);
  }
  while (!e.path.empty() && e.path.back() == '/') e.path.pop_back();
  e.path += "/chat/completions";
  return e;
}

HttpBackend::HttpBackend(Options options)
    : options_(std::move(options)), endpoint_(split_url(options_.base_url)) {
  if (options_.max_in_flight < 1) throw InputError("max_in_flight must be >= 1");
  in_flight_ = std::make_unique<std::counting_semaphore<>>(options_.max_in_flight);
  if (options_.tokens_per_minute > 0) {
    budget_ = std::make_unique<TokenBudget>(options_.tokens_per_minute, options_.budget_window);
  }
  if (!options_.sleep) {
    options_.sleep = [](double s) {
      std::this_thread::sleep_for(std::chrono::duration<double>(s));
    };
  }
}

HttpBackend::~HttpBackend() = default;

namespace {

struct SemaphoreGuard {
  explicit SemaphoreGuard(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
  ~SemaphoreGuard() { sem.release(); }
  std::counting_semaphore<>& sem;
};

bool retryable(int status) { return status == 429 || status >= 500; }

}  // namespace

Completion HttpBackend::complete(const ChatRequest& request) {
  nlohmann::json body;
  body["model"] = request.model_id().empty() ? options_.model_id : request.model_id();
  body["temperature"] = request.temperature();
  body["max_tokens"] = request.max_tokens();
  body["messages"] = nlohmann::json::array();
  size_t prompt_chars = 0;
  for (const auto& m : request.messages()) {
    body["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
    prompt_chars += m.content.size();
  }
  const std::string payload = body.dump();

  if (budget_) budget_->acquire(static_cast<long>(prompt_chars / 4) + request.max_tokens());
  SemaphoreGuard guard(*in_flight_);

  httplib::Client client(endpoint_.scheme_host_port);
  auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(
      std::chrono::duration<double>(options_.request_timeout_s));
  client.set_connection_timeout(timeout);
  client.set_read_timeout(timeout);
  client.set_write_timeout(timeout);
  httplib::Headers headers = {{"Authorization", "Bearer " + options_.api_key}};

  const std::vector<double> delays = backoff_schedule(options_.retry_backoff_s, options_.max_retries);
  std::vector<std::string> log;
  auto started = std::chrono::steady_clock::now();
  for (int attempt = 0;; ++attempt) {
    auto res = client.Post(endpoint_.path, headers, payload, "application/json");
    std::string outcome;
    bool can_retry = false;
    if (!res) {
      outcome = "transport error: " + httplib::to_string(res.error());
      can_retry = true;
    } else if (res->status == 200) {
      auto parsed = nlohmann::json::parse(res->body, nullptr, false);
      if (parsed.is_discarded() || !parsed.contains("choices") || parsed["choices"].empty() ||
          !parsed["choices"][0].contains("message") ||
          !parsed["choices"][0]["message"].contains("content") ||
          !parsed["choices"][0]["message"]["content"].is_string()) {
        log.push_back("attempt " + std::to_string(attempt) + ": malformed response body");
        throw TransportError("malformed chat completion response from " + options_.base_url, log);
      }
      log.push_back("attempt " + std::to_string(attempt) + ": 200");
      Completion c;
      c.text = parsed["choices"][0]["message"]["content"].get<std::string>();
      c.backend_id = id();
      c.latency_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - started)
                         .count();
      c.transport_retries = attempt;
      c.attempt_log = std::move(log);
      return c;
    } else {
      outcome = "HTTP " + std::to_string(res->status);
      can_retry = retryable(res->status);
    }
    log.push_back("attempt " + std::to_string(attempt) + ": " + outcome);
    if (!can_retry) {
      throw TransportError("chat completion failed with " + outcome, log);
    }
    if (attempt >= options_.max_retries) {
      throw TransportError("chat completion retries exhausted after " +
                               std::to_string(attempt + 1) + " attempts (" + outcome + ")",
                           log);
    }
    options_.sleep(delays[attempt]);
  }
}

}  // namespace socialveil
