#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>

#include "socialveil/backend.hpp"

namespace socialveil {

// Client for the chat-completions HTTP/JSON interface:
// POST {base_url}/chat/completions with model, messages, temperature,
// max_tokens; reads choices[0].message.content.
//
// Transport failures, 429 and 5xx responses are retried up to max_retries
// times with delays from backoff_schedule(). Other statuses fail at once.
// Concurrent calls are capped at max_in_flight; with tokens_per_minute set,
// each call first reserves (prompt chars / 4 + max_tokens) tokens.
class HttpBackend : public ChatBackend {
 public:
  struct Options {
    std::string base_url;
    std::string api_key;
    std::string model_id;
    double request_timeout_s = 60.0;
    int max_retries = 3;
    double retry_backoff_s = 1.0;
    int max_in_flight = 4;
    long tokens_per_minute = 0;
    std::chrono::milliseconds budget_window{60000};
    // Injected for tests; defaults to std::this_thread::sleep_for.
    std::function<void(double seconds)> sleep;

    // Reads the key from the environment variable named by cfg.api_key_env.
    static Options from_config(const BackendConfig& cfg);
  };

  explicit HttpBackend(Options options);
  ~HttpBackend() override;

  Completion complete(const ChatRequest& request) override;
  std::string id() const override { return "http:" + options_.model_id; }
  std::string model_id() const override { return options_.model_id; }

 private:
  struct Endpoint {
    std::string scheme_host_port;
    std::string path;
  };
  static Endpoint split_url(const std::string& base_url);

  Options options_;
  Endpoint endpoint_;
  std::unique_ptr<std::counting_semaphore<>> in_flight_;
  std::unique_ptr<TokenBudget> budget_;
};

}  // namespace socialveil
