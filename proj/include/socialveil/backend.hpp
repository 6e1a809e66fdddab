#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "socialveil/core.hpp"
#include "socialveil/json_io.hpp"

namespace socialveil {

enum class MessageRole { kSystem, kUser, kAssistant };

std::string_view to_string(MessageRole r);
MessageRole parse_message_role(std::string_view s);

struct ChatMessage {
  MessageRole role = MessageRole::kUser;
  std::string content;

  bool operator==(const ChatMessage&) const = default;
};

// Routing information for scripted backends and logs. Never sent over the
// wire and never part of the request hash.
struct RequestTag {
  std::string purpose;  // "agent", "judge_social", "judge_barrier", "rewriter"
  std::string episode_id;
  std::string role;  // "barrier" / "partner" for agent requests
  int turn = -1;
};

class ChatRequest {
 public:
  // Throws InputError for an empty message list, temperature outside [0, 2]
  // or a non-positive max_tokens.
  ChatRequest(std::vector<ChatMessage> messages, double temperature, int max_tokens,
              std::string model_id);

  const std::vector<ChatMessage>& messages() const { return messages_; }
  double temperature() const { return temperature_; }
  int max_tokens() const { return max_tokens_; }
  const std::string& model_id() const { return model_id_; }

  // Distinguishes deliberate re-samples of an otherwise identical request
  // (retries); part of the hash, not of the wire body.
  int sample_index() const { return sample_index_; }
  const RequestTag& tag() const { return tag_; }

  ChatRequest with_sample_index(int index) const;
  ChatRequest with_tag(RequestTag tag) const;
  ChatRequest with_appended(std::vector<ChatMessage> extra) const;

  // All message contents joined by blank lines.
  std::string joined_content() const;

  // Key-sorted JSON of messages, temperature, max_tokens, model_id and
  // sample_index; stable under field reordering.
  std::string canonical_json() const;
  std::string hash() const;

 private:
  std::vector<ChatMessage> messages_;
  double temperature_;
  int max_tokens_;
  std::string model_id_;
  int sample_index_ = 0;
  RequestTag tag_;
};

struct Completion {
  std::string text;
  std::string backend_id;
  double latency_ms = 0.0;
  int transport_retries = 0;
  std::vector<std::string> attempt_log;
};

// Shareable handle; implementations are safe for concurrent complete() calls.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual Completion complete(const ChatRequest& request) = 0;
  virtual std::string id() const = 0;
  virtual std::string model_id() const = 0;
};

// One scripted response rule. Unset matchers match anything. The response
// for a request is responses[min(sample_index, size - 1)].
struct ScriptRule {
  std::optional<std::string> purpose;
  std::optional<std::string> episode_id;
  std::optional<std::string> role;
  std::optional<int> turn;
  std::optional<std::string> contains;  // substring of the joined content
  std::vector<std::string> responses;
};

// Accepts either the shorthand object form {"*": text, "<substring>": text}
// (substring keys are tried before "*") or an array of rule objects with
// optional purpose/episode/role/turn/contains keys and "response" or
// "responses".
std::vector<ScriptRule> parse_script(const Json& j);

class ScriptedBackend : public ChatBackend {
 public:
  ScriptedBackend(std::string model_id, std::vector<ScriptRule> rules);

  Completion complete(const ChatRequest& request) override;
  std::string id() const override { return "scripted:" + model_id_; }
  std::string model_id() const override { return model_id_; }

 private:
  std::string model_id_;
  std::vector<ScriptRule> rules_;
};

struct ReplayEntry {
  std::string request_hash;
  std::string response_text;
};

std::vector<ReplayEntry> load_replay_file(const std::filesystem::path& path);

class ReplayBackend : public ChatBackend {
 public:
  ReplayBackend(std::string model_id, const std::vector<ReplayEntry>& entries);

  Completion complete(const ChatRequest& request) override;
  std::string id() const override { return "replay:" + model_id_; }
  std::string model_id() const override { return model_id_; }

 private:
  std::string model_id_;
  std::map<std::string, std::string> responses_;
};

// Memoizes the inner backend by request hash. With a record path, every
// miss is appended to that file in replay format, and existing entries are
// loaded at construction.
class CachingBackend : public ChatBackend {
 public:
  CachingBackend(std::shared_ptr<ChatBackend> inner,
                 std::optional<std::filesystem::path> record_path = std::nullopt);

  Completion complete(const ChatRequest& request) override;
  std::string id() const override { return inner_->id(); }
  std::string model_id() const override { return inner_->model_id(); }

  size_t hits() const;
  size_t misses() const;

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::optional<std::filesystem::path> record_path_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> cache_;
  size_t hits_ = 0;
  size_t misses_ = 0;
};

// Sliding-window token budget shared by concurrent callers.
class TokenBudget {
 public:
  using Clock = std::chrono::steady_clock;

  TokenBudget(long tokens_per_window, std::chrono::milliseconds window);

  // Blocks until `tokens` fit in the current window. Requests larger than
  // the whole budget are clamped to it.
  void acquire(long tokens);

 private:
  long capacity_;
  std::chrono::milliseconds window_;
  std::mutex mu_;
  std::deque<std::pair<Clock::time_point, long>> spent_;
};

// Delay (seconds) before retry k, for k = 0 .. max_retries-1: initial * 2^k.
std::vector<double> backoff_schedule(double initial_seconds, int max_retries);

enum class BackendKind { kHttpOpenAICompatible, kScripted, kReplay, kCached };

struct BackendConfig {
  BackendKind kind = BackendKind::kScripted;
  std::string base_url;
  std::string api_key_env = "SOCIALVEIL_API_KEY";
  std::string model_id;
  double request_timeout_s = 60.0;
  int max_retries = 3;
  double retry_backoff_s = 1.0;
  int max_in_flight = 4;
  long tokens_per_minute = 0;  // 0 disables the budget
  std::chrono::milliseconds budget_window{60000};
  std::optional<Json> script;                  // scripted
  std::optional<std::filesystem::path> replay_path;  // replay
  std::optional<std::filesystem::path> record_path;  // cached
  std::shared_ptr<BackendConfig> inner;         // cached

  ValidationResult validate() const;
};

// Relative file paths are resolved against base_dir.
BackendConfig parse_backend_config(const Json& j,
                                   const std::filesystem::path& base_dir = {});
Json backend_config_to_json(const BackendConfig& cfg);

// Throws InputError for an invalid config or (http) an unset credential
// variable.
std::shared_ptr<ChatBackend> make_backend(const BackendConfig& cfg);

// One-shot completion through a freshly built backend.
Completion complete(const BackendConfig& cfg, const ChatRequest& request);

// First balanced {...} in the text that parses as a JSON object. String
// literals are honoured while scanning, so braces inside them do not count.
std::optional<nlohmann::json> extract_first_json_object(std::string_view text);

// Throws ParseError carrying the raw text when no action can be read.
AgentAction parse_action(std::string_view text);

// {"action_type": "...", "argument": "..."}
std::string render_action(const AgentAction& action);

}  // namespace socialveil
