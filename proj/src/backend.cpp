#include "socialveil/backend.hpp"

#include <cmath>
#include <fstream>
#include <thread>

#include "socialveil/http_backend.hpp"
#include "socialveil/resources.hpp"
#include "socialveil/text.hpp"

namespace socialveil {

std::string_view to_string(MessageRole r) {
  switch (r) {
    case MessageRole::kSystem: return "system";
    case MessageRole::kUser: return "user";
    case MessageRole::kAssistant: return "assistant";
  }
  return "user";
}

MessageRole parse_message_role(std::string_view s) {
  if (s == "system") return MessageRole::kSystem;
  if (s == "user") return MessageRole::kUser;
  if (s == "assistant") return MessageRole::kAssistant;
  throw InputError("unknown message role '" + std::string(s) + "'");
}

ChatRequest::ChatRequest(std::vector<ChatMessage> messages, double temperature, int max_tokens,
                         std::string model_id)
    : messages_(std::move(messages)),
      temperature_(temperature),
      max_tokens_(max_tokens),
      model_id_(std::move(model_id)) {
  if (messages_.empty()) throw InputError("chat request needs at least one message");
  if (!(temperature_ >= 0.0 && temperature_ <= 2.0)) {
    throw InputError("temperature must lie in [0, 2], got " + std::to_string(temperature_));
  }
  if (max_tokens_ <= 0) throw InputError("max_tokens must be positive");
}

ChatRequest ChatRequest::with_sample_index(int index) const {
  ChatRequest copy = *this;
  copy.sample_index_ = index;
  return copy;
}

ChatRequest ChatRequest::with_tag(RequestTag tag) const {
  ChatRequest copy = *this;
  copy.tag_ = std::move(tag);
  return copy;
}

ChatRequest ChatRequest::with_appended(std::vector<ChatMessage> extra) const {
  ChatRequest copy = *this;
  for (auto& m : extra) copy.messages_.push_back(std::move(m));
  return copy;
}

std::string ChatRequest::joined_content() const {
  std::string out;
  for (size_t i = 0; i < messages_.size(); ++i) {
    if (i) out += "\n\n";
    out += messages_[i].content;
  }
  return out;
}

std::string ChatRequest::canonical_json() const {
  // nlohmann::json (not ordered_json) sorts keys.
  nlohmann::json j;
  j["model"] = model_id_;
  j["temperature"] = temperature_;
  j["max_tokens"] = max_tokens_;
  j["sample_index"] = sample_index_;
  j["messages"] = nlohmann::json::array();
  for (const auto& m : messages_) {
    j["messages"].push_back({{"role", to_string(m.role)}, {"content", m.content}});
  }
  return j.dump();
}

std::string ChatRequest::hash() const { return sha256_hex(canonical_json()); }

// ---------------------------------------------------------------------------
// Scripted

std::vector<ScriptRule> parse_script(const Json& j) {
  std::vector<ScriptRule> rules;
  if (j.is_object()) {
    std::optional<ScriptRule> wildcard;
    for (const auto& [key, value] : j.items()) {
      if (!value.is_string()) throw InputError("script entry '" + key + "' must be a string");
      ScriptRule rule;
      rule.responses.push_back(value.get<std::string>());
      if (key == "*") {
        wildcard = std::move(rule);
      } else {
        rule.contains = key;
        rules.push_back(std::move(rule));
      }
    }
    if (wildcard) rules.push_back(std::move(*wildcard));
    return rules;
  }
  if (!j.is_array()) throw InputError("script must be an object or an array of rules");
  for (const auto& item : j) {
    ScriptRule rule;
    if (item.contains("purpose")) rule.purpose = get_field<std::string>(item, "purpose");
    if (item.contains("episode")) rule.episode_id = get_field<std::string>(item, "episode");
    if (item.contains("role")) rule.role = get_field<std::string>(item, "role");
    if (item.contains("turn")) rule.turn = get_field<int>(item, "turn");
    if (item.contains("contains")) rule.contains = get_field<std::string>(item, "contains");
    if (item.contains("responses")) {
      rule.responses = get_field<std::vector<std::string>>(item, "responses");
    } else {
      rule.responses.push_back(get_field<std::string>(item, "response"));
    }
    if (rule.responses.empty()) throw InputError("script rule without responses");
    rules.push_back(std::move(rule));
  }
  return rules;
}

ScriptedBackend::ScriptedBackend(std::string model_id, std::vector<ScriptRule> rules)
    : model_id_(std::move(model_id)), rules_(std::move(rules)) {}

Completion ScriptedBackend::complete(const ChatRequest& request) {
  const RequestTag& tag = request.tag();
  std::string content;  // built lazily; most rules do not need it
  for (const auto& rule : rules_) {
    if (rule.purpose && *rule.purpose != tag.purpose) continue;
    if (rule.episode_id && *rule.episode_id != tag.episode_id) continue;
    if (rule.role && *rule.role != tag.role) continue;
    if (rule.turn && *rule.turn != tag.turn) continue;
    if (rule.contains) {
      if (content.empty()) content = request.joined_content();
      if (!contains(content, *rule.contains)) continue;
    }
    size_t idx = std::min<size_t>(static_cast<size_t>(std::max(request.sample_index(), 0)),
                                  rule.responses.size() - 1);
    return Completion{rule.responses[idx], id(), 0.0, 0, {}};
  }
  throw TransportError("scripted backend " + id() + " has no rule for request (purpose=" +
                       tag.purpose + ", episode=" + tag.episode_id + ", role=" + tag.role +
                       ", turn=" + std::to_string(tag.turn) + ")");
}

// ---------------------------------------------------------------------------
// Replay / caching

std::vector<ReplayEntry> load_replay_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open replay file " + path.string());
  std::vector<ReplayEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    Json j = parse_json(line, path.string() + ":" + std::to_string(lineno));
    entries.push_back({get_field<std::string>(j, "request_hash"),
                       get_field<std::string>(j, "response_text")});
  }
  return entries;
}

ReplayBackend::ReplayBackend(std::string model_id, const std::vector<ReplayEntry>& entries)
    : model_id_(std::move(model_id)) {
  for (const auto& e : entries) responses_[e.request_hash] = e.response_text;
}

Completion ReplayBackend::complete(const ChatRequest& request) {
  std::string h = request.hash();
  auto it = responses_.find(h);
  if (it == responses_.end()) {
    throw TransportError("no recorded response for request hash " + h);
  }
  return Completion{it->second, id(), 0.0, 0, {}};
}

CachingBackend::CachingBackend(std::shared_ptr<ChatBackend> inner,
                               std::optional<std::filesystem::path> record_path)
    : inner_(std::move(inner)), record_path_(std::move(record_path)) {
  if (record_path_ && std::filesystem::exists(*record_path_)) {
    for (const auto& e : load_replay_file(*record_path_)) cache_[e.request_hash] = e.response_text;
  }
}

Completion CachingBackend::complete(const ChatRequest& request) {
  std::string h = request.hash();
  {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = cache_.find(h);
    if (it != cache_.end()) {
      ++hits_;
      return Completion{it->second, id(), 0.0, 0, {}};
    }
  }
  Completion c = inner_->complete(request);
  std::lock_guard<std::mutex> lock(mu_);
  auto [it, inserted] = cache_.emplace(h, c.text);
  if (!inserted) {
    // A concurrent caller filled the slot first; keep the stored answer.
    ++hits_;
    c.text = it->second;
    return c;
  }
  ++misses_;
  if (record_path_) {
    if (record_path_->has_parent_path()) {
      std::filesystem::create_directories(record_path_->parent_path());
    }
    std::ofstream out(*record_path_, std::ios::app);
    if (!out) throw InputError("cannot append to " + record_path_->string());
    Json line = Json::object();
    line["request_hash"] = h;
    line["response_text"] = c.text;
    out << line.dump() << '\n';
    out.flush();
  }
  return c;
}

size_t CachingBackend::hits() const {
  std::lock_guard<std::mutex> lock(mu_);
  return hits_;
}

size_t CachingBackend::misses() const {
  std::lock_guard<std::mutex> lock(mu_);
  return misses_;
}

// ---------------------------------------------------------------------------
// Rate limiting

TokenBudget::TokenBudget(long tokens_per_window, std::chrono::milliseconds window)
    : capacity_(tokens_per_window), window_(window) {
  if (capacity_ <= 0) throw InputError("token budget must be positive");
}

void TokenBudget::acquire(long tokens) {
  tokens = std::min(std::max(tokens, 1L), capacity_);
  std::unique_lock<std::mutex> lock(mu_);
  for (;;) {
    auto now = Clock::now();
    while (!spent_.empty() && now - spent_.front().first >= window_) spent_.pop_front();
    long used = 0;
    for (const auto& [when, n] : spent_) used += n;
    if (used + tokens <= capacity_) {
      spent_.emplace_back(now, tokens);
      return;
    }
    auto wake = spent_.front().first + window_;
    lock.unlock();
    std::this_thread::sleep_until(wake);
    lock.lock();
  }
}

std::vector<double> backoff_schedule(double initial_seconds, int max_retries) {
  std::vector<double> delays;
  for (int k = 0; k < max_retries; ++k) delays.push_back(initial_seconds * std::pow(2.0, k));
  return delays;
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

std::string_view kind_name(BackendKind k) {
  switch (k) {
    case BackendKind::kHttpOpenAICompatible: return "http_openai_compatible";
    case BackendKind::kScripted: return "scripted";
    case BackendKind::kReplay: return "replay";
    case BackendKind::kCached: return "cached";
  }
  return "scripted";
}

BackendKind parse_kind(std::string_view s) {
  for (BackendKind k : {BackendKind::kHttpOpenAICompatible, BackendKind::kScripted,
                        BackendKind::kReplay, BackendKind::kCached}) {
    if (s == kind_name(k)) return k;
  }
  throw InputError("unknown backend kind '" + std::string(s) + "'");
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  if (path.is_relative() && !base.empty()) return base / path;
  return path;
}

}  // namespace

ValidationResult BackendConfig::validate() const {
  ValidationResult r;
  auto fail = [&r](std::string f, std::string rule) { r.violations.push_back({f, rule}); };
  switch (kind) {
    case BackendKind::kHttpOpenAICompatible:
      if (base_url.empty()) fail("base_url", "http backend requires base_url");
      if (api_key_env.empty()) fail("api_key_env", "http backend requires api_key_env");
      if (model_id.empty()) fail("model_id", "http backend requires model_id");
      break;
    case BackendKind::kScripted:
      if (!script) fail("script", "scripted backend requires a script table");
      break;
    case BackendKind::kReplay:
      if (!replay_path) fail("replay_path", "replay backend requires replay_path");
      break;
    case BackendKind::kCached:
      if (!inner) {
        fail("inner", "cached backend requires an inner backend");
      } else {
        for (auto& v : inner->validate().violations) {
          r.violations.push_back({"inner." + v.field, v.rule});
        }
      }
      break;
  }
  if (max_retries < 0) fail("max_retries", "must be >= 0");
  if (retry_backoff_s < 0) fail("retry_backoff", "must be >= 0");
  if (max_in_flight < 1) fail("max_in_flight", "must be >= 1");
  if (tokens_per_minute < 0) fail("tokens_per_minute", "must be >= 0");
  return r;
}

BackendConfig parse_backend_config(const Json& j, const std::filesystem::path& base_dir) {
  BackendConfig cfg;
  cfg.kind = parse_kind(get_field<std::string>(j, "kind"));
  cfg.base_url = get_field_or<std::string>(j, "base_url", "");
  cfg.api_key_env = get_field_or<std::string>(j, "api_key_env", cfg.api_key_env);
  cfg.model_id = get_field_or<std::string>(j, "model_id", "");
  cfg.request_timeout_s = get_field_or<double>(j, "request_timeout", cfg.request_timeout_s);
  cfg.max_retries = get_field_or<int>(j, "max_retries", cfg.max_retries);
  cfg.retry_backoff_s = get_field_or<double>(j, "retry_backoff", cfg.retry_backoff_s);
  cfg.max_in_flight = get_field_or<int>(j, "max_in_flight", cfg.max_in_flight);
  cfg.tokens_per_minute = get_field_or<long>(j, "tokens_per_minute", cfg.tokens_per_minute);
  if (j.contains("script")) {
    const Json& s = j.at("script");
    if (s.is_string()) {
      auto path = resolve(base_dir, s.get<std::string>());
      cfg.script = parse_json(read_file(path), path.string());
    } else {
      cfg.script = s;
    }
  }
  if (j.contains("replay_path")) {
    cfg.replay_path = resolve(base_dir, get_field<std::string>(j, "replay_path"));
  }
  if (j.contains("record_path")) {
    cfg.record_path = resolve(base_dir, get_field<std::string>(j, "record_path"));
  }
  if (j.contains("inner")) {
    cfg.inner = std::make_shared<BackendConfig>(parse_backend_config(j.at("inner"), base_dir));
    if (cfg.model_id.empty()) cfg.model_id = cfg.inner->model_id;
  }
  if (cfg.model_id.empty()) cfg.model_id = std::string(kind_name(cfg.kind));
  return cfg;
}

Json backend_config_to_json(const BackendConfig& cfg) {
  Json j = Json::object();
  j["kind"] = kind_name(cfg.kind);
  j["model_id"] = cfg.model_id;
  if (!cfg.base_url.empty()) j["base_url"] = cfg.base_url;
  if (cfg.kind == BackendKind::kHttpOpenAICompatible) {
    j["api_key_env"] = cfg.api_key_env;
    j["request_timeout"] = cfg.request_timeout_s;
    j["max_retries"] = cfg.max_retries;
    j["retry_backoff"] = cfg.retry_backoff_s;
    j["max_in_flight"] = cfg.max_in_flight;
    j["tokens_per_minute"] = cfg.tokens_per_minute;
  }
  if (cfg.script) j["script"] = *cfg.script;
  if (cfg.replay_path) j["replay_path"] = cfg.replay_path->string();
  if (cfg.record_path) j["record_path"] = cfg.record_path->string();
  if (cfg.inner) j["inner"] = backend_config_to_json(*cfg.inner);
  return j;
}

std::shared_ptr<ChatBackend> make_backend(const BackendConfig& cfg) {
  ValidationResult v = cfg.validate();
  if (!v.ok()) throw InputError("invalid backend config: " + v.first());
  switch (cfg.kind) {
    case BackendKind::kScripted:
      return std::make_shared<ScriptedBackend>(cfg.model_id, parse_script(*cfg.script));
    case BackendKind::kReplay:
      return std::make_shared<ReplayBackend>(cfg.model_id, load_replay_file(*cfg.replay_path));
    case BackendKind::kCached:
      return std::make_shared<CachingBackend>(make_backend(*cfg.inner), cfg.record_path);
    case BackendKind::kHttpOpenAICompatible:
      return std::make_shared<HttpBackend>(HttpBackend::Options::from_config(cfg));
  }
  throw InputError("unsupported backend kind");
}

Completion complete(const BackendConfig& cfg, const ChatRequest& request) {
  return make_backend(cfg)->complete(request);
}

// ---------------------------------------------------------------------------
// Action parsing

std::optional<nlohmann::json> extract_first_json_object(std::string_view text) {
  for (size_t start = text.find('{'); start != std::string_view::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
        continue;
      }
      if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}') {
        if (--depth == 0) {
          auto parsed = nlohmann::json::parse(text.substr(start, i - start + 1), nullptr,
                                              /*allow_exceptions=*/false);
          if (!parsed.is_discarded() && parsed.is_object()) return parsed;
          break;
        }
      }
    }
  }
  return std::nullopt;
}

AgentAction parse_action(std::string_view text) {
  std::string raw(text);
  auto obj = extract_first_json_object(text);
  if (!obj) throw ParseError("no JSON object in model output", raw);
  if (!obj->contains("action_type") || !obj->contains("argument")) {
    throw ParseError("action JSON needs action_type and argument", raw);
  }
  const auto& type = obj->at("action_type");
  const auto& arg = obj->at("argument");
  if (!type.is_string()) throw ParseError("action_type must be a string", raw);
  if (!arg.is_string() && !arg.is_null()) throw ParseError("argument must be a string", raw);
  AgentAction action;
  try {
    action.action_type = parse_action_type(type.get<std::string>());
  } catch (const InputError& e) {
    throw ParseError(e.what(), raw);
  }
  action.argument = arg.is_null() ? "" : arg.get<std::string>();
  if (action.action_type == ActionType::kSpeak && action.argument.empty()) {
    throw ParseError("speak action with empty argument", raw);
  }
  return action;
}

std::string render_action(const AgentAction& action) {
  Json j = Json::object();
  j["action_type"] = to_string(action.action_type);
  j["argument"] = action.argument;
  return j.dump();
}

}  // namespace socialveil
