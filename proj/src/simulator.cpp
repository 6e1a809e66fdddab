#include "socialveil/simulator.hpp"

#include <atomic>
#include <chrono>
#include <thread>

#include "socialveil/errors.hpp"
#include "socialveil/resources.hpp"
#include "socialveil/text.hpp"

namespace socialveil {

std::string tool_version() { return SOCIALVEIL_VERSION; }

ValidationResult SimulationConfig::validate() const {
  ValidationResult r;
  if (turn_cap < 1) r.violations.push_back({"turn_cap", "must be >= 1"});
  if (parallelism < 1) r.violations.push_back({"parallelism", "must be >= 1"});
  if (consecutive_none_limit < 1) {
    r.violations.push_back({"consecutive_none_limit", "must be >= 1"});
  }
  if (parse_retry_limit < 0) r.violations.push_back({"parse_retry_limit", "must be >= 0"});
  if (!(agent_temperature >= 0.0 && agent_temperature <= 2.0)) {
    r.violations.push_back({"agent_temperature", "must lie in [0, 2]"});
  }
  if (action_list.empty()) r.violations.push_back({"action_list", "must be nonempty"});
  return r;
}

Json simulation_config_to_json(const SimulationConfig& cfg) {
  Json j = Json::object();
  j["agent_temperature"] = cfg.agent_temperature;
  j["turn_cap"] = cfg.turn_cap;
  j["consecutive_none_limit"] = cfg.consecutive_none_limit;
  j["parse_retry_limit"] = cfg.parse_retry_limit;
  j["parallelism"] = cfg.parallelism;
  j["random_seed"] = cfg.random_seed;
  j["max_tokens"] = cfg.max_tokens;
  Json actions = Json::array();
  for (ActionType a : cfg.action_list) actions.push_back(to_string(a));
  j["action_list"] = std::move(actions);
  j["repair"] = cfg.repair ? Json(cfg.repair->text()) : Json(nullptr);
  return j;
}

SimulationConfig parse_simulation_config(const Json& j) {
  SimulationConfig cfg;
  cfg.agent_temperature = get_field_or<double>(j, "agent_temperature", cfg.agent_temperature);
  cfg.turn_cap = get_field_or<int>(j, "turn_cap", cfg.turn_cap);
  cfg.consecutive_none_limit =
      get_field_or<int>(j, "consecutive_none_limit", cfg.consecutive_none_limit);
  cfg.parse_retry_limit = get_field_or<int>(j, "parse_retry_limit", cfg.parse_retry_limit);
  cfg.parallelism = get_field_or<int>(j, "parallelism", cfg.parallelism);
  cfg.random_seed = get_field_or<std::uint64_t>(j, "random_seed", cfg.random_seed);
  cfg.max_tokens = get_field_or<int>(j, "max_tokens", cfg.max_tokens);
  if (j.contains("action_list")) {
    cfg.action_list.clear();
    for (const auto& a : get_field<std::vector<std::string>>(j, "action_list")) {
      cfg.action_list.push_back(parse_action_type(a));
    }
  }
  ValidationResult v = cfg.validate();
  if (!v.ok()) throw InputError("invalid simulation config: " + v.first());
  return cfg;
}

std::string render_history(const Episode& e, const Transcript& history, size_t upto) {
  std::vector<std::string> lines;
  for (size_t i = 0; i < upto && i < history.turns.size(); ++i) {
    const Turn& turn = history.turns[i];
    const std::string& name = e.profile(turn.role).name;
    std::string line = "Turn #" + std::to_string(turn.index) + ": " + name;
    const std::string& arg = turn.action.argument;
    switch (turn.action.action_type) {
      case ActionType::kSpeak: line += " said: \"" + arg + "\""; break;
      case ActionType::kNonVerbal: line += " did (non-verbal): " + arg; break;
      case ActionType::kAction: line += " did (action): " + arg; break;
      case ActionType::kLeave: line += " left the conversation"; break;
      case ActionType::kNone: line += " did nothing"; break;
    }
    lines.push_back(std::move(line));
  }
  return join(lines, "\n");
}

InstructionFragment render_base_instruction(const Episode& e, Role role,
                                            const Transcript& history, int turn,
                                            const std::vector<ActionType>& action_list) {
  const AgentProfile& self = e.profile(role);
  const AgentProfile& partner = e.profile(other(role));
  const SocialGoal& goal = e.goal(role);
  std::vector<std::string> actions;
  for (ActionType a : action_list) actions.emplace_back(to_string(a));

  TemplateVars vars = {
      {"agent_name", self.name},
      {"agent_age", std::to_string(self.age)},
      {"agent_gender", self.gender},
      {"agent_occupation", self.occupation},
      {"agent_public_info", self.public_info},
      {"partner_name", partner.name},
      {"partner_age", std::to_string(partner.age)},
      {"partner_gender", partner.gender},
      {"partner_occupation", partner.occupation},
      {"partner_public_info", partner.public_info},
      {"agent_goal", goal.goal},
      {"agent_reason", goal.reason},
      {"agent_private_knowledge", self.private_knowledge},
      {"scenario", e.scenario.public_description()},
      {"history", render_history(e, history, static_cast<size_t>(std::max(turn, 0)))},
      {"turn_number", std::to_string(turn)},
      {"action_list", join(actions, ", ")},
  };
  return InstructionFragment(format_template(resource("prompts/agent.txt"), vars),
                             Provenance::kBase);
}

ChatRequest render_agent_prompt(const Episode& e, Role role, const Transcript& history, int turn,
                                const std::optional<InstructionFragment>& repair,
                                const AgentPromptOptions& options) {
  InstructionFragment base = render_base_instruction(e, role, history, turn, options.action_list);
  std::string text;
  if (role == Role::kBarrier) {
    text = augment_instruction(base, e.barrier);
  } else {
    text = base.text();
    if (repair) text = append_repair(text, *repair);
  }
  ChatRequest req({{MessageRole::kUser, std::move(text)}}, options.temperature,
                  options.max_tokens, options.model_id);
  RequestTag tag;
  tag.purpose = "agent";
  tag.episode_id = e.id;
  tag.role = std::string(to_string(role));
  tag.turn = turn;
  return req.with_tag(std::move(tag));
}

Transcript run_episode(const Episode& e, ChatBackend& barrier_backend,
                       ChatBackend& partner_backend, const SimulationConfig& cfg) {
  ValidationResult v = cfg.validate();
  if (!v.ok()) throw InputError("invalid simulation config: " + v.first());

  Transcript t;
  t.episode_id = e.id;
  const int cap = std::min(cfg.turn_cap, e.max_turns);
  const std::string reask_text = format_template(resource("prompts/agent_reask.txt"), {});
  Role role = e.first_speaker;
  int consecutive_none = 0;

  for (int turn = 0; turn < cap; ++turn, role = other(role)) {
    ChatBackend& backend = role == Role::kBarrier ? barrier_backend : partner_backend;
    AgentPromptOptions opts;
    opts.temperature = cfg.agent_temperature;
    opts.max_tokens = cfg.max_tokens;
    opts.model_id = backend.model_id();
    opts.action_list = cfg.action_list;
    const ChatRequest prompt = render_agent_prompt(e, role, t, turn, cfg.repair, opts);

    TurnMetadata meta;
    meta.backend_id = backend.id();
    std::optional<AgentAction> action;
    ChatRequest request = prompt;
    for (int attempt = 0; attempt <= cfg.parse_retry_limit; ++attempt) {
      Completion c;
      try {
        c = backend.complete(request);
      } catch (const TransportError& err) {
        t.termination = Termination::kError;
        t.termination_detail = err.what();
        return t;
      }
      meta.latency_ms += c.latency_ms;
      meta.retry_count = attempt;
      try {
        action = parse_action(c.text);
        break;
      } catch (const ParseError&) {
        request = prompt
                      .with_appended({{MessageRole::kAssistant, c.text},
                                      {MessageRole::kUser, reask_text}})
                      .with_sample_index(attempt + 1);
      }
    }
    if (!action) action = AgentAction::none();

    t.turns.push_back(Turn{turn, role, *action});
    t.per_turn_metadata[turn] = meta;

    if (action->action_type == ActionType::kLeave) {
      t.termination = Termination::kLeave;
      return t;
    }
    if (action->action_type == ActionType::kNone) {
      if (++consecutive_none >= cfg.consecutive_none_limit) {
        t.termination = Termination::kTurnCap;
        t.termination_detail = "stalled";
        return t;
      }
    } else {
      consecutive_none = 0;
    }
  }
  t.termination = Termination::kTurnCap;
  return t;
}

Json manifest_to_json(const RunManifest& m) {
  Json j = Json::object();
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["tool_version"] = m.tool_version;
  j["backends"] = {{"barrier", m.barrier_backend_id}, {"partner", m.partner_backend_id}};
  j["wall_clock_ms"] = m.wall_clock_ms;
  j["episode_count"] = m.episode_count;
  Json entries = Json::array();
  for (const auto& e : m.episodes) {
    Json item = Json::object();
    item["episode_id"] = e.episode_id;
    item["status"] = e.status;
    item["termination"] = e.termination;
    item["detail"] = e.detail;
    item["turns"] = e.turns;
    entries.push_back(std::move(item));
  }
  j["episodes"] = std::move(entries);
  return j;
}

BatchResult run_batch(const std::vector<Episode>& episodes, const BackendPair& backends,
                      const SimulationConfig& cfg) {
  ValidationResult v = cfg.validate();
  if (!v.ok()) throw InputError("invalid simulation config: " + v.first());
  if (!backends.barrier || !backends.partner) throw InputError("run_batch needs both backends");

  auto started = std::chrono::steady_clock::now();
  struct Slot {
    std::optional<Transcript> transcript;
    std::string error;
  };
  std::vector<Slot> slots(episodes.size());
  std::atomic<size_t> next{0};

  auto worker = [&]() {
    for (size_t i = next.fetch_add(1); i < episodes.size(); i = next.fetch_add(1)) {
      const Episode& e = episodes[i];
      ValidationResult ev = validate_episode(e);
      if (!ev.ok()) {
        slots[i].error = "invalid episode: " + ev.first();
        continue;
      }
      try {
        slots[i].transcript = run_episode(e, *backends.barrier, *backends.partner, cfg);
      } catch (const std::exception& ex) {
        slots[i].error = ex.what();
      }
    }
  };

  size_t workers = std::min<size_t>(static_cast<size_t>(cfg.parallelism), episodes.size());
  std::vector<std::thread> threads;
  for (size_t w = 1; w < workers; ++w) threads.emplace_back(worker);
  worker();
  for (auto& th : threads) th.join();

  BatchResult result;
  RunManifest& m = result.manifest;
  Json hashed = simulation_config_to_json(cfg);
  hashed["barrier_backend"] = backends.barrier->id();
  hashed["partner_backend"] = backends.partner->id();
  m.config_hash = sha256_hex(hashed.dump());
  m.seed = cfg.random_seed;
  m.tool_version = tool_version();
  m.barrier_backend_id = backends.barrier->id();
  m.partner_backend_id = backends.partner->id();
  m.episode_count = episodes.size();

  for (size_t i = 0; i < episodes.size(); ++i) {
    RunManifest::Entry entry;
    entry.episode_id = episodes[i].id;
    Slot& slot = slots[i];
    if (slot.transcript && slot.transcript->termination != Termination::kError) {
      entry.status = "ok";
      entry.termination = std::string(to_string(slot.transcript->termination));
      entry.detail = slot.transcript->termination_detail;
      entry.turns = static_cast<int>(slot.transcript->turns.size());
      result.transcripts.push_back(std::move(*slot.transcript));
    } else {
      EpisodeFailure f;
      f.index = i;
      f.episode_id = episodes[i].id;
      if (slot.transcript) {
        f.message = slot.transcript->termination_detail;
        entry.turns = static_cast<int>(slot.transcript->turns.size());
        entry.termination = "error";
        f.partial = std::move(slot.transcript);
      } else {
        f.message = slot.error;
      }
      entry.status = "error";
      entry.detail = f.message;
      result.failures.push_back(std::move(f));
    }
    m.episodes.push_back(std::move(entry));
  }
  m.wall_clock_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - started)
                        .count();
  return result;
}

}  // namespace socialveil
