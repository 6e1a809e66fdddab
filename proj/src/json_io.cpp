#include "socialveil/json_io.hpp"

#include <cstdio>

namespace socialveil {

Json parse_json(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw InputError(origin + ": invalid JSON: " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out << content;
    if (!out.flush()) throw InputError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

void to_json(Json& j, const Scenario& v) {
  j = Json::object();
  j["id"] = v.id;
  j["raw_description"] = v.raw_description;
  j["neutral_description"] = v.neutral_description ? Json(*v.neutral_description) : Json(nullptr);
  j["difficulty"] = to_string(v.difficulty);
  j["source_id"] = v.source_id;
}

void from_json(const Json& j, Scenario& v) {
  v.id = get_field<std::string>(j, "id");
  v.raw_description = get_field<std::string>(j, "raw_description");
  if (j.contains("neutral_description") && !j.at("neutral_description").is_null()) {
    v.neutral_description = get_field<std::string>(j, "neutral_description");
  } else {
    v.neutral_description.reset();
  }
  v.difficulty = parse_difficulty(get_field_or<std::string>(j, "difficulty", "standard"));
  v.source_id = get_field_or<std::string>(j, "source_id", "");
}

void to_json(Json& j, const AgentProfile& v) {
  j = Json::object();
  j["name"] = v.name;
  j["age"] = v.age;
  j["gender"] = v.gender;
  j["occupation"] = v.occupation;
  j["public_info"] = v.public_info;
  j["private_knowledge"] = v.private_knowledge;
}

void from_json(const Json& j, AgentProfile& v) {
  v.name = get_field<std::string>(j, "name");
  v.age = get_field<int>(j, "age");
  v.gender = get_field_or<std::string>(j, "gender", "");
  v.occupation = get_field_or<std::string>(j, "occupation", "");
  v.public_info = get_field_or<std::string>(j, "public_info", "");
  v.private_knowledge = get_field_or<std::string>(j, "private_knowledge", "");
}

void to_json(Json& j, const SocialGoal& v) {
  j = Json::object();
  j["goal"] = v.goal;
  j["reason"] = v.reason;
}

void from_json(const Json& j, SocialGoal& v) {
  v.goal = get_field<std::string>(j, "goal");
  v.reason = get_field_or<std::string>(j, "reason", "");
}

void to_json(Json& j, const BarrierSpec& v) {
  j = Json::object();
  j["barrier_type"] = to_string(v.barrier_type);
  j["style_prompt"] = v.style_prompt;
  j["narrative_stance"] = v.narrative_stance;
  j["interaction_tactics"] = v.interaction_tactics;
  j["confusion_mechanisms"] = v.confusion_mechanisms;
  j["exemplar_templates"] = v.exemplar_templates;
}

void from_json(const Json& j, BarrierSpec& v) {
  v.barrier_type = parse_barrier_type(get_field<std::string>(j, "barrier_type"));
  v.style_prompt = get_field_or<std::string>(j, "style_prompt", "");
  v.narrative_stance = get_field_or<std::string>(j, "narrative_stance", "");
  using Strings = std::vector<std::string>;
  v.interaction_tactics = get_field_or<Strings>(j, "interaction_tactics", {});
  v.confusion_mechanisms = get_field_or<Strings>(j, "confusion_mechanisms", {});
  v.exemplar_templates = get_field_or<Strings>(j, "exemplar_templates", {});
}

void to_json(Json& j, const Episode& v) {
  j = Json::object();
  j["id"] = v.id;
  j["scenario"] = v.scenario;
  j["barrier_agent"] = v.barrier_agent;
  j["partner_agent"] = v.partner_agent;
  j["barrier_goal"] = v.barrier_goal;
  j["partner_goal"] = v.partner_goal;
  j["barrier"] = v.barrier;
  j["first_speaker"] = to_string(v.first_speaker);
  j["max_turns"] = v.max_turns;
}

void from_json(const Json& j, Episode& v) {
  v.id = get_field<std::string>(j, "id");
  v.scenario = get_field<Scenario>(j, "scenario");
  v.barrier_agent = get_field<AgentProfile>(j, "barrier_agent");
  v.partner_agent = get_field<AgentProfile>(j, "partner_agent");
  v.barrier_goal = get_field<SocialGoal>(j, "barrier_goal");
  v.partner_goal = get_field<SocialGoal>(j, "partner_goal");
  v.barrier = get_field<BarrierSpec>(j, "barrier");
  v.first_speaker = parse_role(get_field_or<std::string>(j, "first_speaker", "partner"));
  v.max_turns = get_field_or<int>(j, "max_turns", 20);
}

void to_json(Json& j, const AgentAction& v) {
  j = Json::object();
  j["action_type"] = to_string(v.action_type);
  j["argument"] = v.argument;
}

void from_json(const Json& j, AgentAction& v) {
  v.action_type = parse_action_type(get_field<std::string>(j, "action_type"));
  v.argument = get_field_or<std::string>(j, "argument", "");
}

void to_json(Json& j, const TurnMetadata& v) {
  j = Json::object();
  j["backend_id"] = v.backend_id;
  j["latency_ms"] = v.latency_ms;
  j["retry_count"] = v.retry_count;
}

void from_json(const Json& j, TurnMetadata& v) {
  v.backend_id = get_field_or<std::string>(j, "backend_id", "");
  v.latency_ms = get_field_or<double>(j, "latency_ms", 0.0);
  v.retry_count = get_field_or<int>(j, "retry_count", 0);
}

void to_json(Json& j, const Turn& v) {
  j = Json::object();
  j["index"] = v.index;
  j["role"] = to_string(v.role);
  j["action"] = v.action;
}

void from_json(const Json& j, Turn& v) {
  v.index = get_field<int>(j, "index");
  v.role = parse_role(get_field<std::string>(j, "role"));
  v.action = get_field<AgentAction>(j, "action");
}

void to_json(Json& j, const Transcript& v) {
  j = Json::object();
  j["episode_id"] = v.episode_id;
  j["turns"] = v.turns;
  j["termination"] = to_string(v.termination);
  j["termination_detail"] = v.termination_detail;
  Json meta = Json::object();
  for (const auto& [turn, m] : v.per_turn_metadata) meta[std::to_string(turn)] = m;
  j["per_turn_metadata"] = std::move(meta);
}

void from_json(const Json& j, Transcript& v) {
  v.episode_id = get_field<std::string>(j, "episode_id");
  v.turns = get_field<std::vector<Turn>>(j, "turns");
  v.termination = parse_termination(get_field<std::string>(j, "termination"));
  v.termination_detail = get_field_or<std::string>(j, "termination_detail", "");
  v.per_turn_metadata.clear();
  if (j.contains("per_turn_metadata")) {
    for (const auto& [key, value] : j.at("per_turn_metadata").items()) {
      int turn = 0;
      try {
        turn = std::stoi(key);
      } catch (const std::exception&) {
        throw InputError("per_turn_metadata key '" + key + "' is not a turn index");
      }
      v.per_turn_metadata[turn] = value.get<TurnMetadata>();
    }
  }
}

}  // namespace socialveil
