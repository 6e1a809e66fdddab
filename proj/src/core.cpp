#include "socialveil/core.hpp"

#include "socialveil/errors.hpp"
#include "socialveil/text.hpp"

namespace socialveil {

std::string_view to_string(Difficulty d) {
  return d == Difficulty::kHard ? "hard" : "standard";
}

std::string_view to_string(BarrierType b) {
  switch (b) {
    case BarrierType::kSemantic: return "Semantic";
    case BarrierType::kSociocultural: return "Sociocultural";
    case BarrierType::kEmotional: return "Emotional";
    case BarrierType::kNone: return "None";
  }
  return "None";
}

std::string_view to_string(Role r) { return r == Role::kBarrier ? "barrier" : "partner"; }

std::string_view to_string(ActionType a) {
  switch (a) {
    case ActionType::kSpeak: return "speak";
    case ActionType::kNonVerbal: return "non_verbal";
    case ActionType::kAction: return "action";
    case ActionType::kLeave: return "leave";
    case ActionType::kNone: return "none";
  }
  return "none";
}

std::string_view to_string(Termination t) {
  switch (t) {
    case Termination::kTurnCap: return "turn_cap";
    case Termination::kLeave: return "leave";
    case Termination::kError: return "error";
  }
  return "error";
}

Difficulty parse_difficulty(std::string_view s) {
  if (s == "standard") return Difficulty::kStandard;
  if (s == "hard") return Difficulty::kHard;
  throw InputError("unknown difficulty '" + std::string(s) + "'");
}

BarrierType parse_barrier_type(std::string_view s) {
  for (BarrierType b : {BarrierType::kSemantic, BarrierType::kSociocultural,
                        BarrierType::kEmotional, BarrierType::kNone}) {
    if (s == to_string(b)) return b;
  }
  throw InputError("unknown barrier type '" + std::string(s) + "'");
}

Role parse_role(std::string_view s) {
  if (s == "barrier") return Role::kBarrier;
  if (s == "partner") return Role::kPartner;
  throw InputError("unknown role '" + std::string(s) + "'");
}

ActionType parse_action_type(std::string_view s) {
  for (ActionType a : kAllActionTypes) {
    if (s == to_string(a)) return a;
  }
  throw InputError("unknown action type '" + std::string(s) + "'");
}

Termination parse_termination(std::string_view s) {
  for (Termination t : {Termination::kTurnCap, Termination::kLeave, Termination::kError}) {
    if (s == to_string(t)) return t;
  }
  throw InputError("unknown termination '" + std::string(s) + "'");
}

std::string_view condition_name(BarrierType b) {
  switch (b) {
    case BarrierType::kSemantic: return "semantic";
    case BarrierType::kSociocultural: return "sociocultural";
    case BarrierType::kEmotional: return "emotional";
    case BarrierType::kNone: return "baseline";
  }
  return "baseline";
}

BarrierType parse_condition(std::string_view s) {
  for (BarrierType b : {BarrierType::kNone, BarrierType::kSemantic,
                        BarrierType::kSociocultural, BarrierType::kEmotional}) {
    if (s == condition_name(b)) return b;
  }
  throw InputError("unknown condition '" + std::string(s) +
                   "' (expected baseline, semantic, sociocultural or emotional)");
}

bool BarrierSpec::is_empty() const {
  return style_prompt.empty() && narrative_stance.empty() && interaction_tactics.empty() &&
         confusion_mechanisms.empty() && exemplar_templates.empty();
}

std::vector<std::string> BarrierSpec::all_texts() const {
  std::vector<std::string> out;
  auto add = [&out](const std::string& s) {
    if (!s.empty()) out.push_back(s);
  };
  add(style_prompt);
  add(narrative_stance);
  for (const auto& s : interaction_tactics) add(s);
  for (const auto& s : confusion_mechanisms) add(s);
  for (const auto& s : exemplar_templates) add(s);
  return out;
}

std::string ValidationResult::first() const {
  if (violations.empty()) return {};
  return violations.front().field + ": " + violations.front().rule;
}

ValidationResult validate_barrier_spec(const BarrierSpec& b) {
  ValidationResult r;
  if (b.is_none() && !b.is_empty()) {
    r.violations.push_back({"barrier", "None barrier must be empty"});
  }
  if (!b.is_none()) {
    if (b.style_prompt.empty()) {
      r.violations.push_back({"barrier.style_prompt", "non-None barrier needs a style prompt"});
    }
  }
  return r;
}

ValidationResult validate_episode(const Episode& e) {
  ValidationResult r;
  auto fail = [&r](std::string field, std::string rule) {
    r.violations.push_back({std::move(field), std::move(rule)});
  };
  if (e.id.empty()) fail("id", "must be nonempty");
  if (e.scenario.id.empty()) fail("scenario.id", "must be nonempty");
  if (e.scenario.neutral_description &&
      count_sentence_terminators(*e.scenario.neutral_description) != 1) {
    fail("scenario.neutral_description", "must contain exactly one sentence terminator");
  }
  for (Role role : {Role::kBarrier, Role::kPartner}) {
    std::string prefix = std::string(to_string(role)) + "_agent";
    const AgentProfile& p = e.profile(role);
    if (p.name.empty()) fail(prefix + ".name", "must be nonempty");
    if (p.age < 0) fail(prefix + ".age", "must be >= 0");
    if (e.goal(role).goal.empty()) fail(std::string(to_string(role)) + "_goal.goal", "must be nonempty");
  }
  for (auto& v : validate_barrier_spec(e.barrier).violations) r.violations.push_back(v);
  if (e.max_turns < 1) fail("max_turns", "max_turns ≥ 1");

  // Partner-visible material must not carry any barrier text.
  const std::vector<std::string> partner_fields = {
      e.partner_agent.name,        e.partner_agent.gender,   e.partner_agent.occupation,
      e.partner_agent.public_info, e.partner_agent.private_knowledge,
      e.partner_goal.goal,         e.partner_goal.reason,    e.scenario.raw_description,
      e.scenario.public_description(),
      e.barrier_agent.public_info};
  for (const auto& text : e.barrier.all_texts()) {
    for (const auto& field : partner_fields) {
      if (contains(field, text)) {
        fail("partner_context", "contains barrier text: " + text.substr(0, 40));
        break;
      }
    }
  }
  return r;
}

ValidationResult validate_transcript(const Transcript& t, std::optional<Role> first_speaker,
                                     std::optional<int> max_turns) {
  ValidationResult r;
  auto fail = [&r](std::string field, std::string rule) {
    r.violations.push_back({std::move(field), std::move(rule)});
  };
  if (t.turns.empty()) {
    if (t.termination == Termination::kLeave) fail("termination", "leave requires a final leave turn");
    return r;
  }
  Role first = first_speaker.value_or(t.turns.front().role);
  for (size_t i = 0; i < t.turns.size(); ++i) {
    const Turn& turn = t.turns[i];
    std::string field = "turns[" + std::to_string(i) + "]";
    if (turn.index != static_cast<int>(i)) {
      fail(field + ".index", "indices must run 0,1,2,... without gaps");
    }
    Role expected = (i % 2 == 0) ? first : other(first);
    if (turn.role != expected) fail(field + ".role", "roles must alternate from the first speaker");
    if (turn.action.action_type == ActionType::kSpeak && turn.action.argument.empty()) {
      fail(field + ".action", "speak requires a nonempty argument");
    }
  }
  if (t.termination == Termination::kLeave &&
      t.turns.back().action.action_type != ActionType::kLeave) {
    fail("termination", "leave requires a final leave turn");
  }
  if (max_turns && static_cast<int>(t.turns.size()) > *max_turns) {
    fail("turns", "more turns than max_turns");
  }
  return r;
}

std::string RenderedTranscript::body() const { return join(lines, "\n"); }

std::string RenderedTranscript::text() const {
  if (lines.empty()) return footer;
  return body() + "\n" + footer;
}

RenderedTranscript render_transcript_text(const Transcript& t, const AgentProfile& barrier_agent,
                                          const AgentProfile& partner_agent) {
  ValidationResult v = validate_transcript(t);
  if (!v.ok()) throw InputError("invalid transcript " + t.episode_id + ": " + v.first());

  RenderedTranscript out;
  for (const Turn& turn : t.turns) {
    const AgentProfile& speaker = turn.role == Role::kBarrier ? barrier_agent : partner_agent;
    std::string line = "Turn #" + std::to_string(turn.index) + " — " + speaker.name + " [" +
                       std::string(to_string(turn.action.action_type)) + "]: " +
                       turn.action.argument;
    for (const AgentProfile* p : {&barrier_agent, &partner_agent}) {
      if (contains(turn.action.argument, p->private_knowledge)) {
        out.warnings.push_back("turn " + std::to_string(turn.index) +
                               " repeats private knowledge of " + p->name);
      }
    }
    out.lines.push_back(std::move(line));
  }
  out.footer = "[Conversation ended: " + std::string(to_string(t.termination));
  if (!t.termination_detail.empty()) out.footer += " (" + t.termination_detail + ")";
  out.footer += "]";
  return out;
}

}  // namespace socialveil
