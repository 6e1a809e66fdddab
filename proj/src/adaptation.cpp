#include "socialveil/adaptation.hpp"

#include <algorithm>

#include "socialveil/errors.hpp"
#include "socialveil/resources.hpp"
#include "socialveil/text.hpp"

namespace socialveil {

std::string builtin_repair_text() { return std::string(resource("repair.txt")); }

std::optional<InstructionFragment> repair_fragment(std::string_view text) {
  std::string t = trim(text);
  if (t.empty()) return std::nullopt;
  return InstructionFragment(std::move(t), Provenance::kRepair);
}

std::string apply_repair_instruction(std::string_view prompt, std::string_view repair_text,
                                     std::vector<std::string>* warnings) {
  auto fragment = repair_fragment(repair_text);
  if (!fragment) {
    if (warnings) warnings->push_back("repair text is empty; prompt left unchanged");
    return std::string(prompt);
  }
  return append_repair(prompt, *fragment);
}

ValidationResult FilterPolicy::validate() const {
  ValidationResult r;
  if (!(min_goal >= 0.0 && min_goal <= 10.0)) {
    r.violations.push_back({"min_goal", "must lie in [0, 10]"});
  }
  if (!(min_mutual >= 1.0 && min_mutual <= 5.0)) {
    r.violations.push_back({"min_mutual", "must lie in [1, 5]"});
  }
  if (max_confusion_inverted &&
      !(*max_confusion_inverted >= 1.0 && *max_confusion_inverted <= 5.0)) {
    r.violations.push_back({"max_confusion_inverted", "must lie in [1, 5]"});
  }
  if (require_termination.empty()) {
    r.violations.push_back({"require_termination", "must name at least one termination"});
  }
  if (require_termination.count(Termination::kError)) {
    r.violations.push_back({"require_termination", "only turn_cap and leave are allowed"});
  }
  return r;
}

Json filter_policy_to_json(const FilterPolicy& p) {
  Json j = Json::object();
  j["min_goal"] = p.min_goal;
  j["min_mutual"] = p.min_mutual;
  j["max_confusion_inverted"] =
      p.max_confusion_inverted ? Json(*p.max_confusion_inverted) : Json(nullptr);
  Json terms = Json::array();
  for (Termination t : p.require_termination) terms.push_back(to_string(t));
  j["require_termination"] = std::move(terms);
  return j;
}

FilterPolicy parse_filter_policy(const Json& j) {
  FilterPolicy p;
  p.min_goal = get_field_or<double>(j, "min_goal", p.min_goal);
  p.min_mutual = get_field_or<double>(j, "min_mutual", p.min_mutual);
  if (j.contains("max_confusion_inverted") && !j.at("max_confusion_inverted").is_null()) {
    p.max_confusion_inverted = get_field<double>(j, "max_confusion_inverted");
  }
  if (j.contains("require_termination")) {
    p.require_termination.clear();
    for (const auto& t : get_field<std::vector<std::string>>(j, "require_termination")) {
      p.require_termination.insert(parse_termination(t));
    }
  }
  ValidationResult v = p.validate();
  if (!v.ok()) throw InputError("invalid filter policy: " + v.first());
  return p;
}

namespace {

std::string num(double v) {
  std::string s = std::to_string(v);
  s.erase(s.find_last_not_of('0') + 1);
  if (!s.empty() && s.back() == '.') s.pop_back();
  return s;
}

}  // namespace

Selection filter_trajectories(const std::vector<Transcript>& transcripts,
                              const std::vector<EvaluationReport>& reports,
                              const FilterPolicy& policy) {
  ValidationResult v = policy.validate();
  if (!v.ok()) throw InputError("invalid filter policy: " + v.first());
  std::map<std::string, const EvaluationReport*> by_id;
  for (const auto& r : reports) by_id[r.episode_id] = &r;

  Selection s;
  for (const auto& t : transcripts) {
    SelectionEntry entry;
    entry.episode_id = t.episode_id;
    auto it = by_id.find(t.episode_id);
    if (it == by_id.end()) {
      entry.reasons.push_back("unevaluated");
    } else {
      const EvaluationReport& r = *it->second;
      double goal = r.social.partner_agent.goal_completion.score;
      double mutual = r.barrier_aware.mutual_understanding.score;
      double confusion = r.barrier_aware.unresolved_confusion.score;
      if (goal < policy.min_goal) {
        entry.reasons.push_back("goal " + num(goal) + " < " + num(policy.min_goal));
      }
      if (mutual < policy.min_mutual) {
        entry.reasons.push_back("mutual " + num(mutual) + " < " + num(policy.min_mutual));
      }
      if (policy.max_confusion_inverted && confusion < *policy.max_confusion_inverted) {
        entry.reasons.push_back("confusion " + num(confusion) + " < " +
                                num(*policy.max_confusion_inverted));
      }
      if (!policy.require_termination.count(t.termination)) {
        entry.reasons.push_back("termination " + std::string(to_string(t.termination)) +
                                " not accepted");
      }
    }
    entry.selected = entry.reasons.empty();
    if (entry.selected) {
      entry.reasons.push_back("pass");
      s.selected.push_back(t.episode_id);
    }
    s.entries.push_back(std::move(entry));
  }
  return s;
}

Json selection_manifest(const Selection& s, const FilterPolicy& policy) {
  Json j = Json::object();
  j["policy"] = filter_policy_to_json(policy);
  j["selected_count"] = s.selected.size();
  j["total"] = s.entries.size();
  Json entries = Json::array();
  for (const auto& e : s.entries) {
    entries.push_back(
        Json{{"episode_id", e.episode_id}, {"selected", e.selected}, {"reasons", e.reasons}});
  }
  j["episodes"] = std::move(entries);
  return j;
}

void to_json(Json& j, const BCExample& v) {
  j = Json::object();
  j["prompt"] = v.prompt;
  j["completion"] = v.completion;
  j["episode_id"] = v.episode_id;
  j["turn"] = v.turn;
  j["source_round"] = v.source_round;
}

void from_json(const Json& j, BCExample& v) {
  v.prompt = get_field<std::string>(j, "prompt");
  v.completion = get_field<std::string>(j, "completion");
  v.episode_id = get_field<std::string>(j, "episode_id");
  v.turn = get_field<int>(j, "turn");
  v.source_round = get_field<std::string>(j, "source_round");
}

std::string source_round_name(int round) {
  if (round < 0) throw InputError("round must be >= 0");
  return round == 0 ? "bc" : "sr_" + std::to_string(round);
}

std::vector<BCExample> export_bc_dataset(const std::vector<std::string>& selected,
                                         const std::vector<Transcript>& transcripts,
                                         const std::vector<Episode>& episodes,
                                         const SimulationConfig& cfg,
                                         const std::string& source_round) {
  if (selected.empty()) throw InputError("no selected trajectories to export");
  std::map<std::string, const Transcript*> t_by_id;
  for (const auto& t : transcripts) t_by_id[t.episode_id] = &t;
  std::map<std::string, const Episode*> e_by_id;
  for (const auto& e : episodes) e_by_id[e.id] = &e;

  std::vector<BCExample> out;
  for (const auto& id : selected) {
    auto ti = t_by_id.find(id);
    auto ei = e_by_id.find(id);
    if (ti == t_by_id.end()) throw InputError("export: no transcript for episode " + id);
    if (ei == e_by_id.end()) throw InputError("export: no episode definition for " + id);
    const Transcript& t = *ti->second;
    const Episode& e = *ei->second;
    ValidationResult v = validate_transcript(t, e.first_speaker, e.max_turns);
    if (!v.ok()) {
      throw InputError("export: transcript " + id + " does not match its episode: " + v.first());
    }
    AgentPromptOptions opts;
    opts.temperature = cfg.agent_temperature;
    opts.max_tokens = cfg.max_tokens;
    opts.action_list = cfg.action_list;
    const std::vector<std::string> barrier_texts = e.barrier.all_texts();
    for (const Turn& turn : t.turns) {
      if (turn.role != Role::kPartner) continue;
      ChatRequest req = render_agent_prompt(e, Role::kPartner, t, turn.index, std::nullopt, opts);
      BCExample ex;
      ex.prompt = req.messages().front().content;
      for (const auto& bt : barrier_texts) {
        if (contains(ex.prompt, bt)) {
          throw InputError("export: partner prompt for " + id + " contains barrier text");
        }
      }
      ex.completion = render_action(turn.action);
      ex.episode_id = id;
      ex.turn = turn.index;
      ex.source_round = source_round;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

void DemonstrationSet::append(const std::vector<BCExample>& more) {
  examples_.insert(examples_.end(), more.begin(), more.end());
}

std::map<std::string, double> metric_means(const std::vector<EvaluationReport>& reports) {
  std::map<std::string, double> out;
  if (reports.empty()) return out;
  for (const auto& m : headline_metrics()) {
    double s = 0.0;
    for (const auto& r : reports) s += metric_value(r, m);
    out[m] = s / static_cast<double>(reports.size());
  }
  return out;
}

Json sr_round_report_to_json(const SrRoundReport& r) {
  Json j = Json::object();
  j["round"] = r.round;
  j["source_round"] = r.source_round;
  j["episodes"] = r.episodes;
  j["transcripts"] = r.transcripts;
  j["evaluated"] = r.evaluated;
  j["selected"] = r.selected;
  j["examples_added"] = r.examples_added;
  j["demonstrations_total"] = r.demonstrations_total;
  j["errors"] = r.errors;
  auto obj = [](const std::map<std::string, double>& m) {
    Json o = Json::object();
    for (const auto& name : headline_metrics()) {
      if (auto it = m.find(name); it != m.end()) o[name] = it->second;
    }
    return o;
  };
  j["means"] = obj(r.means);
  j["previous_means"] = obj(r.previous_means);
  j["deltas"] = obj(r.deltas);
  return j;
}

SrRoundResult run_sr_round(const std::vector<Episode>& episodes, const SrRoundInputs& in,
                           DemonstrationSet& d) {
  if (in.round < 1) throw InputError("self-reinforcement rounds start at 1");
  if (!in.barrier || !in.trained_partner || !in.judge) {
    throw InputError("run_sr_round needs barrier, trained partner and judge backends");
  }
  SrRoundResult result;
  SrRoundReport& rep = result.report;
  rep.round = in.round;
  rep.source_round = source_round_name(in.round);
  rep.episodes = episodes.size();

  BatchResult batch = run_batch(episodes, {in.barrier, in.trained_partner}, in.sim);
  for (const auto& f : batch.failures) rep.errors.push_back(f.episode_id + ": " + f.message);
  result.transcripts = std::move(batch.transcripts);
  rep.transcripts = result.transcripts.size();

  EvaluationBatch eval = evaluate_batch(result.transcripts, episodes, *in.judge,
                                        in.trained_partner->model_id(), in.sim.parallelism);
  for (const auto& f : eval.failures) rep.errors.push_back(f.episode_id + ": " + f.message);
  result.reports = std::move(eval.reports);
  rep.evaluated = result.reports.size();

  result.selection = filter_trajectories(result.transcripts, result.reports, in.policy);
  rep.selected = result.selection.selected.size();
  if (!result.selection.selected.empty()) {
    auto examples = export_bc_dataset(result.selection.selected, result.transcripts, episodes,
                                      in.sim, rep.source_round);
    rep.examples_added = examples.size();
    d.append(examples);
  }
  rep.demonstrations_total = d.size();
  rep.means = metric_means(result.reports);
  rep.previous_means = in.previous_means;
  for (const auto& [name, value] : rep.means) {
    if (auto it = in.previous_means.find(name); it != in.previous_means.end()) {
      rep.deltas[name] = value - it->second;
    }
  }
  return result;
}

}  // namespace socialveil
