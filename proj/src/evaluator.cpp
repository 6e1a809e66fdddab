#include "socialveil/evaluator.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <set>
#include <thread>

#include "socialveil/errors.hpp"
#include "socialveil/resources.hpp"
#include "socialveil/text.hpp"

namespace socialveil {

void to_json(Json& j, const ScoredItem& v) {
  j = Json{{"score", v.score}, {"reasoning", v.reasoning}};
}

void from_json(const Json& j, ScoredItem& v) {
  v.score = get_field<int>(j, "score");
  v.reasoning = get_field<std::string>(j, "reasoning");
}

void to_json(Json& j, const AgentSocialScores& v) {
  j = Json::object();
  j["believability"] = v.believability;
  j["relationship"] = v.relationship;
  j["knowledge"] = v.knowledge;
  j["secret"] = v.secret;
  j["social_rules"] = v.social_rules;
  j["financial_benefits"] = v.financial;
  j["goal_completion"] = v.goal_completion;
  j["overall_score"] = v.overall;
}

void from_json(const Json& j, AgentSocialScores& v) {
  v.believability = get_field<ScoredItem>(j, "believability");
  v.relationship = get_field<ScoredItem>(j, "relationship");
  v.knowledge = get_field<ScoredItem>(j, "knowledge");
  v.secret = get_field<ScoredItem>(j, "secret");
  v.social_rules = get_field<ScoredItem>(j, "social_rules");
  v.financial = get_field<ScoredItem>(j, "financial_benefits");
  v.goal_completion = get_field<ScoredItem>(j, "goal_completion");
  v.overall = get_field<int>(j, "overall_score");
}

void to_json(Json& j, const SocialScores& v) {
  j = Json::object();
  j["barrier_agent"] = v.barrier_agent;
  j["partner_agent"] = v.partner_agent;
  j["interaction_quality"] = v.interaction_quality;
  j["key_observations"] = v.key_observations;
}

void from_json(const Json& j, SocialScores& v) {
  v.barrier_agent = get_field<AgentSocialScores>(j, "barrier_agent");
  v.partner_agent = get_field<AgentSocialScores>(j, "partner_agent");
  v.interaction_quality = get_field<ScoredItem>(j, "interaction_quality");
  v.key_observations = get_field_or<std::vector<std::string>>(j, "key_observations", {});
}

void to_json(Json& j, const BarrierAwareScores& v) {
  j = Json{{"unresolved_confusion", v.unresolved_confusion},
           {"mutual_understanding", v.mutual_understanding}};
}

void from_json(const Json& j, BarrierAwareScores& v) {
  v.unresolved_confusion = get_field<ScoredItem>(j, "unresolved_confusion");
  v.mutual_understanding = get_field<ScoredItem>(j, "mutual_understanding");
}

void to_json(Json& j, const EvaluationReport& v) {
  j = Json::object();
  j["episode_id"] = v.episode_id;
  j["scenario_id"] = v.scenario_id;
  j["condition"] = v.condition;
  j["difficulty"] = to_string(v.difficulty);
  j["subject_model_id"] = v.subject_model_id;
  j["social"] = v.social;
  j["barrier_aware"] = v.barrier_aware;
  j["judge_model_id"] = v.judge_model_id;
  j["judge_temperature"] = v.judge_temperature;
  j["rubric_version"] = v.rubric_version;
  j["flags"] = v.flags;
}

void from_json(const Json& j, EvaluationReport& v) {
  v.episode_id = get_field<std::string>(j, "episode_id");
  v.scenario_id = get_field_or<std::string>(j, "scenario_id", "");
  v.condition = get_field_or<std::string>(j, "condition", "");
  v.difficulty = parse_difficulty(get_field_or<std::string>(j, "difficulty", "standard"));
  v.subject_model_id = get_field_or<std::string>(j, "subject_model_id", "");
  v.social = get_field<SocialScores>(j, "social");
  v.barrier_aware = get_field<BarrierAwareScores>(j, "barrier_aware");
  v.judge_model_id = get_field_or<std::string>(j, "judge_model_id", "");
  v.judge_temperature = get_field_or<double>(j, "judge_temperature", 0.0);
  v.rubric_version = get_field_or<std::string>(j, "rubric_version", "");
  v.flags = get_field_or<std::vector<std::string>>(j, "flags", {});
}

std::string rubric_version() {
  return sha256_hex(std::string(resource("prompts/social_eval.txt")) + "\n--\n" +
                    std::string(resource("prompts/barrier_eval.txt")));
}

namespace {

ChatRequest judge_request(std::string text, const std::string& model_id,
                          const JudgeOptions& options, const char* purpose,
                          const std::string& episode_id) {
  ChatRequest req({{MessageRole::kUser, std::move(text)}}, options.temperature,
                  options.max_tokens, model_id);
  RequestTag tag;
  tag.purpose = purpose;
  tag.episode_id = episode_id;
  return req.with_tag(std::move(tag));
}

std::string judge_transcript(const Transcript& t, const Episode& e) {
  if (t.turns.empty()) throw InputError("cannot evaluate empty transcript " + t.episode_id);
  return render_transcript_text(t, e.barrier_agent, e.partner_agent).text();
}

}  // namespace

ChatRequest render_social_prompt(const Transcript& t, const Episode& e,
                                 const std::string& judge_model_id, const JudgeOptions& options) {
  std::string text = format_template(resource("prompts/social_eval.txt"),
                                     {{"goal1", e.barrier_goal.goal},
                                      {"reason1", e.barrier_goal.reason},
                                      {"goal2", e.partner_goal.goal},
                                      {"reason2", e.partner_goal.reason},
                                      {"transcript", judge_transcript(t, e)}});
  return judge_request(std::move(text), judge_model_id, options, "judge_social", e.id);
}

ChatRequest render_barrier_prompt(const Transcript& t, const Episode& e,
                                  const std::string& judge_model_id,
                                  const JudgeOptions& options) {
  std::string text = format_template(resource("prompts/barrier_eval.txt"),
                                     {{"scenario", e.scenario.raw_description},
                                      {"agent_a_goal", e.barrier_goal.goal},
                                      {"agent_b_goal", e.partner_goal.goal},
                                      {"transcript", judge_transcript(t, e)}});
  return judge_request(std::move(text), judge_model_id, options, "judge_barrier", e.id);
}

namespace {

struct ParseContext {
  std::string raw;
  std::vector<std::string>* flags;
};

const nlohmann::json& need(const nlohmann::json& j, const char* key, const std::string& path,
                           const ParseContext& ctx) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError("judge output is missing " + path + (path.empty() ? "" : ".") + key, ctx.raw);
  }
  return j.at(key);
}

int read_score(const nlohmann::json& v, const std::string& path, int lo, int hi,
               const ParseContext& ctx) {
  if (!v.is_number()) throw ParseError(path + " is not a number", ctx.raw);
  double d = v.get<double>();
  double r = std::round(d);
  if (r != d && ctx.flags) ctx.flags->push_back("rounded:" + path);
  if (r < lo || r > hi) {
    throw ParseError(path + " = " + v.dump() + " outside [" + std::to_string(lo) + ", " +
                         std::to_string(hi) + "]",
                     ctx.raw);
  }
  return static_cast<int>(r);
}

ScoredItem read_item(const nlohmann::json& parent, const char* key, const std::string& path,
                     int lo, int hi, const ParseContext& ctx) {
  const auto& item = need(parent, key, path, ctx);
  const std::string here = path.empty() ? key : path + "." + key;
  ScoredItem out;
  out.score = read_score(need(item, "score", here, ctx), here, lo, hi, ctx);
  const auto& reasoning = need(item, "reasoning", here, ctx);
  if (!reasoning.is_string() || trim(reasoning.get<std::string>()).empty()) {
    throw ParseError(here + ".reasoning must be a nonempty string", ctx.raw);
  }
  out.reasoning = reasoning.get<std::string>();
  return out;
}

AgentSocialScores read_agent(const nlohmann::json& root, const char* key,
                             const ParseContext& ctx) {
  const auto& a = need(root, key, "", ctx);
  const std::string p = key;
  AgentSocialScores s;
  s.believability = read_item(a, "believability", p, 0, 10, ctx);
  s.relationship = read_item(a, "relationship", p, -5, 5, ctx);
  s.knowledge = read_item(a, "knowledge", p, 0, 10, ctx);
  s.secret = read_item(a, "secret", p, -10, 0, ctx);
  s.social_rules = read_item(a, "social_rules", p, -10, 0, ctx);
  s.financial = read_item(a, "financial_benefits", p, -5, 5, ctx);
  s.goal_completion = read_item(a, "goal_completion", p, 0, 10, ctx);
  const auto& overall = need(a, "overall_score", p, ctx);
  s.overall = read_score(overall, p + ".overall_score", -1000000, 1000000, ctx);
  return s;
}

nlohmann::json judge_object(std::string_view text) {
  auto obj = extract_first_json_object(text);
  if (!obj) throw ParseError("no JSON object in judge output", std::string(text));
  return *obj;
}

}  // namespace

SocialScores parse_social_scores(std::string_view text, std::vector<std::string>* flags) {
  ParseContext ctx{std::string(text), flags};
  nlohmann::json root = judge_object(text);
  SocialScores s;
  s.barrier_agent = read_agent(root, "agent_1", ctx);
  s.partner_agent = read_agent(root, "agent_2", ctx);
  s.interaction_quality = read_item(root, "interaction_quality", "", 0, 10, ctx);
  if (root.contains("key_observations")) {
    const auto& obs = root.at("key_observations");
    if (!obs.is_array()) throw ParseError("key_observations must be a list", ctx.raw);
    for (const auto& o : obs) {
      if (!o.is_string()) throw ParseError("key_observations entries must be text", ctx.raw);
      s.key_observations.push_back(o.get<std::string>());
    }
  }
  return s;
}

BarrierAwareScores parse_barrier_scores(std::string_view text, std::vector<std::string>* flags) {
  ParseContext ctx{std::string(text), flags};
  nlohmann::json root = judge_object(text);
  const auto& level = need(root, "episode_level", "", ctx);
  BarrierAwareScores s;
  s.unresolved_confusion = read_item(level, "unresolved_confusion", "episode_level", 1, 5, ctx);
  s.mutual_understanding = read_item(level, "mutual_understanding", "episode_level", 1, 5, ctx);
  return s;
}

namespace {

template <class Scores, class Parser>
Scores judge_with_reask(const ChatRequest& prompt, ChatBackend& judge, Parser parse,
                        const char* label, std::vector<std::string>* flags) {
  const std::string reask = format_template(resource("prompts/judge_reask.txt"), {});
  std::vector<std::string> raw;
  ChatRequest request = prompt;
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    Completion c = judge.complete(request);
    raw.push_back(c.text);
    std::vector<std::string> local_flags;
    try {
      Scores s = parse(c.text, &local_flags);
      if (flags) {
        if (attempt > 0) flags->push_back(std::string("reasked:") + label);
        flags->insert(flags->end(), local_flags.begin(), local_flags.end());
      }
      return s;
    } catch (const ParseError& e) {
      last_error = e.what();
      request = prompt
                    .with_appended({{MessageRole::kAssistant, c.text},
                                    {MessageRole::kUser, reask}})
                    .with_sample_index(attempt + 1);
    }
  }
  throw EvaluationError(std::string(label) + " judge output malformed twice for " +
                            prompt.tag().episode_id + ": " + last_error,
                        std::move(raw));
}

}  // namespace

SocialScores evaluate_social(const Transcript& t, const Episode& e, ChatBackend& judge,
                             const JudgeOptions& options, std::vector<std::string>* flags) {
  return judge_with_reask<SocialScores>(render_social_prompt(t, e, judge.model_id(), options),
                                        judge, parse_social_scores, "social", flags);
}

BarrierAwareScores evaluate_barrier_aware(const Transcript& t, const Episode& e,
                                          ChatBackend& judge, const JudgeOptions& options,
                                          std::vector<std::string>* flags) {
  return judge_with_reask<BarrierAwareScores>(
      render_barrier_prompt(t, e, judge.model_id(), options), judge, parse_barrier_scores,
      "barrier", flags);
}

EvaluationReport evaluate_episode(const Transcript& t, const Episode& e, ChatBackend& judge,
                                  const std::string& subject_model_id,
                                  const JudgeOptions& options) {
  if (t.episode_id != e.id) {
    throw InputError("transcript " + t.episode_id + " does not belong to episode " + e.id);
  }
  EvaluationReport r;
  r.episode_id = e.id;
  r.scenario_id = e.scenario.id;
  r.condition = std::string(condition_name(e.barrier.barrier_type));
  r.difficulty = e.scenario.difficulty;
  r.subject_model_id = subject_model_id;
  r.social = evaluate_social(t, e, judge, options, &r.flags);
  r.barrier_aware = evaluate_barrier_aware(t, e, judge, options, &r.flags);
  r.judge_model_id = judge.model_id();
  r.judge_temperature = options.temperature;
  r.rubric_version = rubric_version();
  if (options.temperature != 0.0) r.flags.push_back("noncanonical:judge_temperature");
  return r;
}

EvaluationBatch evaluate_batch(const std::vector<Transcript>& transcripts,
                               const std::vector<Episode>& episodes, ChatBackend& judge,
                               const std::string& subject_model_id, int parallelism,
                               const JudgeOptions& options) {
  std::map<std::string, const Episode*> by_id;
  for (const auto& e : episodes) by_id[e.id] = &e;

  struct Slot {
    std::optional<EvaluationReport> report;
    EvaluationFailure failure;
  };
  std::vector<Slot> slots(transcripts.size());
  std::atomic<size_t> next{0};
  auto worker = [&]() {
    for (size_t i = next.fetch_add(1); i < transcripts.size(); i = next.fetch_add(1)) {
      const Transcript& t = transcripts[i];
      slots[i].failure.episode_id = t.episode_id;
      auto it = by_id.find(t.episode_id);
      if (it == by_id.end()) {
        slots[i].failure.message = "no episode for transcript " + t.episode_id;
        continue;
      }
      try {
        slots[i].report = evaluate_episode(t, *it->second, judge, subject_model_id, options);
      } catch (const EvaluationError& e) {
        slots[i].failure.message = e.what();
        slots[i].failure.raw_outputs = e.raw_outputs();
      } catch (const std::exception& e) {
        slots[i].failure.message = e.what();
      }
    }
  };
  size_t workers = std::min<size_t>(static_cast<size_t>(std::max(parallelism, 1)),
                                    std::max<size_t>(transcripts.size(), 1));
  std::vector<std::thread> pool;
  for (size_t w = 1; w < workers; ++w) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  EvaluationBatch out;
  for (auto& s : slots) {
    if (s.report) {
      out.reports.push_back(std::move(*s.report));
    } else {
      out.failures.push_back(std::move(s.failure));
    }
  }
  return out;
}

const std::vector<std::string>& headline_metrics() {
  static const std::vector<std::string> kNames = {"BEL", "REL", "KNO", "GOAL", "Conf", "Mutu"};
  return kNames;
}

const std::vector<std::string>& all_metrics() {
  static const std::vector<std::string> kNames = {"BEL",  "REL", "KNO", "GOAL", "Conf", "Mutu",
                                                  "SEC",  "SOC", "FIN", "OVERALL", "IQ"};
  return kNames;
}

double metric_value(const EvaluationReport& r, const std::string& metric) {
  const AgentSocialScores& p = r.social.partner_agent;
  if (metric == "BEL") return p.believability.score;
  if (metric == "REL") return p.relationship.score;
  if (metric == "KNO") return p.knowledge.score;
  if (metric == "GOAL") return p.goal_completion.score;
  if (metric == "SEC") return p.secret.score;
  if (metric == "SOC") return p.social_rules.score;
  if (metric == "FIN") return p.financial.score;
  if (metric == "OVERALL") return p.overall;
  if (metric == "IQ") return r.social.interaction_quality.score;
  if (metric == "Conf") return r.barrier_aware.unresolved_confusion.score;
  if (metric == "Mutu") return r.barrier_aware.mutual_understanding.score;
  throw InputError("unknown metric '" + metric + "'");
}

std::string_view to_string(Split s) { return s == Split::kAll ? "all" : "hard"; }

Split parse_split(std::string_view s) {
  if (s == "all") return Split::kAll;
  if (s == "hard") return Split::kHard;
  throw InputError("unknown split '" + std::string(s) + "' (expected all or hard)");
}

namespace {

// baseline, semantic, sociocultural, emotional; then anything else
// alphabetically. A "+repair" suffix sorts right after its base condition.
std::pair<int, std::string> condition_key(const std::string& condition) {
  static const std::vector<std::string> kOrder = {"baseline", "semantic", "sociocultural",
                                                  "emotional"};
  std::string base = condition.substr(0, condition.find('+'));
  auto it = std::find(kOrder.begin(), kOrder.end(), base);
  int rank = it == kOrder.end() ? static_cast<int>(kOrder.size())
                                : static_cast<int>(it - kOrder.begin());
  return {rank, condition};
}

}  // namespace

std::vector<AggregateCell> aggregate_metric(const std::vector<EvaluationReport>& reports,
                                            const std::string& metric,
                                            const std::vector<Split>& splits,
                                            const BootstrapOptions& options) {
  using Key = std::tuple<std::string, std::pair<int, std::string>>;
  std::map<Key, std::vector<const EvaluationReport*>> groups;
  for (const auto& r : reports) {
    groups[{r.subject_model_id, condition_key(r.condition)}].push_back(&r);
  }
  std::vector<AggregateCell> cells;
  for (const auto& [key, members] : groups) {
    for (Split split : splits) {
      struct Obs {
        std::string scenario;
        double value;
      };
      std::vector<Obs> obs;
      for (const EvaluationReport* r : members) {
        if (split == Split::kHard && r->difficulty != Difficulty::kHard) continue;
        obs.push_back({r->scenario_id, metric_value(*r, metric)});
      }
      if (obs.empty()) continue;
      AggregateCell cell;
      cell.model = std::get<0>(key);
      cell.condition = std::get<1>(key).second;
      cell.split = split;
      cell.metric = metric;
      cell.n = obs.size();
      std::set<std::string> scenarios;
      std::vector<double> values;
      for (const auto& o : obs) {
        scenarios.insert(o.scenario);
        values.push_back(o.value);
      }
      cell.clusters = scenarios.size();
      cell.mean = mean(values);
      if (cell.clusters >= 2) {
        BootstrapResult b = cluster_bootstrap_ci<Obs>(
            obs, [](const Obs& o) { return o.scenario; },
            [](const std::vector<Obs>& xs) {
              double s = 0.0;
              for (const auto& x : xs) s += x.value;
              return s / static_cast<double>(xs.size());
            },
            options);
        cell.ci_low = b.ci_low;
        cell.ci_high = b.ci_high;
      } else {
        cell.ci_low = cell.ci_high = cell.mean;
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

namespace {

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  std::string s = buf;
  if (s == "-0.00") s = "0.00";
  return s;
}

std::string pad(const std::string& s, size_t width) {
  // Width in code points so the superscript caret columns line up.
  size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
  return s + std::string(width > cps ? width - cps : 0, ' ');
}

}  // namespace

std::string format_cell(double mean, double half_width) {
  std::string hw = fixed2(std::fabs(half_width));
  if (hw.rfind("0.", 0) == 0) hw.erase(0, 1);
  return fixed2(mean) + "^" + hw;
}

ReportTable render_report_table(const std::vector<AggregateCell>& cells,
                                const std::vector<std::string>& metrics) {
  using RowKey = std::tuple<std::string, std::pair<int, std::string>, Split>;
  std::map<RowKey, std::map<std::string, const AggregateCell*>> rows;
  for (const auto& c : cells) rows[{c.model, condition_key(c.condition), c.split}][c.metric] = &c;

  std::vector<std::vector<std::string>> grid;
  std::vector<std::string> header = {"Model", "Condition", "Split"};
  header.insert(header.end(), metrics.begin(), metrics.end());
  grid.push_back(header);
  ReportTable out;
  out.csv = "model,condition,split,metric,mean,ci_low,ci_high,half_width,n,clusters\n";
  for (const auto& [key, by_metric] : rows) {
    std::vector<std::string> row = {std::get<0>(key), std::get<1>(key).second,
                                    std::string(to_string(std::get<2>(key)))};
    for (const auto& m : metrics) {
      auto it = by_metric.find(m);
      if (it == by_metric.end()) {
        row.push_back("-");
        continue;
      }
      const AggregateCell& c = *it->second;
      double hw = (c.ci_high - c.ci_low) / 2.0;
      row.push_back(format_cell(c.mean, hw));
      char line[512];
      std::snprintf(line, sizeof(line), "%s,%s,%s,%s,%.6f,%.6f,%.6f,%.6f,%zu,%zu\n",
                    c.model.c_str(), c.condition.c_str(), std::string(to_string(c.split)).c_str(),
                    c.metric.c_str(), c.mean, c.ci_low, c.ci_high, hw, c.n, c.clusters);
      out.csv += line;
    }
    grid.push_back(std::move(row));
  }
  std::vector<size_t> widths(header.size(), 0);
  for (const auto& row : grid) {
    for (size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], row[i].size());
  }
  for (const auto& row : grid) {
    std::string line;
    for (size_t i = 0; i < row.size(); ++i) {
      line += i + 1 < row.size() ? pad(row[i], widths[i] + 2) : row[i];
    }
    out.text += line + "\n";
  }
  return out;
}

}  // namespace socialveil
