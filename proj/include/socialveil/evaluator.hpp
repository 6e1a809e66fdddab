#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "socialveil/backend.hpp"
#include "socialveil/core.hpp"
#include "socialveil/json_io.hpp"
#include "socialveil/stats.hpp"

namespace socialveil {

struct ScoredItem {
  int score = 0;
  std::string reasoning;

  bool operator==(const ScoredItem&) const = default;
};

struct AgentSocialScores {
  ScoredItem believability;  // 0..10
  ScoredItem relationship;   // -5..5
  ScoredItem knowledge;      // 0..10
  ScoredItem secret;         // -10..0
  ScoredItem social_rules;   // -10..0
  ScoredItem financial;      // -5..5
  ScoredItem goal_completion;  // 0..10
  // Stored as the judge reports it.
  int overall = 0;

  bool operator==(const AgentSocialScores&) const = default;
};

struct SocialScores {
  AgentSocialScores barrier_agent;  // judge's agent_1
  AgentSocialScores partner_agent;  // judge's agent_2
  ScoredItem interaction_quality;   // 0..10
  std::vector<std::string> key_observations;

  bool operator==(const SocialScores&) const = default;
};

struct BarrierAwareScores {
  ScoredItem unresolved_confusion;  // 1..5, 5 = fully resolved
  ScoredItem mutual_understanding;  // 1..5

  bool operator==(const BarrierAwareScores&) const = default;
};

struct EvaluationReport {
  std::string episode_id;
  std::string scenario_id;
  std::string condition;  // baseline / semantic / sociocultural / emotional
  Difficulty difficulty = Difficulty::kStandard;
  std::string subject_model_id;
  SocialScores social;
  BarrierAwareScores barrier_aware;
  std::string judge_model_id;
  double judge_temperature = 0.0;
  std::string rubric_version;
  // e.g. "rounded:agent_1.believability", "reasked:social".
  std::vector<std::string> flags;

  bool operator==(const EvaluationReport&) const = default;
};

void to_json(Json& j, const ScoredItem& v);
void from_json(const Json& j, ScoredItem& v);
void to_json(Json& j, const AgentSocialScores& v);
void from_json(const Json& j, AgentSocialScores& v);
void to_json(Json& j, const SocialScores& v);
void from_json(const Json& j, SocialScores& v);
void to_json(Json& j, const BarrierAwareScores& v);
void from_json(const Json& j, BarrierAwareScores& v);
void to_json(Json& j, const EvaluationReport& v);
void from_json(const Json& j, EvaluationReport& v);

// Hash of both rubric templates.
std::string rubric_version();

struct JudgeOptions {
  double temperature = 0.0;
  int max_tokens = 2048;
};

ChatRequest render_social_prompt(const Transcript& t, const Episode& e,
                                 const std::string& judge_model_id,
                                 const JudgeOptions& options = {});
ChatRequest render_barrier_prompt(const Transcript& t, const Episode& e,
                                  const std::string& judge_model_id,
                                  const JudgeOptions& options = {});

// Parsers used on judge output. They throw ParseError on a missing field,
// a non-numeric score, an empty reasoning or an out-of-range score.
// Fractional scores are rounded half away from zero and reported in
// `flags`.
SocialScores parse_social_scores(std::string_view text, std::vector<std::string>* flags = nullptr);
BarrierAwareScores parse_barrier_scores(std::string_view text,
                                        std::vector<std::string>* flags = nullptr);

// One re-ask on malformed output, then EvaluationError carrying both raw
// outputs. Transport errors propagate.
SocialScores evaluate_social(const Transcript& t, const Episode& e, ChatBackend& judge,
                             const JudgeOptions& options = {},
                             std::vector<std::string>* flags = nullptr);
BarrierAwareScores evaluate_barrier_aware(const Transcript& t, const Episode& e,
                                          ChatBackend& judge, const JudgeOptions& options = {},
                                          std::vector<std::string>* flags = nullptr);

EvaluationReport evaluate_episode(const Transcript& t, const Episode& e, ChatBackend& judge,
                                  const std::string& subject_model_id,
                                  const JudgeOptions& options = {});

struct EvaluationFailure {
  std::string episode_id;
  std::string message;
  std::vector<std::string> raw_outputs;
};

struct EvaluationBatch {
  std::vector<EvaluationReport> reports;  // input order
  std::vector<EvaluationFailure> failures;
};

// Transcripts are matched to episodes by id.
EvaluationBatch evaluate_batch(const std::vector<Transcript>& transcripts,
                               const std::vector<Episode>& episodes, ChatBackend& judge,
                               const std::string& subject_model_id, int parallelism = 1,
                               const JudgeOptions& options = {});

// Headline metric names: BEL REL KNO GOAL Conf Mutu (partner agent for the
// per-agent dimensions), plus SEC SOC FIN OVERALL and IQ.
const std::vector<std::string>& headline_metrics();
const std::vector<std::string>& all_metrics();
double metric_value(const EvaluationReport& r, const std::string& metric);

enum class Split { kAll, kHard };
std::string_view to_string(Split s);
Split parse_split(std::string_view s);

struct AggregateCell {
  std::string model;
  std::string condition;
  Split split = Split::kAll;
  std::string metric;
  double mean = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  size_t n = 0;
  size_t clusters = 0;
};

// Mean and scenario-clustered percentile bootstrap CI per (model,
// condition, split). Groups with no reports are absent. A group drawn from a
// single scenario gets the degenerate interval [mean, mean].
std::vector<AggregateCell> aggregate_metric(const std::vector<EvaluationReport>& reports,
                                            const std::string& metric,
                                            const std::vector<Split>& splits,
                                            const BootstrapOptions& options = {});

struct ReportTable {
  std::string text;
  std::string csv;
};

// Rows model x condition, columns metrics; each cell "mean^.hw" where hw is
// the CI half-width. Conditions follow the baseline-first order.
ReportTable render_report_table(const std::vector<AggregateCell>& cells,
                                const std::vector<std::string>& metrics);

// "4.00^.00" style cell.
std::string format_cell(double mean, double half_width);

}  // namespace socialveil
