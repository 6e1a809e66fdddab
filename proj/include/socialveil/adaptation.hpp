#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "socialveil/barrier.hpp"
#include "socialveil/evaluator.hpp"
#include "socialveil/json_io.hpp"
#include "socialveil/simulator.hpp"

namespace socialveil {

// The shipped guidance block (data/repair.txt).
std::string builtin_repair_text();

// nullopt when the text is blank.
std::optional<InstructionFragment> repair_fragment(std::string_view text);

// Appends the repair block to a rendered partner prompt; idempotent. A
// blank repair text leaves the prompt unchanged and adds a warning.
std::string apply_repair_instruction(std::string_view prompt,
                                     std::string_view repair_text = builtin_repair_text(),
                                     std::vector<std::string>* warnings = nullptr);

struct FilterPolicy {
  double min_goal = 7.0;    // partner GOAL, 0..10
  double min_mutual = 4.0;  // 1..5
  // Minimum unresolved_confusion score; that scale runs 1 (very high
  // confusion) to 5 (none), so a higher floor means less confusion.
  std::optional<double> max_confusion_inverted;
  std::set<Termination> require_termination{Termination::kTurnCap, Termination::kLeave};

  ValidationResult validate() const;
};

Json filter_policy_to_json(const FilterPolicy& p);
FilterPolicy parse_filter_policy(const Json& j);

struct SelectionEntry {
  std::string episode_id;
  bool selected = false;
  std::vector<std::string> reasons;  // {"pass"} when selected
};

struct Selection {
  std::vector<std::string> selected;  // transcript order
  std::vector<SelectionEntry> entries;
};

Selection filter_trajectories(const std::vector<Transcript>& transcripts,
                              const std::vector<EvaluationReport>& reports,
                              const FilterPolicy& policy);

Json selection_manifest(const Selection& s, const FilterPolicy& policy);

struct BCExample {
  std::string prompt;
  std::string completion;
  std::string episode_id;
  int turn = 0;
  std::string source_round;  // "bc", "sr_1", ...

  bool operator==(const BCExample&) const = default;
};

void to_json(Json& j, const BCExample& v);
void from_json(const Json& j, BCExample& v);

std::string source_round_name(int round);  // 0 -> "bc", n -> "sr_n"

// One example per partner turn of every selected transcript. Prompts are
// rendered exactly as the simulator would, without repair guidance.
std::vector<BCExample> export_bc_dataset(const std::vector<std::string>& selected,
                                         const std::vector<Transcript>& transcripts,
                                         const std::vector<Episode>& episodes,
                                         const SimulationConfig& cfg,
                                         const std::string& source_round = "bc");

// Append-only demonstration set.
class DemonstrationSet {
 public:
  DemonstrationSet() = default;
  explicit DemonstrationSet(std::vector<BCExample> examples) : examples_(std::move(examples)) {}

  void append(const std::vector<BCExample>& more);
  const std::vector<BCExample>& examples() const { return examples_; }
  size_t size() const { return examples_.size(); }

 private:
  std::vector<BCExample> examples_;
};

std::map<std::string, double> metric_means(const std::vector<EvaluationReport>& reports);

struct SrRoundReport {
  int round = 1;
  std::string source_round;
  size_t episodes = 0;
  size_t transcripts = 0;
  size_t evaluated = 0;
  size_t selected = 0;
  size_t examples_added = 0;
  size_t demonstrations_total = 0;
  std::vector<std::string> errors;  // "episode: message"
  std::map<std::string, double> means;
  std::map<std::string, double> previous_means;
  std::map<std::string, double> deltas;
};

Json sr_round_report_to_json(const SrRoundReport& r);

struct SrRoundResult {
  SrRoundReport report;
  std::vector<Transcript> transcripts;
  std::vector<EvaluationReport> reports;
  Selection selection;
};

struct SrRoundInputs {
  int round = 1;
  std::shared_ptr<ChatBackend> barrier;          // fixed barrier agent
  std::shared_ptr<ChatBackend> trained_partner;  // the learner
  std::shared_ptr<ChatBackend> judge;
  FilterPolicy policy;
  SimulationConfig sim;
  std::map<std::string, double> previous_means;
};

// Simulates with the trained partner, evaluates, filters and appends the
// exported examples to `d`.
SrRoundResult run_sr_round(const std::vector<Episode>& episodes, const SrRoundInputs& in,
                           DemonstrationSet& d);

}  // namespace socialveil
