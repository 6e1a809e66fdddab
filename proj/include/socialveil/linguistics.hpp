#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "socialveil/core.hpp"
#include "socialveil/evaluator.hpp"
#include "socialveil/stats.hpp"

namespace socialveil {

struct Lexicons {
  std::set<std::string> reference_pronouns;
  std::set<std::string> self_focus;
  // Each entry is a token sequence; single words have length 1.
  std::vector<std::vector<std::string>> hedges;
  std::map<std::string, int> valence;
};

// Word lists shipped in data/lexicons.
Lexicons builtin_lexicons();
// Same file names read from a directory.
Lexicons load_lexicons(const std::filesystem::path& dir);

// Lowercase; splits on anything that is not a letter or digit, keeping an
// apostrophe (straight or curly, kept as straight) that sits between two
// word characters.
std::vector<std::string> tokenize(std::string_view text);

struct LinguisticFeatures {
  double reference_pronoun_rate = 0.0;
  double hedge_rate = 0.0;
  double sentiment_polarity = 0.0;
  double self_focus_rate = 0.0;
  long token_count = 0;

  bool operator==(const LinguisticFeatures&) const = default;
};

enum class RoleFilter { kBarrier, kPartner, kBoth };
RoleFilter parse_role_filter(std::string_view s);

// Features over the given utterances (each scanned separately, so hedge
// phrases never span two utterances).
LinguisticFeatures features_from_texts(const std::vector<std::string>& texts,
                                       const Lexicons& lex);
// Speak-turn arguments of the selected role(s).
LinguisticFeatures extract_features(const Transcript& t, RoleFilter filter,
                                    const Lexicons& lex);

const std::vector<std::string>& feature_names();
double feature_value(const LinguisticFeatures& f, const std::string& name);

struct EpisodeFeatures {
  std::string episode_id;
  LinguisticFeatures features;
};

struct CorrelationCell {
  std::string feature;
  std::string metric;
  size_t n = 0;
  bool sufficient = false;
  double r = 0.0;
  double p = 1.0;
  std::string stars;  // "", "*", "**", "***" for p < .05 / .01 / .001
  std::string note;   // why a cell is insufficient
};

std::string significance_stars(double p);

// Pairs features and reports by episode id. Cells with fewer than three
// pairs, or with a constant vector, are marked insufficient.
std::vector<CorrelationCell> correlate_features_metrics(
    const std::vector<EpisodeFeatures>& features, const std::vector<EvaluationReport>& reports,
    const std::vector<std::string>& metrics);

struct EffectObservation {
  std::string metric;
  std::string model;
  std::string scenario_id;
  BarrierType barrier = BarrierType::kNone;
  double value = 0.0;
};

struct BarrierEffect {
  BarrierType barrier = BarrierType::kNone;
  std::string metric;
  double deviation = 0.0;  // percent of |mean of the other two|
  double absolute = 0.0;   // mean of value_b - mean(other two)
  double ci_low = 0.0;  // NaN when the bootstrap could not produce an interval
  double ci_high = 0.0;
  bool significant = false;
  size_t cells = 0;
  size_t scenarios = 0;
};

struct BarrierEffectResult {
  std::vector<BarrierEffect> effects;
  size_t excluded_cells = 0;
  std::vector<std::string> warnings;
};

// Cells are (metric, model, scenario); a cell missing any of the three
// barrier conditions is excluded and counted. Repeated observations for a
// cell and barrier are averaged first. CIs resample scenarios.
BarrierEffectResult barrier_effect(const std::vector<EffectObservation>& observations,
                                   const BootstrapOptions& options = {});

// Observations for every non-baseline report and metric.
std::vector<EffectObservation> effect_observations(const std::vector<EvaluationReport>& reports,
                                                   const std::vector<std::string>& metrics);

}  // namespace socialveil
