#include "socialveil/linguistics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "socialveil/errors.hpp"
#include "socialveil/resources.hpp"
#include "socialveil/text.hpp"

namespace socialveil {

namespace {

std::vector<std::string> content_lines(std::string_view text) {
  std::vector<std::string> out;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    out.push_back(std::move(t));
  }
  return out;
}

std::set<std::string> word_set(std::string_view text) {
  std::set<std::string> out;
  for (const auto& line : content_lines(text)) {
    for (auto& tok : tokenize(line)) out.insert(std::move(tok));
  }
  return out;
}

Lexicons parse_lexicons(std::string_view pronouns, std::string_view self,
                        std::string_view hedges, std::string_view valence,
                        const std::string& origin) {
  Lexicons lex;
  lex.reference_pronouns = word_set(pronouns);
  lex.self_focus = word_set(self);
  for (const auto& line : content_lines(hedges)) {
    auto toks = tokenize(line);
    if (!toks.empty()) lex.hedges.push_back(std::move(toks));
  }
  // Longest phrases first so "sort of" wins over a single-word entry.
  std::stable_sort(lex.hedges.begin(), lex.hedges.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });
  int lineno = 0;
  for (const auto& line : content_lines(valence)) {
    ++lineno;
    auto tab = line.find_first_of("\t ");
    if (tab == std::string::npos) {
      throw InputError(origin + " valence entry " + std::to_string(lineno) + " has no weight");
    }
    std::string word = to_lower(trim(line.substr(0, tab)));
    int weight = 0;
    try {
      weight = std::stoi(trim(line.substr(tab + 1)));
    } catch (const std::exception&) {
      throw InputError(origin + " valence entry '" + word + "' has a non-integer weight");
    }
    if (weight != 1 && weight != -1) {
      throw InputError(origin + " valence entry '" + word + "' must weigh +1 or -1");
    }
    lex.valence[word] = weight;
  }
  return lex;
}

bool word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

}  // namespace

Lexicons builtin_lexicons() {
  return parse_lexicons(resource("lexicons/reference_pronouns.txt"),
                        resource("lexicons/self_focus.txt"), resource("lexicons/hedges.txt"),
                        resource("lexicons/valence.tsv"), "builtin lexicons");
}

Lexicons load_lexicons(const std::filesystem::path& dir) {
  return parse_lexicons(read_file(dir / "reference_pronouns.txt"),
                        read_file(dir / "self_focus.txt"), read_file(dir / "hedges.txt"),
                        read_file(dir / "valence.tsv"), dir.string());
}

std::vector<std::string> tokenize(std::string_view text) {
  static constexpr std::string_view kCurly = "\xE2\x80\x99";
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&]() {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (size_t i = 0; i < text.size();) {
    size_t apostrophe_len = 0;
    if (text[i] == '\'') {
      apostrophe_len = 1;
    } else if (text.substr(i, kCurly.size()) == kCurly) {
      apostrophe_len = kCurly.size();
    }
    if (apostrophe_len > 0) {
      size_t after = i + apostrophe_len;
      bool inner = !cur.empty() && after < text.size() &&
                   word_byte(static_cast<unsigned char>(text[after])) &&
                   text.substr(after, kCurly.size()) != kCurly;
      if (inner) {
        cur += '\'';
      } else {
        flush();
      }
      i = after;
      continue;
    }
    unsigned char c = static_cast<unsigned char>(text[i]);
    if (word_byte(c)) {
      cur += static_cast<char>(std::tolower(c));
    } else {
      flush();
    }
    ++i;
  }
  flush();
  return out;
}

RoleFilter parse_role_filter(std::string_view s) {
  if (s == "barrier") return RoleFilter::kBarrier;
  if (s == "partner") return RoleFilter::kPartner;
  if (s == "both") return RoleFilter::kBoth;
  throw InputError("unknown role filter '" + std::string(s) + "' (barrier, partner, both)");
}

LinguisticFeatures features_from_texts(const std::vector<std::string>& texts,
                                       const Lexicons& lex) {
  long tokens = 0, pronouns = 0, self = 0, hedges = 0, valenced = 0, valence_sum = 0;
  for (const auto& text : texts) {
    auto toks = tokenize(text);
    tokens += static_cast<long>(toks.size());
    for (size_t i = 0; i < toks.size();) {
      const std::string& tok = toks[i];
      pronouns += lex.reference_pronouns.count(tok);
      self += lex.self_focus.count(tok);
      if (auto it = lex.valence.find(tok); it != lex.valence.end()) {
        ++valenced;
        valence_sum += it->second;
      }
      size_t matched = 0;
      for (const auto& phrase : lex.hedges) {
        if (i + phrase.size() <= toks.size() &&
            std::equal(phrase.begin(), phrase.end(), toks.begin() + static_cast<long>(i))) {
          matched = phrase.size();
          break;
        }
      }
      if (matched > 0) {
        ++hedges;
        // Tokens inside a phrase still count for the other lexicons.
        for (size_t j = i + 1; j < i + matched; ++j) {
          pronouns += lex.reference_pronouns.count(toks[j]);
          self += lex.self_focus.count(toks[j]);
          if (auto it = lex.valence.find(toks[j]); it != lex.valence.end()) {
            ++valenced;
            valence_sum += it->second;
          }
        }
        i += matched;
      } else {
        ++i;
      }
    }
  }
  LinguisticFeatures f;
  f.token_count = tokens;
  if (tokens == 0) return f;
  const double n = static_cast<double>(tokens);
  f.reference_pronoun_rate = static_cast<double>(pronouns) / n;
  f.self_focus_rate = static_cast<double>(self) / n;
  f.hedge_rate = static_cast<double>(hedges) / n;
  f.sentiment_polarity =
      valenced == 0 ? 0.0 : static_cast<double>(valence_sum) / static_cast<double>(valenced);
  return f;
}

LinguisticFeatures extract_features(const Transcript& t, RoleFilter filter,
                                    const Lexicons& lex) {
  std::vector<std::string> texts;
  for (const Turn& turn : t.turns) {
    if (turn.action.action_type != ActionType::kSpeak) continue;
    if (filter == RoleFilter::kBarrier && turn.role != Role::kBarrier) continue;
    if (filter == RoleFilter::kPartner && turn.role != Role::kPartner) continue;
    texts.push_back(turn.action.argument);
  }
  return features_from_texts(texts, lex);
}

const std::vector<std::string>& feature_names() {
  static const std::vector<std::string> kNames = {"reference_pronoun_rate", "hedge_rate",
                                                  "sentiment_polarity", "self_focus_rate"};
  return kNames;
}

double feature_value(const LinguisticFeatures& f, const std::string& name) {
  if (name == "reference_pronoun_rate") return f.reference_pronoun_rate;
  if (name == "hedge_rate") return f.hedge_rate;
  if (name == "sentiment_polarity") return f.sentiment_polarity;
  if (name == "self_focus_rate") return f.self_focus_rate;
  if (name == "token_count") return static_cast<double>(f.token_count);
  throw InputError("unknown feature '" + name + "'");
}

std::string significance_stars(double p) {
  if (p < 0.001) return "***";
  if (p < 0.01) return "**";
  if (p < 0.05) return "*";
  return "";
}

std::vector<CorrelationCell> correlate_features_metrics(
    const std::vector<EpisodeFeatures>& features, const std::vector<EvaluationReport>& reports,
    const std::vector<std::string>& metrics) {
  std::map<std::string, const EvaluationReport*> by_id;
  for (const auto& r : reports) by_id[r.episode_id] = &r;
  std::vector<std::pair<const LinguisticFeatures*, const EvaluationReport*>> pairs;
  for (const auto& f : features) {
    if (auto it = by_id.find(f.episode_id); it != by_id.end()) {
      pairs.emplace_back(&f.features, it->second);
    }
  }
  std::vector<CorrelationCell> cells;
  for (const auto& feature : feature_names()) {
    for (const auto& metric : metrics) {
      CorrelationCell cell;
      cell.feature = feature;
      cell.metric = metric;
      cell.n = pairs.size();
      if (pairs.size() < 3) {
        cell.note = "insufficient: fewer than 3 paired episodes";
        cells.push_back(std::move(cell));
        continue;
      }
      std::vector<double> x, y;
      for (const auto& [f, r] : pairs) {
        x.push_back(feature_value(*f, feature));
        y.push_back(metric_value(*r, metric));
      }
      try {
        PearsonResult pr = pearson_r(x, y);
        cell.sufficient = true;
        cell.r = pr.r;
        cell.p = pr.p;
        cell.stars = significance_stars(pr.p);
      } catch (const StatsError& e) {
        cell.note = std::string("insufficient: ") + e.what();
      }
      cells.push_back(std::move(cell));
    }
  }
  return cells;
}

BarrierEffectResult barrier_effect(const std::vector<EffectObservation>& observations,
                                   const BootstrapOptions& options) {
  using CellKey = std::tuple<std::string, std::string, std::string>;  // metric, model, scenario
  struct Acc {
    double sum = 0.0;
    int n = 0;
  };
  std::map<CellKey, std::map<BarrierType, Acc>> cells;
  for (const auto& o : observations) {
    if (o.barrier == BarrierType::kNone) continue;
    Acc& a = cells[{o.metric, o.model, o.scenario_id}][o.barrier];
    a.sum += o.value;
    ++a.n;
  }

  struct CellEffect {
    std::string scenario;
    double effect;
    double others;
  };
  std::map<std::pair<std::string, BarrierType>, std::vector<CellEffect>> grouped;
  BarrierEffectResult result;
  for (const auto& [key, per_barrier] : cells) {
    if (per_barrier.size() != kBarrierTypes.size()) {
      ++result.excluded_cells;
      continue;
    }
    std::map<BarrierType, double> v;
    for (const auto& [b, acc] : per_barrier) v[b] = acc.sum / acc.n;
    for (BarrierType b : kBarrierTypes) {
      double others = 0.0;
      for (BarrierType o : kBarrierTypes) {
        if (o != b) others += v[o];
      }
      others /= 2.0;
      grouped[{std::get<0>(key), b}].push_back({std::get<2>(key), v[b] - others, others});
    }
  }
  if (result.excluded_cells > 0) {
    result.warnings.push_back(std::to_string(result.excluded_cells) +
                              " cell(s) lack one of the three barrier conditions and were "
                              "excluded");
  }

  auto relative = [](const std::vector<CellEffect>& xs) {
    double effect = 0.0, others = 0.0;
    for (const auto& x : xs) {
      effect += x.effect;
      others += x.others;
    }
    if (others == 0.0) throw StatsError("mean of the other barriers is zero");
    return 100.0 * effect / std::fabs(others);
  };

  for (const auto& [key, xs] : grouped) {
    BarrierEffect be;
    be.metric = key.first;
    be.barrier = key.second;
    be.cells = xs.size();
    std::set<std::string> scenarios;
    double abs_sum = 0.0;
    for (const auto& x : xs) {
      scenarios.insert(x.scenario);
      abs_sum += x.effect;
    }
    be.scenarios = scenarios.size();
    be.absolute = abs_sum / static_cast<double>(xs.size());
    try {
      be.deviation = relative(xs);
    } catch (const StatsError& e) {
      result.warnings.push_back(be.metric + "/" + std::string(to_string(be.barrier)) + ": " +
                                e.what());
      continue;
    }
    if (be.scenarios >= 2) {
      try {
        BootstrapResult b = cluster_bootstrap_ci<CellEffect>(
            xs, [](const CellEffect& c) { return c.scenario; }, relative, options);
        be.ci_low = b.ci_low;
        be.ci_high = b.ci_high;
        be.significant = be.ci_low > 0.0 || be.ci_high < 0.0;
      } catch (const StatsError& e) {
        // Too many resamples hit a zero denominator: keep the point estimate.
        be.ci_low = be.ci_high = std::numeric_limits<double>::quiet_NaN();
        result.warnings.push_back(be.metric + "/" + std::string(to_string(be.barrier)) +
                                  ": no interval: " + e.what());
      }
    } else {
      be.ci_low = be.ci_high = be.deviation;
    }
    result.effects.push_back(std::move(be));
  }
  return result;
}

std::vector<EffectObservation> effect_observations(const std::vector<EvaluationReport>& reports,
                                                   const std::vector<std::string>& metrics) {
  std::vector<EffectObservation> out;
  for (const auto& r : reports) {
    // Repair runs are a different treatment, not a fourth barrier sample.
    if (r.condition.find('+') != std::string::npos) continue;
    BarrierType b = parse_condition(r.condition);
    if (b == BarrierType::kNone) continue;
    for (const auto& m : metrics) {
      out.push_back({m, r.subject_model_id, r.scenario_id, b, metric_value(r, m)});
    }
  }
  return out;
}

}  // namespace socialveil
