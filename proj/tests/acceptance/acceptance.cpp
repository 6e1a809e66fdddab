// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Tolerances and runtime bounds are fixed below.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "socialveil/adaptation.hpp"
#include "socialveil/annotation.hpp"
#include "socialveil/cli.hpp"
#include "socialveil/evaluator.hpp"
#include "socialveil/linguistics.hpp"
#include "socialveil/simulator.hpp"
#include "socialveil/stats.hpp"
#include "socialveil/text.hpp"
#include "test_support.hpp"

using namespace socialveil;
using namespace testing_support;

namespace {

// Collects failed expectations for one criterion.
class Check {
 public:
  void expect(bool ok, const std::string& what) {
    if (!ok && failures_.size() < 8) failures_.push_back(what);
    if (!ok) ++failed_;
  }
  void near(double actual, double expected, double tol, const std::string& what) {
    std::ostringstream s;
    s.precision(17);
    s << what << ": " << actual << " vs " << expected << " (tol " << tol << ")";
    expect(std::isfinite(actual) && std::fabs(actual - expected) <= tol, s.str());
  }
  bool ok() const { return failed_ == 0; }
  const std::vector<std::string>& failures() const { return failures_; }
  int failed() const { return failed_; }

 private:
  std::vector<std::string> failures_;
  int failed_ = 0;
};

struct Criterion {
  std::string name;
  double limit_s;
  std::function<void(Check&)> body;
};

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

std::string hex(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

// ---------------------------------------------------------------- oracles

double oracle_fleiss(const std::vector<std::vector<int>>& counts) {
  // Expand counts into per-rater labels and count agreeing ordered pairs.
  const size_t n_items = counts.size();
  const size_t cats = counts[0].size();
  long double agree_sum = 0;
  std::vector<long double> label_total(cats, 0);
  int raters = 0;
  for (const auto& row : counts) {
    std::vector<size_t> labels;
    for (size_t j = 0; j < cats; ++j) {
      for (int c = 0; c < row[j]; ++c) labels.push_back(j);
      label_total[j] += row[j];
    }
    raters = static_cast<int>(labels.size());
    long pairs = 0;
    for (size_t a = 0; a < labels.size(); ++a) {
      for (size_t b = 0; b < labels.size(); ++b) {
        if (a != b && labels[a] == labels[b]) ++pairs;
      }
    }
    agree_sum += static_cast<long double>(pairs) / (raters * (raters - 1));
  }
  long double p_bar = agree_sum / n_items;
  long double p_e = 0;
  for (long double t : label_total) {
    long double p = t / (n_items * raters);
    p_e += p * p;
  }
  return static_cast<double>((p_bar - p_e) / (1 - p_e));
}

struct OracleIcc {
  double icc, f, msb, msw;
};

OracleIcc oracle_icc(const std::vector<std::vector<double>>& v) {
  const size_t n = v.size(), k = v[0].size();
  long double grand = 0;
  for (const auto& row : v)
    for (double x : row) grand += x;
  grand /= n * k;
  long double ssb = 0, ssw = 0;
  for (const auto& row : v) {
    long double m = 0;
    for (double x : row) m += x;
    m /= k;
    ssb += k * (m - grand) * (m - grand);
    for (double x : row) ssw += (x - m) * (x - m);
  }
  long double msb = ssb / (n - 1), msw = ssw / (n * (k - 1));
  return {static_cast<double>((msb - msw) / msb), static_cast<double>(msb / msw),
          static_cast<double>(msb), static_cast<double>(msw)};
}

// P(|T| < t) for integer degrees of freedom by the closed-form series.
double student_central(double t, int df) {
  const double theta = std::atan(std::fabs(t) / std::sqrt(static_cast<double>(df)));
  const double c = std::cos(theta), s = std::sin(theta);
  if (df % 2 == 1) {
    double sum = 0, term = c;
    if (df > 1) {
      sum = term;
      for (int j = 3; j <= df - 2; j += 2) {
        term *= c * c * (j - 1) / j;
        sum += term;
      }
    }
    return 2.0 / std::numbers::pi * (theta + s * sum);
  }
  double sum = 1, term = 1;
  for (int j = 2; j <= df - 2; j += 2) {
    term *= c * c * (j - 1) / j;
    sum += term;
  }
  return s * sum;
}

struct OraclePearson {
  double r, p;
};

OraclePearson oracle_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const size_t n = x.size();
  long double sx = 0, sy = 0, sxx = 0, syy = 0, sxy = 0;
  for (size_t i = 0; i < n; ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    syy += static_cast<long double>(y[i]) * y[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  long double num = n * sxy - sx * sy;
  long double den = std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
  double r = static_cast<double>(num / den);
  int df = static_cast<int>(n) - 2;
  double p = 1.0;
  if (std::fabs(r) >= 1.0) {
    p = 0.0;
  } else {
    double t = r * std::sqrt(df / (1 - r * r));
    p = 1.0 - student_central(t, df);
  }
  return {r, p};
}

// ---------------------------------------------------------------- fixtures

std::shared_ptr<ChatBackend> fixed_reply(const std::string& action_json) {
  Json script{{"*", action_json}};
  return std::make_shared<ScriptedBackend>("scripted", parse_script(script));
}

const char* kSpeakJson = R"({"action_type": "speak", "argument": "Hello there."})";
const char* kLeaveJson = R"({"action_type": "leave", "argument": ""})";

std::vector<std::string> all_barrier_texts() {
  std::vector<std::string> out;
  Taxonomy t = builtin_taxonomy();
  for (BarrierType b : kBarrierTypes) {
    for (const auto& s : t.spec_for(b).all_texts()) out.push_back(s);
  }
  return out;
}

std::vector<Episode> batch_episodes(int pairings) {
  std::vector<Episode> eps;
  const BarrierType conds[] = {BarrierType::kNone, BarrierType::kSemantic,
                               BarrierType::kSociocultural, BarrierType::kEmotional};
  for (int i = 0; i < pairings; ++i) {
    for (BarrierType b : conds) {
      Episode e = make_episode(b, "pair" + std::to_string(i) + "-" +
                                      std::string(condition_name(b)));
      e.scenario.id = "sc-" + std::to_string(i);
      e.first_speaker = i % 2 == 0 ? Role::kPartner : Role::kBarrier;
      eps.push_back(e);
    }
  }
  return eps;
}

// ---------------------------------------------------------------- criteria

void icc_from_reported_f(Check& c) {
  IccResult conf = icc_from_f(4.26, 119, 240);
  IccResult mut = icc_from_f(4.80, 119, 240);
  c.near(conf.icc, 1.0 - 1.0 / 4.26, 1e-12, "F=4.26 formula");
  c.near(conf.icc, 0.77, 0.01, "F=4.26 vs reported ICC");
  c.near(mut.icc, 0.79, 0.005, "F=4.80 vs reported ICC");
  c.near(conf.ci_low, 0.68, 0.005, "F=4.26 CI low");
  c.near(conf.ci_high, 0.83, 0.005, "F=4.26 CI high");
  c.near(mut.ci_low, 0.72, 0.005, "F=4.80 CI low");
  c.near(mut.ci_high, 0.85, 0.005, "F=4.80 CI high");
}

void stats_oracles(Check& c) {
  std::mt19937 rng(20240611);
  auto uni = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };
  int fleiss_cases = 0, icc_cases = 0, pearson_cases = 0;
  for (int attempt = 0; attempt < 500 && (fleiss_cases < 25 || icc_cases < 25 ||
                                           pearson_cases < 25);
       ++attempt) {
    const int n = uni(2, 10), k = uni(2, 5), cats = uni(2, 4);
    std::vector<std::vector<int>> counts(n, std::vector<int>(cats, 0));
    std::vector<std::vector<double>> ratings(n, std::vector<double>(k));
    for (int i = 0; i < n; ++i) {
      for (int r = 0; r < k; ++r) {
        counts[i][uni(0, cats - 1)]++;
        ratings[i][r] = uni(1, 5);
      }
    }
    const std::string tag = "case " + std::to_string(attempt) + " (" + std::to_string(n) + "x" +
                            std::to_string(k) + ")";

    std::set<int> used;
    for (const auto& row : counts)
      for (int j = 0; j < cats; ++j)
        if (row[j]) used.insert(j);
    if (used.size() > 1 && fleiss_cases < 25) {
      c.near(fleiss_kappa(counts), oracle_fleiss(counts), 1e-9, "fleiss " + tag);
      ++fleiss_cases;
    }

    OracleIcc o = oracle_icc(ratings);
    if (o.msw > 0 && o.msb > 0 && icc_cases < 25) {
      IccResult r = icc_1k(ratings);
      c.near(r.icc, o.icc, 1e-9, "icc " + tag);
      c.near(r.f, o.f, 1e-9 * std::max(1.0, o.f), "F " + tag);
      c.near(r.msb, o.msb, 1e-9, "msb " + tag);
      c.near(r.msw, o.msw, 1e-9, "msw " + tag);
      c.near(r.icc, 1.0 - 1.0 / r.f, 1e-12, "icc identity " + tag);
      ++icc_cases;
    }

    if (n >= 3 && pearson_cases < 25) {
      std::vector<double> x, y;
      for (int i = 0; i < n; ++i) {
        x.push_back(ratings[i][0]);
        y.push_back(ratings[i][1]);
      }
      bool varies_x = std::set<double>(x.begin(), x.end()).size() > 1;
      bool varies_y = std::set<double>(y.begin(), y.end()).size() > 1;
      if (varies_x && varies_y) {
        PearsonResult r = pearson_r(x, y);
        OraclePearson o2 = oracle_pearson(x, y);
        c.near(r.r, o2.r, 1e-9, "pearson r " + tag);
        c.near(r.p, o2.p, 1e-9, "pearson p " + tag);
        ++pearson_cases;
      }
    }
  }
  c.expect(fleiss_cases >= 20 && icc_cases >= 20 && pearson_cases >= 20,
           "fewer than 20 randomized cases per statistic");
}

void bootstrap_two_clusters(Check& c) {
  // Cluster a contributes 0, cluster b contributes 1; each resample draws two
  // clusters, so the mean is 0, 0.5 or 1 with probabilities 1/4, 1/2, 1/4.
  struct Rec {
    std::string cluster;
    double value;
  };
  std::vector<Rec> recs = {{"a", 0.0}, {"a", 0.0}, {"b", 1.0}, {"b", 1.0}};
  BootstrapOptions opt;
  opt.resamples = 10000;
  opt.seed = 12345;
  auto run = [&] {
    return cluster_bootstrap_ci<Rec>(
        recs, [](const Rec& r) { return r.cluster; },
        [](const std::vector<Rec>& s) {
          double sum = 0;
          for (const auto& r : s) sum += r.value;
          return sum / static_cast<double>(s.size());
        },
        opt);
  };
  BootstrapResult first = run();
  c.expect(first.statistics.size() == 10000u, "resample count");
  std::map<double, int> freq;
  for (double s : first.statistics) freq[s]++;
  c.expect(freq.size() == 3u, "exactly three distinct resample statistics");
  const double total = static_cast<double>(first.statistics.size());
  c.near(freq[0.0] / total, 0.25, 0.02, "P(0)");
  c.near(freq[0.5] / total, 0.50, 0.02, "P(0.5)");
  c.near(freq[1.0] / total, 0.25, 0.02, "P(1)");
  BootstrapResult second = run();
  c.expect(hex(first.ci_low) == hex(second.ci_low) && hex(first.ci_high) == hex(second.ci_high),
           "same seed, same CI bytes");
  opt.threads = 4;
  BootstrapResult threaded = run();
  c.expect(hex(first.ci_low) == hex(threaded.ci_low) &&
               hex(first.ci_high) == hex(threaded.ci_high),
           "CI independent of thread count");
}

void unilaterality(Check& c) {
  std::vector<Episode> eps = batch_episodes(10);
  c.expect(eps.size() == 40u, "40 episodes");
  auto reply = [](const ChatRequest&) { return std::string(kSpeakJson); };
  auto barrier = std::make_shared<RecordingBackend>(reply, "barrier");
  auto partner = std::make_shared<RecordingBackend>(reply, "partner");
  SimulationConfig cfg;
  cfg.parallelism = 4;
  BatchResult res = run_batch(eps, {barrier, partner}, cfg);
  c.expect(res.transcripts.size() == 40u && res.failures.empty(), "all episodes complete");

  const std::vector<std::string> texts = all_barrier_texts();
  size_t leaks = 0;
  for (const auto& r : partner->requests) {
    const std::string body = r.joined_content();
    for (const auto& s : texts)
      if (contains(body, s)) ++leaks;
  }
  c.expect(!partner->requests.empty(), "partner prompts observed");
  c.expect(leaks == 0, std::to_string(leaks) + " barrier substrings in partner prompts");

  std::map<std::string, const Episode*> by_id;
  for (const auto& e : eps) by_id[e.id] = &e;
  size_t missing = 0, none_leaks = 0, checked = 0;
  for (const auto& r : barrier->requests) {
    const Episode& e = *by_id.at(r.tag().episode_id);
    const std::string body = r.joined_content();
    if (e.barrier.is_none()) {
      for (const auto& s : texts)
        if (contains(body, s)) ++none_leaks;
      continue;
    }
    ++checked;
    if (!contains(body, compose_barrier_fragment(e.barrier).text())) ++missing;
  }
  c.expect(checked > 0, "barrier prompts observed");
  c.expect(missing == 0, std::to_string(missing) + " barrier prompts without their fragment");
  c.expect(none_leaks == 0, "barrier text under the None condition");
}

void simulation_contract(Check& c) {
  Episode e = make_episode(BarrierType::kSemantic);
  auto speak = fixed_reply(kSpeakJson);
  auto leave = fixed_reply(kLeaveJson);
  Transcript t = run_episode(e, *speak, *speak, {});
  c.expect(t.turns.size() == 20u && t.termination == Termination::kTurnCap,
           "always-speak runs " + std::to_string(t.turns.size()) + " turns");
  Transcript l = run_episode(e, *leave, *leave, {});
  c.expect(l.turns.size() == 1u && l.termination == Termination::kLeave,
           "leave ends after the first turn");

  std::vector<Episode> eps = batch_episodes(6);
  std::string reference;
  for (int par : {1, 4, 8}) {
    SimulationConfig cfg;
    cfg.parallelism = par;
    BatchResult r = run_batch(eps, {speak, speak}, cfg);
    std::string out = to_ndjson(r.transcripts);
    if (reference.empty()) reference = out;
    c.expect(r.transcripts.size() == eps.size() && r.failures.empty(),
             "batch size at parallelism " + std::to_string(par));
    c.expect(out == reference, "batch output differs at parallelism " + std::to_string(par));
  }
}

Transcript judge_transcript() {
  Transcript t;
  t.episode_id = "ep-1";
  t.turns = {{0, Role::kPartner, AgentAction::speak("The bedroom ceiling is dripping again.")},
             {1, Role::kBarrier, AgentAction::speak("Well... that thing, it kind of happens.")},
             {2, Role::kPartner, {ActionType::kNonVerbal, "points at the stain"}},
             {3, Role::kBarrier, AgentAction::leave()}};
  t.termination = Termination::kLeave;
  return t;
}

void evaluator_fidelity(Check& c) {
  Episode e = make_episode(BarrierType::kSemantic);
  Transcript t = judge_transcript();
  const auto golden = fixtures() / "golden";
  const std::string social = render_social_prompt(t, e, "judge-model").messages()[0].content;
  const std::string barrier = render_barrier_prompt(t, e, "judge-model").messages()[0].content;
  c.expect(social == slurp(golden / "judge_social.txt"), "social prompt differs from golden");
  c.expect(barrier == slurp(golden / "judge_barrier.txt"), "barrier prompt differs from golden");

  // Every template line without a placeholder appears verbatim in the golden
  // once doubled braces are unescaped.
  auto verbatim = [&](std::string_view tmpl, const std::string& golden_text, const char* name) {
    size_t lines = 0, missing = 0;
    for (const std::string& raw : split_lines(std::string(tmpl))) {
      std::string line;
      bool placeholder = false;
      for (size_t i = 0; i < raw.size(); ++i) {
        const bool doubled = i + 1 < raw.size() && raw[i + 1] == raw[i];
        if ((raw[i] == '{' || raw[i] == '}') && doubled) {
          line += raw[i++];
        } else {
          if (raw[i] == '{') placeholder = true;
          line += raw[i];
        }
      }
      if (trim(line).empty() || placeholder) continue;
      ++lines;
      if (!contains(golden_text, line)) ++missing;
    }
    c.expect(lines > 10 && missing == 0,
             std::string(name) + ": " + std::to_string(missing) + " rubric lines missing");
  };
  verbatim(resource("prompts/social_eval.txt"), slurp(golden / "judge_social.txt"), "social");
  verbatim(resource("prompts/barrier_eval.txt"), slurp(golden / "judge_barrier.txt"), "barrier");

  try {
    SocialScores s = parse_social_scores(slurp(fixtures() / "judge" / "social_example.json"));
    c.expect(s.partner_agent.goal_completion.score == 8, "example goal score");
    parse_barrier_scores(slurp(fixtures() / "judge" / "barrier_example.json"));
  } catch (const std::exception& ex) {
    c.expect(false, std::string("example rejected: ") + ex.what());
  }

  auto cases = read_ndjson<Json>(fixtures() / "judge" / "malformed.ndjson");
  c.expect(cases.size() == 30u, "malformed suite has 30 cases");
  int rejected = 0;
  for (const auto& m : cases) {
    const std::string text = m["text"];
    try {
      if (m["kind"] == "social") {
        parse_social_scores(text);
      } else {
        parse_barrier_scores(text);
      }
      c.expect(false, "accepted malformed case " + m["name"].get<std::string>());
    } catch (const ParseError&) {
      ++rejected;
    }
  }
  c.expect(rejected == static_cast<int>(cases.size()), "malformed rejection rate");
}

int run_cli(const std::vector<std::string>& args, std::string* stdout_text = nullptr) {
  std::ostringstream out, err;
  int code = run_command(args, out, err);
  if (stdout_text) *stdout_text = out.str();
  if (code != 0) std::cerr << err.str();
  return code;
}

void replay_pipeline(Check& c) {
  TempDir dir;
  const std::string cfg = (fixtures() / "replay" / "config.json").string();
  const std::string out = dir.path().string();
  c.expect(run_cli({"simulate", "--config", cfg, "--out", out}) == 0, "simulate");
  c.expect(run_cli({"evaluate", "--config", cfg, "--out", out}) == 0, "evaluate");
  std::string printed;
  c.expect(run_cli({"report", "--config", cfg, "--out", out}, &printed) == 0, "report");
  if (!c.ok()) return;

  std::map<std::string, std::map<std::string, std::vector<double>>> values;
  size_t episodes = 0;
  for (const char* cond : {"baseline", "semantic", "sociocultural", "emotional"}) {
    auto reports = read_ndjson<EvaluationReport>(dir.path() / "runs" / cond / "reports.ndjson");
    c.expect(reports.size() == 3u, std::string(cond) + " has 3 evaluated episodes");
    episodes += reports.size();
    for (const auto& r : reports) {
      for (const char* m : {"GOAL", "Mutu"}) values[cond][m].push_back(metric_value(r, m));
    }
  }
  c.expect(episodes == 12u, "12 episodes");
  for (const char* m : {"GOAL", "Mutu"}) {
    double base = mean(values["baseline"][m]);
    for (const char* cond : {"semantic", "sociocultural", "emotional"}) {
      double v = mean(values[cond][m]);
      c.expect(base > v, std::string(m) + ": baseline " + fmt_double(base) + " <= " + cond +
                             " " + fmt_double(v));
    }
  }
  const std::string table = slurp(dir.path() / "report" / "table.txt");
  c.expect(contains(table, "^"), "cells carry CI superscripts");
  c.expect(run_cli({"report", "--config", cfg, "--out", out}) == 0, "second report");
  c.expect(slurp(dir.path() / "report" / "table.txt") == table, "table is not deterministic");
  c.expect(contains(printed, table.substr(0, 20)), "table printed to stdout");
}

std::vector<EffectObservation> triple(const std::string& scenario, double sem, double soc,
                                      double emo) {
  return {{"GOAL", "m", scenario, BarrierType::kSemantic, sem},
          {"GOAL", "m", scenario, BarrierType::kSociocultural, soc},
          {"GOAL", "m", scenario, BarrierType::kEmotional, emo}};
}

void linguistic_features(Check& c) {
  Lexicons lex = builtin_lexicons();
  LinguisticFeatures f = features_from_texts({"I think it might work"}, lex);
  c.expect(f.token_count == 5, "worked example token count");
  c.expect(f.reference_pronoun_rate == 0.2 && f.hedge_rate == 0.2 && f.self_focus_rate == 0.2,
           "worked example rates");

  auto rows = read_ndjson<Json>(fixtures() / "linguistics" / "hand_counted.ndjson");
  c.expect(rows.size() == 10u, "10 hand-counted fixtures");
  for (const auto& row : rows) {
    LinguisticFeatures g = features_from_texts(row["texts"].get<std::vector<std::string>>(), lex);
    const double n = row["tokens"].get<double>();
    const double valenced = row["valenced"].get<double>();
    const double polarity = valenced == 0 ? 0.0 : row["valence_sum"].get<double>() / valenced;
    bool exact = g.token_count == row["tokens"].get<long>() &&
                 g.reference_pronoun_rate == row["reference_pronouns"].get<double>() / n &&
                 g.hedge_rate == row["hedges"].get<double>() / n &&
                 g.self_focus_rate == row["self_focus"].get<double>() / n &&
                 g.sentiment_polarity == polarity;
    c.expect(exact, "fixture " + row["name"].get<std::string>());
  }

  std::vector<EffectObservation> sym;
  for (const char* s : {"a", "b", "c"}) {
    auto t = triple(s, 5, 5, 5);
    sym.insert(sym.end(), t.begin(), t.end());
  }
  BarrierEffectResult zero = barrier_effect(sym);
  c.expect(zero.effects.size() == 3u, "three effects on the symmetric fixture");
  for (const auto& e : zero.effects) c.expect(e.deviation == 0.0, "symmetric deviation");

  std::vector<EffectObservation> skew;
  for (const char* s : {"a", "b"}) {
    auto t = triple(s, 2, 4, 4);
    skew.insert(skew.end(), t.begin(), t.end());
  }
  bool found = false;
  for (const auto& e : barrier_effect(skew).effects) {
    if (e.barrier != BarrierType::kSemantic) continue;
    found = true;
    c.near(e.deviation, -50.0, 1e-12, "(2,4,4) deviation");
  }
  c.expect(found, "semantic effect present");
}

std::vector<AnnotationItem> annotation_items(const std::vector<std::array<int, 2>>& judge) {
  std::vector<AnnotationItem> items;
  const BarrierType types[] = {BarrierType::kSemantic, BarrierType::kSociocultural,
                               BarrierType::kEmotional, BarrierType::kNone};
  for (size_t i = 0; i < judge.size(); ++i) {
    BarrierType b = types[i % 4];
    std::string id = "pair" + std::to_string(i) + "-" + std::string(condition_name(b));
    Episode e = make_episode(b, id);
    e.scenario.id = "sc-" + std::to_string(i % 3);
    EvaluationReport r;
    r.episode_id = id;
    r.barrier_aware.unresolved_confusion.score = judge[i][0];
    r.barrier_aware.mutual_understanding.score = judge[i][1];
    items.push_back({e, make_transcript(id, 4), r});
  }
  return items;
}

struct Rating {
  std::string label;
  int confusion;
  int mutual;
};

// Drives every annotator through the service; `rate(item, rater)` supplies the answers.
void annotate_all(AnnotationService& s, const std::vector<AnnotationItem>& items,
                  const std::vector<std::string>& annotators,
                  const std::function<Rating(size_t, size_t)>& rate) {
  std::map<std::string, size_t> by_blinded;
  for (size_t i = 0; i < items.size(); ++i) by_blinded[s.blinded_id(items[i].episode.id)] = i;
  for (size_t a = 0; a < annotators.size(); ++a) {
    for (;;) {
      NextTask t = s.next_task(annotators[a]);
      if (t.kind != NextTask::Kind::kTask) break;
      const std::string blinded = t.payload["episode_id"];
      Rating r = rate(by_blinded.at(blinded), a);
      AnnotationRecord rec;
      rec.episode_id = blinded;
      rec.annotator_id = annotators[a];
      rec.barrier_label = r.label;
      rec.confusion = r.confusion;
      rec.mutual = r.mutual;
      rec.duration = 30;
      s.submit(rec);
    }
  }
}

void annotation_agreement(Check& c) {
  const std::vector<std::string> annotators = {"ann-a", "ann-b", "ann-c"};
  const std::vector<std::string>& labels = annotation_labels();
  AssignmentPlan plan;
  plan.coverage = 3;
  plan.annotators = annotators;

  // Synthetic disagreement fixture.
  std::vector<std::array<int, 2>> judge = {{2, 4}, {3, 3}, {5, 5}, {1, 2}, {4, 4}, {2, 3}};
  auto items = annotation_items(judge);
  auto rate = [&](size_t i, size_t a) {
    return Rating{labels[(i + (a == 2 ? 1 : 0) * (i % 2)) % 4],
                  static_cast<int>(1 + (i * 2 + a) % 5), static_cast<int>(1 + (i + a * a) % 5)};
  };
  TempDir dir;
  AnnotationService svc(items, plan, builtin_taxonomy(), dir.path());
  annotate_all(svc, items, annotators, rate);
  AgreementReport rep = svc.agreement_report();
  c.expect(rep.included == 6u, "6 episodes included");

  std::map<std::string, size_t> index;
  for (size_t i = 0; i < items.size(); ++i) index[items[i].episode.id] = i;
  std::vector<std::vector<int>> counts;
  std::vector<std::vector<double>> conf, mut;
  std::vector<double> hc, jc, hm, jm;
  for (const auto& id : rep.episode_ids) {
    size_t i = index.at(id);
    std::vector<int> row(labels.size(), 0);
    std::vector<double> cr, mr;
    for (size_t a = 0; a < annotators.size(); ++a) {
      Rating r = rate(i, a);
      row[std::find(labels.begin(), labels.end(), r.label) - labels.begin()]++;
      cr.push_back(r.confusion);
      mr.push_back(r.mutual);
    }
    counts.push_back(row);
    conf.push_back(cr);
    mut.push_back(mr);
    hc.push_back((cr[0] + cr[1] + cr[2]) / 3.0);
    hm.push_back((mr[0] + mr[1] + mr[2]) / 3.0);
    jc.push_back(judge[i][0]);
    jm.push_back(judge[i][1]);
  }
  c.expect(rep.fleiss_kappa && rep.icc_confusion && rep.icc_mutual && rep.alignment_confusion &&
               rep.alignment_mutual,
           "all agreement statistics present");
  if (!c.ok()) return;
  c.near(*rep.fleiss_kappa, fleiss_kappa(counts), 1e-12, "kappa");
  IccResult ic = icc_1k(conf), im = icc_1k(mut);
  c.near(rep.icc_confusion->icc, ic.icc, 1e-12, "icc confusion");
  c.near(rep.icc_confusion->ci_low, ic.ci_low, 1e-12, "icc confusion CI low");
  c.near(rep.icc_confusion->ci_high, ic.ci_high, 1e-12, "icc confusion CI high");
  c.near(rep.icc_mutual->icc, im.icc, 1e-12, "icc mutual");
  PearsonResult pc = pearson_r(hc, jc), pm = pearson_r(hm, jm);
  c.near(rep.alignment_confusion->r, pc.r, 1e-12, "alignment confusion r");
  c.near(rep.alignment_confusion->p, pc.p, 1e-12, "alignment confusion p");
  c.near(rep.alignment_mutual->r, pm.r, 1e-12, "alignment mutual r");

  // Unanimity: raters agree with each other and with the judge.
  std::vector<std::array<int, 2>> judge_u = {{1, 5}, {2, 4}, {3, 3}, {4, 2}, {5, 1}, {3, 4}};
  auto items_u = annotation_items(judge_u);
  TempDir dir_u;
  AnnotationService unanimous(items_u, plan, builtin_taxonomy(), dir_u.path());
  annotate_all(unanimous, items_u, annotators, [&](size_t i, size_t) {
    return Rating{labels[i % 4], judge_u[i][0], judge_u[i][1]};
  });
  AgreementReport u = unanimous.agreement_report();
  c.expect(u.fleiss_kappa && *u.fleiss_kappa == 1.0, "unanimous kappa == 1");
  c.expect(u.icc_confusion && u.icc_confusion->icc == 1.0, "unanimous ICC confusion == 1");
  c.expect(u.icc_mutual && u.icc_mutual->icc == 1.0, "unanimous ICC mutual == 1");
  c.expect(u.alignment_confusion && std::fabs(u.alignment_confusion->r - 1.0) < 1e-12,
           "unanimous r confusion == 1");
  c.expect(u.alignment_mutual && std::fabs(u.alignment_mutual->r - 1.0) < 1e-12,
           "unanimous r mutual == 1");
}

void bc_export(Check& c) {
  // e0 6 turns partner first; e1 fails GOAL; e2 5 turns barrier first;
  // e3 fails Mutu; e4 7 turns partner first ending in a partner leave.
  struct Spec {
    int turns;
    Role first;
    int goal;
    int mutual;
    BarrierType barrier;
  };
  const Spec specs[] = {{6, Role::kPartner, 8, 4, BarrierType::kSemantic},
                        {4, Role::kPartner, 5, 5, BarrierType::kEmotional},
                        {5, Role::kBarrier, 9, 5, BarrierType::kSociocultural},
                        {6, Role::kBarrier, 9, 2, BarrierType::kSemantic},
                        {7, Role::kPartner, 7, 4, BarrierType::kEmotional}};
  const size_t hand_count = 3 + 2 + 4;

  std::vector<Episode> eps;
  std::vector<Transcript> ts;
  std::vector<EvaluationReport> reports;
  for (int i = 0; i < 5; ++i) {
    const Spec& s = specs[i];
    std::string id = "e" + std::to_string(i);
    Episode e = make_episode(s.barrier, id);
    e.first_speaker = s.first;
    Transcript t = make_transcript(id, s.turns, s.first);
    for (auto& turn : t.turns) {
      if (turn.index == 2) turn.action = {ActionType::kNonVerbal, "nods \"slowly\""};
      if (turn.index == 3) turn.action = {ActionType::kAction, "opens the window"};
    }
    if (i == 4) {
      t.turns.back().action = AgentAction::leave();
      t.termination = Termination::kLeave;
    }
    EvaluationReport r;
    r.episode_id = id;
    r.social.partner_agent.goal_completion.score = s.goal;
    r.barrier_aware.mutual_understanding.score = s.mutual;
    eps.push_back(e);
    ts.push_back(t);
    reports.push_back(r);
  }
  Selection sel = filter_trajectories(ts, reports, FilterPolicy{});
  c.expect(sel.selected == std::vector<std::string>({"e0", "e2", "e4"}), "selected episodes");

  SimulationConfig cfg;
  cfg.repair = repair_fragment(builtin_repair_text());
  std::vector<BCExample> ex = export_bc_dataset(sel.selected, ts, eps, cfg);
  c.expect(ex.size() == hand_count,
           "exported " + std::to_string(ex.size()) + " vs hand count " +
               std::to_string(hand_count));

  const std::vector<std::string> texts = all_barrier_texts();
  std::map<std::string, const Transcript*> by_id;
  for (const auto& t : ts) by_id[t.episode_id] = &t;
  const std::string lines = to_ndjson(ex);
  size_t leaks = 0, round_trip_failures = 0, n = 0;
  for (const auto& line : split_lines(lines)) {
    if (line.empty()) continue;
    ++n;
    BCExample x = Json::parse(line).get<BCExample>();
    try {
      AgentAction a = parse_action(x.completion);
      const Turn& turn = by_id.at(x.episode_id)->turns.at(static_cast<size_t>(x.turn));
      if (!(a == turn.action) || turn.role != Role::kPartner) ++round_trip_failures;
    } catch (const ParseError&) {
      ++round_trip_failures;
    }
    for (const auto& s : texts)
      if (contains(x.prompt, s)) ++leaks;
  }
  c.expect(n == hand_count, "line count");
  c.expect(round_trip_failures == 0,
           std::to_string(round_trip_failures) + " lines fail the parse_action round trip");
  c.expect(leaks == 0, std::to_string(leaks) + " barrier substrings in prompts");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"icc_from_reported_f_statistics", 1, icc_from_reported_f},
      {"stats_match_independent_oracles", 10, stats_oracles},
      {"cluster_bootstrap_two_cluster_frequencies_and_seed_reproducibility", 30,
       bootstrap_two_clusters},
      {"barrier_instructions_reach_only_the_barrier_agent", 60, unilaterality},
      {"turn_cap_leave_and_parallel_determinism", 60, simulation_contract},
      {"judge_prompts_golden_and_parser_strictness", 10, evaluator_fidelity},
      {"replay_fixture_baseline_outscores_barriers", 60, replay_pipeline},
      {"linguistic_features_and_barrier_effect", 5, linguistic_features},
      {"agreement_report_matches_direct_statistics", 10, annotation_agreement},
      {"bc_export_counts_round_trip_and_no_barrier_text", 5, bc_export},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check check;
    auto start = std::chrono::steady_clock::now();
    try {
      cr.body(check);
    } catch (const std::exception& e) {
      check.expect(false, std::string("exception: ") + e.what());
    }
    double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (secs >= cr.limit_s) {
      check.expect(false, "runtime " + fmt_double(secs) + " s exceeds " +
                              fmt_double(cr.limit_s) + " s");
    }
    char timing[32];
    std::snprintf(timing, sizeof timing, "%.3fs", secs);
    std::cout << (check.ok() ? "PASS " : "FAIL ") << cr.name << " (" << timing << ")\n";
    for (const auto& f : check.failures()) std::cout << "    " << f << "\n";
    if (!check.ok()) ++failed;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
