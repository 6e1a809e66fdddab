#include "socialveil/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "socialveil/annotation.hpp"
#include "socialveil/annotation_server.hpp"
#include "socialveil/errors.hpp"
#include "socialveil/evaluator.hpp"
#include "socialveil/linguistics.hpp"
#include "socialveil/resources.hpp"
#include "socialveil/stats.hpp"
#include "socialveil/text.hpp"

namespace fs = std::filesystem;

namespace socialveil {

void to_json(Json& j, const Pairing& v) {
  j = Json::object();
  j["id"] = v.id;
  j["scenario_id"] = v.scenario_id;
  j["barrier_agent"] = v.barrier_agent;
  j["partner_agent"] = v.partner_agent;
  j["barrier_goal"] = v.barrier_goal;
  j["partner_goal"] = v.partner_goal;
  j["first_speaker"] = to_string(v.first_speaker);
  j["max_turns"] = v.max_turns;
}

void from_json(const Json& j, Pairing& v) {
  v.id = get_field<std::string>(j, "id");
  v.scenario_id = get_field<std::string>(j, "scenario_id");
  v.barrier_agent = get_field<std::string>(j, "barrier_agent");
  v.partner_agent = get_field<std::string>(j, "partner_agent");
  v.barrier_goal = get_field<SocialGoal>(j, "barrier_goal");
  v.partner_goal = get_field<SocialGoal>(j, "partner_goal");
  v.first_speaker = parse_role(get_field_or<std::string>(j, "first_speaker", "partner"));
  v.max_turns = get_field_or<int>(j, "max_turns", 20);
}

std::string RunConfig::config_hash() const { return sha256_hex(effective.dump()); }

const BackendConfig& RunConfig::backend(const std::string& role) const {
  auto it = backends.find(role);
  if (it == backends.end()) throw InputError("config has no '" + role + "' backend");
  return it->second;
}

namespace {

fs::path resolve_path(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

RunConfig load_run_config(const fs::path& path) {
  if (!fs::exists(path)) throw InputError("config file not found: " + path.string());
  Json j = parse_json(read_file(path), path.string());
  if (!j.is_object()) throw InputError(path.string() + ": config must be a JSON object");
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  RunConfig cfg;
  cfg.effective = j;
  try {
    cfg.scenarios = resolve_path(base, get_field<std::string>(j, "scenarios"));
    cfg.profiles = resolve_path(base, get_field<std::string>(j, "profiles"));
    cfg.goals = resolve_path(base, get_field<std::string>(j, "goals"));
    if (j.contains("taxonomy") && !j.at("taxonomy").is_null()) {
      cfg.taxonomy = resolve_path(base, get_field<std::string>(j, "taxonomy"));
    }
    if (j.contains("backends")) {
      for (const auto& [role, bj] : j.at("backends").items()) {
        cfg.backends.emplace(role, parse_backend_config(bj, base));
      }
    }
    cfg.simulation = parse_simulation_config(j.value("simulation", Json::object()));
    if (j.contains("simulation") && j.at("simulation").value("repair", false)) {
      cfg.simulation.repair = repair_fragment(builtin_repair_text());
    }
    cfg.filter = parse_filter_policy(j.value("filter", Json::object()));
    cfg.out = resolve_path(base, get_field_or<std::string>(j, "out", "out"));
    cfg.seed = get_field_or<std::uint64_t>(j, "seed", 0);
    cfg.simulation.random_seed = cfg.seed;
  } catch (const InputError& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return cfg;
}

std::vector<Episode> build_episodes(const std::vector<Scenario>& scenarios,
                                    const std::vector<AgentProfile>& profiles,
                                    const std::vector<Pairing>& pairings, BarrierType condition,
                                    const Taxonomy& taxonomy) {
  std::map<std::string, const Scenario*> sc;
  for (const auto& s : scenarios) {
    if (!sc.emplace(s.id, &s).second) throw InputError("duplicate scenario id " + s.id);
  }
  std::map<std::string, const AgentProfile*> pr;
  for (const auto& p : profiles) {
    if (!pr.emplace(p.name, &p).second) throw InputError("duplicate profile name " + p.name);
  }
  std::vector<Episode> out;
  std::set<std::string> ids;
  for (const auto& p : pairings) {
    auto s = sc.find(p.scenario_id);
    if (s == sc.end()) throw InputError("pairing " + p.id + ": unknown scenario " + p.scenario_id);
    auto b = pr.find(p.barrier_agent);
    if (b == pr.end()) throw InputError("pairing " + p.id + ": unknown profile " + p.barrier_agent);
    auto q = pr.find(p.partner_agent);
    if (q == pr.end()) throw InputError("pairing " + p.id + ": unknown profile " + p.partner_agent);
    Episode e;
    e.id = p.id + "-" + std::string(condition_name(condition));
    if (!ids.insert(e.id).second) throw InputError("duplicate pairing id " + p.id);
    e.scenario = *s->second;
    e.barrier_agent = *b->second;
    e.partner_agent = *q->second;
    e.barrier_goal = p.barrier_goal;
    e.partner_goal = p.partner_goal;
    e.barrier = taxonomy.spec_for(condition);
    e.first_speaker = p.first_speaker;
    e.max_turns = p.max_turns;
    ValidationResult v = validate_episode(e);
    if (!v.ok()) throw InputError("episode " + e.id + " is invalid: " + v.first());
    out.push_back(std::move(e));
  }
  return out;
}

namespace {

struct Failure {
  int code;
  std::string message;
};

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::string fmt(double v, int digits = 6) {
  if (!std::isfinite(v)) return "";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void write_json(const fs::path& p, const Json& j) { write_text_file(p, j.dump(2) + "\n"); }

// Options shared by every subcommand.
struct Options {
  std::string config;
  std::string condition = "all";
  std::string split;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<int> parallelism;
  std::string taxonomy;
  bool repair = false;
  int port = 8080;
  std::string data_dir;
  int coverage = 3;
  std::string annotators;
  std::string host = "127.0.0.1";
  int round = 1;
  std::string signature_role = "barrier";
  std::string correlation_role = "both";
};

class Pipeline {
 public:
  Pipeline(const Options& opt, std::ostream& out, std::ostream& err)
      : opt_(opt), out_(out), err_(err) {
    if (opt.config.empty()) throw InputError("--config is required");
    cfg_ = load_run_config(opt.config);
    Json overrides = Json::object();
    if (!opt.out.empty()) {
      cfg_.out = opt.out;
      overrides["out"] = opt.out;
    }
    if (opt.seed) {
      cfg_.seed = *opt.seed;
      cfg_.simulation.random_seed = *opt.seed;
      overrides["seed"] = *opt.seed;
    }
    if (opt.parallelism) {
      if (*opt.parallelism < 1) throw InputError("--parallelism must be >= 1");
      cfg_.simulation.parallelism = *opt.parallelism;
      overrides["parallelism"] = *opt.parallelism;
    }
    if (!opt.taxonomy.empty()) {
      cfg_.taxonomy = opt.taxonomy;
      overrides["taxonomy"] = opt.taxonomy;
    }
    if (opt.repair) {
      cfg_.simulation.repair = repair_fragment(builtin_repair_text());
      overrides["repair"] = true;
    }
    if (!overrides.empty()) cfg_.effective["cli_overrides"] = overrides;
    taxonomy_ = cfg_.taxonomy ? load_taxonomy(*cfg_.taxonomy) : builtin_taxonomy();
  }

  int neutralize();
  int simulate();
  int evaluate();
  int analyze();
  int export_bc();
  int sr_round();
  int serve_annotation();
  int report();

 private:
  fs::path runs_dir() const { return cfg_.out / "runs"; }
  std::string run_name(BarrierType c, bool repair) const {
    return std::string(condition_name(c)) + (repair ? "+repair" : "");
  }
  std::vector<BarrierType> conditions() const;
  // Existing run directories selected by --condition/--repair.
  std::vector<fs::path> selected_runs() const;
  std::vector<Scenario> scenarios() const;
  std::vector<Episode> episodes_for(BarrierType c) const;
  Json manifest_base() const;

  const Options& opt_;
  std::ostream& out_;
  std::ostream& err_;
  RunConfig cfg_;
  Taxonomy taxonomy_;
};

std::vector<BarrierType> Pipeline::conditions() const {
  if (opt_.condition == "all") {
    return {BarrierType::kNone, BarrierType::kSemantic, BarrierType::kSociocultural,
            BarrierType::kEmotional};
  }
  std::vector<BarrierType> out;
  std::stringstream ss(opt_.condition);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_condition(trim(item)));
  return out;
}

std::vector<fs::path> Pipeline::selected_runs() const {
  std::vector<fs::path> out;
  if (!fs::exists(runs_dir())) return out;
  if (opt_.condition == "all") {
    for (const auto& entry : fs::directory_iterator(runs_dir())) {
      if (entry.is_directory()) out.push_back(entry.path());
    }
    std::sort(out.begin(), out.end());
    return out;
  }
  for (BarrierType c : conditions()) out.push_back(runs_dir() / run_name(c, opt_.repair));
  return out;
}

std::vector<Scenario> Pipeline::scenarios() const {
  fs::path neutral = cfg_.out / "scenarios.neutral.ndjson";
  return read_ndjson<Scenario>(fs::exists(neutral) ? neutral : cfg_.scenarios);
}

std::vector<Episode> Pipeline::episodes_for(BarrierType c) const {
  return build_episodes(scenarios(), read_ndjson<AgentProfile>(cfg_.profiles),
                        read_ndjson<Pairing>(cfg_.goals), c, taxonomy_);
}

Json Pipeline::manifest_base() const {
  Json m = Json::object();
  m["config_hash"] = cfg_.config_hash();
  m["seed"] = cfg_.seed;
  m["tool_version"] = tool_version();
  return m;
}

int Pipeline::neutralize() {
  auto rewriter = make_backend(cfg_.backend("rewriter"));
  std::vector<Scenario> input = read_ndjson<Scenario>(cfg_.scenarios);
  std::vector<Scenario> output;
  Json entries = Json::array();
  size_t review = 0;
  for (const auto& s : input) {
    NeutralizeResult r = neutralize_scenario(s, *rewriter);
    review += r.needs_review;
    entries.push_back(Json{{"scenario_id", s.id},
                           {"retry_count", r.retry_count},
                           {"needs_review", r.needs_review},
                           {"last_output", r.last_output}});
    output.push_back(std::move(r.scenario));
  }
  write_ndjson(cfg_.out / "scenarios.neutral.ndjson", output);
  Json m = manifest_base();
  m["rewriter"] = rewriter->id();
  m["scenarios"] = std::move(entries);
  m["needs_review"] = review;
  write_json(cfg_.out / "neutralize" / "manifest.json", m);
  out_ << "neutralized " << input.size() - review << " of " << input.size() << " scenarios";
  if (review) out_ << " (" << review << " need review)";
  out_ << "\n";
  return 0;
}

int Pipeline::simulate() {
  BackendPair backends{make_backend(cfg_.backend("barrier")),
                       make_backend(cfg_.backend("partner"))};
  for (BarrierType c : conditions()) {
    const std::string name = run_name(c, cfg_.simulation.repair.has_value());
    std::vector<Episode> episodes = episodes_for(c);
    BatchResult batch = run_batch(episodes, backends, cfg_.simulation);
    fs::path dir = runs_dir() / name;
    write_ndjson(dir / "episodes.ndjson", episodes);
    write_ndjson(dir / "transcripts.ndjson", batch.transcripts);
    std::string failures;
    for (const auto& f : batch.failures) {
      Json j{{"index", f.index}, {"episode_id", f.episode_id}, {"message", f.message}};
      j["partial"] = f.partial ? Json(*f.partial) : Json(nullptr);
      failures += j.dump() + "\n";
    }
    write_text_file(dir / "failures.ndjson", failures);
    Json m = manifest_base();
    m["condition"] = name;
    m["partner_model_id"] = cfg_.backend("partner").model_id;
    m["simulation"] = simulation_config_to_json(cfg_.simulation);
    m["run"] = manifest_to_json(batch.manifest);
    write_json(dir / "manifest.json", m);
    out_ << name << ": " << batch.transcripts.size() << " transcripts, "
         << batch.failures.size() << " failures -> " << (dir / "transcripts.ndjson").string()
         << "\n";
  }
  return 0;
}

int Pipeline::evaluate() {
  auto runs = selected_runs();
  if (runs.empty()) {
    err_ << "no transcripts found: " << runs_dir().string() << " does not exist or is empty\n";
    return 1;
  }
  for (const auto& dir : runs) {
    if (!fs::exists(dir / "transcripts.ndjson")) {
      err_ << "no transcripts at " << (dir / "transcripts.ndjson").string() << "\n";
      return 1;
    }
  }
  auto judge = make_backend(cfg_.backend("judge"));
  const std::string subject = cfg_.backend("partner").model_id;
  for (const auto& dir : runs) {
    auto transcripts = read_ndjson<Transcript>(dir / "transcripts.ndjson");
    auto episodes = read_ndjson<Episode>(dir / "episodes.ndjson");
    EvaluationBatch batch =
        evaluate_batch(transcripts, episodes, *judge, subject, cfg_.simulation.parallelism);
    const std::string name = dir.filename().string();
    for (auto& r : batch.reports) r.condition = name;
    write_ndjson(dir / "reports.ndjson", batch.reports);
    std::string failures;
    for (const auto& f : batch.failures) {
      failures += Json{{"episode_id", f.episode_id},
                       {"message", f.message},
                       {"raw_outputs", f.raw_outputs}}
                      .dump() +
                  "\n";
    }
    write_text_file(dir / "evaluation_failures.ndjson", failures);
    Json m = manifest_base();
    m["condition"] = name;
    m["judge"] = judge->id();
    m["rubric_version"] = rubric_version();
    m["reports"] = batch.reports.size();
    m["failures"] = batch.failures.size();
    write_json(dir / "evaluation_manifest.json", m);
    out_ << name << ": " << batch.reports.size() << " reports, " << batch.failures.size()
         << " evaluation failures\n";
  }
  return 0;
}

struct RunData {
  std::string name;
  std::vector<Episode> episodes;
  std::vector<Transcript> transcripts;
  std::vector<EvaluationReport> reports;
};

std::vector<RunData> load_runs(const std::vector<fs::path>& dirs, bool need_reports) {
  std::vector<RunData> out;
  for (const auto& dir : dirs) {
    RunData r;
    r.name = dir.filename().string();
    if (!fs::exists(dir / "transcripts.ndjson")) {
      throw InputError("no transcripts at " + (dir / "transcripts.ndjson").string());
    }
    r.episodes = read_ndjson<Episode>(dir / "episodes.ndjson");
    r.transcripts = read_ndjson<Transcript>(dir / "transcripts.ndjson");
    if (fs::exists(dir / "reports.ndjson")) {
      r.reports = read_ndjson<EvaluationReport>(dir / "reports.ndjson");
    } else if (need_reports) {
      throw InputError("no evaluation reports at " + (dir / "reports.ndjson").string() +
                       " (run evaluate first)");
    }
    out.push_back(std::move(r));
  }
  return out;
}

int Pipeline::report() {
  auto runs = selected_runs();
  if (runs.empty()) {
    err_ << "no runs found under " << runs_dir().string() << "\n";
    return 1;
  }
  std::vector<EvaluationReport> reports;
  for (auto& r : load_runs(runs, true)) {
    reports.insert(reports.end(), r.reports.begin(), r.reports.end());
  }
  if (reports.empty()) {
    err_ << "no evaluation reports under " << runs_dir().string() << "\n";
    return 1;
  }
  std::vector<Split> splits;
  if (opt_.split.empty()) {
    splits = {Split::kAll, Split::kHard};
  } else {
    splits = {parse_split(opt_.split)};
  }
  BootstrapOptions bo;
  bo.seed = cfg_.seed;
  bo.threads = cfg_.simulation.parallelism;
  std::vector<AggregateCell> cells;
  for (const auto& m : headline_metrics()) {
    auto part = aggregate_metric(reports, m, splits, bo);
    cells.insert(cells.end(), part.begin(), part.end());
  }
  ReportTable table = render_report_table(cells, headline_metrics());
  fs::path dir = cfg_.out / "report";
  write_text_file(dir / "table.txt", table.text);
  write_text_file(dir / "table.csv", table.csv);
  Json m = manifest_base();
  m["reports"] = reports.size();
  m["bootstrap_resamples"] = bo.resamples;
  m["metrics"] = headline_metrics();
  write_json(dir / "manifest.json", m);
  out_ << table.text;
  return 0;
}

int Pipeline::analyze() {
  auto runs = selected_runs();
  if (runs.empty()) {
    err_ << "no runs found under " << runs_dir().string() << "\n";
    return 1;
  }
  RoleFilter signature = parse_role_filter(opt_.signature_role);
  RoleFilter correlation = parse_role_filter(opt_.correlation_role);
  Lexicons lex = builtin_lexicons();
  std::string features_csv =
      "episode_id,condition,model,roles,token_count,reference_pronoun_rate,hedge_rate,"
      "sentiment_polarity,self_focus_rate\n";
  std::vector<EvaluationReport> reports;
  std::map<std::string, std::vector<EpisodeFeatures>> corr_features;  // per model
  std::map<std::string, std::vector<EvaluationReport>> corr_reports;
  for (auto& run : load_runs(runs, true)) {
    std::map<std::string, const EvaluationReport*> by_id;
    for (const auto& r : run.reports) by_id[r.episode_id] = &r;
    for (const auto& t : run.transcripts) {
      auto it = by_id.find(t.episode_id);
      if (it == by_id.end()) continue;
      const std::string& model = it->second->subject_model_id;
      LinguisticFeatures f = extract_features(t, signature, lex);
      features_csv += csv_field(t.episode_id) + "," + csv_field(run.name) + "," +
                      csv_field(model) + "," + opt_.signature_role + "," +
                      std::to_string(f.token_count) + "," + fmt(f.reference_pronoun_rate) + "," +
                      fmt(f.hedge_rate) + "," + fmt(f.sentiment_polarity) + "," +
                      fmt(f.self_focus_rate) + "\n";
      corr_features[model].push_back({t.episode_id, extract_features(t, correlation, lex)});
      corr_reports[model].push_back(*it->second);
    }
    reports.insert(reports.end(), run.reports.begin(), run.reports.end());
  }

  const auto& metrics = headline_metrics();
  std::string long_csv = "model,feature,metric,n,r,p,stars,note\n";
  std::string matrix_csv = "model,feature";
  for (const auto& m : metrics) matrix_csv += "," + m;
  matrix_csv += "\n";
  for (const auto& [model, feats] : corr_features) {
    auto cells = correlate_features_metrics(feats, corr_reports[model], metrics);
    std::map<std::string, std::map<std::string, std::string>> grid;
    for (const auto& c : cells) {
      long_csv += csv_field(model) + "," + c.feature + "," + c.metric + "," +
                  std::to_string(c.n) + "," + (c.sufficient ? fmt(c.r) : "") + "," +
                  (c.sufficient ? fmt(c.p) : "") + "," + c.stars + "," + csv_field(c.note) + "\n";
      grid[c.feature][c.metric] = c.sufficient ? fmt(c.r, 3) + c.stars : "NA";
    }
    for (const auto& f : feature_names()) {
      matrix_csv += csv_field(model) + "," + f;
      for (const auto& m : metrics) matrix_csv += "," + grid[f][m];
      matrix_csv += "\n";
    }
  }

  BootstrapOptions bo;
  bo.seed = cfg_.seed;
  bo.threads = cfg_.simulation.parallelism;
  BarrierEffectResult effects = barrier_effect(effect_observations(reports, metrics), bo);
  std::string effects_csv =
      "barrier,metric,deviation_pct,absolute,ci_low,ci_high,significant,cells,scenarios\n";
  for (const auto& e : effects.effects) {
    effects_csv += std::string(condition_name(e.barrier)) + "," + e.metric + "," +
                   fmt(e.deviation) + "," + fmt(e.absolute) + "," + fmt(e.ci_low) + "," +
                   fmt(e.ci_high) + "," + (e.significant ? "true" : "false") + "," +
                   std::to_string(e.cells) + "," + std::to_string(e.scenarios) + "\n";
  }

  fs::path dir = cfg_.out / "analysis";
  write_text_file(dir / "features.csv", features_csv);
  write_text_file(dir / "correlations.csv", matrix_csv);
  write_text_file(dir / "correlations_long.csv", long_csv);
  write_text_file(dir / "barrier_effects.csv", effects_csv);
  Json m = manifest_base();
  m["signature_roles"] = opt_.signature_role;
  m["correlation_roles"] = opt_.correlation_role;
  m["excluded_cells"] = effects.excluded_cells;
  m["warnings"] = effects.warnings;
  write_json(dir / "manifest.json", m);
  for (const auto& w : effects.warnings) err_ << "warning: " << w << "\n";
  out_ << "wrote " << dir.string() << "/{features,correlations,correlations_long,"
       << "barrier_effects}.csv\n";
  return 0;
}

int Pipeline::export_bc() {
  auto runs = selected_runs();
  if (runs.empty()) {
    err_ << "no runs found under " << runs_dir().string() << "\n";
    return 1;
  }
  std::vector<Episode> episodes;
  std::vector<Transcript> transcripts;
  std::vector<EvaluationReport> reports;
  for (auto& r : load_runs(runs, true)) {
    episodes.insert(episodes.end(), r.episodes.begin(), r.episodes.end());
    transcripts.insert(transcripts.end(), r.transcripts.begin(), r.transcripts.end());
    reports.insert(reports.end(), r.reports.begin(), r.reports.end());
  }
  Selection sel = filter_trajectories(transcripts, reports, cfg_.filter);
  fs::path dir = cfg_.out / "bc";
  Json selection = selection_manifest(sel, cfg_.filter);
  write_json(dir / "selection.json", selection);
  if (sel.selected.empty()) {
    err_ << "no trajectories passed the filter (see " << (dir / "selection.json").string()
         << ")\n";
    return 1;
  }
  auto examples = export_bc_dataset(sel.selected, transcripts, episodes, cfg_.simulation, "bc");
  write_ndjson(dir / "dataset.ndjson", examples);
  Json m = manifest_base();
  m["policy"] = filter_policy_to_json(cfg_.filter);
  m["selected"] = sel.selected.size();
  m["examples"] = examples.size();
  Json means = Json::object();
  for (const auto& [k, v] : metric_means(reports)) means[k] = v;
  m["source_means"] = means;
  write_json(dir / "manifest.json", m);
  out_ << "exported " << examples.size() << " examples from " << sel.selected.size()
       << " selected episodes -> " << (dir / "dataset.ndjson").string() << "\n";
  return 0;
}

int Pipeline::sr_round() {
  if (opt_.round < 1) throw InputError("--round must be >= 1");
  fs::path dataset = cfg_.out / "bc" / "dataset.ndjson";
  if (!fs::exists(dataset)) {
    err_ << "no demonstration set at " << dataset.string() << " (run export-bc first)\n";
    return 1;
  }
  DemonstrationSet d(read_ndjson<BCExample>(dataset));
  const std::string tag = source_round_name(opt_.round);
  for (const auto& ex : d.examples()) {
    if (ex.source_round == tag) {
      err_ << "round " << opt_.round << " is already recorded in " << dataset.string() << "\n";
      return 1;
    }
  }
  std::map<std::string, double> previous;
  fs::path prev_file = opt_.round == 1
                           ? cfg_.out / "bc" / "manifest.json"
                           : cfg_.out / "sr" / ("round_" + std::to_string(opt_.round - 1)) /
                                 "report.json";
  if (fs::exists(prev_file)) {
    Json pj = parse_json(read_file(prev_file), prev_file.string());
    const Json& means = opt_.round == 1 ? pj.value("source_means", Json::object())
                                        : pj.value("means", Json::object());
    for (const auto& [k, v] : means.items()) previous[k] = v.get<double>();
  }

  std::vector<Episode> episodes;
  for (BarrierType c : conditions()) {
    auto e = episodes_for(c);
    episodes.insert(episodes.end(), e.begin(), e.end());
  }
  SrRoundInputs in;
  in.round = opt_.round;
  in.barrier = make_backend(cfg_.backend("barrier"));
  in.trained_partner = make_backend(cfg_.backend("trained_partner"));
  in.judge = make_backend(cfg_.backend("judge"));
  in.policy = cfg_.filter;
  in.sim = cfg_.simulation;
  in.previous_means = previous;
  SrRoundResult res = run_sr_round(episodes, in, d);

  fs::path dir = cfg_.out / "sr" / ("round_" + std::to_string(opt_.round));
  write_ndjson(dir / "transcripts.ndjson", res.transcripts);
  write_ndjson(dir / "reports.ndjson", res.reports);
  write_json(dir / "selection.json", selection_manifest(res.selection, cfg_.filter));
  write_json(dir / "report.json", sr_round_report_to_json(res.report));
  Json m = manifest_base();
  m["round"] = opt_.round;
  m["policy"] = filter_policy_to_json(cfg_.filter);
  write_json(dir / "manifest.json", m);
  write_ndjson(dataset, d.examples());
  out_ << tag << ": " << res.report.transcripts << " transcripts, " << res.report.selected
       << " selected, " << res.report.examples_added << " examples added ("
       << res.report.demonstrations_total << " total)\n";
  return 0;
}

int Pipeline::serve_annotation() {
  auto runs = selected_runs();
  if (runs.empty()) {
    err_ << "no runs found under " << runs_dir().string() << "\n";
    return 1;
  }
  std::vector<AnnotationItem> items;
  for (auto& run : load_runs(runs, false)) {
    std::map<std::string, const Episode*> eps;
    for (const auto& e : run.episodes) eps[e.id] = &e;
    std::map<std::string, const EvaluationReport*> reps;
    for (const auto& r : run.reports) reps[r.episode_id] = &r;
    for (const auto& t : run.transcripts) {
      auto e = eps.find(t.episode_id);
      if (e == eps.end()) continue;
      AnnotationItem item{*e->second, t, std::nullopt};
      if (auto r = reps.find(t.episode_id); r != reps.end()) item.judge = *r->second;
      items.push_back(std::move(item));
    }
  }
  AssignmentPlan plan;
  plan.coverage = opt_.coverage;
  std::stringstream ss(opt_.annotators);
  std::string a;
  while (std::getline(ss, a, ',')) {
    if (!trim(a).empty()) plan.annotators.push_back(trim(a));
  }
  if (plan.annotators.empty()) throw InputError("--annotators must list at least one id");
  fs::path data_dir = opt_.data_dir.empty() ? cfg_.out / "annotation" : fs::path(opt_.data_dir);
  BootstrapOptions bo;
  bo.seed = cfg_.seed;
  AnnotationService service(std::move(items), plan, taxonomy_, data_dir, {}, bo);
  AnnotationServer server(service);
  out_ << "annotation service on http://" << opt_.host << ":" << opt_.port << " ("
       << service.health()["episodes"].get<size_t>() << " episodes, log "
       << (data_dir / "annotations.ndjson").string() << ")\n";
  out_.flush();
  if (!server.listen(opt_.host, opt_.port)) {
    err_ << "cannot listen on " << opt_.host << ":" << opt_.port << "\n";
    return 2;
  }
  return 0;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Barrier-aware social simulation harness", "socialveil"};
  app.set_version_flag("--version", tool_version());
  app.require_subcommand(1);
  Options opt;

  auto common = [&opt](CLI::App* sub) {
    sub->add_option("--config", opt.config, "run configuration JSON")->required();
    sub->add_option("--out", opt.out, "output directory (overrides the config)");
    sub->add_option("--seed", opt.seed, "random seed (overrides the config)");
    sub->add_option("--parallelism", opt.parallelism, "concurrent episodes / evaluations");
    sub->add_option("--taxonomy", opt.taxonomy, "barrier taxonomy JSON");
  };
  auto with_condition = [&opt](CLI::App* sub) {
    sub->add_option("--condition", opt.condition,
                    "baseline, semantic, sociocultural, emotional, a comma list, or all");
    sub->add_flag("--repair", opt.repair, "partner prompts carry the repair guidance");
  };

  CLI::App* neutralize = app.add_subcommand("neutralize", "rewrite scenario descriptions");
  common(neutralize);
  CLI::App* simulate = app.add_subcommand("simulate", "run episodes for a condition");
  common(simulate);
  with_condition(simulate);
  CLI::App* evaluate = app.add_subcommand("evaluate", "score stored transcripts with the judge");
  common(evaluate);
  with_condition(evaluate);
  CLI::App* analyze = app.add_subcommand("analyze", "linguistic features and barrier effects");
  common(analyze);
  with_condition(analyze);
  analyze->add_option("--signature-role", opt.signature_role, "barrier, partner or both");
  analyze->add_option("--correlation-role", opt.correlation_role, "barrier, partner or both");
  CLI::App* export_bc = app.add_subcommand("export-bc", "filter trajectories and export BC data");
  common(export_bc);
  with_condition(export_bc);
  CLI::App* sr = app.add_subcommand("sr-round", "one self-reinforcement round");
  common(sr);
  with_condition(sr);
  sr->add_option("--round", opt.round, "round number, starting at 1");
  CLI::App* serve = app.add_subcommand("serve-annotation", "human annotation service");
  common(serve);
  with_condition(serve);
  serve->add_option("--port", opt.port, "listen port");
  serve->add_option("--host", opt.host, "listen address");
  serve->add_option("--data-dir", opt.data_dir, "annotation log directory");
  serve->add_option("--coverage", opt.coverage, "annotators per episode");
  serve->add_option("--annotators", opt.annotators, "comma-separated annotator ids")->required();
  CLI::App* report = app.add_subcommand("report", "aggregate reports into tables");
  common(report);
  with_condition(report);
  report->add_option("--split", opt.split, "all or hard (default: both)")
      ->check(CLI::IsMember({"all", "hard"}));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << tool_version() << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    Pipeline p(opt, out, err);
    if (neutralize->parsed()) return p.neutralize();
    if (simulate->parsed()) return p.simulate();
    if (evaluate->parsed()) return p.evaluate();
    if (analyze->parsed()) return p.analyze();
    if (export_bc->parsed()) return p.export_bc();
    if (sr->parsed()) return p.sr_round();
    if (serve->parsed()) return p.serve_annotation();
    if (report->parsed()) return p.report();
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    err << "failed: " << e.what() << "\n";
    return 2;
  }
  return 1;
}

}  // namespace socialveil
