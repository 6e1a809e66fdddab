#include "socialveil/annotation.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <ctime>
#include <fstream>
#include <mutex>
#include <sstream>

#include "socialveil/errors.hpp"
#include "socialveil/resources.hpp"
#include "socialveil/text.hpp"

namespace socialveil {

void to_json(Json& j, const AnnotationRecord& v) {
  j = Json::object();
  j["episode_id"] = v.episode_id;
  j["annotator_id"] = v.annotator_id;
  j["barrier_label"] = v.barrier_label;
  j["confusion"] = v.confusion;
  j["mutual"] = v.mutual;
  j["submitted_at"] = v.submitted_at;
  j["duration"] = v.duration;
}

void from_json(const Json& j, AnnotationRecord& v) {
  v.episode_id = get_field<std::string>(j, "episode_id");
  v.annotator_id = get_field<std::string>(j, "annotator_id");
  v.barrier_label = get_field<std::string>(j, "barrier_label");
  v.confusion = get_field<int>(j, "confusion");
  v.mutual = get_field<int>(j, "mutual");
  v.submitted_at = get_field_or<std::string>(j, "submitted_at", "");
  v.duration = get_field_or<double>(j, "duration", 0.0);
}

const std::vector<std::string>& annotation_labels() {
  static const std::vector<std::string> kLabels = {"semantic", "cultural", "emotional", "none"};
  return kLabels;
}

ValidationResult validate_record(const AnnotationRecord& r) {
  ValidationResult v;
  if (r.episode_id.empty()) v.violations.push_back({"episode_id", "must be nonempty"});
  if (r.annotator_id.empty()) v.violations.push_back({"annotator_id", "must be nonempty"});
  const auto& labels = annotation_labels();
  if (std::find(labels.begin(), labels.end(), r.barrier_label) == labels.end()) {
    v.violations.push_back({"barrier_label", "must be semantic, cultural, emotional or none"});
  }
  if (r.confusion < 1 || r.confusion > 5) v.violations.push_back({"confusion", "must lie in 1..5"});
  if (r.mutual < 1 || r.mutual > 5) v.violations.push_back({"mutual", "must lie in 1..5"});
  if (!(r.duration >= 0.0)) v.violations.push_back({"duration", "must be >= 0"});
  return v;
}

ValidationResult AssignmentPlan::validate() const {
  ValidationResult v;
  if (coverage < 1) v.violations.push_back({"coverage", "must be >= 1"});
  std::set<std::string> unique(annotators.begin(), annotators.end());
  if (unique.size() != annotators.size()) {
    v.violations.push_back({"annotators", "must be unique"});
  }
  if (unique.count("")) v.violations.push_back({"annotators", "ids must be nonempty"});
  if (coverage > static_cast<int>(annotators.size())) {
    v.violations.push_back({"coverage", "exceeds the annotator pool"});
  }
  if (lease.count() <= 0) v.violations.push_back({"lease", "must be positive"});
  return v;
}

AnnotationLog::AnnotationLog(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

std::vector<AnnotationRecord> AnnotationLog::load() const {
  std::vector<AnnotationRecord> out;
  if (!std::filesystem::exists(path_)) return out;
  std::string text = read_file(path_);
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  size_t consumed = 0;
  while (std::getline(in, line)) {
    ++lineno;
    consumed += line.size() + 1;
    if (trim(line).empty()) continue;
    // A torn final write has no trailing newline; it was never acknowledged.
    if (consumed > text.size()) break;
    try {
      out.push_back(parse_json(line, path_.string()).get<AnnotationRecord>());
    } catch (const std::exception& e) {
      throw InputError(path_.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void AnnotationLog::append(const AnnotationRecord& r) {
  std::string line = Json(r).dump() + "\n";
  int fd = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND, 0644);
  if (fd < 0) throw Error("cannot open " + path_.string() + ": " + std::strerror(errno));
  const char* p = line.data();
  size_t left = line.size();
  while (left > 0) {
    ssize_t n = ::write(fd, p, left);
    if (n < 0) {
      if (errno == EINTR) continue;
      int err = errno;
      ::close(fd);
      throw Error("write to " + path_.string() + " failed: " + std::strerror(err));
    }
    p += n;
    left -= static_cast<size_t>(n);
  }
  if (::fsync(fd) != 0) {
    int err = errno;
    ::close(fd);
    throw Error("fsync of " + path_.string() + " failed: " + std::strerror(err));
  }
  ::close(fd);
}

std::string AnnotationLog::raw() const {
  return std::filesystem::exists(path_) ? read_file(path_) : std::string();
}

std::string_view to_string(NextTask::Kind k) {
  switch (k) {
    case NextTask::Kind::kTask: return "task";
    case NextTask::Kind::kWait: return "wait";
    case NextTask::Kind::kDone: return "done";
  }
  return "done";
}

AnnotationService::AnnotationService(std::vector<AnnotationItem> items, AssignmentPlan plan,
                                     Taxonomy taxonomy, std::filesystem::path data_dir,
                                     Clock clock, BootstrapOptions bootstrap)
    : items_(std::move(items)),
      plan_(std::move(plan)),
      taxonomy_(std::move(taxonomy)),
      log_(data_dir / "annotations.ndjson"),
      clock_(clock ? std::move(clock) : Clock([] { return std::chrono::system_clock::now(); })),
      bootstrap_(bootstrap) {
  ValidationResult v = plan_.validate();
  if (!v.ok()) throw InputError("invalid assignment plan: " + v.first());
  annotators_.insert(plan_.annotators.begin(), plan_.annotators.end());
  for (size_t i = 0; i < items_.size(); ++i) {
    const auto& item = items_[i];
    if (item.transcript.episode_id != item.episode.id) {
      throw InputError("annotation item " + item.episode.id + " has a transcript for " +
                       item.transcript.episode_id);
    }
    if (!by_id_.emplace(item.episode.id, i).second) {
      throw InputError("duplicate annotation item " + item.episode.id);
    }
    by_blinded_.emplace(blinded_id(item.episode.id), i);
  }
  done_.resize(items_.size());
  for (auto& r : log_.load()) {
    auto idx = index_of(r.episode_id);
    if (idx && annotators_.count(r.annotator_id)) done_[*idx].insert(r.annotator_id);
    records_.push_back(std::move(r));
  }
}

std::string AnnotationService::blinded_id(const std::string& episode_id) const {
  return "ep-" + sha256_hex("annotation-task:" + episode_id).substr(0, 12);
}

std::optional<size_t> AnnotationService::index_of(const std::string& id) const {
  if (auto it = by_id_.find(id); it != by_id_.end()) return it->second;
  if (auto it = by_blinded_.find(id); it != by_blinded_.end()) return it->second;
  return std::nullopt;
}

void AnnotationService::expire_leases(std::chrono::system_clock::time_point now) {
  for (auto it = leases_.begin(); it != leases_.end();) {
    if (it->second.expires <= now) {
      it = leases_.erase(it);
    } else {
      ++it;
    }
  }
}

std::string AnnotationService::timestamp(std::chrono::system_clock::time_point t) const {
  std::time_t secs = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

Json AnnotationService::definitions_panel() const {
  Json panel = Json::array();
  for (BarrierType b : kBarrierTypes) {
    auto it = taxonomy_.definitions.find(b);
    if (it == taxonomy_.definitions.end()) continue;
    panel.push_back(Json{{"label", it->second.label},
                         {"definition", it->second.definition},
                         {"real_world_example", it->second.real_world_example}});
  }
  panel.push_back(Json{{"label", "none"},
                       {"definition", "No communication barrier: both speakers express "
                                      "themselves directly and clearly."},
                       {"real_world_example", ""}});
  return panel;
}

Json AnnotationService::payload_for(size_t item_index) const {
  const AnnotationItem& item = items_.at(item_index);
  const Episode& e = item.episode;

  // Dialogue text can echo hidden material; it never reaches annotators.
  std::vector<std::string> hidden;
  for (const std::string* s :
       {&e.barrier_agent.private_knowledge, &e.partner_agent.private_knowledge,
        &e.barrier_goal.goal, &e.partner_goal.goal, &e.barrier.style_prompt}) {
    if (!trim(*s).empty()) hidden.push_back(*s);
  }
  auto redact = [&](std::string text) {
    for (const auto& h : hidden) {
      for (size_t pos = text.find(h); pos != std::string::npos; pos = text.find(h, pos)) {
        text.replace(pos, h.size(), "[withheld]");
        pos += 10;
      }
    }
    return text;
  };

  Json agents = Json::array();
  std::vector<const AgentProfile*> profiles = {&e.barrier_agent, &e.partner_agent};
  std::sort(profiles.begin(), profiles.end(),
            [](const AgentProfile* a, const AgentProfile* b) { return a->name < b->name; });
  for (const AgentProfile* p : profiles) {
    agents.push_back(Json{{"name", p->name},
                          {"age", p->age},
                          {"gender", p->gender},
                          {"occupation", p->occupation},
                          {"public_info", redact(p->public_info)}});
  }

  Json turns = Json::array();
  std::vector<std::string> lines;
  for (const Turn& t : item.transcript.turns) {
    const std::string& speaker = e.profile(t.role).name;
    std::string arg = redact(t.action.argument);
    turns.push_back(Json{{"index", t.index},
                         {"speaker", speaker},
                         {"action_type", to_string(t.action.action_type)},
                         {"argument", arg}});
    lines.push_back("Turn #" + std::to_string(t.index) + " — " + speaker + " [" +
                    std::string(to_string(t.action.action_type)) + "]: " + arg);
  }
  std::string footer =
      "[Conversation ended: " + std::string(to_string(item.transcript.termination)) + "]";

  Json p = Json::object();
  p["episode_id"] = blinded_id(e.id);
  p["scenario"] = redact(e.scenario.public_description());
  p["agents"] = std::move(agents);
  p["transcript"] = Json{{"turns", std::move(turns)}, {"text", join(lines, "\n")},
                         {"footer", footer}};
  p["definitions"] = definitions_panel();
  p["labels"] = annotation_labels();
  return p;
}

NextTask AnnotationService::next_task(const std::string& annotator_id) {
  if (!annotators_.count(annotator_id)) {
    throw AnnotationError(404, "unknown annotator '" + annotator_id + "'");
  }
  std::unique_lock lock(mu_);
  auto now = clock_();
  expire_leases(now);

  std::optional<size_t> chosen;
  for (const auto& [idx, lease] : leases_) {
    if (lease.annotator == annotator_id) chosen = idx;
  }
  bool waiting = false;
  if (!chosen) {
    for (size_t i = 0; i < items_.size(); ++i) {
      if (done_[i].count(annotator_id)) continue;
      if (static_cast<int>(done_[i].size()) >= plan_.coverage) continue;
      if (leases_.count(i)) {
        waiting = true;
        continue;
      }
      if (!chosen || done_[i].size() < done_[*chosen].size()) chosen = i;
    }
    if (chosen) leases_[*chosen] = Lease{annotator_id, now + plan_.lease};
  }
  NextTask task;
  if (!chosen) {
    task.kind = waiting ? NextTask::Kind::kWait : NextTask::Kind::kDone;
    return task;
  }
  task.kind = NextTask::Kind::kTask;
  task.payload = payload_for(*chosen);
  size_t completed = 0;
  for (const auto& d : done_) completed += d.count(annotator_id);
  task.payload["progress"] = Json{{"completed", completed}, {"episodes", items_.size()}};
  task.payload["lease_expires_at"] = timestamp(leases_.at(*chosen).expires);
  return task;
}

AnnotationRecord AnnotationService::submit(AnnotationRecord record) {
  ValidationResult v = validate_record(record);
  if (!v.ok()) throw AnnotationError(400, "invalid annotation: " + v.first());
  if (!annotators_.count(record.annotator_id)) {
    throw AnnotationError(404, "unknown annotator '" + record.annotator_id + "'");
  }
  auto idx = index_of(record.episode_id);
  if (!idx) throw AnnotationError(404, "unknown episode '" + record.episode_id + "'");

  std::unique_lock lock(mu_);
  auto now = clock_();
  if (done_[*idx].count(record.annotator_id)) {
    throw AnnotationError(409, "annotator " + record.annotator_id +
                                   " already annotated this episode");
  }
  auto it = leases_.find(*idx);
  if (it == leases_.end() || it->second.annotator != record.annotator_id) {
    throw AnnotationError(409, "annotator " + record.annotator_id +
                                   " holds no lease on this episode");
  }
  if (it->second.expires <= now) {
    leases_.erase(it);
    throw AnnotationError(409, "lease expired");
  }
  record.episode_id = items_[*idx].episode.id;
  if (record.submitted_at.empty()) record.submitted_at = timestamp(now);
  log_.append(record);
  records_.push_back(record);
  done_[*idx].insert(record.annotator_id);
  leases_.erase(*idx);
  return record;
}

size_t AnnotationService::coverage_of(const std::string& episode_id) const {
  auto idx = index_of(episode_id);
  if (!idx) throw AnnotationError(404, "unknown episode '" + episode_id + "'");
  std::shared_lock lock(mu_);
  return done_[*idx].size();
}

std::vector<AnnotationRecord> AnnotationService::records() const {
  std::shared_lock lock(mu_);
  return records_;
}

std::string AnnotationService::export_log() const {
  std::shared_lock lock(mu_);
  return log_.raw();
}

Json AnnotationService::health() const {
  std::shared_lock lock(mu_);
  return Json{{"status", "ok"},
              {"episodes", items_.size()},
              {"annotators", annotators_.size()},
              {"records", records_.size()},
              {"coverage", plan_.coverage}};
}

AgreementReport AnnotationService::agreement_report() const {
  std::shared_lock lock(mu_);
  AgreementReport rep;
  rep.coverage = plan_.coverage;

  std::vector<std::vector<const AnnotationRecord*>> per_item(items_.size());
  for (const auto& r : records_) {
    auto idx = index_of(r.episode_id);
    if (!idx || !annotators_.count(r.annotator_id)) continue;
    auto& list = per_item[*idx];
    bool dup = std::any_of(list.begin(), list.end(), [&](const AnnotationRecord* o) {
      return o->annotator_id == r.annotator_id;
    });
    if (!dup) list.push_back(&r);
  }

  const auto& labels = annotation_labels();
  std::vector<LabeledPrediction> predictions;
  std::vector<double> human_conf, judge_conf, human_mut, judge_mut;
  for (size_t i = 0; i < items_.size(); ++i) {
    const auto& list = per_item[i];
    if (static_cast<int>(list.size()) < plan_.coverage) {
      ++rep.excluded;
      continue;
    }
    ++rep.included;
    const AnnotationItem& item = items_[i];
    rep.episode_ids.push_back(item.episode.id);
    std::vector<int> counts(labels.size(), 0);
    std::vector<double> conf, mut;
    for (int k = 0; k < plan_.coverage; ++k) {
      const AnnotationRecord& r = *list[static_cast<size_t>(k)];
      counts[static_cast<size_t>(
          std::find(labels.begin(), labels.end(), r.barrier_label) - labels.begin())]++;
      conf.push_back(r.confusion);
      mut.push_back(r.mutual);
      predictions.push_back(
          {item.episode.scenario.id, item.episode.barrier.barrier_type, r.barrier_label});
    }
    if (item.judge) {
      human_conf.push_back(mean(conf));
      human_mut.push_back(mean(mut));
      judge_conf.push_back(item.judge->barrier_aware.unresolved_confusion.score);
      judge_mut.push_back(item.judge->barrier_aware.mutual_understanding.score);
    }
    rep.label_counts.push_back(std::move(counts));
    rep.confusion.push_back(std::move(conf));
    rep.mutual.push_back(std::move(mut));
  }
  if (rep.excluded > 0) {
    rep.diagnostics.push_back(std::to_string(rep.excluded) +
                              " episode(s) below the coverage target were excluded");
  }
  if (rep.included == 0) {
    rep.diagnostics.push_back("no episode has reached the coverage target of " +
                              std::to_string(plan_.coverage));
    return rep;
  }

  auto attempt = [&](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      rep.diagnostics.push_back(std::string(what) + ": " + e.what());
    }
  };
  attempt("fleiss_kappa", [&] { rep.fleiss_kappa = fleiss_kappa(rep.label_counts); });
  attempt("icc_confusion", [&] { rep.icc_confusion = icc_1k(rep.confusion); });
  attempt("icc_mutual", [&] { rep.icc_mutual = icc_1k(rep.mutual); });
  attempt("label_accuracy", [&] { rep.accuracy = label_accuracy(predictions, bootstrap_); });
  rep.alignment_pairs = human_conf.size();
  attempt("alignment_confusion",
          [&] { rep.alignment_confusion = pearson_r(human_conf, judge_conf); });
  attempt("alignment_mutual", [&] { rep.alignment_mutual = pearson_r(human_mut, judge_mut); });
  return rep;
}

namespace {

Json icc_json(const std::optional<IccResult>& r) {
  if (!r) return nullptr;
  return Json{{"icc", r->icc},       {"F", std::isinf(r->f) ? Json(nullptr) : Json(r->f)},
              {"df1", r->df1},       {"df2", r->df2},
              {"msb", r->msb},       {"msw", r->msw},
              {"ci_low", r->ci_low}, {"ci_high", r->ci_high}};
}

Json pearson_json(const std::optional<PearsonResult>& r) {
  if (!r) return nullptr;
  return Json{{"r", r->r}, {"p", r->p}, {"ci_low", r->ci_low}, {"ci_high", r->ci_high},
              {"n", r->n}};
}

Json accuracy_json(const AccuracyEstimate& a) {
  Json j{{"accuracy", a.accuracy}, {"n", a.count}, {"scenarios", a.scenarios}};
  if (a.ci) {
    j["ci_low"] = a.ci->ci_low;
    j["ci_high"] = a.ci->ci_high;
    j["resamples"] = a.ci->resamples;
  } else {
    j["ci_low"] = nullptr;
    j["ci_high"] = nullptr;
  }
  return j;
}

}  // namespace

Json agreement_to_json(const AgreementReport& r) {
  Json j = Json::object();
  j["coverage"] = r.coverage;
  j["included_episodes"] = r.included;
  j["excluded_episodes"] = r.excluded;
  j["fleiss_kappa"] = r.fleiss_kappa ? Json(*r.fleiss_kappa) : Json(nullptr);
  j["icc_confusion"] = icc_json(r.icc_confusion);
  j["icc_mutual"] = icc_json(r.icc_mutual);
  if (r.accuracy) {
    Json per = Json::object();
    for (const auto& [type, est] : r.accuracy->per_type) {
      per[annotation_label(type)] = accuracy_json(est);
    }
    j["accuracy"] = Json{{"overall", accuracy_json(r.accuracy->overall)}, {"per_type", per}};
  } else {
    j["accuracy"] = nullptr;
  }
  j["alignment"] = Json{{"pairs", r.alignment_pairs},
                        {"confusion", pearson_json(r.alignment_confusion)},
                        {"mutual", pearson_json(r.alignment_mutual)}};
  j["diagnostics"] = r.diagnostics;
  return j;
}

}  // namespace socialveil
