#pragma once

#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <vector>

#include "socialveil/barrier.hpp"
#include "socialveil/core.hpp"
#include "socialveil/evaluator.hpp"
#include "socialveil/json_io.hpp"
#include "socialveil/stats.hpp"

namespace socialveil {

// Carries the HTTP status the server should answer with.
class AnnotationError : public Error {
 public:
  AnnotationError(int status, const std::string& what) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

struct AnnotationRecord {
  std::string episode_id;
  std::string annotator_id;
  std::string barrier_label;  // semantic / cultural / emotional / none
  int confusion = 0;          // 1..5, 5 = no confusion
  int mutual = 0;             // 1..5
  std::string submitted_at;   // ISO 8601 UTC
  double duration = 0.0;      // seconds

  bool operator==(const AnnotationRecord&) const = default;
};

void to_json(Json& j, const AnnotationRecord& v);
void from_json(const Json& j, AnnotationRecord& v);

ValidationResult validate_record(const AnnotationRecord& r);

struct AssignmentPlan {
  int coverage = 3;
  std::vector<std::string> annotators;
  std::chrono::seconds lease{30 * 60};

  ValidationResult validate() const;
};

// One annotatable episode. The judge report is optional and only feeds the
// human-vs-judge alignment.
struct AnnotationItem {
  Episode episode;
  Transcript transcript;
  std::optional<EvaluationReport> judge;
};

// Append-only NDJSON log; each append is flushed to disk before returning.
class AnnotationLog {
 public:
  explicit AnnotationLog(std::filesystem::path path);

  // Records already on disk, in append order.
  std::vector<AnnotationRecord> load() const;
  void append(const AnnotationRecord& r);
  std::string raw() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

struct NextTask {
  enum class Kind { kTask, kWait, kDone };
  Kind kind = Kind::kDone;
  Json payload;  // task only
};

std::string_view to_string(NextTask::Kind k);

struct IccSummary {
  IccResult result;
  std::optional<std::string> error;
};

struct AgreementReport {
  size_t included = 0;
  size_t excluded = 0;
  int coverage = 0;
  std::vector<std::string> episode_ids;  // included, service order
  // Matrices extracted from the included episodes.
  std::vector<std::vector<int>> label_counts;  // columns: semantic cultural emotional none
  std::vector<std::vector<double>> confusion;
  std::vector<std::vector<double>> mutual;
  std::optional<double> fleiss_kappa;
  std::optional<IccResult> icc_confusion;
  std::optional<IccResult> icc_mutual;
  std::optional<AccuracyReport> accuracy;
  std::optional<PearsonResult> alignment_confusion;
  std::optional<PearsonResult> alignment_mutual;
  size_t alignment_pairs = 0;
  std::vector<std::string> diagnostics;
};

Json agreement_to_json(const AgreementReport& r);

// Fixed category order for the label count matrix.
const std::vector<std::string>& annotation_labels();

class AnnotationService {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  // Replays `data_dir/annotations.ndjson` when it exists.
  AnnotationService(std::vector<AnnotationItem> items, AssignmentPlan plan, Taxonomy taxonomy,
                    std::filesystem::path data_dir, Clock clock = {},
                    BootstrapOptions bootstrap = {});

  // Throws AnnotationError(404) for an unknown annotator. Re-requesting
  // while holding a lease returns the same episode.
  NextTask next_task(const std::string& annotator_id);

  // Stores the record (episode_id may be the blinded id from the payload)
  // and returns it as stored. Errors: 400 invalid, 404 unknown annotator or
  // episode, 409 duplicate / missing or expired lease.
  AnnotationRecord submit(AnnotationRecord record);

  AgreementReport agreement_report() const;
  std::string export_log() const;
  Json definitions_panel() const;
  Json health() const;

  // Annotator-facing payload for one item.
  Json payload_for(size_t item_index) const;
  std::string blinded_id(const std::string& episode_id) const;

  size_t coverage_of(const std::string& episode_id) const;
  std::vector<AnnotationRecord> records() const;

 private:
  struct Lease {
    std::string annotator;
    std::chrono::system_clock::time_point expires;
  };

  std::optional<size_t> index_of(const std::string& id) const;
  void expire_leases(std::chrono::system_clock::time_point now);
  std::string timestamp(std::chrono::system_clock::time_point t) const;

  std::vector<AnnotationItem> items_;
  AssignmentPlan plan_;
  Taxonomy taxonomy_;
  AnnotationLog log_;
  Clock clock_;
  BootstrapOptions bootstrap_;
  std::set<std::string> annotators_;
  std::map<std::string, size_t> by_id_;
  std::map<std::string, size_t> by_blinded_;

  mutable std::shared_mutex mu_;
  std::vector<AnnotationRecord> records_;
  std::vector<std::set<std::string>> done_;  // per item: annotators who submitted
  std::map<size_t, Lease> leases_;
};

}  // namespace socialveil
