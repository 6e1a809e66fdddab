#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "socialveil/core.hpp"
#include "socialveil/errors.hpp"

namespace socialveil {

// Regularized incomplete beta I_x(a, b), continued fraction (Lentz).
double incomplete_beta(double a, double b, double x);
double f_cdf(double x, double df1, double df2);
// Inverse of f_cdf by bracketing bisection.
double f_quantile(double p, double df1, double df2);
// Two-sided p-value of a Student t statistic.
double t_two_sided_p(double t, double df);

// counts[i][j] = raters who put item i in category j. Rows must share the
// same total k >= 2 and there must be at least two items.
double fleiss_kappa(const std::vector<std::vector<int>>& counts);

struct IccResult {
  double icc = 0.0;
  double f = 0.0;
  int df1 = 0;
  int df2 = 0;
  double msb = 0.0;
  double msw = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
};

// One-way random effects, average of k raters: icc = 1 - 1/F.
// values[i] holds the k ratings of item i.
IccResult icc_1k(const std::vector<std::vector<double>>& values, double alpha = 0.05);
// The same formula driven by a reported F statistic.
IccResult icc_from_f(double f, int df1, int df2, double alpha = 0.05);

struct PearsonResult {
  double r = 0.0;
  double p = 1.0;
  double ci_low = -1.0;
  double ci_high = 1.0;
  size_t n = 0;
};

PearsonResult pearson_r(const std::vector<double>& x, const std::vector<double>& y);

// 64-bit SplitMix generator.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}
  std::uint64_t next();
  // Uniform in [0, n) without modulo bias.
  std::uint64_t below(std::uint64_t n);

  // Independent stream for resample `index` under `seed`.
  static SplitMix64 stream(std::uint64_t seed, std::uint64_t index);

 private:
  std::uint64_t state_;
};

struct BootstrapOptions {
  int resamples = 1000;
  std::uint64_t seed = 0;
  double max_failure_fraction = 0.05;
  int threads = 1;
};

struct BootstrapResult {
  double point = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  int resamples = 0;
  std::uint64_t seed = 0;
  int failed = 0;
  // Successful resample statistics in resample order.
  std::vector<double> statistics;
};

// Nearest-rank percentile of an already sorted sample, q in (0, 1].
double nearest_rank(const std::vector<double>& sorted, double q);

// Draws `cluster_count` cluster indices with replacement per resample and
// evaluates `statistic` on the drawn multiset. A resample whose statistic
// throws or is not finite counts as failed; more than
// max_failure_fraction failures raise StatsError. `point` is the statistic
// on the identity draw 0..cluster_count-1.
BootstrapResult cluster_bootstrap_indices(
    size_t cluster_count, const std::function<double(const std::vector<size_t>&)>& statistic,
    const BootstrapOptions& options = {});

// Record-level wrapper: records are grouped by cluster id (first-seen
// order) and each resample concatenates the records of the drawn clusters.
template <class R>
BootstrapResult cluster_bootstrap_ci(const std::vector<R>& records,
                                     const std::function<std::string(const R&)>& cluster_of,
                                     const std::function<double(const std::vector<R>&)>& statistic,
                                     const BootstrapOptions& options = {}) {
  std::vector<std::vector<const R*>> clusters;
  std::unordered_map<std::string, size_t> slot;
  for (const R& r : records) {
    auto [it, fresh] = slot.emplace(cluster_of(r), clusters.size());
    if (fresh) clusters.emplace_back();
    clusters[it->second].push_back(&r);
  }
  return cluster_bootstrap_indices(
      clusters.size(),
      [&](const std::vector<size_t>& draw) {
        std::vector<R> sample;
        for (size_t c : draw) {
          for (const R* r : clusters[c]) sample.push_back(*r);
        }
        return statistic(sample);
      },
      options);
}

double mean(const std::vector<double>& xs);

struct LabeledPrediction {
  std::string scenario_id;
  BarrierType true_type = BarrierType::kNone;
  std::string predicted_label;  // semantic / cultural / emotional / none
};

// Annotation label for a barrier type and back.
std::string annotation_label(BarrierType b);
BarrierType parse_annotation_label(std::string_view label);

struct AccuracyEstimate {
  double accuracy = 0.0;
  size_t count = 0;
  size_t scenarios = 0;
  // Absent when fewer than two scenarios carry this type.
  std::optional<BootstrapResult> ci;
};

struct AccuracyReport {
  AccuracyEstimate overall;
  std::map<BarrierType, AccuracyEstimate> per_type;
};

AccuracyReport label_accuracy(const std::vector<LabeledPrediction>& items,
                              const BootstrapOptions& options = {});

}  // namespace socialveil
