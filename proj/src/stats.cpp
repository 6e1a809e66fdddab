#include "socialveil/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <set>
#include <thread>

namespace socialveil {

namespace {

void reject_nan(double v, const char* what) {
  if (std::isnan(v)) throw InputError(std::string(what) + " contains NaN");
}

// Continued fraction for the incomplete beta, modified Lentz.
double beta_cf(double a, double b, double x) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-15;
  double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  throw StatsError("incomplete beta continued fraction did not converge");
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0 && b > 0)) throw InputError("incomplete_beta needs a, b > 0");
  if (std::isnan(x)) throw InputError("incomplete_beta argument is NaN");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) +
                    b * std::log1p(-x);
  double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_cf(a, b, x) / a;
  return 1.0 - front * beta_cf(b, a, 1.0 - x) / b;
}

double f_cdf(double x, double df1, double df2) {
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return incomplete_beta(df1 / 2.0, df2 / 2.0, df1 * x / (df1 * x + df2));
}

double f_quantile(double p, double df1, double df2) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("f_quantile needs p in (0, 1)");
  double lo = 0.0, hi = 1.0;
  while (f_cdf(hi, df1, df2) < p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw StatsError("f_quantile bracket overflow");
  }
  for (int i = 0; i < 400 && hi - lo > 1e-14 * std::max(1.0, hi); ++i) {
    double mid = 0.5 * (lo + hi);
    if (f_cdf(mid, df1, df2) < p) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

double t_two_sided_p(double t, double df) {
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(df / 2.0, 0.5, df / (df + t * t));
}

double fleiss_kappa(const std::vector<std::vector<int>>& counts) {
  if (counts.size() < 2) throw InputError("fleiss_kappa needs at least two items");
  const size_t categories = counts.front().size();
  if (categories < 2) throw InputError("fleiss_kappa needs at least two categories");
  const long k = std::accumulate(counts.front().begin(), counts.front().end(), 0L);
  if (k < 2) throw InputError("fleiss_kappa needs at least two raters per item");
  std::vector<double> column(categories, 0.0);
  double p_bar = 0.0;
  for (size_t i = 0; i < counts.size(); ++i) {
    const auto& row = counts[i];
    if (row.size() != categories) {
      throw InputError("fleiss_kappa row " + std::to_string(i) + " has the wrong width");
    }
    long sum = 0, squares = 0;
    for (size_t j = 0; j < categories; ++j) {
      if (row[j] < 0) throw InputError("fleiss_kappa counts must be nonnegative");
      sum += row[j];
      squares += static_cast<long>(row[j]) * row[j];
      column[j] += row[j];
    }
    if (sum != k) {
      throw InputError("fleiss_kappa row " + std::to_string(i) + " sums to " +
                       std::to_string(sum) + ", expected " + std::to_string(k));
    }
    p_bar += static_cast<double>(squares - k) / static_cast<double>(k * (k - 1));
  }
  const double n = static_cast<double>(counts.size());
  p_bar /= n;
  double p_e = 0.0;
  for (double c : column) {
    double pj = c / (n * static_cast<double>(k));
    p_e += pj * pj;
  }
  if (p_e >= 1.0 - 1e-15) throw StatsError("no chance variance");
  return (p_bar - p_e) / (1.0 - p_e);
}

namespace {

IccResult icc_ci(IccResult r, double alpha) {
  double upper_q = f_quantile(1.0 - alpha / 2.0, r.df1, r.df2);
  double lower_q = f_quantile(alpha / 2.0, r.df1, r.df2);
  r.ci_low = 1.0 - upper_q / r.f;
  r.ci_high = 1.0 - lower_q / r.f;
  return r;
}

}  // namespace

IccResult icc_from_f(double f, int df1, int df2, double alpha) {
  if (!(f > 0.0) || std::isinf(f)) throw InputError("icc_from_f needs a finite F > 0");
  if (df1 < 1 || df2 < 1) throw InputError("icc_from_f needs positive degrees of freedom");
  IccResult r;
  r.f = f;
  r.df1 = df1;
  r.df2 = df2;
  r.icc = 1.0 - 1.0 / f;
  return icc_ci(r, alpha);
}

IccResult icc_1k(const std::vector<std::vector<double>>& values, double alpha) {
  const size_t n = values.size();
  if (n < 2) throw InputError("icc_1k needs at least two items");
  const size_t k = values.front().size();
  if (k < 2) throw InputError("icc_1k needs at least two ratings per item");
  double grand = 0.0, scale = 0.0;
  std::vector<double> item_means(n);
  for (size_t i = 0; i < n; ++i) {
    if (values[i].size() != k) {
      throw InputError("icc_1k row " + std::to_string(i) + " has " +
                       std::to_string(values[i].size()) + " ratings, expected " +
                       std::to_string(k));
    }
    double s = 0.0;
    for (double v : values[i]) {
      reject_nan(v, "icc_1k input");
      s += v;
      scale = std::max(scale, std::fabs(v));
    }
    item_means[i] = s / static_cast<double>(k);
    grand += s;
  }
  grand /= static_cast<double>(n * k);
  double ssb = 0.0, ssw = 0.0;
  for (size_t i = 0; i < n; ++i) {
    ssb += (item_means[i] - grand) * (item_means[i] - grand);
    for (double v : values[i]) ssw += (v - item_means[i]) * (v - item_means[i]);
  }
  IccResult r;
  r.df1 = static_cast<int>(n - 1);
  r.df2 = static_cast<int>(n * (k - 1));
  r.msb = static_cast<double>(k) * ssb / r.df1;
  r.msw = ssw / r.df2;
  const double eps = 1e-24 * std::max(1.0, scale * scale);
  const bool no_between = r.msb <= eps;
  const bool no_within = r.msw <= eps;
  if (no_between && no_within) throw StatsError("no variance");
  if (no_between) throw StatsError("no between-item variance");
  if (no_within) {
    r.msw = 0.0;
    r.f = std::numeric_limits<double>::infinity();
    r.icc = 1.0;
    r.ci_low = 1.0;
    r.ci_high = 1.0;
    return r;
  }
  r.f = r.msb / r.msw;
  r.icc = 1.0 - 1.0 / r.f;
  return icc_ci(r, alpha);
}

PearsonResult pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) {
    throw InputError("pearson_r length mismatch: " + std::to_string(x.size()) + " vs " +
                     std::to_string(y.size()));
  }
  if (x.size() < 3) throw InputError("pearson_r needs at least 3 pairs");
  for (size_t i = 0; i < x.size(); ++i) {
    reject_nan(x[i], "pearson_r x");
    reject_nan(y[i], "pearson_r y");
  }
  const double n = static_cast<double>(x.size());
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, syy = 0.0, sxy = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double dx = x[i] - mx, dy = y[i] - my;
    sxx += dx * dx;
    syy += dy * dy;
    sxy += dx * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw StatsError("zero variance");
  PearsonResult res;
  res.n = x.size();
  res.r = std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
  const double df = n - 2.0;
  if (std::fabs(res.r) == 1.0) {
    res.p = 0.0;
    res.ci_low = res.ci_high = res.r;
    return res;
  }
  const double t = res.r * std::sqrt(df / (1.0 - res.r * res.r));
  res.p = t_two_sided_p(t, df);
  if (res.n > 3) {
    const double z = std::atanh(res.r);
    const double z975 = 1.959963984540054;  // standard normal 97.5% quantile
    const double half = z975 / std::sqrt(n - 3.0);
    res.ci_low = std::tanh(z - half);
    res.ci_high = std::tanh(z + half);
  }
  return res;
}

std::uint64_t SplitMix64::next() {
  std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t SplitMix64::below(std::uint64_t n) {
  if (n == 0) throw InputError("SplitMix64::below needs n > 0");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = next();
  } while (v >= limit);
  return v % n;
}

SplitMix64 SplitMix64::stream(std::uint64_t seed, std::uint64_t index) {
  SplitMix64 mixer(seed ^ (index * 0xD1B54A32D192ED03ULL));
  return SplitMix64(mixer.next());
}

double mean(const std::vector<double>& xs) {
  if (xs.empty()) throw StatsError("mean of an empty sample");
  double s = 0.0;
  for (double v : xs) {
    reject_nan(v, "mean input");
    s += v;
  }
  return s / static_cast<double>(xs.size());
}

double nearest_rank(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw StatsError("percentile of an empty sample");
  double pos = std::ceil(q * static_cast<double>(sorted.size()) - 1e-9);
  size_t rank = static_cast<size_t>(std::max(1.0, pos));
  return sorted[std::min(rank, sorted.size()) - 1];
}

BootstrapResult cluster_bootstrap_indices(
    size_t cluster_count, const std::function<double(const std::vector<size_t>&)>& statistic,
    const BootstrapOptions& options) {
  if (cluster_count < 2) throw InputError("cluster bootstrap needs at least 2 clusters");
  if (options.resamples < 1) throw InputError("cluster bootstrap needs at least 1 resample");

  BootstrapResult result;
  result.resamples = options.resamples;
  result.seed = options.seed;
  std::vector<size_t> identity(cluster_count);
  std::iota(identity.begin(), identity.end(), 0);
  result.point = statistic(identity);
  if (!std::isfinite(result.point)) throw StatsError("statistic is not finite on the full sample");

  const size_t b = static_cast<size_t>(options.resamples);
  std::vector<double> values(b, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> ok(b, 0);
  std::mutex err_mu;
  std::string first_error;
  std::atomic<size_t> next{0};

  auto worker = [&]() {
    std::vector<size_t> draw(cluster_count);
    for (size_t i = next.fetch_add(1); i < b; i = next.fetch_add(1)) {
      SplitMix64 rng = SplitMix64::stream(options.seed, i);
      for (auto& d : draw) d = rng.below(cluster_count);
      try {
        double v = statistic(draw);
        if (std::isfinite(v)) {
          values[i] = v;
          ok[i] = 1;
        } else {
          std::lock_guard lock(err_mu);
          if (first_error.empty()) first_error = "resample " + std::to_string(i) + ": not finite";
        }
      } catch (const std::exception& e) {
        std::lock_guard lock(err_mu);
        if (first_error.empty()) first_error = "resample " + std::to_string(i) + ": " + e.what();
      }
    }
  };
  const size_t threads = std::clamp<size_t>(static_cast<size_t>(std::max(options.threads, 1)), 1, b);
  std::vector<std::thread> pool;
  for (size_t t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();

  for (size_t i = 0; i < b; ++i) {
    if (ok[i]) {
      result.statistics.push_back(values[i]);
    } else {
      ++result.failed;
    }
  }
  if (result.failed > options.max_failure_fraction * static_cast<double>(b)) {
    throw StatsError("cluster bootstrap aborted: " + std::to_string(result.failed) + " of " +
                     std::to_string(b) + " resamples failed (first: " + first_error + ")");
  }
  std::vector<double> sorted = result.statistics;
  std::sort(sorted.begin(), sorted.end());
  result.ci_low = nearest_rank(sorted, 0.025);
  result.ci_high = nearest_rank(sorted, 0.975);
  return result;
}

std::string annotation_label(BarrierType b) {
  switch (b) {
    case BarrierType::kSemantic: return "semantic";
    case BarrierType::kSociocultural: return "cultural";
    case BarrierType::kEmotional: return "emotional";
    case BarrierType::kNone: return "none";
  }
  return "none";
}

BarrierType parse_annotation_label(std::string_view label) {
  if (label == "semantic") return BarrierType::kSemantic;
  if (label == "cultural") return BarrierType::kSociocultural;
  if (label == "emotional") return BarrierType::kEmotional;
  if (label == "none") return BarrierType::kNone;
  throw InputError("unknown barrier label '" + std::string(label) + "'");
}

namespace {

AccuracyEstimate estimate_accuracy(const std::vector<LabeledPrediction>& items,
                                   const BootstrapOptions& options) {
  AccuracyEstimate est;
  est.count = items.size();
  std::set<std::string> scenarios;
  for (const auto& it : items) scenarios.insert(it.scenario_id);
  est.scenarios = scenarios.size();
  auto accuracy = [](const std::vector<LabeledPrediction>& xs) {
    if (xs.empty()) throw StatsError("accuracy of an empty sample");
    size_t hits = 0;
    for (const auto& x : xs) hits += parse_annotation_label(x.predicted_label) == x.true_type;
    return static_cast<double>(hits) / static_cast<double>(xs.size());
  };
  est.accuracy = accuracy(items);
  if (est.scenarios >= 2) {
    est.ci = cluster_bootstrap_ci<LabeledPrediction>(
        items, [](const LabeledPrediction& p) { return p.scenario_id; }, accuracy, options);
  }
  return est;
}

}  // namespace

AccuracyReport label_accuracy(const std::vector<LabeledPrediction>& items,
                              const BootstrapOptions& options) {
  if (items.empty()) throw InputError("label_accuracy needs at least one annotation");
  std::map<BarrierType, std::vector<LabeledPrediction>> by_type;
  for (const auto& it : items) {
    parse_annotation_label(it.predicted_label);
    by_type[it.true_type].push_back(it);
  }
  AccuracyReport report;
  report.overall = estimate_accuracy(items, options);
  for (const auto& [type, group] : by_type) {
    report.per_type[type] = estimate_accuracy(group, options);
  }
  return report;
}

}  // namespace socialveil
