#pragma once

// Evaluation methodology: Pearson correlation with Student-t p-values,
// equal-width transferability levels, F1 for imbalanced targets, and
// ranking of candidate source models.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xfsc/detail/exact_sum.hpp"
#include "xfsc/error.hpp"
#include "xfsc/types.hpp"

namespace xfsc {

enum class MetricKind { accuracy, f1 };

constexpr std::string_view to_string(MetricKind kind) { return kind == MetricKind::f1 ? "f1" : "accuracy"; }

inline std::optional<MetricKind> parse_metric_kind(std::string_view name) {
  if (name == "accuracy") return MetricKind::accuracy;
  if (name == "f1") return MetricKind::f1;
  return std::nullopt;
}

/// One (source model, target task) evaluation.
struct ExperimentRecord {
  std::string task_id;
  std::string model_id;
  std::map<Measure, double> scores;
  std::optional<double> transfer_metric;
  MetricKind metric_kind = MetricKind::accuracy;
};

struct CorrelationReport {
  Measure measure = Measure::leep;
  MetricKind metric_kind = MetricKind::accuracy;
  double r = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  double fit_slope = 0.0;
  double fit_intercept = 0.0;
};

struct RankedModel {
  std::string model_id;
  double score = 0.0;
  bool tied = false;
};

struct RankingReport {
  Measure measure = Measure::leep;
  std::vector<RankedModel> entries;  // best first
};

// ---------------------------------------------------------------------------
// Special functions
// ---------------------------------------------------------------------------

inline constexpr double kBetaTolerance = 1e-12;

namespace detail {

// Continued fraction for the incomplete beta function (modified Lentz).
inline double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIterations = 10000;
  constexpr double kTiny = 1e-300;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIterations; ++m) {
    const double m2 = 2.0 * m;
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
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kBetaTolerance) return h;
  }
  throw Error(ErrorKind::NumericalFailure, "incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b) for a, b > 0 and x in [0, 1].
inline double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw Error(ErrorKind::OutOfRange, "incomplete beta needs a, b > 0");
  if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorKind::OutOfRange, "incomplete beta needs x in [0, 1]");
  if (x == 0.0) return 0.0;
  if (x == 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  // The fraction converges fast on this side of the mean; use symmetry otherwise.
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_continued_fraction(b, a, 1.0 - x) / b;
}

// ---------------------------------------------------------------------------
// Correlation
// ---------------------------------------------------------------------------

namespace detail {

struct Moments {
  double mean_x, mean_y, sxx, syy, sxy;
};

inline Moments centered_moments(std::span<const double> xs, std::span<const double> ys) {
  const auto n = static_cast<double>(xs.size());
  const double mx = exact_sum(xs) / n;
  const double my = exact_sum(ys) / n;
  ExactSum sxx, syy, sxy;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx;
    const double dy = ys[i] - my;
    sxx.add(dx * dx);
    syy.add(dy * dy);
    sxy.add(dx * dy);
  }
  return {mx, my, sxx.value(), syy.value(), sxy.value()};
}

inline void check_pair(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) {
    throw Error(ErrorKind::LengthMismatch,
                "pearson: " + std::to_string(xs.size()) + " vs " + std::to_string(ys.size()) + " values");
  }
  if (xs.size() < 3) throw Error(ErrorKind::TooFewPoints, "pearson needs at least 3 points");
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (!std::isfinite(xs[i]) || !std::isfinite(ys[i])) {
      throw Error(ErrorKind::NonFinite, "non-finite value at index " + std::to_string(i), i);
    }
  }
}

}  // namespace detail

/// Sample Pearson correlation coefficient, clamped to [-1, 1].
inline double pearson(std::span<const double> xs, std::span<const double> ys) {
  detail::check_pair(xs, ys);
  const auto mo = detail::centered_moments(xs, ys);
  if (!(mo.sxx > 0.0) || !(mo.syy > 0.0)) throw Error(ErrorKind::ConstantInput, "pearson input is constant");
  const double r = mo.sxy / (std::sqrt(mo.sxx) * std::sqrt(mo.syy));
  return std::clamp(r, -1.0, 1.0);
}

/// Two-sided p-value of r under the null of zero correlation, with n - 2
/// degrees of freedom: I_{nu/(nu+t^2)}(nu/2, 1/2), where nu/(nu+t^2) = 1 - r^2.
inline double p_value_two_sided(double r, std::size_t n) {
  if (n < 3) throw Error(ErrorKind::TooFewPoints, "p-value needs at least 3 points");
  if (!(std::fabs(r) <= 1.0)) throw Error(ErrorKind::OutOfRange, "|r| must be at most 1");
  if (std::fabs(r) == 1.0) return 0.0;
  const double nu = static_cast<double>(n - 2);
  const double x = (1.0 - r) * (1.0 + r);
  return std::clamp(regularized_incomplete_beta(0.5 * nu, 0.5, x), 0.0, 1.0);
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

/// Ordinary least-squares line ys ~ slope * xs + intercept.
inline LineFit least_squares_line(std::span<const double> xs, std::span<const double> ys) {
  detail::check_pair(xs, ys);
  const auto mo = detail::centered_moments(xs, ys);
  if (!(mo.sxx > 0.0)) throw Error(ErrorKind::ConstantInput, "regressor is constant");
  const double slope = mo.sxy / mo.sxx;
  return {slope, mo.mean_y - slope * mo.mean_x};
}

// ---------------------------------------------------------------------------
// Transferability levels
// ---------------------------------------------------------------------------

/// Equal-width bins over [min, max]; bin i is [min + i*w, min + (i+1)*w),
/// the last bin closed on the right. A degenerate range maps everything to 0.
inline std::vector<std::size_t> bin_levels(std::span<const double> scores, std::size_t k = 5) {
  if (scores.empty()) throw Error(ErrorKind::Empty, "no scores to bin");
  if (k == 0) throw Error(ErrorKind::InvalidSpec, "bin count must be positive");
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!std::isfinite(scores[i])) throw Error(ErrorKind::NonFinite, "non-finite score", i);
  }
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  std::vector<std::size_t> levels(scores.size(), 0);
  if (hi == lo) return levels;
  const double width = (hi - lo) / static_cast<double>(k);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const double pos = std::floor((scores[i] - lo) / width);
    levels[i] = std::min(k - 1, static_cast<std::size_t>(std::max(0.0, pos)));
  }
  return levels;
}

/// Mean metric per level; empty levels are nullopt. Also serves for
/// per-level averaging of accuracy-difference series.
inline std::vector<std::optional<double>> level_means(std::span<const std::size_t> levels,
                                                      std::span<const double> metrics, std::size_t k) {
  if (levels.size() != metrics.size()) throw Error(ErrorKind::LengthMismatch, "levels vs metrics");
  std::vector<detail::ExactSum> sums(k);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i] >= k) throw Error(ErrorKind::OutOfRange, "level " + std::to_string(levels[i]), i);
    sums[levels[i]].add(metrics[i]);
    ++counts[levels[i]];
  }
  std::vector<std::optional<double>> out(k);
  for (std::size_t j = 0; j < k; ++j) {
    if (counts[j] > 0) out[j] = sums[j].value() / static_cast<double>(counts[j]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// F1
// ---------------------------------------------------------------------------

namespace detail {

inline void check_binary(std::span<const int> predicted, std::span<const int> actual) {
  if (predicted.size() != actual.size()) throw Error(ErrorKind::LengthMismatch, "predicted vs actual labels");
  if (actual.empty()) throw Error(ErrorKind::Empty, "no labels");
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if ((predicted[i] != 0 && predicted[i] != 1) || (actual[i] != 0 && actual[i] != 1)) {
      throw Error(ErrorKind::NotBinary, "labels must be 0 or 1", i);
    }
  }
}

}  // namespace detail

/// Less frequent class of a binary label vector (1 on a tie).
inline int minority_class(std::span<const int> actual) {
  const auto ones = static_cast<std::size_t>(std::count(actual.begin(), actual.end(), 1));
  return ones <= actual.size() - ones ? 1 : 0;
}

/// F1 of the positive class; 0 when precision + recall is 0.
inline double f1_binary(std::span<const int> predicted, std::span<const int> actual, int positive_class) {
  detail::check_binary(predicted, actual);
  if (positive_class != 0 && positive_class != 1) throw Error(ErrorKind::NotBinary, "positive class must be 0 or 1");
  std::size_t tp = 0, fp = 0, fn = 0;
  bool present = false;
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const bool pred_pos = predicted[i] == positive_class;
    const bool act_pos = actual[i] == positive_class;
    present = present || act_pos;
    if (pred_pos && act_pos) ++tp;
    else if (pred_pos) ++fp;
    else if (act_pos) ++fn;
  }
  if (!present) throw Error(ErrorKind::MissingPositiveClass, "positive class absent from actual labels");
  if (tp == 0) return 0.0;
  const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
  return 2.0 * precision * recall / (precision + recall);
}

/// Unweighted mean of the per-class F1 over the classes present in `actual`.
inline double f1_macro(std::span<const int> predicted, std::span<const int> actual) {
  detail::check_binary(predicted, actual);
  double total = 0.0;
  int classes = 0;
  for (int cls : {0, 1}) {
    if (std::find(actual.begin(), actual.end(), cls) == actual.end()) continue;
    total += f1_binary(predicted, actual, cls);
    ++classes;
  }
  return total / classes;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// Pearson r, p-value and fit line between a measure's scores and the
/// transfer metric, over the records that carry both.
inline CorrelationReport correlate(std::span<const ExperimentRecord> records, Measure measure,
                                   MetricKind metric_kind) {
  std::vector<double> xs, ys;
  for (const auto& rec : records) {
    const auto it = rec.scores.find(measure);
    if (it == rec.scores.end() || !rec.transfer_metric || rec.metric_kind != metric_kind) continue;
    xs.push_back(it->second);
    ys.push_back(*rec.transfer_metric);
  }
  if (xs.size() < 3) {
    throw Error(ErrorKind::InsufficientData, std::to_string(xs.size()) + " records carry " +
                                                 std::string(to_string(measure)) + " and a " +
                                                 std::string(to_string(metric_kind)) + " metric; need 3");
  }
  CorrelationReport report;
  report.measure = measure;
  report.metric_kind = metric_kind;
  report.n = xs.size();
  report.r = pearson(xs, ys);
  report.p_value = p_value_two_sided(report.r, report.n);
  const auto fit = least_squares_line(xs, ys);
  report.fit_slope = fit.slope;
  report.fit_intercept = fit.intercept;
  return report;
}

/// Candidate models ordered best first (larger score is better). Exact ties
/// keep input order and are flagged.
inline RankingReport rank_models(std::span<const ExperimentRecord> records, Measure measure) {
  RankingReport report;
  report.measure = measure;
  for (const auto& rec : records) {
    const auto it = rec.scores.find(measure);
    const std::string& id = rec.model_id.empty() ? rec.task_id : rec.model_id;
    if (it == rec.scores.end()) {
      throw Error(ErrorKind::InsufficientData, "model '" + id + "' has no " + std::string(to_string(measure)) + " score");
    }
    report.entries.push_back({id, it->second, false});
  }
  if (report.entries.size() < 2) throw Error(ErrorKind::InsufficientData, "ranking needs at least 2 models");
  std::stable_sort(report.entries.begin(), report.entries.end(),
                   [](const RankedModel& a, const RankedModel& b) { return a.score > b.score; });
  for (std::size_t i = 0; i + 1 < report.entries.size(); ++i) {
    if (report.entries[i].score == report.entries[i + 1].score) {
      report.entries[i].tied = true;
      report.entries[i + 1].tied = true;
    }
  }
  return report;
}


struct LevelEntry {
  std::string id;
  double score = 0.0;
  std::size_t level = 0;
  std::optional<double> metric;
};

struct LevelReport {
  Measure measure = Measure::leep;
  std::size_t k = 5;
  std::vector<LevelEntry> entries;
  std::vector<std::optional<double>> level_means;  // mean metric per level
  std::vector<std::size_t> level_counts;
};

/// Bins the records' scores into k transferability levels and averages the
/// transfer metric inside each level (records without a metric are binned
/// but not averaged).
inline LevelReport make_level_report(std::span<const ExperimentRecord> records, Measure measure, std::size_t k = 5) {
  LevelReport report;
  report.measure = measure;
  report.k = k;
  std::vector<double> scores;
  for (const auto& rec : records) {
    const auto it = rec.scores.find(measure);
    if (it == rec.scores.end()) continue;
    scores.push_back(it->second);
    report.entries.push_back({rec.model_id.empty() ? rec.task_id : rec.model_id, it->second, 0, rec.transfer_metric});
  }
  if (scores.empty()) throw Error(ErrorKind::InsufficientData, "no record carries " + std::string(to_string(measure)));
  const auto levels = bin_levels(scores, k);
  std::vector<std::size_t> with_metric_levels;
  std::vector<double> metrics;
  report.level_counts.assign(k, 0);
  for (std::size_t i = 0; i < levels.size(); ++i) {
    report.entries[i].level = levels[i];
    ++report.level_counts[levels[i]];
    if (report.entries[i].metric) {
      with_metric_levels.push_back(levels[i]);
      metrics.push_back(*report.entries[i].metric);
    }
  }
  report.level_means = level_means(with_metric_levels, metrics, k);
  return report;
}

}  // namespace xfsc
