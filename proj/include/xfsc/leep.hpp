#pragma once

// LEEP: the average log-likelihood of the expected empirical predictor (EEP).
//
//   P(y, z) = (1/n) sum_{i : y_i = y} theta(x_i)_z
//   P(y | z) = P(y, z) / P(z)
//   EEP(y | x) = sum_z P(y | z) theta(x)_z
//   LEEP = (1/n) sum_i log EEP(y_i | x_i)
//
// All reductions go through detail::ExactSum, so the score is bit-identical
// under any permutation of the examples, the source labels or the target
// classes.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xfsc/detail/exact_sum.hpp"
#include "xfsc/error.hpp"
#include "xfsc/types.hpp"

namespace xfsc {

/// Slack allowed above 1 for an EEP probability (rows sum to 1 within 1e-12).
inline constexpr double kProbabilitySlack = 1e-12;

/// Empirical joint P(y, z) over a subset of the examples. The normalizer is
/// the subset size. Used directly for hold-out fits.
inline JointDistribution empirical_joint(const PredictionMatrix& pred, const TargetLabels& labels,
                                         std::span<const std::size_t> rows) {
  detail::require_same_n(pred.n(), labels.n(), "empirical_joint");
  if (rows.empty()) throw Error(ErrorKind::Empty, "empirical_joint over an empty subset");
  const std::size_t c = labels.c();
  const std::size_t m = pred.m();

  std::vector<detail::ExactSum> cells(c * m);
  for (std::size_t i : rows) {
    if (i >= pred.n()) throw Error(ErrorKind::OutOfRange, "row index " + std::to_string(i));
    const auto y = static_cast<std::size_t>(labels[i]);
    const auto theta = pred.row(i);
    for (std::size_t z = 0; z < m; ++z) cells[y * m + z].add(theta[z]);
  }

  JointDistribution joint{Matrix(c, m)};
  const auto total = static_cast<double>(rows.size());
  for (std::size_t y = 0; y < c; ++y) {
    for (std::size_t z = 0; z < m; ++z) joint.values(y, z) = cells[y * m + z].value() / total;
  }
  return joint;
}

/// Empirical joint P(y, z) over all examples.
inline JointDistribution empirical_joint(const PredictionMatrix& pred, const TargetLabels& labels) {
  detail::require_same_n(pred.n(), labels.n(), "empirical_joint");
  std::vector<std::size_t> all(pred.n());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return empirical_joint(pred, labels, all);
}

/// Divides each column by its marginal. Columns with P(z) = 0 are left at
/// zero and marked unsupported; such z carry no prediction mass anywhere,
/// so they contribute nothing to the EEP.
inline ConditionalDistribution conditional_from_joint(const JointDistribution& joint) {
  const std::size_t c = joint.c();
  const std::size_t m = joint.m();
  ConditionalDistribution cond{Matrix(c, m), std::vector<double>(m, 0.0), std::vector<bool>(m, false)};
  for (std::size_t z = 0; z < m; ++z) {
    detail::ExactSum col;
    for (std::size_t y = 0; y < c; ++y) col.add(joint.values(y, z));
    const double pz = col.value();
    cond.marginal[z] = pz;
    if (pz > 0.0) {
      cond.supported[z] = true;
      for (std::size_t y = 0; y < c; ++y) cond.values(y, z) = joint.values(y, z) / pz;
    }
  }
  return cond;
}

/// EEP distribution over target classes for one dummy-label distribution.
inline std::vector<double> eep_predict(std::span<const double> theta_row, const ConditionalDistribution& cond) {
  if (theta_row.size() != cond.m()) {
    throw Error(ErrorKind::DimensionMismatch, "theta row has " + std::to_string(theta_row.size()) +
                                                  " entries, conditional has " + std::to_string(cond.m()) +
                                                  " source labels");
  }
  std::vector<double> out(cond.c(), 0.0);
  detail::ExactSum acc;
  for (std::size_t y = 0; y < cond.c(); ++y) {
    acc.clear();
    for (std::size_t z = 0; z < cond.m(); ++z) acc.add(cond.values(y, z) * theta_row[z]);
    out[y] = acc.value();
  }
  return out;
}

/// EEP probability of the true label for every example: s_i = sum_z P(y_i|z) theta(x_i)_z.
/// Throws NumericalFailure if any s_i leaves (0, 1].
inline std::vector<double> leep_inner_sums(const PredictionMatrix& pred, const TargetLabels& labels,
                                           const ConditionalDistribution& cond) {
  detail::require_same_n(pred.n(), labels.n(), "leep");
  if (cond.m() != pred.m() || cond.c() != labels.c()) {
    throw Error(ErrorKind::DimensionMismatch, "conditional does not match predictions/labels");
  }
  std::vector<double> sums(pred.n());
  detail::ExactSum acc;
  for (std::size_t i = 0; i < pred.n(); ++i) {
    const auto y = static_cast<std::size_t>(labels[i]);
    const auto theta = pred.row(i);
    acc.clear();
    for (std::size_t z = 0; z < pred.m(); ++z) acc.add(cond.values(y, z) * theta[z]);
    const double s = acc.value();
    if (!(s > 0.0) || s > 1.0 + kProbabilitySlack) {
      throw Error(ErrorKind::NumericalFailure,
                  "EEP probability " + std::to_string(s) + " for example " + std::to_string(i) + " outside (0, 1]");
    }
    sums[i] = s;
  }
  return sums;
}

inline std::vector<double> leep_inner_sums(const PredictionMatrix& pred, const TargetLabels& labels) {
  return leep_inner_sums(pred, labels, conditional_from_joint(empirical_joint(pred, labels)));
}

namespace detail {

/// Mean of logs, clamped to <= 0 (terms may exceed 1 by rounding slack).
inline double mean_log(std::span<const double> probs) {
  ExactSum acc;
  for (double p : probs) acc.add(std::log(p));
  return std::min(0.0, acc.value() / static_cast<double>(probs.size()));
}

}  // namespace detail

inline Score leep_score(const PredictionMatrix& pred, const TargetLabels& labels) {
  const auto sums = leep_inner_sums(pred, labels);
  return Score{detail::mean_log(sums), Measure::leep, pred.n(), pred.m(), labels.c()};
}

/// Row-wise softmax (max-shifted) of a feature matrix, as a prediction matrix.
inline PredictionMatrix softmax_rows(const FeatureMatrix& features) {
  if (features.d() < 2) throw Error(ErrorKind::DegenerateDimension, "softmax needs at least 2 feature columns");
  Matrix out(features.n(), features.d());
  for (std::size_t i = 0; i < features.n(); ++i) {
    const auto in = features.row(i);
    const double shift = *std::max_element(in.begin(), in.end());
    auto row = out.row(i);
    detail::ExactSum acc;
    for (std::size_t j = 0; j < in.size(); ++j) {
      row[j] = std::exp(in[j] - shift);
      acc.add(row[j]);
    }
    const double total = acc.value();
    for (double& v : row) v /= total;
  }
  return validate_predictions(std::move(out));
}

/// LEEP computed on softmax(features) instead of the source model's predictions.
inline Score feature_softmax_leep(const FeatureMatrix& features, const TargetLabels& labels) {
  detail::require_same_n(features.n(), labels.n(), "feature_softmax_leep");
  Score s = leep_score(softmax_rows(features), labels);
  s.measure = Measure::feature_leep;
  return s;
}

}  // namespace xfsc
