#pragma once

// Comparison measures: negative conditional entropy of the target labels
// given argmax dummy labels (NCE), the NCE-based lower bound on LEEP, and
// the H-score of a feature matrix.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "xfsc/detail/exact_sum.hpp"
#include "xfsc/error.hpp"
#include "xfsc/leep.hpp"
#include "xfsc/types.hpp"

namespace xfsc {

/// Argmax source label per example. Ties go to the lowest index.
struct DummyLabels {
  std::vector<int> values;
  std::size_t m = 0;
  std::size_t tie_count = 0;

  std::size_t n() const noexcept { return values.size(); }
};

inline DummyLabels dummy_labels(const PredictionMatrix& pred) {
  DummyLabels out{std::vector<int>(pred.n()), pred.m(), 0};
  for (std::size_t i = 0; i < pred.n(); ++i) {
    const auto row = pred.row(i);
    std::size_t best = 0;
    bool tied = false;
    for (std::size_t z = 1; z < row.size(); ++z) {
      if (row[z] > row[best]) {
        best = z;
        tied = false;
      } else if (row[z] == row[best]) {
        tied = true;
      }
    }
    out.values[i] = static_cast<int>(best);
    if (tied) ++out.tie_count;
  }
  return out;
}

/// NCE(Y | Z) = (1/n) sum_i log P(y_i | z_i), with P counted over the hard
/// pairs (y_i, z_i).
inline Score nce_score(const TargetLabels& labels, const DummyLabels& dummy) {
  detail::require_same_n(labels.n(), dummy.n(), "nce_score");
  const std::size_t c = labels.c();
  const std::size_t m = dummy.m;
  std::vector<std::size_t> pair_counts(c * m, 0);
  std::vector<std::size_t> z_counts(m, 0);
  for (std::size_t i = 0; i < labels.n(); ++i) {
    const auto z = static_cast<std::size_t>(dummy.values[i]);
    if (z >= m) throw Error(ErrorKind::OutOfRange, "dummy label " + std::to_string(z), i);
    ++pair_counts[static_cast<std::size_t>(labels[i]) * m + z];
    ++z_counts[z];
  }
  detail::ExactSum acc;
  for (std::size_t i = 0; i < labels.n(); ++i) {
    const auto z = static_cast<std::size_t>(dummy.values[i]);
    const auto y = static_cast<std::size_t>(labels[i]);
    acc.add(std::log(static_cast<double>(pair_counts[y * m + z]) / static_cast<double>(z_counts[z])));
  }
  const double value = std::min(0.0, acc.value() / static_cast<double>(labels.n()));
  return Score{value, Measure::nce, labels.n(), m, c};
}

inline Score nce_score(const PredictionMatrix& pred, const TargetLabels& labels) {
  return nce_score(labels, dummy_labels(pred));
}

/// NCE(Y|Z) + (1/n) sum_i log theta(x_i)_{z_i}.
/// Matches LEEP on one-hot predictions. With soft predictions it can exceed
/// LEEP: NCE conditions on hard argmax counts, LEEP on the soft joint.
inline double leep_lower_bound(const PredictionMatrix& pred, const TargetLabels& labels) {
  detail::require_same_n(pred.n(), labels.n(), "leep_lower_bound");
  const DummyLabels dummy = dummy_labels(pred);
  const double nce = nce_score(labels, dummy).value;
  detail::ExactSum acc;
  for (std::size_t i = 0; i < pred.n(); ++i) {
    acc.add(std::log(pred(i, static_cast<std::size_t>(dummy.values[i]))));
  }
  return nce + acc.value() / static_cast<double>(pred.n());
}

// ---------------------------------------------------------------------------
// H-score
// ---------------------------------------------------------------------------

/// Eigenvalues below rcond * lambda_max are dropped from the pseudo-inverse.
inline constexpr double kHScoreRcond = 1e-8;
inline constexpr double kHScoreNegativeTolerance = 1e-9;

struct HScoreResult {
  double value = 0.0;
  std::size_t rank = 0;  // rank of the feature covariance after the rcond cutoff
};

/// H = trace(pinv(cov(f)) * cov(E[f | y])), both covariances normalized by 1/n.
inline HScoreResult h_score_details(const FeatureMatrix& features, const TargetLabels& labels) {
  detail::require_same_n(features.n(), labels.n(), "h_score");
  const std::size_t n = features.n();
  const std::size_t d = features.d();
  const std::size_t c = labels.c();
  if (n < 2) throw Error(ErrorKind::TooFewPoints, "h_score needs at least 2 examples");

  Eigen::VectorXd mean(d);
  for (std::size_t j = 0; j < d; ++j) {
    detail::ExactSum acc;
    for (std::size_t i = 0; i < n; ++i) acc.add(features(i, j));
    mean[static_cast<Eigen::Index>(j)] = acc.value() / static_cast<double>(n);
  }

  Eigen::MatrixXd centered(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      centered(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          features(i, j) - mean[static_cast<Eigen::Index>(j)];
    }
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Eigen::MatrixXd cov_f = (centered.transpose() * centered) * inv_n;
  cov_f = 0.5 * (cov_f + cov_f.transpose()).eval();

  Eigen::MatrixXd class_means = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(d));
  const auto counts = labels.class_counts();
  for (std::size_t i = 0; i < n; ++i) {
    class_means.row(labels[i]) += centered.row(static_cast<Eigen::Index>(i));
  }
  Eigen::MatrixXd cov_g = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  for (std::size_t y = 0; y < c; ++y) {
    if (counts[y] == 0) continue;
    const Eigen::VectorXd g = class_means.row(static_cast<Eigen::Index>(y)).transpose() / static_cast<double>(counts[y]);
    cov_g += (static_cast<double>(counts[y]) * inv_n) * (g * g.transpose());
  }

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_f);
  if (eig.info() != Eigen::Success) throw Error(ErrorKind::NumericalFailure, "eigendecomposition did not converge");
  const Eigen::VectorXd& lambda = eig.eigenvalues();
  const double lambda_max = lambda.size() > 0 ? lambda.maxCoeff() : 0.0;

  HScoreResult result;
  if (!(lambda_max > 0.0)) return result;

  // trace(V diag(1/l) V^T cov_g) = sum_k (v_k^T cov_g v_k) / l_k over kept k
  const Eigen::MatrixXd& vecs = eig.eigenvectors();
  detail::ExactSum trace;
  for (Eigen::Index k = 0; k < lambda.size(); ++k) {
    if (lambda[k] <= kHScoreRcond * lambda_max) continue;
    ++result.rank;
    const auto v = vecs.col(k);
    trace.add(v.dot(cov_g * v) / lambda[k]);
  }
  const double h = trace.value();
  if (!std::isfinite(h)) throw Error(ErrorKind::NumericalFailure, "non-finite H-score");
  if (h < -kHScoreNegativeTolerance) {
    throw Error(ErrorKind::NegativeTrace, "H-score trace " + std::to_string(h) + " is negative");
  }
  result.value = std::max(0.0, h);
  return result;
}

inline Score h_score(const FeatureMatrix& features, const TargetLabels& labels) {
  const auto details = h_score_details(features, labels);
  return Score{details.value, Measure::hscore, features.n(), features.d(), labels.c()};
}

}  // namespace xfsc
