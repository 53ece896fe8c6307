#pragma once

// Domain types shared by every measure. Prediction, label and feature
// containers can only be obtained through the validate_* functions, so any
// function taking them can rely on their invariants.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "xfsc/detail/exact_sum.hpp"
#include "xfsc/error.hpp"

namespace xfsc {

/// Dense row-major matrix of doubles. No invariants beyond rectangularity.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw Error(ErrorKind::DimensionMismatch, "matrix data size does not match rows*cols");
    }
  }

  /// Builds a matrix from nested rows; throws DimensionMismatch on ragged input.
  static Matrix from_rows(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    const std::size_t cols = rows.front().size();
    std::vector<double> data;
    data.reserve(rows.size() * cols);
    for (const auto& r : rows) {
      if (r.size() != cols) throw Error(ErrorKind::DimensionMismatch, "ragged rows");
      data.insert(data.end(), r.begin(), r.end());
    }
    return Matrix(rows.size(), cols, std::move(data));
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Load tolerance on prediction row sums before renormalization.
inline constexpr double kRowSumLoadTolerance = 1e-3;
/// Rows closer than this to unit sum are kept as-is, which makes validation idempotent.
inline constexpr double kRowSumExactTolerance = 1e-12;

/// n x m row-stochastic matrix: the source model's predicted distribution over
/// its own label set for every target example.
class PredictionMatrix {
 public:
  std::size_t n() const noexcept { return values_.rows(); }
  std::size_t m() const noexcept { return values_.cols(); }
  std::span<const double> row(std::size_t i) const { return values_.row(i); }
  double operator()(std::size_t i, std::size_t z) const { return values_(i, z); }
  const Matrix& matrix() const noexcept { return values_; }

  friend bool operator==(const PredictionMatrix&, const PredictionMatrix&) = default;

 private:
  explicit PredictionMatrix(Matrix values) : values_(std::move(values)) {}
  friend PredictionMatrix validate_predictions(Matrix raw);

  Matrix values_;
};

/// Dense 0-based target class indices; every class in [0, c) occurs.
class TargetLabels {
 public:
  std::size_t n() const noexcept { return values_.size(); }
  std::size_t c() const noexcept { return c_; }
  int operator[](std::size_t i) const { return values_[i]; }
  std::span<const int> values() const noexcept { return values_; }

  /// Number of examples carrying each class.
  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(c_, 0);
    for (int y : values_) ++counts[static_cast<std::size_t>(y)];
    return counts;
  }

  friend bool operator==(const TargetLabels&, const TargetLabels&) = default;

 private:
  TargetLabels(std::vector<int> values, std::size_t c) : values_(std::move(values)), c_(c) {}
  friend TargetLabels validate_labels(std::span<const std::int64_t> raw, std::optional<std::size_t> declared_c);

  std::vector<int> values_;
  std::size_t c_ = 0;
};

/// n x d matrix of finite feature values.
class FeatureMatrix {
 public:
  std::size_t n() const noexcept { return values_.rows(); }
  std::size_t d() const noexcept { return values_.cols(); }
  std::span<const double> row(std::size_t i) const { return values_.row(i); }
  double operator()(std::size_t i, std::size_t j) const { return values_(i, j); }
  const Matrix& matrix() const noexcept { return values_; }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  explicit FeatureMatrix(Matrix values) : values_(std::move(values)) {}
  friend FeatureMatrix validate_features(Matrix raw);

  Matrix values_;
};

/// Empirical joint over (target label y, source label z); c x m, sums to 1.
struct JointDistribution {
  Matrix values;

  std::size_t c() const noexcept { return values.rows(); }
  std::size_t m() const noexcept { return values.cols(); }
};

/// Empirical conditional of y given z (c x m, column-stochastic on supported
/// columns) together with the source-label marginal.
struct ConditionalDistribution {
  Matrix values;
  std::vector<double> marginal;  // P(z)
  std::vector<bool> supported;   // P(z) > 0

  std::size_t c() const noexcept { return values.rows(); }
  std::size_t m() const noexcept { return values.cols(); }
};

enum class Measure { leep, nce, hscore, feature_leep };

constexpr std::string_view to_string(Measure measure) {
  switch (measure) {
    case Measure::leep: return "leep";
    case Measure::nce: return "nce";
    case Measure::hscore: return "hscore";
    case Measure::feature_leep: return "feature-leep";
  }
  return "unknown";
}

inline std::optional<Measure> parse_measure(std::string_view name) {
  if (name == "leep") return Measure::leep;
  if (name == "nce") return Measure::nce;
  if (name == "hscore" || name == "h-score") return Measure::hscore;
  if (name == "feature-leep" || name == "feature_leep") return Measure::feature_leep;
  return std::nullopt;
}

/// A transferability score with the problem dimensions it was computed on.
/// For hscore, `m` holds the feature dimension.
struct Score {
  double value = 0.0;
  Measure measure = Measure::leep;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t c = 0;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Checks a raw prediction export and renormalizes each row to unit sum.
/// Rows must be nonnegative, finite and sum to 1 within 1e-3.
inline PredictionMatrix validate_predictions(Matrix raw) {
  if (raw.rows() == 0 || raw.cols() == 0) throw Error(ErrorKind::EmptyMatrix, "prediction matrix is empty");
  if (raw.cols() < 2) {
    throw Error(ErrorKind::DegenerateDimension, "prediction matrix needs at least 2 source labels");
  }
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    auto row = raw.row(i);
    for (std::size_t j = 0; j < row.size(); ++j) {
      if (!std::isfinite(row[j])) {
        throw Error(ErrorKind::NonFinite,
                    "non-finite prediction at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
      if (row[j] < 0.0) {
        throw Error(ErrorKind::NegativeEntry,
                    "negative prediction at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
    const double sum = detail::exact_sum(row);
    if (std::fabs(sum - 1.0) > kRowSumLoadTolerance) {
      throw Error(ErrorKind::RowSumOutOfTolerance,
                  "row " + std::to_string(i) + " sums to " + std::to_string(sum));
    }
    if (std::fabs(sum - 1.0) > kRowSumExactTolerance) {
      for (double& v : row) v /= sum;
    }
  }
  return PredictionMatrix(std::move(raw));
}

/// Checks raw integer labels. The class count is `declared_c` when given,
/// otherwise one past the largest label. Every class must occur.
inline TargetLabels validate_labels(std::span<const std::int64_t> raw,
                                    std::optional<std::size_t> declared_c = std::nullopt) {
  if (raw.empty()) throw Error(ErrorKind::Empty, "label list is empty");
  std::int64_t max_label = -1;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    if (raw[i] < 0 || (declared_c && raw[i] >= static_cast<std::int64_t>(*declared_c))) {
      throw Error(ErrorKind::OutOfRange, "label " + std::to_string(raw[i]) + " at index " + std::to_string(i),
                  i);
    }
    max_label = std::max(max_label, raw[i]);
  }
  const std::size_t c = declared_c ? *declared_c : static_cast<std::size_t>(max_label) + 1;
  if (c < 2) throw Error(ErrorKind::DegenerateDimension, "need at least 2 target classes");

  std::vector<bool> seen(c, false);
  std::vector<int> values(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    values[i] = static_cast<int>(raw[i]);
    seen[values[i]] = true;
  }
  for (std::size_t y = 0; y < c; ++y) {
    if (!seen[y]) throw Error(ErrorKind::MissingClass, "class " + std::to_string(y) + " never occurs", y);
  }
  return TargetLabels(std::move(values), c);
}

inline TargetLabels validate_labels(std::initializer_list<std::int64_t> raw,
                                    std::optional<std::size_t> declared_c = std::nullopt) {
  return validate_labels(std::span<const std::int64_t>(raw.begin(), raw.size()), declared_c);
}

inline TargetLabels validate_labels(std::span<const int> raw, std::optional<std::size_t> declared_c = std::nullopt) {
  std::vector<std::int64_t> wide(raw.begin(), raw.end());
  return validate_labels(std::span<const std::int64_t>(wide), declared_c);
}

inline FeatureMatrix validate_features(Matrix raw) {
  if (raw.rows() == 0 || raw.cols() == 0) throw Error(ErrorKind::EmptyMatrix, "feature matrix is empty");
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t j = 0; j < raw.cols(); ++j) {
      if (!std::isfinite(raw(i, j))) {
        throw Error(ErrorKind::NonFinite,
                    "non-finite feature at (" + std::to_string(i) + ", " + std::to_string(j) + ")");
      }
    }
  }
  return FeatureMatrix(std::move(raw));
}

namespace detail {

inline void require_same_n(std::size_t a, std::size_t b, std::string_view what) {
  if (a != b) {
    throw Error(ErrorKind::LengthMismatch,
                std::string(what) + ": " + std::to_string(a) + " vs " + std::to_string(b) + " examples");
  }
}

}  // namespace detail

}  // namespace xfsc
