#pragma once

// Linear softmax heads on frozen features: mini-batch SGD training, average
// log-likelihood, and the two-stage selection between the trained head and
// the EEP.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xfsc/detail/exact_sum.hpp"
#include "xfsc/error.hpp"
#include "xfsc/leep.hpp"
#include "xfsc/types.hpp"

namespace xfsc {

/// Logits are weights * f + bias; weights are c x d.
struct LinearHead {
  Matrix weights;
  std::vector<double> bias;

  std::size_t c() const noexcept { return weights.rows(); }
  std::size_t d() const noexcept { return weights.cols(); }

  friend bool operator==(const LinearHead&, const LinearHead&) = default;
};

struct TrainConfig {
  double learning_rate = 0.01;
  std::size_t epochs = 100;
  std::size_t batch_size = 10;
  std::uint64_t seed = 0;
  double l2 = 0.0;

  void validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
      throw Error(ErrorKind::InvalidSpec, "learning rate must be positive");
    }
    if (batch_size == 0) throw Error(ErrorKind::InvalidSpec, "batch size must be positive");
    if (!(l2 >= 0.0) || !std::isfinite(l2)) throw Error(ErrorKind::InvalidSpec, "l2 must be nonnegative");
  }
};

namespace detail {

inline void head_logits(const LinearHead& head, std::span<const double> f, std::span<double> out) {
  for (std::size_t k = 0; k < head.c(); ++k) {
    const auto w = head.weights.row(k);
    double z = head.bias[k];
    for (std::size_t j = 0; j < f.size(); ++j) z += w[j] * f[j];
    out[k] = z;
  }
}

/// log softmax(logits)[y] via log-sum-exp.
inline double log_softmax_at(std::span<const double> logits, std::size_t y) {
  const double shift = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - shift);
  return logits[y] - shift - std::log(total);
}

/// Uniform integer in [0, bound) from a 64-bit engine, without modulo bias.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % bound;
}

/// Fisher-Yates with a portable index draw; std::shuffle is implementation-defined.
inline void shuffle_indices(std::vector<std::size_t>& idx, std::mt19937_64& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_below(rng, i));
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace detail

inline LinearHead zero_head(std::size_t c, std::size_t d) { return LinearHead{Matrix(c, d), std::vector<double>(c, 0.0)}; }

/// (1/n) sum_i log softmax(W f_i + b)[y_i].
inline double avg_log_likelihood(const LinearHead& head, const FeatureMatrix& features, const TargetLabels& labels) {
  detail::require_same_n(features.n(), labels.n(), "avg_log_likelihood");
  if (head.d() != features.d() || head.c() != labels.c() || head.bias.size() != head.c()) {
    throw Error(ErrorKind::DimensionMismatch, "head is " + std::to_string(head.c()) + "x" + std::to_string(head.d()) +
                                                  ", data has c=" + std::to_string(labels.c()) +
                                                  " d=" + std::to_string(features.d()));
  }
  std::vector<double> logits(head.c());
  detail::ExactSum acc;
  for (std::size_t i = 0; i < features.n(); ++i) {
    detail::head_logits(head, features.row(i), logits);
    acc.add(detail::log_softmax_at(logits, static_cast<std::size_t>(labels[i])));
  }
  return std::min(0.0, acc.value() / static_cast<double>(features.n()));
}

/// Mini-batch gradient descent on the average cross-entropy (plus optional
/// l2/2 * ||W||^2), starting from a zero head. Each epoch reshuffles the
/// examples with a generator seeded from cfg.seed, so training is
/// deterministic. batch_size >= n gives full-batch gradient descent.
inline LinearHead train_linear_head(const FeatureMatrix& features, const TargetLabels& labels,
                                    const TrainConfig& cfg = {}) {
  detail::require_same_n(features.n(), labels.n(), "train_linear_head");
  cfg.validate();
  const std::size_t n = features.n();
  const std::size_t d = features.d();
  const std::size_t c = labels.c();

  LinearHead head = zero_head(c, d);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  Matrix grad_w(c, d);
  std::vector<double> grad_b(c);
  std::vector<double> probs(c);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    detail::shuffle_indices(order, rng);
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t stop = std::min(n, start + cfg.batch_size);
      std::fill(grad_w.values().begin(), grad_w.values().end(), 0.0);
      std::fill(grad_b.begin(), grad_b.end(), 0.0);

      for (std::size_t b = start; b < stop; ++b) {
        const std::size_t i = order[b];
        const auto f = features.row(i);
        detail::head_logits(head, f, probs);
        const double shift = *std::max_element(probs.begin(), probs.end());
        double total = 0.0;
        for (double& p : probs) {
          p = std::exp(p - shift);
          total += p;
        }
        for (double& p : probs) p /= total;
        probs[static_cast<std::size_t>(labels[i])] -= 1.0;
        for (std::size_t k = 0; k < c; ++k) {
          auto gw = grad_w.row(k);
          for (std::size_t j = 0; j < d; ++j) gw[j] += probs[k] * f[j];
          grad_b[k] += probs[k];
        }
      }

      const double scale = cfg.learning_rate / static_cast<double>(stop - start);
      for (std::size_t k = 0; k < c; ++k) {
        auto w = head.weights.row(k);
        const auto gw = grad_w.row(k);
        for (std::size_t j = 0; j < d; ++j) w[j] -= scale * gw[j] + cfg.learning_rate * cfg.l2 * w[j];
        head.bias[k] -= scale * grad_b[k];
      }
    }
  }

  for (double w : head.weights.values()) {
    if (!std::isfinite(w)) throw Error(ErrorKind::NonFiniteLoss, "training diverged; lower the learning rate");
  }
  for (double b : head.bias) {
    if (!std::isfinite(b)) throw Error(ErrorKind::NonFiniteLoss, "training diverged; lower the learning rate");
  }
  if (!std::isfinite(avg_log_likelihood(head, features, labels))) {
    throw Error(ErrorKind::NonFiniteLoss, "non-finite log-likelihood after training");
  }
  return head;
}

enum class HeadChoice { trained_head, eep };

constexpr std::string_view to_string(HeadChoice choice) {
  return choice == HeadChoice::eep ? "eep" : "trained_head";
}

struct TwoStageResult {
  HeadChoice best = HeadChoice::eep;
  double l_star = 0.0;
  double head_log_likelihood = 0.0;
  double leep = 0.0;
  LinearHead head;
};

/// Trains a head on the features, then keeps whichever of {trained head, EEP}
/// has the larger average log-likelihood. The EEP's average log-likelihood is
/// the LEEP score; ties go to the EEP.
inline TwoStageResult two_stage_optimal(const PredictionMatrix& pred, const FeatureMatrix& features,
                                        const TargetLabels& labels, const TrainConfig& cfg = {}) {
  detail::require_same_n(pred.n(), labels.n(), "two_stage_optimal");
  detail::require_same_n(features.n(), labels.n(), "two_stage_optimal");
  TwoStageResult out;
  out.leep = leep_score(pred, labels).value;
  out.head = train_linear_head(features, labels, cfg);
  out.head_log_likelihood = avg_log_likelihood(out.head, features, labels);
  if (out.leep >= out.head_log_likelihood) {
    out.best = HeadChoice::eep;
    out.l_star = out.leep;
  } else {
    out.best = HeadChoice::trained_head;
    out.l_star = out.head_log_likelihood;
  }
  return out;
}

}  // namespace xfsc
