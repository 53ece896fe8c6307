#pragma once

// Synthetic source-model / target-task pairs with a planted label alignment.
//
// A surjective map g from source labels onto target classes is planted. For
// each example, with probability `alignment` the source model's prediction
// concentrates on a source label in g^-1(y_i), otherwise on a uniformly
// random source label. Features are one-hot class means plus Gaussian noise.
//
// The planted map and the labels depend only on (n, m, c, seed), and every
// example consumes the same random draws whatever the alignment, so two specs
// that differ only in alignment share labels and the aligned example set
// grows monotonically with alignment.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "xfsc/analysis.hpp"
#include "xfsc/baselines.hpp"
#include "xfsc/error.hpp"
#include "xfsc/head.hpp"
#include "xfsc/leep.hpp"
#include "xfsc/types.hpp"

namespace xfsc {

/// Dirichlet concentration on the chosen source label and on every other label.
inline constexpr double kPlantedConcentration = 10.0;
inline constexpr double kBackgroundConcentration = 0.1;
inline constexpr double kHoldoutTrainFraction = 0.8;

struct SynthSpec {
  std::size_t n = 500;
  std::size_t m = 10;
  std::size_t c = 5;
  double alignment = 1.0;
  double noise = 0.0;
  std::uint64_t seed = 0;
  /// When false, prediction rows are exact one-hot vectors.
  bool perturb = true;

  void validate() const {
    if (c < 2) throw Error(ErrorKind::InvalidSpec, "c must be at least 2");
    if (m < c) throw Error(ErrorKind::InvalidSpec, "m must be at least c for the planted map");
    if (n < c) throw Error(ErrorKind::InvalidSpec, "n must be at least c so every class occurs");
    if (!(alignment >= 0.0 && alignment <= 1.0)) throw Error(ErrorKind::InvalidSpec, "alignment must be in [0, 1]");
    if (!(noise >= 0.0) || !std::isfinite(noise)) throw Error(ErrorKind::InvalidSpec, "noise must be >= 0");
  }
};

struct SynthTask {
  PredictionMatrix predictions;
  FeatureMatrix features;
  TargetLabels labels;
  std::vector<int> planted_map;  // g(z) for each source label z
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Uniform double in [0, 1) from the top 53 bits.
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace detail

/// Independent per-task seed from a base seed and two indices.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
  return detail::splitmix64(detail::splitmix64(detail::splitmix64(base) ^ a) ^ (b * 0xd1b54a32d192ed03ULL));
}

inline SynthTask generate_task(const SynthSpec& spec) {
  spec.validate();
  const std::size_t n = spec.n, m = spec.m, c = spec.c;
  std::mt19937_64 rng(spec.seed);

  // planted surjection: the first c source labels of a random permutation
  // cover every class, the rest map uniformly
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  detail::shuffle_indices(perm, rng);
  std::vector<int> planted(m);
  for (std::size_t k = 0; k < m; ++k) {
    planted[perm[k]] = k < c ? static_cast<int>(k) : static_cast<int>(detail::uniform_below(rng, c));
  }
  std::vector<std::vector<std::size_t>> preimage(c);
  for (std::size_t z = 0; z < m; ++z) preimage[static_cast<std::size_t>(planted[z])].push_back(z);

  // labels: uniform draws, with the first c forced so every class occurs
  std::vector<std::int64_t> raw_labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw_labels[i] = i < c ? static_cast<std::int64_t>(i) : static_cast<std::int64_t>(detail::uniform_below(rng, c));
  }
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    detail::shuffle_indices(order, rng);
    std::vector<std::int64_t> shuffled(n);
    for (std::size_t i = 0; i < n; ++i) shuffled[i] = raw_labels[order[i]];
    raw_labels.swap(shuffled);
  }

  Matrix pred(n, m, 0.0);
  Matrix feats(n, c, 0.0);
  std::gamma_distribution<double> planted_gamma(kPlantedConcentration, 1.0);
  std::gamma_distribution<double> background_gamma(kBackgroundConcentration, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> draws(m);

  for (std::size_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(raw_labels[i]);
    const double u = detail::uniform01(rng);
    const auto& pre = preimage[y];
    const std::size_t aligned_z = pre[detail::uniform_below(rng, pre.size())];
    const std::size_t random_z = detail::uniform_below(rng, m);
    const std::size_t z = u < spec.alignment ? aligned_z : random_z;

    const double planted_draw = planted_gamma(rng);
    for (std::size_t k = 0; k < m; ++k) draws[k] = background_gamma(rng);
    auto row = pred.row(i);
    if (spec.perturb) {
      draws[z] = planted_draw;
      detail::ExactSum total;
      for (double g : draws) total.add(g);
      const double t = total.value();
      for (std::size_t k = 0; k < m; ++k) row[k] = draws[k] / t;
    } else {
      row[z] = 1.0;
    }

    auto f = feats.row(i);
    for (std::size_t j = 0; j < c; ++j) {
      const double eps = gauss(rng);
      f[j] = (j == y ? 1.0 : 0.0) + spec.noise * eps;
    }
  }

  return SynthTask{validate_predictions(std::move(pred)), validate_features(std::move(feats)),
                   validate_labels(std::span<const std::int64_t>(raw_labels), c), std::move(planted)};
}

/// Accuracy of the argmax EEP fitted on a seeded 80% split and evaluated on
/// the remaining 20%.
inline double eep_holdout_accuracy(const PredictionMatrix& pred, const TargetLabels& labels, std::uint64_t seed,
                                   double train_fraction = kHoldoutTrainFraction) {
  detail::require_same_n(pred.n(), labels.n(), "eep_holdout_accuracy");
  const std::size_t n = pred.n();
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
  if (n_train == 0 || n_train >= n) throw Error(ErrorKind::InsufficientData, "hold-out split leaves an empty side");

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  detail::shuffle_indices(order, rng);

  const std::span<const std::size_t> train(order.data(), n_train);
  const auto cond = conditional_from_joint(empirical_joint(pred, labels, train));
  std::size_t correct = 0;
  for (std::size_t k = n_train; k < n; ++k) {
    const std::size_t i = order[k];
    const auto probs = eep_predict(pred.row(i), cond);
    const auto best = static_cast<std::size_t>(std::max_element(probs.begin(), probs.end()) - probs.begin());
    if (best == static_cast<std::size_t>(labels[i])) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(n - n_train);
}

/// Scores one generated task with LEEP, NCE and H-score and attaches the
/// EEP hold-out accuracy as its transfer metric.
inline ExperimentRecord score_task(const SynthTask& task, std::string task_id, std::uint64_t split_seed) {
  ExperimentRecord rec;
  rec.task_id = std::move(task_id);
  rec.model_id = rec.task_id;
  rec.scores[Measure::leep] = leep_score(task.predictions, task.labels).value;
  rec.scores[Measure::nce] = nce_score(task.predictions, task.labels).value;
  rec.scores[Measure::hscore] = h_score(task.features, task.labels).value;
  rec.transfer_metric = eep_holdout_accuracy(task.predictions, task.labels, split_seed);
  rec.metric_kind = MetricKind::accuracy;
  return rec;
}

/// Generates `tasks_per_point` tasks per alignment level and scores each.
/// Records come out grouped by alignment, in input order.
inline std::vector<ExperimentRecord> sweep(const SynthSpec& base, std::span<const double> alignments,
                                           std::size_t tasks_per_point) {
  if (alignments.empty()) throw Error(ErrorKind::InvalidSpec, "sweep needs at least one alignment");
  if (tasks_per_point == 0) throw Error(ErrorKind::InvalidSpec, "sweep needs at least one task per point");
  std::vector<ExperimentRecord> records;
  records.reserve(alignments.size() * tasks_per_point);
  for (std::size_t a = 0; a < alignments.size(); ++a) {
    for (std::size_t t = 0; t < tasks_per_point; ++t) {
      SynthSpec spec = base;
      spec.alignment = alignments[a];
      spec.seed = derive_seed(base.seed, a, t);
      const auto task = generate_task(spec);
      records.push_back(score_task(task, fmt::format("a{:.3f}-t{}", alignments[a], t), derive_seed(spec.seed, 0x5eed)));
    }
  }
  return records;
}

}  // namespace xfsc
