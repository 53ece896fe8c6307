#include <cmath>
#include <cstring>
#include <map>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "xfsc/synth.hpp"

using namespace xfsc;

namespace {

oracle::Rows rows_of(const PredictionMatrix& p) {
  oracle::Rows out;
  for (std::size_t i = 0; i < p.n(); ++i) out.emplace_back(p.row(i).begin(), p.row(i).end());
  return out;
}

std::vector<int> labels_of(const TargetLabels& l) { return {l.values().begin(), l.values().end()}; }

double empirical_neg_entropy(const TargetLabels& labels) {
  double h = 0;
  for (std::size_t count : labels.class_counts()) {
    const double p = static_cast<double>(count) / static_cast<double>(labels.n());
    h += p * std::log(p);
  }
  return h;
}

}  // namespace

TEST(GenerateTask, PerfectAlignmentGivesZeroLeep) {
  SynthSpec spec;
  spec.alignment = 1.0;
  spec.noise = 0.0;
  spec.perturb = false;
  const auto task = generate_task(spec);
  EXPECT_EQ(leep_score(task.predictions, task.labels).value, 0.0);
  EXPECT_EQ(eep_holdout_accuracy(task.predictions, task.labels, 1), 1.0);
}

TEST(GenerateTask, NoAlignmentGivesNegativeLabelEntropy) {
  SynthSpec spec;
  spec.n = 4000;
  spec.m = 2;
  spec.c = 2;
  spec.alignment = 0.0;
  spec.perturb = false;
  spec.seed = 5;
  const auto task = generate_task(spec);
  const double leep = leep_score(task.predictions, task.labels).value;
  const auto want = static_cast<double>(oracle::naive_leep(rows_of(task.predictions), labels_of(task.labels), 2));
  EXPECT_NEAR(leep, want, 1e-12);
  // independent predictions: the EEP can do no better than the label prior
  EXPECT_NEAR(leep, empirical_neg_entropy(task.labels), 2e-3);
  EXPECT_GE(leep, empirical_neg_entropy(task.labels) - 1e-12);
}

TEST(GenerateTask, DeterministicAndValid) {
  SynthSpec spec;
  spec.alignment = 0.6;
  spec.noise = 0.3;
  spec.seed = 77;
  const auto a = generate_task(spec);
  const auto b = generate_task(spec);
  EXPECT_EQ(a.predictions, b.predictions);
  EXPECT_EQ(a.features, b.features);
  EXPECT_EQ(a.labels, b.labels);

  spec.seed = 78;
  const auto c = generate_task(spec);
  EXPECT_NE(a.predictions, c.predictions);
  EXPECT_EQ(c.predictions.n(), spec.n);
  EXPECT_EQ(c.features.d(), spec.c);
  const auto s = leep_score(c.predictions, c.labels).value;
  EXPECT_LE(s, 0.0);
}

TEST(GenerateTask, PlantedMapIsSurjective) {
  SynthSpec spec;
  spec.m = 12;
  spec.c = 5;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    spec.seed = seed;
    const auto task = generate_task(spec);
    std::vector<int> hits(spec.c, 0);
    for (int y : task.planted_map) ++hits[y];
    for (int h : hits) EXPECT_GT(h, 0);
  }
}

TEST(GenerateTask, AlignmentOnlyChangesPredictions) {
  SynthSpec lo, hi;
  lo.seed = hi.seed = 3;
  lo.alignment = 0.2;
  hi.alignment = 0.8;
  const auto a = generate_task(lo);
  const auto b = generate_task(hi);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_EQ(a.planted_map, b.planted_map);
  EXPECT_EQ(a.features, b.features);
}

TEST(GenerateTask, InvalidSpecs) {
  SynthSpec spec;
  spec.m = 3;
  spec.c = 5;
  EXPECT_THROW(generate_task(spec), Error);
  spec = {};
  spec.alignment = 1.5;
  EXPECT_THROW(generate_task(spec), Error);
  spec = {};
  spec.n = 3;
  EXPECT_THROW(generate_task(spec), Error);
  spec = {};
  spec.noise = -1;
  EXPECT_THROW(generate_task(spec), Error);
}

TEST(Sweep, PerfectAlignmentRecords) {
  SynthSpec base;
  base.perturb = false;
  const std::vector<double> alignments{1.0};
  const auto recs = sweep(base, alignments, 3);
  ASSERT_EQ(recs.size(), 3u);
  for (const auto& r : recs) {
    EXPECT_EQ(*r.transfer_metric, 1.0);
    EXPECT_EQ(r.scores.at(Measure::leep), 0.0);
  }
}

TEST(Sweep, OneRecordPerTask) {
  const std::vector<double> alignments{0.4};
  EXPECT_EQ(sweep(SynthSpec{}, alignments, 1).size(), 1u);
  EXPECT_THROW(sweep(SynthSpec{}, std::span<const double>{}, 1), Error);
}

TEST(Sweep, MeanLeepIncreasesWithAlignment) {
  SynthSpec base;
  base.n = 300;
  base.seed = 21;
  const std::vector<double> alignments{0.0, 0.25, 0.5, 0.75, 1.0};
  const auto recs = sweep(base, alignments, 20);
  std::vector<double> means(alignments.size(), 0.0);
  for (std::size_t k = 0; k < recs.size(); ++k) means[k / 20] += recs[k].scores.at(Measure::leep) / 20.0;
  for (std::size_t a = 1; a < means.size(); ++a) EXPECT_GE(means[a], means[a - 1]) << "level " << a;
}

TEST(Sweep, Deterministic) {
  SynthSpec base;
  base.n = 100;
  const std::vector<double> alignments{0.3, 0.9};
  const auto a = sweep(base, alignments, 2);
  const auto b = sweep(base, alignments, 2);
  for (std::size_t k = 0; k < a.size(); ++k) {
    EXPECT_EQ(a[k].task_id, b[k].task_id);
    EXPECT_EQ(a[k].scores, b[k].scores);
    EXPECT_EQ(a[k].transfer_metric, b[k].transfer_metric);
  }
}

TEST(Ranking, NineModelsFollowAlignmentOrder) {
  std::vector<ExperimentRecord> recs;
  for (int k = 1; k <= 9; ++k) {
    SynthSpec spec;
    spec.n = 1000;
    spec.m = 20;
    spec.seed = 99;
    spec.alignment = k / 10.0;
    const auto task = generate_task(spec);
    ExperimentRecord r;
    r.model_id = "model" + std::to_string(k);
    r.scores[Measure::leep] = leep_score(task.predictions, task.labels).value;
    recs.push_back(r);
  }
  // present them shuffled
  std::swap(recs[0], recs[5]);
  std::swap(recs[2], recs[8]);
  const auto ranking = rank_models(recs, Measure::leep);
  for (int k = 0; k < 9; ++k) EXPECT_EQ(ranking.entries[k].model_id, "model" + std::to_string(9 - k));
}

TEST(HoldoutAccuracy, ChanceLevelWithoutAlignment) {
  SynthSpec spec;
  spec.n = 5000;
  spec.alignment = 0.0;
  spec.seed = 4;
  const auto task = generate_task(spec);
  EXPECT_NEAR(eep_holdout_accuracy(task.predictions, task.labels, 2), 1.0 / spec.c, 0.05);
}
