// Acceptance runner: one PASS/FAIL line per criterion.
// Exit status is nonzero on any FAIL not named with --known-failure N.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <random>
#include <set>
#include <string>

#include <fmt/format.h>

#include "oracles.hpp"
#include "xfsc/xfsc.hpp"

using namespace xfsc;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

int failures = 0;
std::set<int> known_failures;

void criterion(int id, const std::string& title, const std::function<Outcome()>& body, double limit_seconds = 0) {
  const auto start = std::chrono::steady_clock::now();
  Outcome out;
  try {
    out = body();
  } catch (const std::exception& e) {
    out = {false, std::string("unexpected exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (limit_seconds > 0 && secs >= limit_seconds) {
    out.pass = false;
    out.detail += fmt::format("; too slow ({:.2f}s >= {}s)", secs, limit_seconds);
  }
  const bool known = known_failures.count(id) > 0;
  if (!out.pass && !known) ++failures;
  fmt::print("{} criterion {:>2}: {} [{:.2f}s] {}{}\n", out.pass ? "PASS" : "FAIL", id, title, secs, out.detail,
             !out.pass && known ? " (known failure)" : "");
}

bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

// Permute the rows, the source columns and the target class ids together.
struct Shuffled {
  oracle::Rows theta;
  std::vector<int> labels;
};

Shuffled shuffle_instance(const oracle::Instance& inst, std::mt19937_64& rng) {
  const std::size_t n = inst.theta.size(), m = inst.theta[0].size();
  std::vector<std::size_t> rows(n), cols(m);
  std::vector<int> classes(static_cast<std::size_t>(inst.c));
  std::iota(rows.begin(), rows.end(), 0);
  std::iota(cols.begin(), cols.end(), 0);
  std::iota(classes.begin(), classes.end(), 0);
  std::shuffle(rows.begin(), rows.end(), rng);
  std::shuffle(cols.begin(), cols.end(), rng);
  std::shuffle(classes.begin(), classes.end(), rng);
  Shuffled out{oracle::Rows(n, std::vector<double>(m)), std::vector<int>(n)};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t z = 0; z < m; ++z) out.theta[i][cols[z]] = inst.theta[rows[i]][z];
    out.labels[i] = classes[static_cast<std::size_t>(inst.labels[rows[i]])];
  }
  return out;
}

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  throw std::runtime_error("no error raised");
}

}  // namespace

int main(int argc, char** argv) {
  for (int a = 1; a + 1 < argc; a += 2) {
    if (std::string(argv[a]) == "--known-failure") known_failures.insert(std::stoi(argv[a + 1]));
  }
  std::mt19937_64 rng(20240601);

  criterion(1, "leep_score matches the naive oracle on 500 instances within 1e-12", [&] {
    double worst = 0;
    for (int t = 0; t < 500; ++t) {
      const auto inst = oracle::random_instance(rng, 20, 5, 4);
      const double got = leep_score(oracle::to_predictions(inst.theta), oracle::to_labels(inst.labels, inst.c)).value;
      worst = std::max(worst, std::abs(got - static_cast<double>(oracle::naive_leep(inst.theta, inst.labels, inst.c))));
    }
    return Outcome{worst <= 1e-12, fmt::format("max |diff| {:.3g}", worst)};
  }, 5.0);

  criterion(2, "analytic anchors", [&] {
    const double diag = leep_score(oracle::to_predictions({{1, 0}, {0, 1}}), oracle::to_labels({0, 1}, 2)).value;
    const double uni =
        leep_score(oracle::to_predictions(oracle::Rows(4, {0.5, 0.5})), oracle::to_labels({0, 1, 0, 1}, 2)).value;
    const double hand = leep_score(oracle::to_predictions({{0.9, 0.1}, {0.2, 0.8}, {0.6, 0.4}}),
                                   oracle::to_labels({0, 1, 0}, 2))
                            .value;
    const bool ok = diag == 0.0 && std::abs(uni - std::log(0.5)) <= 1e-12 && std::abs(hand + 0.40871) <= 1e-4;
    return Outcome{ok, fmt::format("diagonal {} uniform {:.17g} hand {:.17g}", diag, uni, hand)};
  });

  criterion(3, "NCE lower bound on 1000 fuzzed instances", [&] {
    int violations = 0;
    double tightest = -INFINITY;
    for (int t = 0; t < 1000; ++t) {
      const auto inst = oracle::random_instance(rng, 30, 6, 5);
      const auto pred = oracle::to_predictions(inst.theta);
      const auto labels = oracle::to_labels(inst.labels, inst.c);
      const double gap = leep_lower_bound(pred, labels) - leep_score(pred, labels).value;
      tightest = std::max(tightest, gap);
      if (gap > 1e-9) ++violations;
    }
    return Outcome{violations == 0, fmt::format("violations {} max(bound - leep) {:.3g}", violations, tightest)};
  });

  criterion(4, "optimal two-stage log-likelihood never below LEEP", [&] {
    TrainConfig quick;
    quick.epochs = 20;
    int violations = 0;
    for (int t = 0; t < 200; ++t) {
      const auto inst = oracle::random_instance(rng, 20, 5, 4);
      const auto pred = oracle::to_predictions(inst.theta);
      const auto labels = oracle::to_labels(inst.labels, inst.c);
      const auto r = two_stage_optimal(pred, validate_features(pred.matrix()), labels, quick);
      if (!(r.l_star >= leep_score(pred, labels).value)) ++violations;
    }
    // documentation only: how often the retrained head alone beats LEEP on separable features
    int head_wins = 0;
    const int trials = 50;
    for (int t = 0; t < trials; ++t) {
      SynthSpec spec;
      spec.n = 200;
      spec.alignment = 0.5;
      spec.noise = 0.1;
      spec.seed = derive_seed(4, static_cast<std::uint64_t>(t));
      const auto task = generate_task(spec);
      const auto r = two_stage_optimal(task.predictions, task.features, task.labels);
      if (r.head_log_likelihood > r.leep) ++head_wins;
    }
    const double share = static_cast<double>(head_wins) / trials;
    return Outcome{violations == 0 && share >= 0.9,
                   fmt::format("violations {}; trained head beats LEEP on {:.0f}% of separable tasks", violations,
                               100 * share)};
  });

  criterion(5, "inner sums in (0,1], scores <= 0, H-score within [0, rank]", [&] {
    std::size_t bad = 0;
    for (int t = 0; t < 500; ++t) {
      const auto inst = oracle::random_instance(rng, 30, 6, 5);
      const auto pred = oracle::to_predictions(inst.theta);
      const auto labels = oracle::to_labels(inst.labels, inst.c);
      for (double s : leep_inner_sums(pred, labels))
        if (!(s > 0.0 && s <= 1.0)) ++bad;
      if (!(leep_score(pred, labels).value <= 0.0)) ++bad;
      if (!(nce_score(pred, labels).value <= 0.0)) ++bad;
      const auto f = oracle::random_features(rng, inst.labels.size(), 1 + t % 6);
      const auto h = h_score_details(oracle::to_features(f), labels);
      if (!(h.value >= 0.0 && h.value <= static_cast<double>(h.rank) + 1e-6)) ++bad;
    }
    return Outcome{bad == 0, fmt::format("out-of-range values {}", bad)};
  });

  criterion(6, "invariance suite", [&] {
    int perm_bad = 0, dup_bad = 0, h_bad = 0, pearson_bad = 0;
    for (int t = 0; t < 300; ++t) {
      const auto inst = oracle::random_instance(rng, 20, 5, 4);
      const double base = leep_score(oracle::to_predictions(inst.theta), oracle::to_labels(inst.labels, inst.c)).value;
      const auto sh = shuffle_instance(inst, rng);
      if (!same_bits(base, leep_score(oracle::to_predictions(sh.theta), oracle::to_labels(sh.labels, inst.c)).value))
        ++perm_bad;
      oracle::Rows theta2 = inst.theta;
      theta2.insert(theta2.end(), inst.theta.begin(), inst.theta.end());
      std::vector<int> y2 = inst.labels;
      y2.insert(y2.end(), inst.labels.begin(), inst.labels.end());
      if (std::abs(base - leep_score(oracle::to_predictions(theta2), oracle::to_labels(y2, inst.c)).value) > 1e-12)
        ++dup_bad;
    }
    // translation of exactly representable features
    std::uniform_int_distribution<int> v(-8, 8);
    std::vector<int> y(16);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 2);
    const auto labels = oracle::to_labels(y, 2);
    for (int t = 0; t < 100; ++t) {
      oracle::Rows f(16, std::vector<double>(3));
      for (auto& row : f)
        for (double& x : row) x = v(rng);
      oracle::Rows g = f;
      for (auto& row : g) {
        row[0] += 32;
        row[2] -= 7;
      }
      if (!same_bits(h_score(oracle::to_features(f), labels).value, h_score(oracle::to_features(g), labels).value))
        ++h_bad;
    }
    std::normal_distribution<double> g(0.0, 1.0);
    for (int t = 0; t < 100; ++t) {
      std::vector<double> xs(25), ys(25), xa(25);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        xs[i] = g(rng);
        ys[i] = 0.5 * xs[i] + g(rng);
        xa[i] = 4.0 * xs[i] - 11.0;
      }
      if (std::abs(pearson(xs, ys) - pearson(xa, ys)) > 1e-12) ++pearson_bad;
    }
    return Outcome{perm_bad + dup_bad + h_bad + pearson_bad == 0,
                   fmt::format("permutation/relabel {} duplication {} h-translation {} pearson-affine {}", perm_bad,
                               dup_bad, h_bad, pearson_bad)};
  });

  criterion(7, "statistics", [&] {
    const std::vector<double> xs{1, 2, 3, 4}, ys{2, 1, 4, 3};
    const double r = pearson(xs, ys);
    bool monotone = true;
    for (std::size_t n : {3u, 5u, 10u, 40u, 220u}) {
      double prev = 1.0;
      for (int k = 0; k <= 1000; ++k) {
        const double p = p_value_two_sided(k / 1000.0, n);
        if (p > prev || p < 0) monotone = false;
        prev = p;
      }
    }
    const bool endpoints = p_value_two_sided(1.0, 10) == 0.0 && p_value_two_sided(-1.0, 10) == 0.0;
    return Outcome{std::abs(r - 0.6) <= 1e-12 && monotone && endpoints,
                   fmt::format("r {:.17g} monotone {} |r|=1 gives p=0 {}", r, monotone, endpoints)};
  });

  std::vector<ExperimentRecord> sweep_records;
  criterion(8, "synthetic sweep correlation (220 tasks)", [&] {
    SynthSpec base;
    base.n = 500;
    base.m = 10;
    base.c = 5;
    std::vector<double> alignments;
    for (int k = 0; k <= 10; ++k) alignments.push_back(k / 10.0);
    sweep_records = sweep(base, alignments, 20);
    const auto leep = correlate(sweep_records, Measure::leep, MetricKind::accuracy);
    const auto nce = correlate(sweep_records, Measure::nce, MetricKind::accuracy);
    const bool ok = sweep_records.size() == 220 && leep.r > 0.8 && leep.r >= nce.r - 0.05;
    return Outcome{ok, fmt::format("r(leep) {:.4f} (p {:.3g}) r(nce) {:.4f}", leep.r, leep.p_value, nce.r)};
  }, 60.0);

  criterion(9, "level means nondecreasing over 5 LEEP bins", [&] {
    if (sweep_records.empty()) return Outcome{false, "no sweep records"};
    const auto rep = make_level_report(sweep_records, Measure::leep, 5);
    bool ok = true;
    std::string means;
    std::optional<double> prev;
    for (const auto& m : rep.level_means) {
      means += m ? fmt::format(" {:.3f}", *m) : std::string(" -");
      if (!m) continue;
      if (prev && *m < *prev) ok = false;
      prev = m;
    }
    return Outcome{ok, "means" + means};
  });

  criterion(10, "binary round-trip and malformed-input corpus", [&] {
    const fs::path dir = fs::temp_directory_path() / "xfsc_acceptance";
    fs::remove_all(dir);
    fs::create_directories(dir);
    int mismatched = 0;
    std::uniform_int_distribution<std::size_t> dim(1, 40);
    std::uniform_int_distribution<std::uint64_t> bits;
    for (int t = 0; t < 100; ++t) {
      Matrix m(dim(rng), dim(rng));
      for (double& x : m.values()) {
        // arbitrary finite bit patterns, including subnormals and -0
        do {
          const std::uint64_t b = bits(rng);
          std::memcpy(&x, &b, sizeof x);
        } while (!std::isfinite(x));
      }
      io::write_matrix_bin(m, dir / "m.bin");
      const Matrix back = io::read_matrix_bin(dir / "m.bin");
      if (back.rows() != m.rows() || back.cols() != m.cols() ||
          std::memcmp(back.values().data(), m.values().data(), m.values().size() * sizeof(double)) != 0)
        ++mismatched;
    }

    const std::string good = io::encode_matrix_bin(Matrix::from_rows({{0.5, 0.5}, {0.25, 0.75}}));
    auto put = [&](const std::string& name, const std::string& bytes) {
      std::ofstream(dir / name, std::ios::binary) << bytes;
      return dir / name;
    };
    std::string bad_magic = good, v2 = good;
    bad_magic[1] = 'Q';
    v2[4] = 2;
    struct Case {
      std::string name;
      std::function<void()> load;
      ErrorKind want;
    };
    const std::vector<Case> corpus{
        {"csv wrong arity", [&] { io::read_matrix_csv(put("arity.csv", "0.5,0.5\n0.1,0.2,0.7\n")); }, ErrorKind::Malformed},
        {"csv bad token", [&] { io::read_matrix_csv(put("token.csv", "0.5,abc\n")); }, ErrorKind::Malformed},
        {"csv no rows", [&] { io::read_matrix_csv(put("empty.csv", "# nothing\n\n")); }, ErrorKind::Malformed},
        {"bin bad magic", [&] { io::read_matrix_bin(put("magic.bin", bad_magic)); }, ErrorKind::UnsupportedVersion},
        {"bin version 2", [&] { io::read_matrix_bin(put("v2.bin", v2)); }, ErrorKind::UnsupportedVersion},
        {"bin truncated payload", [&] { io::read_matrix_bin(put("short.bin", good.substr(0, good.size() - 3))); },
         ErrorKind::DimensionHeaderMismatch},
        {"bin trailing bytes", [&] { io::read_matrix_bin(put("long.bin", good + std::string(8, '\0'))); },
         ErrorKind::DimensionHeaderMismatch},
        {"bin truncated header", [&] { io::read_matrix_bin(put("hdr.bin", good.substr(0, 12))); }, ErrorKind::Malformed},
        {"labels non-integer", [&] { io::read_labels(put("labels.txt", "0\n1\ntwo\n")); }, ErrorKind::Malformed},
        {"manifest version 2", [&] { io::read_manifest(put("manifest.json", R"({"version": "2", "entries": []})")); },
         ErrorKind::UnsupportedVersion},
    };
    std::string wrong;
    for (const auto& c : corpus) {
      try {
        const ErrorKind got = kind_of(c.load);
        if (got != c.want) wrong += fmt::format(" [{}: got {}]", c.name, to_string(got));
      } catch (const std::exception& e) {
        wrong += fmt::format(" [{}: {}]", c.name, e.what());
      }
    }
    fs::remove_all(dir);
    return Outcome{mismatched == 0 && wrong.empty(),
                   fmt::format("round-trip mismatches {}; corpus {} files{}", mismatched, corpus.size(),
                               wrong.empty() ? ", all classified" : wrong)};
  });

  fmt::print("{}\n", failures == 0 ? "no unexpected failures" : fmt::format("{} criteria FAILED", failures));
  return failures == 0 ? 0 : 1;
}
