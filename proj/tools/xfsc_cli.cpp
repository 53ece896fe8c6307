// xfsc: transferability scores from exported source-model predictions.
//
// Exit codes: 0 success, 1 validation error (or a failed check), 2 I/O error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "CLI11.hpp"
#include "xfsc/xfsc.hpp"

namespace fs = std::filesystem;
using namespace xfsc;

namespace {

constexpr int kExitValidation = 1;
constexpr int kExitIo = 2;

std::string num(double v) { return fmt::format("{:.12g}", v); }

std::optional<io::MatrixFormat> parse_format(const std::string& name) {
  if (name.empty()) return std::nullopt;
  return name == "bin" ? io::MatrixFormat::bin : io::MatrixFormat::csv;
}

Measure require_measure(const std::string& name) {
  const auto m = parse_measure(name);
  if (!m) throw Error(ErrorKind::InvalidSpec, "unknown measure '" + name + "'");
  return *m;
}

struct Inputs {
  std::optional<PredictionMatrix> predictions;
  std::optional<FeatureMatrix> features;
  TargetLabels labels;
};

Inputs load_inputs(const fs::path& predictions, const fs::path& labels, const std::optional<fs::path>& features,
                   std::optional<io::MatrixFormat> format, bool need_predictions, bool need_features) {
  const auto raw_labels = io::read_labels(labels);
  Inputs in{std::nullopt, std::nullopt, validate_labels(std::span<const std::int64_t>(raw_labels))};
  if (need_predictions) {
    in.predictions = validate_predictions(io::read_matrix(predictions, format));
    detail::require_same_n(in.predictions->n(), in.labels.n(), "predictions vs labels");
  }
  if (features) {
    in.features = validate_features(io::read_matrix(*features, format));
    detail::require_same_n(in.features->n(), in.labels.n(), "features vs labels");
  } else if (need_features) {
    throw Error(ErrorKind::InvalidSpec, "this measure needs --features");
  }
  return in;
}

Score compute(Measure measure, const Inputs& in) {
  switch (measure) {
    case Measure::leep: return leep_score(*in.predictions, in.labels);
    case Measure::nce: return nce_score(*in.predictions, in.labels);
    case Measure::hscore: return h_score(*in.features, in.labels);
    case Measure::feature_leep: return feature_softmax_leep(*in.features, in.labels);
  }
  throw Error(ErrorKind::InvalidSpec, "unknown measure");
}

bool needs_features(Measure m) { return m == Measure::hscore || m == Measure::feature_leep; }

std::vector<ExperimentRecord> score_manifest(const io::Manifest& manifest, Measure measure) {
  std::vector<ExperimentRecord> records;
  for (const auto& entry : manifest.entries) {
    if (needs_features(measure) && !entry.features_path) {
      throw Error(ErrorKind::InvalidSpec, "entry '" + entry.model_id + "' has no features_path");
    }
    const auto in = load_inputs(entry.predictions_path, entry.labels_path, entry.features_path, std::nullopt,
                                !needs_features(measure), needs_features(measure));
    ExperimentRecord rec;
    rec.task_id = entry.model_id;
    rec.model_id = entry.model_id;
    rec.scores[measure] = compute(measure, in).value;
    rec.transfer_metric = entry.transfer_metric;
    rec.metric_kind = entry.metric_kind.value_or(MetricKind::accuracy);
    records.push_back(std::move(rec));
  }
  return records;
}

void print_json(const io::json& doc) { std::cout << doc.dump(2) << '\n'; }

std::vector<double> default_alignments() {
  std::vector<double> out;
  for (int k = 0; k <= 10; ++k) out.push_back(k / 10.0);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transferability scores (LEEP, NCE, H-score) from exported source-model outputs"};
  app.require_subcommand(1);

  // score
  std::string predictions, labels, features, measure_name = "leep", format_name;
  bool as_json = false;
  auto* score = app.add_subcommand("score", "Compute one transferability score");
  score->add_option("--predictions", predictions, "Prediction matrix (n x m, rows are distributions)")->required();
  score->add_option("--labels", labels, "Target labels, one integer per line")->required();
  score->add_option("--features", features, "Feature matrix (n x d)");
  score->add_option("--measure", measure_name, "leep | nce | hscore | feature-leep")
      ->check(CLI::IsMember({"leep", "nce", "hscore", "feature-leep"}));
  score->add_option("--format", format_name, "Matrix file format (default: from extension)")
      ->check(CLI::IsMember({"csv", "bin"}));
  score->add_flag("--json", as_json, "Machine-readable output");

  // verify
  TrainConfig train_cfg;
  auto* verify = app.add_subcommand("verify", "Check the NCE lower bound and the head-retraining upper bound");
  verify->add_option("--predictions", predictions)->required();
  verify->add_option("--labels", labels)->required();
  verify->add_option("--features", features, "Head features (default: the predictions themselves)");
  verify->add_option("--epochs", train_cfg.epochs)->capture_default_str();
  verify->add_option("--lr", train_cfg.learning_rate)->capture_default_str();
  verify->add_option("--batch", train_cfg.batch_size)->capture_default_str();
  verify->add_option("--seed", train_cfg.seed)->capture_default_str();
  verify->add_option("--format", format_name)->check(CLI::IsMember({"csv", "bin"}));
  verify->add_flag("--json", as_json);

  // rank / correlate / bins
  std::string manifest_path, metric_name = "accuracy", csv_out;
  std::size_t k = 5;
  auto* rank = app.add_subcommand("rank", "Rank the manifest's source models by a measure");
  rank->add_option("--manifest", manifest_path)->required();
  rank->add_option("--measure", measure_name)->required();
  rank->add_option("--csv", csv_out, "Also write the report as CSV");
  rank->add_flag("--json", as_json);

  auto* correlate_cmd = app.add_subcommand("correlate", "Pearson correlation between a measure and transfer metrics");
  correlate_cmd->add_option("--manifest", manifest_path)->required();
  correlate_cmd->add_option("--measure", measure_name)->required();
  correlate_cmd->add_option("--metric", metric_name)->check(CLI::IsMember({"accuracy", "f1"}));
  correlate_cmd->add_option("--csv", csv_out, "Also write the report as CSV");
  correlate_cmd->add_flag("--json", as_json);

  auto* bins = app.add_subcommand("bins", "Average transfer metrics over equal-width score levels");
  bins->add_option("--manifest", manifest_path)->required();
  bins->add_option("--measure", measure_name)->required();
  bins->add_option("--k", k)->capture_default_str();
  bins->add_option("--csv", csv_out, "Also write plot-ready CSV");
  bins->add_flag("--json", as_json);

  // synth / sweep
  SynthSpec spec;
  std::string out_dir;
  bool no_perturb = false;
  std::vector<double> alignments = default_alignments();
  std::size_t tasks = 20;
  std::string synth_format = "bin";
  auto add_spec = [&](CLI::App* cmd) {
    cmd->add_option("--n", spec.n)->capture_default_str();
    cmd->add_option("--m", spec.m)->capture_default_str();
    cmd->add_option("--c", spec.c)->capture_default_str();
    cmd->add_option("--noise", spec.noise)->capture_default_str();
    cmd->add_option("--seed", spec.seed)->capture_default_str();
    cmd->add_option("--out", out_dir, "Output directory")->required();
    cmd->add_option("--format", synth_format)->check(CLI::IsMember({"csv", "bin"}))->capture_default_str();
    cmd->add_flag("--no-perturb", no_perturb, "Exact one-hot predictions");
  };
  auto* synth = app.add_subcommand("synth", "Generate one synthetic task");
  add_spec(synth);
  synth->add_option("--alignment", spec.alignment)->capture_default_str();

  auto* sweep_cmd = app.add_subcommand("sweep", "Generate and score synthetic tasks over alignment levels");
  add_spec(sweep_cmd);
  sweep_cmd->add_option("--alignments", alignments, "Alignment levels")->delimiter(',');
  sweep_cmd->add_option("--tasks", tasks, "Tasks per alignment level")->capture_default_str();
  sweep_cmd->add_flag("--json", as_json);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    const auto format = parse_format(format_name);

    if (*score) {
      const Measure measure = require_measure(measure_name);
      const auto in = load_inputs(predictions, labels, features.empty() ? std::nullopt : std::optional<fs::path>(features),
                                  format, true, needs_features(measure));
      const Score s = compute(measure, in);
      if (as_json) {
        print_json(io::to_json(s));
      } else {
        fmt::print("{} {}\n", to_string(s.measure), num(s.value));
        fmt::print("n={} m={} c={}\n", s.n, s.m, s.c);
      }
      return 0;
    }

    if (*verify) {
      const auto in = load_inputs(predictions, labels, features.empty() ? std::nullopt : std::optional<fs::path>(features),
                                  format, true, false);
      const auto& pred = *in.predictions;
      const FeatureMatrix head_features = in.features ? *in.features : validate_features(pred.matrix());
      const auto sums = leep_inner_sums(pred, in.labels);
      const double leep = leep_score(pred, in.labels).value;
      const double nce = nce_score(pred, in.labels).value;
      const double lower = leep_lower_bound(pred, in.labels);
      const auto dummy = dummy_labels(pred);
      const auto two_stage = two_stage_optimal(pred, head_features, in.labels, train_cfg);
      const bool p2 = lower <= leep + 1e-9;
      const bool p1 = two_stage.l_star >= leep;
      const auto [min_s, max_s] = std::minmax_element(sums.begin(), sums.end());
      if (as_json) {
        print_json({{"leep", leep},
                    {"nce", nce},
                    {"lower_bound", lower},
                    {"lower_bound_holds", p2},
                    {"head_log_likelihood", two_stage.head_log_likelihood},
                    {"l_star", two_stage.l_star},
                    {"best", std::string(to_string(two_stage.best))},
                    {"upper_bound_holds", p1},
                    {"min_eep_probability", *min_s},
                    {"max_eep_probability", *max_s},
                    {"argmax_ties", dummy.tie_count},
                    {"head_features", in.features ? "features" : "predictions"}});
      } else {
        fmt::print("leep                 {}\n", num(leep));
        fmt::print("nce                  {}\n", num(nce));
        fmt::print("lower bound          {} <= leep {}  {}\n", num(lower), num(leep), p2 ? "PASS" : "FAIL");
        fmt::print("head log-likelihood  {} (features: {})\n", num(two_stage.head_log_likelihood),
                   in.features ? "features" : "predictions");
        fmt::print("optimal l*           {} >= leep {}  {} (best: {})\n", num(two_stage.l_star), num(leep),
                   p1 ? "PASS" : "FAIL", to_string(two_stage.best));
        fmt::print("eep probabilities    [{}, {}]\n", num(*min_s), num(*max_s));
        fmt::print("argmax ties          {}\n", dummy.tie_count);
      }
      return p1 && p2 ? 0 : kExitValidation;
    }

    if (*rank || *correlate_cmd || *bins) {
      const Measure measure = require_measure(measure_name);
      const auto manifest = io::read_manifest(manifest_path);
      const auto records = score_manifest(manifest, measure);
      if (*rank) {
        const auto report = rank_models(records, measure);
        if (!csv_out.empty()) io::write_report_csv(report, csv_out);
        if (as_json) {
          print_json(io::to_json(report));
        } else {
          for (std::size_t i = 0; i < report.entries.size(); ++i) {
            const auto& e = report.entries[i];
            fmt::print("{:>3}  {:<24} {}{}\n", i + 1, e.model_id, num(e.score), e.tied ? "  (tied)" : "");
          }
        }
      } else if (*correlate_cmd) {
        const auto report = correlate(records, measure, *parse_metric_kind(metric_name));
        if (!csv_out.empty()) io::write_report_csv(report, csv_out);
        if (as_json) {
          print_json(io::to_json(report));
        } else {
          fmt::print("{} vs {} (n={})\n", to_string(measure), metric_name, report.n);
          fmt::print("r          {}\n", num(report.r));
          fmt::print("p-value    {}\n", num(report.p_value));
          fmt::print("fit        metric = {} * score + {}\n", num(report.fit_slope), num(report.fit_intercept));
        }
      } else {
        const auto report = make_level_report(records, measure, k);
        if (!csv_out.empty()) io::write_report_csv(report, csv_out);
        if (as_json) {
          print_json(io::to_json(report));
        } else {
          for (std::size_t j = 0; j < report.k; ++j) {
            const auto& mean = report.level_means[j];
            fmt::print("level {}  count {:>4}  mean metric {}\n", j, report.level_counts[j], mean ? num(*mean) : "-");
          }
        }
      }
      return 0;
    }

    if (*synth || *sweep_cmd) {
      spec.perturb = !no_perturb;
      const auto fmt_choice = synth_format == "csv" ? io::MatrixFormat::csv : io::MatrixFormat::bin;
      const std::string ext = synth_format == "csv" ? ".csv" : ".bin";
      const fs::path root(out_dir);
      std::error_code ec;
      fs::create_directories(root, ec);
      if (ec) throw Error(ErrorKind::Io, "cannot create " + root.string() + ": " + ec.message());

      auto write_task = [&](const SynthTask& task, const std::string& id, double metric, const fs::path& rel) {
        fs::create_directories(root / rel, ec);
        if (ec) throw Error(ErrorKind::Io, "cannot create " + (root / rel).string());
        io::write_matrix(task.predictions.matrix(), root / rel / ("predictions" + ext), fmt_choice);
        io::write_matrix(task.features.matrix(), root / rel / ("features" + ext), fmt_choice);
        io::write_labels(task.labels.values(), root / rel / "labels.txt");
        return io::ManifestEntry{id,
                                 rel / ("predictions" + ext),
                                 rel / "labels.txt",
                                 rel / ("features" + ext),
                                 metric,
                                 MetricKind::accuracy};
      };

      io::Manifest manifest;
      if (*synth) {
        const auto task = generate_task(spec);
        const double metric = eep_holdout_accuracy(task.predictions, task.labels, derive_seed(spec.seed, 0x5eed));
        manifest.entries.push_back(write_task(task, "synth", metric, "."));
        io::write_manifest(manifest, root / "manifest.json");
        fmt::print("wrote {} (n={} m={} c={}, leep {}, hold-out accuracy {})\n", root.string(), spec.n, spec.m, spec.c,
                   num(leep_score(task.predictions, task.labels).value), num(metric));
        return 0;
      }

      std::vector<ExperimentRecord> records;
      for (std::size_t a = 0; a < alignments.size(); ++a) {
        for (std::size_t t = 0; t < tasks; ++t) {
          SynthSpec s = spec;
          s.alignment = alignments[a];
          s.seed = derive_seed(spec.seed, a, t);
          const auto task = generate_task(s);
          const std::string id = fmt::format("a{:.3f}-t{}", alignments[a], t);
          auto rec = score_task(task, id, derive_seed(s.seed, 0x5eed));
          manifest.entries.push_back(write_task(task, id, *rec.transfer_metric, id));
          records.push_back(std::move(rec));
        }
      }
      io::write_manifest(manifest, root / "manifest.json");
      io::json summary = io::json::array();
      for (Measure m : {Measure::leep, Measure::nce, Measure::hscore}) {
        const auto report = correlate(records, m, MetricKind::accuracy);
        summary.push_back(io::to_json(report));
        if (!as_json) {
          fmt::print("{:<8} r {}  p {}\n", to_string(m), num(report.r), num(report.p_value));
        }
      }
      if (as_json) print_json({{"tasks", records.size()}, {"correlations", summary}});
      return 0;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return is_io_error(e.kind()) ? kExitIo : kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitIo;
  }
  return 0;
}
