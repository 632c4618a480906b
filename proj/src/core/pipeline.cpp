/*
 * Copyright 2026 The FACTS Slicer Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "core/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "core/dataio.hpp"
#include "core/error.hpp"
#include "core/metrics.hpp"
#include "core/rng.hpp"

namespace facts::pipeline {
namespace fs = std::filesystem;

namespace {

void Log(const Logger& log, const std::string& line) {
  if (log) log(line);
}

std::string FormatDouble(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string Fixed(double v, int digits) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

void MakeDirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create directory " + dir.string() + ": " + ec.message());
}

Split SplitField(const nlohmann::json& j, const char* key, Split fallback) {
  if (!j.contains(key)) return fallback;
  return ParseSplit(j[key].get<std::string>());
}

// Dataset with the logits block filled from the model when one is given.
Dataset LoadForSlicing(const fs::path& manifest, const std::optional<fs::path>& model_dir,
                       std::optional<amplify::Model>* model_out = nullptr) {
  Dataset data = io::LoadDataset(manifest);
  if (model_dir) {
    const auto amplified = amplify::LoadAmplified(*model_dir);
    if (!data.features) {
      Fail(ErrorCode::kMissingBlock,
           "manifest " + manifest.string() + " has no features block to compute logits from");
    }
    data.logits = amplified.snapshot.model.Logits(ToDouble(*data.features)).cast<float>();
    if (model_out) *model_out = amplified.snapshot.model;
  } else if (!data.logits) {
    Fail(ErrorCode::kMissingBlock,
         "manifest " + manifest.string() +
             " has no logits block; pass a model directory or run amplify first");
  }
  if (!data.embedding) {
    Fail(ErrorCode::kMissingBlock, "manifest " + manifest.string() + " has no embedding block");
  }
  return data;
}

std::map<std::string, bool> Correctness(const Dataset& data) {
  std::map<std::string, bool> out;
  for (size_t i = 0; i < data.size(); ++i) {
    Eigen::Index pred = 0;
    data.logits->row(static_cast<Eigen::Index>(i)).maxCoeff(&pred);
    out[data.samples[i].id] = pred == data.samples[i].label;
  }
  return out;
}

nlohmann::json GridJson(const std::vector<slicing::SliceHyper>& grid) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& h : grid) out.push_back(slicing::ToJson(h));
  return out;
}

template <typename Fn>
auto Stage(const std::string& name, const Logger& log, Fn&& fn) {
  Log(log, "stage " + name);
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), "stage " + name + ": " + e.what());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kFormat, "stage " + name + ": " + e.what());
  }
}

}  // namespace

nlohmann::json ToJson(const AmplifyConfig& c) {
  nlohmann::json j = amplify::ToJson(c.hyper);
  j["lambdas"] = c.lambdas;
  j["wd_schedule"] = c.wd_schedule;
  j["wd_from"] = c.wd_from;
  j["wd_to"] = c.wd_to;
  return j;
}

AmplifyConfig AmplifyConfigFromJson(const nlohmann::json& j, AmplifyConfig c) {
  c.hyper = amplify::TrainHyperFromJson(j, c.hyper);
  c.lambdas = j.value("lambdas", c.lambdas);
  c.wd_schedule = j.value("wd_schedule", c.wd_schedule);
  c.wd_from = j.value("wd_from", c.wd_from);
  c.wd_to = j.value("wd_to", c.wd_to);
  return c;
}

nlohmann::json ToJson(const SliceConfig& c) {
  nlohmann::json j = slicing::ToJson(c.hyper);
  j["fit_split"] = SplitName(c.fit_split);
  j["assign_split"] = SplitName(c.assign_split);
  j["top_k"] = c.top_k;
  j["grid"] = GridJson(c.grid);
  return j;
}

SliceConfig SliceConfigFromJson(const nlohmann::json& j, SliceConfig c) {
  c.hyper = slicing::SliceHyperFromJson(j, c.hyper);
  c.fit_split = SplitField(j, "fit_split", c.fit_split);
  c.assign_split = SplitField(j, "assign_split", c.assign_split);
  c.top_k = j.value("top_k", c.top_k);
  if (j.contains("grid")) {
    c.grid.clear();
    // Grid points override the base hyperparameters.
    for (const auto& point : j["grid"])
      c.grid.push_back(slicing::SliceHyperFromJson(point, c.hyper));
  }
  return c;
}

nlohmann::json ToJson(const EvalConfig& c) {
  return {{"k", c.k},
          {"curve_ks", c.curve_ks},
          {"ranking_split", SplitName(c.ranking_split)},
          {"report_depth", c.report_depth}};
}

EvalConfig EvalConfigFromJson(const nlohmann::json& j, EvalConfig c) {
  c.k = j.value("k", c.k);
  c.curve_ks = j.value("curve_ks", c.curve_ks);
  c.ranking_split = SplitField(j, "ranking_split", c.ranking_split);
  c.report_depth = j.value("report_depth", c.report_depth);
  return c;
}

nlohmann::json ToJson(const PipelineConfig& c) {
  nlohmann::json j = {{"seed", c.seed},
                      {"threads", c.threads},
                      {"amplify", ToJson(c.amplify)},
                      {"slice", ToJson(c.slice)},
                      {"eval", ToJson(c.eval)}};
  if (c.synth) j["synth"] = synth::ToJson(*c.synth);
  if (c.manifest) j["manifest"] = c.manifest->string();
  return j;
}

PipelineConfig PipelineConfigFromJson(const nlohmann::json& j) {
  PipelineConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    c.threads = j.value("threads", c.threads);
    if (j.contains("synth") && j.contains("manifest")) {
      Fail(ErrorCode::kInvalidArgument, "pipeline config: give either synth or manifest, not both");
    }
    if (j.contains("synth")) c.synth = synth::SynthConfigFromJson(j["synth"]);
    if (j.contains("manifest")) c.manifest = fs::path(j["manifest"].get<std::string>());
    if (j.contains("amplify")) c.amplify = AmplifyConfigFromJson(j["amplify"]);
    if (j.contains("slice")) c.slice = SliceConfigFromJson(j["slice"]);
    if (j.contains("eval")) c.eval = EvalConfigFromJson(j["eval"]);
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("pipeline config: ") + e.what());
  }
  return c;
}

uint64_t StageSeed(uint64_t root, const std::string& stage) {
  return DeriveSeed(root, "pipeline/" + stage);
}

PipelineConfig Resolve(PipelineConfig c) {
  Require(c.threads >= 1, "threads must be at least 1");
  if (!c.manifest && !c.synth) c.synth = synth::SynthConfig{};
  if (c.synth) c.synth->seed = StageSeed(c.seed, "synth");
  c.amplify.hyper.seed = StageSeed(c.seed, "amplify");
  c.slice.hyper.seed = StageSeed(c.seed, "slice");
  for (auto& point : c.slice.grid) point.seed = c.slice.hyper.seed;
  return c;
}

fs::path RunSynth(const synth::SynthConfig& config, const fs::path& out_dir, const Logger& log) {
  const Dataset data = synth::Generate(config);
  MakeDirs(out_dir);
  io::SaveDataset(data, out_dir);
  Log(log, "synth: " + std::to_string(data.size()) + " samples written to " + out_dir.string());
  return out_dir / "manifest.json";
}

amplify::AmplifiedModel RunAmplify(const fs::path& manifest, const AmplifyConfig& config,
                                   int threads, const fs::path& out_dir, const Logger& log) {
  const Dataset data = io::LoadDataset(manifest);
  const Dataset train = data.SplitView(Split::kTrain);
  if (train.size() == 0) Fail(ErrorCode::kInvalidArgument, "train split is empty");

  amplify::AmplifiedModel result;
  if (config.wd_schedule) {
    result.snapshot = amplify::TrainWdSchedule(train, config.hyper, config.wd_from, config.wd_to);
    result.lambda_star = result.snapshot.lambda;
    result.sweep_log.push_back({result.snapshot.lambda, result.snapshot.epoch,
                                result.snapshot.train_accuracy,
                                result.snapshot.sigma_amco.value_or(0.0)});
    result.candidates.push_back(result.snapshot);
  } else {
    result = amplify::SweepLambda(train, config.hyper, config.lambdas, threads);
  }
  for (const auto& e : result.sweep_log) {
    Log(log, "amplify: lambda " + FormatDouble(e.lambda) + " epoch " + std::to_string(e.epoch) +
                 " train_acc " + Fixed(e.train_accuracy, 4) + " sigma " +
                 Fixed(e.sigma_amco, 6));
  }
  for (const auto& f : result.failures) Log(log, "amplify: " + f);
  Log(log, "amplify: lambda* = " + FormatDouble(result.lambda_star));

  amplify::SaveAmplified(result, config.hyper, out_dir);

  // Per split, per class ids by ascending likelihood of their own label.
  nlohmann::json rankings = {{"lambda_star", result.lambda_star}};
  for (Split split : {Split::kTrain, Split::kVal, Split::kTest}) {
    const Dataset view = data.SplitView(split);
    if (view.size() == 0) continue;
    const auto by_class = view.IndicesByClass(split);
    nlohmann::json classes = nlohmann::json::array();
    for (int c = 0; c < static_cast<int>(by_class.size()); ++c) {
      classes.push_back(by_class[c].empty()
                            ? std::vector<std::string>{}
                            : amplify::RankBiasConflicting(result.snapshot.model, view, c));
    }
    rankings["splits"][std::string(SplitName(split))] = classes;
  }
  io::WriteJsonFile(out_dir / "rankings.json", rankings);
  return result;
}

slicing::SliceReport RunSlice(const fs::path& manifest, const std::optional<fs::path>& model_dir,
                              const SliceConfig& config, int threads, const fs::path& out_dir,
                              const Logger& log) {
  const Dataset data = LoadForSlicing(manifest, model_dir);
  const Dataset fit = data.SplitView(config.fit_split);
  const Dataset target = data.SplitView(config.assign_split);
  if (fit.size() == 0) {
    Fail(ErrorCode::kInvalidArgument,
         "fit split '" + std::string(SplitName(config.fit_split)) + "' is empty");
  }
  if (target.size() == 0) {
    Fail(ErrorCode::kInvalidArgument,
         "assign split '" + std::string(SplitName(config.assign_split)) + "' is empty");
  }

  const auto mixtures = slicing::FitPerClass(fit, config.hyper, threads);
  MakeDirs(out_dir / "mixtures");
  for (const auto& m : mixtures) {
    slicing::SaveMixture(m, out_dir / "mixtures", "class_" + std::to_string(m.class_label));
    Log(log, "slice: class " + std::to_string(m.class_label) + " EM steps " +
                 std::to_string(m.fit_log.size()) + " log-likelihood " +
                 FormatDouble(m.fit_log.back()));
  }

  const slicing::SliceAssignment assignment = slicing::Assign(mixtures, target);
  const slicing::SliceReport report =
      slicing::RankAndReport(assignment, Correctness(target), config.top_k);

  nlohmann::json report_json = slicing::ToJson(report);
  report_json["fit_split"] = SplitName(config.fit_split);
  report_json["assign_split"] = SplitName(config.assign_split);
  report_json["num_classes"] = data.NumClasses();
  report_json["hyper"] = slicing::ToJson(config.hyper);
  io::WriteJsonFile(out_dir / "report.json", report_json);
  io::WriteTextFile(out_dir / "report.csv", slicing::ToCsv(report));

  std::string csv = "id,class,slice_id,log_density\n";
  for (const auto& e : assignment.entries) {
    csv += e.id + ',' + std::to_string(e.class_label) + ',' + std::to_string(e.slice_id) + ',' +
           FormatDouble(e.log_density) + '\n';
  }
  io::WriteTextFile(out_dir / "assignments.csv", csv);
  Log(log, "slice: " + std::to_string(report.slices.size()) + " nonempty slices on split " +
               std::string(SplitName(config.assign_split)));
  return report;
}

slicing::SliceHyper RunTune(const fs::path& manifest, const std::optional<fs::path>& model_dir,
                            const SliceConfig& config, int threads, const fs::path& out_dir,
                            const Logger& log) {
  Require(!config.grid.empty(), "tuning grid is empty");
  const Dataset data = LoadForSlicing(manifest, model_dir);
  const Dataset fit = data.SplitView(config.fit_split);
  const slicing::TuneResult result = slicing::SilhouetteTune(fit, config.grid, threads);
  nlohmann::json scores = nlohmann::json::array();
  for (double s : result.scores)
    scores.push_back(std::isnan(s) ? nlohmann::json() : nlohmann::json(s));
  nlohmann::json out = {
      {"grid", GridJson(config.grid)}, {"scores", scores},
      {"chosen_index", result.chosen}, {"chosen", slicing::ToJson(config.grid[result.chosen])},
      {"warnings", result.warnings},   {"fit_split", SplitName(config.fit_split)}};
  MakeDirs(out_dir);
  io::WriteJsonFile(out_dir / "tune.json", out);
  for (const auto& w : result.warnings) Log(log, "tune: " + w);
  Log(log, "tune: chose grid point " + std::to_string(result.chosen) + " (silhouette " +
               Fixed(result.scores[result.chosen], 6) + ")");
  return config.grid[result.chosen];
}

nlohmann::json RunEval(const fs::path& manifest, const fs::path& report_path,
                       const std::optional<fs::path>& model_dir, const EvalConfig& config,
                       const fs::path& out_json, const Logger& log) {
  const Dataset data = io::LoadDataset(manifest);
  if (!data.HasAttributes()) {
    Fail(ErrorCode::kMissingBlock, "manifest has no attribute annotations to evaluate against");
  }
  const nlohmann::json report_json = io::ReadJsonFile(report_path);
  const slicing::SliceReport report = slicing::SliceReportFromJson(report_json);
  const Split split = SplitField(report_json, "assign_split", Split::kTest);
  const Dataset view = data.SplitView(split);

  std::vector<metrics::GroundTruthSlice> gt;
  for (const auto& s : synth::GroundTruthSlices(view)) {
    gt.push_back({"y" + std::to_string(s.label) + "_a" + std::to_string(s.attribute), s.ids});
  }
  std::vector<metrics::PredictedSlice> pred;
  std::vector<metrics::Ranking> tops;
  for (const auto& s : report.slices) {
    pred.push_back({"c" + std::to_string(s.class_label) + "_s" + std::to_string(s.slice_id),
                    s.members});
    tops.push_back(s.top_k);
  }
  metrics::IdSet conflicting;
  for (const auto& s : view.samples) {
    if (s.bias_conflicting.value_or(false)) conflicting.insert(s.id);
  }

  nlohmann::json out = {{"split", SplitName(split)}, {"k", config.k}};
  nlohmann::json undefined = nlohmann::json::array();
  auto guarded = [&](const char* key, auto&& fn) {
    try {
      out[key] = fn();
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUndefinedMetric) throw;
      out[key] = nullptr;
      undefined.push_back(std::string(key) + ": " + e.what());
    }
  };
  guarded("precision_at_k", [&] { return metrics::PrecisionAtK(gt, pred, config.k); });
  try {
    const auto scores = metrics::SliceMatchRecallAp(gt, pred);
    out["avg_slice_recall"] = scores.avg_recall;
    out["avg_slice_ap"] = scores.avg_ap;
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUndefinedMetric) throw;
    out["avg_slice_recall"] = nullptr;
    out["avg_slice_ap"] = nullptr;
    undefined.push_back(std::string("avg_slice_recall/avg_slice_ap: ") + e.what());
  }
  guarded("slice_ranking_ap", [&] { return metrics::SliceRankingAp(tops, conflicting); });

  out["avg_ap"] = nullptr;
  out["precision_curves"] = nullptr;
  if (model_dir) {
    const auto amplified = amplify::LoadAmplified(*model_dir);
    const Dataset ranked = data.SplitView(config.ranking_split);
    const auto by_class = ranked.IndicesByClass(config.ranking_split);
    std::vector<metrics::Ranking> rankings;
    std::vector<metrics::IdSet> positives;
    nlohmann::json curves = nlohmann::json::array();
    for (int c = 0; c < static_cast<int>(by_class.size()); ++c) {
      metrics::IdSet pos;
      for (size_t i : by_class[c]) {
        if (ranked.samples[i].bias_conflicting.value_or(false)) pos.insert(ranked.samples[i].id);
      }
      rankings.push_back(by_class[c].empty()
                             ? metrics::Ranking{}
                             : amplify::RankBiasConflicting(amplified.snapshot.model, ranked, c));
      curves.push_back(
          {{"class", c},
           {"precision", metrics::PrecisionCurve(rankings.back(), pos, config.curve_ks)}});
      positives.push_back(std::move(pos));
    }
    guarded("avg_ap", [&] { return metrics::AvgAp(rankings, positives); });
    out["precision_curves"] = {{"ranking_split", SplitName(config.ranking_split)},
                               {"ks", config.curve_ks},
                               {"classes", curves}};
    guarded("gt_acc_gap", [&] { return amplify::GtAccGap(amplified.snapshot.model, ranked); });
  }
  out["undefined"] = undefined;
  io::WriteJsonFile(out_json, out);
  Log(log, "eval: precision_at_k " +
               (out["precision_at_k"].is_null() ? std::string("null")
                                                : Fixed(out["precision_at_k"].get<double>(), 4)));
  return out;
}

std::string RenderReport(const slicing::SliceReport& report, int num_classes,
                         const nlohmann::json* metrics_json, int depth) {
  std::ostringstream os;
  for (int c = 0; c < num_classes; ++c) {
    os << "Class " << c << "\n";
    int shown = 0;
    for (const auto& s : report.slices) {
      if (s.class_label != c || shown >= depth) continue;
      ++shown;
      os << "  slice " << s.slice_id << "  accuracy " << Fixed(s.accuracy, 3) << "  size "
         << s.size << "  predicted_bias_conflicting "
         << (s.predicted_bias_conflicting ? "yes" : "no") << "\n    top:";
      const size_t n = std::min<size_t>(s.top_k.size(), metrics::kSliceRankingDepth);
      for (size_t i = 0; i < n; ++i) os << ' ' << s.top_k[i];
      os << "\n";
    }
    if (shown == 0) os << "  no slices\n";
  }
  if (metrics_json != nullptr) {
    os << "Metrics\n";
    for (const char* key : {"precision_at_k", "avg_ap", "avg_slice_recall", "avg_slice_ap",
                            "slice_ranking_ap", "gt_acc_gap"}) {
      if (!metrics_json->contains(key)) continue;
      const auto& v = (*metrics_json)[key];
      os << "  " << key << ' ' << (v.is_number() ? Fixed(v.get<double>(), 4) : "undefined")
         << "\n";
    }
  }
  return os.str();
}

std::string RunReport(const fs::path& report_json, const std::optional<fs::path>& metrics_json,
                      std::optional<int> num_classes, int depth) {
  Require(depth >= 1, "report depth must be positive");
  const nlohmann::json j = io::ReadJsonFile(report_json);
  const slicing::SliceReport report = slicing::SliceReportFromJson(j);
  int classes = num_classes.value_or(j.value("num_classes", 0));
  for (const auto& s : report.slices) classes = std::max(classes, s.class_label + 1);
  std::optional<nlohmann::json> metrics_value;
  if (metrics_json) metrics_value = io::ReadJsonFile(*metrics_json);
  return RenderReport(report, classes, metrics_value ? &*metrics_value : nullptr, depth);
}

PipelineResult RunPipeline(const PipelineConfig& raw, const fs::path& out_dir, const Logger& log) {
  const PipelineConfig config = Resolve(raw);
  using Clock = std::chrono::steady_clock;
  nlohmann::json timings = nlohmann::json::object();
  auto timed = [&](const std::string& name, auto&& fn) {
    const auto start = Clock::now();
    auto result = Stage(name, log, fn);
    timings[name] = std::chrono::duration<double>(Clock::now() - start).count();
    return result;
  };

  MakeDirs(out_dir);
  PipelineResult r;
  r.manifest = config.manifest ? *config.manifest : out_dir / "dataset" / "manifest.json";
  if (config.synth) {
    timed("synth", [&] { return RunSynth(*config.synth, out_dir / "dataset", log); });
  }
  r.model_dir = out_dir / "model";
  timed("amplify", [&] {
    return RunAmplify(r.manifest, config.amplify, config.threads, r.model_dir, log);
  });

  SliceConfig slice = config.slice;
  if (!slice.grid.empty()) {
    slice.hyper = timed("tune", [&] {
      return RunTune(r.manifest, r.model_dir, slice, config.threads, out_dir / "tune", log);
    });
  }
  r.slice_dir = out_dir / "slices";
  timed("slice", [&] {
    return RunSlice(r.manifest, r.model_dir, slice, config.threads, r.slice_dir, log);
  });
  r.metrics = out_dir / "metrics.json";
  r.metrics_json = timed("eval", [&] {
    return RunEval(r.manifest, r.slice_dir / "report.json", r.model_dir, config.eval, r.metrics,
                   log);
  });
  r.report_text = out_dir / "report.txt";
  timed("report", [&] {
    const std::string text = RunReport(r.slice_dir / "report.json", r.metrics, std::nullopt,
                                       config.eval.report_depth);
    io::WriteTextFile(r.report_text, text);
    return 0;
  });

  r.run_json = out_dir / "run.json";
  nlohmann::json resolved = ToJson(config);
  resolved["slice"]["selected"] = slicing::ToJson(slice.hyper);
  const nlohmann::json run = {
      {"version", kVersion},
      {"eigen_version", std::to_string(EIGEN_WORLD_VERSION) + "." +
                            std::to_string(EIGEN_MAJOR_VERSION) + "." +
                            std::to_string(EIGEN_MINOR_VERSION)},
      {"config", resolved},
      {"timings_seconds", timings},
      {"artifacts",
       {{"manifest", r.manifest.string()},
        {"model", r.model_dir.string()},
        {"slices", r.slice_dir.string()},
        {"metrics", r.metrics.string()},
        {"report", r.report_text.string()}}}};
  io::WriteJsonFile(r.run_json, run);
  Log(log, "pipeline: done");
  return r;
}

}  // namespace facts::pipeline
