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

// Command-line front end. Every subcommand goes through the C API.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "facts/facts.h"
#include "json.hpp"

namespace {

using nlohmann::json;

struct Globals {
  std::optional<uint64_t> seed;
  std::string out;
  std::string config;
  int threads = 1;
};

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

json LoadConfig(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path);
  try {
    json j = json::parse(in);
    if (!j.is_object()) throw UsageError("config " + path + " is not a JSON object");
    return j;
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path + ": " + e.what());
  }
}

std::vector<double> ParseList(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError("bad number '" + item + "' in list");
    }
  }
  if (out.empty()) throw UsageError("empty list");
  return out;
}

int Check(facts_status_t status, const char* what) {
  if (status == FACTS_OK) return 0;
  std::fprintf(stderr, "facts %s: %s: %s\n", what, facts_status_name(status), facts_last_error());
  return static_cast<int>(status);
}

// A pipeline config may be passed to a stage command; use its section then.
json Section(const json& cfg, const char* key) {
  if (cfg.contains(key) && cfg[key].is_object()) {
    json out = cfg[key];
    if (cfg.contains("seed") && !out.contains("seed")) out["seed"] = cfg["seed"];
    return out;
  }
  return cfg;
}

void LogToStderr(const char* line, void*) { std::fprintf(stderr, "%s\n", line); }

std::string RequireOut(const Globals& g, const char* what) {
  if (g.out.empty()) throw UsageError(std::string(what) + " needs --out");
  return g.out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bias-conflicting slice discovery: amplify correlations, then slice."};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", std::string(facts_version()));

  Globals g;
  app.add_option("--seed", g.seed, "Seed (root seed for pipeline)");
  app.add_option("--out", g.out, "Output directory (file for eval and report)");
  app.add_option("--config", g.config, "JSON config file");
  app.add_option("--threads", g.threads, "Worker threads; 1 is bit-exact")
      ->check(CLI::PositiveNumber);

  auto* synth = app.add_subcommand("synth", "Generate a synthetic correlation-bias dataset");

  auto* amplify = app.add_subcommand("amplify", "Train bias-amplified models and select lambda");
  std::string manifest, lambdas, arch, model, report, metrics;
  std::optional<int> epochs, top_k, k_hat, batch, num_classes;
  std::optional<double> lr, alpha, delta_p;
  bool wd_schedule = false;
  amplify->add_option("--manifest", manifest, "Dataset manifest")->required();
  amplify->add_option("--lambdas", lambdas, "Comma-separated weight decays");
  amplify->add_option("--arch", arch, "linear or mlp:<width>");
  amplify->add_option("--epochs", epochs, "Epochs per run");
  amplify->add_option("--lr", lr, "Learning rate");
  amplify->add_option("--batch-size", batch, "Mini-batch size");
  amplify->add_flag("--wd-schedule", wd_schedule, "Decaying weight decay instead of a sweep");

  std::string cov, fit_split, assign_split;
  auto* slice = app.add_subcommand("slice", "Fit per-class mixtures and report slices");
  slice->add_option("--manifest", manifest, "Dataset manifest")->required();
  slice->add_option("--model", model, "Amplified model directory (else manifest logits)");
  slice->add_option("--k", k_hat, "Slices per class");
  slice->add_option("--alpha", alpha, "Exponent on the logit-view density");
  slice->add_option("--delta-p", delta_p, "Diagonal regularizer of the logit covariance");
  slice->add_option("--cov", cov, "full, diagonal or tied");
  slice->add_option("--fit-split", fit_split, "Split the mixtures are fit on");
  slice->add_option("--assign-split", assign_split, "Split that is assigned and reported");
  slice->add_option("--top-k", top_k, "Members listed per slice");

  std::string grid;
  auto* tune = app.add_subcommand("tune", "Pick slicing hyperparameters by silhouette");
  tune->add_option("--manifest", manifest, "Dataset manifest")->required();
  tune->add_option("--model", model, "Amplified model directory (else manifest logits)");
  tune->add_option("--grid", grid, "JSON file: array of hyperparameter objects")->required();
  tune->add_option("--fit-split", fit_split, "Split the mixtures are fit on");

  std::optional<int> eval_k;
  auto* eval = app.add_subcommand("eval", "Score a slice report against ground truth");
  eval->add_option("--gt", manifest, "Manifest with attribute annotations")->required();
  eval->add_option("--pred", report, "report.json from slice")->required();
  eval->add_option("--model", model, "Amplified model directory for ranking metrics");
  eval->add_option("--k", eval_k, "k of Precision@k");

  int depth = 6;
  auto* render = app.add_subcommand("report", "Render a slice report as text");
  render->add_option("--report", report, "report.json from slice")->required();
  render->add_option("--metrics", metrics, "metrics.json from eval");
  render->add_option("--depth", depth, "Slices shown per class");
  render->add_option("--classes", num_classes, "Number of classes");

  auto* pipeline = app.add_subcommand("pipeline", "Run every stage end to end");

  CLI11_PARSE(app, argc, argv);
  facts_set_log_sink(LogToStderr, nullptr);

  try {
    const json file_cfg = LoadConfig(g.config);
    json cfg = file_cfg;
    if (synth->parsed()) {
      cfg = Section(file_cfg, "synth");
      if (g.seed) cfg["seed"] = *g.seed;
      return Check(facts_synth(cfg.dump().c_str(), RequireOut(g, "synth").c_str()), "synth");
    }
    if (amplify->parsed()) {
      cfg = Section(file_cfg, "amplify");
      if (g.seed) cfg["seed"] = *g.seed;
      if (!lambdas.empty()) cfg["lambdas"] = ParseList(lambdas);
      if (!arch.empty()) cfg["arch"] = arch;
      if (epochs) cfg["max_epochs"] = *epochs;
      if (lr) cfg["learning_rate"] = *lr;
      if (batch) cfg["batch_size"] = *batch;
      if (wd_schedule) cfg["wd_schedule"] = true;
      return Check(facts_amplify(manifest.c_str(), cfg.dump().c_str(), g.threads,
                                 RequireOut(g, "amplify").c_str()),
                   "amplify");
    }
    if (slice->parsed()) {
      cfg = Section(file_cfg, "slice");
      if (g.seed) cfg["seed"] = *g.seed;
      if (k_hat) cfg["k_hat"] = *k_hat;
      if (alpha) cfg["alpha"] = *alpha;
      if (delta_p) cfg["delta_p"] = *delta_p;
      if (!cov.empty()) cfg["cov_p"] = cov;
      if (!fit_split.empty()) cfg["fit_split"] = fit_split;
      if (!assign_split.empty()) cfg["assign_split"] = assign_split;
      if (top_k) cfg["top_k"] = *top_k;
      return Check(facts_slice(manifest.c_str(), model.empty() ? nullptr : model.c_str(),
                               cfg.dump().c_str(), g.threads, RequireOut(g, "slice").c_str()),
                   "slice");
    }
    if (tune->parsed()) {
      cfg = Section(file_cfg, "slice");
      std::ifstream in(grid);
      if (!in) throw UsageError("cannot open grid " + grid);
      json points = json::parse(in, nullptr, false);
      if (points.is_discarded()) throw UsageError("grid " + grid + " is not valid JSON");
      if (points.is_object() && points.contains("grid")) points = points["grid"];
      if (!points.is_array()) throw UsageError("grid must be a JSON array");
      cfg["grid"] = points;
      if (!fit_split.empty()) cfg["fit_split"] = fit_split;
      return Check(facts_tune(manifest.c_str(), model.empty() ? nullptr : model.c_str(),
                              cfg.dump().c_str(), g.threads, RequireOut(g, "tune").c_str()),
                   "tune");
    }
    if (eval->parsed()) {
      cfg = Section(file_cfg, "eval");
      if (eval_k) cfg["k"] = *eval_k;
      const std::string out = g.out.empty() ? "metrics.json" : g.out;
      return Check(facts_eval(manifest.c_str(), report.c_str(),
                              model.empty() ? nullptr : model.c_str(), cfg.dump().c_str(),
                              out.c_str()),
                   "eval");
    }
    if (render->parsed()) {
      const facts_status_t status =
          facts_report(report.c_str(), metrics.empty() ? nullptr : metrics.c_str(),
                       num_classes.value_or(-1), depth, g.out.empty() ? nullptr : g.out.c_str());
      if (status == FACTS_OK && g.out.empty()) std::fputs(facts_report_text(), stdout);
      return Check(status, "report");
    }
    if (pipeline->parsed()) {
      if (g.seed) cfg["seed"] = *g.seed;
      cfg["threads"] = g.threads;
      return Check(facts_pipeline(cfg.dump().c_str(), RequireOut(g, "pipeline").c_str()),
                   "pipeline");
    }
  } catch (const UsageError& e) {
    std::fprintf(stderr, "facts: %s\n", e.what());
    return 2;
  }
  return 2;
}
