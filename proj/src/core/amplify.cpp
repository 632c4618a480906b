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

#include "core/amplify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "core/dataio.hpp"
#include "core/error.hpp"

namespace facts::amplify {
namespace fs = std::filesystem;

void TrainHyper::Validate() const {
  Require(lambda >= 0.0, "lambda must be nonnegative");
  Require(learning_rate > 0.0, "learning_rate must be positive");
  Require(momentum >= 0.0 && momentum < 1.0, "momentum must be in [0, 1)");
  Require(batch_size > 0, "batch_size must be positive");
  Require(max_epochs > 0, "max_epochs must be positive");
  Require(arch == Arch::kLinear || hidden_width > 0, "mlp needs a positive hidden width");
}

std::string ArchString(const TrainHyper& hyper) {
  return hyper.arch == Arch::kLinear ? "linear" : "mlp:" + std::to_string(hyper.hidden_width);
}

void ParseArch(const std::string& text, TrainHyper& hyper) {
  if (text == "linear") {
    hyper.arch = Arch::kLinear;
    hyper.hidden_width = 0;
    return;
  }
  if (text.rfind("mlp:", 0) == 0) {
    try {
      hyper.hidden_width = std::stoi(text.substr(4));
    } catch (const std::exception&) {
      Fail(ErrorCode::kInvalidArgument, "bad architecture '" + text + "'");
    }
    Require(hyper.hidden_width > 0, "mlp width must be positive");
    hyper.arch = Arch::kMlp;
    return;
  }
  Fail(ErrorCode::kInvalidArgument,
       "architecture must be linear or mlp:<width>, got '" + text + "'");
}

nlohmann::json ToJson(const TrainHyper& h) {
  return {{"lambda", h.lambda},         {"learning_rate", h.learning_rate},
          {"momentum", h.momentum},     {"batch_size", h.batch_size},
          {"max_epochs", h.max_epochs}, {"arch", ArchString(h)},
          {"seed", h.seed}};
}

TrainHyper TrainHyperFromJson(const nlohmann::json& j, TrainHyper h) {
  h.lambda = j.value("lambda", h.lambda);
  h.learning_rate = j.value("learning_rate", h.learning_rate);
  h.momentum = j.value("momentum", h.momentum);
  h.batch_size = j.value("batch_size", h.batch_size);
  h.max_epochs = j.value("max_epochs", h.max_epochs);
  if (j.contains("arch")) ParseArch(j["arch"].get<std::string>(), h);
  h.seed = j.value("seed", h.seed);
  return h;
}

MatrixD Model::Logits(const MatrixD& x) const {
  Require(x.cols() == input_dim, "feature dimension " + std::to_string(x.cols()) +
                                     " does not match model input " +
                                     std::to_string(input_dim));
  MatrixD first = (x * w1.transpose()).rowwise() + b1.transpose();
  if (arch == Arch::kLinear) return first;
  MatrixD hidden = first.cwiseMax(0.0);
  return (hidden * w2.transpose()).rowwise() + b2.transpose();
}

double Model::PenalizedNorm() const {
  double sq = w1.squaredNorm();
  if (arch == Arch::kMlp) sq += b1.squaredNorm() + w2.squaredNorm();
  return std::sqrt(sq);
}

Model Model::RoundedToFloat() const {
  Model out = *this;
  out.w1 = w1.cast<float>().cast<double>();
  out.b1 = b1.cast<float>().cast<double>();
  out.w2 = w2.cast<float>().cast<double>();
  out.b2 = b2.cast<float>().cast<double>();
  return out;
}

ClassBalancedSampler::ClassBalancedSampler(std::vector<std::vector<size_t>> members_by_class,
                                           uint64_t seed)
    : members_(std::move(members_by_class)), rng_(seed) {
  for (size_t c = 0; c < members_.size(); ++c) {
    if (!members_[c].empty()) present_.push_back(static_cast<int>(c));
  }
  Require(!present_.empty(), "sampler needs at least one nonempty class");
}

std::vector<size_t> ClassBalancedSampler::NextBatch(int batch_size) {
  std::vector<size_t> batch(batch_size);
  for (auto& index : batch) {
    const auto& members = members_[present_[rng_.UniformInt(present_.size())]];
    index = members[rng_.UniformInt(members.size())];
  }
  return batch;
}

namespace {

void SoftmaxRows(MatrixD& logits) {
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    auto row = logits.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp().matrix();
    row /= row.sum();
  }
}

Model InitModel(const TrainHyper& hyper, int input_dim, int num_classes) {
  Rng rng(DeriveSeed(hyper.seed, "amplify/init"));
  Model m;
  m.arch = hyper.arch;
  m.input_dim = input_dim;
  m.num_classes = num_classes;
  auto gaussian = [&](Eigen::Index rows, Eigen::Index cols, double scale) {
    MatrixD w(rows, cols);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = scale * rng.Normal();
    return w;
  };
  if (hyper.arch == Arch::kLinear) {
    m.w1 = gaussian(num_classes, input_dim, 0.01);
    m.b1 = VectorD::Zero(num_classes);
    m.w2.resize(0, 0);
    m.b2.resize(0);
  } else {
    const int h = hyper.hidden_width;
    m.w1 = gaussian(h, input_dim, std::sqrt(2.0 / input_dim));
    m.b1 = VectorD::Zero(h);
    m.w2 = gaussian(num_classes, h, std::sqrt(1.0 / h));
    m.b2 = VectorD::Zero(num_classes);
  }
  return m;
}

struct Gradients {
  MatrixD w1;
  VectorD b1;
  MatrixD w2;
  VectorD b2;
};

// Mean cross-entropy over the batch; fills `grad` with the gradient of
// CE + lambda * ||W||^2.
double LossAndGradient(const Model& m, const MatrixD& x, const std::vector<int>& y,
                       double lambda, Gradients& grad) {
  const double n = static_cast<double>(x.rows());
  MatrixD pre = (x * m.w1.transpose()).rowwise() + m.b1.transpose();
  MatrixD hidden;
  MatrixD probs;
  if (m.arch == Arch::kLinear) {
    probs = pre;
  } else {
    hidden = pre.cwiseMax(0.0);
    probs = (hidden * m.w2.transpose()).rowwise() + m.b2.transpose();
  }
  double loss = 0.0;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    auto row = probs.row(i);
    const double max = row.maxCoeff();
    const double lse = max + std::log((row.array() - max).exp().sum());
    loss += lse - row(y[i]);
  }
  loss /= n;
  SoftmaxRows(probs);
  MatrixD delta = probs;
  for (Eigen::Index i = 0; i < delta.rows(); ++i) delta(i, y[i]) -= 1.0;
  delta /= n;

  if (m.arch == Arch::kLinear) {
    grad.w1 = delta.transpose() * x + 2.0 * lambda * m.w1;
    grad.b1 = delta.colwise().sum().transpose();
  } else {
    grad.w2 = delta.transpose() * hidden + 2.0 * lambda * m.w2;
    grad.b2 = delta.colwise().sum().transpose();
    MatrixD back = (delta * m.w2).cwiseProduct((pre.array() > 0.0).cast<double>().matrix());
    grad.w1 = back.transpose() * x + 2.0 * lambda * m.w1;
    grad.b1 = back.colwise().sum().transpose() + 2.0 * lambda * m.b1;
  }
  return loss;
}

std::vector<int> Labels(const Dataset& data) {
  std::vector<int> out;
  out.reserve(data.size());
  for (const auto& s : data.samples) out.push_back(s.label);
  return out;
}

MatrixD Features(const Dataset& data) {
  if (!data.features) Fail(ErrorCode::kMissingBlock, "dataset has no features block");
  return ToDouble(*data.features);
}

double AccuracyOf(const MatrixD& logits, const std::vector<int>& labels) {
  if (labels.empty()) return 0.0;
  size_t correct = 0;
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    if (best == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

VectorD LikelihoodsOf(MatrixD logits, const std::vector<int>& labels) {
  if (!logits.allFinite()) Fail(ErrorCode::kNonFinite, "non-finite logits");
  SoftmaxRows(logits);
  VectorD out(logits.rows());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) out[i] = logits(i, labels[i]);
  return out;
}

// Runs SGD; `lambda_at(epoch)` gives the decay for each 0-based epoch and
// `on_epoch(rounded_model, epoch, lambda)` observes each finished epoch
// (1-based epoch number).
void TrainLoop(const Dataset& train, const TrainHyper& hyper,
               const std::function<double(int)>& lambda_at,
               const std::function<void(const Model&, int, double)>& on_epoch) {
  hyper.Validate();
  const MatrixD x = Features(train);
  const std::vector<int> labels = Labels(train);
  const int num_classes = train.NumClasses();
  std::vector<std::vector<size_t>> by_class(num_classes);
  for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
  int present = 0;
  for (const auto& members : by_class) present += members.empty() ? 0 : 1;
  if (present < 2) {
    Fail(ErrorCode::kInvalidArgument, "training split must contain at least two classes");
  }

  ClassBalancedSampler sampler(by_class, DeriveSeed(hyper.seed, "amplify/sampler"));
  Model model = InitModel(hyper, static_cast<int>(x.cols()), num_classes);
  Gradients grad;
  Model velocity = model;
  velocity.w1.setZero();
  velocity.b1.setZero();
  velocity.w2.setZero();
  velocity.b2.setZero();

  const int steps = static_cast<int>((x.rows() + hyper.batch_size - 1) / hyper.batch_size);
  MatrixD xb(hyper.batch_size, x.cols());
  std::vector<int> yb(hyper.batch_size);
  for (int epoch = 0; epoch < hyper.max_epochs; ++epoch) {
    const double lambda = lambda_at(epoch);
    for (int step = 0; step < steps; ++step) {
      const auto batch = sampler.NextBatch(hyper.batch_size);
      for (int i = 0; i < hyper.batch_size; ++i) {
        xb.row(i) = x.row(static_cast<Eigen::Index>(batch[i]));
        yb[i] = labels[batch[i]];
      }
      const double loss = LossAndGradient(model, xb, yb, lambda, grad);
      if (!std::isfinite(loss)) {
        Fail(ErrorCode::kDivergence,
             "training diverged (non-finite loss) at epoch " + std::to_string(epoch + 1));
      }
      auto update = [&](auto& param, auto& vel, const auto& g) {
        vel = hyper.momentum * vel + g;
        param -= hyper.learning_rate * vel;
      };
      update(model.w1, velocity.w1, grad.w1);
      update(model.b1, velocity.b1, grad.b1);
      if (model.arch == Arch::kMlp) {
        update(model.w2, velocity.w2, grad.w2);
        update(model.b2, velocity.b2, grad.b2);
      }
    }
    if (!model.w1.allFinite() || !model.b1.allFinite() ||
        (model.arch == Arch::kMlp && (!model.w2.allFinite() || !model.b2.allFinite()))) {
      Fail(ErrorCode::kDivergence,
           "training diverged (non-finite weights) at epoch " + std::to_string(epoch + 1));
    }
    on_epoch(model.RoundedToFloat(), epoch + 1, lambda);
  }
}

}  // namespace

ModelSnapshot TrainRegularized(const Dataset& train, const TrainHyper& hyper) {
  const MatrixD x = Features(train);
  const std::vector<int> labels = Labels(train);
  std::optional<ModelSnapshot> best;
  TrainLoop(
      train, hyper, [&](int) { return hyper.lambda; },
      [&](const Model& model, int epoch, double lambda) {
        const double acc = AccuracyOf(model.Logits(x), labels);
        if (!best || acc > best->train_accuracy) {
          best = ModelSnapshot{model, lambda, epoch, acc, std::nullopt};
        }
      });
  return *best;
}

double Likelihood(const Model& model, const VectorD& x, int label) {
  Require(label >= 0 && label < model.num_classes, "label out of range");
  const MatrixD logits = model.Logits(x.transpose());
  return LikelihoodsOf(logits, {label})[0];
}

VectorD LabelLikelihoods(const Model& model, const Dataset& data) {
  return LikelihoodsOf(model.Logits(Features(data)), Labels(data));
}

double SigmaFromLikelihoods(const std::vector<int>& labels, const VectorD& likelihoods,
                            int num_classes) {
  Require(static_cast<Eigen::Index>(labels.size()) == likelihoods.size(),
          "labels and likelihoods differ in length");
  std::vector<double> sum(num_classes, 0.0), sum_sq(num_classes, 0.0);
  std::vector<size_t> count(num_classes, 0);
  for (size_t i = 0; i < labels.size(); ++i) {
    sum[labels[i]] += likelihoods[static_cast<Eigen::Index>(i)];
    ++count[labels[i]];
  }
  for (size_t i = 0; i < labels.size(); ++i) {
    const int c = labels[i];
    const double d = likelihoods[static_cast<Eigen::Index>(i)] - sum[c] / count[c];
    sum_sq[c] += d * d;
  }
  double total = 0.0;
  for (int c = 0; c < num_classes; ++c) {
    if (count[c] == 0) {
      Fail(ErrorCode::kEmptyClass, "sigma_amco: class " + std::to_string(c) + " is empty");
    }
    total += sum_sq[c] / static_cast<double>(count[c]);
  }
  return total / num_classes;
}

double SigmaAmco(const Model& model, const Dataset& data) {
  return SigmaFromLikelihoods(Labels(data), LabelLikelihoods(model, data), data.NumClasses());
}

AmplifiedModel SweepLambda(const Dataset& train, const TrainHyper& base,
                           const std::vector<double>& lambdas, int threads) {
  Require(!lambdas.empty(), "lambda grid must be nonempty");
  struct Outcome {
    std::optional<ModelSnapshot> snapshot;
    std::string error;
  };
  std::vector<Outcome> outcomes(lambdas.size());
  auto run = [&](size_t i) {
    TrainHyper hyper = base;
    hyper.lambda = lambdas[i];
    try {
      ModelSnapshot snap = TrainRegularized(train, hyper);
      snap.sigma_amco = SigmaAmco(snap.model, train);
      outcomes[i].snapshot = std::move(snap);
    } catch (const Error& e) {
      outcomes[i].error = "lambda " + std::to_string(lambdas[i]) + ": " + e.what();
    }
  };
  if (threads <= 1) {
    for (size_t i = 0; i < lambdas.size(); ++i) run(i);
  } else {
    size_t next = 0;
    while (next < lambdas.size()) {
      std::vector<std::thread> pool;
      for (int t = 0; t < threads && next < lambdas.size(); ++t) pool.emplace_back(run, next++);
      for (auto& th : pool) th.join();
    }
  }

  AmplifiedModel out;
  std::optional<size_t> best;
  for (size_t i = 0; i < outcomes.size(); ++i) {
    if (!outcomes[i].snapshot) {
      out.failures.push_back(outcomes[i].error);
      continue;
    }
    const auto& snap = *outcomes[i].snapshot;
    out.sweep_log.push_back({snap.lambda, snap.epoch, snap.train_accuracy, *snap.sigma_amco});
    out.candidates.push_back(snap);
    if (!best || *snap.sigma_amco > *out.candidates[*best].sigma_amco) {
      best = out.candidates.size() - 1;
    }
  }
  if (!best) {
    std::string message = "every lambda in the sweep failed:";
    for (const auto& f : out.failures) message += " [" + f + "]";
    Fail(ErrorCode::kFitFailed, message);
  }
  out.snapshot = out.candidates[*best];
  out.lambda_star = out.snapshot.lambda;
  return out;
}

std::vector<std::string> RankBiasConflicting(const Model& model, const Dataset& data,
                                             int class_label) {
  const VectorD lik = LabelLikelihoods(model, data);
  std::vector<size_t> rows;
  for (size_t i = 0; i < data.size(); ++i) {
    if (data.samples[i].label == class_label) rows.push_back(i);
  }
  if (rows.empty()) {
    Fail(ErrorCode::kEmptyClass, "class " + std::to_string(class_label) + " is empty");
  }
  std::sort(rows.begin(), rows.end(), [&](size_t a, size_t b) {
    const double la = lik[static_cast<Eigen::Index>(a)];
    const double lb = lik[static_cast<Eigen::Index>(b)];
    if (la != lb) return la < lb;
    return data.samples[a].id < data.samples[b].id;
  });
  std::vector<std::string> ids;
  ids.reserve(rows.size());
  for (size_t r : rows) ids.push_back(data.samples[r].id);
  return ids;
}

double ScheduledLambda(int epoch, int epochs, double from, double to) {
  if (epochs <= 1) return from;
  const double t = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
  return from * std::pow(to / from, t);
}

ModelSnapshot TrainWdSchedule(const Dataset& train, const TrainHyper& hyper, double wd_from,
                              double wd_to) {
  Require(wd_to > 0.0 && wd_from > wd_to, "weight-decay schedule needs wd_from > wd_to > 0");
  const MatrixD x = Features(train);
  const std::vector<int> labels = Labels(train);
  const int num_classes = train.NumClasses();
  std::optional<ModelSnapshot> best;
  TrainLoop(
      train, hyper,
      [&](int epoch) { return ScheduledLambda(epoch, hyper.max_epochs, wd_from, wd_to); },
      [&](const Model& model, int epoch, double lambda) {
        const MatrixD logits = model.Logits(x);
        const double sigma =
            SigmaFromLikelihoods(labels, LikelihoodsOf(logits, labels), num_classes);
        if (!best || sigma > *best->sigma_amco) {
          best = ModelSnapshot{model, lambda, epoch, AccuracyOf(logits, labels), sigma};
        }
      });
  return *best;
}

double Accuracy(const Model& model, const Dataset& data) {
  return AccuracyOf(model.Logits(Features(data)), Labels(data));
}

double GtAccGap(const Model& model, const Dataset& data) {
  const MatrixD logits = model.Logits(Features(data));
  const int k = data.NumClasses();
  std::vector<double> correct[2], total[2];
  for (auto& v : correct) v.assign(k, 0.0);
  for (auto& v : total) v.assign(k, 0.0);
  for (size_t i = 0; i < data.size(); ++i) {
    const auto& s = data.samples[i];
    if (!s.bias_conflicting) {
      Fail(ErrorCode::kMissingBlock, "gt_acc_gap needs bias_conflicting annotations");
    }
    Eigen::Index pred = 0;
    logits.row(static_cast<Eigen::Index>(i)).maxCoeff(&pred);
    const int group = *s.bias_conflicting ? 1 : 0;
    total[group][s.label] += 1.0;
    if (pred == s.label) correct[group][s.label] += 1.0;
  }
  double gap = 0.0;
  int classes = 0;
  for (int c = 0; c < k; ++c) {
    if (total[0][c] == 0.0 || total[1][c] == 0.0) continue;
    gap += correct[0][c] / total[0][c] - correct[1][c] / total[1][c];
    ++classes;
  }
  if (classes == 0) {
    Fail(ErrorCode::kUndefinedMetric,
         "gt_acc_gap: no class has both bias-aligned and bias-conflicting samples");
  }
  return gap / classes;
}

namespace {

nlohmann::json SnapshotHeader(const ModelSnapshot& s) {
  nlohmann::json j = {{"lambda", s.lambda},
                      {"epoch", s.epoch},
                      {"train_accuracy", s.train_accuracy}};
  j["sigma_amco"] = s.sigma_amco ? nlohmann::json(*s.sigma_amco) : nlohmann::json();
  return j;
}

MatrixF AsFloat(const MatrixD& m) { return m.cast<float>(); }
MatrixF AsFloatRow(const VectorD& v) { return v.transpose().cast<float>(); }

}  // namespace

void SaveAmplified(const AmplifiedModel& amplified, const TrainHyper& hyper,
                   const fs::path& directory) {
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create " + directory.string());
  const Model& m = amplified.snapshot.model;
  nlohmann::json header = {
      {"architecture", m.arch == Arch::kLinear ? "linear" : "mlp"},
      {"input_dim", m.input_dim},
      {"num_classes", m.num_classes},
      {"hidden_width", m.arch == Arch::kMlp ? m.w1.rows() : 0},
      {"seed", hyper.seed},
      {"hyper", ToJson(hyper)},
      {"lambda_star", amplified.lambda_star},
      {"snapshot", SnapshotHeader(amplified.snapshot)},
  };
  nlohmann::json log = nlohmann::json::array();
  for (const auto& e : amplified.sweep_log) {
    log.push_back({{"lambda", e.lambda},
                   {"epoch", e.epoch},
                   {"train_accuracy", e.train_accuracy},
                   {"sigma_amco", e.sigma_amco}});
  }
  header["sweep_log"] = log;
  header["failures"] = amplified.failures;
  nlohmann::json tensors = {{"w1", "w1.fsmx"}, {"b1", "b1.fsmx"}};
  io::WriteMatrix(directory / "w1.fsmx", AsFloat(m.w1));
  io::WriteMatrix(directory / "b1.fsmx", AsFloatRow(m.b1));
  if (m.arch == Arch::kMlp) {
    io::WriteMatrix(directory / "w2.fsmx", AsFloat(m.w2));
    io::WriteMatrix(directory / "b2.fsmx", AsFloatRow(m.b2));
    tensors["w2"] = "w2.fsmx";
    tensors["b2"] = "b2.fsmx";
  }
  header["tensors"] = tensors;
  io::WriteJsonFile(directory / "model.json", header);
}

AmplifiedModel LoadAmplified(const fs::path& directory) {
  const nlohmann::json header = io::ReadJsonFile(directory / "model.json");
  AmplifiedModel out;
  try {
    Model& m = out.snapshot.model;
    const std::string arch = header.at("architecture").get<std::string>();
    Require(arch == "linear" || arch == "mlp", "unknown architecture '" + arch + "'");
    m.arch = arch == "linear" ? Arch::kLinear : Arch::kMlp;
    m.input_dim = header.at("input_dim").get<int>();
    m.num_classes = header.at("num_classes").get<int>();
    const auto& tensors = header.at("tensors");
    m.w1 = io::ReadMatrix(directory / tensors.at("w1").get<std::string>()).cast<double>();
    m.b1 = io::ReadMatrix(directory / tensors.at("b1").get<std::string>())
               .cast<double>()
               .transpose();
    if (m.arch == Arch::kMlp) {
      m.w2 = io::ReadMatrix(directory / tensors.at("w2").get<std::string>()).cast<double>();
      m.b2 = io::ReadMatrix(directory / tensors.at("b2").get<std::string>())
                 .cast<double>()
                 .transpose();
    }
    const auto& snap = header.at("snapshot");
    out.snapshot.lambda = snap.at("lambda").get<double>();
    out.snapshot.epoch = snap.at("epoch").get<int>();
    out.snapshot.train_accuracy = snap.at("train_accuracy").get<double>();
    if (!snap.at("sigma_amco").is_null()) {
      out.snapshot.sigma_amco = snap["sigma_amco"].get<double>();
    }
    out.lambda_star = header.at("lambda_star").get<double>();
    for (const auto& e : header.at("sweep_log")) {
      out.sweep_log.push_back({e.at("lambda").get<double>(), e.at("epoch").get<int>(),
                               e.at("train_accuracy").get<double>(),
                               e.at("sigma_amco").get<double>()});
    }
    out.failures = header.value("failures", std::vector<std::string>{});
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormat, "model.json: " + std::string(e.what()));
  }
  return out;
}

}  // namespace facts::amplify
