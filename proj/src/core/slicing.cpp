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

#include "core/slicing.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>
#include <optional>
#include <set>
#include <thread>

#include "core/dataio.hpp"
#include "core/error.hpp"
#include "core/metrics.hpp"

namespace facts::slicing {
namespace fs = std::filesystem;

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
const double kLog2Pi = std::log(2.0 * std::numbers::pi);
}  // namespace

std::string CovTypeName(CovType type) {
  switch (type) {
    case CovType::kFull: return "full";
    case CovType::kDiagonal: return "diagonal";
    case CovType::kTied: return "tied";
  }
  return "?";
}

CovType ParseCovType(const std::string& name) {
  if (name == "full") return CovType::kFull;
  if (name == "diagonal" || name == "diag") return CovType::kDiagonal;
  if (name == "tied") return CovType::kTied;
  Fail(ErrorCode::kInvalidArgument,
       "covariance type must be full, diagonal or tied, got '" + name + "'");
}

void SliceHyper::Validate() const {
  Require(k_hat >= 1, "k_hat must be at least 1");
  Require(alpha >= 0.0 && std::isfinite(alpha), "alpha must be a nonnegative finite number");
  Require(delta_p >= 0.0, "delta_p must be nonnegative");
  Require(max_em_steps >= 1, "max_em_steps must be positive");
  Require(ll_tol > 0.0, "ll_tol must be positive");
}

nlohmann::json ToJson(const SliceHyper& h) {
  return {{"k_hat", h.k_hat},       {"alpha", h.alpha},
          {"delta_p", h.delta_p},   {"cov_p", CovTypeName(h.cov_p)},
          {"cov_c", "diagonal"},    {"max_em_steps", h.max_em_steps},
          {"ll_tol", h.ll_tol},     {"seed", h.seed}};
}

SliceHyper SliceHyperFromJson(const nlohmann::json& j, SliceHyper h) {
  h.k_hat = j.value("k_hat", h.k_hat);
  h.alpha = j.value("alpha", h.alpha);
  h.delta_p = j.value("delta_p", h.delta_p);
  if (j.contains("cov_p")) h.cov_p = ParseCovType(j["cov_p"].get<std::string>());
  h.max_em_steps = j.value("max_em_steps", h.max_em_steps);
  h.ll_tol = j.value("ll_tol", h.ll_tol);
  h.seed = j.value("seed", h.seed);
  return h;
}

int SliceMixture::logit_dim() const {
  return components.empty() ? 0 : static_cast<int>(components.front().mu_p.size());
}

int SliceMixture::embed_dim() const {
  return components.empty() ? 0 : static_cast<int>(components.front().mu_c.size());
}

namespace {

// Cholesky factor and log-determinant of one logit-view covariance.
struct LogitDensity {
  MatrixD chol_lower;
  double log_det = 0.0;
};

LogitDensity Factor(const MatrixD& sigma, const char* context) {
  Eigen::LLT<MatrixD> llt(sigma);
  if (llt.info() != Eigen::Success) {
    Fail(ErrorCode::kFitFailed,
         std::string(context) + ": logit covariance is not positive definite");
  }
  LogitDensity d;
  d.chol_lower = llt.matrixL();
  d.log_det = 2.0 * d.chol_lower.diagonal().array().log().sum();
  return d;
}

// log N(x_i; mu, Sigma) for every row.
VectorD GaussianLogPdf(const MatrixD& x, const VectorD& mu, const LogitDensity& d) {
  MatrixD centered = (x.rowwise() - mu.transpose()).transpose();
  d.chol_lower.triangularView<Eigen::Lower>().solveInPlace(centered);
  const VectorD mahal = centered.colwise().squaredNorm().transpose();
  const double constant = -0.5 * (static_cast<double>(mu.size()) * kLog2Pi + d.log_det);
  return (constant - 0.5 * mahal.array()).matrix();
}

VectorD DiagonalLogPdf(const MatrixD& x, const VectorD& mu, const VectorD& var) {
  const VectorD inv = var.cwiseInverse();
  const double constant = -0.5 * (static_cast<double>(mu.size()) * kLog2Pi +
                                  var.array().log().sum());
  VectorD out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    out[i] = constant -
             0.5 * ((x.row(i).transpose() - mu).array().square() * inv.array()).sum();
  }
  return out;
}

// -(1/2) n [log|Sigma| + tr(Sigma^-1 S)]: the part of the EM auxiliary that
// depends on a logit covariance, for weighted scatter S about the new mean.
double CovarianceObjective(const MatrixD& sigma, const MatrixD& scatter, double mass) {
  Eigen::LLT<MatrixD> llt(sigma);
  if (llt.info() != Eigen::Success) return kNegInf;
  const MatrixD l = llt.matrixL();
  const double log_det = 2.0 * l.diagonal().array().log().sum();
  return -0.5 * mass * (log_det + llt.solve(scatter).trace());
}

MatrixD Regularized(const MatrixD& scatter, CovType type, double delta) {
  MatrixD out = type == CovType::kDiagonal ? MatrixD(scatter.diagonal().asDiagonal())
                                           : scatter;
  out.diagonal().array() += delta;
  return out;
}

struct EmState {
  const MatrixD& logits;
  const MatrixD& embeddings;
  const SliceHyper& hyper;
  SliceMixture& mixture;
};

// Weighted maximum-likelihood update from responsibilities `resp` (n x k).
// The logit covariance update S + delta*I is accepted only when it does not
// lower the EM auxiliary relative to the current covariance, which keeps the
// iteration a generalized EM and the log-likelihood non-decreasing.
void MStep(EmState& st, const MatrixD& resp, bool first) {
  const MatrixD& b = st.logits;
  const MatrixD& z = st.embeddings;
  const auto k = resp.cols();
  const auto n = static_cast<double>(resp.rows());
  const auto p_dim = b.cols();
  auto& comps = st.mixture.components;
  const VectorD mass = resp.colwise().sum().transpose();

  // Pooled quantities for the tied covariance.
  MatrixD pooled_scatter = MatrixD::Zero(p_dim, p_dim);
  double pooled_mass = 0.0;
  std::vector<MatrixD> scatters(k);

  for (Eigen::Index j = 0; j < k; ++j) {
    Component& c = comps[j];
    if (!c.active) continue;
    if (mass[j] < kEmptyComponentMass) {
      c.active = false;
      continue;
    }
    const auto w = resp.col(j);
    c.mu_c = (z.transpose() * w) / mass[j];
    c.mu_p = (b.transpose() * w) / mass[j];
    const MatrixD zc = z.rowwise() - c.mu_c.transpose();
    c.sigma_c_diag = (zc.array().square().colwise() * w.array()).colwise().sum().transpose() /
                     mass[j];
    c.sigma_c_diag = c.sigma_c_diag.cwiseMax(kEmbedVarianceFloor);
    const MatrixD bc = b.rowwise() - c.mu_p.transpose();
    scatters[j] = (bc.transpose() * w.asDiagonal() * bc) / mass[j];
    pooled_scatter += mass[j] * scatters[j];
    pooled_mass += mass[j];
  }

  double active_mass = 0.0;
  for (Eigen::Index j = 0; j < k; ++j) {
    if (comps[j].active) active_mass += mass[j];
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    st.mixture.weights[j] = comps[j].active ? mass[j] / active_mass : 0.0;
  }

  const double delta = st.hyper.delta_p;
  if (st.hyper.cov_p == CovType::kTied) {
    pooled_scatter /= pooled_mass;
    MatrixD candidate = Regularized(pooled_scatter, CovType::kFull, delta);
    const MatrixD* current = nullptr;
    for (const auto& c : comps) {
      if (c.active && c.sigma_p.size() > 0) {
        current = &c.sigma_p;
        break;
      }
    }
    if (!first && current != nullptr &&
        CovarianceObjective(*current, pooled_scatter, pooled_mass) >
            CovarianceObjective(candidate, pooled_scatter, pooled_mass)) {
      candidate = *current;
    }
    for (auto& c : comps) {
      if (c.active) c.sigma_p = candidate;
    }
    return;
  }
  for (Eigen::Index j = 0; j < k; ++j) {
    Component& c = comps[j];
    if (!c.active) continue;
    MatrixD candidate = Regularized(scatters[j], st.hyper.cov_p, delta);
    if (!first && CovarianceObjective(c.sigma_p, scatters[j], mass[j]) >
                      CovarianceObjective(candidate, scatters[j], mass[j])) {
      continue;
    }
    c.sigma_p = std::move(candidate);
  }
  (void)n;
}

}  // namespace

MatrixD SliceMixture::LogJoint(const MatrixD& logits, const MatrixD& embeddings) const {
  Require(logits.rows() == embeddings.rows(), "logit and embedding views differ in rows");
  Require(logits.cols() == logit_dim(),
          "logit dimension " + std::to_string(logits.cols()) +
              " does not match mixture dimension " + std::to_string(logit_dim()));
  Require(embeddings.cols() == embed_dim(),
          "embedding dimension " + std::to_string(embeddings.cols()) +
              " does not match mixture dimension " + std::to_string(embed_dim()));
  const auto k = static_cast<Eigen::Index>(components.size());
  MatrixD out = MatrixD::Constant(logits.rows(), k, kNegInf);
  for (Eigen::Index j = 0; j < k; ++j) {
    const Component& c = components[j];
    if (!c.active || weights[j] <= 0.0) continue;
    VectorD col = DiagonalLogPdf(embeddings, c.mu_c, c.sigma_c_diag);
    col.array() += std::log(weights[j]);
    if (hyper.alpha != 0.0) {
      col += hyper.alpha * GaussianLogPdf(logits, c.mu_p, Factor(c.sigma_p, "log density"));
    }
    out.col(j) = col;
  }
  return out;
}

namespace {

// Row-wise log-sum-exp; -inf rows stay -inf.
VectorD RowLogSumExp(const MatrixD& m) {
  VectorD out(m.rows());
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    const double max = m.row(i).maxCoeff();
    if (!std::isfinite(max)) {
      out[i] = max;
      continue;
    }
    out[i] = max + std::log((m.row(i).array() - max).exp().sum());
  }
  return out;
}

double SumLongDouble(const VectorD& v) {
  long double total = 0.0L;
  for (Eigen::Index i = 0; i < v.size(); ++i) total += v[i];
  return static_cast<double>(total);
}

}  // namespace

double SliceMixture::LogLikelihood(const MatrixD& logits, const MatrixD& embeddings) const {
  return SumLongDouble(RowLogSumExp(LogJoint(logits, embeddings)));
}

std::vector<int> InitSlices(const MatrixD& logits, const std::vector<int>& predictions,
                            int k_hat) {
  Require(k_hat >= 1, "k_hat must be at least 1");
  Require(!predictions.empty(), "cannot initialize slices without samples");
  Require(static_cast<Eigen::Index>(predictions.size()) == logits.rows(),
          "predictions and logits differ in length");

  std::map<int, std::vector<size_t>> by_prediction;
  for (size_t i = 0; i < predictions.size(); ++i) by_prediction[predictions[i]].push_back(i);
  std::vector<std::vector<size_t>> groups;
  for (auto& [pred, rows] : by_prediction) groups.push_back(std::move(rows));

  if (static_cast<int>(groups.size()) > k_hat) {
    std::stable_sort(groups.begin(), groups.end(),
                     [](const auto& a, const auto& b) { return a.size() > b.size(); });
    for (size_t g = k_hat; g < groups.size(); ++g) {
      groups[k_hat - 1].insert(groups[k_hat - 1].end(), groups[g].begin(), groups[g].end());
    }
    groups.resize(k_hat);
    std::sort(groups[k_hat - 1].begin(), groups[k_hat - 1].end());
  }

  while (static_cast<int>(groups.size()) < k_hat) {
    size_t largest = 0;
    for (size_t g = 1; g < groups.size(); ++g) {
      if (groups[g].size() > groups[largest].size()) largest = g;
    }
    std::vector<size_t>& rows = groups[largest];
    if (rows.size() < 2) break;

    MatrixD member_logits(static_cast<Eigen::Index>(rows.size()), logits.cols());
    for (size_t r = 0; r < rows.size(); ++r) {
      member_logits.row(static_cast<Eigen::Index>(r)) =
          logits.row(static_cast<Eigen::Index>(rows[r]));
    }
    const MatrixD centered = member_logits.rowwise() - member_logits.colwise().mean();
    const MatrixD cov = centered.transpose() * centered;
    Eigen::SelfAdjointEigenSolver<MatrixD> eig(cov);
    const VectorD direction = eig.eigenvectors().col(eig.eigenvalues().size() - 1);
    const VectorD projection = centered * direction;

    std::vector<size_t> order(rows.size());
    for (size_t r = 0; r < order.size(); ++r) order[r] = r;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return projection[static_cast<Eigen::Index>(a)] < projection[static_cast<Eigen::Index>(b)];
    });
    const size_t half = rows.size() / 2;
    std::vector<size_t> low, high;
    for (size_t r = 0; r < order.size(); ++r) (r < half ? low : high).push_back(rows[order[r]]);
    std::sort(low.begin(), low.end());
    std::sort(high.begin(), high.end());
    rows = std::move(low);
    groups.push_back(std::move(high));
  }

  std::vector<int> out(predictions.size(), 0);
  for (size_t g = 0; g < groups.size(); ++g) {
    for (size_t r : groups[g]) out[r] = static_cast<int>(g);
  }
  return out;
}

SliceMixture FitMixtureFrom(const MatrixD& logits, const MatrixD& embeddings,
                            const SliceHyper& hyper, const std::vector<int>& init,
                            int class_label) {
  hyper.Validate();
  if (logits.rows() < 1) Fail(ErrorCode::kInvalidArgument, "mixture fit needs at least one sample");
  Require(logits.rows() == embeddings.rows(), "logit and embedding views differ in rows");
  Require(static_cast<Eigen::Index>(init.size()) == logits.rows(),
          "initial assignment has the wrong length");
  const Eigen::Index n = logits.rows();
  const Eigen::Index k = hyper.k_hat;

  SliceMixture mix;
  mix.class_label = class_label;
  mix.hyper = hyper;
  mix.weights = VectorD::Zero(k);
  mix.components.resize(k);

  // Empty components keep the pooled statistics as placeholders.
  const VectorD mean_p = logits.colwise().mean();
  const VectorD mean_c = embeddings.colwise().mean();
  const MatrixD bc = logits.rowwise() - mean_p.transpose();
  const MatrixD pooled_p =
      Regularized(bc.transpose() * bc / static_cast<double>(n), hyper.cov_p,
                  std::max(hyper.delta_p, kEmbedVarianceFloor));
  const VectorD pooled_c =
      ((embeddings.rowwise() - mean_c.transpose()).array().square().colwise().sum() /
       static_cast<double>(n))
          .matrix()
          .transpose()
          .cwiseMax(kEmbedVarianceFloor);
  for (auto& c : mix.components) {
    c.mu_p = mean_p;
    c.sigma_p = pooled_p;
    c.mu_c = mean_c;
    c.sigma_c_diag = pooled_c;
  }

  MatrixD resp = MatrixD::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) {
    Require(init[i] >= 0 && init[i] < k, "initial component index out of range");
    resp(i, init[i]) = 1.0;
  }

  EmState state{logits, embeddings, hyper, mix};
  for (int step = 0; step < hyper.max_em_steps; ++step) {
    MStep(state, resp, step == 0);
    const MatrixD joint = mix.LogJoint(logits, embeddings);
    const VectorD lse = RowLogSumExp(joint);
    const double ll = SumLongDouble(lse);
    if (!std::isfinite(ll)) {
      Fail(ErrorCode::kFitFailed,
           "non-finite log-likelihood at EM iteration " + std::to_string(step));
    }
    resp = (joint.colwise() - lse).array().exp().matrix();
    mix.fit_log.push_back(ll);
    if (mix.fit_log.size() >= 2 && ll - mix.fit_log[mix.fit_log.size() - 2] < hyper.ll_tol) {
      break;
    }
  }
  return mix;
}

SliceMixture FitMixture(const MatrixD& logits, const MatrixD& embeddings,
                        const SliceHyper& hyper, int class_label) {
  hyper.Validate();
  if (logits.rows() < 1) Fail(ErrorCode::kInvalidArgument, "mixture fit needs at least one sample");
  std::vector<int> predictions(static_cast<size_t>(logits.rows()));
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    Eigen::Index best = 0;
    logits.row(i).maxCoeff(&best);
    predictions[static_cast<size_t>(i)] = static_cast<int>(best);
  }
  return FitMixtureFrom(logits, embeddings, hyper, InitSlices(logits, predictions, hyper.k_hat),
                        class_label);
}

ClassAssignment AssignRows(const SliceMixture& mixture, const MatrixD& logits,
                           const MatrixD& embeddings) {
  const MatrixD joint = mixture.LogJoint(logits, embeddings);
  ClassAssignment out;
  out.slice_of_row.resize(static_cast<size_t>(joint.rows()));
  out.log_density_of_row.resize(static_cast<size_t>(joint.rows()));
  for (Eigen::Index i = 0; i < joint.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < joint.cols(); ++j) {
      if (joint(i, j) > joint(i, best)) best = j;
    }
    out.slice_of_row[static_cast<size_t>(i)] = static_cast<int>(best);
    out.log_density_of_row[static_cast<size_t>(i)] = joint(i, best);
  }
  return out;
}

namespace {

struct ClassView {
  std::vector<size_t> rows;
  MatrixD logits;
  MatrixD embeddings;
};

std::vector<ClassView> ViewsByClass(const Dataset& data) {
  if (!data.logits) Fail(ErrorCode::kMissingBlock, "dataset has no logits block");
  if (!data.embedding) Fail(ErrorCode::kMissingBlock, "dataset has no embedding block");
  std::vector<ClassView> views(static_cast<size_t>(data.NumClasses()));
  for (size_t i = 0; i < data.size(); ++i) views[data.samples[i].label].rows.push_back(i);
  for (auto& v : views) {
    v.logits.resize(static_cast<Eigen::Index>(v.rows.size()), data.logits->cols());
    v.embeddings.resize(static_cast<Eigen::Index>(v.rows.size()), data.embedding->cols());
    for (size_t r = 0; r < v.rows.size(); ++r) {
      const auto src = static_cast<Eigen::Index>(v.rows[r]);
      v.logits.row(static_cast<Eigen::Index>(r)) = data.logits->row(src).cast<double>();
      v.embeddings.row(static_cast<Eigen::Index>(r)) = data.embedding->row(src).cast<double>();
    }
  }
  return views;
}

template <typename Fn>
void ForEachIndex(size_t count, int threads, Fn&& fn) {
  if (threads <= 1) {
    for (size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  size_t next = 0;
  while (next < count) {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads && next < count; ++t) pool.emplace_back(fn, next++);
    for (auto& th : pool) th.join();
  }
}

}  // namespace

std::vector<SliceMixture> FitPerClass(const Dataset& fit, const SliceHyper& hyper, int threads) {
  const auto views = ViewsByClass(fit);
  std::vector<std::optional<SliceMixture>> fitted(views.size());
  std::vector<std::string> errors(views.size());
  ForEachIndex(views.size(), threads, [&](size_t c) {
    if (views[c].rows.empty()) return;
    try {
      fitted[c] = FitMixture(views[c].logits, views[c].embeddings, hyper, static_cast<int>(c));
    } catch (const Error& e) {
      errors[c] = "class " + std::to_string(c) + ": " + e.what();
    }
  });
  std::vector<SliceMixture> out;
  for (size_t c = 0; c < views.size(); ++c) {
    if (!errors[c].empty()) Fail(ErrorCode::kFitFailed, errors[c]);
    if (fitted[c]) out.push_back(std::move(*fitted[c]));
  }
  if (out.empty()) Fail(ErrorCode::kInvalidArgument, "fit split has no samples");
  return out;
}

SliceAssignment Assign(const std::vector<SliceMixture>& mixtures, const Dataset& data) {
  const auto views = ViewsByClass(data);
  std::map<int, const SliceMixture*> by_class;
  for (const auto& m : mixtures) by_class[m.class_label] = &m;

  SliceAssignment out;
  out.entries.resize(data.size());
  std::map<SliceKey, std::vector<std::pair<double, std::string>>> buckets;
  for (size_t c = 0; c < views.size(); ++c) {
    if (views[c].rows.empty()) continue;
    auto it = by_class.find(static_cast<int>(c));
    if (it == by_class.end()) {
      Fail(ErrorCode::kEmptyClass,
           "no fitted mixture for class " + std::to_string(c) + " (empty in the fit split)");
    }
    const ClassAssignment ca = AssignRows(*it->second, views[c].logits, views[c].embeddings);
    for (size_t r = 0; r < views[c].rows.size(); ++r) {
      const size_t row = views[c].rows[r];
      auto& e = out.entries[row];
      e.id = data.samples[row].id;
      e.class_label = static_cast<int>(c);
      e.slice_id = ca.slice_of_row[r];
      e.log_density = ca.log_density_of_row[r];
      buckets[{e.class_label, e.slice_id}].emplace_back(e.log_density, e.id);
    }
  }
  for (auto& [key, items] : buckets) {
    std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return a.second < b.second;
    });
    auto& ids = out.members[key];
    for (auto& item : items) ids.push_back(std::move(item.second));
  }
  return out;
}

SliceReport RankAndReport(const SliceAssignment& assignment,
                          const std::map<std::string, bool>& correct, int top_k) {
  Require(top_k >= 1, "top_k must be positive");
  if (assignment.members.empty()) {
    Fail(ErrorCode::kInvalidArgument, "slice report: no slices to rank");
  }
  SliceReport report;
  report.top_k = top_k;
  for (const auto& [key, ids] : assignment.members) {
    ReportedSlice s;
    s.class_label = key.class_label;
    s.slice_id = key.slice_id;
    s.size = ids.size();
    size_t hits = 0;
    for (const auto& id : ids) {
      auto it = correct.find(id);
      if (it == correct.end()) {
        Fail(ErrorCode::kInvalidArgument, "slice report: no correctness for sample " + id);
      }
      hits += it->second ? 1 : 0;
    }
    s.accuracy = static_cast<double>(hits) / static_cast<double>(ids.size());
    s.members = ids;
    s.top_k.assign(ids.begin(), ids.begin() + std::min<size_t>(ids.size(), top_k));
    s.predicted_bias_conflicting = s.accuracy < 0.5;
    report.slices.push_back(std::move(s));
  }
  std::stable_sort(report.slices.begin(), report.slices.end(),
                   [](const ReportedSlice& a, const ReportedSlice& b) {
                     if (a.accuracy != b.accuracy) return a.accuracy < b.accuracy;
                     if (a.size != b.size) return a.size > b.size;
                     if (a.class_label != b.class_label) return a.class_label < b.class_label;
                     return a.slice_id < b.slice_id;
                   });
  return report;
}

nlohmann::json ToJson(const SliceReport& report) {
  nlohmann::json slices = nlohmann::json::array();
  for (size_t r = 0; r < report.slices.size(); ++r) {
    const auto& s = report.slices[r];
    slices.push_back({{"class", s.class_label},
                      {"slice_id", s.slice_id},
                      {"rank", r + 1},
                      {"accuracy", s.accuracy},
                      {"size", s.size},
                      {"predicted_bias_conflicting", s.predicted_bias_conflicting},
                      {"top_k", s.top_k},
                      {"members", s.members}});
  }
  return {{"top_k", report.top_k}, {"slices", slices}};
}

SliceReport SliceReportFromJson(const nlohmann::json& j) {
  SliceReport report;
  try {
    report.top_k = j.at("top_k").get<int>();
    for (const auto& s : j.at("slices")) {
      ReportedSlice r;
      r.class_label = s.at("class").get<int>();
      r.slice_id = s.at("slice_id").get<int>();
      r.accuracy = s.at("accuracy").get<double>();
      r.size = s.at("size").get<size_t>();
      r.predicted_bias_conflicting = s.at("predicted_bias_conflicting").get<bool>();
      r.top_k = s.at("top_k").get<std::vector<std::string>>();
      r.members = s.at("members").get<std::vector<std::string>>();
      report.slices.push_back(std::move(r));
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormat, std::string("slice report: ") + e.what());
  }
  return report;
}

std::string ToCsv(const SliceReport& report) {
  std::string out = "class,slice_id,rank,accuracy,size,member_ids_topk\n";
  char buf[64];
  for (size_t r = 0; r < report.slices.size(); ++r) {
    const auto& s = report.slices[r];
    std::snprintf(buf, sizeof(buf), "%.17g", s.accuracy);
    out += std::to_string(s.class_label) + ',' + std::to_string(s.slice_id) + ',' +
           std::to_string(r + 1) + ',' + buf + ',' + std::to_string(s.size) + ',';
    for (size_t i = 0; i < s.top_k.size(); ++i) {
      if (i) out += ';';
      out += s.top_k[i];
    }
    out += '\n';
  }
  return out;
}

double SliceSilhouette(const std::vector<SliceMixture>& mixtures, const Dataset& fit) {
  const auto views = ViewsByClass(fit);
  double total = 0.0;
  int classes = 0;
  for (const auto& m : mixtures) {
    const auto& v = views.at(static_cast<size_t>(m.class_label));
    if (v.rows.empty()) continue;
    ++classes;
    const ClassAssignment ca = AssignRows(m, v.logits, v.embeddings);
    const std::set<int> distinct(ca.slice_of_row.begin(), ca.slice_of_row.end());
    if (distinct.size() < 2) continue;
    total += 0.5 * (metrics::Silhouette(v.embeddings, ca.slice_of_row) +
                    metrics::Silhouette(v.logits, ca.slice_of_row));
  }
  if (classes == 0) Fail(ErrorCode::kInvalidArgument, "silhouette: fit split is empty");
  return total / classes;
}

TuneResult SilhouetteTune(const Dataset& fit, const std::vector<SliceHyper>& grid, int threads) {
  Require(!grid.empty(), "tuning grid must be nonempty");
  TuneResult out;
  out.scores.assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> errors(grid.size());
  ForEachIndex(grid.size(), threads, [&](size_t g) {
    try {
      const auto mixtures = FitPerClass(fit, grid[g], 1);
      out.scores[g] = SliceSilhouette(mixtures, fit);
    } catch (const Error& e) {
      errors[g] = e.what();
    }
  });
  std::optional<size_t> best;
  for (size_t g = 0; g < grid.size(); ++g) {
    if (!errors[g].empty()) {
      out.warnings.push_back("grid point " + std::to_string(g) + " skipped: " + errors[g]);
      continue;
    }
    if (!best || out.scores[g] > out.scores[*best]) best = g;
  }
  if (!best) Fail(ErrorCode::kFitFailed, "every tuning grid point failed to fit");
  out.chosen = *best;
  return out;
}

void SaveMixture(const SliceMixture& mixture, const fs::path& directory, const std::string& stem) {
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) Fail(ErrorCode::kIo, "cannot create " + directory.string());
  const auto k = static_cast<Eigen::Index>(mixture.components.size());
  const Eigen::Index p = mixture.logit_dim();
  const Eigen::Index d = mixture.embed_dim();
  MatrixD weights = mixture.weights.transpose();
  MatrixD mu_p(k, p), mu_c(k, d), sigma_c(k, d), sigma_p(k * p, p);
  std::vector<bool> active;
  for (Eigen::Index j = 0; j < k; ++j) {
    const auto& c = mixture.components[j];
    mu_p.row(j) = c.mu_p.transpose();
    mu_c.row(j) = c.mu_c.transpose();
    sigma_c.row(j) = c.sigma_c_diag.transpose();
    sigma_p.block(j * p, 0, p, p) = c.sigma_p;
    active.push_back(c.active);
  }
  const std::map<std::string, const MatrixD*> blocks = {
      {"weights", &weights}, {"mu_p", &mu_p}, {"sigma_p", &sigma_p},
      {"mu_c", &mu_c},       {"sigma_c", &sigma_c}};
  nlohmann::json header = {{"class_label", mixture.class_label},
                           {"hyper", ToJson(mixture.hyper)},
                           {"k_hat", k},
                           {"logit_dim", p},
                           {"embed_dim", d},
                           {"active", active},
                           {"fit_log", mixture.fit_log}};
  for (const auto& [name, m] : blocks) {
    const std::string file = stem + "." + name + ".fsmx";
    io::WriteMatrix(directory / file, m->cast<float>());
    header["blocks"][name] = file;
  }
  io::WriteJsonFile(directory / (stem + ".json"), header);
}

SliceMixture LoadMixture(const fs::path& directory, const std::string& stem) {
  const nlohmann::json header = io::ReadJsonFile(directory / (stem + ".json"));
  SliceMixture mix;
  try {
    mix.class_label = header.at("class_label").get<int>();
    mix.hyper = SliceHyperFromJson(header.at("hyper"));
    mix.fit_log = header.at("fit_log").get<std::vector<double>>();
    const auto k = header.at("k_hat").get<Eigen::Index>();
    const auto p = header.at("logit_dim").get<Eigen::Index>();
    const auto active = header.at("active").get<std::vector<bool>>();
    auto block = [&](const char* name) {
      return io::ReadMatrix(directory / header.at("blocks").at(name).get<std::string>())
          .cast<double>()
          .eval();
    };
    const MatrixD weights = block("weights");
    const MatrixD mu_p = block("mu_p");
    const MatrixD sigma_p = block("sigma_p");
    const MatrixD mu_c = block("mu_c");
    const MatrixD sigma_c = block("sigma_c");
    if (weights.cols() != k || mu_p.rows() != k || sigma_p.rows() != k * p ||
        static_cast<Eigen::Index>(active.size()) != k) {
      Fail(ErrorCode::kFormat, "mixture blocks disagree with header");
    }
    mix.weights = weights.row(0).transpose();
    mix.components.resize(static_cast<size_t>(k));
    for (Eigen::Index j = 0; j < k; ++j) {
      auto& c = mix.components[static_cast<size_t>(j)];
      c.mu_p = mu_p.row(j).transpose();
      c.sigma_p = sigma_p.block(j * p, 0, p, p);
      c.mu_c = mu_c.row(j).transpose();
      c.sigma_c_diag = sigma_c.row(j).transpose();
      c.active = active[static_cast<size_t>(j)];
    }
  } catch (const nlohmann::json::exception& e) {
    Fail(ErrorCode::kFormat, "mixture header: " + std::string(e.what()));
  }
  return mix;
}

}  // namespace facts::slicing
