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

#include <cmath>
#include <map>
#include <set>

#include <gtest/gtest.h>

#include "core/metrics.hpp"
#include "core/synthgen.hpp"
#include "support/desk_config.hpp"
#include "support/evaluation.hpp"
#include "support/expect_error.hpp"
#include "support/temp_dir.hpp"

namespace facts::amplify {
namespace {

Model ZeroLinear(int dim, int classes) {
  Model m;
  m.arch = Arch::kLinear;
  m.input_dim = dim;
  m.num_classes = classes;
  m.w1 = MatrixD::Zero(classes, dim);
  m.b1 = VectorD::Zero(classes);
  return m;
}

// Two Gaussian blobs per axis with a clear gap between the classes along x0.
Dataset Blobs(int n_per_class, double gap, uint64_t seed) {
  Rng rng(seed);
  Dataset ds;
  ds.features = MatrixF(2 * n_per_class, 2);
  for (int i = 0; i < 2 * n_per_class; ++i) {
    Sample s;
    s.id = "b" + std::to_string(i);
    s.label = i % 2;
    ds.samples.push_back(s);
    const double side = s.label == 0 ? -1.0 : 1.0;
    double x0 = side * (gap / 2 + std::abs(rng.Normal()));
    (*ds.features)(i, 0) = static_cast<float>(x0);
    (*ds.features)(i, 1) = static_cast<float>(3.0 * rng.Normal());
  }
  return ds;
}

// Exhaustive check: some threshold on feature 0 separates the labels.
bool SeparableOnFirstAxis(const Dataset& ds) {
  std::set<float> cuts;
  for (Eigen::Index i = 0; i < ds.features->rows(); ++i) cuts.insert((*ds.features)(i, 0));
  for (float t : cuts) {
    bool ok = true;
    for (size_t i = 0; i < ds.size() && ok; ++i) {
      ok = ((*ds.features)(static_cast<Eigen::Index>(i), 0) > t) == (ds.samples[i].label == 1);
    }
    if (ok) return true;
  }
  return false;
}

TEST(Likelihood, EqualLogitsAreUniform) {
  const Model m = ZeroLinear(3, 4);
  EXPECT_DOUBLE_EQ(Likelihood(m, VectorD::Ones(3), 2), 0.25);
}

TEST(Likelihood, ClosedFormTwoClasses) {
  Model m = ZeroLinear(1, 2);
  m.b1 << 2.0, 0.0;
  const double e2 = std::exp(2.0);
  EXPECT_NEAR(Likelihood(m, VectorD::Zero(1), 0), e2 / (e2 + 1.0), 1e-15);
  EXPECT_NEAR(Likelihood(m, VectorD::Zero(1), 0), 0.88080, 5e-6);
}

TEST(Likelihood, SumsToOne) {
  Rng rng(4);
  Model m = ZeroLinear(5, 6);
  for (Eigen::Index i = 0; i < m.w1.size(); ++i) m.w1.data()[i] = 3 * rng.Normal();
  for (int t = 0; t < 50; ++t) {
    VectorD x(5);
    for (int d = 0; d < 5; ++d) x(d) = 2 * rng.Normal();
    double total = 0.0;
    for (int y = 0; y < 6; ++y) total += Likelihood(m, x, y);
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Sigma, HandValues) {
  EXPECT_EQ(SigmaFromLikelihoods({0, 0, 1, 1}, (VectorD(4) << 0.3, 0.3, 0.7, 0.7).finished(), 2),
            0.0);
  EXPECT_DOUBLE_EQ(SigmaFromLikelihoods({0, 0}, (VectorD(2) << 1.0, 0.0).finished(), 1), 0.25);
  // Per-class variances 0.25 and 0.09.
  EXPECT_DOUBLE_EQ(
      SigmaFromLikelihoods({0, 0, 1, 1}, (VectorD(4) << 1.0, 0.0, 0.2, 0.8).finished(), 2), 0.17);
  EXPECT_FACTS_ERROR(SigmaFromLikelihoods({0, 0}, (VectorD(2) << 1.0, 0.0).finished(), 2),
                     ErrorCode::kEmptyClass, "class 1");
}

TEST(ClassBalancedSampler, ClassesEquallyLikely) {
  std::vector<std::vector<size_t>> members(4);
  size_t next = 0;
  for (size_t c : {0, 1, 3}) {
    const size_t n = c == 0 ? 500 : (c == 1 ? 50 : 5);
    for (size_t i = 0; i < n; ++i) members[c].push_back(next++);
  }
  std::vector<int> class_of(next);
  for (size_t c = 0; c < 4; ++c) {
    for (size_t i : members[c]) class_of[i] = static_cast<int>(c);
  }
  ClassBalancedSampler sampler(members, 77);
  EXPECT_EQ(sampler.present_classes(), (std::vector<int>{0, 1, 3}));
  std::vector<double> counts(4, 0.0);
  double total = 0.0;
  for (int b = 0; b < 10000; ++b) {
    for (size_t i : sampler.NextBatch(64)) {
      ++counts[class_of[i]];
      ++total;
    }
  }
  EXPECT_EQ(counts[2], 0.0);
  for (int c : {0, 1, 3}) EXPECT_NEAR(counts[c] / total, 1.0 / 3.0, 0.02) << "class " << c;
}

TEST(ScheduledLambda, Endpoints) {
  EXPECT_EQ(ScheduledLambda(0, 30, 2.0, 1e-3), 2.0);
  EXPECT_DOUBLE_EQ(ScheduledLambda(29, 30, 2.0, 1e-3), 1e-3);
  EXPECT_LT(ScheduledLambda(15, 30, 2.0, 1e-3), ScheduledLambda(14, 30, 2.0, 1e-3));
}

TEST(TrainWdSchedule, RejectsNonDecreasingSchedule) {
  const Dataset ds = Blobs(20, 2.0, 1);
  EXPECT_FACTS_ERROR(TrainWdSchedule(ds, TrainHyper{}, 1e-3, 2.0), ErrorCode::kInvalidArgument,
                     "wd_from > wd_to");
  EXPECT_FACTS_ERROR(TrainWdSchedule(ds, TrainHyper{}, 1.0, 1.0), ErrorCode::kInvalidArgument,
                     "wd_from > wd_to");
}

TEST(TrainRegularized, SeparableBlobsReachFullAccuracy) {
  const Dataset ds = Blobs(100, 2.0, 3);
  ASSERT_TRUE(SeparableOnFirstAxis(ds));
  TrainHyper h = testing::DeskHyper(5);
  h.lambda = 1e-4;
  h.max_epochs = 30;
  const ModelSnapshot snap = TrainRegularized(ds, h);
  EXPECT_EQ(snap.train_accuracy, 1.0);
  EXPECT_EQ(Accuracy(snap.model, ds), 1.0);
  EXPECT_TRUE(snap.model.w1.allFinite());
}

TEST(TrainRegularized, HeavyDecayGivesNearUniformLikelihoods) {
  const Dataset ds = Blobs(100, 2.0, 3);
  TrainHyper h = testing::DeskHyper(5);
  h.learning_rate = 0.001;
  h.lambda = 200.0;
  h.max_epochs = 10;
  const ModelSnapshot snap = TrainRegularized(ds, h);
  const VectorD lik = LabelLikelihoods(snap.model, ds);
  for (Eigen::Index i = 0; i < lik.size(); ++i) EXPECT_NEAR(lik[i], 0.5, 0.02);
  EXPECT_LT(snap.model.PenalizedNorm(), 0.02);
}

TEST(TrainRegularized, KeepsEarliestBestEpoch) {
  synth::SynthConfig c = testing::DeskSynth(2);
  c.class_sizes = {800, 600, 480, 400, 320, 250};
  const Dataset train = synth::Generate(c).SplitView(Split::kTrain);
  TrainHyper h = testing::DeskHyper(9);
  h.lambda = 0.1;
  h.max_epochs = 8;
  const ModelSnapshot full = TrainRegularized(train, h);
  EXPECT_GE(full.train_accuracy, 0.0);
  EXPECT_LE(full.train_accuracy, 1.0);
  EXPECT_EQ(Accuracy(full.model, train), full.train_accuracy);
  // Shorter runs replay the same prefix of epochs. The kept epoch is the
  // first one at which the best accuracy so far reaches the final value.
  int first = -1;
  for (int e = 1; e <= h.max_epochs; ++e) {
    TrainHyper shorter = h;
    shorter.max_epochs = e;
    const ModelSnapshot s = TrainRegularized(train, shorter);
    EXPECT_LE(s.train_accuracy, full.train_accuracy);
    if (first < 0 && s.train_accuracy == full.train_accuracy) first = e;
  }
  EXPECT_EQ(full.epoch, first);
}

TEST(TrainRegularized, Deterministic) {
  const Dataset ds = Blobs(60, 1.0, 8);
  TrainHyper h = testing::DeskHyper(11);
  h.lambda = 0.01;
  h.max_epochs = 5;
  const ModelSnapshot a = TrainRegularized(ds, h);
  const ModelSnapshot b = TrainRegularized(ds, h);
  EXPECT_EQ(a.model.w1, b.model.w1);
  EXPECT_EQ(a.model.b1, b.model.b1);
  h.seed = 12;
  EXPECT_NE(TrainRegularized(ds, h).model.w1, a.model.w1);
}

TEST(TrainRegularized, MlpTrains) {
  const Dataset ds = Blobs(80, 2.0, 6);
  TrainHyper h = testing::DeskHyper(2);
  ParseArch("mlp:8", h);
  h.lambda = 1e-4;
  h.max_epochs = 20;
  const ModelSnapshot snap = TrainRegularized(ds, h);
  EXPECT_EQ(snap.model.arch, Arch::kMlp);
  EXPECT_EQ(snap.model.w1.rows(), 8);
  EXPECT_GE(snap.train_accuracy, 0.99);
}

TEST(ParseArch, Forms) {
  TrainHyper h;
  ParseArch("mlp:32", h);
  EXPECT_EQ(ArchString(h), "mlp:32");
  ParseArch("linear", h);
  EXPECT_EQ(ArchString(h), "linear");
  EXPECT_FACTS_ERROR(ParseArch("cnn", h), ErrorCode::kInvalidArgument, "cnn");
  EXPECT_FACTS_ERROR(ParseArch("mlp:0", h), ErrorCode::kInvalidArgument, "width");
}

TEST(RankBiasConflicting, TiesFallBackToIdOrder) {
  Dataset ds;
  ds.features = MatrixF::Zero(4, 2);
  for (const char* id : {"d", "b", "a", "c"}) {
    Sample s;
    s.id = id;
    ds.samples.push_back(s);
  }
  ds.samples[3].label = 1;
  const auto ranked = RankBiasConflicting(ZeroLinear(2, 2), ds, 0);
  EXPECT_EQ(ranked, (std::vector<std::string>{"a", "b", "d"}));
}

TEST(RankBiasConflicting, LowLikelihoodMinorityFirst) {
  // The model predicts the attribute, so conflicting rows get likelihood
  // near zero for their own label.
  Dataset ds;
  ds.mapping = {0, 1};
  ds.features = MatrixF(20, 2);
  for (int i = 0; i < 20; ++i) {
    Sample s;
    s.id = "s" + std::to_string(100 + i);
    s.label = 0;
    s.attribute = i % 5 == 0 ? 1 : 0;
    s.bias_conflicting = *s.attribute == 1;
    ds.samples.push_back(s);
    (*ds.features)(i, 0) = *s.attribute == 0 ? 1.0f : 0.0f;
    (*ds.features)(i, 1) = *s.attribute == 1 ? 1.0f : 0.0f;
  }
  Model m = ZeroLinear(2, 2);
  m.w1 = 6.0 * MatrixD::Identity(2, 2);
  const auto ranked = RankBiasConflicting(m, ds, 0);
  ASSERT_EQ(ranked.size(), 20u);
  for (int r = 0; r < 4; ++r) {
    const int row = std::stoi(ranked[r].substr(1)) - 100;
    EXPECT_TRUE(*ds.samples[row].bias_conflicting) << ranked[r];
  }
  EXPECT_EQ(GtAccGap(m, ds), 1.0);
  EXPECT_FACTS_ERROR(RankBiasConflicting(m, ds, 1), ErrorCode::kEmptyClass, "class 1");
}

TEST(SweepLambda, SingleLambda) {
  const Dataset ds = Blobs(40, 2.0, 2);
  TrainHyper h = testing::DeskHyper(1);
  h.max_epochs = 3;
  const AmplifiedModel out = SweepLambda(ds, h, {0.5});
  EXPECT_EQ(out.lambda_star, 0.5);
  ASSERT_EQ(out.sweep_log.size(), 1u);
  EXPECT_EQ(out.snapshot.lambda, 0.5);
}

TEST(SweepLambda, DefaultGridOnSynthetic) {
  const Dataset train = synth::Generate(testing::DeskSynth(3)).SplitView(Split::kTrain);
  const TrainHyper h = testing::DeskHyper(3);
  const AmplifiedModel one = SweepLambda(train, h, kDefaultLambdaGrid, 1);
  ASSERT_EQ(one.sweep_log.size(), 5u);
  double best = -1.0;
  for (const auto& e : one.sweep_log) {
    EXPECT_TRUE(std::isfinite(e.sigma_amco));
    best = std::max(best, e.sigma_amco);
  }
  for (const auto& e : one.sweep_log) {
    if (e.lambda == one.lambda_star) {
      EXPECT_EQ(e.sigma_amco, best);
    }
  }
  EXPECT_EQ(one.snapshot.lambda, one.lambda_star);
  ASSERT_TRUE(one.snapshot.sigma_amco.has_value());
  EXPECT_DOUBLE_EQ(*one.snapshot.sigma_amco, SigmaAmco(one.snapshot.model, train));

  // Thread count does not change the result.
  const AmplifiedModel three = SweepLambda(train, h, kDefaultLambdaGrid, 3);
  EXPECT_EQ(three.lambda_star, one.lambda_star);
  EXPECT_EQ(three.snapshot.model.w1, one.snapshot.model.w1);

  // The amplified model separates aligned from conflicting rows far more
  // than a weakly regularized one.
  TrainHyper erm = h;
  erm.lambda = testing::kErmLambda;
  const ModelSnapshot standard = TrainRegularized(train, erm);
  EXPECT_GT(GtAccGap(one.snapshot.model, train), GtAccGap(standard.model, train));
  EXPECT_LT(std::abs(GtAccGap(standard.model, train)), 0.05);
}

TEST(TrainWdSchedule, ComparableToSweep) {
  const Dataset train = synth::Generate(testing::DeskSynth(4)).SplitView(Split::kTrain);
  const TrainHyper h = testing::DeskHyper(4);
  const AmplifiedModel sweep = SweepLambda(train, h, kDefaultLambdaGrid);
  const ModelSnapshot scheduled = TrainWdSchedule(train, h, 2.0, 1e-3);
  ASSERT_TRUE(scheduled.sigma_amco.has_value());
  EXPECT_NEAR(testing::LikelihoodAvgAp(scheduled.model, train),
              testing::LikelihoodAvgAp(sweep.snapshot.model, train), 0.05);
}

TEST(SaveAmplified, RoundTrip) {
  testing::TempDir dir("amplify");
  const Dataset ds = Blobs(40, 2.0, 2);
  TrainHyper h = testing::DeskHyper(1);
  h.max_epochs = 3;
  ParseArch("mlp:4", h);
  const AmplifiedModel out = SweepLambda(ds, h, {0.01, 0.1});
  SaveAmplified(out, h, dir.path());
  const AmplifiedModel back = LoadAmplified(dir.path());
  EXPECT_EQ(back.lambda_star, out.lambda_star);
  EXPECT_EQ(back.snapshot.model.w1, out.snapshot.model.w1);
  EXPECT_EQ(back.snapshot.model.b2, out.snapshot.model.b2);
  EXPECT_EQ(back.snapshot.epoch, out.snapshot.epoch);
  ASSERT_EQ(back.sweep_log.size(), 2u);
  EXPECT_EQ(back.sweep_log[1].sigma_amco, out.sweep_log[1].sigma_amco);
  EXPECT_EQ(LabelLikelihoods(back.snapshot.model, ds), LabelLikelihoods(out.snapshot.model, ds));
}

TEST(TrainRegularized, MissingFeatures) {
  Dataset ds = Blobs(5, 1.0, 1);
  ds.features.reset();
  EXPECT_FACTS_ERROR(TrainRegularized(ds, TrainHyper{}), ErrorCode::kMissingBlock, "features");
}

}  // namespace
}  // namespace facts::amplify
