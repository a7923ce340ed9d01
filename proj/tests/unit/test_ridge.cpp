/*
 * Copyright (c) 2026, The vencode Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <algorithm>
#include <cmath>
#include <cstring>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "vencode/error.hpp"
#include "vencode/ridge.hpp"

using namespace vencode;
using Eigen::MatrixXd;

namespace {

double max_abs_diff(const MatrixXd& a, const MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

MatrixXd centered(const MatrixXd& m) { return m.rowwise() - m.colwise().mean(); }

bool bit_equal(const MatrixXd& a, const MatrixXd& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), static_cast<std::size_t>(a.size()) * sizeof(double)) == 0;
}

}  // namespace

TEST(ClosedForm, IdentityDesignReproducesTargets) {
  const MatrixXd I = MatrixXd::Identity(3, 3);
  const auto model = ridge::fit_closed_form(I, I, 0.0);
  EXPECT_LT(max_abs_diff(ridge::predict(model, I), I), 1e-12);
  EXPECT_EQ(model.solver, ridge::Solver::closed_form);
}

TEST(ClosedForm, MatchesNormalEquationsOnDefaultGrid) {
  gen::Source src(20);
  const MatrixXd E = src.matrix(20, 8), Y = src.matrix(20, 5);
  const MatrixXd E_new = src.matrix(7, 8);
  for (double lambda : ridge::kDefaultLambdaGrid) {
    const auto model = ridge::fit_closed_form(E, Y, lambda);
    const MatrixXd W = oracle::ridge_normal_equations(E, Y, lambda);
    EXPECT_LT(max_abs_diff(model.weights, W), 1e-8) << "lambda " << lambda;
    EXPECT_LT(max_abs_diff(ridge::predict(model, E_new), oracle::ridge_predict(E, Y, W, E_new)), 1e-8);
  }
}

TEST(ClosedForm, NormalEquationResidualBound) {
  gen::Source src(21);
  for (int trial = 0; trial < 30; ++trial) {
    const int n = src.integer(2, 40), d = src.integer(1, 12), v = src.integer(1, 5);
    const MatrixXd E = src.matrix(n, d), Y = src.matrix(n, v);
    const double lambda = src.coin() ? 0.0 : std::pow(10.0, src.uniform(-4, 1));
    const auto model = ridge::fit_closed_form(E, Y, lambda);
    const MatrixXd Ec = centered(E), Yc = centered(Y);
    const MatrixXd rhs = Ec.transpose() * Yc;
    MatrixXd lhs = (Ec.transpose() * Ec + lambda * MatrixXd::Identity(d, d)) * model.weights;
    if (lambda == 0.0 && n - 1 < d) continue;  // singular: checked by the pseudo-inverse test
    EXPECT_LE((lhs - rhs).norm(), 1e-8 * std::max(rhs.norm(), 1e-300)) << "trial " << trial;
  }
}

TEST(ClosedForm, SingularLambdaZeroGivesMinimumNorm) {
  gen::Source src(22);
  const MatrixXd E = src.matrix(5, 9), Y = src.matrix(5, 2);
  const auto model = ridge::fit_closed_form(E, Y, 0.0);
  const MatrixXd Ec = centered(E), Yc = centered(Y);
  const MatrixXd W = Ec.completeOrthogonalDecomposition().pseudoInverse() * Yc;
  EXPECT_LT(max_abs_diff(model.weights, W), 1e-8);
  EXPECT_LT(max_abs_diff(Ec * model.weights, Yc), 1e-8);
}

TEST(ClosedForm, HugeLambdaShrinksToZero) {
  gen::Source src(20);
  const MatrixXd E = src.matrix(20, 8), Y = src.matrix(20, 5);
  EXPECT_LT(ridge::fit_closed_form(E, Y, 1e12).weights.norm(), 1e-6);
}

TEST(ClosedForm, WeightNormNonIncreasingInLambda) {
  gen::Source src(23);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd E = src.matrix(15, 6), Y = src.matrix(15, 3);
    ridge::SpectralRidge spectral(E, Y);
    std::vector<double> grid(ridge::kDefaultLambdaGrid);
    grid.push_back(10.0);
    grid.push_back(1000.0);
    std::sort(grid.begin(), grid.end());
    double prev = std::numeric_limits<double>::infinity();
    for (double l : grid) {
      const double norm = spectral.solve(l).norm();
      EXPECT_LE(norm, prev * (1 + 1e-12));
      prev = norm;
    }
  }
}

TEST(ClosedForm, RowPermutationInvariant) {
  gen::Source src(24);
  const MatrixXd E = src.matrix(25, 7), Y = src.matrix(25, 4);
  std::vector<int> perm(25);
  for (int i = 0; i < 25; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), src.engine());
  MatrixXd Ep(25, 7), Yp(25, 4);
  for (int i = 0; i < 25; ++i) {
    Ep.row(i) = E.row(perm[i]);
    Yp.row(i) = Y.row(perm[i]);
  }
  for (double l : {0.0, 0.01, 1.0}) {
    EXPECT_LT(max_abs_diff(ridge::fit_closed_form(E, Y, l).weights, ridge::fit_closed_form(Ep, Yp, l).weights),
              1e-10);
  }
}

TEST(ClosedForm, Errors) {
  MatrixXd E = MatrixXd::Ones(3, 2), Y = MatrixXd::Ones(3, 1);
  Y(1, 0) = std::nan("");
  EXPECT_THROW(ridge::fit_closed_form(E, Y, 0.1), Error);
  EXPECT_THROW(ridge::fit_closed_form(MatrixXd::Ones(1, 2), MatrixXd::Ones(1, 1), 0.1), Error);
  EXPECT_THROW(ridge::fit_closed_form(E, MatrixXd::Ones(3, 1), -1.0), Error);
}

TEST(Predict, ZeroRowsAndDimensionMismatch) {
  gen::Source src(25);
  const auto model = ridge::fit_closed_form(src.matrix(10, 3), src.matrix(10, 2), 0.1);
  const MatrixXd out = ridge::predict(model, MatrixXd(0, 3));
  EXPECT_EQ(out.rows(), 0);
  EXPECT_EQ(out.cols(), 2);
  EXPECT_THROW(ridge::predict(model, MatrixXd::Ones(2, 4)), Error);
}

TEST(Predict, BiasMatchesCenteredForm) {
  gen::Source src(26);
  const MatrixXd E = src.matrix(12, 4), Y = src.matrix(12, 3);
  const auto m = ridge::fit_closed_form(E, Y, 0.01);
  const MatrixXd via_bias = (E * m.weights).rowwise() + m.bias.transpose();
  EXPECT_LT(max_abs_diff(via_bias, ridge::predict(m, E)), 1e-12);
}

TEST(CombinedLoss, GradientMatchesFiniteDifferences) {
  gen::Source src(30);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd E = centered(src.matrix(5, 3));
    MatrixXd Y = src.matrix(5, 2);
    const double alpha = trial == 0 ? 0.0 : (trial == 1 ? 1.0 : src.uniform(0, 1));
    const double lambda = src.uniform(0, 0.5);
    const ridge::CombinedLoss loss(E, Y, Y.array().isNaN(), lambda, alpha);
    const MatrixXd W = src.matrix(3, 2);
    MatrixXd grad;
    const double value = loss.evaluate(W, grad);
    EXPECT_NEAR(value, oracle::combined_loss(E, Y, W, lambda, alpha, 1e-12), 1e-10);
    const MatrixXd fd = oracle::finite_difference([&](const MatrixXd& w) { return loss.value(w); }, W, 1e-5);
    const double rel = (grad - fd).cwiseAbs().maxCoeff() / std::max(fd.cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT(rel, 1e-4) << "trial " << trial;
  }
}

TEST(CombinedLoss, GradientWithMissingEntries) {
  gen::Source src(31);
  const MatrixXd E = centered(src.matrix(8, 3));
  MatrixXd Y = src.matrix(8, 2);
  Y(1, 0) = Y(4, 1) = Y(6, 1) = std::nan("");
  const ridge::CombinedLoss loss(E, Y, Y.array().isNaN(), 0.05, 0.5);
  const MatrixXd W = src.matrix(3, 2);
  MatrixXd grad;
  EXPECT_NEAR(loss.evaluate(W, grad), oracle::combined_loss(E, Y, W, 0.05, 0.5, 1e-12), 1e-10);
  const MatrixXd fd = oracle::finite_difference([&](const MatrixXd& w) { return loss.value(w); }, W, 1e-5);
  EXPECT_LT((grad - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff(), 1e-4);
}

TEST(GradientFit, AlphaZeroAgreesWithClosedForm) {
  gen::Source src(40);
  const MatrixXd E = src.matrix(200, 10);
  const MatrixXd W_true = src.matrix(10, 4);
  const MatrixXd Y = E * W_true + 0.5 * src.matrix(200, 4);
  ridge::LossConfig cfg;
  cfg.alpha = 0.0;
  const auto g = ridge::fit_gradient(E, Y, 0.001, cfg);
  const auto c = ridge::fit_closed_form(E, Y, 0.001);
  const MatrixXd E_test = src.matrix(50, 10);
  const MatrixXd pg = ridge::predict(g, E_test), pc = ridge::predict(c, E_test);
  for (Eigen::Index j = 0; j < 4; ++j) {
    EXPECT_GT(oracle::pearson(oracle::column(pg, j), oracle::column(pc, j)), 0.999);
  }
  EXPECT_EQ(g.solver, ridge::Solver::gradient);
}

TEST(GradientFit, MaskedEntriesAreInertBitForBit) {
  gen::Source src(41);
  const MatrixXd E = src.matrix(60, 5);
  MatrixXd Y = E * src.matrix(5, 3) + src.matrix(60, 3);
  io::MissingMask mask = io::MissingMask::Constant(60, 3, false);
  for (int i = 0; i < 60; i += 10) mask(i, 1) = true;
  ridge::LossConfig cfg;
  cfg.max_iterations = 300;
  const auto a = ridge::fit_gradient(E, Y, mask, 0.01, cfg);
  MatrixXd Y2 = Y;
  for (int i = 0; i < 60; i += 10) Y2(i, 1) = 1e6 * (i + 1);
  const auto b = ridge::fit_gradient(E, Y2, mask, 0.01, cfg);
  EXPECT_TRUE(bit_equal(a.weights, b.weights));
  EXPECT_TRUE(bit_equal(a.bias, b.bias));

  MatrixXd Y3 = Y;
  for (int i = 0; i < 60; i += 10) Y3(i, 1) = std::nan("");
  const auto c = ridge::fit_gradient(E, Y3, 0.01, cfg);
  EXPECT_TRUE(bit_equal(a.weights, c.weights));
}

TEST(GradientFit, TooFewObservedNamesVoxel) {
  gen::Source src(42);
  const MatrixXd E = src.matrix(10, 2);
  MatrixXd Y = src.matrix(10, 3);
  for (int i = 0; i < 8; ++i) Y(i, 2) = std::nan("");
  try {
    ridge::fit_gradient(E, Y, 0.1, {});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), "insufficient_data");
    EXPECT_NE(std::string(e.what()).find("2"), std::string::npos);
  }
}

TEST(GradientFit, ConstantVoxelReportedDegenerate) {
  gen::Source src(43);
  const MatrixXd E = src.matrix(30, 3);
  MatrixXd Y = src.matrix(30, 2);
  Y.col(1).setConstant(2.0);
  const auto m = ridge::fit_gradient(E, Y, 0.01, {});
  EXPECT_EQ(m.diagnostics.degenerate_voxels, (std::vector<Eigen::Index>{1}));
  EXPECT_TRUE(m.weights.allFinite());
}

TEST(LossConfig, Validation) {
  ridge::LossConfig c;
  c.tolerance = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.alpha = 1.5;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.max_iterations = 0;
  EXPECT_THROW(c.validate(), Error);
}

TEST(MaskedMeans, IgnoreMaskedValues) {
  MatrixXd Y(3, 2);
  Y << 1, 5, 2, 1e9, 3, 7;
  io::MissingMask mask = io::MissingMask::Constant(3, 2, false);
  mask(1, 1) = true;
  const auto mu = ridge::masked_column_means(Y, mask);
  EXPECT_DOUBLE_EQ(mu[0], 2.0);
  EXPECT_DOUBLE_EQ(mu[1], 6.0);
}

TEST(CvFolds, PartitionRowsAndKOne) {
  for (int k : {2, 3, 5, 10}) {
    const auto folds = ridge::cv_folds(53, k, 9);
    ASSERT_EQ(folds.size(), static_cast<std::size_t>(k));
    std::multiset<Eigen::Index> all;
    for (const auto& f : folds) all.insert(f.begin(), f.end());
    EXPECT_EQ(all.size(), 53u);
    EXPECT_EQ(std::set<Eigen::Index>(all.begin(), all.end()).size(), 53u);
  }
  const auto one = ridge::cv_folds(50, 1, 9);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0].size(), 10u);
  EXPECT_EQ(ridge::cv_folds(50, 5, 3), ridge::cv_folds(50, 5, 3));
}

TEST(SelectLambda, FullTableOnDefaultGridWithTenFolds) {
  gen::Source src(50);
  const MatrixXd E = src.matrix(100, 6);
  const MatrixXd Y = E * src.matrix(6, 3) + src.matrix(100, 3);
  const auto sel = ridge::select_lambda(E, Y, ridge::kDefaultLambdaGrid, 10, 1);
  ASSERT_EQ(sel.cv_table.size(), 50u);
  ASSERT_EQ(sel.mean_by_lambda.size(), 5u);
  const auto best = std::max_element(sel.mean_by_lambda.begin(), sel.mean_by_lambda.end());
  EXPECT_EQ(sel.best_lambda, ridge::kDefaultLambdaGrid[static_cast<std::size_t>(best - sel.mean_by_lambda.begin())]);
  for (std::size_t g = 0; g < 5; ++g) {
    double sum = 0;
    for (int f = 0; f < 10; ++f) {
      const auto& e = sel.cv_table[g * 10 + static_cast<std::size_t>(f)];
      EXPECT_EQ(e.lambda, ridge::kDefaultLambdaGrid[g]);
      EXPECT_EQ(e.fold, f);
      sum += e.mean_r;
    }
    EXPECT_NEAR(sel.mean_by_lambda[g], sum / 10, 1e-12);
  }
}

TEST(SelectLambda, FoldScoresMatchIndependentFits) {
  gen::Source src(51);
  const MatrixXd E = src.matrix(40, 4);
  const MatrixXd Y = E * src.matrix(4, 2) + src.matrix(40, 2);
  const std::vector<double> grid = {0.0, 0.5};
  const auto sel = ridge::select_lambda(E, Y, grid, 4, 77);
  const auto folds = ridge::cv_folds(40, 4, 77);
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<Eigen::Index> train;
    for (Eigen::Index i = 0; i < 40; ++i)
      if (std::find(folds[f].begin(), folds[f].end(), i) == folds[f].end()) train.push_back(i);
    MatrixXd Et(train.size(), 4), Yt(train.size(), 2), Ev(folds[f].size(), 4), Yv(folds[f].size(), 2);
    for (std::size_t i = 0; i < train.size(); ++i) {
      Et.row(i) = E.row(train[i]);
      Yt.row(i) = Y.row(train[i]);
    }
    for (std::size_t i = 0; i < folds[f].size(); ++i) {
      Ev.row(i) = E.row(folds[f][i]);
      Yv.row(i) = Y.row(folds[f][i]);
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
      const MatrixXd W = oracle::ridge_normal_equations(Et, Yt, grid[g]);
      const MatrixXd P = oracle::ridge_predict(Et, Yt, W, Ev);
      const double r = (oracle::pearson(oracle::column(P, 0), oracle::column(Yv, 0)) +
                        oracle::pearson(oracle::column(P, 1), oracle::column(Yv, 1))) /
                       2;
      EXPECT_NEAR(sel.cv_table[g * folds.size() + f].mean_r, r, 1e-9);
    }
  }
}

TEST(SelectLambda, SingleElementGrid) {
  gen::Source src(52);
  const MatrixXd E = src.matrix(30, 3), Y = src.matrix(30, 2);
  const std::vector<double> grid = {0.01};
  const auto sel = ridge::select_lambda(E, Y, grid, 3, 0);
  EXPECT_EQ(sel.best_lambda, 0.01);
  EXPECT_EQ(sel.cv_table.size(), 3u);
}

TEST(SelectLambda, TiesGoToLargerLambda) {
  // A constant-gain design: every lambda gives a rescaled prediction with
  // the same Pearson r, so all grid points tie.
  gen::Source src(53);
  MatrixXd E(30, 1);
  MatrixXd Y(30, 1);
  for (int i = 0; i < 30; ++i) {
    E(i, 0) = src.normal();
    Y(i, 0) = E(i, 0) + src.normal();
  }
  const std::vector<double> grid = {0.0, 0.1, 0.01};
  const auto sel = ridge::select_lambda(E, Y, grid, 3, 1);
  const bool all_tied = sel.mean_by_lambda[0] == sel.mean_by_lambda[1] && sel.mean_by_lambda[1] == sel.mean_by_lambda[2];
  if (all_tied) {
    EXPECT_EQ(sel.best_lambda, 0.1);
  }
  // Single-feature ridge predictions differ only by a positive scale per fold.
  for (std::size_t f = 0; f < 3; ++f) EXPECT_NEAR(sel.cv_table[f].mean_r, sel.cv_table[3 + f].mean_r, 1e-12);
}

TEST(SelectLambda, Errors) {
  gen::Source src(54);
  const MatrixXd E = src.matrix(6, 2), Y = src.matrix(6, 1);
  EXPECT_THROW(ridge::select_lambda(E, Y, std::vector<double>{}, 2, 0), Error);
  EXPECT_THROW(ridge::select_lambda(E, Y, ridge::kDefaultLambdaGrid, 5, 0), Error);  // 1 row per fold
  EXPECT_NO_THROW(ridge::select_lambda(E, Y, ridge::kDefaultLambdaGrid, 3, 0));
}

TEST(SelectLambda, GradientSolverPath) {
  gen::Source src(55);
  const MatrixXd E = src.matrix(40, 3);
  const MatrixXd Y = E * src.matrix(3, 2) + src.matrix(40, 2);
  ridge::SelectOptions opt;
  opt.solver = ridge::Solver::gradient;
  opt.loss.max_iterations = 200;
  const auto sel = ridge::select_lambda(E, Y, ridge::kDefaultLambdaGrid, 2, 4, opt);
  EXPECT_EQ(sel.cv_table.size(), 10u);
}

TEST(Solver, Strings) {
  EXPECT_EQ(ridge::parse_solver(ridge::to_string(ridge::Solver::gradient)), ridge::Solver::gradient);
  EXPECT_THROW(ridge::parse_solver("sgd"), Error);
}
