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

#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vencode/tensorio.hpp"

namespace vencode::ridge {

enum class Solver { closed_form, gradient };

std::string_view to_string(Solver solver);
Solver parse_solver(std::string_view s);

struct FitDiagnostics {
  double final_loss = 0.0;
  int iterations = 0;
  bool converged = true;
  /// Voxels left out of the correlation term (constant observed targets).
  std::vector<Eigen::Index> degenerate_voxels;
};

/**
 * Linear map from embeddings to responses.
 *
 * Prediction is (E - feature_means) * weights + target_means; `bias` holds
 * the equivalent intercept target_means - feature_means^T * weights.
 */
struct RidgeModel {
  Eigen::MatrixXd weights;  // d x v
  Eigen::VectorXd bias;     // v
  double lambda = 0.0;
  Eigen::VectorXd feature_means;  // d
  Eigen::VectorXd target_means;   // v
  Solver solver = Solver::closed_form;
  FitDiagnostics diagnostics;
};

/// Settings for the masked MSE + correlation objective.
///
/// `step_size` is the initial step of the backtracking line search; the
/// step adapts (halves on insufficient decrease, doubles after success).
struct LossConfig {
  double alpha = 0.5;
  int max_iterations = 5000;
  double step_size = 1.0;
  double tolerance = 1e-10;

  void validate() const;
};

/// Eigendecomposition of the centered Gram matrix, reusable across lambdas.
/// Eigenvalues below 1e-10 * max are treated as zero when lambda == 0,
/// which yields the minimum-norm least-squares solution.
class SpectralRidge {
 public:
  SpectralRidge(const Eigen::MatrixXd& E, const Eigen::MatrixXd& Y);

  Eigen::MatrixXd solve(double lambda) const;
  RidgeModel model(double lambda) const;

  const Eigen::VectorXd& feature_means() const noexcept { return feature_means_; }
  const Eigen::VectorXd& target_means() const noexcept { return target_means_; }
  const Eigen::VectorXd& eigenvalues() const noexcept { return eigenvalues_; }

 private:
  Eigen::VectorXd feature_means_;
  Eigen::VectorXd target_means_;
  Eigen::VectorXd eigenvalues_;
  Eigen::MatrixXd eigenvectors_;
  Eigen::MatrixXd projected_cross_;  // V^T Ec^T Yc
  double centered_target_ss_ = 0.0;

  Eigen::VectorXd spectral_inverse(double lambda) const;
};

/// Minimizes ||Yc - Ec W||_F^2 + lambda ||W||_F^2 on training-centered data.
RidgeModel fit_closed_form(const Eigen::MatrixXd& E, const Eigen::MatrixXd& Y, double lambda);

/**
 * The objective minimized by fit_gradient, on centered data:
 *
 *   L(W) = (1 - alpha) * MSE_obs + alpha * (1 - mean_v r_v) + lambda * ||W||_F^2
 *
 * MSE_obs averages squared residuals over observed entries; r_v is the
 * Pearson r between Ec W and Yc over voxel v's observed rows, averaged over
 * voxels whose observed targets are not constant. Entries under `missing`
 * are never read.
 */
class CombinedLoss {
 public:
  CombinedLoss(Eigen::MatrixXd centered_features, const Eigen::MatrixXd& centered_targets,
               const io::MissingMask& missing, double lambda, double alpha);

  double value(const Eigen::MatrixXd& W) const;
  /// Loss and dL/dW.
  double evaluate(const Eigen::MatrixXd& W, Eigen::MatrixXd& gradient) const;

  const std::vector<Eigen::Index>& degenerate_voxels() const noexcept { return degenerate_; }

 private:
  double evaluate_impl(const Eigen::MatrixXd& W, Eigen::MatrixXd* gradient) const;

  Eigen::MatrixXd features_;
  Eigen::MatrixXd targets_;   // zero where missing
  Eigen::MatrixXd observed_;  // 1 observed, 0 missing
  Eigen::VectorXd observed_count_;
  Eigen::VectorXd target_column_means_;  // over observed rows of targets_
  std::vector<char> scored_;             // voxel enters the correlation term
  std::vector<Eigen::Index> degenerate_;
  double total_observed_ = 0.0;
  double lambda_;
  double alpha_;
};

/// Full-batch gradient descent on CombinedLoss from W = 0. Missing
/// responses are the NaN entries of Y.
RidgeModel fit_gradient(const Eigen::MatrixXd& E, const Eigen::MatrixXd& Y, double lambda, const LossConfig& cfg);

/// Same, with an explicit missing mask; values of Y under the mask are
/// never read.
RidgeModel fit_gradient(const Eigen::MatrixXd& E, const Eigen::MatrixXd& Y, const io::MissingMask& missing,
                        double lambda, const LossConfig& cfg);

/// Masked column means (mean over rows not flagged missing).
Eigen::VectorXd masked_column_means(const Eigen::MatrixXd& Y, const io::MissingMask& missing);

Eigen::MatrixXd predict(const RidgeModel& model, const Eigen::MatrixXd& E);

struct CvEntry {
  double lambda = 0.0;
  int fold = 0;
  double mean_r = 0.0;
};

struct LambdaSelection {
  double best_lambda = 0.0;
  std::vector<CvEntry> cv_table;      // grid-major, fold-minor
  std::vector<double> mean_by_lambda;  // aligned with the grid
};

struct SelectOptions {
  Solver solver = Solver::closed_form;
  LossConfig loss;
};

/// Validation fold assignment used by select_lambda: for k >= 2 a seeded
/// permutation cut into k contiguous blocks; for k == 1 one seeded 80/20
/// split. Returns the validation rows per fold.
std::vector<std::vector<Eigen::Index>> cv_folds(Eigen::Index n, int folds, std::uint64_t seed);

/**
 * Chooses lambda maximizing mean validation Pearson r across folds; exact
 * ties go to the larger lambda. Folds whose validation mean is undefined
 * count as -infinity.
 */
LambdaSelection select_lambda(const Eigen::MatrixXd& E, const Eigen::MatrixXd& Y, std::span<const double> grid,
                              int folds, std::uint64_t seed, const SelectOptions& options = {});

/// The grid used throughout the experiments.
inline const std::vector<double> kDefaultLambdaGrid = {0.0, 0.1, 0.01, 0.001, 0.0001};

}  // namespace vencode::ridge
