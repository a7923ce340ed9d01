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

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "vencode/tensorio.hpp"

namespace vencode::metrics {

/// Per-voxel Pearson scores. Degenerate voxels (constant input on either
/// side, or fewer than two observed pairs) are NaN and listed in
/// `degenerate`; `excluded` lists voxels dropped by ceiling normalization.
struct ScoreVector {
  Eigen::VectorXd per_voxel_r;
  double mean_r = 0.0;
  Eigen::Index n_test = 0;
  std::vector<Eigen::Index> degenerate;
  std::vector<Eigen::Index> excluded;
};

/// Mean over the finite entries of `per_voxel_r`; NaN if none.
double mean_of_finite(const Eigen::VectorXd& per_voxel_r);

/// Pearson r per column over rows where `observed` has no NaN. `predicted`
/// must be NaN-free. Shapes must match.
ScoreVector pearson_scores(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& observed);

/// Pearson r of two vectors over positions where both are finite; NaN when
/// degenerate.
double pearson(std::span<const double> x, std::span<const double> y);

enum class CeilingMethod { split_half };

/// How normalized scores are formed from a ceiling: r / c, or r / sqrt(c).
enum class NormalizationMode { divide, divide_sqrt };

struct CeilingVector {
  Eigen::VectorXd per_voxel_ceiling;  // clipped to [floor_epsilon, 1]
  Eigen::VectorXd raw;                // before clipping; NaN if degenerate
  CeilingMethod method = CeilingMethod::split_half;
  double floor_epsilon = 0.05;
};

CeilingVector split_half_ceiling(const io::ResponseMatrix& rep1, const io::ResponseMatrix& rep2,
                                 double floor_epsilon = 0.05);

/// Voxels whose raw ceiling is below the floor (or undefined) come back NaN,
/// are listed in `excluded`, and do not enter mean_r.
ScoreVector normalize_by_ceiling(const ScoreVector& scores, const CeilingVector& ceiling,
                                 NormalizationMode mode = NormalizationMode::divide);

struct TStatistic {
  double t = 0.0;
  int dof = 0;
};

/// Paired t on a - b. Throws Error("degenerate_t") when all differences are
/// equal.
TStatistic paired_t(std::span<const double> a, std::span<const double> b);

/// Spearman rank correlation with average ranks for ties.
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace vencode::metrics
