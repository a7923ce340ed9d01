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

#include "vencode/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "vencode/error.hpp"

namespace vencode::metrics {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Two-pass Pearson over index pairs where both inputs are finite.
template <typename GetX, typename GetY>
double pearson_impl(Eigen::Index n, GetX x, GetY y) {
  double sx = 0.0, sy = 0.0;
  Eigen::Index count = 0;
  double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
  double ymin = xmin, ymax = -xmin;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = x(i), yi = y(i);
    if (!std::isfinite(xi) || !std::isfinite(yi)) continue;
    sx += xi;
    sy += yi;
    xmin = std::min(xmin, xi);
    xmax = std::max(xmax, xi);
    ymin = std::min(ymin, yi);
    ymax = std::max(ymax, yi);
    ++count;
  }
  // Constant on either side: correlation undefined.
  if (count < 2 || xmin == xmax || ymin == ymax) return kNaN;
  const double mx = sx / static_cast<double>(count);
  const double my = sy / static_cast<double>(count);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double xi = x(i), yi = y(i);
    if (!std::isfinite(xi) || !std::isfinite(yi)) continue;
    const double dx = xi - mx, dy = yi - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return kNaN;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double mean_of_finite(const Eigen::VectorXd& per_voxel_r) {
  double sum = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index v = 0; v < per_voxel_r.size(); ++v) {
    if (std::isfinite(per_voxel_r[v])) {
      sum += per_voxel_r[v];
      ++count;
    }
  }
  return count ? sum / static_cast<double>(count) : kNaN;
}

double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("shape_mismatch", "pearson: length mismatch");
  return pearson_impl(
      static_cast<Eigen::Index>(x.size()), [&](Eigen::Index i) { return x[static_cast<std::size_t>(i)]; },
      [&](Eigen::Index i) { return y[static_cast<std::size_t>(i)]; });
}

ScoreVector pearson_scores(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& observed) {
  if (predicted.rows() != observed.rows() || predicted.cols() != observed.cols()) {
    throw Error("shape_mismatch", "pearson_scores: predicted is " + std::to_string(predicted.rows()) + "x" +
                                      std::to_string(predicted.cols()) + ", observed is " +
                                      std::to_string(observed.rows()) + "x" + std::to_string(observed.cols()));
  }
  ScoreVector s;
  s.n_test = predicted.rows();
  s.per_voxel_r.resize(predicted.cols());
  for (Eigen::Index v = 0; v < predicted.cols(); ++v) {
    const double r = pearson_impl(
        predicted.rows(), [&](Eigen::Index i) { return predicted(i, v); },
        [&](Eigen::Index i) { return observed(i, v); });
    s.per_voxel_r[v] = r;
    if (std::isnan(r)) s.degenerate.push_back(v);
  }
  s.mean_r = mean_of_finite(s.per_voxel_r);
  return s;
}

CeilingVector split_half_ceiling(const io::ResponseMatrix& rep1, const io::ResponseMatrix& rep2,
                                 double floor_epsilon) {
  if (rep1.stimulus_ids != rep2.stimulus_ids) {
    throw Error("stimulus_mismatch", "split_half_ceiling: repeats have different stimulus ids");
  }
  if (rep1.n_voxels() != rep2.n_voxels()) {
    throw Error("shape_mismatch", "split_half_ceiling: repeats have different voxel counts");
  }
  if (!(floor_epsilon > 0.0 && floor_epsilon <= 1.0)) {
    throw Error("invalid_argument", "floor_epsilon must lie in (0, 1]");
  }
  CeilingVector c;
  c.floor_epsilon = floor_epsilon;
  c.raw.resize(rep1.n_voxels());
  c.per_voxel_ceiling.resize(rep1.n_voxels());
  for (Eigen::Index v = 0; v < rep1.n_voxels(); ++v) {
    const double r = pearson_impl(
        rep1.n_stimuli(), [&](Eigen::Index i) { return static_cast<double>(rep1.values(i, v)); },
        [&](Eigen::Index i) { return static_cast<double>(rep2.values(i, v)); });
    c.raw[v] = r;
    c.per_voxel_ceiling[v] = std::isnan(r) ? floor_epsilon : std::clamp(r, floor_epsilon, 1.0);
  }
  return c;
}

ScoreVector normalize_by_ceiling(const ScoreVector& scores, const CeilingVector& ceiling, NormalizationMode mode) {
  if (scores.per_voxel_r.size() != ceiling.per_voxel_ceiling.size()) {
    throw Error("shape_mismatch", "normalize_by_ceiling: voxel count mismatch");
  }
  ScoreVector out = scores;
  out.excluded.clear();
  for (Eigen::Index v = 0; v < out.per_voxel_r.size(); ++v) {
    const double raw = ceiling.raw.size() ? ceiling.raw[v] : ceiling.per_voxel_ceiling[v];
    if (std::isnan(raw) || raw < ceiling.floor_epsilon) {
      out.per_voxel_r[v] = kNaN;
      out.excluded.push_back(v);
      continue;
    }
    const double c = ceiling.per_voxel_ceiling[v];
    out.per_voxel_r[v] /= (mode == NormalizationMode::divide ? c : std::sqrt(c));
  }
  out.mean_r = mean_of_finite(out.per_voxel_r);
  return out;
}

TStatistic paired_t(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error("shape_mismatch", "paired_t: lengths differ");
  const std::size_t n = a.size();
  if (n < 2) throw Error("invalid_argument", "paired_t: need at least 2 pairs");
  std::vector<double> d(n);
  for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
  if (std::all_of(d.begin(), d.end(), [&](double x) { return x == d[0]; })) {
    throw Error("degenerate_t", "degenerate t: zero variance of differences");
  }
  const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double x : d) ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  return {mean / (sd / std::sqrt(static_cast<double>(n))), static_cast<int>(n - 1)};
}

namespace {

std::vector<double> average_ranks(std::span<const double> x) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(x.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && x[idx[j + 1]] == x[idx[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error("shape_mismatch", "spearman: length mismatch");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

}  // namespace vencode::metrics
