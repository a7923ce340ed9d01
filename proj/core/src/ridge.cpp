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

#include "vencode/ridge.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "vencode/error.hpp"
#include "vencode/metrics.hpp"
#include "vencode/rng.hpp"

namespace vencode::ridge {

namespace {

constexpr double kPinvCutoff = 1e-10;
// Stabilizes the correlation term when predictions have zero variance
// (W = 0 at the start of descent).
constexpr double kCorrelationEps = 1e-12;

void require_finite(const Eigen::MatrixXd& M, const char* what) {
  if (!M.allFinite()) throw Error("non_finite", std::string(what) + " contains NaN/Inf");
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& M, std::span<const Eigen::Index> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), M.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = M.row(rows[i]);
  return out;
}

}  // namespace

std::string_view to_string(Solver solver) {
  return solver == Solver::closed_form ? "closed_form" : "gradient";
}

Solver parse_solver(std::string_view s) {
  if (s == "closed_form" || s == "closed-form") return Solver::closed_form;
  if (s == "gradient") return Solver::gradient;
  throw Error("parse_error", "unknown solver '" + std::string(s) + "'");
}

void LossConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error("invalid_argument", "alpha must lie in [0, 1]");
  if (max_iterations <= 0) throw Error("invalid_argument", "max_iterations must be positive");
  if (!(step_size > 0.0)) throw Error("invalid_argument", "step_size must be positive");
  if (!(tolerance > 0.0)) throw Error("invalid_argument", "tolerance must be positive");
}

// ---------------------------------------------------------------------------
// Closed form
// ---------------------------------------------------------------------------

SpectralRidge::SpectralRidge(const Eigen::MatrixXd& E, const Eigen::MatrixXd& Y) {
  if (E.rows() != Y.rows()) throw Error("shape_mismatch", "E and Y row counts differ");
  if (E.rows() < 2) throw Error("invalid_argument", "ridge fit needs at least 2 rows, got " + std::to_string(E.rows()));
  require_finite(E, "embedding matrix");
  require_finite(Y, "response matrix");

  feature_means_ = E.colwise().mean().transpose();
  target_means_ = Y.colwise().mean().transpose();
  const Eigen::MatrixXd centered_features = E.rowwise() - feature_means_.transpose();
  const Eigen::MatrixXd centered_targets = Y.rowwise() - target_means_.transpose();

  const Eigen::Index d = E.cols();
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(d, d);
  gram.selfadjointView<Eigen::Lower>().rankUpdate(centered_features.transpose());
  gram.triangularView<Eigen::StrictlyUpper>() = gram.transpose();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  if (eig.info() != Eigen::Success) throw Error("numerical_error", "eigendecomposition of Gram matrix failed");
  eigenvalues_ = eig.eigenvalues().cwiseMax(0.0);
  eigenvectors_ = eig.eigenvectors();
  projected_cross_ = eigenvectors_.transpose() * (centered_features.transpose() * centered_targets);
  centered_target_ss_ = centered_targets.squaredNorm();
}

Eigen::VectorXd SpectralRidge::spectral_inverse(double lambda) const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("invalid_argument", "lambda must be finite and >= 0");
  const double max_eig = eigenvalues_.size() ? eigenvalues_.maxCoeff() : 0.0;
  const double cutoff = kPinvCutoff * max_eig;
  Eigen::VectorXd inv(eigenvalues_.size());
  for (Eigen::Index i = 0; i < eigenvalues_.size(); ++i) {
    const double s = eigenvalues_[i];
    if (lambda == 0.0) {
      inv[i] = s > cutoff ? 1.0 / s : 0.0;
    } else {
      inv[i] = 1.0 / (s + lambda);
    }
  }
  return inv;
}

Eigen::MatrixXd SpectralRidge::solve(double lambda) const {
  return eigenvectors_ * (spectral_inverse(lambda).asDiagonal() * projected_cross_);
}

RidgeModel SpectralRidge::model(double lambda) const {
  RidgeModel m;
  m.weights = solve(lambda);
  m.lambda = lambda;
  m.feature_means = feature_means_;
  m.target_means = target_means_;
  m.bias = target_means_ - m.weights.transpose() * feature_means_;
  m.solver = Solver::closed_form;
  // Residual plus penalty in the eigenbasis: with c_i = inv_i * ||P_i||^2,
  // ||Yc||^2 - sum_i (2 - (s_i + lambda) inv_i) c_i.
  const Eigen::VectorXd inv = spectral_inverse(lambda);
  const Eigen::VectorXd row_ss = projected_cross_.rowwise().squaredNorm();
  double loss = centered_target_ss_;
  for (Eigen::Index i = 0; i < inv.size(); ++i) {
    loss -= (2.0 - (eigenvalues_[i] + lambda) * inv[i]) * inv[i] * row_ss[i];
  }
  m.diagnostics.final_loss = std::max(loss, 0.0);
  m.diagnostics.iterations = 0;
  m.diagnostics.converged = true;
  return m;
}

RidgeModel fit_closed_form(const Eigen::MatrixXd& E, const Eigen::MatrixXd& Y, double lambda) {
  return SpectralRidge(E, Y).model(lambda);
}

Eigen::MatrixXd predict(const RidgeModel& model, const Eigen::MatrixXd& E) {
  if (E.cols() != model.weights.rows()) {
    throw Error("dimension_mismatch", "predict: embedding dim " + std::to_string(E.cols()) + " != model dim " +
                                          std::to_string(model.weights.rows()));
  }
  Eigen::MatrixXd out = (E.rowwise() - model.feature_means.transpose()) * model.weights;
  out.rowwise() += model.target_means.transpose();
  return out;
}

// ---------------------------------------------------------------------------
// Combined loss
// ---------------------------------------------------------------------------

Eigen::VectorXd masked_column_means(const Eigen::MatrixXd& Y, const io::MissingMask& missing) {
  Eigen::VectorXd means(Y.cols());
  for (Eigen::Index v = 0; v < Y.cols(); ++v) {
    double sum = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
      if (missing(i, v)) continue;
      sum += Y(i, v);
      ++count;
    }
    means[v] = count ? sum / static_cast<double>(count) : 0.0;
  }
  return means;
}

CombinedLoss::CombinedLoss(Eigen::MatrixXd centered_features, const Eigen::MatrixXd& centered_targets,
                           const io::MissingMask& missing, double lambda, double alpha)
    : features_(std::move(centered_features)), lambda_(lambda), alpha_(alpha) {
  const Eigen::Index n = centered_targets.rows(), v = centered_targets.cols();
  if (features_.rows() != n) throw Error("shape_mismatch", "CombinedLoss: row counts differ");
  if (missing.rows() != n || missing.cols() != v) throw Error("shape_mismatch", "CombinedLoss: mask shape differs");
  targets_ = Eigen::MatrixXd::Zero(n, v);
  observed_ = Eigen::MatrixXd::Zero(n, v);
  observed_count_ = Eigen::VectorXd::Zero(v);
  target_column_means_ = Eigen::VectorXd::Zero(v);
  scored_.assign(static_cast<std::size_t>(v), 0);
  for (Eigen::Index j = 0; j < v; ++j) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (missing(i, j)) continue;
      const double y = centered_targets(i, j);
      targets_(i, j) = y;
      observed_(i, j) = 1.0;
      lo = std::min(lo, y);
      hi = std::max(hi, y);
    }
    observed_count_[j] = observed_.col(j).sum();
    if (observed_count_[j] > 0) target_column_means_[j] = targets_.col(j).sum() / observed_count_[j];
    if (observed_count_[j] >= 2 && lo < hi) {
      scored_[static_cast<std::size_t>(j)] = 1;
    } else {
      degenerate_.push_back(j);
    }
  }
  total_observed_ = observed_.sum();
  if (total_observed_ <= 0) throw Error("invalid_argument", "CombinedLoss: no observed responses");
}

double CombinedLoss::value(const Eigen::MatrixXd& W) const { return evaluate_impl(W, nullptr); }

double CombinedLoss::evaluate(const Eigen::MatrixXd& W, Eigen::MatrixXd& gradient) const {
  return evaluate_impl(W, &gradient);
}

double CombinedLoss::evaluate_impl(const Eigen::MatrixXd& W, Eigen::MatrixXd* gradient) const {
  const Eigen::Index n = targets_.rows(), v = targets_.cols();
  const Eigen::MatrixXd pred = features_ * W;
  const Eigen::MatrixXd resid = (pred - targets_).cwiseProduct(observed_);
  const double mse = resid.squaredNorm() / total_observed_;

  const auto n_scored = static_cast<double>(std::count(scored_.begin(), scored_.end(), 1));
  double mean_r = 0.0;
  Eigen::MatrixXd dpred;
  if (gradient) dpred = (1.0 - alpha_) * 2.0 / total_observed_ * resid;

  if (alpha_ > 0.0 && n_scored > 0) {
    for (Eigen::Index j = 0; j < v; ++j) {
      if (!scored_[static_cast<std::size_t>(j)]) continue;
      const double cnt = observed_count_[j];
      double pmean = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) pmean += observed_(i, j) * pred(i, j);
      pmean /= cnt;
      const double ymean = target_column_means_[j];
      double sab = 0.0, saa = 0.0, sbb = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (observed_(i, j) == 0.0) continue;
        const double a = pred(i, j) - pmean, b = targets_(i, j) - ymean;
        sab += a * b;
        saa += a * a;
        sbb += b * b;
      }
      const double denom = std::sqrt(saa * sbb + kCorrelationEps);
      const double r = sab / denom;
      mean_r += r;
      if (gradient) {
        // dr/dpred_i = b_i / D - sab * sbb * a_i / D^3 over observed rows.
        const double c = -alpha_ / n_scored;
        const double d3 = denom * denom * denom;
        for (Eigen::Index i = 0; i < n; ++i) {
          if (observed_(i, j) == 0.0) continue;
          const double a = pred(i, j) - pmean, b = targets_(i, j) - ymean;
          dpred(i, j) += c * (b / denom - sab * sbb * a / d3);
        }
      }
    }
    mean_r /= n_scored;
  }

  const double corr_term = (alpha_ > 0.0 && n_scored > 0) ? alpha_ * (1.0 - mean_r) : 0.0;
  const double loss = (1.0 - alpha_) * mse + corr_term + lambda_ * W.squaredNorm();
  if (gradient) *gradient = features_.transpose() * dpred + 2.0 * lambda_ * W;
  return loss;
}

// ---------------------------------------------------------------------------
// Gradient fit
// ---------------------------------------------------------------------------

RidgeModel fit_gradient(const Eigen::MatrixXd& E, const Eigen::MatrixXd& Y, double lambda, const LossConfig& cfg) {
  return fit_gradient(E, Y, Y.array().isNaN(), lambda, cfg);
}

RidgeModel fit_gradient(const Eigen::MatrixXd& E, const Eigen::MatrixXd& Y, const io::MissingMask& missing,
                        double lambda, const LossConfig& cfg) {
  cfg.validate();
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error("invalid_argument", "lambda must be finite and >= 0");
  if (E.rows() != Y.rows()) throw Error("shape_mismatch", "E and Y row counts differ");
  if (missing.rows() != Y.rows() || missing.cols() != Y.cols()) {
    throw Error("shape_mismatch", "missing mask shape differs from Y");
  }
  require_finite(E, "embedding matrix");
  for (Eigen::Index v = 0; v < Y.cols(); ++v) {
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
      if (missing(i, v)) continue;
      if (!std::isfinite(Y(i, v))) {
        throw Error("non_finite", "unmasked non-finite response at row " + std::to_string(i) + ", voxel " +
                                      std::to_string(v));
      }
      ++count;
    }
    if (count < 3) {
      throw Error("insufficient_data", "voxel " + std::to_string(v) + " has " + std::to_string(count) +
                                           " non-missing training values (need >= 3)");
    }
  }

  RidgeModel model;
  model.solver = Solver::gradient;
  model.lambda = lambda;
  model.feature_means = E.colwise().mean().transpose();
  model.target_means = masked_column_means(Y, missing);

  Eigen::MatrixXd centered_targets(Y.rows(), Y.cols());
  for (Eigen::Index v = 0; v < Y.cols(); ++v) {
    for (Eigen::Index i = 0; i < Y.rows(); ++i) {
      centered_targets(i, v) = missing(i, v) ? 0.0 : Y(i, v) - model.target_means[v];
    }
  }
  const CombinedLoss loss(E.rowwise() - model.feature_means.transpose(), centered_targets, missing, lambda, cfg.alpha);

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(E.cols(), Y.cols());
  Eigen::MatrixXd grad;
  double current = loss.evaluate(W, grad);
  if (!std::isfinite(current)) throw Error("non_finite", "non-finite loss at initialization");

  double step = cfg.step_size;
  int it = 0;
  bool converged = false;
  constexpr double kArmijo = 1e-4;
  for (it = 1; it <= cfg.max_iterations; ++it) {
    const double gnorm2 = grad.squaredNorm();
    if (gnorm2 == 0.0) {
      converged = true;
      break;
    }
    Eigen::MatrixXd candidate;
    double next = 0.0;
    bool accepted = false;
    while (step > 1e-300) {
      candidate = W - step * grad;
      next = loss.value(candidate);
      if (std::isfinite(next) && next <= current - kArmijo * step * gnorm2) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      // No descent possible at machine precision: stationary.
      converged = true;
      break;
    }
    const double rel = std::abs(current - next) / std::max(std::abs(current), std::numeric_limits<double>::min());
    W = std::move(candidate);
    current = loss.evaluate(W, grad);
    if (!std::isfinite(current)) throw Error("non_finite", "non-finite loss during descent");
    if (rel < cfg.tolerance) {
      converged = true;
      break;
    }
    step *= 2.0;
  }

  model.weights = std::move(W);
  model.bias = model.target_means - model.weights.transpose() * model.feature_means;
  model.diagnostics.final_loss = current;
  model.diagnostics.iterations = std::min(it, cfg.max_iterations);
  model.diagnostics.converged = converged;
  model.diagnostics.degenerate_voxels = loss.degenerate_voxels();
  return model;
}

// ---------------------------------------------------------------------------
// Lambda selection
// ---------------------------------------------------------------------------

std::vector<std::vector<Eigen::Index>> cv_folds(Eigen::Index n, int folds, std::uint64_t seed) {
  if (folds < 1) throw Error("invalid_argument", "folds must be >= 1");
  Rng rng(derive_seed(seed, "cv_folds"));
  const auto perm = random_permutation(static_cast<std::size_t>(n), rng);
  std::vector<std::vector<Eigen::Index>> out;
  if (folds == 1) {
    const auto n_val = static_cast<std::size_t>(std::llround(0.2 * static_cast<double>(n)));
    std::vector<Eigen::Index> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::sort(val.begin(), val.end());
    out.push_back(std::move(val));
  } else {
    for (int f = 0; f < folds; ++f) {
      const auto lo = static_cast<std::size_t>(n) * static_cast<std::size_t>(f) / static_cast<std::size_t>(folds);
      const auto hi = static_cast<std::size_t>(n) * static_cast<std::size_t>(f + 1) / static_cast<std::size_t>(folds);
      std::vector<Eigen::Index> val(perm.begin() + static_cast<std::ptrdiff_t>(lo),
                                    perm.begin() + static_cast<std::ptrdiff_t>(hi));
      std::sort(val.begin(), val.end());
      out.push_back(std::move(val));
    }
  }
  for (std::size_t f = 0; f < out.size(); ++f) {
    if (out[f].size() < 2) {
      throw Error("insufficient_data", "fold " + std::to_string(f) + " has " + std::to_string(out[f].size()) +
                                           " validation rows (need >= 2)");
    }
    if (static_cast<Eigen::Index>(out[f].size()) > n - 2) {
      throw Error("insufficient_data", "fold " + std::to_string(f) + " leaves fewer than 2 training rows");
    }
  }
  return out;
}

LambdaSelection select_lambda(const Eigen::MatrixXd& E, const Eigen::MatrixXd& Y, std::span<const double> grid,
                              int folds, std::uint64_t seed, const SelectOptions& options) {
  if (grid.empty()) throw Error("invalid_argument", "lambda grid is empty");
  if (E.rows() != Y.rows()) throw Error("shape_mismatch", "E and Y row counts differ");
  for (double l : grid) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw Error("invalid_argument", "lambda grid values must be finite and >= 0");
  }
  const auto val_folds = cv_folds(E.rows(), folds, seed);

  LambdaSelection sel;
  std::vector<std::vector<double>> scores(grid.size());
  for (std::size_t f = 0; f < val_folds.size(); ++f) {
    const auto& val = val_folds[f];
    std::vector<Eigen::Index> train;
    train.reserve(static_cast<std::size_t>(E.rows()) - val.size());
    for (Eigen::Index i = 0, k = 0; i < E.rows(); ++i) {
      if (k < static_cast<Eigen::Index>(val.size()) && val[static_cast<std::size_t>(k)] == i) {
        ++k;
        continue;
      }
      train.push_back(i);
    }
    const Eigen::MatrixXd E_tr = take_rows(E, train), Y_tr = take_rows(Y, train);
    const Eigen::MatrixXd E_val = take_rows(E, val), Y_val = take_rows(Y, val);

    if (options.solver == Solver::closed_form) {
      const SpectralRidge spectral(E_tr, Y_tr);
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto s = metrics::pearson_scores(predict(spectral.model(grid[g]), E_val), Y_val);
        scores[g].push_back(s.mean_r);
      }
    } else {
      for (std::size_t g = 0; g < grid.size(); ++g) {
        const auto model = fit_gradient(E_tr, Y_tr, grid[g], options.loss);
        scores[g].push_back(metrics::pearson_scores(predict(model, E_val), Y_val).mean_r);
      }
    }
  }

  double best_score = -std::numeric_limits<double>::infinity();
  bool have_best = false;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    double sum = 0.0;
    bool undefined = false;
    for (std::size_t f = 0; f < scores[g].size(); ++f) {
      sel.cv_table.push_back({grid[g], static_cast<int>(f), scores[g][f]});
      if (std::isnan(scores[g][f])) undefined = true;
      sum += scores[g][f];
    }
    const double mean =
        undefined ? -std::numeric_limits<double>::infinity() : sum / static_cast<double>(scores[g].size());
    sel.mean_by_lambda.push_back(mean);
    if (!have_best || mean > best_score || (mean == best_score && grid[g] > sel.best_lambda)) {
      best_score = mean;
      sel.best_lambda = grid[g];
      have_best = true;
    }
  }
  return sel;
}

}  // namespace vencode::ridge
