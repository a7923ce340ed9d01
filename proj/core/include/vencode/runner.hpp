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
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vencode/aggregate.hpp"
#include "vencode/metrics.hpp"
#include "vencode/ridge.hpp"
#include "vencode/splits.hpp"
#include "vencode/synth.hpp"
#include "vencode/tensorio.hpp"

namespace vencode::runner {

/**
 * One experiment: a featurization swept over a subset schedule, evaluated
 * on several splits with lambda re-selected per (split, m).
 *
 * Serialized as a single JSON document (see config_to_json). Relative paths
 * in a config file are resolved against the file's directory.
 */
struct ExperimentConfig {
  std::string name = "experiment";
  aggregate::Featurization featurization = aggregate::Featurization::A;

  std::string embeddings;
  std::optional<std::string> concat_embeddings;     // placed before the aggregated features
  std::optional<std::string> reference_embeddings;  // scores variants by cosine
  std::string responses;
  std::string catalog;

  aggregate::SubsetSchedule schedule{5, 100};
  io::Ordering ordering = io::Ordering::random;
  std::optional<double> quality_threshold;

  std::vector<double> lambda_grid = ridge::kDefaultLambdaGrid;
  int folds = 5;
  std::uint64_t seed = 0;
  int n_splits = 5;
  bool group_by_paragraph = false;
  splits::Fractions fractions;
  std::optional<std::string> splits_file;

  std::optional<std::string> ceiling_rep1;
  std::optional<std::string> ceiling_rep2;
  double ceiling_floor = 0.05;
  metrics::NormalizationMode normalization = metrics::NormalizationMode::divide;

  ridge::Solver solver = ridge::Solver::closed_form;
  ridge::LossConfig loss;

  std::string model_tag = "model";
  int workers = 1;
  bool keep_per_voxel = false;

  void validate() const;
  bool operator==(const ExperimentConfig& o) const;
};

std::string config_to_json(const ExperimentConfig& cfg);
/// Unknown keys are rejected.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const io::Path& path);
void save_config(const ExperimentConfig& cfg, const io::Path& path);
/// Hex FNV-1a of the canonical JSON form, excluding `workers`.
std::string config_hash(const ExperimentConfig& cfg);

/// Artifacts an experiment reads, already in memory.
struct ExperimentData {
  io::StimulusCatalog catalog;
  io::VariantEmbeddingSet embeddings;
  std::optional<io::VariantEmbeddingSet> concat;
  std::optional<io::VariantEmbeddingSet> reference;
  io::ResponseMatrix responses;
  std::optional<io::ResponseMatrix> rep1;
  std::optional<io::ResponseMatrix> rep2;
  std::optional<std::vector<splits::Split>> splits;
};

ExperimentData load_data(const ExperimentConfig& cfg);

struct CurveResult {
  std::vector<io::ResultRecord> records;  // split-major, m-minor
  std::vector<double> selected_lambdas;   // aligned with records
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> excluded;  // stimuli dropped before fitting, with reasons
};

CurveResult run_experiment(const ExperimentConfig& cfg);
CurveResult run_experiment(const ExperimentConfig& cfg, const ExperimentData& data);

/// Mean of mean_r across splits for each m, in schedule order.
std::vector<std::pair<int, double>> mean_curve(const CurveResult& result);

struct ComparisonRow {
  int m = 0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  std::optional<metrics::TStatistic> t;  // paired over splits, a - b
  std::string error;                     // set when t is undefined
};

struct Comparison {
  CurveResult a;
  CurveResult b;
  std::vector<ComparisonRow> rows;
};

/**
 * Per-m paired t over per-split mean_r. Both curves must cover the same
 * splits. A curve with a single m (featurizations A-C) is compared against
 * every m of the other; otherwise the schedules must match.
 */
std::vector<ComparisonRow> compare_curves(const CurveResult& a, const CurveResult& b);
Comparison run_comparison(const ExperimentConfig& cfg_a, const ExperimentConfig& cfg_b);
Comparison run_comparison(const ExperimentConfig& cfg_a, const ExperimentData& data_a,
                          const ExperimentConfig& cfg_b, const ExperimentData& data_b);

struct SummaryRow {
  std::string experiment;
  std::string featurization;
  int m = 0;
  int n_splits = 0;
  double mean = 0.0;
  double sd = 0.0;
};

std::vector<SummaryRow> summarize(std::span<const io::ResultRecord> records);

/// Writes results.csv, results.json, summary.csv and, when given,
/// config.json into `out_dir`.
void emit_report(const CurveResult& result, const io::Path& out_dir, const ExperimentConfig* cfg = nullptr);
void write_summary(std::span<const SummaryRow> rows, const io::Path& path);

/// Named experiment configs shipped with a synthetic preset. Paths are
/// relative to the bundle directory.
std::vector<std::pair<std::string, ExperimentConfig>> preset_experiments(synth::Preset preset, std::uint64_t seed);

}  // namespace vencode::runner
