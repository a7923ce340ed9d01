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
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vencode/tensorio.hpp"

namespace vencode::synth {

/// Generator settings. `original_noise_sd` perturbs the single "original"
/// embedding written beside the views (0 exposes the true latent).
struct SynthConfig {
  int n_stimuli = 200;
  int dim = 64;
  int n_voxels = 50;
  double response_noise_sd = 1.0;
  int n_variants = 100;
  double view_noise_sd = 1.0;
  double offtopic_fraction = 0.0;
  int enrichment_dims = 0;
  double original_noise_sd = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct GroundTruth {
  Eigen::MatrixXd embeddings;       // n x d, standard normal
  Eigen::MatrixXd weights;          // d x v, N(0, 1/d)
  Eigen::MatrixXd clean_responses;  // embeddings * weights
  Eigen::MatrixXd responses;        // clean + N(0, response_noise_sd^2)
};

GroundTruth gen_ground_truth(const SynthConfig& cfg);

struct NoisyViews {
  io::VariantEmbeddingSet set;
  /// on_topic[i][k]: variant k of stimulus i is a noisy copy of the latent.
  std::vector<std::vector<char>> on_topic;
};

/// M views per latent row: an independent standard-normal vector with
/// probability offtopic_fraction, otherwise the row plus N(0, view_noise^2).
/// Each view's quality is its cosine to the (binary32-rounded) latent row.
NoisyViews gen_noisy_views(const Eigen::MatrixXd& latent, const SynthConfig& cfg, std::span<const std::string> ids,
                           io::EmbeddingKind kind = io::EmbeddingKind::image);

struct EnrichedData {
  NoisyViews views;                  // over all d + enrichment_dims coordinates
  io::VariantEmbeddingSet original;  // first d coordinates, zero padded
  Eigen::MatrixXd extra_latent;      // n x enrichment_dims
  Eigen::MatrixXd weights;           // (d + k) x v
  Eigen::MatrixXd clean_responses;
  Eigen::MatrixXd responses;
};

/// Extends the latent by `enrichment_dims` response-relevant coordinates the
/// original embedding cannot see. With zero extra dimensions the views and
/// responses coincide with gen_noisy_views / gen_ground_truth.
EnrichedData gen_enriched_views(const Eigen::MatrixXd& latent, const SynthConfig& cfg,
                                std::span<const std::string> ids);

/// Independent noisy repeats of Y_clean. Only two repeats are supported.
std::vector<io::ResponseMatrix> gen_repeats(const Eigen::MatrixXd& clean, double noise_sd, int n_repeats,
                                            std::uint64_t seed, std::span<const std::string> ids);

std::vector<std::string> stimulus_ids(int n);

/// Catalog of n synthetic stimuli in paragraphs of `paragraph_size`, each
/// paragraph with its own header.
io::StimulusCatalog synthetic_catalog(int n, int paragraph_size = 4);

io::VariantEmbeddingSet single_vector_set(const Eigen::MatrixXd& rows, std::span<const std::string> ids,
                                          io::EmbeddingKind kind = io::EmbeddingKind::original);

io::ResponseMatrix to_response_matrix(const Eigen::MatrixXd& values, std::span<const std::string> ids,
                                      std::string subject_id = "synthetic");

enum class Preset { averaging, sorted, enriched, ceiling, paraphrase };

std::string_view to_string(Preset p);
Preset parse_preset(std::string_view s);
SynthConfig preset_config(Preset p, std::uint64_t seed);

/// Everything a preset produces, in memory.
struct SynthBundle {
  Preset preset = Preset::averaging;
  SynthConfig config;
  io::StimulusCatalog catalog;
  io::ResponseMatrix responses;
  io::VariantEmbeddingSet original;
  std::optional<io::VariantEmbeddingSet> views;
  std::vector<std::vector<char>> on_topic;
  std::optional<io::ResponseMatrix> rep1;
  std::optional<io::ResponseMatrix> rep2;
};

SynthBundle make_bundle(const SynthConfig& cfg, Preset preset);
SynthBundle make_preset(Preset p, std::uint64_t seed);

/// Writes catalog.tsv, responses/, original/, views/ (when present),
/// rep1/ and rep2/ (ceiling preset), and synth.json.
void save_bundle(const SynthBundle& bundle, const io::Path& dir);

}  // namespace vencode::synth
