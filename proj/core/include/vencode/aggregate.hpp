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

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "vencode/tensorio.hpp"

namespace vencode::aggregate {

/// How a stimulus's variants are ranked before taking the first m.
struct OrderingStrategy {
  enum class Mode { random, quality_desc };

  Mode mode = Mode::random;
  std::uint64_t seed = 0;

  static OrderingStrategy random(std::uint64_t seed) { return {Mode::random, seed}; }
  static OrderingStrategy quality_desc() { return {Mode::quality_desc, 0}; }

  io::Ordering as_record_ordering() const {
    return mode == Mode::random ? io::Ordering::random : io::Ordering::quality_desc;
  }
};

/// Subset sizes {step, 2*step, ..., max}.
struct SubsetSchedule {
  int step = 5;
  int max = 100;

  void validate() const;
  std::vector<int> sizes() const;
};

/// Mean of variants[subset[0..]] accumulated left to right in double.
Eigen::VectorXd mean_embedding(std::span<const io::Variant> variants, std::span<const std::size_t> subset);

/// Ranking of `variants`. Random mode draws a permutation from a stream
/// seeded by (strategy.seed, stream_key), so prefixes are nested across m.
/// quality_desc is a stable sort by descending quality.
std::vector<std::size_t> order_variants(std::span<const io::Variant> variants, std::string_view stream_key,
                                        const OrderingStrategy& strategy);

std::vector<std::size_t> order_variants(const io::VariantEmbeddingSet& set, std::string_view stimulus_id,
                                        const OrderingStrategy& strategy);

/// Cosine similarity of each variant to `reference`.
std::vector<double> quality_scores(std::span<const Eigen::VectorXf> variants, const Eigen::VectorXf& reference);

/// Copy of `set` whose variants carry cosine quality against the matching
/// single vector in `reference_set` (same ids, same dim).
io::VariantEmbeddingSet attach_quality(const io::VariantEmbeddingSet& set,
                                       const io::VariantEmbeddingSet& reference_set);

struct FilterResult {
  io::VariantEmbeddingSet set;
  std::vector<std::string> dropped;  // stimuli left with no variants
};

/// Keeps variants with quality >= threshold.
FilterResult quality_filter(const io::VariantEmbeddingSet& set, double threshold);

Eigen::VectorXd concat_embedding(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// Inner mean over the first m variants of each word, outer mean over words.
Eigen::VectorXd content_word_embedding(std::span<const std::vector<Eigen::VectorXf>> per_word, int m);

struct PooledResponses {
  std::vector<std::string> header_ids;
  Eigen::MatrixXd values;  // NaN where every member is missing
  std::vector<std::vector<std::string>> members;
  std::vector<std::string> excluded;  // stimuli without a header
};

/// Averages sentence responses per header (paragraphs sharing a header are
/// merged), per voxel over non-missing members. Header order is first
/// appearance in the catalog.
PooledResponses pool_header_responses(const io::StimulusCatalog& catalog, const io::ResponseMatrix& responses);

enum class Featurization { A, B, C, D, E, F, G, H };

std::string_view to_string(Featurization f);
Featurization parse_featurization(std::string_view s);
io::EmbeddingKind expected_kind(Featurization f);
/// A, B, and C use a single vector per stimulus; the subset size is ignored.
bool uses_subset_size(Featurization f);
bool uses_headers(Featurization f);
bool uses_content_words(Featurization f);

struct DesignMatrix {
  std::vector<std::string> row_ids;
  Eigen::MatrixXd features;
  std::vector<std::string> excluded;  // stimuli dropped with the reason in `notes`
  std::vector<std::string> notes;
};

/**
 * Assembles one feature row per stimulus (or per header for C/H).
 *
 * Variant featurizations average the first min(m, available) variants
 * under `ordering`. When `concat_with` is given, its single vector for the
 * row id is placed first and the aggregated features second.
 */
DesignMatrix build_design_matrix(const io::VariantEmbeddingSet& set, const io::StimulusCatalog& catalog,
                                 Featurization featurization, int m, const OrderingStrategy& ordering,
                                 const io::VariantEmbeddingSet* concat_with = nullptr);

}  // namespace vencode::aggregate
