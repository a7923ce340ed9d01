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
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace vencode::io {

using Path = std::filesystem::path;

// ---------------------------------------------------------------------------
// Stimulus catalog
// ---------------------------------------------------------------------------

struct CatalogEntry {
  std::string stimulus_id;
  std::string text;
  std::optional<std::string> paragraph_id;
  std::optional<std::string> header;
  std::vector<std::string> content_words;

  bool operator==(const CatalogEntry&) const = default;
};

/**
 * Ordered list of stimuli. Row order is presentation order; the first
 * sentence of a paragraph is the first catalog row carrying its id.
 *
 * Invariants (checked on construction): ids unique and non-empty, a header
 * implies a paragraph_id, and all rows of one paragraph share one header.
 */
class StimulusCatalog {
 public:
  StimulusCatalog() = default;
  explicit StimulusCatalog(std::vector<CatalogEntry> entries);

  const std::vector<CatalogEntry>& entries() const noexcept { return entries_; }
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  std::optional<std::size_t> index_of(std::string_view id) const;
  const CatalogEntry& at(std::string_view id) const;
  std::vector<std::string> ids() const;

  /// True when every entry carries a paragraph_id.
  bool fully_paragraphed() const;
  /// Paragraph ids in first-appearance order.
  std::vector<std::string> paragraph_order() const;
  /// Paragraph size K per paragraph id.
  std::map<std::string, std::size_t> paragraph_sizes() const;

  /// Sub-catalog with only the given ids, in catalog order.
  StimulusCatalog restricted_to(std::span<const std::string> ids) const;

  bool operator==(const StimulusCatalog& o) const { return entries_ == o.entries_; }

 private:
  std::vector<CatalogEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Reads the UTF-8 TSV catalog. Required header columns:
/// stimulus_id, text, paragraph_id, header, content_words (pipe-separated).
StimulusCatalog load_catalog(const Path& path);
void save_catalog(const StimulusCatalog& catalog, const Path& path);

// ---------------------------------------------------------------------------
// Variant embedding sets (EMB1)
// ---------------------------------------------------------------------------

enum class EmbeddingKind {
  original,
  paraphrase,
  enriched_paraphrase,
  image,
  content_word_image,
  header_image,
  content_word_text,
  header_text,
};

std::string_view to_string(EmbeddingKind kind);
EmbeddingKind parse_embedding_kind(std::string_view s);
/// Kinds whose variants carry a word_index.
bool is_content_word_kind(EmbeddingKind kind);
/// Kinds keyed by header rather than stimulus id.
bool is_header_kind(EmbeddingKind kind);

struct Variant {
  Eigen::VectorXf vector;
  std::optional<double> quality;
  std::optional<int> word_index;

  bool operator==(const Variant& o) const;
};

struct StimulusVariants {
  std::string stimulus_id;
  std::vector<Variant> variants;
};

/**
 * Per-stimulus bags of embedding vectors of one kind and dimension.
 *
 * Items keep insertion order, which is the on-disk order. For header kinds
 * the stimulus_id field holds the header string.
 */
class VariantEmbeddingSet {
 public:
  VariantEmbeddingSet() = default;
  VariantEmbeddingSet(EmbeddingKind kind, int dim);

  EmbeddingKind kind() const noexcept { return kind_; }
  int dim() const noexcept { return dim_; }
  const std::vector<StimulusVariants>& items() const noexcept { return items_; }
  std::size_t size() const noexcept { return items_.size(); }
  std::size_t total_variants() const;

  /// Appends a stimulus; validates dimension, finiteness, quality range,
  /// word_index presence, and the one-variant rule for `original`.
  void add(std::string stimulus_id, std::vector<Variant> variants);

  const StimulusVariants* find(std::string_view id) const;
  StimulusVariants* find_mutable(std::string_view id);
  bool contains(std::string_view id) const { return find(id) != nullptr; }
  std::vector<std::string> ids() const;

  /// Every variant of every stimulus carries a quality score.
  bool fully_scored() const;

  bool operator==(const VariantEmbeddingSet& o) const;

 private:
  EmbeddingKind kind_ = EmbeddingKind::original;
  int dim_ = 0;
  std::vector<StimulusVariants> items_;
  std::unordered_map<std::string, std::size_t> index_;
};

VariantEmbeddingSet load_embeddings(const Path& dir);
void save_embeddings(const VariantEmbeddingSet& set, const Path& dir);

// ---------------------------------------------------------------------------
// Response matrices (RESP1)
// ---------------------------------------------------------------------------

using MissingMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Stimuli x voxels responses stored at on-disk precision. Missing values
/// are NaN in-band.
struct ResponseMatrix {
  std::vector<std::string> stimulus_ids;
  Eigen::MatrixXf values;
  std::string subject_id;
  std::optional<int> repeat_index;

  Eigen::Index n_stimuli() const noexcept { return values.rows(); }
  Eigen::Index n_voxels() const noexcept { return values.cols(); }

  MissingMask missing_mask() const;
  /// Voxels with no observed value at all.
  std::vector<Eigen::Index> degenerate_voxels() const;
  std::optional<Eigen::Index> row_of(std::string_view id) const;
  Eigen::MatrixXd as_double() const { return values.cast<double>(); }

  /// Throws if the matrix is empty, misshapen or has duplicate ids.
  void validate() const;

  bool operator==(const ResponseMatrix& o) const;
};

ResponseMatrix load_responses(const Path& dir);
void save_responses(const ResponseMatrix& responses, const Path& dir);

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

enum class Ordering { random, quality_desc, not_applicable };

std::string_view to_string(Ordering ordering);
Ordering parse_ordering(std::string_view s);

struct ResultRecord {
  std::string experiment;
  std::string featurization;
  std::string model_tag;
  std::string split_id;
  int m = 1;
  Ordering ordering = Ordering::not_applicable;
  double mean_r = 0.0;
  std::optional<std::vector<double>> per_voxel_r;
  bool ceiling_normalized = false;

  bool operator==(const ResultRecord& o) const;
};

/// Column header of the results CSV, in order.
inline constexpr std::string_view kResultsCsvHeader =
    "experiment,featurization,model_tag,split_id,m,ordering,mean_r,ceiling_normalized";

/// Sidecar path written next to a results CSV (extension replaced by .json).
Path results_sidecar_path(const Path& csv_path);

/**
 * Writes the results CSV and its JSON sidecar. Rows are written in
 * canonical order: stable-sorted by (experiment, featurization, model_tag,
 * split_id, m).
 */
void save_results(std::span<const ResultRecord> records, const Path& csv_path);
std::vector<ResultRecord> load_results(const Path& csv_path);
/// The order save_results writes in.
std::vector<ResultRecord> canonical_order(std::span<const ResultRecord> records);

// Little-endian binary32 helpers shared by the EMB1/RESP1 codecs.
void write_f32le(const Path& path, std::span<const float> values);
std::vector<float> read_f32le(const Path& path, std::size_t expected_count);

}  // namespace vencode::io
