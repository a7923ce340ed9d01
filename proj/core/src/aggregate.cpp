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

#include "vencode/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "vencode/error.hpp"
#include "vencode/rng.hpp"

namespace vencode::aggregate {

void SubsetSchedule::validate() const {
  if (step <= 0 || max <= 0) throw Error("invalid_argument", "subset schedule step and max must be positive");
  if (max % step != 0) {
    throw Error("invalid_argument",
                "subset schedule max " + std::to_string(max) + " is not divisible by step " + std::to_string(step));
  }
}

std::vector<int> SubsetSchedule::sizes() const {
  validate();
  std::vector<int> out;
  for (int m = step; m <= max; m += step) out.push_back(m);
  return out;
}

Eigen::VectorXd mean_embedding(std::span<const io::Variant> variants, std::span<const std::size_t> subset) {
  if (subset.empty()) throw Error("empty_subset", "mean_embedding: empty subset");
  std::vector<char> used(variants.size(), 0);
  for (auto i : subset) {
    if (i >= variants.size()) throw Error("invalid_argument", "mean_embedding: index out of range");
    if (used[i]) throw Error("invalid_argument", "mean_embedding: duplicate index");
    used[i] = 1;
  }
  const auto dim = variants[subset[0]].vector.size();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(dim);
  for (auto i : subset) {
    if (variants[i].vector.size() != dim) throw Error("dimension_mismatch", "mean_embedding: ragged variants");
    acc += variants[i].vector.cast<double>();
  }
  return acc / static_cast<double>(subset.size());
}

std::vector<std::size_t> order_variants(std::span<const io::Variant> variants, std::string_view stream_key,
                                        const OrderingStrategy& strategy) {
  if (strategy.mode == OrderingStrategy::Mode::random) {
    Rng rng(derive_seed(strategy.seed, stream_key));
    return random_permutation(variants.size(), rng);
  }
  std::vector<std::size_t> order(variants.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < variants.size(); ++i) {
    if (!variants[i].quality) {
      throw Error("missing_quality", "quality ordering requires scores; variant " + std::to_string(i) + " of '" +
                                         std::string(stream_key) + "' has none");
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return *variants[a].quality > *variants[b].quality; });
  return order;
}

std::vector<std::size_t> order_variants(const io::VariantEmbeddingSet& set, std::string_view stimulus_id,
                                        const OrderingStrategy& strategy) {
  const auto* item = set.find(stimulus_id);
  if (!item || item->variants.empty()) {
    throw Error("unknown_stimulus", "no variants for '" + std::string(stimulus_id) + "'");
  }
  return order_variants(item->variants, stimulus_id, strategy);
}

std::vector<double> quality_scores(std::span<const Eigen::VectorXf> variants, const Eigen::VectorXf& reference) {
  const Eigen::VectorXd ref = reference.cast<double>();
  const double ref_norm2 = ref.squaredNorm();
  if (!(ref_norm2 > 0.0)) throw Error("zero_norm", "quality_scores: reference vector has zero norm");
  std::vector<double> out;
  out.reserve(variants.size());
  for (std::size_t k = 0; k < variants.size(); ++k) {
    if (variants[k].size() != reference.size()) {
      throw Error("dimension_mismatch", "quality_scores: variant " + std::to_string(k) + " dim differs from reference");
    }
    const Eigen::VectorXd v = variants[k].cast<double>();
    const double norm2 = v.squaredNorm();
    if (!(norm2 > 0.0)) throw Error("zero_norm", "quality_scores: variant " + std::to_string(k) + " has zero norm");
    // sqrt of the product so that a vector scores exactly 1 against itself.
    out.push_back(std::clamp(v.dot(ref) / std::sqrt(norm2 * ref_norm2), -1.0, 1.0));
  }
  return out;
}

io::VariantEmbeddingSet attach_quality(const io::VariantEmbeddingSet& set,
                                       const io::VariantEmbeddingSet& reference_set) {
  if (set.dim() != reference_set.dim()) {
    throw Error("dimension_mismatch", "reference embeddings have dim " + std::to_string(reference_set.dim()) +
                                          ", variants have dim " + std::to_string(set.dim()));
  }
  io::VariantEmbeddingSet out(set.kind(), set.dim());
  for (const auto& item : set.items()) {
    const auto* ref = reference_set.find(item.stimulus_id);
    if (!ref || ref->variants.empty()) {
      throw Error("stimulus_mismatch", "no reference vector for '" + item.stimulus_id + "'");
    }
    std::vector<Eigen::VectorXf> vecs;
    vecs.reserve(item.variants.size());
    for (const auto& v : item.variants) vecs.push_back(v.vector);
    std::vector<double> q;
    try {
      q = quality_scores(vecs, ref->variants.front().vector);
    } catch (const Error& e) {
      throw Error(e.code(), "'" + item.stimulus_id + "': " + e.what());
    }
    auto variants = item.variants;
    for (std::size_t k = 0; k < variants.size(); ++k) variants[k].quality = q[k];
    out.add(item.stimulus_id, std::move(variants));
  }
  return out;
}

FilterResult quality_filter(const io::VariantEmbeddingSet& set, double threshold) {
  if (!set.fully_scored()) throw Error("missing_quality", "quality_filter requires every variant to be scored");
  FilterResult res{io::VariantEmbeddingSet(set.kind(), set.dim()), {}};
  for (const auto& item : set.items()) {
    std::vector<io::Variant> kept;
    for (const auto& v : item.variants) {
      if (*v.quality >= threshold) kept.push_back(v);
    }
    if (kept.empty()) {
      res.dropped.push_back(item.stimulus_id);
      continue;
    }
    res.set.add(item.stimulus_id, std::move(kept));
  }
  return res;
}

Eigen::VectorXd concat_embedding(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  Eigen::VectorXd out(a.size() + b.size());
  out << a, b;
  return out;
}

namespace {

// Outer mean of per-word inner means, each inner mean over that word's
// first `take[w]` vectors.
Eigen::VectorXd nested_mean(std::span<const std::vector<Eigen::VectorXf>> per_word, std::span<const std::size_t> take) {
  const auto dim = per_word.front().front().size();
  Eigen::VectorXd outer = Eigen::VectorXd::Zero(dim);
  for (std::size_t w = 0; w < per_word.size(); ++w) {
    Eigen::VectorXd inner = Eigen::VectorXd::Zero(dim);
    for (std::size_t k = 0; k < take[w]; ++k) {
      if (per_word[w][k].size() != dim) throw Error("dimension_mismatch", "content word vectors are ragged");
      inner += per_word[w][k].cast<double>();
    }
    outer += inner / static_cast<double>(take[w]);
  }
  return outer / static_cast<double>(per_word.size());
}

}  // namespace

Eigen::VectorXd content_word_embedding(std::span<const std::vector<Eigen::VectorXf>> per_word, int m) {
  if (per_word.empty()) throw Error("no_content_words", "content_word_embedding: stimulus has no content words");
  if (m < 1) throw Error("invalid_argument", "content_word_embedding: m must be >= 1");
  std::vector<std::size_t> take(per_word.size(), static_cast<std::size_t>(m));
  for (std::size_t w = 0; w < per_word.size(); ++w) {
    if (per_word[w].size() < static_cast<std::size_t>(m)) {
      throw Error("insufficient_variants", "content word " + std::to_string(w) + " has " +
                                               std::to_string(per_word[w].size()) + " variants, need " +
                                               std::to_string(m));
    }
  }
  return nested_mean(per_word, take);
}

PooledResponses pool_header_responses(const io::StimulusCatalog& catalog, const io::ResponseMatrix& responses) {
  PooledResponses out;
  std::map<std::string, std::size_t> group_of;
  for (const auto& e : catalog.entries()) {
    if (!e.header) {
      out.excluded.push_back(e.stimulus_id);
      continue;
    }
    auto [it, inserted] = group_of.emplace(*e.header, out.header_ids.size());
    if (inserted) {
      out.header_ids.push_back(*e.header);
      out.members.emplace_back();
    }
    out.members[it->second].push_back(e.stimulus_id);
  }

  const Eigen::Index v = responses.n_voxels();
  out.values.resize(static_cast<Eigen::Index>(out.header_ids.size()), v);
  for (std::size_t g = 0; g < out.header_ids.size(); ++g) {
    std::vector<Eigen::Index> rows;
    for (const auto& id : out.members[g]) {
      auto r = responses.row_of(id);
      if (!r) throw Error("stimulus_mismatch", "stimulus '" + id + "' has no response row");
      rows.push_back(*r);
    }
    for (Eigen::Index j = 0; j < v; ++j) {
      double sum = 0.0;
      int count = 0;
      for (auto r : rows) {
        const float y = responses.values(r, j);
        if (std::isnan(y)) continue;
        sum += static_cast<double>(y);
        ++count;
      }
      out.values(static_cast<Eigen::Index>(g), j) =
          count ? sum / count : std::numeric_limits<double>::quiet_NaN();
    }
  }
  return out;
}

std::string_view to_string(Featurization f) {
  constexpr std::string_view names[] = {"A", "B", "C", "D", "E", "F", "G", "H"};
  return names[static_cast<int>(f)];
}

Featurization parse_featurization(std::string_view s) {
  if (s.size() == 1 && s[0] >= 'A' && s[0] <= 'H') return static_cast<Featurization>(s[0] - 'A');
  throw Error("parse_error", "featurization must be one of A..H, got '" + std::string(s) + "'");
}

io::EmbeddingKind expected_kind(Featurization f) {
  using K = io::EmbeddingKind;
  switch (f) {
    case Featurization::A: return K::original;
    case Featurization::B: return K::content_word_text;
    case Featurization::C: return K::header_text;
    case Featurization::D: return K::paraphrase;
    case Featurization::E: return K::enriched_paraphrase;
    case Featurization::F: return K::image;
    case Featurization::G: return K::content_word_image;
    case Featurization::H: return K::header_image;
  }
  return K::original;
}

bool uses_subset_size(Featurization f) {
  return f != Featurization::A && f != Featurization::B && f != Featurization::C;
}

bool uses_headers(Featurization f) { return f == Featurization::C || f == Featurization::H; }

bool uses_content_words(Featurization f) { return f == Featurization::B || f == Featurization::G; }

namespace {

Eigen::VectorXd mean_of_ordered_prefix(const io::StimulusVariants& item, int m, const OrderingStrategy& ordering) {
  const auto order = order_variants(item.variants, item.stimulus_id, ordering);
  const auto take = std::min<std::size_t>(static_cast<std::size_t>(m), order.size());
  return mean_embedding(item.variants, std::span<const std::size_t>(order.data(), take));
}

// Returns false (with a note) when the stimulus must be excluded.
bool content_word_row(const io::CatalogEntry& entry, const io::StimulusVariants& item, int m,
                      const OrderingStrategy& ordering, bool single_variant, Eigen::VectorXd& row,
                      std::string& note) {
  const std::size_t n_words = entry.content_words.size();
  std::vector<std::vector<io::Variant>> by_word(n_words);
  for (const auto& v : item.variants) {
    const int w = *v.word_index;
    if (w < 0 || static_cast<std::size_t>(w) >= n_words) {
      throw Error("invalid_word_index", "stimulus '" + entry.stimulus_id + "' has word_index " + std::to_string(w) +
                                            " but " + std::to_string(n_words) + " content words");
    }
    by_word[static_cast<std::size_t>(w)].push_back(v);
  }
  std::vector<std::vector<Eigen::VectorXf>> per_word;
  std::vector<std::size_t> take;
  for (std::size_t w = 0; w < n_words; ++w) {
    if (by_word[w].empty()) {
      note = "content word '" + entry.content_words[w] + "' has no variants";
      return false;
    }
    const auto order =
        order_variants(by_word[w], entry.stimulus_id + "#w" + std::to_string(w), ordering);
    std::vector<Eigen::VectorXf> vecs;
    vecs.reserve(order.size());
    for (auto k : order) vecs.push_back(by_word[w][k].vector);
    take.push_back(single_variant ? 1 : std::min<std::size_t>(static_cast<std::size_t>(m), vecs.size()));
    per_word.push_back(std::move(vecs));
  }
  row = nested_mean(per_word, take);
  return true;
}

}  // namespace

DesignMatrix build_design_matrix(const io::VariantEmbeddingSet& set, const io::StimulusCatalog& catalog,
                                 Featurization featurization, int m, const OrderingStrategy& ordering,
                                 const io::VariantEmbeddingSet* concat_with) {
  if (set.kind() != expected_kind(featurization)) {
    throw Error("kind_mismatch", "featurization " + std::string(to_string(featurization)) + " expects kind " +
                                     std::string(io::to_string(expected_kind(featurization))) + ", got " +
                                     std::string(io::to_string(set.kind())));
  }
  if (uses_subset_size(featurization) && m < 1) throw Error("invalid_argument", "subset size m must be >= 1");

  DesignMatrix dm;
  std::vector<Eigen::VectorXd> rows;

  auto exclude = [&](const std::string& id, const std::string& why) {
    dm.excluded.push_back(id);
    dm.notes.push_back(id + ": " + why);
  };

  if (uses_headers(featurization)) {
    std::vector<std::string> headers;
    std::set<std::string> seen;
    for (const auto& e : catalog.entries()) {
      if (e.header && seen.insert(*e.header).second) headers.push_back(*e.header);
    }
    if (headers.empty()) throw Error("missing_headers", "featurization requires headers but the catalog has none");
    for (const auto& h : headers) {
      const auto* item = set.find(h);
      if (!item) {
        exclude(h, "no header variants");
        continue;
      }
      if (featurization == Featurization::C) {
        rows.push_back(item->variants.front().vector.cast<double>());
      } else {
        rows.push_back(mean_of_ordered_prefix(*item, m, ordering));
      }
      dm.row_ids.push_back(h);
    }
  } else {
    for (const auto& e : catalog.entries()) {
      if (uses_content_words(featurization) && e.content_words.empty()) {
        exclude(e.stimulus_id, "no content words");
        continue;
      }
      const auto* item = set.find(e.stimulus_id);
      if (!item) {
        exclude(e.stimulus_id, "no variants");
        continue;
      }
      if (featurization == Featurization::A) {
        rows.push_back(item->variants.front().vector.cast<double>());
      } else if (uses_content_words(featurization)) {
        Eigen::VectorXd row;
        std::string note;
        if (!content_word_row(e, *item, m, ordering, featurization == Featurization::B, row, note)) {
          exclude(e.stimulus_id, note);
          continue;
        }
        rows.push_back(std::move(row));
      } else {
        rows.push_back(mean_of_ordered_prefix(*item, m, ordering));
      }
      dm.row_ids.push_back(e.stimulus_id);
    }
  }

  Eigen::Index width = set.dim();
  if (concat_with) {
    width += concat_with->dim();
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto* other = concat_with->find(dm.row_ids[i]);
      if (!other || other->variants.empty()) {
        throw Error("stimulus_mismatch", "concatenation set has no vector for '" + dm.row_ids[i] + "'");
      }
      rows[i] = concat_embedding(other->variants.front().vector.cast<double>(), rows[i]);
    }
  }
  dm.features.resize(static_cast<Eigen::Index>(rows.size()), width);
  for (std::size_t i = 0; i < rows.size(); ++i) dm.features.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return dm;
}

}  // namespace vencode::aggregate
