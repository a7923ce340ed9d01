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
#include <set>
#include <span>
#include <string>
#include <vector>

#include "vencode/tensorio.hpp"

namespace vencode::splits {

struct Split {
  std::string split_id;
  std::vector<std::string> train;
  std::vector<std::string> validation;
  std::vector<std::string> test;
  bool grouped_by_paragraph = false;
  std::uint64_t seed = 0;

  bool operator==(const Split&) const = default;
};

struct Fractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;

  void validate() const;
};

/**
 * Seeded train/validation/test splits. Assignment units are paragraphs when
 * `group_by_paragraph` is set (the catalog must then give every stimulus a
 * paragraph_id) and stimuli otherwise. Test and validation take
 * round(fraction * units) units each; train takes the rest. Id lists keep
 * catalog order.
 */
std::vector<Split> make_random_splits(const io::StimulusCatalog& catalog, int n_splits, const Fractions& fractions,
                                      std::uint64_t seed, bool group_by_paragraph);

/**
 * Test set = first catalog row of each selected paragraph. With more than
 * `n_test_paragraphs` paragraphs a seeded sample is used. Every other
 * stimulus is training data, minus a seeded 10% validation carve-out.
 */
Split make_first_sentence_split(const io::StimulusCatalog& catalog, std::uint64_t seed = 0,
                                std::size_t n_test_paragraphs = 63);

/// Paragraph ids appearing in two or more partitions. Empty means no leakage.
std::set<std::string> verify_no_leakage(const Split& split, const io::StimulusCatalog& catalog);

/// Throws unless the partitions are pairwise disjoint and cover `universe`.
void check_partition(const Split& split, std::span<const std::string> universe);

std::string splits_to_json(std::span<const Split> splits);
std::vector<Split> splits_from_json(const std::string& text);
void save_splits(std::span<const Split> splits, const io::Path& path);
std::vector<Split> load_splits(const io::Path& path);

}  // namespace vencode::splits
