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

#include "vencode/splits.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "vencode/error.hpp"
#include "vencode/rng.hpp"

namespace vencode::splits {

using nlohmann::json;

void Fractions::validate() const {
  if (!(train > 0.0 && validation > 0.0 && test > 0.0)) {
    throw Error("invalid_argument", "split fractions must be positive");
  }
  if (std::abs(train + validation + test - 1.0) > 1e-9) {
    throw Error("invalid_argument", "split fractions must sum to 1");
  }
}

namespace {

// Units in catalog order, each a list of stimulus indices.
std::vector<std::vector<std::size_t>> assignment_units(const io::StimulusCatalog& catalog, bool group_by_paragraph) {
  std::vector<std::vector<std::size_t>> units;
  if (!group_by_paragraph) {
    for (std::size_t i = 0; i < catalog.size(); ++i) units.push_back({i});
    return units;
  }
  if (!catalog.fully_paragraphed()) {
    throw Error("missing_paragraphs", "group_by_paragraph requires a paragraph_id on every stimulus");
  }
  std::map<std::string, std::size_t> unit_of;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const auto& pid = *catalog.entries()[i].paragraph_id;
    auto [it, inserted] = unit_of.emplace(pid, units.size());
    if (inserted) units.emplace_back();
    units[it->second].push_back(i);
  }
  return units;
}

std::vector<std::string> ids_in_catalog_order(const io::StimulusCatalog& catalog, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  std::vector<std::string> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(catalog.entries()[i].stimulus_id);
  return out;
}

}  // namespace

std::vector<Split> make_random_splits(const io::StimulusCatalog& catalog, int n_splits, const Fractions& fractions,
                                      std::uint64_t seed, bool group_by_paragraph) {
  fractions.validate();
  if (n_splits < 1) throw Error("invalid_argument", "n_splits must be >= 1");
  const auto units = assignment_units(catalog, group_by_paragraph);
  const auto n_units = static_cast<double>(units.size());
  const auto n_test = static_cast<std::size_t>(std::llround(fractions.test * n_units));
  const auto n_val = static_cast<std::size_t>(std::llround(fractions.validation * n_units));
  if (n_test == 0 || n_val == 0 || n_test + n_val >= units.size()) {
    throw Error("empty_partition", "cannot form non-empty partitions from " + std::to_string(units.size()) +
                                       " assignment units with the requested fractions");
  }

  std::vector<Split> out;
  for (int s = 0; s < n_splits; ++s) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s)));
    const auto perm = random_permutation(units.size(), rng);
    std::vector<std::size_t> test, val, train;
    for (std::size_t k = 0; k < perm.size(); ++k) {
      auto& dest = k < n_test ? test : (k < n_test + n_val ? val : train);
      dest.insert(dest.end(), units[perm[k]].begin(), units[perm[k]].end());
    }
    Split sp;
    sp.split_id = "split" + std::to_string(s);
    sp.train = ids_in_catalog_order(catalog, std::move(train));
    sp.validation = ids_in_catalog_order(catalog, std::move(val));
    sp.test = ids_in_catalog_order(catalog, std::move(test));
    sp.grouped_by_paragraph = group_by_paragraph;
    sp.seed = seed;
    out.push_back(std::move(sp));
  }
  return out;
}

Split make_first_sentence_split(const io::StimulusCatalog& catalog, std::uint64_t seed, std::size_t n_test_paragraphs) {
  auto paragraphs = catalog.paragraph_order();
  if (paragraphs.empty()) throw Error("missing_paragraphs", "first-sentence split needs paragraphs");

  if (paragraphs.size() > n_test_paragraphs) {
    Rng rng(derive_seed(seed, "first_sentence_paragraphs"));
    const auto perm = random_permutation(paragraphs.size(), rng);
    std::vector<std::size_t> chosen(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test_paragraphs));
    std::sort(chosen.begin(), chosen.end());
    std::vector<std::string> picked;
    for (auto i : chosen) picked.push_back(paragraphs[i]);
    paragraphs = std::move(picked);
  }
  std::set<std::string> selected(paragraphs.begin(), paragraphs.end());

  std::vector<std::size_t> test, rest;
  std::set<std::string> taken;
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    const auto& e = catalog.entries()[i];
    if (e.paragraph_id && selected.count(*e.paragraph_id) && taken.insert(*e.paragraph_id).second) {
      test.push_back(i);
    } else {
      rest.push_back(i);
    }
  }

  Rng rng(derive_seed(seed, "first_sentence_validation"));
  const auto perm = random_permutation(rest.size(), rng);
  const auto n_val = static_cast<std::size_t>(std::llround(0.1 * static_cast<double>(rest.size())));
  std::vector<std::size_t> val, train;
  for (std::size_t k = 0; k < perm.size(); ++k) (k < n_val ? val : train).push_back(rest[perm[k]]);

  Split sp;
  sp.split_id = "first_sentence";
  sp.train = ids_in_catalog_order(catalog, std::move(train));
  sp.validation = ids_in_catalog_order(catalog, std::move(val));
  sp.test = ids_in_catalog_order(catalog, std::move(test));
  sp.grouped_by_paragraph = false;
  sp.seed = seed;
  return sp;
}

std::set<std::string> verify_no_leakage(const Split& split, const io::StimulusCatalog& catalog) {
  std::map<std::string, int> seen_in;  // paragraph -> bitmask of partitions
  const std::vector<std::string>* parts[] = {&split.train, &split.validation, &split.test};
  for (int p = 0; p < 3; ++p) {
    for (const auto& id : *parts[p]) {
      const auto idx = catalog.index_of(id);
      if (!idx) continue;
      const auto& pid = catalog.entries()[*idx].paragraph_id;
      if (pid) seen_in[*pid] |= 1 << p;
    }
  }
  std::set<std::string> leaky;
  for (const auto& [pid, mask] : seen_in) {
    if (mask != 1 && mask != 2 && mask != 4) leaky.insert(pid);
  }
  return leaky;
}

void check_partition(const Split& split, std::span<const std::string> universe) {
  std::map<std::string, int> count;
  for (const auto* part : {&split.train, &split.validation, &split.test}) {
    for (const auto& id : *part) ++count[id];
  }
  for (const auto& [id, c] : count) {
    if (c > 1) throw Error("invalid_split", "split '" + split.split_id + "': '" + id + "' is in several partitions");
  }
  std::set<std::string> u(universe.begin(), universe.end());
  for (const auto& [id, c] : count) {
    if (!u.count(id)) throw Error("invalid_split", "split '" + split.split_id + "': unknown stimulus '" + id + "'");
  }
  for (const auto& id : u) {
    if (!count.count(id)) throw Error("invalid_split", "split '" + split.split_id + "' does not cover '" + id + "'");
  }
}

std::string splits_to_json(std::span<const Split> splits) {
  json arr = json::array();
  for (const auto& s : splits) {
    arr.push_back({{"split_id", s.split_id},
                   {"train", s.train},
                   {"validation", s.validation},
                   {"test", s.test},
                   {"grouped_by_paragraph", s.grouped_by_paragraph},
                   {"seed", s.seed}});
  }
  return json{{"format", "SPLITS1"}, {"splits", arr}}.dump(2) + "\n";
}

std::vector<Split> splits_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    const json& arr = j.is_array() ? j : j.at("splits");
    std::vector<Split> out;
    for (const auto& s : arr) {
      Split sp;
      sp.split_id = s.at("split_id").get<std::string>();
      sp.train = s.at("train").get<std::vector<std::string>>();
      sp.validation = s.value("validation", std::vector<std::string>{});
      sp.test = s.at("test").get<std::vector<std::string>>();
      sp.grouped_by_paragraph = s.value("grouped_by_paragraph", false);
      sp.seed = s.value("seed", std::uint64_t{0});
      out.push_back(std::move(sp));
    }
    return out;
  } catch (const json::exception& e) {
    throw Error("parse_error", std::string("invalid splits JSON: ") + e.what());
  }
}

void save_splits(std::span<const Split> splits, const io::Path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << splits_to_json(splits);
}

std::vector<Split> load_splits(const io::Path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return splits_from_json(ss.str());
}

}  // namespace vencode::splits
