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

#include "vencode/tensorio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>
#include <tuple>

#include <json.hpp>

#include "vencode/error.hpp"

namespace vencode::io {

using nlohmann::json;

namespace {

[[noreturn]] void load_error(const Path& path, const std::string& what) {
  throw Error("load_error", path.string() + ": " + what);
}

[[noreturn]] void load_error(const Path& path, std::size_t line, const std::string& what) {
  throw Error("load_error", path.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    if (pos == std::string_view::npos) {
      out.emplace_back(s.substr(start));
      return out;
    }
    out.emplace_back(s.substr(start, pos - start));
    start = pos + 1;
  }
}

std::string read_text(const Path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const Path& path, std::string_view text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw Error("io_error", "short write to " + path.string());
}

json read_json(const Path& path) {
  const std::string text = read_text(path);
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    load_error(path, std::string("invalid JSON: ") + e.what());
  }
}

void ensure_directory(const Path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("io_error", "cannot create directory " + dir.string() + ": " + ec.message());
}

void check_field_text(std::string_view field, std::string_view value) {
  if (value.find_first_of("\t\r\n") != std::string_view::npos) {
    throw Error("invalid_argument",
                std::string(field) + " must not contain tabs or newlines: '" + std::string(value) + "'");
  }
}

std::string format_double(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double parse_double(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double x = 0.0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("parse_error", "not a number: '" + std::string(s) + "'");
  }
  return x;
}

int parse_int(std::string_view s) {
  int x = 0;
  auto res = std::from_chars(s.data(), s.data() + s.size(), x);
  if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
    throw Error("parse_error", "not an integer: '" + std::string(s) + "'");
  }
  return x;
}

}  // namespace

// ---------------------------------------------------------------------------
// StimulusCatalog
// ---------------------------------------------------------------------------

StimulusCatalog::StimulusCatalog(std::vector<CatalogEntry> entries) : entries_(std::move(entries)) {
  std::map<std::string, std::optional<std::string>> paragraph_header;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.stimulus_id.empty()) {
      throw Error("invalid_catalog", "empty stimulus_id at row " + std::to_string(i));
    }
    if (!index_.emplace(e.stimulus_id, i).second) {
      throw Error("invalid_catalog", "duplicate stimulus_id '" + e.stimulus_id + "'");
    }
    if (e.header && !e.paragraph_id) {
      throw Error("invalid_catalog", "stimulus '" + e.stimulus_id + "' has a header but no paragraph_id");
    }
    if (e.paragraph_id) {
      auto [it, inserted] = paragraph_header.emplace(*e.paragraph_id, e.header);
      if (!inserted && it->second != e.header) {
        throw Error("invalid_catalog",
                    "paragraph '" + *e.paragraph_id + "' has inconsistent headers (stimulus '" + e.stimulus_id + "')");
      }
    }
  }
}

std::optional<std::size_t> StimulusCatalog::index_of(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const CatalogEntry& StimulusCatalog::at(std::string_view id) const {
  auto idx = index_of(id);
  if (!idx) throw Error("unknown_stimulus", "stimulus '" + std::string(id) + "' not in catalog");
  return entries_[*idx];
}

std::vector<std::string> StimulusCatalog::ids() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& e : entries_) out.push_back(e.stimulus_id);
  return out;
}

bool StimulusCatalog::fully_paragraphed() const {
  return std::all_of(entries_.begin(), entries_.end(), [](const auto& e) { return e.paragraph_id.has_value(); });
}

std::vector<std::string> StimulusCatalog::paragraph_order() const {
  std::vector<std::string> order;
  std::set<std::string> seen;
  for (const auto& e : entries_) {
    if (e.paragraph_id && seen.insert(*e.paragraph_id).second) order.push_back(*e.paragraph_id);
  }
  return order;
}

std::map<std::string, std::size_t> StimulusCatalog::paragraph_sizes() const {
  std::map<std::string, std::size_t> sizes;
  for (const auto& e : entries_) {
    if (e.paragraph_id) ++sizes[*e.paragraph_id];
  }
  return sizes;
}

StimulusCatalog StimulusCatalog::restricted_to(std::span<const std::string> ids) const {
  std::set<std::string> wanted(ids.begin(), ids.end());
  std::vector<CatalogEntry> kept;
  for (const auto& e : entries_) {
    if (wanted.count(e.stimulus_id)) kept.push_back(e);
  }
  return StimulusCatalog(std::move(kept));
}

StimulusCatalog load_catalog(const Path& path) {
  const std::string text = read_text(path);
  std::vector<std::string> lines = split(text, '\n');
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
  }
  if (lines.empty() || lines[0].empty()) load_error(path, 1, "missing header row");

  const auto header = split(lines[0], '\t');
  constexpr std::string_view kColumns[] = {"stimulus_id", "text", "paragraph_id", "header", "content_words"};
  std::size_t col[5];
  for (std::size_t c = 0; c < 5; ++c) {
    auto it = std::find(header.begin(), header.end(), kColumns[c]);
    if (it == header.end()) load_error(path, 1, "missing required column '" + std::string(kColumns[c]) + "'");
    col[c] = static_cast<std::size_t>(it - header.begin());
  }

  std::vector<CatalogEntry> entries;
  std::set<std::string> seen;
  std::map<std::string, std::optional<std::string>> paragraph_header;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (lines[i].empty()) continue;
    const auto fields = split(lines[i], '\t');
    if (fields.size() != header.size()) {
      load_error(path, line_no,
                 "malformed row: expected " + std::to_string(header.size()) + " fields, got " +
                     std::to_string(fields.size()));
    }
    CatalogEntry e;
    e.stimulus_id = fields[col[0]];
    e.text = fields[col[1]];
    if (!fields[col[2]].empty()) e.paragraph_id = fields[col[2]];
    if (!fields[col[3]].empty()) e.header = fields[col[3]];
    if (!fields[col[4]].empty()) {
      for (auto& w : split(fields[col[4]], '|')) {
        if (!w.empty()) e.content_words.push_back(std::move(w));
      }
    }
    if (e.stimulus_id.empty()) load_error(path, line_no, "empty stimulus_id");
    if (!seen.insert(e.stimulus_id).second) {
      load_error(path, line_no, "duplicate stimulus_id '" + e.stimulus_id + "'");
    }
    if (e.header && !e.paragraph_id) load_error(path, line_no, "header without paragraph_id");
    if (e.paragraph_id) {
      auto [it, inserted] = paragraph_header.emplace(*e.paragraph_id, e.header);
      if (!inserted && it->second != e.header) {
        load_error(path, line_no, "inconsistent header for paragraph '" + *e.paragraph_id + "'");
      }
    }
    entries.push_back(std::move(e));
  }
  return StimulusCatalog(std::move(entries));
}

void save_catalog(const StimulusCatalog& catalog, const Path& path) {
  std::string out = "stimulus_id\ttext\tparagraph_id\theader\tcontent_words\n";
  for (const auto& e : catalog.entries()) {
    check_field_text("stimulus_id", e.stimulus_id);
    check_field_text("text", e.text);
    out += e.stimulus_id;
    out += '\t';
    out += e.text;
    out += '\t';
    if (e.paragraph_id) {
      check_field_text("paragraph_id", *e.paragraph_id);
      out += *e.paragraph_id;
    }
    out += '\t';
    if (e.header) {
      check_field_text("header", *e.header);
      out += *e.header;
    }
    out += '\t';
    for (std::size_t w = 0; w < e.content_words.size(); ++w) {
      const auto& word = e.content_words[w];
      check_field_text("content word", word);
      if (word.empty() || word.find('|') != std::string::npos) {
        throw Error("invalid_argument", "content word must be non-empty and free of '|': '" + word + "'");
      }
      if (w) out += '|';
      out += word;
    }
    out += '\n';
  }
  write_text(path, out);
}

// ---------------------------------------------------------------------------
// Binary helpers
// ---------------------------------------------------------------------------

void write_f32le(const Path& path, std::span<const float> values) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    bytes[4 * i + 0] = static_cast<char>(bits & 0xffu);
    bytes[4 * i + 1] = static_cast<char>((bits >> 8) & 0xffu);
    bytes[4 * i + 2] = static_cast<char>((bits >> 16) & 0xffu);
    bytes[4 * i + 3] = static_cast<char>((bits >> 24) & 0xffu);
  }
  write_text(path, bytes);
}

std::vector<float> read_f32le(const Path& path, std::size_t expected_count) {
  std::error_code ec;
  const auto size = std::filesystem::file_size(path, ec);
  if (ec) throw Error("io_error", "cannot stat " + path.string() + ": " + ec.message());
  if (size != expected_count * 4) {
    throw Error("size_mismatch", path.string() + ": expected " + std::to_string(expected_count * 4) +
                                     " bytes from manifest, found " + std::to_string(size));
  }
  const std::string bytes = read_text(path);
  std::vector<float> out(expected_count);
  for (std::size_t i = 0; i < expected_count; ++i) {
    const auto b = [&](std::size_t k) { return static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + k])); };
    const std::uint32_t bits = b(0) | (b(1) << 8) | (b(2) << 16) | (b(3) << 24);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

// ---------------------------------------------------------------------------
// VariantEmbeddingSet
// ---------------------------------------------------------------------------

namespace {

struct KindName {
  EmbeddingKind kind;
  std::string_view name;
};

constexpr KindName kKindNames[] = {
    {EmbeddingKind::original, "original"},
    {EmbeddingKind::paraphrase, "paraphrase"},
    {EmbeddingKind::enriched_paraphrase, "enriched_paraphrase"},
    {EmbeddingKind::image, "image"},
    {EmbeddingKind::content_word_image, "content_word_image"},
    {EmbeddingKind::header_image, "header_image"},
    {EmbeddingKind::content_word_text, "content_word_text"},
    {EmbeddingKind::header_text, "header_text"},
};

}  // namespace

std::string_view to_string(EmbeddingKind kind) {
  for (const auto& kn : kKindNames) {
    if (kn.kind == kind) return kn.name;
  }
  return "unknown";
}

EmbeddingKind parse_embedding_kind(std::string_view s) {
  for (const auto& kn : kKindNames) {
    if (kn.name == s) return kn.kind;
  }
  throw Error("parse_error", "unknown embedding kind '" + std::string(s) + "'");
}

bool is_content_word_kind(EmbeddingKind kind) {
  return kind == EmbeddingKind::content_word_image || kind == EmbeddingKind::content_word_text;
}

bool is_header_kind(EmbeddingKind kind) {
  return kind == EmbeddingKind::header_image || kind == EmbeddingKind::header_text;
}

bool Variant::operator==(const Variant& o) const {
  if (vector.size() != o.vector.size() || quality != o.quality || word_index != o.word_index) return false;
  return vector.size() == 0 ||
         std::memcmp(vector.data(), o.vector.data(), static_cast<std::size_t>(vector.size()) * sizeof(float)) == 0;
}

VariantEmbeddingSet::VariantEmbeddingSet(EmbeddingKind kind, int dim) : kind_(kind), dim_(dim) {
  if (dim <= 0) throw Error("invalid_argument", "embedding dim must be positive, got " + std::to_string(dim));
}

std::size_t VariantEmbeddingSet::total_variants() const {
  std::size_t n = 0;
  for (const auto& it : items_) n += it.variants.size();
  return n;
}

void VariantEmbeddingSet::add(std::string stimulus_id, std::vector<Variant> variants) {
  if (dim_ <= 0) throw Error("invalid_argument", "embedding set has no dimension");
  if (stimulus_id.empty()) throw Error("invalid_argument", "empty stimulus_id");
  if (index_.count(stimulus_id)) throw Error("invalid_argument", "duplicate stimulus_id '" + stimulus_id + "'");
  if (kind_ == EmbeddingKind::original && variants.size() != 1) {
    throw Error("invalid_argument", "kind=original requires exactly 1 variant for '" + stimulus_id + "', got " +
                                        std::to_string(variants.size()));
  }
  for (std::size_t k = 0; k < variants.size(); ++k) {
    const auto& v = variants[k];
    if (v.vector.size() != dim_) {
      throw Error("dimension_mismatch", "variant " + std::to_string(k) + " of '" + stimulus_id + "' has dim " +
                                            std::to_string(v.vector.size()) + ", expected " + std::to_string(dim_));
    }
    if (!v.vector.allFinite()) {
      throw Error("non_finite", "variant " + std::to_string(k) + " of '" + stimulus_id + "' contains NaN/Inf");
    }
    if (v.quality && !(*v.quality >= -1.0 && *v.quality <= 1.0)) {
      throw Error("invalid_argument", "quality outside [-1, 1] for '" + stimulus_id + "'");
    }
    if (is_content_word_kind(kind_) && !v.word_index) {
      throw Error("invalid_argument", "content-word variant without word_index for '" + stimulus_id + "'");
    }
  }
  index_.emplace(stimulus_id, items_.size());
  items_.push_back({std::move(stimulus_id), std::move(variants)});
}

const StimulusVariants* VariantEmbeddingSet::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &items_[it->second];
}

StimulusVariants* VariantEmbeddingSet::find_mutable(std::string_view id) {
  auto it = index_.find(std::string(id));
  return it == index_.end() ? nullptr : &items_[it->second];
}

std::vector<std::string> VariantEmbeddingSet::ids() const {
  std::vector<std::string> out;
  out.reserve(items_.size());
  for (const auto& it : items_) out.push_back(it.stimulus_id);
  return out;
}

bool VariantEmbeddingSet::fully_scored() const {
  for (const auto& it : items_) {
    for (const auto& v : it.variants) {
      if (!v.quality) return false;
    }
  }
  return true;
}

bool VariantEmbeddingSet::operator==(const VariantEmbeddingSet& o) const {
  if (kind_ != o.kind_ || dim_ != o.dim_ || items_.size() != o.items_.size()) return false;
  for (std::size_t i = 0; i < items_.size(); ++i) {
    if (items_[i].stimulus_id != o.items_[i].stimulus_id || items_[i].variants != o.items_[i].variants) return false;
  }
  return true;
}

VariantEmbeddingSet load_embeddings(const Path& dir) {
  const Path manifest_path = dir / "manifest.json";
  const json m = read_json(manifest_path);
  try {
    if (m.at("format").get<std::string>() != "EMB1") load_error(manifest_path, "format must be EMB1");
    if (m.value("dtype", std::string("f32le")) != "f32le") load_error(manifest_path, "dtype must be f32le");
    const auto kind = parse_embedding_kind(m.at("kind").get<std::string>());
    const auto dim = m.at("dim").get<long long>();
    if (dim <= 0) throw Error("invalid_manifest", manifest_path.string() + ": dim must be positive");
    if (dim > std::numeric_limits<int>::max()) load_error(manifest_path, "dim too large");

    const auto& items = m.at("items");
    std::size_t total = 0;
    for (const auto& it : items) {
      const auto n = it.at("n_variants").get<long long>();
      if (n < 1) load_error(manifest_path, "n_variants must be >= 1 for '" + it.at("stimulus_id").get<std::string>() + "'");
      total += static_cast<std::size_t>(n);
    }
    const std::vector<float> data = read_f32le(dir / "data.f32", total * static_cast<std::size_t>(dim));
    for (float x : data) {
      if (!std::isfinite(x)) throw Error("non_finite", (dir / "data.f32").string() + ": NaN/Inf in embedding data");
    }

    VariantEmbeddingSet set(kind, static_cast<int>(dim));
    std::size_t offset = 0;
    for (const auto& it : items) {
      const auto id = it.at("stimulus_id").get<std::string>();
      const auto n = static_cast<std::size_t>(it.at("n_variants").get<long long>());
      std::vector<Variant> variants(n);
      if (it.contains("quality") && !it["quality"].is_null()) {
        const auto& q = it["quality"];
        if (!q.is_array() || q.size() != n) {
          throw Error("invalid_manifest",
                      manifest_path.string() + ": quality list length != n_variants for '" + id + "'");
        }
        for (std::size_t k = 0; k < n; ++k) {
          if (!q[k].is_null()) variants[k].quality = q[k].get<double>();
        }
      }
      if (it.contains("word_index") && !it["word_index"].is_null()) {
        const auto& w = it["word_index"];
        if (!w.is_array() || w.size() != n) {
          throw Error("invalid_manifest",
                      manifest_path.string() + ": word_index list length != n_variants for '" + id + "'");
        }
        for (std::size_t k = 0; k < n; ++k) variants[k].word_index = w[k].get<int>();
      }
      for (std::size_t k = 0; k < n; ++k) {
        variants[k].vector = Eigen::Map<const Eigen::VectorXf>(data.data() + offset, dim);
        offset += static_cast<std::size_t>(dim);
      }
      set.add(id, std::move(variants));
    }
    return set;
  } catch (const json::exception& e) {
    load_error(manifest_path, std::string("malformed manifest: ") + e.what());
  }
}

void save_embeddings(const VariantEmbeddingSet& set, const Path& dir) {
  ensure_directory(dir);
  json items = json::array();
  std::vector<float> data;
  data.reserve(set.total_variants() * static_cast<std::size_t>(set.dim()));
  for (const auto& it : set.items()) {
    json item = {{"stimulus_id", it.stimulus_id}, {"n_variants", it.variants.size()}};
    const bool any_quality =
        std::any_of(it.variants.begin(), it.variants.end(), [](const Variant& v) { return v.quality.has_value(); });
    const bool any_word =
        std::any_of(it.variants.begin(), it.variants.end(), [](const Variant& v) { return v.word_index.has_value(); });
    if (any_quality) {
      json q = json::array();
      for (const auto& v : it.variants) q.push_back(v.quality ? json(*v.quality) : json(nullptr));
      item["quality"] = std::move(q);
    }
    if (any_word) {
      json w = json::array();
      for (const auto& v : it.variants) {
        if (!v.word_index) throw Error("invalid_argument", "mixed word_index presence for '" + it.stimulus_id + "'");
        w.push_back(*v.word_index);
      }
      item["word_index"] = std::move(w);
    }
    for (const auto& v : it.variants) data.insert(data.end(), v.vector.data(), v.vector.data() + v.vector.size());
    items.push_back(std::move(item));
  }
  const json manifest = {{"format", "EMB1"},
                         {"kind", std::string(to_string(set.kind()))},
                         {"dim", set.dim()},
                         {"dtype", "f32le"},
                         {"items", std::move(items)}};
  write_f32le(dir / "data.f32", data);
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// ResponseMatrix
// ---------------------------------------------------------------------------

MissingMask ResponseMatrix::missing_mask() const { return values.array().isNaN(); }

std::vector<Eigen::Index> ResponseMatrix::degenerate_voxels() const {
  std::vector<Eigen::Index> out;
  const MissingMask mask = missing_mask();
  for (Eigen::Index v = 0; v < values.cols(); ++v) {
    if (mask.col(v).all()) out.push_back(v);
  }
  return out;
}

std::optional<Eigen::Index> ResponseMatrix::row_of(std::string_view id) const {
  auto it = std::find(stimulus_ids.begin(), stimulus_ids.end(), id);
  if (it == stimulus_ids.end()) return std::nullopt;
  return static_cast<Eigen::Index>(it - stimulus_ids.begin());
}

void ResponseMatrix::validate() const {
  if (values.cols() == 0) throw Error("degenerate", "degenerate response matrix: zero voxels");
  if (static_cast<std::size_t>(values.rows()) != stimulus_ids.size()) {
    throw Error("shape_mismatch", "response matrix has " + std::to_string(values.rows()) + " rows but " +
                                      std::to_string(stimulus_ids.size()) + " stimulus ids");
  }
  std::set<std::string> seen;
  for (const auto& id : stimulus_ids) {
    if (id.empty()) throw Error("invalid_argument", "empty stimulus id in response matrix");
    if (!seen.insert(id).second) throw Error("invalid_argument", "duplicate stimulus id '" + id + "' in responses");
  }
}

bool ResponseMatrix::operator==(const ResponseMatrix& o) const {
  if (stimulus_ids != o.stimulus_ids || subject_id != o.subject_id || repeat_index != o.repeat_index) return false;
  if (values.rows() != o.values.rows() || values.cols() != o.values.cols()) return false;
  return values.size() == 0 ||
         std::memcmp(values.data(), o.values.data(), static_cast<std::size_t>(values.size()) * sizeof(float)) == 0;
}

ResponseMatrix load_responses(const Path& dir) {
  const Path manifest_path = dir / "manifest.json";
  const json m = read_json(manifest_path);
  try {
    if (m.at("format").get<std::string>() != "RESP1") load_error(manifest_path, "format must be RESP1");
    ResponseMatrix r;
    r.stimulus_ids = m.at("stimulus_ids").get<std::vector<std::string>>();
    const auto n_voxels = m.at("n_voxels").get<long long>();
    if (n_voxels <= 0) throw Error("degenerate", "degenerate response matrix: n_voxels=" + std::to_string(n_voxels));
    r.subject_id = m.value("subject_id", std::string());
    if (m.contains("repeat_index") && !m["repeat_index"].is_null()) r.repeat_index = m["repeat_index"].get<int>();

    const auto n = static_cast<Eigen::Index>(r.stimulus_ids.size());
    const auto v = static_cast<Eigen::Index>(n_voxels);
    const auto data = read_f32le(dir / "data.f32", static_cast<std::size_t>(n * v));
    using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    r.values = Eigen::Map<const RowMajor>(data.data(), n, v);
    r.validate();
    return r;
  } catch (const json::exception& e) {
    load_error(manifest_path, std::string("malformed manifest: ") + e.what());
  }
}

void save_responses(const ResponseMatrix& responses, const Path& dir) {
  responses.validate();
  ensure_directory(dir);
  using RowMajor = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor rm = responses.values;
  write_f32le(dir / "data.f32", std::span<const float>(rm.data(), static_cast<std::size_t>(rm.size())));
  json manifest = {{"format", "RESP1"},
                   {"dtype", "f32le"},
                   {"stimulus_ids", responses.stimulus_ids},
                   {"n_voxels", responses.n_voxels()},
                   {"subject_id", responses.subject_id}};
  if (responses.repeat_index) manifest["repeat_index"] = *responses.repeat_index;
  write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Results
// ---------------------------------------------------------------------------

std::string_view to_string(Ordering ordering) {
  switch (ordering) {
    case Ordering::random: return "random";
    case Ordering::quality_desc: return "quality_desc";
    case Ordering::not_applicable: return "n/a";
  }
  return "n/a";
}

Ordering parse_ordering(std::string_view s) {
  if (s == "random") return Ordering::random;
  if (s == "quality_desc" || s == "quality") return Ordering::quality_desc;
  if (s == "n/a") return Ordering::not_applicable;
  throw Error("parse_error", "unknown ordering '" + std::string(s) + "'");
}

bool ResultRecord::operator==(const ResultRecord& o) const {
  auto same_double = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
  if (experiment != o.experiment || featurization != o.featurization || model_tag != o.model_tag ||
      split_id != o.split_id || m != o.m || ordering != o.ordering || !same_double(mean_r, o.mean_r) ||
      ceiling_normalized != o.ceiling_normalized || per_voxel_r.has_value() != o.per_voxel_r.has_value()) {
    return false;
  }
  if (per_voxel_r) {
    if (per_voxel_r->size() != o.per_voxel_r->size()) return false;
    for (std::size_t i = 0; i < per_voxel_r->size(); ++i) {
      if (!same_double((*per_voxel_r)[i], (*o.per_voxel_r)[i])) return false;
    }
  }
  return true;
}

Path results_sidecar_path(const Path& csv_path) {
  Path p = csv_path;
  p.replace_extension(".json");
  return p;
}

std::vector<ResultRecord> canonical_order(std::span<const ResultRecord> records) {
  std::vector<ResultRecord> out(records.begin(), records.end());
  std::stable_sort(out.begin(), out.end(), [](const ResultRecord& a, const ResultRecord& b) {
    return std::tie(a.experiment, a.featurization, a.model_tag, a.split_id, a.m) <
           std::tie(b.experiment, b.featurization, b.model_tag, b.split_id, b.m);
  });
  return out;
}

namespace {

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

// RFC 4180 style row parser over the whole document.
std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false;
  bool row_has_content = false;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      row_has_content = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      row_has_content = true;
    } else if (c == '\n' || c == '\r') {
      if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
      if (row_has_content || !field.empty()) {
        row.push_back(std::move(field));
        rows.push_back(std::move(row));
      }
      row.clear();
      field.clear();
      row_has_content = false;
    } else {
      field += c;
      row_has_content = true;
    }
  }
  if (quoted) throw Error("parse_error", "unterminated quoted CSV field");
  if (row_has_content || !field.empty()) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

json record_to_json(const ResultRecord& r) {
  auto num = [](double x) { return std::isfinite(x) ? json(x) : json(nullptr); };
  json j = {{"experiment", r.experiment},
            {"featurization", r.featurization},
            {"model_tag", r.model_tag},
            {"split_id", r.split_id},
            {"m", r.m},
            {"ordering", std::string(to_string(r.ordering))},
            {"mean_r", num(r.mean_r)},
            {"ceiling_normalized", r.ceiling_normalized}};
  if (r.per_voxel_r) {
    json pv = json::array();
    for (double x : *r.per_voxel_r) pv.push_back(num(x));
    j["per_voxel_r"] = std::move(pv);
  }
  return j;
}

}  // namespace

void save_results(std::span<const ResultRecord> records, const Path& csv_path) {
  if (records.empty()) throw Error("invalid_argument", "save_results: no records");
  const auto ordered = canonical_order(records);
  std::string csv(kResultsCsvHeader);
  csv += '\n';
  json sidecar = {{"format", "RESULTS1"}, {"records", json::array()}};
  for (const auto& r : ordered) {
    if (r.m < 1) throw Error("invalid_argument", "result record with subset size < 1");
    if (!r.ceiling_normalized && !std::isnan(r.mean_r) && (r.mean_r < -1.0 || r.mean_r > 1.0)) {
      throw Error("invalid_argument", "result record mean_r outside [-1, 1]");
    }
    csv += csv_field(r.experiment) + ',' + csv_field(r.featurization) + ',' + csv_field(r.model_tag) + ',' +
           csv_field(r.split_id) + ',' + std::to_string(r.m) + ',' + std::string(to_string(r.ordering)) + ',' +
           format_double(r.mean_r) + ',' + (r.ceiling_normalized ? "true" : "false") + '\n';
    sidecar["records"].push_back(record_to_json(r));
  }
  if (!csv_path.parent_path().empty()) ensure_directory(csv_path.parent_path());
  write_text(csv_path, csv);
  write_text(results_sidecar_path(csv_path), sidecar.dump(1) + "\n");
}

std::vector<ResultRecord> load_results(const Path& csv_path) {
  const auto rows = parse_csv(read_text(csv_path));
  if (rows.empty()) load_error(csv_path, 1, "empty results file");
  const auto expected_header = split(kResultsCsvHeader, ',');
  if (rows[0] != expected_header) load_error(csv_path, 1, "unexpected results header");

  std::vector<ResultRecord> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != expected_header.size()) load_error(csv_path, i + 1, "malformed results row");
    ResultRecord r;
    r.experiment = f[0];
    r.featurization = f[1];
    r.model_tag = f[2];
    r.split_id = f[3];
    try {
      r.m = parse_int(f[4]);
      r.ordering = parse_ordering(f[5]);
      r.mean_r = parse_double(f[6]);
    } catch (const Error& e) {
      load_error(csv_path, i + 1, e.what());
    }
    if (f[7] != "true" && f[7] != "false") load_error(csv_path, i + 1, "ceiling_normalized must be true/false");
    r.ceiling_normalized = f[7] == "true";
    out.push_back(std::move(r));
  }

  const Path sidecar_path = results_sidecar_path(csv_path);
  if (std::filesystem::exists(sidecar_path)) {
    const json sidecar = read_json(sidecar_path);
    const auto& recs = sidecar.at("records");
    if (recs.size() != out.size()) load_error(sidecar_path, "record count differs from CSV");
    for (std::size_t i = 0; i < out.size(); ++i) {
      const auto& j = recs[i];
      if (j.at("split_id").get<std::string>() != out[i].split_id || j.at("m").get<int>() != out[i].m) {
        load_error(sidecar_path, "record " + std::to_string(i) + " does not match CSV row");
      }
      if (j.contains("per_voxel_r")) {
        std::vector<double> pv;
        for (const auto& x : j["per_voxel_r"]) {
          pv.push_back(x.is_null() ? std::numeric_limits<double>::quiet_NaN() : x.get<double>());
        }
        out[i].per_voxel_r = std::move(pv);
      }
    }
  }
  return out;
}

}  // namespace vencode::io
