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

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <json.hpp>

#include "oracles.hpp"
#include "vencode/error.hpp"
#include "vencode/tensorio.hpp"

using namespace vencode;
using nlohmann::json;

namespace {

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

void write_floats(const std::filesystem::path& p, const std::vector<float>& values, std::size_t drop_bytes = 0) {
  std::string bytes(values.size() * 4, '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t u;
    std::memcpy(&u, &values[i], 4);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((u >> (8 * b)) & 0xff);
  }
  bytes.resize(bytes.size() - drop_bytes);
  write_file(p, bytes);
}

std::string error_code(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return "";
}

std::string error_message(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Catalog, TwoRowsKeepOrder) {
  gen::TempDir dir;
  write_file(dir / "c.tsv",
             "stimulus_id\ttext\tparagraph_id\theader\tcontent_words\n"
             "s1\tThe boy is eating pancakes.\tp1\tbreakfast\tboy|pancakes\n"
             "s2\tHe likes syrup, a lot.\tp1\tbreakfast\t\n");
  const auto c = io::load_catalog(dir / "c.tsv");
  ASSERT_EQ(c.size(), 2u);
  EXPECT_EQ(c.ids(), (std::vector<std::string>{"s1", "s2"}));
  EXPECT_EQ(c.at("s1").content_words, (std::vector<std::string>{"boy", "pancakes"}));
  EXPECT_TRUE(c.at("s2").content_words.empty());
  EXPECT_EQ(c.at("s2").text, "He likes syrup, a lot.");
  EXPECT_EQ(*c.at("s1").header, "breakfast");
}

TEST(Catalog, ColumnsInAnyOrder) {
  gen::TempDir dir;
  write_file(dir / "c.tsv",
             "content_words\theader\ttext\tstimulus_id\tparagraph_id\n"
             "cat\t\tA cat.\tx\t\n");
  const auto c = io::load_catalog(dir / "c.tsv");
  EXPECT_EQ(c.at("x").text, "A cat.");
  EXPECT_FALSE(c.at("x").paragraph_id.has_value());
  EXPECT_FALSE(c.at("x").header.has_value());
}

TEST(Catalog, DuplicateIdNamesSecondLine) {
  gen::TempDir dir;
  write_file(dir / "c.tsv",
             "stimulus_id\ttext\tparagraph_id\theader\tcontent_words\n"
             "s1\ta\t\t\t\n"
             "s2\tb\t\t\t\n"
             "s1\tc\t\t\t\n");
  const auto msg = error_message([&] { io::load_catalog(dir / "c.tsv"); });
  EXPECT_NE(msg.find(":4:"), std::string::npos) << msg;
  EXPECT_NE(msg.find("duplicate"), std::string::npos) << msg;
}

TEST(Catalog, MissingColumnAndMalformedRow) {
  gen::TempDir dir;
  write_file(dir / "a.tsv", "stimulus_id\ttext\tparagraph_id\theader\ns1\ta\t\t\n");
  EXPECT_NE(error_message([&] { io::load_catalog(dir / "a.tsv"); }).find("content_words"), std::string::npos);
  write_file(dir / "b.tsv", "stimulus_id\ttext\tparagraph_id\theader\tcontent_words\ns1\ta\t\n");
  EXPECT_NE(error_message([&] { io::load_catalog(dir / "b.tsv"); }).find(":2:"), std::string::npos);
}

TEST(Catalog, HeaderNeedsParagraphAndParagraphsShareHeader) {
  EXPECT_THROW(io::StimulusCatalog({{"s1", "a", std::nullopt, "h", {}}}), Error);
  EXPECT_THROW(io::StimulusCatalog({{"s1", "a", "p", "h1", {}}, {"s2", "b", "p", "h2", {}}}), Error);
  EXPECT_THROW(io::StimulusCatalog({{"", "a", std::nullopt, std::nullopt, {}}}), Error);
  EXPECT_NO_THROW(io::StimulusCatalog({{"s1", "a", "p", "h", {}}, {"s2", "b", "p", "h", {}}}));
}

TEST(Catalog, RoundTripAndParagraphHelpers) {
  gen::TempDir dir;
  const io::StimulusCatalog c({{"a", "t1", "p1", "H", {"w"}},
                               {"b", "t2", "p1", "H", {}},
                               {"c", "t3", "p2", std::nullopt, {"x", "y"}}});
  io::save_catalog(c, dir / "c.tsv");
  EXPECT_EQ(io::load_catalog(dir / "c.tsv"), c);
  EXPECT_EQ(c.paragraph_order(), (std::vector<std::string>{"p1", "p2"}));
  EXPECT_EQ(c.paragraph_sizes().at("p1"), 2u);
  EXPECT_TRUE(c.fully_paragraphed());
  const std::vector<std::string> keep = {"c", "a"};
  EXPECT_EQ(c.restricted_to(keep).ids(), (std::vector<std::string>{"a", "c"}));
}

TEST(Embeddings, ManifestSizeArithmetic) {
  gen::TempDir dir;
  const json m = {{"format", "EMB1"},
                  {"kind", "image"},
                  {"dim", 3},
                  {"dtype", "f32le"},
                  {"items", {{{"stimulus_id", "s1"}, {"n_variants", 2}}}}};
  std::filesystem::create_directories(dir / "ok");
  write_file(dir / "ok" / "manifest.json", m.dump());
  write_floats(dir / "ok" / "data.f32", {1, 2, 3, 4, 5, 6});
  const auto set = io::load_embeddings(dir / "ok");
  ASSERT_EQ(set.find("s1")->variants.size(), 2u);
  EXPECT_EQ(set.find("s1")->variants[1].vector[2], 6.0f);
  EXPECT_EQ(set.kind(), io::EmbeddingKind::image);

  std::filesystem::create_directories(dir / "short");
  write_file(dir / "short" / "manifest.json", m.dump());
  write_floats(dir / "short" / "data.f32", {1, 2, 3, 4, 5, 6}, 1);  // 23 bytes
  EXPECT_EQ(error_code([&] { io::load_embeddings(dir / "short"); }), "size_mismatch");
}

TEST(Embeddings, RejectsBadManifests) {
  gen::TempDir dir;
  auto attempt = [&](const json& m, const std::vector<float>& data) {
    std::filesystem::remove_all(dir / "x");
    std::filesystem::create_directories(dir / "x");
    write_file(dir / "x" / "manifest.json", m.dump());
    write_floats(dir / "x" / "data.f32", data);
    return error_code([&] { io::load_embeddings(dir / "x"); });
  };
  json base = {{"format", "EMB1"}, {"kind", "image"}, {"dim", 2}, {"dtype", "f32le"},
               {"items", {{{"stimulus_id", "s1"}, {"n_variants", 2}}}}};
  auto bad_dim = base;
  bad_dim["dim"] = 0;
  EXPECT_EQ(attempt(bad_dim, {}), "invalid_manifest");
  EXPECT_EQ(attempt(base, {1, std::nanf(""), 3, 4}), "non_finite");
  EXPECT_EQ(attempt(base, {1, std::numeric_limits<float>::infinity(), 3, 4}), "non_finite");
  auto bad_quality = base;
  bad_quality["items"][0]["quality"] = {0.5};
  EXPECT_EQ(attempt(bad_quality, {1, 2, 3, 4}), "invalid_manifest");
  auto original_two = base;
  original_two["kind"] = "original";
  EXPECT_FALSE(attempt(original_two, {1, 2, 3, 4}).empty());
}

TEST(Embeddings, RoundTripIsBitExact) {
  gen::Source src(11);
  gen::TempDir dir;
  for (auto kind : {io::EmbeddingKind::image, io::EmbeddingKind::content_word_image, io::EmbeddingKind::original}) {
    io::VariantEmbeddingSet set(kind, 5);
    for (int s = 0; s < 6; ++s) {
      const int n = kind == io::EmbeddingKind::original ? 1 : src.integer(1, 4);
      std::vector<io::Variant> vs;
      for (int k = 0; k < n; ++k) {
        io::Variant v{src.vector_f(5), std::nullopt, std::nullopt};
        if (src.coin()) v.quality = src.uniform(-1, 1);
        if (io::is_content_word_kind(kind)) v.word_index = src.integer(0, 2);
        vs.push_back(v);
      }
      set.add("s" + std::to_string(s), vs);
    }
    const auto path = dir / std::string(io::to_string(kind));
    io::save_embeddings(set, path);
    EXPECT_EQ(io::load_embeddings(path), set);
  }
}

TEST(Embeddings, LoaderRejectsEveryWrongLength) {
  gen::Source src(5);
  gen::TempDir dir;
  for (int trial = 0; trial < 25; ++trial) {
    const int dim = src.integer(1, 6);
    io::VariantEmbeddingSet set(io::EmbeddingKind::paraphrase, dim);
    const int n = src.integer(1, 4);
    for (int s = 0; s < n; ++s) {
      std::vector<io::Variant> vs(static_cast<std::size_t>(src.integer(1, 3)));
      for (auto& v : vs) v.vector = src.vector_f(dim);
      set.add("s" + std::to_string(s), vs);
    }
    const auto path = dir / ("t" + std::to_string(trial));
    io::save_embeddings(set, path);
    const auto size = std::filesystem::file_size(path / "data.f32");
    const auto delta = static_cast<std::uintmax_t>(src.integer(1, 8));
    std::filesystem::resize_file(path / "data.f32", src.coin() ? size + delta : size - std::min(size, delta));
    EXPECT_EQ(error_code([&] { io::load_embeddings(path); }), "size_mismatch") << "trial " << trial;
  }
}

TEST(Embeddings, SetInvariants) {
  io::VariantEmbeddingSet set(io::EmbeddingKind::image, 2);
  EXPECT_THROW(set.add("a", {{Eigen::VectorXf::Ones(3), std::nullopt, std::nullopt}}), Error);
  EXPECT_THROW(set.add("a", {{Eigen::VectorXf::Ones(2), 1.5, std::nullopt}}), Error);
  set.add("a", {{Eigen::VectorXf::Ones(2), 0.5, std::nullopt}});
  EXPECT_THROW(set.add("a", {{Eigen::VectorXf::Ones(2), 0.5, std::nullopt}}), Error);
  EXPECT_TRUE(set.fully_scored());
  io::VariantEmbeddingSet words(io::EmbeddingKind::content_word_text, 2);
  EXPECT_THROW(words.add("a", {{Eigen::VectorXf::Ones(2), std::nullopt, std::nullopt}}), Error);
  EXPECT_THROW(io::VariantEmbeddingSet(io::EmbeddingKind::image, 0), Error);
}

TEST(Responses, LoadShapesAndNaN) {
  gen::TempDir dir;
  io::ResponseMatrix r;
  r.stimulus_ids = {"s1", "s2"};
  r.values.resize(2, 3);
  r.values << 1, 2, 3, 4, 5, 6;
  r.values(0, 1) = std::nanf("");
  r.subject_id = "subj";
  r.repeat_index = 1;
  io::save_responses(r, dir / "r");
  EXPECT_EQ(std::filesystem::file_size(dir / "r" / "data.f32"), 24u);
  const auto back = io::load_responses(dir / "r");
  EXPECT_EQ(back, r);
  const auto mask = back.missing_mask();
  EXPECT_TRUE(mask(0, 1));
  EXPECT_EQ(mask.count(), 1);
  EXPECT_EQ(back.values(1, 2), 6.0f);
  EXPECT_EQ(*back.repeat_index, 1);
}

TEST(Responses, NaNPayloadSurvivesBitExactly) {
  gen::TempDir dir;
  io::ResponseMatrix r;
  r.stimulus_ids = {"a"};
  r.values.resize(1, 2);
  std::uint32_t payload = 0x7fc01234u;
  float odd_nan;
  std::memcpy(&odd_nan, &payload, 4);
  r.values << odd_nan, -0.0f;
  r.subject_id = "s";
  io::save_responses(r, dir / "r");
  const auto back = io::load_responses(dir / "r");
  std::uint32_t got;
  float v = back.values(0, 0);
  std::memcpy(&got, &v, 4);
  EXPECT_EQ(got, payload);
  EXPECT_TRUE(std::signbit(back.values(0, 1)));
}

TEST(Responses, ZeroVoxelsIsDegenerate) {
  gen::TempDir dir;
  std::filesystem::create_directories(dir / "r");
  write_file(dir / "r" / "manifest.json",
             json({{"format", "RESP1"}, {"stimulus_ids", {"s1"}}, {"n_voxels", 0}, {"subject_id", "x"}}).dump());
  write_floats(dir / "r" / "data.f32", {});
  const auto msg = error_message([&] { io::load_responses(dir / "r"); });
  EXPECT_NE(msg.find("degenerate response matrix"), std::string::npos) << msg;
}

TEST(Responses, SizeMismatchAndDuplicateIds) {
  gen::TempDir dir;
  std::filesystem::create_directories(dir / "r");
  write_file(dir / "r" / "manifest.json",
             json({{"format", "RESP1"}, {"stimulus_ids", {"s1", "s2"}}, {"n_voxels", 3}, {"subject_id", "x"}}).dump());
  write_floats(dir / "r" / "data.f32", {1, 2, 3, 4, 5});
  EXPECT_EQ(error_code([&] { io::load_responses(dir / "r"); }), "size_mismatch");
  io::ResponseMatrix dup;
  dup.stimulus_ids = {"a", "a"};
  dup.values = Eigen::MatrixXf::Zero(2, 1);
  EXPECT_THROW(dup.validate(), Error);
}

TEST(Responses, DegenerateVoxelsFlagged) {
  io::ResponseMatrix r;
  r.stimulus_ids = {"a", "b"};
  r.values.resize(2, 2);
  r.values << 1, std::nanf(""), 2, std::nanf("");
  EXPECT_EQ(r.degenerate_voxels(), (std::vector<Eigen::Index>{1}));
}

TEST(Results, OneRecordTwoLines) {
  gen::TempDir dir;
  io::ResultRecord rec{"exp", "F", "model", "split0", 5, io::Ordering::random, 0.3, std::nullopt, false};
  io::save_results(std::vector<io::ResultRecord>{rec}, dir / "r.csv");
  std::ifstream in(dir / "r.csv");
  std::vector<std::string> lines;
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  ASSERT_EQ(lines.size(), 2u);
  EXPECT_EQ(lines[0], io::kResultsCsvHeader);
  EXPECT_EQ(lines[1], "exp,F,model,split0,5,random,0.3,false");
}

TEST(Results, ScheduleRowsOrderedByMAndRoundTrip) {
  gen::TempDir dir;
  gen::Source src(3);
  std::vector<io::ResultRecord> recs;
  for (int m = 100; m >= 5; m -= 5) {
    io::ResultRecord r{"exp", "F", "model", "split0", m, io::Ordering::quality_desc, src.uniform(-1, 1),
                       std::vector<double>{src.normal(), std::nan(""), src.normal()}, m % 10 == 0};
    recs.push_back(r);
  }
  io::save_results(recs, dir / "r.csv");
  const auto back = io::load_results(dir / "r.csv");
  ASSERT_EQ(back.size(), 20u);
  for (std::size_t i = 0; i < back.size(); ++i) EXPECT_EQ(back[i].m, 5 * static_cast<int>(i + 1));
  EXPECT_EQ(back, io::canonical_order(recs));
  EXPECT_TRUE(std::filesystem::exists(io::results_sidecar_path(dir / "r.csv")));
}

TEST(Results, OrderingStrings) {
  EXPECT_EQ(io::parse_ordering("quality"), io::Ordering::quality_desc);
  EXPECT_EQ(io::to_string(io::Ordering::not_applicable), "n/a");
  EXPECT_THROW(io::parse_ordering("sideways"), Error);
}
