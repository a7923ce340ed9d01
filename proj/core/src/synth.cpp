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

#include "vencode/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "vencode/error.hpp"
#include "vencode/rng.hpp"

namespace vencode::synth {

void SynthConfig::validate() const {
  if (n_stimuli <= 0 || dim <= 0 || n_voxels <= 0 || n_variants <= 0) {
    throw Error("invalid_argument", "synthetic counts must be positive");
  }
  if (!(response_noise_sd >= 0.0) || !(view_noise_sd >= 0.0) || !(original_noise_sd >= 0.0)) {
    throw Error("invalid_argument", "noise levels must be non-negative");
  }
  if (!(offtopic_fraction >= 0.0 && offtopic_fraction <= 1.0)) {
    throw Error("invalid_argument", "offtopic_fraction must lie in [0, 1]");
  }
  if (enrichment_dims < 0) throw Error("invalid_argument", "enrichment_dims must be >= 0");
}

namespace {

Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols, std::uint64_t stream, double scale) {
  Rng rng(stream);
  Eigen::MatrixXd M(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) M(i, j) = scale * standard_normal(rng);
  }
  return M;
}

Eigen::MatrixXd add_noise(const Eigen::MatrixXd& clean, double sd, std::uint64_t stream) {
  if (sd == 0.0) return clean;
  return clean + normal_matrix(clean.rows(), clean.cols(), stream, sd);
}

double cosine(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
  const Eigen::VectorXd x = a.cast<double>(), y = b.cast<double>();
  const double denom = std::sqrt(x.squaredNorm() * y.squaredNorm());
  if (!(denom > 0.0)) return 0.0;
  return std::clamp(x.dot(y) / denom, -1.0, 1.0);
}

// Responses generated from a latent matrix with the shared weight and noise
// streams, so that k = 0 enrichment reproduces the ground truth exactly.
void responses_from_latent(const Eigen::MatrixXd& latent, const SynthConfig& cfg, Eigen::MatrixXd& weights,
                           Eigen::MatrixXd& clean, Eigen::MatrixXd& noisy) {
  const auto d = latent.cols();
  weights = normal_matrix(d, cfg.n_voxels, derive_seed(cfg.seed, "weights"), 1.0 / std::sqrt(static_cast<double>(d)));
  clean = latent * weights;
  noisy = add_noise(clean, cfg.response_noise_sd, derive_seed(cfg.seed, "response_noise"));
}

}  // namespace

GroundTruth gen_ground_truth(const SynthConfig& cfg) {
  cfg.validate();
  GroundTruth gt;
  gt.embeddings = normal_matrix(cfg.n_stimuli, cfg.dim, derive_seed(cfg.seed, "embeddings"), 1.0);
  responses_from_latent(gt.embeddings, cfg, gt.weights, gt.clean_responses, gt.responses);
  return gt;
}

NoisyViews gen_noisy_views(const Eigen::MatrixXd& latent, const SynthConfig& cfg, std::span<const std::string> ids,
                           io::EmbeddingKind kind) {
  cfg.validate();
  if (static_cast<std::size_t>(latent.rows()) != ids.size()) {
    throw Error("shape_mismatch", "gen_noisy_views: latent rows and ids differ");
  }
  const auto d = latent.cols();
  NoisyViews out{io::VariantEmbeddingSet(kind, static_cast<int>(d)), {}};
  const std::uint64_t views_seed = derive_seed(cfg.seed, "views");
  for (Eigen::Index i = 0; i < latent.rows(); ++i) {
    Rng rng(derive_seed(views_seed, static_cast<std::uint64_t>(i)));
    const Eigen::VectorXf truth = latent.row(i).transpose().cast<float>();
    std::vector<io::Variant> variants(static_cast<std::size_t>(cfg.n_variants));
    std::vector<char> on_topic(static_cast<std::size_t>(cfg.n_variants));
    for (auto& v : variants) {
      const bool off = uniform01(rng) < cfg.offtopic_fraction;
      Eigen::VectorXd x(d);
      for (Eigen::Index j = 0; j < d; ++j) {
        const double z = standard_normal(rng);
        x[j] = off ? z : latent(i, j) + cfg.view_noise_sd * z;
      }
      v.vector = x.cast<float>();
      v.quality = cosine(v.vector, truth);
      on_topic[static_cast<std::size_t>(&v - variants.data())] = off ? 0 : 1;
    }
    out.set.add(ids[static_cast<std::size_t>(i)], std::move(variants));
    out.on_topic.push_back(std::move(on_topic));
  }
  return out;
}

EnrichedData gen_enriched_views(const Eigen::MatrixXd& latent, const SynthConfig& cfg,
                                std::span<const std::string> ids) {
  cfg.validate();
  const auto n = latent.rows(), d = latent.cols(), k = static_cast<Eigen::Index>(cfg.enrichment_dims);
  EnrichedData out;
  out.extra_latent = normal_matrix(n, k, derive_seed(cfg.seed, "enrichment"), 1.0);
  Eigen::MatrixXd augmented(n, d + k);
  augmented << latent, out.extra_latent;
  responses_from_latent(augmented, cfg, out.weights, out.clean_responses, out.responses);
  out.views = gen_noisy_views(augmented, cfg, ids, io::EmbeddingKind::enriched_paraphrase);
  Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(n, d + k);
  padded.leftCols(d) = latent;
  out.original = single_vector_set(padded, ids);
  return out;
}

std::vector<io::ResponseMatrix> gen_repeats(const Eigen::MatrixXd& clean, double noise_sd, int n_repeats,
                                            std::uint64_t seed, std::span<const std::string> ids) {
  if (n_repeats != 2) throw Error("invalid_argument", "gen_repeats supports exactly 2 repeats");
  if (!(noise_sd >= 0.0)) throw Error("invalid_argument", "noise_sd must be >= 0");
  std::vector<io::ResponseMatrix> out;
  for (int r = 0; r < n_repeats; ++r) {
    auto m = to_response_matrix(add_noise(clean, noise_sd, derive_seed(seed, "repeat" + std::to_string(r))), ids);
    m.repeat_index = r;
    out.push_back(std::move(m));
  }
  return out;
}

std::vector<std::string> stimulus_ids(int n) {
  std::vector<std::string> ids;
  ids.reserve(static_cast<std::size_t>(n));
  char buf[32];
  for (int i = 0; i < n; ++i) {
    std::snprintf(buf, sizeof(buf), "s%05d", i);
    ids.emplace_back(buf);
  }
  return ids;
}

io::StimulusCatalog synthetic_catalog(int n, int paragraph_size) {
  if (paragraph_size < 1) throw Error("invalid_argument", "paragraph_size must be >= 1");
  const auto ids = stimulus_ids(n);
  std::vector<io::CatalogEntry> entries;
  char buf[32];
  for (int i = 0; i < n; ++i) {
    io::CatalogEntry e;
    e.stimulus_id = ids[static_cast<std::size_t>(i)];
    e.text = "synthetic stimulus " + std::to_string(i);
    std::snprintf(buf, sizeof(buf), "p%04d", i / paragraph_size);
    e.paragraph_id = buf;
    std::snprintf(buf, sizeof(buf), "topic%04d", i / paragraph_size);
    e.header = buf;
    entries.push_back(std::move(e));
  }
  return io::StimulusCatalog(std::move(entries));
}

io::VariantEmbeddingSet single_vector_set(const Eigen::MatrixXd& rows, std::span<const std::string> ids,
                                          io::EmbeddingKind kind) {
  if (static_cast<std::size_t>(rows.rows()) != ids.size()) {
    throw Error("shape_mismatch", "single_vector_set: rows and ids differ");
  }
  io::VariantEmbeddingSet set(kind, static_cast<int>(rows.cols()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    io::Variant v;
    v.vector = rows.row(i).transpose().cast<float>();
    set.add(ids[static_cast<std::size_t>(i)], {std::move(v)});
  }
  return set;
}

io::ResponseMatrix to_response_matrix(const Eigen::MatrixXd& values, std::span<const std::string> ids,
                                      std::string subject_id) {
  io::ResponseMatrix r;
  r.stimulus_ids.assign(ids.begin(), ids.end());
  r.values = values.cast<float>();
  r.subject_id = std::move(subject_id);
  r.validate();
  return r;
}

std::string_view to_string(Preset p) {
  switch (p) {
    case Preset::averaging: return "averaging";
    case Preset::sorted: return "sorted";
    case Preset::enriched: return "enriched";
    case Preset::ceiling: return "ceiling";
    case Preset::paraphrase: return "paraphrase";
  }
  return "averaging";
}

Preset parse_preset(std::string_view s) {
  for (auto p : {Preset::averaging, Preset::sorted, Preset::enriched, Preset::ceiling, Preset::paraphrase}) {
    if (to_string(p) == s) return p;
  }
  throw Error("parse_error", "unknown preset '" + std::string(s) + "'");
}

SynthConfig preset_config(Preset p, std::uint64_t seed) {
  SynthConfig c;
  c.seed = seed;
  c.dim = 64;
  c.n_voxels = 50;
  switch (p) {
    case Preset::averaging:
      c.n_stimuli = 240;
      c.response_noise_sd = 0.5;
      c.n_variants = 100;
      c.view_noise_sd = 1.0;
      c.offtopic_fraction = 0.0;
      break;
    case Preset::sorted:
      c.n_stimuli = 240;
      c.response_noise_sd = 0.5;
      c.n_variants = 100;
      c.view_noise_sd = 1.0;
      c.offtopic_fraction = 0.5;
      break;
    case Preset::enriched:
      c.n_stimuli = 240;
      c.response_noise_sd = 0.5;
      c.n_variants = 70;
      c.view_noise_sd = 1.0;
      c.enrichment_dims = c.dim / 2;
      break;
    case Preset::ceiling:
      c.n_stimuli = 2000;
      c.response_noise_sd = 1.0;  // per-repeat noise
      c.n_variants = 1;
      c.view_noise_sd = 0.0;
      break;
    case Preset::paraphrase:
      // Noisy paraphrases and a moderately noisy original carry complementary
      // information; n is large enough for the doubled feature width.
      c.n_stimuli = 2000;
      c.response_noise_sd = 0.5;
      c.n_variants = 70;
      c.view_noise_sd = 2.0;
      c.original_noise_sd = 0.3;
      break;
  }
  return c;
}

SynthBundle make_bundle(const SynthConfig& cfg, Preset preset) {
  cfg.validate();
  SynthBundle b;
  b.preset = preset;
  b.config = cfg;
  b.catalog = synthetic_catalog(cfg.n_stimuli);
  const auto ids = stimulus_ids(cfg.n_stimuli);

  if (preset == Preset::ceiling) {
    // Unit-norm weight columns give every voxel unit signal variance.
    GroundTruth gt;
    SynthConfig clean_cfg = cfg;
    clean_cfg.response_noise_sd = 0.0;
    gt = gen_ground_truth(clean_cfg);
    gt.weights = gt.weights.array().rowwise() / gt.weights.colwise().norm().array();
    gt.clean_responses = gt.embeddings * gt.weights;
    auto reps = gen_repeats(gt.clean_responses, cfg.response_noise_sd, 2, cfg.seed, ids);
    b.responses = to_response_matrix(0.5 * (reps[0].as_double() + reps[1].as_double()), ids);
    b.original = single_vector_set(gt.embeddings, ids);
    b.rep1 = std::move(reps[0]);
    b.rep2 = std::move(reps[1]);
    return b;
  }

  const GroundTruth gt = gen_ground_truth(cfg);
  if (preset == Preset::enriched) {
    auto enriched = gen_enriched_views(gt.embeddings, cfg, ids);
    b.responses = to_response_matrix(enriched.responses, ids);
    b.original = std::move(enriched.original);
    b.views = std::move(enriched.views.set);
    b.on_topic = std::move(enriched.views.on_topic);
    return b;
  }

  const io::EmbeddingKind kind = preset == Preset::paraphrase ? io::EmbeddingKind::paraphrase : io::EmbeddingKind::image;
  auto views = gen_noisy_views(gt.embeddings, cfg, ids, kind);
  b.responses = to_response_matrix(gt.responses, ids);
  b.original = single_vector_set(add_noise(gt.embeddings, cfg.original_noise_sd,
                                           derive_seed(cfg.seed, "original_noise")),
                                 ids);
  b.views = std::move(views.set);
  b.on_topic = std::move(views.on_topic);
  return b;
}

SynthBundle make_preset(Preset p, std::uint64_t seed) { return make_bundle(preset_config(p, seed), p); }

void save_bundle(const SynthBundle& bundle, const io::Path& dir) {
  std::filesystem::create_directories(dir);
  io::save_catalog(bundle.catalog, dir / "catalog.tsv");
  io::save_responses(bundle.responses, dir / "responses");
  io::save_embeddings(bundle.original, dir / "original");
  if (bundle.views) io::save_embeddings(*bundle.views, dir / "views");
  if (bundle.rep1) io::save_responses(*bundle.rep1, dir / "rep1");
  if (bundle.rep2) io::save_responses(*bundle.rep2, dir / "rep2");

  const auto& c = bundle.config;
  const nlohmann::json meta = {{"preset", std::string(to_string(bundle.preset))},
                               {"n_stimuli", c.n_stimuli},
                               {"dim", c.dim},
                               {"n_voxels", c.n_voxels},
                               {"response_noise_sd", c.response_noise_sd},
                               {"n_variants", c.n_variants},
                               {"view_noise_sd", c.view_noise_sd},
                               {"offtopic_fraction", c.offtopic_fraction},
                               {"enrichment_dims", c.enrichment_dims},
                               {"original_noise_sd", c.original_noise_sd},
                               {"seed", c.seed}};
  std::ofstream out(dir / "synth.json", std::ios::trunc);
  if (!out) throw Error("io_error", "cannot write " + (dir / "synth.json").string());
  out << meta.dump(2) << "\n";
}

}  // namespace vencode::synth
