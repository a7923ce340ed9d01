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

#include "vencode/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "vencode/error.hpp"
#include "vencode/rng.hpp"

namespace vencode::runner {

using nlohmann::json;

namespace {

std::string_view to_string(metrics::NormalizationMode mode) {
  return mode == metrics::NormalizationMode::divide ? "divide" : "divide_sqrt";
}

metrics::NormalizationMode parse_normalization(std::string_view s) {
  if (s == "divide") return metrics::NormalizationMode::divide;
  if (s == "divide_sqrt") return metrics::NormalizationMode::divide_sqrt;
  throw Error("invalid_config", "unknown normalization '" + std::string(s) + "'");
}

json optional_string(const std::optional<std::string>& s) { return s ? json(*s) : json(nullptr); }

std::optional<std::string> read_optional_string(const json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return j.at(key).get<std::string>();
}

std::string read_text(const io::Path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const io::Path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  out << text;
  if (!out) throw Error("io_error", "write failed for " + path.string());
}

std::string list_preview(const std::vector<std::string>& ids) {
  constexpr std::size_t kShown = 10;
  std::string out = "[";
  for (std::size_t i = 0; i < ids.size() && i < kShown; ++i) {
    if (i) out += ", ";
    out += ids[i];
  }
  if (ids.size() > kShown) out += ", ... (" + std::to_string(ids.size()) + " total)";
  return out + "]";
}

/// Throws stimulus_mismatch with the symmetric difference unless the id
/// sets agree. With `subset_ok`, ids missing from `b` are allowed when they
/// are not in `required`.
void check_same_ids(const std::vector<std::string>& a, const std::string& name_a, const std::vector<std::string>& b,
                    const std::string& name_b, const std::set<std::string>* required = nullptr) {
  const std::set<std::string> sa(a.begin(), a.end());
  const std::set<std::string> sb(b.begin(), b.end());
  std::vector<std::string> only_a;
  std::vector<std::string> only_b;
  for (const auto& id : sa) {
    if (!sb.count(id) && (!required || required->count(id))) only_a.push_back(id);
  }
  for (const auto& id : sb) {
    if (!sa.count(id)) only_b.push_back(id);
  }
  if (only_a.empty() && only_b.empty()) return;
  throw Error("stimulus_mismatch", "stimulus ids differ between " + name_a + " and " + name_b + ": only in " +
                                       name_a + " " + list_preview(only_a) + ", only in " + name_b + " " +
                                       list_preview(only_b));
}

std::vector<std::string> header_order(const io::StimulusCatalog& catalog) {
  std::vector<std::string> headers;
  std::set<std::string> seen;
  for (const auto& e : catalog.entries()) {
    if (e.header && seen.insert(*e.header).second) headers.push_back(*e.header);
  }
  return headers;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, std::span<const Eigen::Index> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

std::string resolve(const std::string& p, const io::Path& base) {
  if (p.empty()) return p;
  const io::Path path(p);
  if (path.is_absolute()) return p;
  return (base / path).lexically_normal().string();
}

/// Runs `n` jobs on up to `workers` threads. Exceptions are rethrown in job
/// order so failures do not depend on scheduling.
template <class Fn>
void parallel_for(std::size_t n, int workers, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(std::max(workers, 1)), n);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(n_threads);
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Config
// ---------------------------------------------------------------------------

void ExperimentConfig::validate() const {
  if (name.empty()) throw Error("invalid_config", "experiment name must not be empty");
  if (aggregate::uses_subset_size(featurization)) {
    schedule.validate();
    if (ordering == io::Ordering::not_applicable) {
      throw Error("invalid_config", "featurization " + std::string(aggregate::to_string(featurization)) +
                                        " needs ordering random or quality");
    }
  }
  if (lambda_grid.empty()) throw Error("invalid_config", "lambda grid must not be empty");
  for (double l : lambda_grid) {
    if (!std::isfinite(l) || l < 0.0) throw Error("invalid_config", "lambda values must be finite and >= 0");
  }
  if (folds < 1) throw Error("invalid_config", "folds must be >= 1");
  if (!splits_file && n_splits < 1) throw Error("invalid_config", "n_splits must be >= 1");
  fractions.validate();
  if (ceiling_rep1.has_value() != ceiling_rep2.has_value()) {
    throw Error("invalid_config", "ceiling needs both rep1 and rep2");
  }
  if (!(ceiling_floor > 0.0 && ceiling_floor < 1.0)) throw Error("invalid_config", "ceiling floor must be in (0, 1)");
  if (quality_threshold && !(*quality_threshold >= -1.0 && *quality_threshold <= 1.0)) {
    throw Error("invalid_config", "quality threshold must be in [-1, 1]");
  }
  loss.validate();
  if (workers < 1) throw Error("invalid_config", "workers must be >= 1");
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const { return config_to_json(*this) == config_to_json(o); }

namespace {

json config_json(const ExperimentConfig& c) {
  json j;
  j["format"] = "EXPERIMENT1";
  j["name"] = c.name;
  j["featurization"] = std::string(aggregate::to_string(c.featurization));
  j["embeddings"] = c.embeddings;
  j["concat_embeddings"] = optional_string(c.concat_embeddings);
  j["reference_embeddings"] = optional_string(c.reference_embeddings);
  j["responses"] = c.responses;
  j["catalog"] = c.catalog;
  j["schedule"] = {{"step", c.schedule.step}, {"max", c.schedule.max}};
  j["ordering"] = c.ordering == io::Ordering::quality_desc ? "quality" : std::string(io::to_string(c.ordering));
  j["quality_threshold"] = c.quality_threshold ? json(*c.quality_threshold) : json(nullptr);
  j["lambda_grid"] = c.lambda_grid;
  j["folds"] = c.folds;
  j["seed"] = c.seed;
  j["n_splits"] = c.n_splits;
  j["group_by_paragraph"] = c.group_by_paragraph;
  j["fractions"] = {{"train", c.fractions.train}, {"validation", c.fractions.validation}, {"test", c.fractions.test}};
  j["splits_file"] = optional_string(c.splits_file);
  j["ceiling"] = {{"rep1", optional_string(c.ceiling_rep1)},
                  {"rep2", optional_string(c.ceiling_rep2)},
                  {"floor", c.ceiling_floor},
                  {"normalization", std::string(to_string(c.normalization))}};
  j["solver"] = std::string(ridge::to_string(c.solver));
  j["loss"] = {{"alpha", c.loss.alpha},
               {"max_iterations", c.loss.max_iterations},
               {"step_size", c.loss.step_size},
               {"tolerance", c.loss.tolerance}};
  j["model_tag"] = c.model_tag;
  j["workers"] = c.workers;
  j["keep_per_voxel"] = c.keep_per_voxel;
  return j;
}

void reject_unknown(const json& j, std::initializer_list<const char*> known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
      throw Error("invalid_config", "unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

std::string config_to_json(const ExperimentConfig& cfg) { return config_json(cfg).dump(2) + "\n"; }

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error("invalid_config", std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error("invalid_config", "config must be a JSON object");
  reject_unknown(j,
                 {"format", "name", "featurization", "embeddings", "concat_embeddings", "reference_embeddings",
                  "responses", "catalog", "schedule", "ordering", "quality_threshold", "lambda_grid", "folds", "seed",
                  "n_splits", "group_by_paragraph", "fractions", "splits_file", "ceiling", "solver", "loss",
                  "model_tag", "workers", "keep_per_voxel"},
                 "config");

  ExperimentConfig c;
  try {
    if (j.contains("format") && j.at("format") != "EXPERIMENT1") {
      throw Error("invalid_config", "unsupported config format " + j.at("format").dump());
    }
    if (j.contains("name")) c.name = j.at("name").get<std::string>();
    if (j.contains("featurization")) {
      c.featurization = aggregate::parse_featurization(j.at("featurization").get<std::string>());
    }
    if (j.contains("embeddings")) c.embeddings = j.at("embeddings").get<std::string>();
    c.concat_embeddings = read_optional_string(j, "concat_embeddings");
    c.reference_embeddings = read_optional_string(j, "reference_embeddings");
    if (j.contains("responses")) c.responses = j.at("responses").get<std::string>();
    if (j.contains("catalog")) c.catalog = j.at("catalog").get<std::string>();
    if (j.contains("schedule")) {
      const auto& s = j.at("schedule");
      reject_unknown(s, {"step", "max"}, "schedule");
      if (s.contains("step")) c.schedule.step = s.at("step").get<int>();
      if (s.contains("max")) c.schedule.max = s.at("max").get<int>();
    }
    if (j.contains("ordering")) c.ordering = io::parse_ordering(j.at("ordering").get<std::string>());
    if (j.contains("quality_threshold") && !j.at("quality_threshold").is_null()) {
      c.quality_threshold = j.at("quality_threshold").get<double>();
    }
    if (j.contains("lambda_grid")) c.lambda_grid = j.at("lambda_grid").get<std::vector<double>>();
    if (j.contains("folds")) c.folds = j.at("folds").get<int>();
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("n_splits")) c.n_splits = j.at("n_splits").get<int>();
    if (j.contains("group_by_paragraph")) c.group_by_paragraph = j.at("group_by_paragraph").get<bool>();
    if (j.contains("fractions")) {
      const auto& f = j.at("fractions");
      reject_unknown(f, {"train", "validation", "test"}, "fractions");
      if (f.contains("train")) c.fractions.train = f.at("train").get<double>();
      if (f.contains("validation")) c.fractions.validation = f.at("validation").get<double>();
      if (f.contains("test")) c.fractions.test = f.at("test").get<double>();
    }
    c.splits_file = read_optional_string(j, "splits_file");
    if (j.contains("ceiling") && !j.at("ceiling").is_null()) {
      const auto& ce = j.at("ceiling");
      reject_unknown(ce, {"rep1", "rep2", "floor", "normalization"}, "ceiling");
      c.ceiling_rep1 = read_optional_string(ce, "rep1");
      c.ceiling_rep2 = read_optional_string(ce, "rep2");
      if (ce.contains("floor")) c.ceiling_floor = ce.at("floor").get<double>();
      if (ce.contains("normalization")) c.normalization = parse_normalization(ce.at("normalization").get<std::string>());
    }
    if (j.contains("solver")) c.solver = ridge::parse_solver(j.at("solver").get<std::string>());
    if (j.contains("loss")) {
      const auto& l = j.at("loss");
      reject_unknown(l, {"alpha", "max_iterations", "step_size", "tolerance"}, "loss");
      if (l.contains("alpha")) c.loss.alpha = l.at("alpha").get<double>();
      if (l.contains("max_iterations")) c.loss.max_iterations = l.at("max_iterations").get<int>();
      if (l.contains("step_size")) c.loss.step_size = l.at("step_size").get<double>();
      if (l.contains("tolerance")) c.loss.tolerance = l.at("tolerance").get<double>();
    }
    if (j.contains("model_tag")) c.model_tag = j.at("model_tag").get<std::string>();
    if (j.contains("workers")) c.workers = j.at("workers").get<int>();
    if (j.contains("keep_per_voxel")) c.keep_per_voxel = j.at("keep_per_voxel").get<bool>();
  } catch (const json::exception& e) {
    throw Error("invalid_config", std::string("config field has the wrong type: ") + e.what());
  }
  c.validate();
  return c;
}

ExperimentConfig load_config(const io::Path& path) {
  auto cfg = config_from_json(read_text(path));
  const auto base = path.parent_path();
  cfg.embeddings = resolve(cfg.embeddings, base);
  cfg.responses = resolve(cfg.responses, base);
  cfg.catalog = resolve(cfg.catalog, base);
  for (auto* opt : {&cfg.concat_embeddings, &cfg.reference_embeddings, &cfg.splits_file, &cfg.ceiling_rep1,
                    &cfg.ceiling_rep2}) {
    if (*opt) *opt = resolve(**opt, base);
  }
  return cfg;
}

void save_config(const ExperimentConfig& cfg, const io::Path& path) { write_text(path, config_to_json(cfg)); }

std::string config_hash(const ExperimentConfig& cfg) {
  auto j = config_json(cfg);
  j.erase("workers");
  std::ostringstream ss;
  ss << std::hex << std::setw(16) << std::setfill('0') << hash_string(j.dump());
  return ss.str();
}

// ---------------------------------------------------------------------------
// Running
// ---------------------------------------------------------------------------

ExperimentData load_data(const ExperimentConfig& cfg) {
  if (cfg.embeddings.empty() || cfg.responses.empty() || cfg.catalog.empty()) {
    throw Error("invalid_config", "config needs embeddings, responses and catalog paths");
  }
  ExperimentData d{io::load_catalog(cfg.catalog), io::load_embeddings(cfg.embeddings), std::nullopt, std::nullopt,
                   io::load_responses(cfg.responses), std::nullopt, std::nullopt, std::nullopt};
  if (cfg.concat_embeddings) d.concat = io::load_embeddings(*cfg.concat_embeddings);
  if (cfg.reference_embeddings) d.reference = io::load_embeddings(*cfg.reference_embeddings);
  if (cfg.ceiling_rep1) {
    d.rep1 = io::load_responses(*cfg.ceiling_rep1);
    d.rep2 = io::load_responses(*cfg.ceiling_rep2);
  }
  if (cfg.splits_file) d.splits = splits::load_splits(*cfg.splits_file);
  return d;
}

CurveResult run_experiment(const ExperimentConfig& cfg) { return run_experiment(cfg, load_data(cfg)); }

CurveResult run_experiment(const ExperimentConfig& cfg, const ExperimentData& data) {
  cfg.validate();
  const auto feat = cfg.featurization;
  const auto& catalog = data.catalog;
  if (catalog.empty()) throw Error("invalid_argument", "catalog is empty");
  data.responses.validate();

  CurveResult result;
  result.config_hash = config_hash(cfg);
  result.seed = cfg.seed;

  // Stimulus universes.
  check_same_ids(catalog.ids(), "catalog", data.responses.stimulus_ids, "responses");
  const bool header_mode = aggregate::uses_headers(feat);
  std::vector<std::string> units;
  if (header_mode) {
    units = header_order(catalog);
    if (units.empty()) throw Error("missing_headers", "featurization requires headers but the catalog has none");
  } else {
    units = catalog.ids();
  }
  if (aggregate::uses_content_words(feat)) {
    std::set<std::string> required;
    for (const auto& e : catalog.entries()) {
      if (!e.content_words.empty()) required.insert(e.stimulus_id);
    }
    if (required.empty()) throw Error("no_content_words", "featurization requires content words");
    check_same_ids(units, "catalog", data.embeddings.ids(), "embeddings", &required);
  } else {
    check_same_ids(units, header_mode ? "catalog headers" : "catalog", data.embeddings.ids(), "embeddings");
  }
  if (data.concat) check_same_ids(units, "catalog", data.concat->ids(), "concat embeddings");
  if (data.reference) check_same_ids(data.embeddings.ids(), "embeddings", data.reference->ids(), "reference");
  if (data.embeddings.kind() != aggregate::expected_kind(feat)) {
    throw Error("kind_mismatch", "featurization " + std::string(aggregate::to_string(feat)) + " expects kind " +
                                     std::string(io::to_string(aggregate::expected_kind(feat))) + ", got " +
                                     std::string(io::to_string(data.embeddings.kind())));
  }

  // Quality scores and filtering.
  const bool variant_feat = aggregate::uses_subset_size(feat);
  const bool needs_quality =
      variant_feat && (cfg.ordering == io::Ordering::quality_desc || cfg.quality_threshold.has_value());
  io::VariantEmbeddingSet set = data.embeddings;
  if (needs_quality) {
    if (data.reference) {
      set = aggregate::attach_quality(set, *data.reference);
    } else if (!set.fully_scored()) {
      throw Error("missing_quality", "quality ordering or filtering needs stored scores or a reference set");
    }
  }
  if (variant_feat && cfg.quality_threshold) {
    auto filtered = aggregate::quality_filter(set, *cfg.quality_threshold);
    for (const auto& id : filtered.dropped) result.excluded.push_back(id + ": no variants above quality threshold");
    set = std::move(filtered.set);
  }

  // Targets, one row per unit.
  const bool use_ceiling = cfg.ceiling_rep1.has_value();
  if (use_ceiling && !(data.rep1 && data.rep2)) {
    throw Error("invalid_config", "ceiling normalization requested but repeats were not loaded");
  }
  Eigen::MatrixXd targets;
  std::optional<metrics::CeilingVector> ceiling;
  if (header_mode) {
    auto pooled = aggregate::pool_header_responses(catalog, data.responses);
    for (const auto& id : pooled.excluded) result.excluded.push_back(id + ": no header");
    targets = std::move(pooled.values);
    if (use_ceiling) {
      auto p1 = aggregate::pool_header_responses(catalog, *data.rep1);
      auto p2 = aggregate::pool_header_responses(catalog, *data.rep2);
      ceiling = metrics::split_half_ceiling(synth::to_response_matrix(p1.values, p1.header_ids),
                                            synth::to_response_matrix(p2.values, p2.header_ids), cfg.ceiling_floor);
    }
  } else {
    targets.resize(static_cast<Eigen::Index>(units.size()), data.responses.n_voxels());
    for (std::size_t i = 0; i < units.size(); ++i) {
      targets.row(static_cast<Eigen::Index>(i)) =
          data.responses.values.row(*data.responses.row_of(units[i])).cast<double>();
    }
    if (use_ceiling) {
      check_same_ids(catalog.ids(), "catalog", data.rep1->stimulus_ids, "rep1");
      check_same_ids(catalog.ids(), "catalog", data.rep2->stimulus_ids, "rep2");
      ceiling = metrics::split_half_ceiling(*data.rep1, *data.rep2, cfg.ceiling_floor);
    }
  }
  if (ceiling && ceiling->per_voxel_ceiling.size() != targets.cols()) {
    throw Error("size_mismatch", "ceiling repeats and responses have different voxel counts");
  }
  std::map<std::string, Eigen::Index> unit_row;
  for (std::size_t i = 0; i < units.size(); ++i) unit_row.emplace(units[i], static_cast<Eigen::Index>(i));

  // Design matrices, one per subset size.
  const std::vector<int> ms = variant_feat ? cfg.schedule.sizes() : std::vector<int>{1};
  const auto strategy = cfg.ordering == io::Ordering::quality_desc
                            ? aggregate::OrderingStrategy::quality_desc()
                            : aggregate::OrderingStrategy::random(derive_seed(cfg.seed, "ordering"));
  const auto* concat = data.concat ? &*data.concat : nullptr;
  std::vector<aggregate::DesignMatrix> designs(ms.size());
  parallel_for(ms.size(), cfg.workers, [&](std::size_t j) {
    designs[j] = aggregate::build_design_matrix(set, catalog, feat, ms[j], strategy, concat);
  });
  const auto& included = designs.front().row_ids;
  for (const auto& dm : designs) {
    if (dm.row_ids != included) throw Error("internal", "design matrices disagree on included rows");
  }
  for (const auto& note : designs.front().notes) result.excluded.push_back(note);
  if (included.empty()) throw Error("empty_design", "no stimulus survived featurization");

  // Targets aligned with design rows.
  Eigen::MatrixXd Y(static_cast<Eigen::Index>(included.size()), targets.cols());
  std::map<std::string, Eigen::Index> design_row;
  for (std::size_t i = 0; i < included.size(); ++i) {
    Y.row(static_cast<Eigen::Index>(i)) = targets.row(unit_row.at(included[i]));
    design_row.emplace(included[i], static_cast<Eigen::Index>(i));
  }
  if (cfg.solver == ridge::Solver::closed_form && Y.hasNaN()) {
    throw Error("missing_responses", "responses contain missing values; use the gradient solver");
  }

  // Splits over the included units.
  std::vector<splits::Split> split_list;
  if (data.splits) {
    const std::set<std::string> known(units.begin(), units.end());
    for (auto s : *data.splits) {
      for (auto* part : {&s.train, &s.validation, &s.test}) {
        for (const auto& id : *part) {
          if (!known.count(id)) throw Error("stimulus_mismatch", "split " + s.split_id + " names unknown unit '" + id + "'");
        }
        std::erase_if(*part, [&](const std::string& id) { return !design_row.count(id); });
      }
      splits::check_partition(s, included);
      if (s.train.empty() || s.test.empty()) throw Error("empty_partition", "split " + s.split_id + " is empty");
      split_list.push_back(std::move(s));
    }
  } else {
    io::StimulusCatalog unit_catalog;
    if (header_mode) {
      std::vector<io::CatalogEntry> entries;
      for (const auto& h : included) entries.push_back({h, h, std::nullopt, std::nullopt, {}});
      unit_catalog = io::StimulusCatalog(std::move(entries));
    } else {
      unit_catalog = catalog.restricted_to(included);
    }
    split_list = splits::make_random_splits(unit_catalog, cfg.n_splits, cfg.fractions, cfg.seed,
                                            cfg.group_by_paragraph && !header_mode);
  }

  // (split x m) jobs with an ordered merge.
  struct Job {
    std::size_t split;
    std::size_t m_index;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < split_list.size(); ++s) {
    for (std::size_t j = 0; j < ms.size(); ++j) jobs.push_back({s, j});
  }
  std::vector<io::ResultRecord> records(jobs.size());
  std::vector<double> lambdas(jobs.size());
  const ridge::SelectOptions select_options{cfg.solver, cfg.loss};

  parallel_for(jobs.size(), cfg.workers, [&](std::size_t k) {
    const auto& split = split_list[jobs[k].split];
    const int m = ms[jobs[k].m_index];
    const auto& E = designs[jobs[k].m_index].features;

    auto rows_of = [&](const std::vector<std::string>& ids) {
      std::vector<Eigen::Index> rows;
      rows.reserve(ids.size());
      for (const auto& id : ids) rows.push_back(design_row.at(id));
      std::sort(rows.begin(), rows.end());
      return rows;
    };
    const auto train = rows_of(split.train);
    const auto test = rows_of(split.test);
    auto train_val = train;
    const auto val = rows_of(split.validation);
    train_val.insert(train_val.end(), val.begin(), val.end());
    std::sort(train_val.begin(), train_val.end());

    const auto selection = ridge::select_lambda(take_rows(E, train_val), take_rows(Y, train_val), cfg.lambda_grid,
                                                cfg.folds, derive_seed(derive_seed(cfg.seed, split.split_id),
                                                                       static_cast<std::uint64_t>(m)),
                                                select_options);
    const Eigen::MatrixXd E_train = take_rows(E, train);
    const Eigen::MatrixXd Y_train = take_rows(Y, train);
    const auto model = cfg.solver == ridge::Solver::closed_form
                           ? ridge::fit_closed_form(E_train, Y_train, selection.best_lambda)
                           : ridge::fit_gradient(E_train, Y_train, selection.best_lambda, cfg.loss);
    auto scores = metrics::pearson_scores(ridge::predict(model, take_rows(E, test)), take_rows(Y, test));
    if (ceiling) scores = metrics::normalize_by_ceiling(scores, *ceiling, cfg.normalization);

    io::ResultRecord& r = records[k];
    r.experiment = cfg.name;
    r.featurization = std::string(aggregate::to_string(feat));
    r.model_tag = cfg.model_tag;
    r.split_id = split.split_id;
    r.m = m;
    r.ordering = variant_feat ? strategy.as_record_ordering() : io::Ordering::not_applicable;
    r.mean_r = scores.mean_r;
    if (cfg.keep_per_voxel) {
      r.per_voxel_r = std::vector<double>(scores.per_voxel_r.data(), scores.per_voxel_r.data() + scores.per_voxel_r.size());
    }
    r.ceiling_normalized = ceiling.has_value();
    lambdas[k] = selection.best_lambda;
  });

  result.records = std::move(records);
  result.selected_lambdas = std::move(lambdas);
  return result;
}

std::vector<std::pair<int, double>> mean_curve(const CurveResult& result) {
  std::vector<std::pair<int, double>> curve;
  std::map<int, std::pair<double, int>> acc;
  for (const auto& r : result.records) {
    if (!acc.count(r.m)) curve.emplace_back(r.m, 0.0);
    auto& [sum, n] = acc[r.m];
    sum += r.mean_r;
    ++n;
  }
  for (auto& [m, value] : curve) value = acc[m].first / acc[m].second;
  return curve;
}

// ---------------------------------------------------------------------------
// Comparison
// ---------------------------------------------------------------------------

namespace {

/// m -> split_id -> mean_r
using CurveTable = std::map<int, std::map<std::string, double>>;

CurveTable curve_table(const CurveResult& c) {
  CurveTable t;
  for (const auto& r : c.records) {
    if (!t[r.m].emplace(r.split_id, r.mean_r).second) {
      throw Error("duplicate_record", "duplicate record for split " + r.split_id + ", m = " + std::to_string(r.m));
    }
  }
  return t;
}

}  // namespace

std::vector<ComparisonRow> compare_curves(const CurveResult& a, const CurveResult& b) {
  const auto ta = curve_table(a);
  const auto tb = curve_table(b);
  if (ta.empty() || tb.empty()) throw Error("invalid_argument", "cannot compare empty curves");

  std::vector<int> ms;
  if (ta.size() == 1 || tb.size() == 1) {
    for (const auto& [m, _] : (ta.size() >= tb.size() ? ta : tb)) ms.push_back(m);
  } else {
    std::vector<int> ma;
    std::vector<int> mb;
    for (const auto& [m, _] : ta) ma.push_back(m);
    for (const auto& [m, _] : tb) mb.push_back(m);
    if (ma != mb) throw Error("schedule_mismatch", "curves were computed on different subset schedules");
    ms = ma;
  }

  auto column = [](const CurveTable& t, int m) -> const std::map<std::string, double>& {
    return t.size() == 1 ? t.begin()->second : t.at(m);
  };

  std::vector<ComparisonRow> rows;
  for (int m : ms) {
    const auto& ca = column(ta, m);
    const auto& cb = column(tb, m);
    std::vector<double> xa;
    std::vector<double> xb;
    for (const auto& [split, value] : ca) {
      const auto it = cb.find(split);
      if (it == cb.end()) throw Error("split_mismatch", "split " + split + " is missing from the second curve");
      xa.push_back(value);
      xb.push_back(it->second);
    }
    if (cb.size() != ca.size()) throw Error("split_mismatch", "curves cover different splits");

    ComparisonRow row;
    row.m = m;
    for (std::size_t i = 0; i < xa.size(); ++i) {
      row.mean_a += xa[i] / static_cast<double>(xa.size());
      row.mean_b += xb[i] / static_cast<double>(xb.size());
    }
    try {
      row.t = metrics::paired_t(xa, xb);
    } catch (const Error& e) {
      row.error = e.code() + ": " + e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

void check_comparable(const ExperimentConfig& a, const ExperimentConfig& b) {
  const bool same_splits = a.seed == b.seed && a.n_splits == b.n_splits && a.splits_file == b.splits_file &&
                           a.group_by_paragraph == b.group_by_paragraph && a.fractions.train == b.fractions.train &&
                           a.fractions.validation == b.fractions.validation && a.fractions.test == b.fractions.test;
  if (!same_splits) throw Error("split_mismatch", "configs do not define identical splits");
  const bool va = aggregate::uses_subset_size(a.featurization);
  const bool vb = aggregate::uses_subset_size(b.featurization);
  if (va && vb && (a.schedule.step != b.schedule.step || a.schedule.max != b.schedule.max)) {
    throw Error("schedule_mismatch", "configs use different subset schedules");
  }
}

}  // namespace

Comparison run_comparison(const ExperimentConfig& cfg_a, const ExperimentConfig& cfg_b) {
  check_comparable(cfg_a, cfg_b);
  return run_comparison(cfg_a, load_data(cfg_a), cfg_b, load_data(cfg_b));
}

Comparison run_comparison(const ExperimentConfig& cfg_a, const ExperimentData& data_a, const ExperimentConfig& cfg_b,
                          const ExperimentData& data_b) {
  check_comparable(cfg_a, cfg_b);
  Comparison c;
  c.a = run_experiment(cfg_a, data_a);
  c.b = run_experiment(cfg_b, data_b);
  c.rows = compare_curves(c.a, c.b);
  return c;
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

std::vector<SummaryRow> summarize(std::span<const io::ResultRecord> records) {
  std::map<std::tuple<std::string, std::string, int>, std::vector<double>> groups;
  for (const auto& r : records) groups[{r.experiment, r.featurization, r.m}].push_back(r.mean_r);
  std::vector<SummaryRow> rows;
  for (const auto& [key, values] : groups) {
    SummaryRow row;
    row.experiment = std::get<0>(key);
    row.featurization = std::get<1>(key);
    row.m = std::get<2>(key);
    row.n_splits = static_cast<int>(values.size());
    for (double v : values) row.mean += v / static_cast<double>(values.size());
    if (values.size() > 1) {
      double ss = 0.0;
      for (double v : values) ss += (v - row.mean) * (v - row.mean);
      row.sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    rows.push_back(row);
  }
  return rows;
}

void write_summary(std::span<const SummaryRow> rows, const io::Path& path) {
  std::ostringstream out;
  out << "experiment,featurization,m,n_splits,mean_r,sd_r\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.experiment << ',' << r.featurization << ',' << r.m << ',' << r.n_splits << ',' << r.mean << ',' << r.sd
        << '\n';
  }
  write_text(path, out.str());
}

void emit_report(const CurveResult& result, const io::Path& out_dir, const ExperimentConfig* cfg) {
  if (result.records.empty()) throw Error("empty_result", "nothing to report");
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("io_error", "cannot create " + out_dir.string() + ": " + ec.message());
  io::save_results(result.records, out_dir / "results.csv");
  const auto rows = summarize(result.records);
  write_summary(rows, out_dir / "summary.csv");
  if (cfg) save_config(*cfg, out_dir / "config.json");
}

// ---------------------------------------------------------------------------
// Preset experiments
// ---------------------------------------------------------------------------

std::vector<std::pair<std::string, ExperimentConfig>> preset_experiments(synth::Preset preset, std::uint64_t seed) {
  const auto sc = synth::preset_config(preset, seed);
  const std::string prefix(synth::to_string(preset));

  auto base = [&](const std::string& suffix, aggregate::Featurization f, const std::string& emb) {
    ExperimentConfig c;
    c.name = prefix + "_" + suffix;
    c.featurization = f;
    c.embeddings = emb;
    c.responses = "responses";
    c.catalog = "catalog.tsv";
    c.seed = seed;
    c.schedule = {5, sc.n_variants};
    return c;
  };

  std::vector<std::pair<std::string, ExperimentConfig>> out;
  using aggregate::Featurization;
  switch (preset) {
    case synth::Preset::averaging:
      out.emplace_back("original", base("original", Featurization::A, "original"));
      out.emplace_back("random", base("random", Featurization::F, "views"));
      break;
    case synth::Preset::sorted: {
      auto q = base("quality", Featurization::F, "views");
      q.ordering = io::Ordering::quality_desc;
      out.emplace_back("quality", q);
      out.emplace_back("random", base("random", Featurization::F, "views"));
      auto filtered = base("filtered", Featurization::F, "views");
      filtered.quality_threshold = 0.25;
      filtered.schedule = {5, sc.n_variants / 2};
      out.emplace_back("filtered", filtered);
      auto unfiltered = base("unfiltered", Featurization::F, "views");
      unfiltered.schedule = {5, sc.n_variants / 2};
      out.emplace_back("unfiltered", unfiltered);
      break;
    }
    case synth::Preset::enriched:
      out.emplace_back("original", base("original", Featurization::A, "original"));
      out.emplace_back("enriched", base("enriched", Featurization::E, "views"));
      break;
    case synth::Preset::paraphrase: {
      out.emplace_back("original", base("original", Featurization::A, "original"));
      out.emplace_back("paraphrase", base("paraphrase", Featurization::D, "views"));
      auto concat = base("concat", Featurization::D, "views");
      concat.concat_embeddings = "original";
      out.emplace_back("concat", concat);
      break;
    }
    case synth::Preset::ceiling: {
      auto c = base("original", Featurization::A, "original");
      c.ceiling_rep1 = "rep1";
      c.ceiling_rep2 = "rep2";
      out.emplace_back("original", c);
      break;
    }
  }
  return out;
}

}  // namespace vencode::runner
