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

// Command line front end for the vencode experiment pipeline.
//
// Every subcommand prints one JSON object on stdout when it succeeds. On
// failure it prints {"error": <code>, "message": <text>} on stderr and exits
// with status 1 (2 for usage errors).

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "vencode/aggregate.hpp"
#include "vencode/error.hpp"
#include "vencode/metrics.hpp"
#include "vencode/ridge.hpp"
#include "vencode/runner.hpp"
#include "vencode/splits.hpp"
#include "vencode/synth.hpp"
#include "vencode/tensorio.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace vencode;

namespace {

void print_error(const std::string& code, const std::string& message) {
  std::cerr << json{{"error", code}, {"message", message}}.dump() << std::endl;
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<double> grid;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      grid.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw Error("usage", "bad lambda grid entry '" + item + "'");
    }
  }
  if (grid.empty()) throw Error("usage", "lambda grid is empty");
  return grid;
}

json curve_json(const runner::CurveResult& result) {
  json curve = json::array();
  for (const auto& [m, r] : runner::mean_curve(result)) curve.push_back({{"m", m}, {"mean_r", r}});
  return {{"records", result.records.size()},
          {"config_hash", result.config_hash},
          {"seed", result.seed},
          {"excluded", result.excluded.size()},
          {"curve", curve}};
}

/// Options shared by `fit` and `curve`.
struct RunOptions {
  std::string config_path;
  std::string embeddings;
  std::string responses;
  std::string catalog;
  std::string lambda_grid;
  std::string splits_file;
  std::string reference;
  std::string concat_original;
  std::string rep1;
  std::string rep2;
  std::string featurization = "A";
  std::string ordering = "random";
  std::string solver = "closed_form";
  std::string name;
  std::string model_tag = "model";
  std::string out;
  std::optional<double> quality_threshold;
  std::optional<double> alpha;
  int folds = 5;
  int n_splits = 5;
  int step = 5;
  int max = 100;
  int m = 1;
  int workers = 1;
  std::uint64_t seed = 0;
  bool group_by_paragraph = false;
  bool keep_per_voxel = false;
};

void add_data_flags(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--embeddings", o.embeddings, "EMB1 directory of the featurization's embeddings");
  cmd->add_option("--responses", o.responses, "RESP1 directory");
  cmd->add_option("--catalog", o.catalog, "stimulus catalog TSV");
  cmd->add_option("--lambda-grid", o.lambda_grid, "comma-separated ridge penalties");
  cmd->add_option("--folds", o.folds, "cross-validation folds for lambda selection")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", o.seed, "experiment seed");
  cmd->add_option("--splits-file", o.splits_file, "SPLITS1 JSON file to use instead of random splits");
  cmd->add_option("--n-splits", o.n_splits, "number of random splits")->check(CLI::PositiveNumber);
  cmd->add_flag("--group-by-paragraph", o.group_by_paragraph, "keep paragraphs inside one partition");
  cmd->add_option("--solver", o.solver, "closed_form or gradient");
  cmd->add_option("--alpha", o.alpha, "correlation weight of the gradient solver loss");
  cmd->add_option("--ceiling-rep1", o.rep1, "first repeat for ceiling normalization");
  cmd->add_option("--ceiling-rep2", o.rep2, "second repeat for ceiling normalization");
  cmd->add_option("--name", o.name, "experiment name");
  cmd->add_option("--model-tag", o.model_tag, "model tag written to results");
  cmd->add_option("--workers", o.workers, "worker threads")->check(CLI::PositiveNumber);
  cmd->add_flag("--keep-per-voxel", o.keep_per_voxel, "store per-voxel r in the JSON sidecar");
  cmd->add_option("--out", o.out, "report directory");
}

runner::ExperimentConfig config_from(const RunOptions& o, bool curve) {
  runner::ExperimentConfig c;
  if (!o.config_path.empty()) {
    c = runner::load_config(o.config_path);
  } else {
    if (o.embeddings.empty() || o.responses.empty() || o.catalog.empty()) {
      throw Error("usage", "--embeddings, --responses and --catalog are required without --config");
    }
    c.embeddings = o.embeddings;
    c.responses = o.responses;
    c.catalog = o.catalog;
    c.featurization = aggregate::parse_featurization(o.featurization);
    c.folds = o.folds;
    c.seed = o.seed;
    c.n_splits = o.n_splits;
    c.group_by_paragraph = o.group_by_paragraph;
    c.solver = ridge::parse_solver(o.solver);
    if (o.alpha) c.loss.alpha = *o.alpha;
    c.model_tag = o.model_tag;
    c.keep_per_voxel = o.keep_per_voxel;
    if (!o.lambda_grid.empty()) c.lambda_grid = parse_grid(o.lambda_grid);
    if (!o.splits_file.empty()) c.splits_file = o.splits_file;
    if (!o.reference.empty()) c.reference_embeddings = o.reference;
    if (!o.concat_original.empty()) c.concat_embeddings = o.concat_original;
    if (!o.rep1.empty() || !o.rep2.empty()) {
      c.ceiling_rep1 = o.rep1;
      c.ceiling_rep2 = o.rep2;
    }
    c.quality_threshold = o.quality_threshold;
    if (curve) {
      c.schedule = {o.step, o.max};
      c.ordering = io::parse_ordering(o.ordering);
    } else {
      c.schedule = {o.m, o.m};
    }
    c.name = o.name.empty() ? (curve ? "curve" : "fit") : o.name;
  }
  c.workers = o.workers;
  if (!o.name.empty()) c.name = o.name;
  c.validate();
  return c;
}

int run_and_report(const runner::ExperimentConfig& cfg, const std::string& out) {
  const auto result = runner::run_experiment(cfg);
  auto summary = curve_json(result);
  if (!out.empty()) {
    runner::emit_report(result, out, &cfg);
    summary["out"] = out;
  }
  std::cout << summary.dump() << std::endl;
  return 0;
}

io::VariantEmbeddingSet with_quality(const std::string& embeddings, const std::string& reference) {
  return aggregate::attach_quality(io::load_embeddings(embeddings), io::load_embeddings(reference));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vencode: encoding-model experiments over variant embeddings"};
  app.require_subcommand(1);

  RunOptions fit_opts;
  auto* fit = app.add_subcommand("fit", "fit and score one featurization on random or given splits");
  add_data_flags(fit, fit_opts);
  fit->add_option("--featurization", fit_opts.featurization, "A..H");
  fit->add_option("--m", fit_opts.m, "variants averaged for D-H")->check(CLI::PositiveNumber);
  fit->add_option("--config", fit_opts.config_path, "experiment config JSON");

  RunOptions curve_opts;
  auto* curve = app.add_subcommand("curve", "sweep the subset size m and report the accuracy curve");
  add_data_flags(curve, curve_opts);
  curve->add_option("--config", curve_opts.config_path, "experiment config JSON");
  curve->add_option("--featurization", curve_opts.featurization, "A..H");
  curve->add_option("--step", curve_opts.step, "subset schedule step")->check(CLI::PositiveNumber);
  curve->add_option("--max", curve_opts.max, "largest subset size")->check(CLI::PositiveNumber);
  curve->add_option("--ordering", curve_opts.ordering, "random or quality")
      ->check(CLI::IsMember({"random", "quality", "quality_desc"}));
  curve->add_option("--concat-original", curve_opts.concat_original, "original embeddings placed before the mean");
  curve->add_option("--quality-threshold", curve_opts.quality_threshold, "drop variants below this quality");
  curve->add_option("--reference", curve_opts.reference, "reference set for cosine quality");

  std::string q_embeddings, q_reference, q_out;
  auto* quality = app.add_subcommand("quality", "score variants by cosine to a reference set");
  quality->add_option("--embeddings", q_embeddings, "EMB1 variant set")->required();
  quality->add_option("--reference", q_reference, "EMB1 single-vector reference set")->required();
  quality->add_option("--out", q_out, "output directory (default: rewrite --embeddings)");

  std::string s_catalog, s_scheme = "random", s_out;
  int s_n = 5;
  std::uint64_t s_seed = 0;
  bool s_group = false;
  auto* split = app.add_subcommand("split", "generate train/validation/test splits");
  split->add_option("--catalog", s_catalog, "stimulus catalog TSV")->required();
  split->add_option("--scheme", s_scheme, "random or first-sentence")
      ->check(CLI::IsMember({"random", "first-sentence"}));
  split->add_option("--n", s_n, "number of random splits, or test paragraphs for first-sentence")
      ->check(CLI::PositiveNumber);
  split->add_option("--seed", s_seed, "seed");
  split->add_flag("--group-by-paragraph", s_group, "keep paragraphs inside one partition");
  split->add_option("--out", s_out, "SPLITS1 JSON output (default: stdout)");

  std::string y_preset, y_out;
  std::uint64_t y_seed = 0;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic bundle and its experiment configs");
  synth_cmd->add_option("--preset", y_preset, "averaging, sorted, enriched, ceiling or paraphrase")
      ->required()
      ->check(CLI::IsMember({"averaging", "sorted", "enriched", "ceiling", "paraphrase"}));
  synth_cmd->add_option("--seed", y_seed, "seed");
  synth_cmd->add_option("--out", y_out, "bundle directory")->required();

  std::string c_rep1, c_rep2, c_out;
  double c_floor = 0.05;
  auto* ceiling = app.add_subcommand("ceiling", "split-half noise ceiling from two repeats");
  ceiling->add_option("--rep1", c_rep1, "first repeat (RESP1)")->required();
  ceiling->add_option("--rep2", c_rep2, "second repeat (RESP1)")->required();
  ceiling->add_option("--floor", c_floor, "lower clip for the ceiling");
  ceiling->add_option("--out", c_out, "write per-voxel ceilings as JSON");

  std::string r_in, r_out;
  auto* report = app.add_subcommand("report", "summarize a results CSV");
  report->add_option("--in", r_in, "results CSV, or a directory containing results.csv")->required();
  report->add_option("--out", r_out, "report directory")->required();

  std::string k_a, k_b, k_out;
  int k_workers = 1;
  auto* compare = app.add_subcommand("compare", "paired t per m between two experiment configs");
  compare->add_option("--a", k_a, "first experiment config")->required();
  compare->add_option("--b", k_b, "second experiment config")->required();
  compare->add_option("--workers", k_workers, "worker threads")->check(CLI::PositiveNumber);
  compare->add_option("--out", k_out, "directory for both curves' reports");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    print_error("usage", e.what());
    return 2;
  }

  try {
    if (*fit) return run_and_report(config_from(fit_opts, false), fit_opts.out);
    if (*curve) return run_and_report(config_from(curve_opts, true), curve_opts.out);

    if (*quality) {
      const auto scored = with_quality(q_embeddings, q_reference);
      const auto out = q_out.empty() ? q_embeddings : q_out;
      io::save_embeddings(scored, out);
      std::cout << json{{"out", out}, {"stimuli", scored.size()}, {"variants", scored.total_variants()}}.dump()
                << std::endl;
      return 0;
    }

    if (*split) {
      const auto catalog = io::load_catalog(s_catalog);
      std::vector<splits::Split> result;
      if (s_scheme == "random") {
        result = splits::make_random_splits(catalog, s_n, {}, s_seed, s_group);
      } else {
        const auto n = split->count("--n") ? static_cast<std::size_t>(s_n) : std::size_t{63};
        result.push_back(splits::make_first_sentence_split(catalog, s_seed, n));
      }
      if (s_out.empty()) {
        std::cout << splits::splits_to_json(result);
      } else {
        splits::save_splits(result, s_out);
        std::cout << json{{"out", s_out}, {"splits", result.size()}}.dump() << std::endl;
      }
      return 0;
    }

    if (*synth_cmd) {
      const auto preset = synth::parse_preset(y_preset);
      synth::save_bundle(synth::make_preset(preset, y_seed), y_out);
      json configs = json::array();
      for (const auto& [name, cfg] : runner::preset_experiments(preset, y_seed)) {
        const auto path = fs::path(y_out) / ("experiment_" + name + ".json");
        runner::save_config(cfg, path);
        configs.push_back(path.string());
      }
      std::cout << json{{"out", y_out}, {"preset", y_preset}, {"configs", configs}}.dump() << std::endl;
      return 0;
    }

    if (*ceiling) {
      const auto c = metrics::split_half_ceiling(io::load_responses(c_rep1), io::load_responses(c_rep2), c_floor);
      const json out = {{"method", "split_half"},
                        {"floor", c.floor_epsilon},
                        {"mean_ceiling", c.per_voxel_ceiling.mean()},
                        {"per_voxel", std::vector<double>(c.per_voxel_ceiling.begin(), c.per_voxel_ceiling.end())}};
      if (!c_out.empty()) {
        std::ofstream f(c_out);
        if (!f) throw Error("io_error", "cannot write " + c_out);
        f << out.dump(2) << "\n";
      }
      std::cout << json{{"mean_ceiling", out["mean_ceiling"]}, {"voxels", c.per_voxel_ceiling.size()}}.dump()
                << std::endl;
      return 0;
    }

    if (*report) {
      fs::path in = r_in;
      if (fs::is_directory(in)) in /= "results.csv";
      runner::CurveResult result;
      result.records = io::load_results(in);
      runner::emit_report(result, r_out);
      std::cout << json{{"out", r_out}, {"records", result.records.size()}}.dump() << std::endl;
      return 0;
    }

    if (*compare) {
      auto a = runner::load_config(k_a);
      auto b = runner::load_config(k_b);
      a.workers = b.workers = k_workers;
      const auto c = runner::run_comparison(a, b);
      json rows = json::array();
      for (const auto& row : c.rows) {
        json r = {{"m", row.m}, {"mean_a", row.mean_a}, {"mean_b", row.mean_b}};
        if (row.t) {
          r["t"] = row.t->t;
          r["dof"] = row.t->dof;
        } else {
          r["error"] = row.error;
        }
        rows.push_back(r);
      }
      if (!k_out.empty()) {
        runner::emit_report(c.a, fs::path(k_out) / a.name, &a);
        runner::emit_report(c.b, fs::path(k_out) / b.name, &b);
      }
      std::cout << json{{"a", a.name}, {"b", b.name}, {"rows", rows}}.dump() << std::endl;
      return 0;
    }
  } catch (const Error& e) {
    print_error(e.code(), e.what());
    return 1;
  } catch (const std::exception& e) {
    print_error("internal", e.what());
    return 1;
  }
  return 0;
}
