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

// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "vencode/runner.hpp"

using namespace vencode;
using Eigen::MatrixXd;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof(buf), f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

constexpr int kSeeds = 20;

runner::ExperimentData data_for(const synth::SynthBundle& b, const runner::ExperimentConfig& cfg) {
  runner::ExperimentData d{b.catalog, cfg.embeddings == "views" ? *b.views : b.original,
                           std::nullopt, std::nullopt, b.responses, std::nullopt, std::nullopt, std::nullopt};
  if (cfg.concat_embeddings) d.concat = b.original;
  if (cfg.ceiling_rep1) {
    d.rep1 = b.rep1;
    d.rep2 = b.rep2;
  }
  return d;
}

std::vector<double> curve_values(const runner::CurveResult& r) {
  std::vector<double> out;
  for (const auto& [m, v] : runner::mean_curve(r)) out.push_back(v);
  return out;
}

std::vector<double> curve_ms(const runner::CurveResult& r) {
  std::vector<double> out;
  for (const auto& [m, v] : runner::mean_curve(r)) out.push_back(m);
  return out;
}

// Runs every experiment shipped with a preset for one seed.
std::map<std::string, runner::CurveResult> run_preset(synth::Preset p, std::uint64_t seed) {
  const auto bundle = synth::make_preset(p, seed);
  std::map<std::string, runner::CurveResult> out;
  for (const auto& [name, cfg] : runner::preset_experiments(p, seed)) {
    out[name] = runner::run_experiment(cfg, data_for(bundle, cfg));
  }
  return out;
}

Verdict ridge_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  gen::Source src(2026);
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const int d = src.integer(1, 16);
    const int v = src.integer(1, 8);
    const int n = src.integer(d + 5, 50);
    const double lambda = ridge::kDefaultLambdaGrid[static_cast<std::size_t>(src.integer(0, 4))];
    const MatrixXd E = src.matrix(n, d), Y = src.matrix(n, v);
    const auto model = ridge::fit_closed_form(E, Y, lambda);
    const MatrixXd W = oracle::ridge_normal_equations(E, Y, lambda);
    worst = std::max(worst, (model.weights - W).cwiseAbs().maxCoeff());
    const MatrixXd E_new = src.matrix(5, d);
    worst = std::max(worst,
                     (ridge::predict(model, E_new) - oracle::ridge_predict(E, Y, W, E_new)).cwiseAbs().maxCoeff());
  }
  const double t = seconds_since(t0);
  return {worst <= 1e-8 && t < 5.0, fmt("max entry deviation %.2e over 50 instances, %.2fs", worst, t)};
}

Verdict gradient_solver() {
  gen::Source src(7);
  double worst_rel = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const MatrixXd E0 = src.matrix(12, 4), Y0 = src.matrix(12, 3);
    const MatrixXd E = E0.rowwise() - E0.colwise().mean();
    const MatrixXd Y = Y0.rowwise() - Y0.colwise().mean();
    const double alpha = src.uniform(0, 1), lambda = src.uniform(0, 0.5);
    const ridge::CombinedLoss loss(E, Y, Y.array().isNaN(), lambda, alpha);
    const MatrixXd W = src.matrix(4, 3);
    MatrixXd grad;
    loss.evaluate(W, grad);
    const MatrixXd fd = oracle::finite_difference([&](const MatrixXd& w) { return loss.value(w); }, W, 1e-5);
    worst_rel = std::max(worst_rel, (grad - fd).norm() / std::max(fd.norm(), 1e-12));
  }

  const MatrixXd E = src.matrix(200, 10);
  const MatrixXd Y = E * src.matrix(10, 4) + 0.5 * src.matrix(200, 4);
  ridge::LossConfig mse_only;
  mse_only.alpha = 0.0;
  const auto g = ridge::fit_gradient(E, Y, 0.001, mse_only);
  const auto c = ridge::fit_closed_form(E, Y, 0.001);
  const MatrixXd E_test = src.matrix(100, 10);
  const MatrixXd pg = ridge::predict(g, E_test), pc = ridge::predict(c, E_test);
  double min_r = 1.0;
  for (Eigen::Index j = 0; j < 4; ++j) min_r = std::min(min_r, oracle::pearson(oracle::column(pg, j), oracle::column(pc, j)));

  MatrixXd Y_masked = Y;
  io::MissingMask mask = io::MissingMask::Constant(200, 4, false);
  for (int i = 0; i < 200; i += 7) mask(i, i % 4) = true;
  ridge::LossConfig cfg;
  cfg.max_iterations = 500;
  const auto a = ridge::fit_gradient(E, Y_masked, mask, 0.01, cfg);
  for (int i = 0; i < 200; i += 7) Y_masked(i, i % 4) = 1e8 * (i + 1);
  const auto b = ridge::fit_gradient(E, Y_masked, mask, 0.01, cfg);
  for (int i = 0; i < 200; i += 7) Y_masked(i, i % 4) = std::numeric_limits<double>::quiet_NaN();
  const auto n = ridge::fit_gradient(E, Y_masked, 0.01, cfg);
  const auto same = [](const MatrixXd& x, const MatrixXd& y) {
    return x.size() == y.size() && std::equal(x.data(), x.data() + x.size(), y.data(), [](double p, double q) {
             return std::memcmp(&p, &q, sizeof(double)) == 0;
           });
  };
  const bool inert = same(a.weights, b.weights) && same(a.weights, n.weights) && same(a.bias, b.bias);
  return {worst_rel < 1e-4 && min_r > 0.999 && inert,
          fmt("finite-difference rel err %.2e, alpha=0 min voxel r %.6f, masked entries inert: %s", worst_rel, min_r,
              inert ? "yes" : "no")};
}

Verdict lambda_grid() {
  gen::Source src(11);
  const MatrixXd E = src.matrix(120, 8);
  const MatrixXd Y = E * src.matrix(8, 5) + src.matrix(120, 5);
  const auto sel = ridge::select_lambda(E, Y, ridge::kDefaultLambdaGrid, 5, 1);
  bool table_ok = sel.cv_table.size() == ridge::kDefaultLambdaGrid.size() * 5 &&
                  sel.mean_by_lambda.size() == ridge::kDefaultLambdaGrid.size();
  for (std::size_t i = 0; table_ok && i < sel.cv_table.size(); ++i) {
    table_ok = sel.cv_table[i].lambda == ridge::kDefaultLambdaGrid[i / 5] && sel.cv_table[i].fold == int(i % 5);
  }
  int largest_wins = 0;
  for (int seed = 0; seed < 10; ++seed) {
    gen::Source noise(1000 + static_cast<std::uint64_t>(seed));
    const MatrixXd En = noise.matrix(120, 8), Yn = noise.matrix(120, 5);
    largest_wins += ridge::select_lambda(En, Yn, ridge::kDefaultLambdaGrid, 5, static_cast<std::uint64_t>(seed))
                        .best_lambda == 0.1;
  }
  return {table_ok && largest_wins >= 8,
          fmt("cv table complete: %s, pure-noise largest lambda wins %d/10", table_ok ? "yes" : "no", largest_wins)};
}

Verdict averaging_curve() {
  const auto t0 = std::chrono::steady_clock::now();
  int wins = 0;
  std::vector<double> mean_curve, ms;
  double min_sp = 1.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto res = run_preset(synth::Preset::averaging, static_cast<std::uint64_t>(seed));
    const auto& r = res.at("random");
    const auto c = curve_values(r);
    ms = curve_ms(r);
    wins += c[9] > c[0];
    min_sp = std::min(min_sp, metrics::spearman(ms, c));
    if (mean_curve.empty()) mean_curve.assign(c.size(), 0.0);
    for (std::size_t i = 0; i < c.size(); ++i) mean_curve[i] += c[i] / kSeeds;
  }
  const double sp = metrics::spearman(ms, mean_curve);
  const double t = seconds_since(t0);
  return {wins >= 19 && sp > 0.8 && t < 120.0,
          fmt("m=50 beats m=5 in %d/20 seeds, Spearman of mean curve %.3f (min per seed %.3f), %.1fs", wins, sp,
              min_sp, t)};
}

struct SortedOutcome {
  Verdict sorted;
  Verdict filter;
};

SortedOutcome sorted_and_filter() {
  int peaked = 0, filter_wins = 0;
  std::vector<double> random_mean, ms;
  double min_gap = 1.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto res = run_preset(synth::Preset::sorted, static_cast<std::uint64_t>(seed));
    const auto q = curve_values(res.at("quality"));
    const auto best = static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
    const double gap = q[best] - q.back();
    peaked += best + 1 < q.size() && gap > 0.01;
    min_gap = std::min(min_gap, gap);

    const auto r = curve_values(res.at("random"));
    ms = curve_ms(res.at("random"));
    if (random_mean.empty()) random_mean.assign(r.size(), 0.0);
    for (std::size_t i = 0; i < r.size(); ++i) random_mean[i] += r[i] / kSeeds;

    const auto f = curve_values(res.at("filtered"));
    const auto u = curve_values(res.at("unfiltered"));
    bool all = f.size() == u.size();
    for (std::size_t i = 0; all && i < f.size(); ++i) all = f[i] > u[i];
    filter_wins += all;
  }
  const double sp = metrics::spearman(ms, random_mean);
  return {{peaked >= 18 && sp > 0.6,
           fmt("quality-ordered curve peaks before M with drop > 0.01 in %d/20 seeds (min drop %.4f), random-order "
               "Spearman %.3f",
               peaked, min_gap, sp)},
          {filter_wins >= 18, fmt("filtered beats unfiltered at every m <= M/2 in %d/20 seeds", filter_wins)}};
}

Verdict enrichment() {
  std::map<int, double> diff_sum;
  bool t_positive = true;
  double min_t = std::numeric_limits<double>::infinity();
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto res = run_preset(synth::Preset::enriched, static_cast<std::uint64_t>(seed));
    for (const auto& row : runner::compare_curves(res.at("enriched"), res.at("original"))) {
      if (row.m < 20) continue;
      diff_sum[row.m] += (row.mean_a - row.mean_b) / kSeeds;
      const double t = row.t ? row.t->t : -std::numeric_limits<double>::infinity();
      t_positive = t_positive && t > 0.0;
      min_t = std::min(min_t, t);
    }
  }
  double min_diff = std::numeric_limits<double>::infinity();
  for (const auto& [m, d] : diff_sum) min_diff = std::min(min_diff, d);
  return {!diff_sum.empty() && min_diff > 0.03 && t_positive,
          fmt("smallest mean gain over original for m >= 20: %.4f, smallest paired t %.2f", min_diff, min_t)};
}

Verdict concatenation() {
  int ok_seeds = 0;
  double worst = std::numeric_limits<double>::infinity();
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto res = run_preset(synth::Preset::paraphrase, static_cast<std::uint64_t>(seed));
    const double original = curve_values(res.at("original")).front();
    const auto para = curve_values(res.at("paraphrase"));
    const auto cat = curve_values(res.at("concat"));
    double seed_worst = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < para.size(); ++i) seed_worst = std::min(seed_worst, cat[i] - std::max(original, para[i]));
    worst = std::min(worst, seed_worst);
    ok_seeds += seed_worst >= -0.01;
  }
  return {ok_seeds == kSeeds,
          fmt("concat >= best single - 0.01 in %d/20 seeds, worst margin %.4f", ok_seeds, worst)};
}

Verdict noise_ceiling() {
  gen::Source src(5);
  const MatrixXd clean = src.matrix(300, 10);
  const auto ids = synth::stimulus_ids(300);
  const auto exact = synth::gen_repeats(clean, 0.0, 2, 0, ids);
  const auto unit = metrics::split_half_ceiling(exact[0], exact[1]);
  const bool exact_one = (unit.per_voxel_ceiling.array() == 1.0).all();

  metrics::ScoreVector scores;
  scores.per_voxel_r = Eigen::VectorXd::LinSpaced(10, -0.2, 0.7);
  scores.mean_r = scores.per_voxel_r.mean();
  const auto normalized = metrics::normalize_by_ceiling(scores, unit);
  const bool identity = normalized.per_voxel_r == scores.per_voxel_r && normalized.mean_r == scores.mean_r;

  int within = 0;
  double worst_mean = 0.0, worst_voxel = 0.0;
  for (int seed = 0; seed < kSeeds; ++seed) {
    const auto b = synth::make_preset(synth::Preset::ceiling, static_cast<std::uint64_t>(seed));
    const auto c = metrics::split_half_ceiling(*b.rep1, *b.rep2);
    const double dev = std::abs(c.raw.mean() - 0.5);
    within += dev <= 0.05;
    worst_mean = std::max(worst_mean, dev);
    worst_voxel = std::max(worst_voxel, (c.raw.array() - 0.5).abs().maxCoeff());
  }
  return {exact_one && identity && within == kSeeds,
          fmt("noiseless ceiling exactly 1: %s, unit-ceiling identity: %s, mean ceiling within 0.05 of 0.5 in "
              "%d/20 seeds (worst %.4f, worst single voxel %.4f)",
              exact_one ? "yes" : "no", identity ? "yes" : "no", within, worst_mean, worst_voxel)};
}

Verdict split_checks() {
  gen::Source src(99);
  int clean = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<io::CatalogEntry> entries;
    const int paragraphs = src.integer(10, 60);
    for (int p = 0; p < paragraphs; ++p) {
      const int size = src.integer(1, 6);
      for (int k = 0; k < size; ++k) {
        const std::string id = "p" + std::to_string(p) + "s" + std::to_string(k);
        entries.push_back({id, "text", "p" + std::to_string(p), std::nullopt, {}});
      }
    }
    std::shuffle(entries.begin(), entries.end(), src.engine());
    const io::StimulusCatalog catalog(entries);
    bool ok = true;
    for (const auto& s : splits::make_random_splits(catalog, 3, {}, static_cast<std::uint64_t>(trial), true)) {
      ok = ok && splits::verify_no_leakage(s, catalog).empty();
    }
    clean += ok;
  }
  std::vector<io::CatalogEntry> two_corpus;
  for (int p = 0; p < 168; ++p) {
    const int size = p < 96 ? 4 : 3;
    for (int k = 0; k < size; ++k) {
      const std::string id = "p" + std::to_string(p) + "s" + std::to_string(k);
      two_corpus.push_back({id, "text", "p" + std::to_string(p), std::nullopt, {}});
    }
  }
  const auto fs = splits::make_first_sentence_split(io::StimulusCatalog(two_corpus));
  return {clean == 1000 && fs.test.size() == 63,
          fmt("leak-free grouped splits on %d/1000 random catalogs, first-sentence test rows %zu", clean,
              fs.test.size())};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Verdict determinism() {
  gen::TempDir dir;
  int checked = 0, identical = 0;
  for (auto preset : {synth::Preset::averaging, synth::Preset::sorted}) {
    const auto bundle_dir = dir / std::string(synth::to_string(preset));
    synth::save_bundle(synth::make_preset(preset, 3), bundle_dir);
    for (const auto& [name, cfg] : runner::preset_experiments(preset, 3)) {
      runner::save_config(cfg, bundle_dir / (name + ".json"));
      auto loaded = runner::load_config(bundle_dir / (name + ".json"));
      std::vector<std::string> outputs;
      for (int workers : {1, 1, 4, 4}) {
        loaded.workers = workers;
        const auto csv = bundle_dir / (name + "_" + std::to_string(outputs.size()) + ".csv");
        io::save_results(runner::run_experiment(loaded).records, csv);
        outputs.push_back(read_file(csv));
      }
      ++checked;
      identical += std::all_of(outputs.begin(), outputs.end(), [&](const std::string& s) { return s == outputs[0]; });
    }
  }
  return {checked > 0 && identical == checked,
          fmt("byte-identical results CSV at 1 and 4 workers for %d/%d configs", identical, checked)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](const std::string& name, const Verdict& v) {
    std::printf("%s  %s: %s\n", v.pass ? "PASS" : "FAIL", name.c_str(), v.detail.c_str());
    std::fflush(stdout);
    failures += !v.pass;
  };
  auto guarded = [&](const std::string& name, const std::function<Verdict()>& f) {
    try {
      report(name, f());
    } catch (const std::exception& e) {
      report(name, {false, std::string("error: ") + e.what()});
    }
  };

  guarded("ridge oracle equivalence", ridge_oracle);
  guarded("gradient solver", gradient_solver);
  guarded("lambda grid fidelity", lambda_grid);
  guarded("averaging curve", averaging_curve);
  try {
    const auto s = sorted_and_filter();
    report("sorted-order phenomenology", s.sorted);
    report("quality filter", s.filter);
  } catch (const std::exception& e) {
    report("sorted-order phenomenology", {false, std::string("error: ") + e.what()});
    report("quality filter", {false, std::string("error: ") + e.what()});
  }
  guarded("enrichment", enrichment);
  guarded("concatenation", concatenation);
  guarded("noise ceiling", noise_ceiling);
  guarded("splits", split_checks);
  guarded("determinism", determinism);

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
