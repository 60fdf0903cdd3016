#include "domst/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include <json.hpp>

#include "domst/metrics.hpp"

namespace domst {

using nlohmann::json;

// --------------------------------------------------------------- metrics ---

NseResult nse(const std::vector<double>& sim, const std::vector<double>& obs) {
  check_shape(sim.size() == obs.size(),
              cat("nse: sim length ", sim.size(), " != obs length ",
                  obs.size()));
  require(obs.size() >= 2, cat("nse: needs at least 2 points, got ",
                               obs.size()));
  NseResult r;
  r.n = static_cast<int>(obs.size());
  r.obs_mean = std::accumulate(obs.begin(), obs.end(), 0.0) / r.n;
  double ss_err = 0.0, ss_obs = 0.0;
  for (int i = 0; i < r.n; ++i) {
    require(std::isfinite(sim[i]) && std::isfinite(obs[i]),
            cat("nse: non-finite value at index ", i));
    const double e = obs[i] - sim[i];
    const double d = obs[i] - r.obs_mean;
    ss_err += e * e;
    ss_obs += d * d;
  }
  r.obs_var = ss_obs / r.n;
  if (ss_obs <= 0.0) throw ValueError("NSE undefined: zero observed variance");
  r.nse = 1.0 - ss_err / ss_obs;
  return r;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double rank = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = rank;
    i = j + 1;
  }
  return ranks;
}

double median(std::vector<double> v) {
  require(!v.empty(), "median: empty");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  check_shape(a.size() == b.size(), cat("spearman: lengths ", a.size(), " and ",
                                        b.size(), " differ"));
  require(a.size() >= 2, "spearman: needs at least 2 points");
  const std::vector<double> ra = average_ranks(a);
  const std::vector<double> rb = average_ranks(b);
  const double n = static_cast<double>(a.size());
  const double mean = (n + 1.0) / 2.0;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - mean;
    const double db = rb[i] - mean;
    cov += da * db;
    va += da * da;
    vb += db * db;
  }
  require(va > 0.0 && vb > 0.0, "spearman: constant input has no ranking");
  return cov / std::sqrt(va * vb);
}

// ------------------------------------------------------------ comparison ---

const ComparisonCell* ComparisonTable::find(const std::string& watershed,
                                            Variant v,
                                            std::uint64_t seed) const {
  for (const auto& c : cells)
    if (c.watershed_id == watershed && c.variant == v && c.seed == seed)
      return &c;
  return nullptr;
}

ComparisonTable run_comparison(const Corpus& corpus,
                               const std::vector<Variant>& variants,
                               const std::vector<std::uint64_t>& seeds,
                               const ModelConfig& base_model,
                               const TrainConfig& base_train, int pool_size,
                               double train_fraction) {
  require(!variants.empty(), "comparison: no variants");
  require(!seeds.empty(), "comparison: no seeds");
  validate_corpus(corpus);

  ComparisonTable table;
  table.variants = variants;
  table.seeds = seeds;
  for (const auto* ds : split_by_watershed(corpus))
    table.watershed_ids.push_back(ds->watershed_id);

  for (const Variant variant : variants) {
    ModelConfig cfg = base_model;
    cfg.variant = variant;
    for (const std::uint64_t seed : seeds) {
      const auto jobs = replicate_models(cfg, base_train, corpus, seed,
                                         train_fraction);
      const PipelineReport report =
          run_jobs(jobs, PipelineMode::Pooled, pool_size);
      for (const auto& jr : report.jobs) {
        ComparisonCell cell;
        cell.watershed_id = jr.watershed_id;
        cell.variant = variant;
        cell.seed = seed;
        cell.failed = jr.failed;
        cell.error = jr.error;
        cell.test_nse = jr.failed ? 0.0 : jr.test_nse;
        table.cells.push_back(std::move(cell));
      }
    }
  }

  // medians over successful cells
  for (const Variant variant : variants) {
    std::vector<double> values;
    for (const auto& c : table.cells)
      if (c.variant == variant && !c.failed) values.push_back(c.test_nse);
    if (!values.empty())
      table.median_nse[to_string(variant)] = median(values);
  }

  // pairwise win fractions and relative gains over matched cells
  for (const Variant a : variants) {
    for (const Variant b : variants) {
      if (a == b) continue;
      int wins = 0, total = 0;
      std::vector<double> gains;
      for (const auto& w : table.watershed_ids) {
        for (const std::uint64_t s : seeds) {
          const ComparisonCell* ca = table.find(w, a, s);
          const ComparisonCell* cb = table.find(w, b, s);
          if (!ca || !cb || ca->failed || cb->failed) continue;
          ++total;
          if (ca->test_nse >= cb->test_nse) ++wins;
          if (std::abs(cb->test_nse) > 1e-12)
            gains.push_back((ca->test_nse - cb->test_nse) /
                            std::abs(cb->test_nse));
        }
      }
      if (total > 0)
        table.win_fraction[cat(to_string(a), ">=", to_string(b))] =
            static_cast<double>(wins) / total;
      if (!gains.empty())
        table.median_rel_gain[cat(to_string(a), "_vs_", to_string(b))] =
            median(gains);
    }
  }
  return table;
}

std::string comparison_to_json(const ComparisonTable& table) {
  json j;
  json cells = json::array();
  for (const auto& c : table.cells) {
    json cell;
    cell["watershed_id"] = c.watershed_id;
    cell["variant"] = to_string(c.variant);
    cell["seed"] = c.seed;
    cell["failed"] = c.failed;
    if (c.failed)
      cell["error"] = c.error;
    else
      cell["test_nse"] = c.test_nse;
    cells.push_back(std::move(cell));
  }
  j["cells"] = cells;
  j["median_nse"] = table.median_nse;
  j["win_fraction"] = table.win_fraction;
  j["median_relative_gain"] = table.median_rel_gain;
  json vars = json::array();
  for (const auto v : table.variants) vars.push_back(to_string(v));
  j["variants"] = vars;
  j["watershed_ids"] = table.watershed_ids;
  j["seeds"] = table.seeds;
  return j.dump(2);
}

std::string format_comparison(const ComparisonTable& table) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-28s %-14s %-20s %s\n", "Watershed",
                "Seed", "Variant", "Test NSE");
  out += line;
  for (const auto& c : table.cells) {
    if (c.failed)
      std::snprintf(line, sizeof(line), "%-28s %-14llu %-20s FAILED (%s)\n",
                    c.watershed_id.c_str(),
                    static_cast<unsigned long long>(c.seed),
                    to_string(c.variant).c_str(), c.error.c_str());
    else
      std::snprintf(line, sizeof(line), "%-28s %-14llu %-20s %.4f\n",
                    c.watershed_id.c_str(),
                    static_cast<unsigned long long>(c.seed),
                    to_string(c.variant).c_str(), c.test_nse);
    out += line;
  }
  out += '\n';
  for (const auto& [name, value] : table.median_nse) {
    std::snprintf(line, sizeof(line), "median test NSE %-20s %.4f\n",
                  name.c_str(), value);
    out += line;
  }
  for (const auto& [pair, frac] : table.win_fraction) {
    std::snprintf(line, sizeof(line), "win fraction %-30s %.1f%%\n",
                  pair.c_str(), 100.0 * frac);
    out += line;
  }
  return out;
}

// ---------------------------------------------------------------- timing ---

TimingReport run_timing_table(const Corpus& corpus,
                              const std::vector<Variant>& variants,
                              const ModelConfig& base_model,
                              const TrainConfig& base_train,
                              std::uint64_t global_seed, int pool_size,
                              double train_fraction) {
  require(!variants.empty(), "timing: no variants");
  validate_corpus(corpus);

  TimingReport report;
  report.pool_size = pool_size;
  report.job_count = static_cast<int>(corpus.size());
  for (const Variant variant : variants) {
    ModelConfig cfg = base_model;
    cfg.variant = variant;
    const auto jobs =
        replicate_models(cfg, base_train, corpus, global_seed, train_fraction);

    const PipelineReport seq = run_jobs(jobs, PipelineMode::Sequential, 1);
    const PipelineReport pooled =
        run_jobs(jobs, PipelineMode::Pooled, pool_size);

    TimingRow row;
    row.variant = variant;
    row.time_s_seconds = seq.total_wall_seconds;
    row.time_ipd_seconds = pooled.total_wall_seconds;
    row.speedup = speedup(seq.total_wall_seconds, pooled.total_wall_seconds);
    row.failed_jobs = seq.failed_count() + pooled.failed_count();
    report.rows.push_back(row);

    auto& nse_s = report.nse_by_variant_s[to_string(variant)];
    for (const auto& jr : seq.jobs)
      if (!jr.failed) nse_s[jr.watershed_id] = jr.test_nse;
    auto& nse_d = report.nse_by_variant_ipd[to_string(variant)];
    for (const auto& jr : pooled.jobs)
      if (!jr.failed) nse_d[jr.watershed_id] = jr.test_nse;
  }
  return report;
}

std::string timing_to_json(const TimingReport& report) {
  json j;
  j["pool_size"] = report.pool_size;
  j["job_count"] = report.job_count;
  json rows = json::array();
  for (const auto& r : report.rows) {
    json row;
    row["approach"] = display_name(r.variant);
    row["variant"] = to_string(r.variant);
    row["time_s_seconds"] = r.time_s_seconds;
    row["time_ipd_seconds"] = r.time_ipd_seconds;
    row["speedup"] = r.speedup;
    row["failed_jobs"] = r.failed_jobs;
    rows.push_back(std::move(row));
  }
  j["rows"] = rows;
  j["test_nse_s"] = report.nse_by_variant_s;
  j["test_nse_ipd"] = report.nse_by_variant_ipd;
  return j.dump(2);
}

std::string format_timing_table(const TimingReport& report) {
  std::string out;
  char line[160];
  std::snprintf(line, sizeof(line), "%-28s %-12s %-12s %s\n", "Approach",
                "Time (S)", "Time (IP-D)", "Speedup");
  out += line;
  for (const auto& r : report.rows) {
    char ts[32], td[32];
    std::snprintf(ts, sizeof(ts), "%.2f s", r.time_s_seconds);
    std::snprintf(td, sizeof(td), "%.2f s", r.time_ipd_seconds);
    std::snprintf(line, sizeof(line), "%-28s %-12s %-12s %.1fx\n",
                  display_name(r.variant).c_str(), ts, td, r.speedup);
    out += line;
  }
  return out;
}

// -------------------------------------------------------------- recovery ---

double pixcon_recovery_score(const DomSTModel& model,
                             const Array& true_contribution) {
  require(model.config.use_pixcon,
          "recovery: model has no pixel-contribution block");
  check_shape(true_contribution.size() == model.pixel_count,
              cat("recovery: ground truth has ", true_contribution.size(),
                  " pixels, model ", model.pixel_count));
  const Array learned = pixcon_weights_by_pixel(model);
  std::vector<double> a(learned.data(), learned.data() + learned.size());
  std::vector<double> b(true_contribution.data(),
                        true_contribution.data() + true_contribution.size());
  return spearman(a, b);
}

// ----------------------------------------------------------- job reports ---

std::string job_result_to_json(const JobResult& result,
                               const std::string& checkpoint_path) {
  json j;
  j["watershed_id"] = result.watershed_id;
  j["failed"] = result.failed;
  if (result.failed) {
    j["error"] = result.error;
  } else {
    j["train_nse"] = result.train_nse;
    j["test_nse"] = result.test_nse;
    j["epochs"] = result.epochs;
    j["step_count"] = result.step_count;
    j["epoch_losses"] = result.epoch_losses;
    if (!checkpoint_path.empty()) j["checkpoint"] = checkpoint_path;
    j["scaler"] = {{"precip_mean", result.scaler.precip_mean},
                   {"precip_std", result.scaler.precip_std},
                   {"discharge_mean", result.scaler.discharge_mean},
                   {"discharge_std", result.scaler.discharge_std}};
  }
  j["wall_seconds"] = result.wall_seconds;
  j["data_prep_seconds"] = result.data_prep_seconds;
  j["train_seconds"] = result.train_seconds;
  return j.dump(2);
}

std::string pipeline_report_to_json(const PipelineReport& report) {
  json j;
  j["mode"] = to_string(report.mode);
  j["pool_size"] = report.pool_size;
  j["total_wall_seconds"] = report.total_wall_seconds;
  j["failed_count"] = report.failed_count();
  json jobs = json::array();
  for (const auto& r : report.jobs) {
    json job;
    job["watershed_id"] = r.watershed_id;
    job["failed"] = r.failed;
    if (r.failed) {
      job["error"] = r.error;
    } else {
      job["train_nse"] = r.train_nse;
      job["test_nse"] = r.test_nse;
      job["epochs"] = r.epochs;
      job["step_count"] = r.step_count;
    }
    job["wall_seconds"] = r.wall_seconds;
    job["data_prep_seconds"] = r.data_prep_seconds;
    job["train_seconds"] = r.train_seconds;
    jobs.push_back(std::move(job));
  }
  j["jobs"] = jobs;
  return j.dump(2);
}

}  // namespace domst
