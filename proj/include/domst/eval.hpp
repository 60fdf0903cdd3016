#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "domst/metrics.hpp"
#include "domst/pipeline.hpp"

namespace domst {

// ---------------------------------------------------------------------------
// Three-way variant comparison over a multi-watershed corpus: every
// (watershed, variant, seed) cell is a full training job; cells aggregate
// into per-variant medians and pairwise win fractions.
// ---------------------------------------------------------------------------

struct ComparisonCell {
  std::string watershed_id;
  Variant variant = Variant::Singlehead;
  std::uint64_t seed = 0;
  double test_nse = 0.0;
  bool failed = false;
  std::string error;
};

struct ComparisonTable {
  std::vector<Variant> variants;
  std::vector<std::string> watershed_ids;
  std::vector<std::uint64_t> seeds;
  std::vector<ComparisonCell> cells;
  std::map<std::string, double> median_nse;       // variant name -> median
  std::map<std::string, double> win_fraction;     // "A>=B" -> fraction
  std::map<std::string, double> median_rel_gain;  // "A_vs_B" -> median gain

  const ComparisonCell* find(const std::string& watershed, Variant v,
                             std::uint64_t seed) const;
};

ComparisonTable run_comparison(const Corpus& corpus,
                               const std::vector<Variant>& variants,
                               const std::vector<std::uint64_t>& seeds,
                               const ModelConfig& base_model,
                               const TrainConfig& base_train, int pool_size,
                               double train_fraction = 0.8);

std::string comparison_to_json(const ComparisonTable& table);
std::string format_comparison(const ComparisonTable& table);

// ---------------------------------------------------------------------------
// Input-pipeline timing table: every variant trained over the same jobs in
// S mode and IP-D mode; rows report both times and the speedup.
// ---------------------------------------------------------------------------

struct TimingRow {
  Variant variant = Variant::Singlehead;
  double time_s_seconds = 0.0;
  double time_ipd_seconds = 0.0;
  double speedup = 1.0;
  int failed_jobs = 0;
};

struct TimingReport {
  std::vector<TimingRow> rows;
  int pool_size = 1;
  int job_count = 0;
  // per-variant per-watershed test NSE, identical across modes by
  // construction; kept for the identity check and the JSON report
  std::map<std::string, std::map<std::string, double>> nse_by_variant_s;
  std::map<std::string, std::map<std::string, double>> nse_by_variant_ipd;
};

TimingReport run_timing_table(const Corpus& corpus,
                              const std::vector<Variant>& variants,
                              const ModelConfig& base_model,
                              const TrainConfig& base_train,
                              std::uint64_t global_seed, int pool_size,
                              double train_fraction = 0.8);

std::string timing_to_json(const TimingReport& report);
std::string format_timing_table(const TimingReport& report);

// ---------------------------------------------------------------------------
// Pixel-contribution recovery: rank agreement between the learned weights
// and the generator's true contributions.
// ---------------------------------------------------------------------------

double pixcon_recovery_score(const DomSTModel& model,
                             const Array& true_contribution);

// JSON emission for single runs (the `train` subcommand).
std::string job_result_to_json(const JobResult& result,
                               const std::string& checkpoint_path);
std::string pipeline_report_to_json(const PipelineReport& report);

}  // namespace domst
