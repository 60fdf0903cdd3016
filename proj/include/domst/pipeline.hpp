#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "domst/data.hpp"
#include "domst/exec.hpp"
#include "domst/model.hpp"

namespace domst {

// The multi-watershed corpus fed to the input pipeline. Watershed ids must
// be unique; each dataset is internally consistent (see validate).
using Corpus = std::vector<WatershedDataset>;

void validate_corpus(const Corpus& corpus);

// One per-watershed datasets in ascending watershed_id order.
std::vector<const WatershedDataset*> split_by_watershed(const Corpus& corpus);

// One training job: a model replica configured for one watershed. The job
// seed is derived from (global_seed, watershed_id), so replicas are
// architecture-identical but initialized independently.
struct Job {
  std::string watershed_id;
  const WatershedDataset* dataset = nullptr;
  ModelConfig model_config;  // seed already derived
  TrainConfig train_config;
  double train_fraction = 0.8;
  bool standardize = true;
};

std::uint64_t derive_job_seed(std::uint64_t global_seed,
                              const std::string& watershed_id);

std::vector<Job> replicate_models(const ModelConfig& base_model,
                                  const TrainConfig& base_train,
                                  const Corpus& corpus,
                                  std::uint64_t global_seed,
                                  double train_fraction = 0.8,
                                  bool standardize = true);

struct JobResult {
  std::string watershed_id;
  bool failed = false;
  std::string error;
  double train_nse = 0.0;
  double test_nse = 0.0;
  int epochs = 0;
  long step_count = 0;
  std::vector<double> epoch_losses;
  double wall_seconds = 0.0;       // prep + training + evaluation
  double data_prep_seconds = 0.0;  // windowing/split/scaling/model build
  double train_seconds = 0.0;
  DomSTModel model;                // trained; empty on failure
  Scaler scaler;
  std::vector<StepTrace> traces;
};

// Executes one job start to finish (window, split, standardize, build the
// replica, train, score). Never throws for training failures; the result
// carries them.
JobResult run_single_job(const Job& job);

// S runs jobs one at a time; IP-D pulls them from a queue with a fixed-size
// worker pool. Both orders are ascending watershed_id, so per-job results
// are identical between modes and only wall time differs.
enum class PipelineMode { Sequential, Pooled };

std::string to_string(PipelineMode m);
PipelineMode pipeline_mode_from_string(const std::string& s);

struct PipelineReport {
  PipelineMode mode = PipelineMode::Sequential;
  int pool_size = 1;
  double total_wall_seconds = 0.0;
  std::vector<JobResult> jobs;  // ascending watershed_id

  int failed_count() const;
};

PipelineReport run_jobs(const std::vector<Job>& jobs, PipelineMode mode,
                        int pool_size);

// time_s / time_ipd; presentation rounds to one decimal.
double speedup(double time_s_seconds, double time_ipd_seconds);

}  // namespace domst
