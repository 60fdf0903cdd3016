#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "domst/model.hpp"
#include "domst/tensor.hpp"

namespace domst {

enum class ExecutorKind { Sequential, Distributed };

std::string to_string(ExecutorKind k);
ExecutorKind executor_from_string(const std::string& s);

struct TrainConfig {
  int epochs = 1;
  int batch_size = 1;
  AdamConfig adam;
  std::uint64_t shuffle_seed = 0;
  ExecutorKind executor = ExecutorKind::Sequential;
  bool record_traces = false;

  void validate() const;
};

// One directed transfer between two logical devices within a step.
struct EdgeUse {
  int messages = 0;
  long bytes = 0;
};

// Timing and traffic evidence for one distributed training step.
struct StepTrace {
  int step = 0;
  double loss = 0.0;
  std::vector<double> head_busy_seconds;  // per spatial worker
  double temporal_busy_seconds = 0.0;
  std::vector<EdgeUse> activation_edges;  // head -> temporal, per head
  std::vector<EdgeUse> gradient_edges;    // temporal -> head, per head
};

struct TrainResult {
  DomSTModel model;
  std::vector<double> step_losses;
  std::vector<double> epoch_losses;  // mean step loss per epoch
  double wall_seconds = 0.0;
  std::vector<StepTrace> traces;  // distributed executor only
};

// The logical-device layout of one training job: one worker per spatial
// head plus the temporal worker, with one activation edge and one gradient
// edge per head. Every parameter tensor is owned by exactly one worker.
struct DeviceGraph {
  struct Worker {
    std::string name;
    std::vector<std::string> tensors;
  };
  struct Edge {
    int from = 0;
    int to = 0;
  };
  std::vector<Worker> workers;  // spatial workers 0..H-1, temporal last
  std::vector<Edge> edges;      // exactly 2H directed links

  int spatial_count() const { return static_cast<int>(workers.size()) - 1; }
  int temporal_index() const { return static_cast<int>(workers.size()) - 1; }
  void validate() const;  // unique ownership, exact edge set
};

DeviceGraph build_device_graph(const DomSTModel& model);

// Deterministic epoch shuffling shared by both executors: epoch e uses the
// substream (shuffle_seed, "shuffle", e).
std::vector<std::vector<int>> make_batch_schedule(int sample_count,
                                                  int epochs, int batch_size,
                                                  std::uint64_t shuffle_seed);

// Reference executor: one thread computes heads in order, then the temporal
// block, per sample; gradients are averaged over the batch before the
// optimizer step.
TrainResult run_sequential(DomSTModel model, const std::vector<Sample>& samples,
                           const TrainConfig& config);

// Model-parallel executor: each head (conv stack + pixel-contribution shard)
// runs on its own worker thread, the temporal block on the coordinating
// thread. Workers exchange value-semantic tensors over channels; one
// activation and one gradient message per head per step. Produces per-step
// losses identical to run_sequential for the same seed.
TrainResult run_distributed(DomSTModel model,
                            const std::vector<Sample>& samples,
                            const TrainConfig& config);

TrainResult run_training(DomSTModel model, const std::vector<Sample>& samples,
                         const TrainConfig& config);

struct TraceSummary {
  int steps = 0;
  std::vector<double> head_busy_mean_seconds;
  double mean_head_busy_seconds = 0.0;
  double max_head_busy_seconds = 0.0;
  double temporal_busy_mean_seconds = 0.0;
  double imbalance_ratio = 1.0;  // max/min per-head mean busy time
  long total_messages = 0;
  long total_bytes = 0;
};

TraceSummary trace_summary(const std::vector<StepTrace>& traces);

std::string traces_to_jsonl(const std::vector<StepTrace>& traces);

}  // namespace domst
