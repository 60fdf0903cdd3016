#include "domst/exec.hpp"

#include <algorithm>
#include <atomic>
#include <cassert>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <numeric>
#include <optional>
#include <thread>
#include <unordered_set>

#include <json.hpp>

#include "domst/rng.hpp"

namespace domst {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

// Bounded-free MPSC channel; value-semantic payloads stand in for device
// transfers.
template <typename T>
class Channel {
 public:
  void send(T value) {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      queue_.push_back(std::move(value));
    }
    cv_.notify_one();
  }

  std::optional<T> recv() {
    std::unique_lock<std::mutex> lock(mutex_);
    cv_.wait(lock, [&] { return !queue_.empty() || closed_; });
    if (queue_.empty()) return std::nullopt;
    T value = std::move(queue_.front());
    queue_.pop_front();
    return value;
  }

  void close() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<T> queue_;
  bool closed_ = false;
};

struct ActivationMsg {
  std::vector<Matrix> outputs;  // one per sample in the batch
};

struct GradMsg {
  std::vector<Matrix> grad_outputs;
};

long payload_bytes(const std::vector<Matrix>& tensors) {
  long n = 0;
  for (const auto& m : tensors) n += static_cast<long>(m.size());
  return n * static_cast<long>(sizeof(double));
}

}  // namespace

std::string to_string(ExecutorKind k) {
  return k == ExecutorKind::Sequential ? "sequential" : "distributed";
}

ExecutorKind executor_from_string(const std::string& s) {
  if (s == "sequential") return ExecutorKind::Sequential;
  if (s == "distributed") return ExecutorKind::Distributed;
  throw ValueError(cat("unknown executor: ", s));
}

void TrainConfig::validate() const {
  require(epochs >= 1, cat("train config: epochs must be >= 1, got ", epochs));
  require(batch_size >= 1,
          cat("train config: batch size must be >= 1, got ", batch_size));
}

// ---------------------------------------------------------- device graph ---

void DeviceGraph::validate() const {
  require(workers.size() >= 2, "device graph: needs spatial + temporal workers");
  std::unordered_set<std::string> seen;
  for (const auto& w : workers)
    for (const auto& t : w.tensors)
      require(seen.insert(t).second,
              cat("device graph: tensor ", t, " owned by two workers"));
  const int h = spatial_count();
  require(static_cast<int>(edges.size()) == 2 * h,
          cat("device graph: expected ", 2 * h, " edges, got ", edges.size()));
  for (int i = 0; i < h; ++i) {
    require(edges[2 * i].from == i && edges[2 * i].to == temporal_index(),
            "device graph: malformed activation edge");
    require(edges[2 * i + 1].from == temporal_index() && edges[2 * i + 1].to == i,
            "device graph: malformed gradient edge");
  }
}

DeviceGraph build_device_graph(const DomSTModel& model) {
  DeviceGraph g;
  for (int h = 0; h < model.head_count(); ++h) {
    DeviceGraph::Worker w;
    w.name = cat("spatial", h);
    const auto& head = model.heads[h];
    if (head.has_pixcon()) w.tensors.push_back(cat("head", h, "/pixcon_logits"));
    for (std::size_t l = 0; l < head.conv.size(); ++l) {
      for (std::size_t c = 0; c < head.conv[l].kernels.size(); ++c)
        w.tensors.push_back(cat("head", h, "/conv", l, "/kernel", c));
      w.tensors.push_back(cat("head", h, "/conv", l, "/bias"));
    }
    g.workers.push_back(std::move(w));
  }
  DeviceGraph::Worker t;
  t.name = "temporal";
  for (std::size_t l = 0; l < model.temporal.lstm.layers.size(); ++l) {
    t.tensors.push_back(cat("temporal/lstm", l, "/w_input"));
    t.tensors.push_back(cat("temporal/lstm", l, "/w_recurrent"));
    t.tensors.push_back(cat("temporal/lstm", l, "/bias"));
  }
  for (std::size_t l = 0; l < model.temporal.dense.size(); ++l) {
    t.tensors.push_back(cat("temporal/dense", l, "/weight"));
    t.tensors.push_back(cat("temporal/dense", l, "/bias"));
  }
  g.workers.push_back(std::move(t));
  for (int h = 0; h < model.head_count(); ++h) {
    g.edges.push_back({h, g.temporal_index()});
    g.edges.push_back({g.temporal_index(), h});
  }
  g.validate();
  return g;
}

// -------------------------------------------------------------- schedule ---

std::vector<std::vector<int>> make_batch_schedule(int sample_count, int epochs,
                                                  int batch_size,
                                                  std::uint64_t shuffle_seed) {
  require(sample_count >= 1, "schedule: no samples");
  std::vector<std::vector<int>> batches;
  Rng base = Rng(shuffle_seed).split("shuffle");
  for (int e = 0; e < epochs; ++e) {
    std::vector<int> order(sample_count);
    std::iota(order.begin(), order.end(), 0);
    Rng epoch_rng = base.split(static_cast<std::uint64_t>(e));
    epoch_rng.shuffle(order);
    for (int start = 0; start < sample_count; start += batch_size) {
      const int len = std::min(batch_size, sample_count - start);
      batches.emplace_back(order.begin() + start, order.begin() + start + len);
    }
  }
  return batches;
}

namespace {

int steps_per_epoch(int sample_count, int batch_size) {
  return (sample_count + batch_size - 1) / batch_size;
}

std::vector<double> epoch_means(const std::vector<double>& step_losses,
                                int steps_each) {
  std::vector<double> out;
  for (std::size_t s = 0; s < step_losses.size(); s += steps_each) {
    const std::size_t end = std::min(step_losses.size(),
                                     s + static_cast<std::size_t>(steps_each));
    double sum = 0.0;
    for (std::size_t i = s; i < end; ++i) sum += step_losses[i];
    out.push_back(sum / static_cast<double>(end - s));
  }
  return out;
}

}  // namespace

// ------------------------------------------------------------ sequential ---

TrainResult run_sequential(DomSTModel model, const std::vector<Sample>& samples,
                           const TrainConfig& config) {
  config.validate();
  require(!samples.empty(), "run_sequential: no samples");
  const double t_start = now_seconds();

  const auto schedule = make_batch_schedule(
      static_cast<int>(samples.size()), config.epochs, config.batch_size,
      config.shuffle_seed);

  const int h_count = model.head_count();
  std::vector<AdamState> head_states;
  for (int h = 0; h < h_count; ++h)
    head_states.emplace_back(flat_size(model.heads[h]), config.adam);
  AdamState temporal_state(flat_size(model.temporal), config.adam);

  TrainResult result;
  result.step_losses.reserve(schedule.size());
  for (std::size_t s = 0; s < schedule.size(); ++s) {
    const auto& batch = schedule[s];
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    std::vector<Array> head_acc(h_count);
    for (int h = 0; h < h_count; ++h)
      head_acc[h] = Array::Zero(flat_size(model.heads[h]));
    Array temporal_acc = Array::Zero(flat_size(model.temporal));
    double loss_sum = 0.0;
    for (int idx : batch) {
      ForwardCache cache;
      const double pred = forward(model, samples[idx], &cache);
      const double err = pred - samples[idx].discharge;
      const double loss = err * err;
      if (!std::isfinite(loss))
        throw Error(cat("training aborted at step ", s,
                        ": non-finite loss on sample ", idx));
      loss_sum += loss;
      const ModelGrads grads = backward(model, cache, 2.0 * err);
      for (int h = 0; h < h_count; ++h) head_acc[h] += flatten(grads.heads[h]);
      temporal_acc += flatten(grads.temporal);
    }
    for (int h = 0; h < h_count; ++h) {
      head_acc[h] *= inv_b;
      Array flat = flatten(model.heads[h]);
      adam_step(flat, head_acc[h], head_states[h]);
      unflatten(model.heads[h], flat);
    }
    temporal_acc *= inv_b;
    Array flat = flatten(model.temporal);
    adam_step(flat, temporal_acc, temporal_state);
    unflatten(model.temporal, flat);
    result.step_losses.push_back(loss_sum * inv_b);
  }

  result.epoch_losses = epoch_means(
      result.step_losses,
      steps_per_epoch(static_cast<int>(samples.size()), config.batch_size));
  result.model = std::move(model);
  result.wall_seconds = now_seconds() - t_start;
  return result;
}

// ----------------------------------------------------------- distributed ---

namespace {

struct WorkerError {
  std::mutex mutex;
  std::string message;  // first failure wins
  bool failed = false;

  void set(const std::string& msg) {
    std::lock_guard<std::mutex> lock(mutex);
    if (!failed) {
      failed = true;
      message = msg;
    }
  }
};

}  // namespace

TrainResult run_distributed(DomSTModel model,
                            const std::vector<Sample>& samples,
                            const TrainConfig& config) {
  config.validate();
  require(!samples.empty(), "run_distributed: no samples");
  const double t_start = now_seconds();

  const DeviceGraph graph = build_device_graph(model);
#ifndef NDEBUG
  graph.validate();  // ownership discipline: every tensor has one owner
#endif

  const auto schedule = make_batch_schedule(
      static_cast<int>(samples.size()), config.epochs, config.batch_size,
      config.shuffle_seed);
  const int h_count = model.head_count();
  const int step_count = static_cast<int>(schedule.size());
  const int channels_per_head = model.head_output_channels();

  std::vector<Channel<ActivationMsg>> to_temporal(h_count);
  std::vector<Channel<GradMsg>> to_head(h_count);
  std::atomic<bool> abort{false};
  WorkerError error;

  // Each spatial worker takes sole ownership of its head shard; the
  // coordinating thread owns the temporal shard. Shards only meet again
  // after the join barrier.
  std::vector<HeadParams> final_heads(h_count);
  std::vector<std::vector<double>> head_busy(
      h_count, std::vector<double>(step_count, 0.0));

  auto spatial_worker = [&](int h, HeadParams head) {
    AdamState state(flat_size(head), config.adam);
    try {
      for (int s = 0; s < step_count; ++s) {
        if (abort.load()) break;
        const auto& batch = schedule[s];
        double t0 = now_seconds();
        ActivationMsg msg;
        std::vector<HeadCache> caches(batch.size());
        msg.outputs.reserve(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
          const Matrix rows =
              head_input_rows(model.partition, h, samples[batch[i]].x);
          msg.outputs.push_back(head_forward(head, rows, &caches[i]));
        }
        head_busy[h][s] += now_seconds() - t0;
        to_temporal[h].send(std::move(msg));
        std::optional<GradMsg> grads = to_head[h].recv();
        if (!grads) break;  // aborted or channel closed
        t0 = now_seconds();
        Array acc = Array::Zero(flat_size(head));
        for (std::size_t i = 0; i < batch.size(); ++i) {
          HeadParams g;
          g.pixcon = zeros_like(head.pixcon);
          for (const auto& c : head.conv) g.conv.push_back(zeros_like(c));
          head_backward(head, caches[i], grads->grad_outputs[i], g);
          acc += flatten(g);
        }
        acc *= 1.0 / static_cast<double>(batch.size());
        Array flat = flatten(head);
        adam_step(flat, acc, state);
        unflatten(head, flat);
        head_busy[h][s] += now_seconds() - t0;
      }
    } catch (const std::exception& e) {
      error.set(cat("head worker ", h, " failed: ", e.what()));
      abort.store(true);
      to_temporal[h].close();
    }
    final_heads[h] = std::move(head);
  };

  std::vector<std::thread> threads;
  threads.reserve(h_count);
  for (int h = 0; h < h_count; ++h)
    threads.emplace_back(spatial_worker, h, std::move(model.heads[h]));
  model.heads.clear();

  TemporalParams temporal = std::move(model.temporal);
  AdamState temporal_state(flat_size(temporal), config.adam);

  TrainResult result;
  result.step_losses.reserve(step_count);
  if (config.record_traces) result.traces.reserve(step_count);

  auto shutdown = [&](bool set_abort) {
    if (set_abort) abort.store(true);
    for (auto& c : to_head) c.close();
    for (auto& c : to_temporal) c.close();
    for (auto& t : threads)
      if (t.joinable()) t.join();
  };

  try {
    for (int s = 0; s < step_count; ++s) {
      const auto& batch = schedule[s];
      const double inv_b = 1.0 / static_cast<double>(batch.size());

      std::vector<ActivationMsg> acts(h_count);
      for (int h = 0; h < h_count; ++h) {
        std::optional<ActivationMsg> msg = to_temporal[h].recv();
        if (!msg)
          throw Error(error.failed ? error.message
                                   : cat("head worker ", h,
                                         " stopped before step ", s));
        acts[h] = std::move(*msg);
      }

      const double t0 = now_seconds();
      Array temporal_acc = Array::Zero(flat_size(temporal));
      std::vector<GradMsg> grad_msgs(h_count);
      for (int h = 0; h < h_count; ++h)
        grad_msgs[h].grad_outputs.resize(batch.size());
      double loss_sum = 0.0;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const Sample& sample = samples[batch[i]];
        Matrix concat(h_count * channels_per_head, acts[0].outputs[i].cols());
        for (int h = 0; h < h_count; ++h)
          concat.middleRows(h * channels_per_head, channels_per_head) =
              acts[h].outputs[i];
        TemporalCache cache;
        const double pred =
            temporal_forward(temporal, concat, sample.p_target,
                             model.config.plus_p(), &cache);
        const double err = pred - sample.discharge;
        const double loss = err * err;
        if (!std::isfinite(loss))
          throw Error(cat("training aborted at step ", s,
                          ": non-finite loss on sample ", batch[i]));
        loss_sum += loss;
        TemporalParams g;
        g.lstm = zeros_like(temporal.lstm);
        for (const auto& d : temporal.dense) g.dense.push_back(zeros_like(d));
        const TemporalBackwardResult tb =
            temporal_backward(temporal, cache, 2.0 * err, g);
        temporal_acc += flatten(g);
        for (int h = 0; h < h_count; ++h)
          grad_msgs[h].grad_outputs[i] =
              tb.grad_concat.middleRows(h * channels_per_head,
                                        channels_per_head);
      }
      const double temporal_busy = now_seconds() - t0;

      StepTrace trace;
      if (config.record_traces) {
        trace.step = s;
        trace.activation_edges.resize(h_count);
        trace.gradient_edges.resize(h_count);
        for (int h = 0; h < h_count; ++h) {
          trace.activation_edges[h] = {1, payload_bytes(acts[h].outputs)};
          trace.gradient_edges[h] = {1,
                                     payload_bytes(grad_msgs[h].grad_outputs)};
        }
      }

      // unblock the heads, then apply the temporal update
      for (int h = 0; h < h_count; ++h)
        to_head[h].send(std::move(grad_msgs[h]));
      const double t1 = now_seconds();
      temporal_acc *= inv_b;
      Array flat = flatten(temporal);
      adam_step(flat, temporal_acc, temporal_state);
      unflatten(temporal, flat);

      const double step_loss = loss_sum * inv_b;
      result.step_losses.push_back(step_loss);
      if (config.record_traces) {
        trace.loss = step_loss;
        trace.temporal_busy_seconds = temporal_busy + (now_seconds() - t1);
        result.traces.push_back(std::move(trace));
      }
    }
  } catch (...) {
    shutdown(true);
    throw;
  }

  shutdown(false);
  if (error.failed) throw Error(error.message);

  if (config.record_traces) {
    for (int s = 0; s < step_count; ++s) {
      result.traces[s].head_busy_seconds.resize(h_count);
      for (int h = 0; h < h_count; ++h)
        result.traces[s].head_busy_seconds[h] = head_busy[h][s];
    }
  }

  model.heads = std::move(final_heads);
  model.temporal = std::move(temporal);
  result.epoch_losses = epoch_means(
      result.step_losses,
      steps_per_epoch(static_cast<int>(samples.size()), config.batch_size));
  result.model = std::move(model);
  result.wall_seconds = now_seconds() - t_start;
  return result;
}

TrainResult run_training(DomSTModel model, const std::vector<Sample>& samples,
                         const TrainConfig& config) {
  return config.executor == ExecutorKind::Sequential
             ? run_sequential(std::move(model), samples, config)
             : run_distributed(std::move(model), samples, config);
}

// ---------------------------------------------------------------- traces ---

TraceSummary trace_summary(const std::vector<StepTrace>& traces) {
  require(!traces.empty(), "trace_summary: no traces");
  const int h_count = static_cast<int>(traces[0].head_busy_seconds.size());
  require(h_count >= 1, "trace_summary: traces carry no head timings");

  TraceSummary s;
  s.steps = static_cast<int>(traces.size());
  s.head_busy_mean_seconds.assign(h_count, 0.0);
  for (const auto& t : traces) {
    check_shape(static_cast<int>(t.head_busy_seconds.size()) == h_count,
                "trace_summary: inconsistent head count across traces");
    for (int h = 0; h < h_count; ++h)
      s.head_busy_mean_seconds[h] += t.head_busy_seconds[h];
    s.temporal_busy_mean_seconds += t.temporal_busy_seconds;
    for (const auto& e : t.activation_edges) {
      s.total_messages += e.messages;
      s.total_bytes += e.bytes;
    }
    for (const auto& e : t.gradient_edges) {
      s.total_messages += e.messages;
      s.total_bytes += e.bytes;
    }
  }
  for (int h = 0; h < h_count; ++h)
    s.head_busy_mean_seconds[h] /= static_cast<double>(s.steps);
  s.temporal_busy_mean_seconds /= static_cast<double>(s.steps);
  s.mean_head_busy_seconds =
      std::accumulate(s.head_busy_mean_seconds.begin(),
                      s.head_busy_mean_seconds.end(), 0.0) /
      static_cast<double>(h_count);
  s.max_head_busy_seconds = *std::max_element(s.head_busy_mean_seconds.begin(),
                                              s.head_busy_mean_seconds.end());
  const double min_busy = *std::min_element(s.head_busy_mean_seconds.begin(),
                                            s.head_busy_mean_seconds.end());
  s.imbalance_ratio =
      min_busy > 0.0 ? s.max_head_busy_seconds / min_busy
                     : (s.max_head_busy_seconds > 0.0 ? std::numeric_limits<double>::infinity()
                                                      : 1.0);
  return s;
}

std::string traces_to_jsonl(const std::vector<StepTrace>& traces) {
  std::string out;
  for (const auto& t : traces) {
    nlohmann::json j;
    j["step"] = t.step;
    j["loss"] = t.loss;
    j["head_busy_seconds"] = t.head_busy_seconds;
    j["temporal_busy_seconds"] = t.temporal_busy_seconds;
    nlohmann::json act = nlohmann::json::array();
    for (const auto& e : t.activation_edges)
      act.push_back({{"messages", e.messages}, {"bytes", e.bytes}});
    nlohmann::json grad = nlohmann::json::array();
    for (const auto& e : t.gradient_edges)
      grad.push_back({{"messages", e.messages}, {"bytes", e.bytes}});
    j["activation_edges"] = act;
    j["gradient_edges"] = grad;
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace domst
