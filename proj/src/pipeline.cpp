#include "domst/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <thread>

#include "domst/metrics.hpp"
#include "domst/rng.hpp"

namespace domst {

namespace {

double now_seconds() {
  return std::chrono::duration<double>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace

void validate_corpus(const Corpus& corpus) {
  require(!corpus.empty(), "corpus: empty");
  std::vector<std::string> ids;
  for (const auto& ds : corpus) {
    ds.validate();
    ids.push_back(ds.watershed_id);
  }
  std::sort(ids.begin(), ids.end());
  for (std::size_t i = 1; i < ids.size(); ++i)
    require(ids[i] != ids[i - 1],
            cat("corpus: duplicate watershed id '", ids[i], "'"));
}

std::vector<const WatershedDataset*> split_by_watershed(const Corpus& corpus) {
  validate_corpus(corpus);
  std::vector<const WatershedDataset*> out;
  out.reserve(corpus.size());
  for (const auto& ds : corpus) out.push_back(&ds);
  std::sort(out.begin(), out.end(),
            [](const WatershedDataset* a, const WatershedDataset* b) {
              return a->watershed_id < b->watershed_id;
            });
  return out;
}

std::uint64_t derive_job_seed(std::uint64_t global_seed,
                              const std::string& watershed_id) {
  return Rng::mix(global_seed, Rng::hash_string(watershed_id));
}

std::vector<Job> replicate_models(const ModelConfig& base_model,
                                  const TrainConfig& base_train,
                                  const Corpus& corpus,
                                  std::uint64_t global_seed,
                                  double train_fraction, bool standardize) {
  const auto datasets = split_by_watershed(corpus);
  std::vector<Job> jobs;
  jobs.reserve(datasets.size());
  for (const auto* ds : datasets) {
    Job job;
    job.watershed_id = ds->watershed_id;
    job.dataset = ds;
    job.model_config = base_model;
    job.model_config.seed = derive_job_seed(global_seed, ds->watershed_id);
    job.train_config = base_train;
    job.train_config.shuffle_seed = job.model_config.seed;
    job.train_fraction = train_fraction;
    job.standardize = standardize;
    jobs.push_back(std::move(job));
  }
  return jobs;
}

JobResult run_single_job(const Job& job) {
  JobResult r;
  r.watershed_id = job.watershed_id;
  const double t_start = now_seconds();
  try {
    require(job.dataset != nullptr, "job: no dataset");

    const auto samples = window_samples(*job.dataset, job.model_config.lookback);
    auto [train_raw, test_raw] = chrono_split(samples, job.train_fraction);

    Scaler scaler;  // identity unless standardizing
    std::vector<Sample> train = train_raw;
    std::vector<Sample> test = test_raw;
    if (job.standardize) {
      scaler = fit_scaler(train_raw);
      train = transform_all(scaler, train_raw);
      test = transform_all(scaler, test_raw);
    }
    r.scaler = scaler;

    DomSTModel model = build_model(job.model_config, job.dataset->pixels);
    r.data_prep_seconds = now_seconds() - t_start;

    const double t_train = now_seconds();
    TrainResult trained = run_training(std::move(model), train, job.train_config);
    r.train_seconds = now_seconds() - t_train;

    r.epochs = job.train_config.epochs;
    r.step_count = static_cast<long>(trained.step_losses.size());
    r.epoch_losses = trained.epoch_losses;
    r.traces = std::move(trained.traces);

    // score in original units; observations come from the raw samples
    const auto score = [&](const std::vector<Sample>& scaled,
                           const std::vector<Sample>& raw) {
      std::vector<double> sim = predict_series(trained.model, scaled);
      if (job.standardize)
        for (double& v : sim) v = scaler.restore_discharge(v);
      std::vector<double> obs;
      obs.reserve(raw.size());
      for (const auto& s : raw) obs.push_back(s.discharge);
      return nse(sim, obs).nse;
    };
    r.train_nse = score(train, train_raw);
    r.test_nse = score(test, test_raw);
    r.model = std::move(trained.model);
  } catch (const std::exception& e) {
    r.failed = true;
    r.error = e.what();
  }
  r.wall_seconds = now_seconds() - t_start;
  return r;
}

std::string to_string(PipelineMode m) {
  return m == PipelineMode::Sequential ? "S" : "IP-D";
}

PipelineMode pipeline_mode_from_string(const std::string& s) {
  if (s == "S" || s == "sequential") return PipelineMode::Sequential;
  if (s == "IP-D" || s == "pooled") return PipelineMode::Pooled;
  throw ValueError(cat("unknown pipeline mode: ", s));
}

int PipelineReport::failed_count() const {
  int n = 0;
  for (const auto& j : jobs) n += j.failed ? 1 : 0;
  return n;
}

PipelineReport run_jobs(const std::vector<Job>& jobs, PipelineMode mode,
                        int pool_size) {
  require(!jobs.empty(), "run_jobs: no jobs");
  require(pool_size >= 1, cat("run_jobs: pool size must be >= 1, got ",
                              pool_size));

  // queue order is ascending watershed_id in both modes
  std::vector<const Job*> queue;
  queue.reserve(jobs.size());
  for (const auto& j : jobs) queue.push_back(&j);
  std::sort(queue.begin(), queue.end(), [](const Job* a, const Job* b) {
    return a->watershed_id < b->watershed_id;
  });
  for (std::size_t i = 1; i < queue.size(); ++i)
    require(queue[i]->watershed_id != queue[i - 1]->watershed_id,
            cat("run_jobs: duplicate watershed id '", queue[i]->watershed_id,
                "'"));

  PipelineReport report;
  report.mode = mode;
  report.pool_size = mode == PipelineMode::Sequential ? 1 : pool_size;
  report.jobs.resize(queue.size());

  const double t_start = now_seconds();
  if (mode == PipelineMode::Sequential) {
    for (std::size_t i = 0; i < queue.size(); ++i)
      report.jobs[i] = run_single_job(*queue[i]);
  } else {
    std::atomic<std::size_t> next{0};
    auto pool_worker = [&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= queue.size()) return;
        report.jobs[i] = run_single_job(*queue[i]);
      }
    };
    std::vector<std::thread> pool;
    const int workers = std::min<int>(pool_size, static_cast<int>(queue.size()));
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(pool_worker);
    for (auto& t : pool) t.join();
  }
  report.total_wall_seconds = now_seconds() - t_start;
  return report;
}

double speedup(double time_s_seconds, double time_ipd_seconds) {
  require(time_s_seconds > 0.0 && time_ipd_seconds > 0.0,
          "speedup: times must be positive");
  return time_s_seconds / time_ipd_seconds;
}

}  // namespace domst
