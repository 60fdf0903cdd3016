// Command-line front end: synthetic data generation, single-watershed
// training, the three-variant comparison harness, the S vs IP-D timing
// benchmark, and the gradient checker.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "domst/eval.hpp"
#include "domst/exec.hpp"
#include "domst/gradcheck.hpp"
#include "domst/pipeline.hpp"
#include "domst/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace domst;

namespace {

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string config_path;
  int pool = 2;
  std::string out_dir = "out";
  bool emit_traces = false;
  bool dump_partition = false;
};

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  require(out.good(), cat("cannot write ", path.string()));
  out << text;
}

// --config file: {"model": {...}, "train": {...}, "gen": {...}}, every
// section and field optional; explicit CLI flags override file values.
void apply_config_file(const std::string& path, ModelConfig& model,
                       TrainConfig& train, GenConfig& gen) {
  std::ifstream in(path);
  require(in.good(), cat("cannot open config file ", path));
  json j = json::parse(in);
  if (j.contains("model")) {
    const json& m = j["model"];
    if (m.contains("variant"))
      model.variant = variant_from_string(m["variant"].get<std::string>());
    if (m.contains("heads")) model.heads = m["heads"].get<int>();
    if (m.contains("conv_layers")) {
      model.conv_layers.clear();
      for (const auto& l : m["conv_layers"])
        model.conv_layers.push_back({l.at("out_channels").get<int>(),
                                     l.at("kernel_width").get<int>(),
                                     l.value("stride", 1)});
    }
    if (m.contains("lstm_hidden")) model.lstm_hidden = m["lstm_hidden"].get<int>();
    if (m.contains("lstm_layers")) model.lstm_layers = m["lstm_layers"].get<int>();
    if (m.contains("dense_hidden"))
      model.dense_hidden = m["dense_hidden"].get<std::vector<int>>();
    if (m.contains("lookback")) model.lookback = m["lookback"].get<int>();
    if (m.contains("pixcon_tau_km"))
      model.pixcon_tau_km = m["pixcon_tau_km"].get<double>();
    if (m.contains("partition_strategy"))
      model.partition_strategy = partition_strategy_from_string(
          m["partition_strategy"].get<std::string>());
  }
  if (j.contains("train")) {
    const json& t = j["train"];
    if (t.contains("epochs")) train.epochs = t["epochs"].get<int>();
    if (t.contains("batch_size")) train.batch_size = t["batch_size"].get<int>();
    if (t.contains("lr")) train.adam.lr = t["lr"].get<double>();
    if (t.contains("executor"))
      train.executor = executor_from_string(t["executor"].get<std::string>());
  }
  if (j.contains("gen")) {
    const json& g = j["gen"];
    if (g.contains("grid_rows")) gen.grid_rows = g["grid_rows"].get<int>();
    if (g.contains("grid_cols")) gen.grid_cols = g["grid_cols"].get<int>();
    if (g.contains("total_days")) gen.total_days = g["total_days"].get<int>();
    if (g.contains("tau_km")) gen.tau_km = g["tau_km"].get<double>();
    if (g.contains("max_distance_km"))
      gen.max_distance_km = g["max_distance_km"].get<double>();
    if (g.contains("unit_hydrograph"))
      gen.unit_hydrograph = g["unit_hydrograph"].get<std::vector<double>>();
    if (g.contains("base_flow_cms"))
      gen.base_flow_cms = g["base_flow_cms"].get<double>();
    if (g.contains("wet_probability"))
      gen.wet_probability = g["wet_probability"].get<double>();
    if (g.contains("seasonal_amplitude"))
      gen.seasonal_amplitude = g["seasonal_amplitude"].get<double>();
    if (g.contains("gamma_shape")) gen.gamma_shape = g["gamma_shape"].get<double>();
    if (g.contains("gamma_scale_mm"))
      gen.gamma_scale_mm = g["gamma_scale_mm"].get<double>();
    if (g.contains("noise_fraction"))
      gen.noise_fraction = g["noise_fraction"].get<double>();
    if (g.contains("start_date"))
      gen.start_date = g["start_date"].get<std::string>();
  }
}

std::string watershed_name(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "ws%02d", index);
  return buf;
}

Corpus synthetic_corpus(const GenConfig& base, int watersheds,
                        std::uint64_t seed) {
  Corpus corpus;
  for (int w = 0; w < watersheds; ++w) {
    GenConfig g = base;
    g.watershed_id = watershed_name(w);
    g.seed = seed;
    corpus.push_back(generate_synthetic(g));
  }
  return corpus;
}

WatershedDataset load_watershed_dir(const fs::path& dir) {
  return load_watershed_csv((dir / "precipitation.csv").string(),
                            (dir / "pixels.csv").string(),
                            (dir / "discharge.csv").string(),
                            dir.filename().string());
}

Corpus load_corpus_dir(const fs::path& root) {
  require(fs::is_directory(root),
          cat("--data: ", root.string(), " is not a directory"));
  std::vector<fs::path> dirs;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory() && fs::exists(entry.path() / "precipitation.csv"))
      dirs.push_back(entry.path());
  std::sort(dirs.begin(), dirs.end());
  require(!dirs.empty(),
          cat("--data: no watershed directories under ", root.string()));
  Corpus corpus;
  for (const auto& d : dirs) corpus.push_back(load_watershed_dir(d));
  return corpus;
}

std::vector<Variant> parse_variants(const std::string& csv) {
  std::vector<Variant> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(variant_from_string(item));
  require(!out.empty(), "no variants given");
  return out;
}

// ----------------------------------------------------------- subcommands ---

int cmd_gen_data(const GlobalOptions& opt, const GenConfig& gen,
                 int watersheds) {
  const Corpus corpus = synthetic_corpus(gen, watersheds, opt.seed);
  json manifest;
  manifest["watersheds"] = json::array();
  for (const auto& ds : corpus) {
    const fs::path dir = fs::path(opt.out_dir) / ds.watershed_id;
    write_watershed_csv(ds, dir.string());
    json entry;
    entry["watershed_id"] = ds.watershed_id;
    entry["dir"] = dir.string();
    entry["days"] = ds.day_count();
    entry["pixels"] = ds.pixel_count();
    manifest["watersheds"].push_back(std::move(entry));
  }
  manifest["seed"] = opt.seed;
  write_text_file(fs::path(opt.out_dir) / "manifest.json", manifest.dump(2));
  std::cout << manifest.dump(2) << "\n";
  return 0;
}

int cmd_train(const GlobalOptions& opt, const ModelConfig& model_cfg,
              const TrainConfig& train_cfg, const GenConfig& gen,
              const std::string& data_dir, double train_fraction,
              bool standardize) {
  WatershedDataset ds = data_dir.empty()
                            ? [&] {
                                GenConfig g = gen;
                                g.seed = opt.seed;
                                return generate_synthetic(g);
                              }()
                            : load_watershed_dir(data_dir);

  TrainConfig tc = train_cfg;
  tc.record_traces = opt.emit_traces;
  require(!opt.emit_traces || tc.executor == ExecutorKind::Distributed,
          "--emit-traces requires --executor distributed");

  Corpus corpus;
  corpus.push_back(std::move(ds));
  const auto jobs = replicate_models(model_cfg, tc, corpus, opt.seed,
                                     train_fraction, standardize);
  const JobResult result = run_single_job(jobs[0]);
  if (result.failed) throw Error(result.error);

  const fs::path out(opt.out_dir);
  fs::create_directories(out);
  const std::string ckpt = (out / "model.ckpt").string();
  save_checkpoint(result.model, ckpt);
  const std::string report = job_result_to_json(result, ckpt);
  write_text_file(out / "train_report.json", report);
  if (opt.emit_traces)
    write_text_file(out / "traces.jsonl", traces_to_jsonl(result.traces));
  if (opt.dump_partition)
    write_text_file(out / "partition.json",
                    partition_to_json(result.model.partition));
  std::cout << report << "\n";
  return 0;
}

int cmd_compare(const GlobalOptions& opt, const ModelConfig& model_cfg,
                const TrainConfig& train_cfg, const GenConfig& gen,
                const std::string& data_dir, int synthetic_watersheds,
                const std::string& variants_csv, int seed_count,
                double train_fraction) {
  const Corpus corpus = data_dir.empty()
                            ? synthetic_corpus(gen, synthetic_watersheds,
                                               opt.seed)
                            : load_corpus_dir(data_dir);
  std::vector<std::uint64_t> seeds;
  for (int i = 0; i < seed_count; ++i) seeds.push_back(opt.seed + i);
  const ComparisonTable table =
      run_comparison(corpus, parse_variants(variants_csv), seeds, model_cfg,
                     train_cfg, opt.pool, train_fraction);
  write_text_file(fs::path(opt.out_dir) / "comparison.json",
                  comparison_to_json(table));
  write_text_file(fs::path(opt.out_dir) / "comparison.txt",
                  format_comparison(table));
  std::cout << format_comparison(table);
  return 0;
}

int cmd_bench(const GlobalOptions& opt, const ModelConfig& model_cfg,
              const TrainConfig& train_cfg, const GenConfig& gen,
              const std::string& data_dir, int synthetic_watersheds,
              const std::string& variants_csv, double train_fraction) {
  const Corpus corpus = data_dir.empty()
                            ? synthetic_corpus(gen, synthetic_watersheds,
                                               opt.seed)
                            : load_corpus_dir(data_dir);
  const TimingReport report =
      run_timing_table(corpus, parse_variants(variants_csv), model_cfg,
                       train_cfg, opt.seed, opt.pool, train_fraction);
  write_text_file(fs::path(opt.out_dir) / "bench.json",
                  timing_to_json(report));
  write_text_file(fs::path(opt.out_dir) / "bench.txt",
                  format_timing_table(report));
  std::cout << format_timing_table(report);
  return 0;
}

int cmd_grad_check(const GlobalOptions& opt, int pixels, int lookback,
                   int heads, double tolerance) {
  std::vector<PixelMeta> meta(pixels);
  Rng meta_rng = Rng(opt.seed).split("gradcheck-meta");
  for (int i = 0; i < pixels; ++i) {
    meta[i].pixel_id = i;
    meta[i].row = i / 4;
    meta[i].col = i % 4;
    meta[i].distance_km = meta_rng.uniform(0.1, 12.0);
  }
  Rng sample_rng = Rng(opt.seed).split("gradcheck-sample");
  Sample sample;
  sample.x = Matrix(pixels, lookback);
  for (int i = 0; i < pixels; ++i)
    for (int t = 0; t < lookback; ++t)
      sample.x(i, t) = sample_rng.uniform(0.0, 2.0);
  sample.p_target = Vector(pixels);
  for (int i = 0; i < pixels; ++i)
    sample.p_target(i) = sample_rng.uniform(0.0, 2.0);
  sample.discharge = sample_rng.uniform(0.0, 3.0);

  json summary;
  summary["seed"] = opt.seed;
  summary["tolerance"] = tolerance;
  bool ok = true;
  for (const Variant v : {Variant::Singlehead, Variant::SingleheadPlusP,
                          Variant::MultiheadPlusP}) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.heads = heads;
    cfg.conv_layers = {{4, 3, 1}, {6, 3, 1}};
    cfg.lstm_hidden = 8;
    cfg.lstm_layers = 1;
    cfg.lookback = lookback;
    cfg.seed = opt.seed;
    const DomSTModel model = build_model(cfg, meta);

    const Array theta = flatten_all(model);
    const auto loss = [&](const Array& t) {
      DomSTModel m = model;
      Eigen::Index pos = 0;
      for (auto& h : m.heads) {
        unflatten(h, Array(t.segment(pos, flat_size(h))));
        pos += flat_size(h);
      }
      unflatten(m.temporal, Array(t.segment(pos, t.size() - pos)));
      const double err = forward(m, sample) - sample.discharge;
      return err * err;
    };
    ForwardCache cache;
    const double err = forward(model, sample, &cache) - sample.discharge;
    const ModelGrads grads = backward(model, cache, 2.0 * err);
    Array analytic(theta.size());
    Eigen::Index pos = 0;
    for (const auto& h : grads.heads) {
      const Array f = flatten(h);
      analytic.segment(pos, f.size()) = f;
      pos += f.size();
    }
    const Array f = flatten(grads.temporal);
    analytic.segment(pos, f.size()) = f;

    const GradCheckResult r = finite_diff_check(loss, theta, analytic, 1e-5);
    summary[to_string(v)] = {{"max_rel_error", r.max_rel_error},
                             {"params", theta.size()}};
    std::cout << to_string(v) << ": max relative error " << r.max_rel_error
              << " over " << theta.size() << " parameters\n";
    ok = ok && r.max_rel_error < tolerance;
  }
  summary["pass"] = ok;
  write_text_file(fs::path(opt.out_dir) / "grad_check.json", summary.dump(2));
  std::cout << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dom-ST: distributed domain-aware spatiotemporal network"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions opt;
  app.add_option("--seed", opt.seed, "global seed");
  app.add_option("--config", opt.config_path, "JSON config file");
  app.add_option("--pool", opt.pool, "worker pool size for IP-D runs");
  app.add_option("--out", opt.out_dir, "output directory");
  app.add_flag("--emit-traces", opt.emit_traces,
               "write per-step traces as JSON lines");
  app.add_flag("--dump-partition", opt.dump_partition,
               "write the pixel-to-head partition as JSON");

  ModelConfig model_cfg;
  TrainConfig train_cfg;
  train_cfg.epochs = 20;
  train_cfg.batch_size = 16;
  GenConfig gen_cfg;
  gen_cfg.total_days = 400;

  // --config is applied before flag parsing so explicit flags win
  for (int i = 1; i + 1 < argc; ++i)
    if (std::string(argv[i]) == "--config")
      apply_config_file(argv[i + 1], model_cfg, train_cfg, gen_cfg);

  std::string variant_name = "multihead_plus_p";
  std::string executor_name;
  double train_fraction = 0.8;
  bool no_standardize = false;
  const auto add_model_flags = [&](CLI::App* sub) {
    sub->add_option("--variant", variant_name,
                    "singlehead | singlehead_plus_p | multihead_plus_p");
    sub->add_option("--heads", model_cfg.heads, "spatial heads (multihead)");
    sub->add_option("--lookback", model_cfg.lookback, "lookback window, days");
    sub->add_option("--lstm-hidden", model_cfg.lstm_hidden, "LSTM width");
    sub->add_option("--epochs", train_cfg.epochs, "training epochs");
    sub->add_option("--batch", train_cfg.batch_size, "batch size");
    sub->add_option("--lr", train_cfg.adam.lr, "Adam learning rate");
    sub->add_option("--executor", executor_name, "sequential | distributed");
    sub->add_option("--train-fraction", train_fraction,
                    "chronological train split");
    sub->add_flag("--no-standardize", no_standardize,
                  "train on raw units instead of standardized values");
  };
  const auto add_gen_flags = [&](CLI::App* sub) {
    sub->add_option("--grid-rows", gen_cfg.grid_rows, "pixel grid rows");
    sub->add_option("--grid-cols", gen_cfg.grid_cols, "pixel grid cols");
    sub->add_option("--days", gen_cfg.total_days, "days to generate");
    sub->add_option("--tau", gen_cfg.tau_km, "contribution decay scale, km");
    sub->add_option("--noise", gen_cfg.noise_fraction,
                    "relative noise fraction");
    sub->add_option("--start-date", gen_cfg.start_date, "first day, ISO-8601");
  };

  auto* gen_sub =
      app.add_subcommand("gen-data", "generate synthetic watershed CSV data");
  int gen_watersheds = 1;
  gen_sub->add_option("--watersheds", gen_watersheds, "watershed count");
  add_gen_flags(gen_sub);

  auto* train_sub =
      app.add_subcommand("train", "train one watershed, one variant");
  std::string train_data_dir;
  train_sub->add_option("--data", train_data_dir,
                        "watershed directory with the CSV trio");
  add_model_flags(train_sub);
  add_gen_flags(train_sub);

  auto* compare_sub = app.add_subcommand(
      "compare", "train every (watershed, variant, seed) cell and rank them");
  std::string compare_data_dir;
  int compare_watersheds = 4;
  std::string compare_variants =
      "singlehead,singlehead_plus_p,multihead_plus_p";
  int seed_count = 1;
  compare_sub->add_option("--data", compare_data_dir,
                          "root directory of watershed subdirectories");
  compare_sub->add_option("--synthetic-watersheds", compare_watersheds,
                          "watershed count when generating data");
  compare_sub->add_option("--variants", compare_variants,
                          "comma-separated variant list");
  compare_sub->add_option("--seed-count", seed_count,
                          "seeds per cell, starting at --seed");
  add_model_flags(compare_sub);
  add_gen_flags(compare_sub);

  auto* bench_sub = app.add_subcommand(
      "bench", "time S vs IP-D execution over the watershed jobs");
  std::string bench_data_dir;
  int bench_watersheds = 8;
  std::string bench_variants = "singlehead_plus_p,multihead_plus_p";
  bench_sub->add_option("--data", bench_data_dir,
                        "root directory of watershed subdirectories");
  bench_sub->add_option("--synthetic-watersheds", bench_watersheds,
                        "watershed count when generating data");
  bench_sub->add_option("--variants", bench_variants,
                        "comma-separated variant list");
  add_model_flags(bench_sub);
  add_gen_flags(bench_sub);

  auto* grad_sub = app.add_subcommand(
      "grad-check", "verify analytic gradients against finite differences");
  int gc_pixels = 8, gc_lookback = 16, gc_heads = 2;
  double gc_tolerance = 1e-4;
  grad_sub->add_option("--pixels", gc_pixels, "pixel count");
  grad_sub->add_option("--lookback", gc_lookback, "lookback window");
  grad_sub->add_option("--heads", gc_heads, "heads for the multihead variant");
  grad_sub->add_option("--tolerance", gc_tolerance, "max relative error");

  try {
    app.parse(argc, argv);

    model_cfg.variant = variant_from_string(variant_name);
    if (!executor_name.empty())
      train_cfg.executor = executor_from_string(executor_name);

    if (gen_sub->parsed()) return cmd_gen_data(opt, gen_cfg, gen_watersheds);
    if (train_sub->parsed())
      return cmd_train(opt, model_cfg, train_cfg, gen_cfg, train_data_dir,
                       train_fraction, !no_standardize);
    if (compare_sub->parsed())
      return cmd_compare(opt, model_cfg, train_cfg, gen_cfg, compare_data_dir,
                         compare_watersheds, compare_variants, seed_count,
                         train_fraction);
    if (bench_sub->parsed())
      return cmd_bench(opt, model_cfg, train_cfg, gen_cfg, bench_data_dir,
                       bench_watersheds, bench_variants, train_fraction);
    if (grad_sub->parsed())
      return cmd_grad_check(opt, gc_pixels, gc_lookback, gc_heads,
                            gc_tolerance);
    return 1;
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() != 0) {
      json err;
      err["error"] = {{"type", "usage"}, {"message", e.what()}};
      std::cerr << err.dump() << "\n";
    }
    return app.exit(e);
  } catch (const std::exception& e) {
    json err;
    err["error"] = {{"type", "runtime"}, {"message", e.what()}};
    std::cerr << err.dump() << "\n";
    return 1;
  }
}
