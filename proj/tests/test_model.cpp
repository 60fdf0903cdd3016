#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "domst/gradcheck.hpp"
#include "domst/model.hpp"
#include "domst/rng.hpp"

using namespace domst;

namespace {

std::vector<PixelMeta> make_meta(int p, std::uint64_t seed = 9) {
  Rng rng(seed);
  std::vector<PixelMeta> meta(p);
  for (int i = 0; i < p; ++i) {
    meta[i].pixel_id = i;
    meta[i].row = i / 4;
    meta[i].col = i % 4;
    meta[i].distance_km = rng.uniform(0.0, 12.0);
  }
  return meta;
}

Sample random_sample(int p, int lookback, Rng& rng, double scale = 1.0) {
  Sample s;
  s.x = Matrix(p, lookback);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < lookback; ++j) s.x(i, j) = rng.uniform(0.0, scale);
  s.p_target = Vector(p);
  for (int i = 0; i < p; ++i) s.p_target(i) = rng.uniform(0.0, scale);
  s.discharge = rng.uniform(0.0, scale);
  return s;
}

ModelConfig small_config(Variant v, int heads) {
  ModelConfig c;
  c.variant = v;
  c.heads = heads;
  c.conv_layers = {{4, 3, 1}, {6, 3, 1}};
  c.lstm_hidden = 8;
  c.lstm_layers = 1;
  c.dense_hidden = {};
  c.lookback = 16;
  c.seed = 42;
  return c;
}

// ---------------------------------------------------------------------------
// Straight-line oracle: evaluates the same parameters with plain loops and
// no head/executor machinery. Kept deliberately independent of the library's
// forward path.
// ---------------------------------------------------------------------------

double oracle_forward(const DomSTModel& model, const Sample& sample) {
  const int h_count = model.head_count();
  const int lookback = static_cast<int>(sample.x.cols());

  std::vector<std::vector<std::vector<double>>> head_out(h_count);
  for (int h = 0; h < h_count; ++h) {
    const auto& pixels = model.partition.heads[h];
    const auto& head = model.heads[h];
    std::vector<std::vector<double>> cur(pixels.size(),
                                         std::vector<double>(lookback));
    for (std::size_t i = 0; i < pixels.size(); ++i)
      for (int t = 0; t < lookback; ++t) {
        double v = sample.x(pixels[i], t);
        if (head.has_pixcon())
          v *= 1.0 / (1.0 + std::exp(-head.pixcon.logits(i)));
        cur[i][t] = v;
      }
    for (std::size_t l = 0; l < head.conv.size(); ++l) {
      const auto& conv = head.conv[l];
      const int c_out = conv.out_channels();
      const int k = conv.kernel_width();
      const int len = static_cast<int>(cur[0].size());
      const int l_out = (len - k) / conv.stride + 1;
      std::vector<std::vector<double>> out(c_out, std::vector<double>(l_out));
      for (int c = 0; c < c_out; ++c)
        for (int t = 0; t < l_out; ++t) {
          double acc = conv.bias(c);
          for (std::size_t i = 0; i < cur.size(); ++i)
            for (int kk = 0; kk < k; ++kk)
              acc += conv.kernels[c](i, kk) * cur[i][t * conv.stride + kk];
          out[c][t] = acc;
        }
      if (l + 1 < head.conv.size())
        for (auto& row : out)
          for (auto& v : row) v = v > 0.0 ? v : 0.0;
      cur = std::move(out);
    }
    head_out[h] = std::move(cur);
  }

  const int channels = static_cast<int>(head_out[0].size());
  const int l_out = static_cast<int>(head_out[0][0].size());
  const int total = h_count * channels;

  // time-major sequence through the stacked LSTM
  std::vector<std::vector<double>> seq(l_out, std::vector<double>(total));
  for (int h = 0; h < h_count; ++h)
    for (int c = 0; c < channels; ++c)
      for (int t = 0; t < l_out; ++t)
        seq[t][h * channels + c] = head_out[h][c][t];

  const auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  const int hs = model.temporal.lstm.hidden_size;
  std::vector<double> layer_in_flat;
  std::vector<std::vector<double>> layer_in = seq;
  for (const auto& lp : model.temporal.lstm.layers) {
    const int d = static_cast<int>(layer_in[0].size());
    std::vector<double> h_state(hs, 0.0), c_state(hs, 0.0);
    std::vector<std::vector<double>> hidden(l_out, std::vector<double>(hs));
    for (int t = 0; t < l_out; ++t) {
      for (int j = 0; j < hs; ++j) {
        double zi = lp.bias(j), zf = lp.bias(hs + j), zg = lp.bias(2 * hs + j),
               zo = lp.bias(3 * hs + j);
        for (int i = 0; i < d; ++i) {
          zi += lp.w_input(j, i) * layer_in[t][i];
          zf += lp.w_input(hs + j, i) * layer_in[t][i];
          zg += lp.w_input(2 * hs + j, i) * layer_in[t][i];
          zo += lp.w_input(3 * hs + j, i) * layer_in[t][i];
        }
        for (int i = 0; i < hs; ++i) {
          zi += lp.w_recurrent(j, i) * h_state[i];
          zf += lp.w_recurrent(hs + j, i) * h_state[i];
          zg += lp.w_recurrent(2 * hs + j, i) * h_state[i];
          zo += lp.w_recurrent(3 * hs + j, i) * h_state[i];
        }
        const double c_new =
            sigmoid(zf) * c_state[j] + sigmoid(zi) * std::tanh(zg);
        hidden[t][j] = sigmoid(zo) * std::tanh(c_new);
        c_state[j] = c_new;
      }
      for (int j = 0; j < hs; ++j) h_state[j] = hidden[t][j];
    }
    layer_in = std::move(hidden);
  }

  std::vector<double> cur = layer_in[l_out - 1];
  if (model.config.plus_p())
    for (Eigen::Index i = 0; i < sample.p_target.size(); ++i)
      cur.push_back(sample.p_target(i));

  for (std::size_t l = 0; l < model.temporal.dense.size(); ++l) {
    const auto& dp = model.temporal.dense[l];
    std::vector<double> out(dp.weight.rows());
    for (Eigen::Index r = 0; r < dp.weight.rows(); ++r) {
      double acc = dp.bias(r);
      for (Eigen::Index c = 0; c < dp.weight.cols(); ++c)
        acc += dp.weight(r, c) * cur[c];
      out[r] = acc;
    }
    if (l + 1 < model.temporal.dense.size())
      for (auto& v : out) v = v > 0.0 ? v : 0.0;
    cur = std::move(out);
  }
  return cur[0];
}

void set_all_params(DomSTModel& model, const Array& flat) {
  Eigen::Index pos = 0;
  for (auto& h : model.heads) {
    const long n = flat_size(h);
    unflatten(h, Array(flat.segment(pos, n)));
    pos += n;
  }
  unflatten(model.temporal, Array(flat.segment(pos, flat.size() - pos)));
}

}  // namespace

// ----------------------------------------------------------------- build ---

TEST_CASE("singlehead build forces one head and no pixel-contribution block") {
  const auto meta = make_meta(8);
  const DomSTModel m = build_model(small_config(Variant::Singlehead, 4), meta);
  CHECK(m.head_count() == 1);
  CHECK_FALSE(m.heads[0].has_pixcon());
  CHECK(m.heads[0].conv[0].in_channels() == 8);
  CHECK_FALSE(m.config.use_pixcon);
}

TEST_CASE("multihead build splits pixels across heads with pixcon shards") {
  const auto meta = make_meta(8);
  const DomSTModel m =
      build_model(small_config(Variant::MultiheadPlusP, 2), meta);
  CHECK(m.head_count() == 2);
  for (int h = 0; h < 2; ++h) {
    CHECK(m.heads[h].conv[0].in_channels() == 4);
    CHECK(m.heads[h].has_pixcon());
    CHECK(m.heads[h].pixcon.size() == 4);
  }
  m.partition.validate(8);
}

TEST_CASE("building twice with the same config and meta is bit-identical") {
  const auto meta = make_meta(8);
  const ModelConfig cfg = small_config(Variant::MultiheadPlusP, 2);
  const DomSTModel a = build_model(cfg, meta);
  const DomSTModel b = build_model(cfg, meta);
  const Array fa = flatten_all(a);
  const Array fb = flatten_all(b);
  CHECK((fa == fb).all());
}

TEST_CASE("different seeds give different parameters") {
  const auto meta = make_meta(8);
  ModelConfig cfg = small_config(Variant::MultiheadPlusP, 2);
  const DomSTModel a = build_model(cfg, meta);
  cfg.seed = 43;
  const DomSTModel b = build_model(cfg, meta);
  CHECK_FALSE((flatten_all(a) == flatten_all(b)).all());
}

TEST_CASE("dense input width is lstm hidden plus P only for +P variants") {
  const auto meta = make_meta(8);
  const DomSTModel sh = build_model(small_config(Variant::Singlehead, 1), meta);
  CHECK(sh.temporal.dense[0].weight.cols() == 8);  // lstm hidden only
  const DomSTModel pp =
      build_model(small_config(Variant::SingleheadPlusP, 1), meta);
  CHECK(pp.temporal.dense[0].weight.cols() == 8 + 8);
}

TEST_CASE("build rejects invalid variant and shape combinations") {
  const auto meta = make_meta(4);
  ModelConfig cfg = small_config(Variant::MultiheadPlusP, 2);
  cfg.lookback = 3;  // conv stack needs at least 5 steps
  CHECK_THROWS_AS(build_model(cfg, meta), Error);
  ModelConfig too_many = small_config(Variant::MultiheadPlusP, 5);
  CHECK_THROWS_AS(build_model(too_many, make_meta(4)), Error);
}

// --------------------------------------------------------------- forward ---

TEST_CASE("all-zero weights predict the final dense bias") {
  const auto meta = make_meta(8);
  for (const Variant v :
       {Variant::Singlehead, Variant::SingleheadPlusP, Variant::MultiheadPlusP}) {
    DomSTModel m = build_model(small_config(v, 2), meta);
    Array flat = Array::Zero(flatten_all(m).size());
    set_all_params(m, flat);
    m.temporal.dense.back().bias(0) = 3.25;
    Rng rng(5);
    const Sample s = random_sample(8, 16, rng);
    CHECK(forward(m, s) == doctest::Approx(3.25).epsilon(1e-12));
  }
}

TEST_CASE("perturbing the target-day input moves +P variants only") {
  const auto meta = make_meta(8);
  Rng rng(6);
  Sample s = random_sample(8, 16, rng);
  Sample s2 = s;
  s2.p_target(3) += 1.5;

  const DomSTModel sh = build_model(small_config(Variant::Singlehead, 1), meta);
  CHECK(forward(sh, s) == forward(sh, s2));

  const DomSTModel pp =
      build_model(small_config(Variant::SingleheadPlusP, 1), meta);
  CHECK(forward(pp, s) != forward(pp, s2));

  const DomSTModel mh =
      build_model(small_config(Variant::MultiheadPlusP, 2), meta);
  CHECK(forward(mh, s) != forward(mh, s2));
}

TEST_CASE("forward rejects mismatched sample shapes naming the block") {
  const auto meta = make_meta(8);
  const DomSTModel m = build_model(small_config(Variant::MultiheadPlusP, 2), meta);
  Rng rng(7);
  Sample bad = random_sample(7, 16, rng);
  CHECK_THROWS_AS(forward(m, bad), ShapeError);
  Sample bad2 = random_sample(8, 15, rng);
  CHECK_THROWS_AS(forward(m, bad2), ShapeError);
}

TEST_CASE("multihead forward equals the straight-line oracle") {
  Rng rng(1234);
  for (int trial = 0; trial < 30; ++trial) {
    const int p = 4 + rng.uniform_int(8);
    const int heads = 1 + rng.uniform_int(std::min(p, 4));
    ModelConfig cfg = small_config(Variant::MultiheadPlusP, heads);
    cfg.seed = rng.next_u64();
    const auto meta = make_meta(p, rng.next_u64());
    const DomSTModel m = build_model(cfg, meta);
    Sample s = random_sample(p, cfg.lookback, rng, 3.0);
    const double a = forward(m, s);
    const double b = oracle_forward(m, s);
    CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
  }
}

TEST_CASE("copied-head multihead with unit pixcon matches the oracle") {
  const auto meta = make_meta(8);
  ModelConfig cfg = small_config(Variant::MultiheadPlusP, 2);
  DomSTModel m = build_model(cfg, meta);
  m.heads[1] = m.heads[0];  // identical head parameters
  for (auto& h : m.heads) h.pixcon.logits = Array::Constant(4, 20.0);
  Rng rng(8);
  const Sample s = random_sample(8, 16, rng);
  const double a = forward(m, s);
  const double b = oracle_forward(m, s);
  CHECK(std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(a)));
}

TEST_CASE("near-unit pixcon weights match a model without the block to 1e-8") {
  const auto meta = make_meta(8);
  DomSTModel m = build_model(small_config(Variant::MultiheadPlusP, 2), meta);
  DomSTModel no_block = m;
  for (auto& h : m.heads) h.pixcon.logits = Array::Constant(4, 20.0);
  for (auto& h : no_block.heads) h.pixcon.logits = Array();  // block removed
  Rng rng(9);
  for (int i = 0; i < 5; ++i) {
    const Sample s = random_sample(8, 16, rng, 2.0);
    CHECK(std::abs(forward(m, s) - forward(no_block, s)) < 1e-8);
  }
}

// -------------------------------------------------------------- backward ---

TEST_CASE("zero upstream gradient produces all-zero gradients") {
  const auto meta = make_meta(8);
  const DomSTModel m =
      build_model(small_config(Variant::MultiheadPlusP, 2), meta);
  Rng rng(10);
  const Sample s = random_sample(8, 16, rng);
  ForwardCache cache;
  forward(m, s, &cache);
  const ModelGrads g = backward(m, cache, 0.0);
  for (const auto& h : g.heads) CHECK(flatten(h).isZero(0.0));
  CHECK(flatten(g.temporal).isZero(0.0));
}

TEST_CASE("full-model gradients match finite differences on all variants") {
  const auto meta = make_meta(8);
  Rng rng(42);
  const Sample s = random_sample(8, 16, rng, 2.0);
  for (const Variant v :
       {Variant::Singlehead, Variant::SingleheadPlusP, Variant::MultiheadPlusP}) {
    DomSTModel m = build_model(small_config(v, 2), meta);
    const Array theta = flatten_all(m);
    const auto loss = [&](const Array& t) {
      DomSTModel q = m;
      set_all_params(q, t);
      const double err = forward(q, s) - s.discharge;
      return err * err;
    };
    ForwardCache cache;
    const double err = forward(m, s, &cache) - s.discharge;
    const ModelGrads grads = backward(m, cache, 2.0 * err);
    Array g(theta.size());
    Eigen::Index pos = 0;
    for (const auto& h : grads.heads) {
      const Array f = flatten(h);
      g.segment(pos, f.size()) = f;
      pos += f.size();
    }
    const Array f = flatten(grads.temporal);
    g.segment(pos, f.size()) = f;
    const GradCheckResult r = finite_diff_check(loss, theta, g, 1e-5);
    CHECK(r.max_rel_error < 1e-4);
  }
}

// ---------------------------------------------------------- predictions ----

TEST_CASE("predict_series is element-wise forward in order") {
  const auto meta = make_meta(8);
  const DomSTModel m =
      build_model(small_config(Variant::MultiheadPlusP, 2), meta);
  Rng rng(11);
  std::vector<Sample> samples;
  for (int i = 0; i < 4; ++i) samples.push_back(random_sample(8, 16, rng));

  CHECK(predict_series(m, {}).empty());
  const auto one = predict_series(m, {samples[0]});
  CHECK(one.size() == 1);
  CHECK(one[0] == forward(m, samples[0]));

  const auto all = predict_series(m, samples);
  std::vector<Sample> reversed(samples.rbegin(), samples.rend());
  const auto rev = predict_series(m, reversed);
  for (std::size_t i = 0; i < samples.size(); ++i)
    CHECK(all[i] == rev[samples.size() - 1 - i]);
}

// ------------------------------------------------------------ checkpoint ---

TEST_CASE("checkpoints round-trip bit-exactly") {
  const auto meta = make_meta(8);
  const DomSTModel m =
      build_model(small_config(Variant::MultiheadPlusP, 2), meta);
  const std::string path =
      (std::filesystem::temp_directory_path() / "domst_ckpt_test.bin").string();
  save_checkpoint(m, path);
  const DomSTModel loaded = load_checkpoint(path);
  std::filesystem::remove(path);

  CHECK(loaded.pixel_count == m.pixel_count);
  CHECK(loaded.partition.heads == m.partition.heads);
  CHECK(loaded.config.variant == m.config.variant);
  CHECK(loaded.config.pixcon_tau_km == m.config.pixcon_tau_km);
  const Array fa = flatten_all(m);
  const Array fb = flatten_all(loaded);
  REQUIRE(fa.size() == fb.size());
  CHECK((fa == fb).all());

  Rng rng(12);
  const Sample s = random_sample(8, 16, rng);
  CHECK(forward(m, s) == forward(loaded, s));
}

TEST_CASE("loading a non-checkpoint file fails cleanly") {
  const std::string path =
      (std::filesystem::temp_directory_path() / "domst_not_ckpt.bin").string();
  std::FILE* f = std::fopen(path.c_str(), "wb");
  std::fputs("not a checkpoint", f);
  std::fclose(f);
  CHECK_THROWS_AS(load_checkpoint(path), Error);
  std::filesystem::remove(path);
}

TEST_CASE("model config serializes through JSON") {
  ModelConfig cfg = small_config(Variant::SingleheadPlusP, 1);
  cfg.dense_hidden = {16, 4};
  cfg.pixcon_tau_km = 3.5;
  const ModelConfig back = config_from_json(config_to_json(cfg));
  CHECK(back.variant == cfg.variant);
  CHECK(back.heads == cfg.heads);
  CHECK(back.conv_layers.size() == cfg.conv_layers.size());
  CHECK(back.conv_layers[0].out_channels == cfg.conv_layers[0].out_channels);
  CHECK(back.dense_hidden == cfg.dense_hidden);
  CHECK(back.lookback == cfg.lookback);
  CHECK(back.pixcon_tau_km == cfg.pixcon_tau_km);
  CHECK(back.seed == cfg.seed);
}
