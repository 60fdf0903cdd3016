#include "domst/model.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include <json.hpp>

namespace domst {

using nlohmann::json;

// ---------------------------------------------------------------- config ---

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Singlehead: return "singlehead";
    case Variant::SingleheadPlusP: return "singlehead_plus_p";
    case Variant::MultiheadPlusP: return "multihead_plus_p";
  }
  return "?";
}

std::string display_name(Variant v) {
  switch (v) {
    case Variant::Singlehead: return "Singlehead";
    case Variant::SingleheadPlusP: return "Singlehead(+P)";
    case Variant::MultiheadPlusP: return "Distributed-Multihead(+P)";
  }
  return "?";
}

Variant variant_from_string(const std::string& s) {
  if (s == "singlehead") return Variant::Singlehead;
  if (s == "singlehead_plus_p") return Variant::SingleheadPlusP;
  if (s == "multihead_plus_p") return Variant::MultiheadPlusP;
  throw ValueError(cat("unknown variant: ", s));
}

ModelConfig ModelConfig::normalized() const {
  ModelConfig c = *this;
  switch (c.variant) {
    case Variant::Singlehead:
    case Variant::SingleheadPlusP:
      c.heads = 1;
      c.use_pixcon = false;
      break;
    case Variant::MultiheadPlusP:
      c.use_pixcon = true;
      break;
  }
  return c;
}

void ModelConfig::validate() const {
  require(heads >= 1, cat("config: heads must be >= 1, got ", heads));
  require(!conv_layers.empty(), "config: at least one conv layer required");
  for (const auto& l : conv_layers) {
    require(l.out_channels >= 1 && l.kernel_width >= 1 && l.stride >= 1,
            "config: conv layer fields must be >= 1");
  }
  require(lstm_hidden >= 1 && lstm_layers >= 1,
          "config: lstm sizes must be >= 1");
  for (int w : dense_hidden)
    require(w >= 1, "config: dense widths must be >= 1");
  require(lookback >= 1, cat("config: lookback must be >= 1, got ", lookback));
  // the conv stack must leave at least one output step
  int len = lookback;
  for (const auto& l : conv_layers)
    len = conv1d_output_length(len, l.kernel_width, l.stride);
  if (variant != Variant::MultiheadPlusP) {
    require(heads == 1, "config: singlehead variants run exactly one head");
    require(!use_pixcon,
            "config: singlehead variants have no pixel-contribution block");
  } else {
    require(use_pixcon,
            "config: the multihead variant requires the pixel-contribution block");
  }
}

// ----------------------------------------------------------------- build ---

namespace {

double median_distance(const std::vector<PixelMeta>& meta) {
  std::vector<double> d(meta.size());
  for (std::size_t i = 0; i < meta.size(); ++i) d[i] = meta[i].distance_km;
  std::sort(d.begin(), d.end());
  const std::size_t n = d.size();
  const double med = (n % 2 == 1) ? d[n / 2] : 0.5 * (d[n / 2 - 1] + d[n / 2]);
  return med > 0.0 ? med : 1.0;  // all-zero distances: any tau works
}

Conv1dParams init_conv(const ConvLayerSpec& spec, int c_in, Rng rng) {
  Conv1dParams p;
  p.stride = spec.stride;
  const int fan_in = c_in * spec.kernel_width;
  const int fan_out = spec.out_channels * spec.kernel_width;
  p.kernels.reserve(spec.out_channels);
  for (int c = 0; c < spec.out_channels; ++c) {
    Rng krng = rng.split(static_cast<std::uint64_t>(c));
    p.kernels.push_back(
        glorot_matrix(c_in, spec.kernel_width, fan_in, fan_out, krng));
  }
  p.bias = Vector::Zero(spec.out_channels);
  return p;
}

LstmParams init_lstm(int input_size, int hidden, int layers, Rng rng) {
  LstmParams p;
  p.hidden_size = hidden;
  int d = input_size;
  for (int l = 0; l < layers; ++l) {
    Rng lr = rng.split(static_cast<std::uint64_t>(l));
    Rng in_rng = lr.split("input");
    Rng rec_rng = lr.split("recurrent");
    LstmLayerParams layer;
    layer.w_input = glorot_matrix(4 * hidden, d, d, hidden, in_rng);
    layer.w_recurrent =
        glorot_matrix(4 * hidden, hidden, hidden, hidden, rec_rng);
    layer.bias = Vector::Zero(4 * hidden);
    layer.bias.segment(hidden, hidden).setOnes();  // forget gate starts open
    p.layers.push_back(std::move(layer));
    d = hidden;
  }
  return p;
}

DenseParams init_dense(int in, int out, Rng rng) {
  DenseParams p;
  p.weight = glorot_matrix(out, in, in, out, rng);
  p.bias = Vector::Zero(out);
  return p;
}

}  // namespace

int DomSTModel::head_output_channels() const {
  return config.conv_layers.back().out_channels;
}

int DomSTModel::conv_output_length() const {
  int len = config.lookback;
  for (const auto& l : config.conv_layers)
    len = conv1d_output_length(len, l.kernel_width, l.stride);
  return len;
}

DomSTModel build_model(const ModelConfig& raw_config,
                       const std::vector<PixelMeta>& meta) {
  ModelConfig config = raw_config.normalized();
  config.validate();
  require(!meta.empty(), "build_model: no pixels");
  const int p = static_cast<int>(meta.size());
  require(config.heads <= p,
          cat("build_model: ", config.heads, " heads for ", p, " pixels"));

  DomSTModel model;
  model.pixel_count = p;
  model.partition = partition_pixels(meta, config.heads,
                                     config.partition_strategy);
  if (config.use_pixcon && config.pixcon_tau_km <= 0.0)
    config.pixcon_tau_km = median_distance(meta);
  model.config = config;

  // distances in pixel-id order for the pixel-contribution init
  Array distances(p);
  for (const auto& m : meta) {
    require(m.pixel_id >= 0 && m.pixel_id < p,
            cat("build_model: pixel ids must cover 0..", p - 1));
    distances(m.pixel_id) = m.distance_km;
  }

  Rng root(config.seed);
  PixConParams full_pixcon;
  if (config.use_pixcon)
    full_pixcon = init_pixcon(distances, config.pixcon_tau_km);

  model.heads.resize(config.heads);
  for (int h = 0; h < config.heads; ++h) {
    HeadParams& head = model.heads[h];
    const auto& pixels = model.partition.heads[h];
    if (config.use_pixcon) {
      head.pixcon.logits = Array(pixels.size());
      for (std::size_t i = 0; i < pixels.size(); ++i)
        head.pixcon.logits(i) = full_pixcon.logits(pixels[i]);
    }
    Rng head_rng = root.split("head").split(static_cast<std::uint64_t>(h));
    int c_in = static_cast<int>(pixels.size());
    for (std::size_t l = 0; l < config.conv_layers.size(); ++l) {
      head.conv.push_back(init_conv(config.conv_layers[l], c_in,
                                    head_rng.split("conv").split(l)));
      c_in = config.conv_layers[l].out_channels;
    }
  }

  const int lstm_in = config.heads * model.head_output_channels();
  model.temporal.lstm = init_lstm(lstm_in, config.lstm_hidden,
                                  config.lstm_layers, root.split("lstm"));
  int d_in = config.lstm_hidden + (config.plus_p() ? p : 0);
  Rng dense_rng = root.split("dense");
  for (std::size_t l = 0; l < config.dense_hidden.size(); ++l) {
    model.temporal.dense.push_back(
        init_dense(d_in, config.dense_hidden[l], dense_rng.split(l)));
    d_in = config.dense_hidden[l];
  }
  model.temporal.dense.push_back(
      init_dense(d_in, 1, dense_rng.split("output")));
  return model;
}

ModelGrads zero_grads(const DomSTModel& model) {
  ModelGrads g;
  g.heads.reserve(model.heads.size());
  for (const auto& h : model.heads) {
    HeadParams z;
    z.pixcon = zeros_like(h.pixcon);
    for (const auto& c : h.conv) z.conv.push_back(zeros_like(c));
    g.heads.push_back(std::move(z));
  }
  g.temporal.lstm = zeros_like(model.temporal.lstm);
  for (const auto& d : model.temporal.dense)
    g.temporal.dense.push_back(zeros_like(d));
  return g;
}

// --------------------------------------------------------------- forward ---

Matrix head_input_rows(const PixelPartition& partition, int head,
                       const Matrix& x) {
  const auto& pixels = partition.heads.at(head);
  Matrix rows(pixels.size(), x.cols());
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    check_shape(pixels[i] < x.rows(),
                cat("head input: pixel ", pixels[i], " outside ", x.rows(),
                    " rows"));
    rows.row(i) = x.row(pixels[i]);
  }
  return rows;
}

Matrix head_forward(const HeadParams& head, const Matrix& pixel_rows,
                    HeadCache* cache) {
  Matrix cur = pixel_rows;
  if (head.has_pixcon())
    cur = pixcon_apply(cur, head.pixcon, cache ? &cache->pixcon : nullptr);
  if (cache) {
    cache->conv.resize(head.conv.size());
    cache->conv_out.resize(head.conv.size());
  }
  for (std::size_t l = 0; l < head.conv.size(); ++l) {
    Matrix out =
        conv1d_forward(cur, head.conv[l], cache ? &cache->conv[l] : nullptr);
    if (cache) cache->conv_out[l] = out;
    cur = (l + 1 < head.conv.size()) ? relu(out) : std::move(out);
  }
  return cur;
}

Matrix head_backward(const HeadParams& head, const HeadCache& cache,
                     const Matrix& grad_output, HeadParams& grads) {
  check_shape(cache.conv.size() == head.conv.size(),
              "head backward: cache does not match params");
  Matrix grad = grad_output;
  for (int l = static_cast<int>(head.conv.size()) - 1; l >= 0; --l) {
    // the ReLU sits between layer l and layer l+1; none after the last conv
    if (l + 1 < static_cast<int>(head.conv.size()))
      grad = relu_backward(cache.conv_out[l], grad);
    grad = conv1d_backward(head.conv[l], cache.conv[l], grad, grads.conv[l]);
  }
  if (head.has_pixcon())
    grad = pixcon_backward(head.pixcon, cache.pixcon, grad, grads.pixcon);
  return grad;
}

double temporal_forward(const TemporalParams& temporal, const Matrix& concat,
                        const Vector& p_target, bool plus_p,
                        TemporalCache* cache) {
  // channels x time -> time-major sequence
  const Matrix seq = concat.transpose();
  Vector last_hidden;
  lstm_forward(seq, temporal.lstm, &last_hidden,
               cache ? &cache->lstm : nullptr);
  Vector cur;
  if (plus_p) {
    cur = Vector(last_hidden.size() + p_target.size());
    cur << last_hidden, p_target;
  } else {
    cur = last_hidden;
  }
  if (cache) {
    cache->last_hidden = last_hidden;
    cache->p_target_size = plus_p ? p_target.size() : 0;
    cache->dense.resize(temporal.dense.size());
    cache->dense_out.resize(temporal.dense.size());
  }
  for (std::size_t l = 0; l < temporal.dense.size(); ++l) {
    Vector out = dense_forward(cur, temporal.dense[l],
                               cache ? &cache->dense[l] : nullptr);
    if (cache) cache->dense_out[l] = out;
    cur = (l + 1 < temporal.dense.size()) ? relu(out) : std::move(out);
  }
  check_shape(cur.size() == 1,
              cat("temporal: final dense layer must output one value, got ",
                  cur.size()));
  return cur(0);
}

TemporalBackwardResult temporal_backward(const TemporalParams& temporal,
                                         const TemporalCache& cache,
                                         double grad_prediction,
                                         TemporalParams& grads) {
  check_shape(cache.dense.size() == temporal.dense.size(),
              "temporal backward: cache does not match params");
  Vector grad = Vector::Constant(1, grad_prediction);
  for (int l = static_cast<int>(temporal.dense.size()) - 1; l >= 0; --l) {
    grad = dense_backward(temporal.dense[l], cache.dense[l], grad,
                          grads.dense[l]);
    if (l > 0) grad = relu_backward(cache.dense_out[l - 1], grad);
  }
  TemporalBackwardResult r;
  const Eigen::Index hidden = cache.last_hidden.size();
  Vector grad_last_hidden = grad.head(hidden);
  if (cache.p_target_size > 0) r.grad_p_target = grad.tail(cache.p_target_size);
  const Matrix grad_seq = lstm_backward(temporal.lstm, cache.lstm,
                                        grad_last_hidden, grads.lstm);
  r.grad_concat = grad_seq.transpose();
  return r;
}

double forward(const DomSTModel& model, const Sample& sample,
               ForwardCache* cache) {
  check_shape(sample.x.rows() == model.pixel_count,
              cat("forward: sample has ", sample.x.rows(), " pixel rows, model expects ",
                  model.pixel_count));
  check_shape(sample.x.cols() == model.config.lookback,
              cat("forward: sample lookback ", sample.x.cols(),
                  ", model expects ", model.config.lookback));
  check_shape(sample.p_target.size() == model.pixel_count,
              cat("forward: target-day vector length ", sample.p_target.size(),
                  ", model expects ", model.pixel_count));

  if (cache) cache->heads.resize(model.head_count());
  const int l_out = model.conv_output_length();
  Matrix concat(model.head_count() * model.head_output_channels(), l_out);
  for (int h = 0; h < model.head_count(); ++h) {
    const Matrix rows = head_input_rows(model.partition, h, sample.x);
    const Matrix out =
        head_forward(model.heads[h], rows, cache ? &cache->heads[h] : nullptr);
    concat.middleRows(h * model.head_output_channels(),
                      model.head_output_channels()) = out;
  }
  const double pred =
      temporal_forward(model.temporal, concat, sample.p_target,
                       model.config.plus_p(), cache ? &cache->temporal : nullptr);
  if (cache) cache->prediction = pred;
  return pred;
}

ModelGrads backward(const DomSTModel& model, const ForwardCache& cache,
                    double grad_prediction) {
  check_shape(static_cast<int>(cache.heads.size()) == model.head_count(),
              "backward: cache does not match model");
  ModelGrads grads = zero_grads(model);
  const TemporalBackwardResult tb = temporal_backward(
      model.temporal, cache.temporal, grad_prediction, grads.temporal);
  const int c = model.head_output_channels();
  for (int h = 0; h < model.head_count(); ++h) {
    const Matrix grad_head = tb.grad_concat.middleRows(h * c, c);
    head_backward(model.heads[h], cache.heads[h], grad_head, grads.heads[h]);
  }
  return grads;
}

std::vector<double> predict_series(const DomSTModel& model,
                                   const std::vector<Sample>& samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(forward(model, s));
  return out;
}

Array pixcon_weights_by_pixel(const DomSTModel& model) {
  require(model.config.use_pixcon,
          "pixcon_weights_by_pixel: model has no pixel-contribution block");
  Array w(model.pixel_count);
  for (int h = 0; h < model.head_count(); ++h) {
    const Array head_w = model.heads[h].pixcon.weights();
    const auto& pixels = model.partition.heads[h];
    for (std::size_t i = 0; i < pixels.size(); ++i)
      w(pixels[i]) = head_w(static_cast<Eigen::Index>(i));
  }
  return w;
}

// ------------------------------------------------------------ flattening ---

namespace {

// visits every tensor in a fixed order; Fn(double* data, long n)
template <typename Head, typename Fn>
void visit_head(Head& h, Fn&& fn) {
  if (h.pixcon.logits.size() > 0)
    fn(h.pixcon.logits.data(), h.pixcon.logits.size());
  for (auto& c : h.conv) {
    for (auto& k : c.kernels) fn(k.data(), k.size());
    fn(c.bias.data(), c.bias.size());
  }
}

template <typename Temporal, typename Fn>
void visit_temporal(Temporal& t, Fn&& fn) {
  for (auto& l : t.lstm.layers) {
    fn(l.w_input.data(), l.w_input.size());
    fn(l.w_recurrent.data(), l.w_recurrent.size());
    fn(l.bias.data(), l.bias.size());
  }
  for (auto& d : t.dense) {
    fn(d.weight.data(), d.weight.size());
    fn(d.bias.data(), d.bias.size());
  }
}

template <typename P, typename Visit>
long flat_size_impl(P& p, Visit&& visit) {
  long n = 0;
  visit(p, [&](const double*, Eigen::Index len) { n += len; });
  return n;
}

template <typename P, typename Visit>
Array flatten_impl(P& p, long n, Visit&& visit) {
  Array out(n);
  Eigen::Index pos = 0;
  visit(p, [&](const double* data, Eigen::Index len) {
    std::memcpy(out.data() + pos, data, sizeof(double) * len);
    pos += len;
  });
  return out;
}

template <typename P, typename Visit>
void unflatten_impl(P& p, const Array& flat, long n, Visit&& visit) {
  check_shape(flat.size() == n, cat("unflatten: flat length ", flat.size(),
                                    " != parameter count ", n));
  Eigen::Index pos = 0;
  visit(p, [&](double* data, Eigen::Index len) {
    std::memcpy(data, flat.data() + pos, sizeof(double) * len);
    pos += len;
  });
}

}  // namespace

long flat_size(const HeadParams& p) {
  return flat_size_impl(p, [](const HeadParams& h, auto&& fn) {
    visit_head(h, fn);
  });
}

long flat_size(const TemporalParams& p) {
  return flat_size_impl(p, [](const TemporalParams& t, auto&& fn) {
    visit_temporal(t, fn);
  });
}

Array flatten(const HeadParams& p) {
  return flatten_impl(p, flat_size(p), [](const HeadParams& h, auto&& fn) {
    visit_head(h, fn);
  });
}

Array flatten(const TemporalParams& p) {
  return flatten_impl(p, flat_size(p), [](const TemporalParams& t, auto&& fn) {
    visit_temporal(t, fn);
  });
}

void unflatten(HeadParams& p, const Array& flat) {
  unflatten_impl(p, flat, flat_size(p), [](HeadParams& h, auto&& fn) {
    visit_head(h, fn);
  });
}

void unflatten(TemporalParams& p, const Array& flat) {
  unflatten_impl(p, flat, flat_size(p), [](TemporalParams& t, auto&& fn) {
    visit_temporal(t, fn);
  });
}

Array flatten_all(const DomSTModel& model) {
  long n = flat_size(model.temporal);
  for (const auto& h : model.heads) n += flat_size(h);
  Array out(n);
  Eigen::Index pos = 0;
  for (const auto& h : model.heads) {
    const Array f = flatten(h);
    out.segment(pos, f.size()) = f;
    pos += f.size();
  }
  const Array f = flatten(model.temporal);
  out.segment(pos, f.size()) = f;
  return out;
}

// ---------------------------------------------------------------- config ---

namespace {

json config_to_json_obj(const ModelConfig& c) {
  json j;
  j["variant"] = to_string(c.variant);
  j["heads"] = c.heads;
  json convs = json::array();
  for (const auto& l : c.conv_layers)
    convs.push_back({{"out_channels", l.out_channels},
                     {"kernel_width", l.kernel_width},
                     {"stride", l.stride}});
  j["conv_layers"] = convs;
  j["lstm_hidden"] = c.lstm_hidden;
  j["lstm_layers"] = c.lstm_layers;
  j["dense_hidden"] = c.dense_hidden;
  j["lookback"] = c.lookback;
  j["use_pixcon"] = c.use_pixcon;
  j["pixcon_tau_km"] = c.pixcon_tau_km;
  j["partition_strategy"] = to_string(c.partition_strategy);
  j["seed"] = c.seed;
  return j;
}

ModelConfig config_from_json_obj(const json& j) {
  ModelConfig c;
  c.variant = variant_from_string(j.at("variant").get<std::string>());
  c.heads = j.at("heads").get<int>();
  c.conv_layers.clear();
  for (const auto& l : j.at("conv_layers"))
    c.conv_layers.push_back({l.at("out_channels").get<int>(),
                             l.at("kernel_width").get<int>(),
                             l.at("stride").get<int>()});
  c.lstm_hidden = j.at("lstm_hidden").get<int>();
  c.lstm_layers = j.at("lstm_layers").get<int>();
  c.dense_hidden = j.at("dense_hidden").get<std::vector<int>>();
  c.lookback = j.at("lookback").get<int>();
  c.use_pixcon = j.at("use_pixcon").get<bool>();
  c.pixcon_tau_km = j.at("pixcon_tau_km").get<double>();
  c.partition_strategy = partition_strategy_from_string(
      j.at("partition_strategy").get<std::string>());
  c.seed = j.at("seed").get<std::uint64_t>();
  return c;
}

}  // namespace

std::string config_to_json(const ModelConfig& config) {
  return config_to_json_obj(config).dump(2);
}

ModelConfig config_from_json(const std::string& text) {
  return config_from_json_obj(json::parse(text));
}

// ----------------------------------------------------------- checkpoints ---

namespace {
constexpr char kCheckpointMagic[] = "DOMST-CKPT-v1\n";
}

void save_checkpoint(const DomSTModel& model, const std::string& path) {
  json meta;
  meta["config"] = config_to_json_obj(model.config);
  meta["partition"] = model.partition.heads;
  meta["pixel_count"] = model.pixel_count;
  const std::string header = meta.dump();

  std::ofstream out(path, std::ios::binary);
  require(out.good(), cat("checkpoint: cannot open ", path, " for writing"));
  out.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
  const std::uint64_t hlen = header.size();
  out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));

  const Array flat = flatten_all(model);
  const std::uint64_t n = static_cast<std::uint64_t>(flat.size());
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(flat.data()),
            static_cast<std::streamsize>(sizeof(double) * flat.size()));
  require(out.good(), cat("checkpoint: write to ", path, " failed"));
}

DomSTModel load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), cat("checkpoint: cannot open ", path));
  char magic[sizeof(kCheckpointMagic) - 1];
  in.read(magic, sizeof(magic));
  require(in.good() && std::memcmp(magic, kCheckpointMagic, sizeof(magic)) == 0,
          cat("checkpoint: ", path, " is not a model checkpoint"));
  std::uint64_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  std::string header(hlen, '\0');
  in.read(header.data(), static_cast<std::streamsize>(hlen));
  require(in.good(), cat("checkpoint: truncated header in ", path));

  const json meta = json::parse(header);
  DomSTModel model;
  model.config = config_from_json_obj(meta.at("config"));
  model.partition.heads =
      meta.at("partition").get<std::vector<std::vector<int>>>();
  model.pixel_count = meta.at("pixel_count").get<int>();
  model.partition.validate(model.pixel_count);

  // rebuild shapes from the config, then fill from the blob
  std::vector<PixelMeta> meta_pixels(model.pixel_count);
  for (int i = 0; i < model.pixel_count; ++i) meta_pixels[i].pixel_id = i;
  DomSTModel shaped = build_model(model.config, meta_pixels);
  shaped.partition = model.partition;
  // head conv shapes depend on the stored partition, not the rebuilt one
  ModelConfig cfg = model.config;
  shaped.heads.clear();
  shaped.heads.resize(cfg.heads);
  for (int h = 0; h < cfg.heads; ++h) {
    HeadParams& head = shaped.heads[h];
    const int own = static_cast<int>(model.partition.heads[h].size());
    if (cfg.use_pixcon) head.pixcon.logits = Array::Zero(own);
    int c_in = own;
    for (const auto& spec : cfg.conv_layers) {
      Conv1dParams cp;
      cp.stride = spec.stride;
      for (int c = 0; c < spec.out_channels; ++c)
        cp.kernels.push_back(Matrix::Zero(c_in, spec.kernel_width));
      cp.bias = Vector::Zero(spec.out_channels);
      head.conv.push_back(std::move(cp));
      c_in = spec.out_channels;
    }
  }

  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  long expected = flat_size(shaped.temporal);
  for (const auto& h : shaped.heads) expected += flat_size(h);
  check_shape(static_cast<long>(n) == expected,
              cat("checkpoint: tensor blob has ", n, " values, model needs ",
                  expected));
  Array flat(static_cast<Eigen::Index>(n));
  in.read(reinterpret_cast<char*>(flat.data()),
          static_cast<std::streamsize>(sizeof(double) * n));
  require(in.good(), cat("checkpoint: truncated tensor data in ", path));

  Eigen::Index pos = 0;
  for (auto& h : shaped.heads) {
    const long len = flat_size(h);
    unflatten(h, Array(flat.segment(pos, len)));
    pos += len;
  }
  unflatten(shaped.temporal, Array(flat.segment(pos, flat.size() - pos)));
  return shaped;
}

}  // namespace domst
