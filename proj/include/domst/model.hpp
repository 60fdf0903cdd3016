#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "domst/layers.hpp"
#include "domst/pixcon.hpp"
#include "domst/tensor.hpp"

namespace domst {

// The three architecture variants compared by the evaluation harness.
enum class Variant { Singlehead, SingleheadPlusP, MultiheadPlusP };

std::string to_string(Variant v);
std::string display_name(Variant v);  // table label, e.g. "Singlehead(+P)"
Variant variant_from_string(const std::string& s);

struct ConvLayerSpec {
  int out_channels = 8;
  int kernel_width = 5;
  int stride = 1;
};

struct ModelConfig {
  Variant variant = Variant::MultiheadPlusP;
  int heads = 4;
  std::vector<ConvLayerSpec> conv_layers = {{8, 5, 1}, {16, 5, 1}};
  int lstm_hidden = 32;
  int lstm_layers = 1;
  std::vector<int> dense_hidden = {};  // widths before the final scalar layer
  int lookback = 30;
  bool use_pixcon = true;
  double pixcon_tau_km = 0.0;  // <= 0: use the median pixel distance
  PartitionStrategy partition_strategy = PartitionStrategy::DistanceQuantile;
  std::uint64_t seed = 0;

  bool plus_p() const { return variant != Variant::Singlehead; }

  // Applies the variant rules: singlehead variants run one head and no
  // pixel-contribution block; the multihead variant always has one.
  ModelConfig normalized() const;
  void validate() const;
};

// One training/evaluation example: a lookback window of pixelated
// precipitation, the target day's precipitation, and that day's discharge.
struct Sample {
  Matrix x;         // [P x L]
  Vector p_target;  // [P]
  double discharge = 0.0;
  long date_index = 0;
};

// Parameters owned by one spatial worker: the pixel-contribution shard for
// its pixels (empty when the variant has none) and its conv stack.
struct HeadParams {
  PixConParams pixcon;  // logits sized 0 when the block is absent
  std::vector<Conv1dParams> conv;

  bool has_pixcon() const { return pixcon.logits.size() > 0; }
};

// Parameters owned by the temporal worker.
struct TemporalParams {
  LstmParams lstm;
  std::vector<DenseParams> dense;  // final layer outputs a single value
};

struct DomSTModel {
  ModelConfig config;           // normalized, with pixcon_tau_km resolved
  PixelPartition partition;
  std::vector<HeadParams> heads;
  TemporalParams temporal;
  int pixel_count = 0;

  int head_count() const { return static_cast<int>(heads.size()); }
  int head_output_channels() const;  // channels one head contributes
  int conv_output_length() const;    // L_out after the conv stack
};

DomSTModel build_model(const ModelConfig& config,
                       const std::vector<PixelMeta>& meta);

// Gradients mirror the parameter structure exactly, so the parameter types
// double as gradient containers.
struct ModelGrads {
  std::vector<HeadParams> heads;
  TemporalParams temporal;
};

ModelGrads zero_grads(const DomSTModel& model);

// ------------------------------------------------------------ forward ------

struct HeadCache {
  PixConCache pixcon;
  std::vector<Conv1dCache> conv;
  std::vector<Matrix> conv_out;  // pre-ReLU output of every conv layer
};

struct TemporalCache {
  LstmCache lstm;
  Vector last_hidden;
  std::vector<DenseCache> dense;
  std::vector<Vector> dense_out;  // pre-ReLU output of every dense layer
  Eigen::Index p_target_size = 0;
};

struct ForwardCache {
  std::vector<HeadCache> heads;
  TemporalCache temporal;
  double prediction = 0.0;
};

// Per-head and temporal-block building blocks. The full-model forward and
// the distributed executor both call these, so the two execution layouts
// perform the identical floating-point operations.
Matrix head_forward(const HeadParams& head, const Matrix& pixel_rows,
                    HeadCache* cache = nullptr);
Matrix head_backward(const HeadParams& head, const HeadCache& cache,
                     const Matrix& grad_output, HeadParams& grads);

struct TemporalBackwardResult {
  Matrix grad_concat;    // grad w.r.t. the concatenated head outputs
  Vector grad_p_target;  // empty for variants without the extra input
};

double temporal_forward(const TemporalParams& temporal, const Matrix& concat,
                        const Vector& p_target, bool plus_p,
                        TemporalCache* cache = nullptr);
TemporalBackwardResult temporal_backward(const TemporalParams& temporal,
                                         const TemporalCache& cache,
                                         double grad_prediction,
                                         TemporalParams& grads);

// Gathers the rows of `x` belonging to head `h`, in partition order.
Matrix head_input_rows(const PixelPartition& partition, int head,
                       const Matrix& x);

double forward(const DomSTModel& model, const Sample& sample,
               ForwardCache* cache = nullptr);
ModelGrads backward(const DomSTModel& model, const ForwardCache& cache,
                    double grad_prediction);

std::vector<double> predict_series(const DomSTModel& model,
                                   const std::vector<Sample>& samples);

// Learned pixel-contribution weights gathered back into pixel-id order.
Array pixcon_weights_by_pixel(const DomSTModel& model);

// ---------------------------------------------------------- flattening -----

long flat_size(const HeadParams& p);
long flat_size(const TemporalParams& p);
Array flatten(const HeadParams& p);
Array flatten(const TemporalParams& p);
void unflatten(HeadParams& p, const Array& flat);
void unflatten(TemporalParams& p, const Array& flat);
Array flatten_all(const DomSTModel& model);  // heads in order, then temporal

// --------------------------------------------------------- checkpointing ---

// Versioned binary checkpoint: config + partition as JSON, tensors as raw
// 64-bit floats. Round-trips bit-exactly.
void save_checkpoint(const DomSTModel& model, const std::string& path);
DomSTModel load_checkpoint(const std::string& path);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& text);

}  // namespace domst
