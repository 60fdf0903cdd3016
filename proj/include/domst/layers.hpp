#pragma once

#include <vector>

#include "domst/rng.hpp"
#include "domst/tensor.hpp"

namespace domst {

// ---------------------------------------------------------------------------
// 1D convolution over the time axis. Input is [C_in x L] (one row per
// channel), output [C_out x L_out] with L_out = floor((L-K)/stride)+1.
// The operation is cross-correlation: no kernel flip, valid padding.
// ---------------------------------------------------------------------------

struct Conv1dParams {
  std::vector<Matrix> kernels;  // one [C_in x K] matrix per output channel
  Vector bias;                  // [C_out]
  int stride = 1;

  int out_channels() const { return static_cast<int>(kernels.size()); }
  int in_channels() const {
    return kernels.empty() ? 0 : static_cast<int>(kernels[0].rows());
  }
  int kernel_width() const {
    return kernels.empty() ? 0 : static_cast<int>(kernels[0].cols());
  }
  void validate() const;
};

struct Conv1dCache {
  Matrix input;  // retained for the backward pass
};

int conv1d_output_length(int input_length, int kernel_width, int stride);

Matrix conv1d_forward(const Matrix& input, const Conv1dParams& params,
                      Conv1dCache* cache = nullptr);

// Returns grad w.r.t. the input; parameter gradients are accumulated into
// `grads` (same shapes as the params, see zeros_like).
Matrix conv1d_backward(const Conv1dParams& params, const Conv1dCache& cache,
                       const Matrix& grad_output, Conv1dParams& grads);

Conv1dParams zeros_like(const Conv1dParams& p);

// ---------------------------------------------------------------------------
// Stacked LSTM. Sequences are time-major: [L x D] in, [L x H] hidden
// sequence out. Gate rows are packed [input; forget; candidate; output],
// i/f/o through the logistic sigmoid, candidate through tanh. Initial
// hidden and cell states are zero. The model consumes only the final
// hidden state, so the backward entry point takes grad w.r.t. it alone.
// ---------------------------------------------------------------------------

struct LstmLayerParams {
  Matrix w_input;      // [4H x D]
  Matrix w_recurrent;  // [4H x H]
  Vector bias;         // [4H]
};

struct LstmParams {
  std::vector<LstmLayerParams> layers;
  int hidden_size = 0;

  int num_layers() const { return static_cast<int>(layers.size()); }
  int input_size() const {
    return layers.empty() ? 0 : static_cast<int>(layers[0].w_input.cols());
  }
  void validate() const;
};

struct LstmCache {
  // per layer: inputs and per-step gate activations
  struct Layer {
    Matrix input;       // [L x D_layer]
    Matrix i, f, g, o;  // [L x H] post-nonlinearity
    Matrix cell;        // [L x H]
    Matrix hidden;      // [L x H]
  };
  std::vector<Layer> layers;
};

// Returns the top layer's hidden sequence [L x H]; `last_hidden` (if given)
// receives its final row.
Matrix lstm_forward(const Matrix& sequence, const LstmParams& params,
                    Vector* last_hidden = nullptr, LstmCache* cache = nullptr);

// Backpropagates from the final hidden state of the top layer. Returns grad
// w.r.t. the input sequence; parameter grads are accumulated into `grads`.
Matrix lstm_backward(const LstmParams& params, const LstmCache& cache,
                     const Vector& grad_last_hidden, LstmParams& grads);

LstmParams zeros_like(const LstmParams& p);

// ---------------------------------------------------------------------------
// Dense layer: y = W x + b.
// ---------------------------------------------------------------------------

struct DenseParams {
  Matrix weight;  // [out x in]
  Vector bias;    // [out]
  void validate() const;
};

struct DenseCache {
  Vector input;
};

Vector dense_forward(const Vector& x, const DenseParams& params,
                     DenseCache* cache = nullptr);

Vector dense_backward(const DenseParams& params, const DenseCache& cache,
                      const Vector& grad_output, DenseParams& grads);

DenseParams zeros_like(const DenseParams& p);

// ---------------------------------------------------------------------------
// ReLU (used between conv layers and between dense layers).
// ---------------------------------------------------------------------------

Matrix relu(const Matrix& x);
Vector relu(const Vector& x);
// grad through relu given the pre-activation values
Matrix relu_backward(const Matrix& pre_activation, const Matrix& grad);
Vector relu_backward(const Vector& pre_activation, const Vector& grad);

// ---------------------------------------------------------------------------
// Mean squared error.
// ---------------------------------------------------------------------------

struct MseResult {
  double loss = 0.0;
  Vector grad_pred;
};

MseResult mse_loss(const Vector& pred, const Vector& target);

// ---------------------------------------------------------------------------
// Adam on a flat parameter array. Owners of structured parameters flatten
// into one array per shard (see model.hpp) and update in place.
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  Array m;  // first moment
  Array v;  // second moment
  long step = 0;
  AdamConfig config;

  explicit AdamState(Eigen::Index n = 0, AdamConfig cfg = {})
      : m(Array::Zero(n)), v(Array::Zero(n)), config(cfg) {}
};

void adam_step(Eigen::Ref<Array> params, const Array& grads, AdamState& state);

// Parameter initialization: uniform in +-sqrt(6/(fan_in+fan_out)).
double glorot_limit(int fan_in, int fan_out);
Matrix glorot_matrix(int rows, int cols, int fan_in, int fan_out, Rng& rng);

}  // namespace domst
