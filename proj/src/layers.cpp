#include "domst/layers.hpp"

#include <cmath>

namespace domst {

// ---------------------------------------------------------------- conv1d ---

void Conv1dParams::validate() const {
  check_shape(!kernels.empty(), "conv1d: at least one output channel required");
  check_shape(stride >= 1, cat("conv1d: stride must be >= 1, got ", stride));
  const auto rows = kernels[0].rows();
  const auto cols = kernels[0].cols();
  check_shape(rows >= 1 && cols >= 1, "conv1d: empty kernel");
  for (const auto& k : kernels)
    check_shape(k.rows() == rows && k.cols() == cols,
                "conv1d: kernel shapes differ across output channels");
  check_shape(bias.size() == static_cast<Eigen::Index>(kernels.size()),
              cat("conv1d: bias length ", bias.size(), " != out channels ",
                  kernels.size()));
}

int conv1d_output_length(int input_length, int kernel_width, int stride) {
  check_shape(input_length >= kernel_width,
              cat("conv1d: window longer than input (L=", input_length,
                  ", K=", kernel_width, ")"));
  return (input_length - kernel_width) / stride + 1;
}

Matrix conv1d_forward(const Matrix& input, const Conv1dParams& params,
                      Conv1dCache* cache) {
  params.validate();
  const int c_in = params.in_channels();
  const int c_out = params.out_channels();
  const int k = params.kernel_width();
  check_shape(input.rows() == c_in,
              cat("conv1d: expected ", c_in, " input channels, got ",
                  input.rows()));
  check_finite(input, "conv1d input");
  const int l_out =
      conv1d_output_length(static_cast<int>(input.cols()), k, params.stride);

  Matrix out(c_out, l_out);
  for (int c = 0; c < c_out; ++c) {
    const Matrix& kernel = params.kernels[c];
    for (int t = 0; t < l_out; ++t) {
      out(c, t) = params.bias(c) +
                  (kernel.array() * input.block(0, t * params.stride, c_in, k).array())
                      .sum();
    }
  }
  if (cache) cache->input = input;
  return out;
}

Matrix conv1d_backward(const Conv1dParams& params, const Conv1dCache& cache,
                       const Matrix& grad_output, Conv1dParams& grads) {
  const int c_in = params.in_channels();
  const int c_out = params.out_channels();
  const int k = params.kernel_width();
  const int l = static_cast<int>(cache.input.cols());
  check_shape(cache.input.rows() == c_in, "conv1d backward: stale cache");
  const int l_out = conv1d_output_length(l, k, params.stride);
  check_shape(grad_output.rows() == c_out && grad_output.cols() == l_out,
              cat("conv1d backward: expected grad [", c_out, "x", l_out,
                  "], got [", grad_output.rows(), "x", grad_output.cols(), "]"));

  Matrix grad_input = Matrix::Zero(c_in, l);
  for (int c = 0; c < c_out; ++c) {
    grads.bias(c) += grad_output.row(c).sum();
    for (int t = 0; t < l_out; ++t) {
      const double g = grad_output(c, t);
      grads.kernels[c] += g * cache.input.block(0, t * params.stride, c_in, k);
      grad_input.block(0, t * params.stride, c_in, k) += g * params.kernels[c];
    }
  }
  return grad_input;
}

Conv1dParams zeros_like(const Conv1dParams& p) {
  Conv1dParams z;
  z.stride = p.stride;
  z.kernels.reserve(p.kernels.size());
  for (const auto& k : p.kernels) z.kernels.push_back(Matrix::Zero(k.rows(), k.cols()));
  z.bias = Vector::Zero(p.bias.size());
  return z;
}

// ------------------------------------------------------------------ lstm ---

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

void LstmParams::validate() const {
  check_shape(!layers.empty(), "lstm: at least one layer required");
  check_shape(hidden_size >= 1, "lstm: hidden size must be >= 1");
  const Eigen::Index h4 = 4 * hidden_size;
  Eigen::Index d = layers[0].w_input.cols();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    check_shape(l.w_input.rows() == h4 && l.w_recurrent.rows() == h4 &&
                    l.bias.size() == h4,
                cat("lstm layer ", i, ": gate dimension mismatch"));
    check_shape(l.w_recurrent.cols() == hidden_size,
                cat("lstm layer ", i, ": recurrent width mismatch"));
    check_shape(l.w_input.cols() == d,
                cat("lstm layer ", i, ": expected input width ", d, ", got ",
                    l.w_input.cols()));
    d = hidden_size;  // next layer consumes this layer's hidden sequence
  }
}

Matrix lstm_forward(const Matrix& sequence, const LstmParams& params,
                    Vector* last_hidden, LstmCache* cache) {
  params.validate();
  check_shape(sequence.cols() == params.input_size(),
              cat("lstm: expected input width ", params.input_size(), ", got ",
                  sequence.cols()));
  check_shape(sequence.rows() >= 1, "lstm: empty sequence");
  check_finite(sequence, "lstm input");

  const int len = static_cast<int>(sequence.rows());
  const int hs = params.hidden_size;
  if (cache) cache->layers.assign(params.layers.size(), {});

  Matrix layer_in = sequence;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const auto& p = params.layers[li];
    Matrix hid(len, hs), cel(len, hs), gi(len, hs), gf(len, hs), gg(len, hs),
        go(len, hs);
    Vector h = Vector::Zero(hs);
    Vector c = Vector::Zero(hs);
    for (int t = 0; t < len; ++t) {
      Vector z = p.w_input * layer_in.row(t).transpose() + p.w_recurrent * h +
                 p.bias;
      for (int j = 0; j < hs; ++j) {
        const double i_t = sigmoid(z(j));
        const double f_t = sigmoid(z(hs + j));
        const double g_t = std::tanh(z(2 * hs + j));
        const double o_t = sigmoid(z(3 * hs + j));
        const double c_t = f_t * c(j) + i_t * g_t;
        const double h_t = o_t * std::tanh(c_t);
        gi(t, j) = i_t;
        gf(t, j) = f_t;
        gg(t, j) = g_t;
        go(t, j) = o_t;
        cel(t, j) = c_t;
        hid(t, j) = h_t;
        c(j) = c_t;
        h(j) = h_t;
      }
    }
    if (cache) {
      auto& cl = cache->layers[li];
      cl.input = layer_in;
      cl.i = std::move(gi);
      cl.f = std::move(gf);
      cl.g = std::move(gg);
      cl.o = std::move(go);
      cl.cell = cel;
      cl.hidden = hid;
    }
    layer_in = std::move(hid);
  }
  if (last_hidden) *last_hidden = layer_in.row(len - 1).transpose();
  return layer_in;
}

Matrix lstm_backward(const LstmParams& params, const LstmCache& cache,
                     const Vector& grad_last_hidden, LstmParams& grads) {
  check_shape(cache.layers.size() == params.layers.size(),
              "lstm backward: cache does not match params");
  check_shape(grad_last_hidden.size() == params.hidden_size,
              cat("lstm backward: expected grad length ", params.hidden_size,
                  ", got ", grad_last_hidden.size()));

  const int hs = params.hidden_size;
  const int len = static_cast<int>(cache.layers[0].input.rows());

  // grad w.r.t. each layer's full hidden sequence; the top layer starts with
  // the upstream grad on its final step only.
  Matrix grad_hidden_seq = Matrix::Zero(len, hs);
  grad_hidden_seq.row(len - 1) = grad_last_hidden.transpose();

  Matrix grad_layer_input;
  for (int li = static_cast<int>(params.layers.size()) - 1; li >= 0; --li) {
    const auto& p = params.layers[li];
    const auto& cl = cache.layers[li];
    auto& g = grads.layers[li];
    const int d = static_cast<int>(cl.input.cols());
    grad_layer_input = Matrix::Zero(len, d);

    Vector grad_h_next = Vector::Zero(hs);  // from step t+1's recurrence
    Vector grad_c_next = Vector::Zero(hs);
    for (int t = len - 1; t >= 0; --t) {
      Vector grad_h =
          grad_hidden_seq.row(t).transpose() + grad_h_next;  // loss + recurrence
      Vector grad_z(4 * hs);
      Vector grad_c(hs);
      for (int j = 0; j < hs; ++j) {
        const double i_t = cl.i(t, j);
        const double f_t = cl.f(t, j);
        const double g_t = cl.g(t, j);
        const double o_t = cl.o(t, j);
        const double c_t = cl.cell(t, j);
        const double tc = std::tanh(c_t);
        const double gc = grad_h(j) * o_t * (1.0 - tc * tc) + grad_c_next(j);
        const double c_prev = (t > 0) ? cl.cell(t - 1, j) : 0.0;
        grad_z(j) = gc * g_t * i_t * (1.0 - i_t);
        grad_z(hs + j) = gc * c_prev * f_t * (1.0 - f_t);
        grad_z(2 * hs + j) = gc * i_t * (1.0 - g_t * g_t);
        grad_z(3 * hs + j) = grad_h(j) * tc * o_t * (1.0 - o_t);
        grad_c(j) = gc * f_t;
      }
      const Vector h_prev =
          (t > 0) ? Vector(cl.hidden.row(t - 1).transpose()) : Vector::Zero(hs);
      g.w_input += grad_z * cl.input.row(t);
      g.w_recurrent += grad_z * h_prev.transpose();
      g.bias += grad_z;
      grad_layer_input.row(t) = (p.w_input.transpose() * grad_z).transpose();
      grad_h_next = p.w_recurrent.transpose() * grad_z;
      grad_c_next = grad_c;
    }
    if (li > 0) grad_hidden_seq = grad_layer_input;  // feeds the layer below
  }
  return grad_layer_input;
}

LstmParams zeros_like(const LstmParams& p) {
  LstmParams z;
  z.hidden_size = p.hidden_size;
  z.layers.reserve(p.layers.size());
  for (const auto& l : p.layers)
    z.layers.push_back({Matrix::Zero(l.w_input.rows(), l.w_input.cols()),
                        Matrix::Zero(l.w_recurrent.rows(), l.w_recurrent.cols()),
                        Vector::Zero(l.bias.size())});
  return z;
}

// ----------------------------------------------------------------- dense ---

void DenseParams::validate() const {
  check_shape(weight.rows() == bias.size(),
              cat("dense: weight rows ", weight.rows(), " != bias length ",
                  bias.size()));
}

Vector dense_forward(const Vector& x, const DenseParams& params,
                     DenseCache* cache) {
  params.validate();
  check_shape(x.size() == params.weight.cols(),
              cat("dense: expected input length ", params.weight.cols(),
                  ", got ", x.size()));
  check_finite(x, "dense input");
  if (cache) cache->input = x;
  return params.weight * x + params.bias;
}

Vector dense_backward(const DenseParams& params, const DenseCache& cache,
                      const Vector& grad_output, DenseParams& grads) {
  check_shape(grad_output.size() == params.weight.rows(),
              cat("dense backward: expected grad length ", params.weight.rows(),
                  ", got ", grad_output.size()));
  check_shape(cache.input.size() == params.weight.cols(),
              "dense backward: stale cache");
  grads.weight += grad_output * cache.input.transpose();
  grads.bias += grad_output;
  return params.weight.transpose() * grad_output;
}

DenseParams zeros_like(const DenseParams& p) {
  return {Matrix::Zero(p.weight.rows(), p.weight.cols()),
          Vector::Zero(p.bias.size())};
}

// ------------------------------------------------------------------ relu ---

Matrix relu(const Matrix& x) { return x.cwiseMax(0.0); }
Vector relu(const Vector& x) { return x.cwiseMax(0.0); }

Matrix relu_backward(const Matrix& pre_activation, const Matrix& grad) {
  return (pre_activation.array() > 0.0).select(grad, Matrix::Zero(grad.rows(), grad.cols()));
}

Vector relu_backward(const Vector& pre_activation, const Vector& grad) {
  return (pre_activation.array() > 0.0).select(grad, Vector::Zero(grad.size()));
}

// ------------------------------------------------------------------- mse ---

MseResult mse_loss(const Vector& pred, const Vector& target) {
  check_shape(pred.size() == target.size(),
              cat("mse: prediction length ", pred.size(), " != target length ",
                  target.size()));
  check_shape(pred.size() >= 1, "mse: empty input");
  check_finite(pred, "mse pred");
  check_finite(target, "mse target");
  const double n = static_cast<double>(pred.size());
  MseResult r;
  const Vector diff = pred - target;
  r.loss = diff.squaredNorm() / n;
  r.grad_pred = (2.0 / n) * diff;
  return r;
}

// ------------------------------------------------------------------ adam ---

void adam_step(Eigen::Ref<Array> params, const Array& grads, AdamState& state) {
  check_shape(params.size() == grads.size(),
              cat("adam: params length ", params.size(), " != grads length ",
                  grads.size()));
  check_shape(state.m.size() == params.size() && state.v.size() == params.size(),
              cat("adam: state sized ", state.m.size(), " for ", params.size(),
                  " params"));
  const AdamConfig& c = state.config;
  state.step += 1;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grads;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grads.square();
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
  params -= c.lr * (state.m / bc1) / ((state.v / bc2).sqrt() + c.eps);
}

// ------------------------------------------------------------------ init ---

double glorot_limit(int fan_in, int fan_out) {
  return std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
}

Matrix glorot_matrix(int rows, int cols, int fan_in, int fan_out, Rng& rng) {
  const double lim = glorot_limit(fan_in, fan_out);
  Matrix m(rows, cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-lim, lim);
  return m;
}

}  // namespace domst
