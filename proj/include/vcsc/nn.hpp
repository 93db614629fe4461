#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vcsc/tensor.hpp"

namespace vcsc {

/// Non-owning view of a named parameter tensor, used to walk a parameter
/// set generically (optimizer, checkpoint, gradient check).
struct NamedTensor {
  std::string name;
  Tensor* tensor;
};

using ParamRefs = std::vector<NamedTensor>;

/// Uniform initialization range for every weight.
inline constexpr double kInitScale = 0.08;
/// Forget-gate bias at initialization.
inline constexpr double kForgetBiasInit = 1.0;
/// Lower clamp on probabilities fed to log().
inline constexpr double kProbFloor = 1e-12;

struct LinearParams {
  Tensor W;  // (in x out)
  Tensor b;  // (out)

  static LinearParams zeros(std::size_t in, std::size_t out);
  static LinearParams random(std::size_t in, std::size_t out, std::mt19937_64& rng);

  std::size_t in_dim() const { return W.rows(); }
  std::size_t out_dim() const { return W.cols(); }
  void collect(const std::string& prefix, ParamRefs& out);
  bool operator==(const LinearParams&) const = default;
};

/// Standard LSTM without peepholes. Input-to-gate matrices are (in x d),
/// hidden-to-gate matrices (d x d).
struct LstmParams {
  Tensor W_i, W_f, W_o, W_g;
  Tensor U_i, U_f, U_o, U_g;
  Tensor b_i, b_f, b_o, b_g;

  static LstmParams zeros(std::size_t in, std::size_t d);
  static LstmParams random(std::size_t in, std::size_t d, std::mt19937_64& rng);

  std::size_t in_dim() const { return W_i.rows(); }
  std::size_t hidden_dim() const { return U_i.rows(); }
  void collect(const std::string& prefix, ParamRefs& out);
  bool operator==(const LstmParams&) const = default;
};

/// Gate activations kept from a forward step for backpropagation.
struct LstmCache {
  Tensor x, h_prev, c_prev;
  Tensor i, f, o, g;
  Tensor c, tanh_c, h;
};

struct LstmOutput {
  Tensor h;
  Tensor c;
};

Tensor linear(const LinearParams& p, const Tensor& x);
LstmOutput lstm_step(const LstmParams& p, const Tensor& h, const Tensor& c, const Tensor& x,
                     LstmCache* cache = nullptr);
/// Max-subtracted softmax over a non-empty 1-D tensor.
Tensor softmax(const Tensor& v);
Tensor relu(const Tensor& v);
/// -log p[target] with p clamped below by kProbFloor.
double cross_entropy(const Tensor& p, std::int64_t target);
/// Index of the largest element; the lowest index wins ties.
std::size_t argmax(std::span<const double> v);

// Backward passes. Each accumulates into the gradient buffers it is given.

/// dW += x (x) dy, db += dy, returns dx = W dy.
Tensor linear_backward(const LinearParams& p, const Tensor& x, const Tensor& dy, LinearParams& grad);

struct LstmGrads {
  Tensor dx, dh_prev, dc_prev;
};
LstmGrads lstm_backward(const LstmParams& p, const LstmCache& cache, const Tensor& dh, const Tensor& dc,
                        LstmParams& grad);

/// Softmax Jacobian-vector product: returns dz given a = softmax(z) and da.
Tensor softmax_backward(const Tensor& a, const Tensor& da);

// ---------------------------------------------------------------------------
// Optimizer

struct AdamConfig {
  double lr = 0.0005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> m, v;
  std::uint64_t t = 0;

  static AdamState for_params(const ParamRefs& params, AdamConfig config = {});
};

/// One bias-corrected Adam step. `grads` must mirror `params` tensor by tensor.
void adam_update(const ParamRefs& params, const ParamRefs& grads, AdamState& state);

/// Global L2 norm across all gradient tensors.
double global_norm(const ParamRefs& grads);
/// Rescales gradients in place so their global norm is at most `max_norm`.
/// Returns the norm before clipping.
double clip_global_norm(const ParamRefs& grads, double max_norm);

}  // namespace vcsc
