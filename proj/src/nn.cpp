#include "vcsc/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "vcsc/error.hpp"
#include "vcsc/kernels.hpp"

namespace vcsc {

// ---------------------------------------------------------------------------
// Tensor

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), values_(product(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != product(shape_)) {
    throw Error("tensor of shape " + shape_string() + " given " + std::to_string(values_.size()) + " values");
  }
}

Tensor Tensor::vec(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

void Tensor::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool Tensor::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

std::string Tensor::shape_string() const {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "x" : "") << shape_[i];
  os << ']';
  return os.str();
}

// ---------------------------------------------------------------------------
// Parameters

namespace {

Tensor uniform(std::vector<std::size_t> shape, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-kInitScale, kInitScale);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

void require(bool ok, const std::string& op, const std::string& operand, const Tensor& got, std::size_t want) {
  if (!ok) {
    throw Error(op + ": operand '" + operand + "' has shape " + got.shape_string() + ", expected " +
                std::to_string(want) + " elements");
  }
}

}  // namespace

LinearParams LinearParams::zeros(std::size_t in, std::size_t out) {
  return {Tensor({in, out}), Tensor({out})};
}

LinearParams LinearParams::random(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  LinearParams p;
  p.W = uniform({in, out}, rng);
  p.b = uniform({out}, rng);
  return p;
}

void LinearParams::collect(const std::string& prefix, ParamRefs& out) {
  out.push_back({prefix + ".W", &W});
  out.push_back({prefix + ".b", &b});
}

LstmParams LstmParams::zeros(std::size_t in, std::size_t d) {
  LstmParams p;
  for (Tensor* w : {&p.W_i, &p.W_f, &p.W_o, &p.W_g}) *w = Tensor({in, d});
  for (Tensor* u : {&p.U_i, &p.U_f, &p.U_o, &p.U_g}) *u = Tensor({d, d});
  for (Tensor* b : {&p.b_i, &p.b_f, &p.b_o, &p.b_g}) *b = Tensor({d});
  return p;
}

LstmParams LstmParams::random(std::size_t in, std::size_t d, std::mt19937_64& rng) {
  LstmParams p;
  for (Tensor* w : {&p.W_i, &p.W_f, &p.W_o, &p.W_g}) *w = uniform({in, d}, rng);
  for (Tensor* u : {&p.U_i, &p.U_f, &p.U_o, &p.U_g}) *u = uniform({d, d}, rng);
  for (Tensor* b : {&p.b_i, &p.b_o, &p.b_g}) *b = uniform({d}, rng);
  p.b_f = Tensor({d}, kForgetBiasInit);
  return p;
}

void LstmParams::collect(const std::string& prefix, ParamRefs& out) {
  out.push_back({prefix + ".W_i", &W_i});
  out.push_back({prefix + ".W_f", &W_f});
  out.push_back({prefix + ".W_o", &W_o});
  out.push_back({prefix + ".W_g", &W_g});
  out.push_back({prefix + ".U_i", &U_i});
  out.push_back({prefix + ".U_f", &U_f});
  out.push_back({prefix + ".U_o", &U_o});
  out.push_back({prefix + ".U_g", &U_g});
  out.push_back({prefix + ".b_i", &b_i});
  out.push_back({prefix + ".b_f", &b_f});
  out.push_back({prefix + ".b_o", &b_o});
  out.push_back({prefix + ".b_g", &b_g});
}

// ---------------------------------------------------------------------------
// Forward ops

Tensor linear(const LinearParams& p, const Tensor& x) {
  require(x.size() == p.in_dim(), "linear", "x", x, p.in_dim());
  require(p.b.size() == p.out_dim(), "linear", "b", p.b, p.out_dim());
  Tensor y = p.b;
  kernels::gemv_acc(x.values(), p.W.data(), p.in_dim(), p.out_dim(), y.values());
  return y;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

Tensor gate(const Tensor& W, const Tensor& U, const Tensor& b, const Tensor& x, const Tensor& h) {
  Tensor z = b;
  kernels::gemv_acc(x.values(), W.data(), W.rows(), W.cols(), z.values());
  kernels::gemv_acc(h.values(), U.data(), U.rows(), U.cols(), z.values());
  return z;
}

}  // namespace

LstmOutput lstm_step(const LstmParams& p, const Tensor& h, const Tensor& c, const Tensor& x, LstmCache* cache) {
  const std::size_t d = p.hidden_dim();
  require(x.size() == p.in_dim(), "lstm_step", "x", x, p.in_dim());
  require(h.size() == d, "lstm_step", "h", h, d);
  require(c.size() == d, "lstm_step", "c", c, d);

  Tensor i = gate(p.W_i, p.U_i, p.b_i, x, h);
  Tensor f = gate(p.W_f, p.U_f, p.b_f, x, h);
  Tensor o = gate(p.W_o, p.U_o, p.b_o, x, h);
  Tensor g = gate(p.W_g, p.U_g, p.b_g, x, h);
  Tensor c_next({d});
  Tensor tanh_c({d});
  Tensor h_next({d});
  for (std::size_t k = 0; k < d; ++k) {
    i[k] = sigmoid(i[k]);
    f[k] = sigmoid(f[k]);
    o[k] = sigmoid(o[k]);
    g[k] = std::tanh(g[k]);
    c_next[k] = f[k] * c[k] + i[k] * g[k];
    tanh_c[k] = std::tanh(c_next[k]);
    h_next[k] = o[k] * tanh_c[k];
  }
  if (cache) {
    *cache = LstmCache{x, h, c, std::move(i), std::move(f), std::move(o), std::move(g), c_next, std::move(tanh_c),
                       h_next};
  }
  return {std::move(h_next), std::move(c_next)};
}

Tensor softmax(const Tensor& v) {
  if (v.empty()) throw Error("softmax: empty input");
  const auto vals = v.values();
  const double mx = *std::max_element(vals.begin(), vals.end());
  Tensor out = v;
  double sum = 0.0;
  for (auto& x : out.values()) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (auto& x : out.values()) x /= sum;
  return out;
}

Tensor relu(const Tensor& v) {
  Tensor out = v;
  for (auto& x : out.values()) x = x > 0.0 ? x : 0.0;
  return out;
}

double cross_entropy(const Tensor& p, std::int64_t target) {
  if (target < 0 || static_cast<std::size_t>(target) >= p.size()) {
    throw Error("cross_entropy: target " + std::to_string(target) + " out of range");
  }
  return -std::log(std::max(p[static_cast<std::size_t>(target)], kProbFloor));
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

// ---------------------------------------------------------------------------
// Backward ops

Tensor linear_backward(const LinearParams& p, const Tensor& x, const Tensor& dy, LinearParams& grad) {
  kernels::outer_acc(x.values(), dy.values(), grad.W.data());
  kernels::axpy(1.0, dy.values(), grad.b.values());
  Tensor dx({p.in_dim()});
  kernels::gemv_t_acc(dy.values(), p.W.data(), p.in_dim(), p.out_dim(), dx.values());
  return dx;
}

LstmGrads lstm_backward(const LstmParams& p, const LstmCache& cache, const Tensor& dh, const Tensor& dc,
                        LstmParams& grad) {
  const std::size_t d = p.hidden_dim();
  Tensor da_i({d}), da_f({d}), da_o({d}), da_g({d});
  LstmGrads out{Tensor({p.in_dim()}), Tensor({d}), Tensor({d})};
  for (std::size_t k = 0; k < d; ++k) {
    const double i = cache.i[k], f = cache.f[k], o = cache.o[k], g = cache.g[k];
    const double tc = cache.tanh_c[k];
    const double dct = dc[k] + dh[k] * o * (1.0 - tc * tc);
    da_o[k] = dh[k] * tc * o * (1.0 - o);
    da_i[k] = dct * g * i * (1.0 - i);
    da_f[k] = dct * cache.c_prev[k] * f * (1.0 - f);
    da_g[k] = dct * i * (1.0 - g * g);
    out.dc_prev[k] = dct * f;
  }
  struct Gate {
    const Tensor& W;
    const Tensor& U;
    Tensor& gW;
    Tensor& gU;
    Tensor& gb;
    const Tensor& da;
  };
  const Gate gates[] = {
      {p.W_i, p.U_i, grad.W_i, grad.U_i, grad.b_i, da_i},
      {p.W_f, p.U_f, grad.W_f, grad.U_f, grad.b_f, da_f},
      {p.W_o, p.U_o, grad.W_o, grad.U_o, grad.b_o, da_o},
      {p.W_g, p.U_g, grad.W_g, grad.U_g, grad.b_g, da_g},
  };
  for (const auto& gt : gates) {
    kernels::outer_acc(cache.x.values(), gt.da.values(), gt.gW.data());
    kernels::outer_acc(cache.h_prev.values(), gt.da.values(), gt.gU.data());
    kernels::axpy(1.0, gt.da.values(), gt.gb.values());
    kernels::gemv_t_acc(gt.da.values(), gt.W.data(), gt.W.rows(), gt.W.cols(), out.dx.values());
    kernels::gemv_t_acc(gt.da.values(), gt.U.data(), gt.U.rows(), gt.U.cols(), out.dh_prev.values());
  }
  return out;
}

Tensor softmax_backward(const Tensor& a, const Tensor& da) {
  const double inner = kernels::dot(a.values(), da.values());
  Tensor dz = a;
  for (std::size_t k = 0; k < a.size(); ++k) dz[k] = a[k] * (da[k] - inner);
  return dz;
}

// ---------------------------------------------------------------------------
// Optimizer

AdamState AdamState::for_params(const ParamRefs& params, AdamConfig config) {
  AdamState s;
  s.config = config;
  for (const auto& p : params) {
    s.m.push_back(p.tensor->zeros_like());
    s.v.push_back(p.tensor->zeros_like());
  }
  return s;
}

void adam_update(const ParamRefs& params, const ParamRefs& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw Error("adam_update: parameter/gradient/state count mismatch");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (!params[k].tensor->same_shape(*grads[k].tensor) || !params[k].tensor->same_shape(state.m[k])) {
      throw Error("adam_update: shape mismatch for '" + params[k].name + "'");
    }
  }
  const auto& cfg = state.config;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k].tensor->values();
    auto g = grads[k].tensor->values();
    auto m = state.m[k].values();
    auto v = state.v[k].values();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      p[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

double global_norm(const ParamRefs& grads) {
  double sq = 0.0;
  for (const auto& g : grads) sq += kernels::dot(g.tensor->values(), g.tensor->values());
  return std::sqrt(sq);
}

double clip_global_norm(const ParamRefs& grads, double max_norm) {
  const double norm = global_norm(grads);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (const auto& g : grads) {
      for (auto& v : g.tensor->values()) v *= scale;
    }
  }
  return norm;
}

}  // namespace vcsc
