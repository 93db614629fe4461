#include "vcsc/decoders.hpp"

#include <algorithm>
#include <cmath>

#include "vcsc/error.hpp"
#include "vcsc/kernels.hpp"

namespace vcsc {

void DecoderConfig::validate() const {
  if (d == 0 || d_embed == 0 || feature_dim == 0 || N == 0 || m == 0) {
    throw Error("decoder config: d, d_embed, feature_dim, N and m must all be positive");
  }
}

DecoderParams DecoderParams::random(const DecoderConfig& cfg, std::size_t lstm_in, std::mt19937_64& rng) {
  cfg.validate();
  DecoderParams p;
  p.embed = Tensor({cfg.m, cfg.d_embed});
  std::uniform_real_distribution<double> dist(-kInitScale, kInitScale);
  for (auto& v : p.embed.values()) v = dist(rng);
  p.img_proj = LinearParams::random(cfg.feature_dim, cfg.d_embed, rng);
  p.lstm = LstmParams::random(lstm_in, cfg.d, rng);
  p.out = LinearParams::random(cfg.d, cfg.m, rng);
  return p;
}

DecoderParams DecoderParams::zeros(const DecoderConfig& cfg, std::size_t lstm_in) {
  return {Tensor({cfg.m, cfg.d_embed}), LinearParams::zeros(cfg.feature_dim, cfg.d_embed),
          LstmParams::zeros(lstm_in, cfg.d), LinearParams::zeros(cfg.d, cfg.m)};
}

DecoderParams DecoderParams::zeros_like() const {
  return {embed.zeros_like(), LinearParams::zeros(img_proj.in_dim(), img_proj.out_dim()),
          LstmParams::zeros(lstm.in_dim(), lstm.hidden_dim()), LinearParams::zeros(out.in_dim(), out.out_dim())};
}

ParamRefs DecoderParams::refs(const std::string& prefix) {
  ParamRefs r;
  r.push_back({prefix + ".embed", &embed});
  img_proj.collect(prefix + ".img_proj", r);
  lstm.collect(prefix + ".lstm", r);
  out.collect(prefix + ".out", r);
  return r;
}

AttentionParams AttentionParams::random(const DecoderConfig& cfg, std::mt19937_64& rng) {
  return {LinearParams::random(cfg.d_embed + cfg.d, cfg.N, rng)};
}

AttentionParams AttentionParams::zeros(const DecoderConfig& cfg) {
  return {LinearParams::zeros(cfg.d_embed + cfg.d, cfg.N)};
}

AttentionParams AttentionParams::zeros_like() const {
  return {LinearParams::zeros(att.in_dim(), att.out_dim())};
}

ParamRefs AttentionParams::refs(const std::string& prefix) {
  ParamRefs r;
  att.collect(prefix + ".att", r);
  return r;
}

// ---------------------------------------------------------------------------

void emit(DecodeState& state, const Tensor& probs, TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= probs.size()) {
    throw Error("token id " + std::to_string(token) + " out of range");
  }
  state.last_token = token;
  state.log_prob += std::log(std::max(probs[static_cast<std::size_t>(token)], kProbFloor));
}

Tensor step_input(const DecoderParams& params, const DecodeState& state) {
  if (state.last_token == kNoToken) return *state.visual;
  const auto row = params.embed.row(static_cast<std::size_t>(state.last_token));
  return Tensor::vec({row.begin(), row.end()});
}

DecodeState init_state(const DecoderConfig& cfg, const DecoderParams& params, const Tensor& image_feature) {
  if (image_feature.size() != cfg.feature_dim) {
    throw Error("image feature has " + std::to_string(image_feature.size()) + " elements, expected " +
                std::to_string(cfg.feature_dim));
  }
  DecodeState s;
  s.h = Tensor::zeros(cfg.d);
  s.c = Tensor::zeros(cfg.d);
  s.visual = std::make_shared<const Tensor>(linear(params.img_proj, image_feature));
  return s;
}

namespace {

void check_step(const DecoderConfig& cfg, const DecodeState& state) {
  if (state.step >= cfg.N) {
    throw Error("decode step " + std::to_string(state.step) + " exceeds maximum length " + std::to_string(cfg.N));
  }
}

void check_token(const DecoderConfig& cfg, TokenId token) {
  if (token < 0 || static_cast<std::size_t>(token) >= cfg.m) {
    throw Error("token id " + std::to_string(token) + " out of range");
  }
}

StepOutput finish_step(const DecoderParams& params, const DecodeState& state, LstmOutput&& hc) {
  StepOutput out;
  out.next = state;
  out.next.h = std::move(hc.h);
  out.next.c = std::move(hc.c);
  out.next.step = state.step + 1;
  out.probs = softmax(linear(params.out, out.next.h));
  return out;
}

}  // namespace

StepOutput advance(const DecoderConfig& cfg, const DecoderParams& params, const DecodeState& state) {
  check_step(cfg, state);
  return finish_step(params, state, lstm_step(params.lstm, state.h, state.c, step_input(params, state)));
}

StepOutput forward_step(const DecoderConfig& cfg, const DecoderParams& params, const DecodeState& state) {
  StepOutput out = advance(cfg, params, state);
  emit(out.next, out.probs, static_cast<TokenId>(argmax(out.probs.values())));
  return out;
}

DecodeState forced_step(const DecoderConfig& cfg, const DecoderParams& params, const DecodeState& state,
                        TokenId token) {
  check_token(cfg, token);
  StepOutput out = advance(cfg, params, state);
  emit(out.next, out.probs, token);
  return std::move(out.next);
}

BackwardStateSequence backward_states(const DecoderConfig& cfg, const BackwardDecoderParams& bparams,
                                      const Tensor& image_feature, std::span<const TokenId> input) {
  const std::size_t n = input.size();
  if (n > cfg.N) throw Error("input exceeds maximum length");
  for (TokenId t : input) check_token(cfg, t);

  BackwardStateSequence seq;
  seq.states.reserve(cfg.N + 1);
  DecodeState state = init_state(cfg, bparams, image_feature);
  seq.states.push_back(state.h);
  const std::size_t free_steps = cfg.N - n;
  for (std::size_t step = 0; step < cfg.N; ++step) {
    StepOutput out = advance(cfg, bparams, state);
    TokenId token;
    if (step < free_steps) {
      token = static_cast<TokenId>(argmax(out.probs.values()));
    } else {
      // Forced tokens run w_n, w_{n-1}, ..., w_1.
      token = input[n - 1 - (step - free_steps)];
    }
    emit(out.next, out.probs, token);
    state = std::move(out.next);
    seq.states.push_back(state.h);
    seq.emitted.push_back(token);
    seq.forced.push_back(step >= free_steps);
  }
  return seq;
}

// ---------------------------------------------------------------------------

AttentionOutput attend(const AttentionParams& aparams, const Tensor& x_hat, const Tensor& h,
                       const BackwardStateSequence& backward) {
  const std::size_t N = aparams.att.out_dim();
  if (backward.states.size() != N + 1) {
    throw Error("backward state sequence has " + std::to_string(backward.states.size()) + " vectors, expected " +
                std::to_string(N + 1));
  }
  Tensor joint({x_hat.size() + h.size()});
  std::copy(x_hat.values().begin(), x_hat.values().end(), joint.values().begin());
  std::copy(h.values().begin(), h.values().end(), joint.values().begin() + static_cast<std::ptrdiff_t>(x_hat.size()));

  AttentionOutput out;
  out.pre = linear(aparams.att, joint);
  out.weights = softmax(relu(out.pre));
  out.context = Tensor::zeros(backward.states[1].size());
  for (std::size_t i = 0; i < N; ++i) {
    kernels::axpy(out.weights[i], backward.states[i + 1].values(), out.context.values());
  }
  return out;
}

StepOutput attention_advance(const DecoderConfig& cfg, const AttentionParams& aparams,
                             const ForwardDecoderParams& fparams, const DecodeState& state,
                             const BackwardStateSequence& backward) {
  check_step(cfg, state);
  const AttentionOutput att = attend(aparams, step_input(fparams, state), state.h, backward);
  return finish_step(fparams, state, lstm_step(fparams.lstm, state.h, state.c, att.context));
}

StepOutput attention_step(const DecoderConfig& cfg, const AttentionParams& aparams,
                          const ForwardDecoderParams& fparams, const DecodeState& state,
                          const BackwardStateSequence& backward) {
  StepOutput out = attention_advance(cfg, aparams, fparams, state, backward);
  emit(out.next, out.probs, static_cast<TokenId>(argmax(out.probs.values())));
  return out;
}

DecodeState attention_forced_step(const DecoderConfig& cfg, const AttentionParams& aparams,
                                  const ForwardDecoderParams& fparams, const DecodeState& state,
                                  const BackwardStateSequence& backward, TokenId token) {
  check_token(cfg, token);
  StepOutput out = attention_advance(cfg, aparams, fparams, state, backward);
  emit(out.next, out.probs, token);
  return std::move(out.next);
}

TokenSeq greedy_decode(const DecoderConfig& cfg, const DecoderParams& params, const Tensor& image_feature,
                       TokenId end_id) {
  TokenSeq tokens;
  DecodeState state = init_state(cfg, params, image_feature);
  while (state.step < cfg.N) {
    state = forward_step(cfg, params, state).next;
    if (state.last_token == end_id) break;
    tokens.push_back(state.last_token);
  }
  return tokens;
}

TokenSeq greedy_decode_abd(const DecoderConfig& cfg, const AttentionParams& aparams,
                           const ForwardDecoderParams& fparams, const Tensor& image_feature,
                           const BackwardStateSequence& backward, TokenId end_id) {
  TokenSeq tokens;
  DecodeState state = init_state(cfg, fparams, image_feature);
  while (state.step < cfg.N) {
    state = attention_step(cfg, aparams, fparams, state, backward).next;
    if (state.last_token == end_id) break;
    tokens.push_back(state.last_token);
  }
  return tokens;
}

}  // namespace vcsc
