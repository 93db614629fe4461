#pragma once

#include <cstddef>
#include <memory>
#include <random>
#include <span>
#include <vector>

#include "vcsc/nn.hpp"
#include "vcsc/tensor.hpp"
#include "vcsc/textcore.hpp"

namespace vcsc {

inline constexpr TokenId kNoToken = -1;

struct DecoderConfig {
  std::size_t d = 128;            // hidden size
  std::size_t d_embed = 64;       // token / visual embedding size
  std::size_t feature_dim = 2048; // image feature size
  std::size_t N = 30;             // maximum sequence length
  std::size_t m = 0;              // vocabulary size

  void validate() const;
  bool operator==(const DecoderConfig&) const = default;
};

/// Embedding table, visual projection, LSTM and output layer. The same layout
/// serves the Show-and-Tell decoder, the backward decoder and the forward
/// decoder of the bidirectional model; the latter feeds the LSTM with an
/// attention context of size d instead of a token embedding.
struct DecoderParams {
  Tensor embed;            // (m x d_embed)
  LinearParams img_proj;   // feature_dim -> d_embed
  LstmParams lstm;         // lstm_in -> d
  LinearParams out;        // d -> m

  static DecoderParams random(const DecoderConfig& cfg, std::size_t lstm_in, std::mt19937_64& rng);
  static DecoderParams zeros(const DecoderConfig& cfg, std::size_t lstm_in);
  DecoderParams zeros_like() const;
  ParamRefs refs(const std::string& prefix);
  bool operator==(const DecoderParams&) const = default;
};

using ForwardDecoderParams = DecoderParams;
using BackwardDecoderParams = DecoderParams;

/// Pre-weights for attention over backward states: [x_hat ; h] -> N.
struct AttentionParams {
  LinearParams att;

  static AttentionParams random(const DecoderConfig& cfg, std::mt19937_64& rng);
  static AttentionParams zeros(const DecoderConfig& cfg);
  AttentionParams zeros_like() const;
  ParamRefs refs(const std::string& prefix);
  bool operator==(const AttentionParams&) const = default;
};

struct DecodeState {
  Tensor h;
  Tensor c;
  TokenId last_token = kNoToken;  // kNoToken until the first emission
  std::size_t step = 0;
  double log_prob = 0.0;
  /// Visual embedding x_hat_0, shared by every state derived from one init.
  std::shared_ptr<const Tensor> visual;

  bool operator==(const DecodeState& o) const {
    return h == o.h && c == o.c && last_token == o.last_token && step == o.step && log_prob == o.log_prob;
  }
};

/// Hidden state update without emission: `next` carries the new h, c and
/// step; its last_token and log_prob are still the parent's.
struct StepOutput {
  Tensor probs;
  DecodeState next;
};

/// Sets the emitted token and accumulates its clamped log-probability.
void emit(DecodeState& state, const Tensor& probs, TokenId token);

/// Input x_hat_t: the visual embedding before the first emission, otherwise
/// the embedding of the last emitted token.
Tensor step_input(const DecoderParams& params, const DecodeState& state);

// --- plain decoder (Show-and-Tell and backward) ---------------------------

DecodeState init_state(const DecoderConfig& cfg, const DecoderParams& params, const Tensor& image_feature);
StepOutput advance(const DecoderConfig& cfg, const DecoderParams& params, const DecodeState& state);
/// Advance and emit the greedy (argmax, lowest id on ties) token.
StepOutput forward_step(const DecoderConfig& cfg, const DecoderParams& params, const DecodeState& state);
/// Advance and emit `token` regardless of the distribution.
DecodeState forced_step(const DecoderConfig& cfg, const DecoderParams& params, const DecodeState& state,
                        TokenId token);

/// The N+1 backward hidden vectors plus an instrumentation trace of the
/// token emitted at each of the N steps and whether it was forced.
struct BackwardStateSequence {
  std::vector<Tensor> states;  // h_0 .. h_N
  std::vector<TokenId> emitted;
  std::vector<bool> forced;
};

/// Runs the backward decoder for exactly N steps. The first N-n steps emit
/// greedily; the last n are forced with the user input reversed.
BackwardStateSequence backward_states(const DecoderConfig& cfg, const BackwardDecoderParams& bparams,
                                      const Tensor& image_feature, std::span<const TokenId> input);

// --- forward decoder with attention over backward states ------------------

struct AttentionOutput {
  Tensor pre;      // att([x_hat ; h]) before ReLU
  Tensor weights;  // a_t, N entries
  Tensor context;  // m_t
};

/// a = softmax(ReLU(att([x_hat ; h]))), m = sum_{i=1..N} a_i * states[i].
/// states[0] does not take part.
AttentionOutput attend(const AttentionParams& aparams, const Tensor& x_hat, const Tensor& h,
                       const BackwardStateSequence& backward);

StepOutput attention_advance(const DecoderConfig& cfg, const AttentionParams& aparams,
                             const ForwardDecoderParams& fparams, const DecodeState& state,
                             const BackwardStateSequence& backward);
StepOutput attention_step(const DecoderConfig& cfg, const AttentionParams& aparams,
                          const ForwardDecoderParams& fparams, const DecodeState& state,
                          const BackwardStateSequence& backward);
DecodeState attention_forced_step(const DecoderConfig& cfg, const AttentionParams& aparams,
                                  const ForwardDecoderParams& fparams, const DecodeState& state,
                                  const BackwardStateSequence& backward, TokenId token);

/// Greedy decoding until end or N steps; the end token is not included.
TokenSeq greedy_decode(const DecoderConfig& cfg, const DecoderParams& params, const Tensor& image_feature,
                       TokenId end_id);
TokenSeq greedy_decode_abd(const DecoderConfig& cfg, const AttentionParams& aparams,
                           const ForwardDecoderParams& fparams, const Tensor& image_feature,
                           const BackwardStateSequence& backward, TokenId end_id);

}  // namespace vcsc
