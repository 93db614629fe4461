#pragma once

#include <cstddef>
#include <span>

#include "vcsc/decoders.hpp"

namespace vcsc {

struct SequenceLoss {
  double total = 0.0;     // summed cross-entropy over steps
  std::size_t steps = 0;
};

/// Teacher-forcing targets: the tokens followed by end, truncated to N steps.
TokenSeq teacher_targets(std::span<const TokenId> tokens, TokenId end_id, std::size_t N);

/// Teacher-forced loss of a plain decoder. Step 0 consumes the visual
/// embedding and predicts targets[0]; step t consumes targets[t-1].
/// When `grad` is non-null the exact gradient is accumulated into it.
/// Throws Error(numerical) naming the op if a non-finite value appears.
SequenceLoss decoder_sequence_loss(const DecoderConfig& cfg, const DecoderParams& params, const Tensor& image_feature,
                                   std::span<const TokenId> targets, DecoderParams* grad = nullptr);

/// Teacher-forced loss of the attention forward decoder over fixed backward
/// states. The backward states are constants here; the backward decoder is
/// trained separately and frozen.
SequenceLoss abd_sequence_loss(const DecoderConfig& cfg, const AttentionParams& aparams,
                               const ForwardDecoderParams& fparams, const Tensor& image_feature,
                               const BackwardStateSequence& backward, std::span<const TokenId> targets,
                               AttentionParams* agrad = nullptr, ForwardDecoderParams* fgrad = nullptr);

}  // namespace vcsc
