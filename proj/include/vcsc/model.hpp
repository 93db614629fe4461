#pragma once

#include <string>
#include <variant>

#include "vcsc/decoders.hpp"
#include "vcsc/textcore.hpp"

namespace vcsc {

/// Prefix-only baseline: a single forward decoder.
struct ShowAndTellModel {
  DecoderConfig config;
  Vocabulary vocab;
  ForwardDecoderParams params;
};

/// Standalone backward decoder, the first stage of bidirectional training.
struct BackwardModel {
  DecoderConfig config;
  Vocabulary vocab;
  BackwardDecoderParams params;
};

/// Asynchronous bidirectional model: a frozen backward decoder and a forward
/// decoder that attends over its fixed-length state sequence.
struct AbdModel {
  DecoderConfig config;
  Vocabulary vocab;
  BackwardDecoderParams backward;
  ForwardDecoderParams forward;
  AttentionParams attention;
};

using CompletionModel = std::variant<ShowAndTellModel, AbdModel>;

inline const Vocabulary& vocab_of(const CompletionModel& m) {
  return std::visit([](const auto& x) -> const Vocabulary& { return x.vocab; }, m);
}
inline const DecoderConfig& config_of(const CompletionModel& m) {
  return std::visit([](const auto& x) -> const DecoderConfig& { return x.config; }, m);
}
inline std::string kind_name(const CompletionModel& m) {
  return std::holds_alternative<AbdModel>(m) ? "abd" : "show_and_tell";
}

}  // namespace vcsc
