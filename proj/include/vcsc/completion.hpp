#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "vcsc/decoders.hpp"
#include "vcsc/model.hpp"

namespace vcsc {

struct CompletionRequest {
  Tensor image_feature;
  std::string text;
  std::size_t cursor = 0;  // code-point offset
  std::size_t k = 5;
};

struct Candidate {
  std::string text;
  double score = 0.0;  // accumulated log-probability, prefix included
  std::size_t rank = 0;  // 1-based

  bool operator==(const Candidate&) const = default;
};

/// Splits at a code-point offset: (first `cursor` code points, remainder).
std::pair<std::string, std::string> split_at_cursor(const std::string& text, std::size_t cursor);

using StepFn = std::function<StepOutput(const DecodeState&)>;

struct BeamOptions {
  /// Rank finished beams by score / length instead of raw score.
  bool length_normalization = false;
  /// Extra finished beams to keep beyond k, used to backfill duplicates.
  std::size_t extra = 0;
};

struct BeamResult {
  TokenSeq tokens;      // emitted tokens, end excluded
  double score = 0.0;   // state log_prob at finalization
  bool ended = false;   // true if the beam emitted end, false if cut at max_len
};

/// Width-k beam search from `init`. A beam is finalized when it emits
/// `end_id` or after `max_len` steps. Returns up to k + extra finished beams,
/// best first; ties break on the token sequence so output is deterministic.
/// Live beams are expanded in parallel when OpenMP has threads to spare.
std::vector<BeamResult> beam_search(const StepFn& step, const DecodeState& init, std::size_t k, std::size_t max_len,
                                    TokenId end_id, const BeamOptions& options = {});

struct CompletionOptions {
  bool length_normalization = false;
};

/// Prefix-forced decoding: the text left of the cursor is forced through the
/// decoder, beam search writes the rest. Text right of the cursor is dropped.
std::vector<Candidate> complete_show_and_tell(const ShowAndTellModel& model, const CompletionRequest& req,
                                              const CompletionOptions& options = {});

/// Bidirectional completion: the whole input conditions the forward decoder
/// through backward states; the text left of the cursor is forced as above.
std::vector<Candidate> complete_abd(const AbdModel& model, const CompletionRequest& req,
                                   const CompletionOptions& options = {});

std::vector<Candidate> complete(const CompletionModel& model, const CompletionRequest& req,
                                const CompletionOptions& options = {});

/// Automated captioning (no user input): greedy decode, end token excluded.
TokenSeq greedy_caption(const CompletionModel& model, const Tensor& image_feature);

}  // namespace vcsc
