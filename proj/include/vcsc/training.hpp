#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "vcsc/checkpoint.hpp"
#include "vcsc/corpus.hpp"

namespace vcsc {

struct EpochStats {
  std::size_t epoch = 0;   // 1-based
  double train_loss = 0;   // mean cross-entropy per target token over the epoch
  double val_loss = 0;     // teacher-forced, per token, after the epoch
  double val_cider = 0;    // greedy automated captions; 0 for the backward decoder
};

struct TrainConfig {
  double lr = 0.0005;
  std::size_t max_epochs = 80;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  std::size_t N = 30;
  std::size_t d = 128;
  std::size_t d_embed = 64;
  double clip_norm = 5.0;
  std::size_t min_count = 1;
  /// Bidirectional training only. Besides the full caption, backward states
  /// are also built from an empty input and from `abd_gapped_views` random
  /// views that keep a prefix and a suffix of the caption and drop the middle.
  bool abd_empty_view = true;
  std::size_t abd_gapped_views = 1;
  /// Skip per-epoch validation decoding; the last epoch is kept. Used by
  /// benchmarks only.
  bool skip_validation = false;
  std::function<void(const EpochStats&)> on_epoch;

  static TrainConfig from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

TrainConfig load_train_config(const std::filesystem::path& path);

struct TrainOutcome {
  Checkpoint checkpoint;  // parameters of the selected epoch
  std::vector<EpochStats> history;
  std::size_t best_epoch = 0;
};

/// Trains the backward decoder on reversed captions. The epoch with the
/// lowest validation loss is selected.
TrainOutcome train_backward(std::span<const CorpusRecord> train, std::span<const CorpusRecord> val,
                            const FeatureStore& features, const TrainConfig& config);

/// Trains the prefix-only forward decoder. The epoch with the highest
/// validation CIDEr is selected; ties go to the lower validation loss.
TrainOutcome train_show_and_tell(std::span<const CorpusRecord> train, std::span<const CorpusRecord> val,
                                 const FeatureStore& features, const TrainConfig& config);

/// Trains the attention forward decoder on top of a frozen backward decoder.
/// Backward states for each caption come from forcing the whole caption
/// through the backward decoder, plus the extra input views configured in
/// TrainConfig. Selection is as for train_show_and_tell; validation CIDEr
/// decodes from an empty input. The vocabulary and dimensions come from
/// `backward`.
TrainOutcome train_forward_abd(std::span<const CorpusRecord> train, std::span<const CorpusRecord> val,
                               const FeatureStore& features, const TrainConfig& config, const Checkpoint& backward);

}  // namespace vcsc
