#pragma once

// Toy corpora and small models shared by the test binaries.

#include <random>
#include <string>
#include <vector>

#include "vcsc/checkpoint.hpp"
#include "vcsc/corpus.hpp"
#include "vcsc/decoders.hpp"
#include "vcsc/model.hpp"
#include "vcsc/training.hpp"

namespace fixture {

/// `n` distinct short captions (subject x action), one image each.
inline std::vector<vcsc::CorpusRecord> toy_corpus(std::size_t n = 30) {
  static const char* subject[] = {"a dog", "a cat", "two men", "a girl", "a bird", "an old man"};
  static const char* action[] = {"runs on grass", "sits on a bench", "plays in snow", "eats food", "looks at sky"};
  std::vector<vcsc::CorpusRecord> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"img" + std::to_string(i), std::string(subject[i % 6]) + " " + action[(i / 6) % 5]});
  }
  return out;
}

inline std::vector<std::string> image_ids(const std::vector<vcsc::CorpusRecord>& records) {
  std::vector<std::string> ids;
  for (const auto& r : records) {
    if (ids.empty() || ids.back() != r.image_id) ids.push_back(r.image_id);
  }
  return ids;
}

inline vcsc::FeatureStore features_for(const std::vector<vcsc::CorpusRecord>& records, std::size_t dim,
                                       std::uint64_t seed = 42) {
  return vcsc::synthetic_features(image_ids(records), dim, seed);
}

/// Two caption families that share a prefix and an ending. Every image
/// carries one caption of each family, so the image alone cannot tell them
/// apart; only text to the right of the cursor can.
inline const std::string kFamilyRuns = "a dog runs on grass";
inline const std::string kFamilyFrisbee = "a dog plays frisbee on grass";
inline const std::string kSharedPrefix = "a dog ";

inline std::vector<vcsc::CorpusRecord> disambiguation_corpus(std::size_t images = 10) {
  std::vector<vcsc::CorpusRecord> out;
  for (std::size_t i = 0; i < images; ++i) {
    const std::string id = "dog" + std::to_string(i);
    out.push_back({id, kFamilyRuns});
    out.push_back({id, kFamilyFrisbee});
  }
  return out;
}

inline vcsc::DecoderConfig tiny_config(std::size_t m, std::size_t d, std::size_t d_embed, std::size_t feature_dim,
                                       std::size_t N) {
  vcsc::DecoderConfig cfg;
  cfg.m = m;
  cfg.d = d;
  cfg.d_embed = d_embed;
  cfg.feature_dim = feature_dim;
  cfg.N = N;
  return cfg;
}

inline vcsc::Vocabulary vocab_from(const std::vector<std::string>& texts) { return vcsc::Vocabulary::build(texts); }

inline vcsc::AbdModel random_abd(const vcsc::Vocabulary& vocab, vcsc::DecoderConfig cfg, std::uint64_t seed) {
  cfg.m = vocab.size();
  std::mt19937_64 rng(seed);
  vcsc::AbdModel m;
  m.config = cfg;
  m.vocab = vocab;
  m.backward = vcsc::DecoderParams::random(cfg, cfg.d_embed, rng);
  m.forward = vcsc::DecoderParams::random(cfg, cfg.d, rng);
  m.attention = vcsc::AttentionParams::random(cfg, rng);
  return m;
}

inline vcsc::ShowAndTellModel random_st(const vcsc::Vocabulary& vocab, vcsc::DecoderConfig cfg, std::uint64_t seed) {
  cfg.m = vocab.size();
  std::mt19937_64 rng(seed);
  return {cfg, vocab, vcsc::DecoderParams::random(cfg, cfg.d_embed, rng)};
}

/// Both completion models trained on the same corpus.
struct TrainedPair {
  std::vector<vcsc::CorpusRecord> records;
  vcsc::FeatureStore features;
  vcsc::Checkpoint show_and_tell;
  vcsc::Checkpoint backward;
  vcsc::Checkpoint abd;
};

inline TrainedPair train_pair(std::vector<vcsc::CorpusRecord> records, std::size_t feature_dim,
                              const vcsc::TrainConfig& config) {
  TrainedPair out;
  out.records = std::move(records);
  out.features = features_for(out.records, feature_dim);
  out.show_and_tell = vcsc::train_show_and_tell(out.records, {}, out.features, config).checkpoint;
  out.backward = vcsc::train_backward(out.records, {}, out.features, config).checkpoint;
  out.abd = vcsc::train_forward_abd(out.records, {}, out.features, config, out.backward).checkpoint;
  return out;
}

/// A few memorized captions; trained once per process.
inline const TrainedPair& small_trained() {
  static const TrainedPair pair = [] {
    vcsc::TrainConfig cfg;
    cfg.max_epochs = 200;
    cfg.batch_size = 1;
    cfg.lr = 0.005;
    cfg.d = 48;
    cfg.d_embed = 24;
    cfg.N = 30;
    return train_pair(toy_corpus(6), 64, cfg);
  }();
  return pair;
}

}  // namespace fixture
