#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "vcsc/corpus.hpp"
#include "vcsc/model.hpp"
#include "vcsc/textcore.hpp"

namespace vcsc {

using Tokens = std::vector<std::string>;

/// One token per code point. Metrics run on character tokens.
Tokens char_tokens(std::string_view text);

/// Added to zero n-gram match counts so short sentences do not zero out.
inline constexpr double kBleuEpsilon = 1e-9;
/// ROUGE-L F-measure weight (applied as beta squared).
inline constexpr double kRougeBetaSquared = 1.2;

/// Sentence BLEU-4: geometric mean of clipped 1..4-gram precisions times the
/// brevity penalty against the closest reference length.
double bleu4(const Tokens& candidate, const std::vector<Tokens>& references);
/// Corpus BLEU-4 with counts pooled across sentences.
double corpus_bleu4(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references);

/// LCS-based F-measure using the best precision and best recall over references.
double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references);

/// CIDEr without the Gaussian length penalty: mean over n = 1..4 of 10 x the
/// TF-IDF cosine, with candidate counts clipped by reference counts. Document
/// frequencies come from the reference corpus given at construction.
class CiderScorer {
 public:
  explicit CiderScorer(const std::vector<std::vector<Tokens>>& reference_corpus);

  double score(const Tokens& candidate, const std::vector<Tokens>& references) const;
  /// Mean score; `references[i]` belongs to `candidates[i]`.
  double corpus_score(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references) const;

 private:
  using NgramCounts = std::map<Tokens, double>;
  std::array<NgramCounts, 4> tfidf(const Tokens& sentence) const;

  std::map<Tokens, double> doc_freq_;
  double log_corpus_size_ = 0.0;
};

double cider(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references);

/// Percentage of sentences that contain `unk_id`.
double oov_rate(std::span<const TokenSeq> sentences, TokenId unk_id);

struct MetricReport {
  double bleu4 = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  double oov_rate = 0.0;
  std::size_t images = 0;

  nlohmann::json to_json() const;
};

/// Automated-captioning evaluation: one greedy caption per image (empty user
/// input), scored against every caption of that image.
MetricReport evaluate_model(const CompletionModel& model, std::span<const CorpusRecord> records,
                            const FeatureStore& features);

// ---------------------------------------------------------------------------
// Simulated replay

struct ReplayCase {
  std::string image_id;
  std::string pre_completion_text;  // S_{s-1}
  std::size_t cursor = 0;
  std::string final_annotation;  // S_T
};

std::vector<ReplayCase> load_replay_cases(const std::filesystem::path& path);
void save_replay_cases(std::span<const ReplayCase> cases, const std::filesystem::path& path);

struct ReplayTable {
  std::size_t k = 0;
  std::vector<std::string> models;
  /// mean_levd[model][rank-1]; NaN when no case produced that rank.
  std::vector<std::vector<double>> mean_levd;
  std::vector<std::vector<std::size_t>> counts;
  /// levd[model][case][rank-1]; -1 when the model returned fewer candidates.
  std::vector<std::vector<std::vector<long>>> levd;
  std::size_t evaluated = 0;
  std::size_t skipped = 0;  // cases whose image has no feature vector

  nlohmann::json to_json() const;
  std::string to_csv() const;
};

/// For every case and model, completes (image, S_{s-1}, cursor) into k
/// candidates and measures the edit distance of each rank to S_T.
ReplayTable simulated_compare(std::span<const ReplayCase> cases, const FeatureStore& features,
                              const CompletionModel& model_a, const CompletionModel& model_b, std::size_t k,
                              const std::string& name_a = "A", const std::string& name_b = "B");

/// One-sided sign test: P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p(std::size_t wins, std::size_t losses);

}  // namespace vcsc
