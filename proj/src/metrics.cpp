#include "vcsc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vcsc/completion.hpp"
#include "vcsc/error.hpp"

namespace vcsc {

Tokens char_tokens(std::string_view text) {
  Tokens out;
  for (char32_t cp : utf8_decode(text)) out.push_back(utf8_encode(cp));
  return out;
}

namespace {

constexpr std::size_t kMaxN = 4;

std::map<Tokens, std::size_t> ngram_counts(const Tokens& s, std::size_t n) {
  std::map<Tokens, std::size_t> counts;
  if (s.size() < n) return counts;
  for (std::size_t i = 0; i + n <= s.size(); ++i) ++counts[Tokens(s.begin() + i, s.begin() + i + n)];
  return counts;
}

struct BleuStats {
  std::array<double, kMaxN> matches{};
  std::array<double, kMaxN> totals{};
  double cand_len = 0.0;
  double ref_len = 0.0;
};

void require_refs(const std::vector<Tokens>& references) {
  if (references.empty()) throw Error("at least one reference is required");
}

BleuStats bleu_stats(const Tokens& candidate, const std::vector<Tokens>& references) {
  require_refs(references);
  BleuStats st;
  st.cand_len = static_cast<double>(candidate.size());
  // Closest reference length; the shorter one wins ties.
  std::size_t best = references.front().size();
  for (const auto& r : references) {
    const auto diff = [&](std::size_t len) {
      return len > candidate.size() ? len - candidate.size() : candidate.size() - len;
    };
    if (diff(r.size()) < diff(best) || (diff(r.size()) == diff(best) && r.size() < best)) best = r.size();
  }
  st.ref_len = static_cast<double>(best);
  for (std::size_t n = 1; n <= kMaxN; ++n) {
    const auto cand = ngram_counts(candidate, n);
    std::map<Tokens, std::size_t> max_ref;
    for (const auto& r : references) {
      for (const auto& [g, c] : ngram_counts(r, n)) max_ref[g] = std::max(max_ref[g], c);
    }
    double matched = 0.0, total = 0.0;
    for (const auto& [g, c] : cand) {
      total += static_cast<double>(c);
      auto it = max_ref.find(g);
      if (it != max_ref.end()) matched += static_cast<double>(std::min(c, it->second));
    }
    st.matches[n - 1] = matched;
    st.totals[n - 1] = total;
  }
  return st;
}

double bleu_from_stats(const BleuStats& st) {
  if (st.cand_len == 0.0) return 0.0;
  double log_sum = 0.0;
  for (std::size_t n = 0; n < kMaxN; ++n) {
    const double matched = st.matches[n] > 0.0 ? st.matches[n] : kBleuEpsilon;
    const double total = std::max(st.totals[n], 1.0);
    log_sum += std::log(matched / total);
  }
  const double bp = st.cand_len >= st.ref_len ? 1.0 : std::exp(1.0 - st.ref_len / st.cand_len);
  return bp * std::exp(log_sum / static_cast<double>(kMaxN));
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

}  // namespace

double bleu4(const Tokens& candidate, const std::vector<Tokens>& references) {
  return bleu_from_stats(bleu_stats(candidate, references));
}

double corpus_bleu4(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references) {
  if (candidates.size() != references.size()) throw Error("corpus_bleu4: candidate/reference count mismatch");
  BleuStats pooled;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto st = bleu_stats(candidates[i], references[i]);
    for (std::size_t n = 0; n < kMaxN; ++n) {
      pooled.matches[n] += st.matches[n];
      pooled.totals[n] += st.totals[n];
    }
    pooled.cand_len += st.cand_len;
    pooled.ref_len += st.ref_len;
  }
  return bleu_from_stats(pooled);
}

double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references) {
  require_refs(references);
  if (candidate.empty()) return 0.0;
  double best_p = 0.0, best_r = 0.0;
  for (const auto& ref : references) {
    if (ref.empty()) continue;
    const auto lcs = static_cast<double>(lcs_length(candidate, ref));
    best_p = std::max(best_p, lcs / static_cast<double>(candidate.size()));
    best_r = std::max(best_r, lcs / static_cast<double>(ref.size()));
  }
  if (best_p == 0.0 || best_r == 0.0) return 0.0;
  return (1.0 + kRougeBetaSquared) * best_p * best_r / (best_r + kRougeBetaSquared * best_p);
}

// ---------------------------------------------------------------------------
// CIDEr

CiderScorer::CiderScorer(const std::vector<std::vector<Tokens>>& reference_corpus) {
  if (reference_corpus.empty()) throw Error("CIDEr requires a non-empty reference corpus");
  for (const auto& refs : reference_corpus) {
    std::set<Tokens> seen;
    for (const auto& r : refs) {
      for (std::size_t n = 1; n <= kMaxN; ++n) {
        for (const auto& [g, c] : ngram_counts(r, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) doc_freq_[g] += 1.0;
  }
  log_corpus_size_ = std::log(static_cast<double>(reference_corpus.size()));
}

std::array<CiderScorer::NgramCounts, 4> CiderScorer::tfidf(const Tokens& sentence) const {
  std::array<NgramCounts, kMaxN> vecs;
  for (std::size_t n = 1; n <= kMaxN; ++n) {
    for (const auto& [g, c] : ngram_counts(sentence, n)) {
      auto it = doc_freq_.find(g);
      const double df = it == doc_freq_.end() ? 1.0 : std::max(1.0, it->second);
      vecs[n - 1][g] = static_cast<double>(c) * (log_corpus_size_ - std::log(df));
    }
  }
  return vecs;
}

double CiderScorer::score(const Tokens& candidate, const std::vector<Tokens>& references) const {
  require_refs(references);
  const auto cand = tfidf(candidate);
  std::array<double, kMaxN> cand_norm{};
  for (std::size_t n = 0; n < kMaxN; ++n) {
    for (const auto& [g, v] : cand[n]) cand_norm[n] += v * v;
    cand_norm[n] = std::sqrt(cand_norm[n]);
  }
  std::array<double, kMaxN> sims{};
  for (const auto& ref : references) {
    const auto rv = tfidf(ref);
    for (std::size_t n = 0; n < kMaxN; ++n) {
      double ref_norm = 0.0;
      for (const auto& [g, v] : rv[n]) ref_norm += v * v;
      ref_norm = std::sqrt(ref_norm);
      double dot = 0.0;
      for (const auto& [g, v] : cand[n]) {
        auto it = rv[n].find(g);
        if (it != rv[n].end()) dot += std::min(v, it->second) * it->second;
      }
      if (cand_norm[n] > 0.0 && ref_norm > 0.0) sims[n] += dot / (cand_norm[n] * ref_norm);
    }
  }
  double total = 0.0;
  for (std::size_t n = 0; n < kMaxN; ++n) total += sims[n] / static_cast<double>(references.size());
  return 10.0 * total / static_cast<double>(kMaxN);
}

double CiderScorer::corpus_score(const std::vector<Tokens>& candidates,
                                 const std::vector<std::vector<Tokens>>& references) const {
  if (candidates.size() != references.size()) throw Error("cider: candidate/reference count mismatch");
  if (candidates.empty()) return 0.0;
  double sum = 0.0;
  for (std::size_t i = 0; i < candidates.size(); ++i) sum += score(candidates[i], references[i]);
  return sum / static_cast<double>(candidates.size());
}

double cider(const std::vector<Tokens>& candidates, const std::vector<std::vector<Tokens>>& references) {
  return CiderScorer(references).corpus_score(candidates, references);
}

double oov_rate(std::span<const TokenSeq> sentences, TokenId unk_id) {
  if (sentences.empty()) throw Error("oov_rate requires at least one sentence");
  std::size_t with_unk = 0;
  for (const auto& s : sentences) {
    if (std::find(s.begin(), s.end(), unk_id) != s.end()) ++with_unk;
  }
  return 100.0 * static_cast<double>(with_unk) / static_cast<double>(sentences.size());
}

nlohmann::json MetricReport::to_json() const {
  return {{"bleu4", bleu4},       {"rouge_l", rouge_l}, {"cider", cider},
          {"oov_rate", oov_rate}, {"images", images},   {"cider_variant", "CIDEr (no length penalty)"},
          {"tokens", "character"}};
}

MetricReport evaluate_model(const CompletionModel& model, std::span<const CorpusRecord> records,
                            const FeatureStore& features) {
  std::map<std::string, std::vector<Tokens>> refs_by_image;
  for (const auto& r : records) refs_by_image[r.image_id].push_back(char_tokens(r.caption));
  if (refs_by_image.empty()) throw Error("evaluation set is empty");

  std::vector<std::string> ids;
  std::vector<std::vector<Tokens>> refs;
  for (auto& [id, rs] : refs_by_image) {
    ids.push_back(id);
    refs.push_back(std::move(rs));
  }
  for (const auto& id : ids) features.at(id);
  std::vector<TokenSeq> generated(ids.size());
  const auto n = static_cast<std::ptrdiff_t>(ids.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) generated[i] = greedy_caption(model, features.at(ids[i]));

  const auto& vocab = vocab_of(model);
  std::vector<Tokens> cands;
  for (const auto& g : generated) cands.push_back(char_tokens(vocab.decode(g)));

  MetricReport report;
  report.images = ids.size();
  report.bleu4 = corpus_bleu4(cands, refs);
  double rouge = 0.0;
  for (std::size_t i = 0; i < cands.size(); ++i) rouge += rouge_l(cands[i], refs[i]);
  report.rouge_l = rouge / static_cast<double>(cands.size());
  report.cider = cider(cands, refs);
  report.oov_rate = oov_rate(generated, vocab.unk_id());
  return report;
}

}  // namespace vcsc
