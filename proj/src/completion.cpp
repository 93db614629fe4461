#include "vcsc/completion.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include <omp.h>

#include "vcsc/error.hpp"

namespace vcsc {

std::pair<std::string, std::string> split_at_cursor(const std::string& text, std::size_t cursor) {
  const std::u32string cps = utf8_decode(text);
  if (cursor > cps.size()) {
    throw Error("cursor " + std::to_string(cursor) + " out of bounds for text of length " +
                std::to_string(cps.size()));
  }
  const std::u32string_view view(cps);
  return {utf8_encode(view.substr(0, cursor)), utf8_encode(view.substr(cursor))};
}

// ---------------------------------------------------------------------------
// Beam search

namespace {

struct Hypothesis {
  DecodeState state;
  TokenSeq tokens;
};

struct Expansion {
  double score;
  std::size_t beam;
  TokenId token;
};

}  // namespace

std::vector<BeamResult> beam_search(const StepFn& step, const DecodeState& init, std::size_t k, std::size_t max_len,
                                    TokenId end_id, const BeamOptions& options) {
  if (k == 0) throw Error("beam width must be at least 1");
  if (max_len == 0) throw Error("beam search max_len must be at least 1");

  const std::size_t keep = k + options.extra;
  const double base = init.log_prob;
  auto rank_score = [&](const BeamResult& r) {
    if (!options.length_normalization) return r.score;
    const double steps = static_cast<double>(r.tokens.size() + (r.ended ? 1 : 0));
    return steps > 0 ? (r.score - base) / steps : 0.0;
  };
  auto better = [&](const BeamResult& a, const BeamResult& b) {
    const double sa = rank_score(a), sb = rank_score(b);
    if (sa != sb) return sa > sb;
    return a.tokens < b.tokens;
  };

  std::vector<Hypothesis> live{{init, {}}};
  std::vector<BeamResult> finished;

  for (std::size_t t = 0; t < max_len && !live.empty(); ++t) {
    std::vector<StepOutput> outs(live.size());
    const auto n_live = static_cast<std::ptrdiff_t>(live.size());
#pragma omp parallel for schedule(dynamic) if (n_live > 1 && !omp_in_parallel())
    for (std::ptrdiff_t b = 0; b < n_live; ++b) outs[b] = step(live[b].state);

    std::vector<Expansion> expansions;
    for (std::size_t b = 0; b < live.size(); ++b) {
      const auto probs = outs[b].probs.values();
      for (std::size_t j = 0; j < probs.size(); ++j) {
        const double lp = std::log(std::max(probs[j], kProbFloor));
        expansions.push_back({live[b].state.log_prob + lp, b, static_cast<TokenId>(j)});
      }
    }
    // Only the best k non-end expansions survive, plus any end expansions
    // ranked above the k-th survivor.
    const std::size_t take = std::min(expansions.size(), keep + k);
    auto cmp = [](const Expansion& a, const Expansion& b) {
      if (a.score != b.score) return a.score > b.score;
      if (a.beam != b.beam) return a.beam < b.beam;
      return a.token < b.token;
    };
    std::partial_sort(expansions.begin(), expansions.begin() + static_cast<std::ptrdiff_t>(take), expansions.end(),
                      cmp);

    std::vector<Hypothesis> next;
    for (std::size_t e = 0; e < take && next.size() < k; ++e) {
      const Expansion& ex = expansions[e];
      const Hypothesis& parent = live[ex.beam];
      if (ex.token == end_id) {
        finished.push_back({parent.tokens, ex.score, true});
        continue;
      }
      Hypothesis h{outs[ex.beam].next, parent.tokens};
      emit(h.state, outs[ex.beam].probs, ex.token);
      h.tokens.push_back(ex.token);
      next.push_back(std::move(h));
    }
    live = std::move(next);

    if (!options.length_normalization && finished.size() >= keep && !live.empty()) {
      std::sort(finished.begin(), finished.end(), better);
      // Log-probabilities only decrease along a path, so no live beam can
      // overtake the current top `keep` once the best of them falls behind.
      if (live.front().state.log_prob <= finished[keep - 1].score) {
        live.clear();
      }
    }
  }
  for (auto& h : live) finished.push_back({std::move(h.tokens), h.state.log_prob, false});

  std::sort(finished.begin(), finished.end(), better);
  if (finished.size() > keep) finished.resize(keep);
  return finished;
}

// ---------------------------------------------------------------------------
// Candidate assembly

namespace {

void validate_request(const DecoderConfig& cfg, const CompletionRequest& req) {
  if (req.k == 0) throw Error("k must be at least 1");
  if (req.image_feature.size() != cfg.feature_dim) {
    throw Error("image feature has " + std::to_string(req.image_feature.size()) + " elements, expected " +
                std::to_string(cfg.feature_dim));
  }
}

std::vector<Candidate> assemble(const Vocabulary& vocab, const std::string& prefix, std::vector<BeamResult> beams,
                                std::size_t k) {
  std::vector<Candidate> out;
  std::unordered_set<std::string> seen;
  for (auto& beam : beams) {
    std::string text = prefix + vocab.decode(beam.tokens);
    if (!seen.insert(text).second) continue;
    out.push_back({std::move(text), beam.score, out.size() + 1});
    if (out.size() == k) break;
  }
  return out;
}

template <typename Advance>
std::vector<Candidate> prefix_forced_beam(const DecoderConfig& cfg, const Vocabulary& vocab, DecodeState state,
                                          const std::string& prefix, const TokenSeq& prefix_ids, std::size_t k,
                                          const CompletionOptions& options, const Advance& advance_fn) {
  for (TokenId id : prefix_ids) {
    StepOutput out = advance_fn(state);
    emit(out.next, out.probs, id);
    state = std::move(out.next);
  }
  if (prefix_ids.size() == cfg.N) {
    // No room left to generate.
    return {{prefix, state.log_prob, 1}};
  }
  const std::size_t max_len = cfg.N - prefix_ids.size();
  BeamOptions beam_opts{options.length_normalization, k};
  auto beams = beam_search(advance_fn, state, k, max_len, vocab.end_id(), beam_opts);
  return assemble(vocab, prefix, std::move(beams), k);
}

}  // namespace

std::vector<Candidate> complete_show_and_tell(const ShowAndTellModel& model, const CompletionRequest& req,
                                              const CompletionOptions& options) {
  validate_request(model.config, req);
  const auto [left, right] = split_at_cursor(req.text, req.cursor);
  const TokenSeq prefix_ids = model.vocab.encode(left);
  if (prefix_ids.size() > model.config.N) throw Error("prefix longer than maximum length");

  const auto& cfg = model.config;
  const auto& params = model.params;
  return prefix_forced_beam(cfg, model.vocab, init_state(cfg, params, req.image_feature), left, prefix_ids, req.k,
                            options, [&](const DecodeState& s) { return advance(cfg, params, s); });
}

std::vector<Candidate> complete_abd(const AbdModel& model, const CompletionRequest& req,
                                   const CompletionOptions& options) {
  validate_request(model.config, req);
  const auto [left, right] = split_at_cursor(req.text, req.cursor);
  const TokenSeq full_ids = model.vocab.encode(req.text);
  if (full_ids.size() > model.config.N) throw Error("input exceeds maximum length");
  const TokenSeq prefix_ids(full_ids.begin(), full_ids.begin() + static_cast<std::ptrdiff_t>(req.cursor));

  const auto& cfg = model.config;
  const BackwardStateSequence backward = backward_states(cfg, model.backward, req.image_feature, full_ids);
  return prefix_forced_beam(cfg, model.vocab, init_state(cfg, model.forward, req.image_feature), left, prefix_ids,
                            req.k, options, [&](const DecodeState& s) {
                              return attention_advance(cfg, model.attention, model.forward, s, backward);
                            });
}

std::vector<Candidate> complete(const CompletionModel& model, const CompletionRequest& req,
                                const CompletionOptions& options) {
  if (const auto* abd = std::get_if<AbdModel>(&model)) return complete_abd(*abd, req, options);
  return complete_show_and_tell(std::get<ShowAndTellModel>(model), req, options);
}

TokenSeq greedy_caption(const CompletionModel& model, const Tensor& image_feature) {
  if (const auto* abd = std::get_if<AbdModel>(&model)) {
    const auto backward = backward_states(abd->config, abd->backward, image_feature, {});
    return greedy_decode_abd(abd->config, abd->attention, abd->forward, image_feature, backward, abd->vocab.end_id());
  }
  const auto& st = std::get<ShowAndTellModel>(model);
  return greedy_decode(st.config, st.params, image_feature, st.vocab.end_id());
}

}  // namespace vcsc
