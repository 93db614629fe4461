// Acceptance run: one PASS/FAIL line per criterion. Optional arguments pick
// criteria by number, e.g. `vcsc_acceptance 3 9`.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"
#include "vcsc/completion.hpp"
#include "vcsc/eval.hpp"
#include "vcsc/session.hpp"
#include "vcsc/textcore.hpp"
#include "vcsc/training.hpp"

using namespace vcsc;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

// ---------------------------------------------------------------------------
// Overfit models shared by criteria 3, 4 and 6.

struct Overfit {
  fixture::TrainedPair pair;
  double st_min_loss = 0.0;
  double abd_min_loss = 0.0;
  std::size_t st_min_epoch = 0;
  std::size_t abd_min_epoch = 0;
  double seconds = 0.0;
};

std::pair<double, std::size_t> min_train_loss(const std::vector<EpochStats>& history) {
  double best = 1e300;
  std::size_t epoch = 0;
  for (const auto& s : history) {
    if (s.train_loss < best) {
      best = s.train_loss;
      epoch = s.epoch;
    }
  }
  return {best, epoch};
}

const Overfit& overfit() {
  static const Overfit out = [] {
    const auto t0 = Clock::now();
    TrainConfig cfg;
    cfg.max_epochs = 500;
    cfg.batch_size = 1;
    cfg.d = 64;
    cfg.d_embed = 32;
    cfg.N = 30;
    Overfit o;
    o.pair.records = fixture::toy_corpus(30);
    o.pair.features = fixture::features_for(o.pair.records, 128);
    const auto st = train_show_and_tell(o.pair.records, {}, o.pair.features, cfg);
    const auto bw = train_backward(o.pair.records, {}, o.pair.features, cfg);
    const auto abd = train_forward_abd(o.pair.records, {}, o.pair.features, cfg, bw.checkpoint);
    o.pair.show_and_tell = st.checkpoint;
    o.pair.backward = bw.checkpoint;
    o.pair.abd = abd.checkpoint;
    std::tie(o.st_min_loss, o.st_min_epoch) = min_train_loss(st.history);
    std::tie(o.abd_min_loss, o.abd_min_epoch) = min_train_loss(abd.history);
    o.seconds = seconds_since(t0);
    return o;
  }();
  return out;
}

std::size_t exact_reconstructions(const CompletionModel& model, const fixture::TrainedPair& pair) {
  std::size_t hits = 0;
  for (const auto& r : pair.records) {
    if (vocab_of(model).decode(greedy_caption(model, pair.features.at(r.image_id))) == r.caption) ++hits;
  }
  return hits;
}

// ---------------------------------------------------------------------------

Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::size_t checked = 0;
  for (std::size_t d : {4u, 16u}) {
    for (std::size_t len : {1u, 5u}) {
      const auto r = gradcheck::full_model(d, len, 100 + d + len);
      worst = std::max(worst, r.max_rel_error());
      checked += r.checked();
    }
  }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          fmt("max relative error %.3g over %zu entries, %.1f s", worst, checked, secs)};
}

Outcome levd_oracle() {
  const auto t0 = Clock::now();
  const oracle::EditScriptBfs bfs("abc", 6);
  const auto& u = bfs.universe();
  std::size_t pairs = 0, mismatches = 0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const auto dist = bfs.distances_from(i);
    for (std::size_t j = 0; j < u.size(); ++j) {
      ++pairs;
      if (levenshtein(u[i], u[j]) != static_cast<std::size_t>(dist[j])) ++mismatches;
    }
  }
  const double secs = seconds_since(t0);
  return {mismatches == 0 && secs < 30.0, fmt("%zu pairs, %zu mismatches, %.1f s", pairs, mismatches, secs)};
}

Outcome overfit_convergence() {
  const auto& o = overfit();
  const auto st = o.pair.show_and_tell.completion_model();
  const auto abd = o.pair.abd.completion_model();
  const std::size_t n = o.pair.records.size();
  const std::size_t st_hits = exact_reconstructions(st, o.pair);
  const std::size_t abd_hits = exact_reconstructions(abd, o.pair);
  const bool pass = o.st_min_loss < 0.05 && o.abd_min_loss < 0.05 && st_hits * 10 >= n * 9 &&
                    abd_hits * 10 >= n * 9 && o.seconds < 600.0;
  return {pass, fmt("show_and_tell loss %.4f (epoch %zu) exact %zu/%zu; abd loss %.4f (epoch %zu) exact %zu/%zu; %.0f s",
                    o.st_min_loss, o.st_min_epoch, st_hits, n, o.abd_min_loss, o.abd_min_epoch, abd_hits, n,
                    o.seconds)};
}

Outcome prefix_constraint() {
  const auto& o = overfit();
  const std::vector<CompletionModel> models{o.pair.show_and_tell.completion_model(), o.pair.abd.completion_model()};
  const std::string noise = "abcdefghijklmnopqrstuvwxyz ";
  std::mt19937_64 rng(2024);
  std::size_t candidates = 0, violations = 0;
  for (int i = 0; i < 100; ++i) {
    const auto& rec = o.pair.records[rng() % o.pair.records.size()];
    auto cps = utf8_decode(rec.caption);
    // Random edits so the text is not always a training caption.
    const std::size_t edits = rng() % 4;
    for (std::size_t e = 0; e < edits && !cps.empty(); ++e) {
      const std::size_t pos = rng() % cps.size();
      if (rng() % 2) {
        cps.erase(pos, 1);
      } else {
        cps[pos] = static_cast<char32_t>(noise[rng() % noise.size()]);
      }
    }
    const std::string text = utf8_encode(cps);
    const std::size_t cursor = cps.empty() ? 0 : rng() % (cps.size() + 1);
    const std::string prefix = split_at_cursor(text, cursor).first;
    for (const auto& m : models) {
      for (const auto& c : complete(m, {o.pair.features.at(rec.image_id), text, cursor, 5})) {
        ++candidates;
        if (c.text.compare(0, prefix.size(), prefix) != 0) ++violations;
      }
    }
  }
  return {candidates > 0 && violations == 0,
          fmt("%zu candidates from 100 requests x 2 models, %zu without the prefix", candidates, violations)};
}

Outcome fixed_backward_length() {
  const auto vocab = fixture::vocab_from({"abcdefgh"});
  const auto model = fixture::random_abd(vocab, fixture::tiny_config(0, 8, 4, 6, 8), 5);
  const auto& cfg = model.config;
  std::mt19937_64 rng(5);
  Tensor feature = Tensor::zeros(cfg.feature_dim);
  for (auto& v : feature.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
  std::size_t bad = 0;
  for (std::size_t n = 0; n <= cfg.N; ++n) {
    TokenSeq input;
    for (std::size_t i = 0; i < n; ++i) input.push_back(static_cast<TokenId>(3 + rng() % (vocab.size() - 3)));
    const auto seq = backward_states(cfg, model.backward, feature, input);
    bool ok = seq.states.size() == cfg.N + 1 && seq.forced.size() == cfg.N && seq.emitted.size() == cfg.N;
    const auto forced = static_cast<std::size_t>(std::count(seq.forced.begin(), seq.forced.end(), true));
    ok = ok && forced == n;
    for (std::size_t t = 0; ok && t < cfg.N; ++t) {
      ok = seq.forced[t] == (t >= cfg.N - n);
      if (ok && seq.forced[t]) ok = seq.emitted[t] == input[cfg.N - 1 - t];
    }
    if (!ok) ++bad;
  }
  return {bad == 0, fmt("N = 8, n = 0..8: %zu lengths with a wrong state count or trace", bad)};
}

Outcome zero_oov() {
  const auto& o = overfit();
  std::mt19937_64 rng(6);
  std::vector<std::string> parts;
  for (const CompletionModel& m : {o.pair.show_and_tell.completion_model(), o.pair.abd.completion_model()}) {
    std::vector<TokenSeq> sentences;
    for (int i = 0; i < 100; ++i) {
      const auto& rec = o.pair.records[rng() % o.pair.records.size()];
      const auto cps = utf8_decode(rec.caption);
      const std::size_t cursor = rng() % (cps.size() + 1);
      const auto cands = complete(m, {o.pair.features.at(rec.image_id), utf8_encode(cps.substr(0, cursor)), cursor, 1});
      sentences.push_back(cands.empty() ? TokenSeq{} : vocab_of(m).encode(cands[0].text));
    }
    const double rate = oov_rate(sentences, vocab_of(m).unk_id());
    parts.push_back(fmt("%s %.1f%%", kind_name(m).c_str(), rate));
    if (rate != 0.0) return {false, "oov rate " + parts.back()};
  }
  return {true, "oov rate over 100 sentences: " + parts[0] + ", " + parts[1]};
}

Outcome beam_sanity() {
  const auto vocab = fixture::vocab_from({"abcdef "});
  std::size_t checks = 0, mismatches = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto st = fixture::random_st(vocab, fixture::tiny_config(0, 8, 4, 6, 12), seed);
    const auto abd = fixture::random_abd(vocab, fixture::tiny_config(0, 8, 4, 6, 12), seed);
    std::mt19937_64 rng(seed);
    Tensor f = Tensor::zeros(6);
    for (auto& v : f.values()) v = std::uniform_real_distribution<double>(-1, 1)(rng);
    const auto& cfg = st.config;
    const auto empty = backward_states(cfg, abd.backward, f, {});
    const std::vector<std::pair<StepFn, DecodeState>> decoders{
        {[&](const DecodeState& s) { return advance(cfg, st.params, s); }, init_state(cfg, st.params, f)},
        {[&](const DecodeState& s) { return attention_advance(cfg, abd.attention, abd.forward, s, empty); },
         init_state(cfg, abd.forward, f)},
    };
    const std::vector<TokenSeq> greedy{
        greedy_decode(cfg, st.params, f, vocab.end_id()),
        greedy_decode_abd(cfg, abd.attention, abd.forward, f, empty, vocab.end_id()),
    };
    for (std::size_t i = 0; i < decoders.size(); ++i) {
      const auto beams = beam_search(decoders[i].first, decoders[i].second, 1, cfg.N, vocab.end_id());
      ++checks;
      if (beams.size() != 1 || beams[0].tokens != greedy[i]) ++mismatches;
    }
    for (const CompletionModel& m : {CompletionModel(st), CompletionModel(abd)}) {
      const auto c = complete(m, {f, "", 0, 1});
      ++checks;
      if (c.size() != 1 || c[0].text != vocab.decode(greedy_caption(m, f))) ++mismatches;
    }
  }
  const oracle::StepTable table{
      {0.1, 0.2, 0.7},
      {0.2, 0.5, 0.3},
      {0.3, 0.3, 0.4},
      {0.6, 0.2, 0.2},
  };
  const auto truth = oracle::enumerate_paths(table, 4, 1);
  const auto beams = beam_search(oracle::table_step(table), DecodeState{}, 2, 4, 1);
  bool top2 = beams.size() == 2;
  for (std::size_t i = 0; top2 && i < 2; ++i) {
    top2 = beams[i].tokens == truth[i].tokens && beams[i].ended == truth[i].ended &&
           std::abs(beams[i].score - truth[i].score) < 1e-12;
  }
  return {mismatches == 0 && top2, fmt("k = 1 vs greedy: %zu/%zu identical; hand table k = 2 top-2 %s",
                                       checks - mismatches, checks, top2 ? "exact" : "differs")};
}

Outcome metric_fixtures() {
  const std::vector<std::string> sentences{"a dog runs on grass", "a cat sits on a bench", "two men play in snow",
                                           "一只狗在草地上"};
  std::vector<std::vector<Tokens>> corpus;
  for (const auto& s : sentences) corpus.push_back({char_tokens(s)});
  double worst_bleu = 0.0, worst_rouge = 0.0, worst_cider = 0.0, worst_oracle = 0.0;
  const CiderScorer scorer(corpus);
  for (const auto& s : sentences) {
    const auto t = char_tokens(s);
    worst_bleu = std::max(worst_bleu, std::abs(bleu4(t, {t}) - 1.0));
    worst_rouge = std::max(worst_rouge, std::abs(rouge_l(t, {t}) - 1.0));
    const double c = scorer.score(t, {t});
    worst_cider = std::max(worst_cider, std::abs(c - 10.0));
    worst_oracle = std::max(worst_oracle, std::abs(c - oracle::cider_reference(t, {t}, corpus)));
  }
  const bool pass = worst_bleu <= 1e-9 && worst_rouge <= 1e-9 && worst_cider <= 1e-6 && worst_oracle <= 1e-6;
  return {pass, fmt("|bleu4-1| %.2g, |rouge_l-1| %.2g, |cider-10| %.2g, |cider-oracle| %.2g", worst_bleu,
                    worst_rouge, worst_cider, worst_oracle)};
}

/// Cases keep a prefix of the shared opening, drop the middle and keep a
/// tail that only one family has; the cursor sits at the end of the prefix.
std::vector<ReplayCase> disambiguation_cases(std::size_t images) {
  const std::vector<std::pair<std::string, std::vector<std::size_t>>> families{
      {fixture::kFamilyRuns, {7, 8, 9}},
      {fixture::kFamilyFrisbee, {7, 9, 12}},
  };
  std::vector<ReplayCase> cases;
  for (std::size_t i = 0; i < images; ++i) {
    for (const auto& [caption, tails] : families) {
      for (std::size_t cut = 0; cut <= fixture::kSharedPrefix.size(); ++cut) {
        for (std::size_t tail : tails) {
          cases.push_back({"dog" + std::to_string(i), caption.substr(0, cut) + caption.substr(tail), cut, caption});
        }
      }
    }
  }
  return cases;
}

Outcome suffix_utilization() {
  const std::size_t images = 10;
  TrainConfig cfg;
  cfg.max_epochs = 300;
  cfg.batch_size = 1;
  cfg.lr = 0.005;
  cfg.d = 48;
  cfg.d_embed = 24;
  cfg.N = 30;
  cfg.abd_gapped_views = 4;
  const auto pair = fixture::train_pair(fixture::disambiguation_corpus(images), 64, cfg);
  const auto cases = disambiguation_cases(images);
  const auto table = simulated_compare(cases, pair.features, pair.abd.completion_model(),
                                       pair.show_and_tell.completion_model(), 5, "abd", "show_and_tell");
  std::size_t wins = 0, losses = 0;
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const long a = table.levd[0][c][0];
    const long b = table.levd[1][c][0];
    if (a < 0 || b < 0) continue;
    if (a < b) ++wins;
    if (a > b) ++losses;
  }
  const double p = sign_test_p(wins, losses);
  const double abd_mean = table.mean_levd[0][0];
  const double st_mean = table.mean_levd[1][0];
  const bool pass = table.evaluated >= 200 && abd_mean < st_mean && p < 0.05;
  return {pass, fmt("%zu cases; rank-1 mean LevD abd %.3f vs show_and_tell %.3f; wins %zu losses %zu; p = %.3g",
                    table.evaluated, abd_mean, st_mean, wins, losses, p)};
}

Outcome latency() {
  DecoderConfig cfg;
  cfg.d = 128;
  cfg.N = 30;
  std::string alphabet;
  for (char32_t cp = 0x4e00; cp < 0x4e00 + 3000; ++cp) alphabet += utf8_encode(cp);
  const auto vocab = fixture::vocab_from({alphabet});
  const auto model = fixture::random_abd(vocab, cfg, 7);
  const std::vector<std::string> ids{"img"};
  const auto features = synthetic_features(ids, cfg.feature_dim, 3);
  const auto cps = utf8_decode("一只狗在草地上奔跑");
  std::mt19937_64 rng(10);
  std::vector<double> ms;
  for (int i = 0; i < 60; ++i) {
    const std::size_t len = rng() % (cps.size() + 1);
    const std::size_t cursor = rng() % (len + 1);
    const CompletionRequest req{features.at("img"), utf8_encode(cps.substr(0, len)), cursor, 5};
    const auto t0 = Clock::now();
    const auto cands = complete_abd(model, req);
    ms.push_back(seconds_since(t0) * 1000.0);
    if (cands.empty()) return {false, "no candidates"};
  }
  std::sort(ms.begin(), ms.end());
  const double median = ms[ms.size() / 2];
  const double p95 = ms[static_cast<std::size_t>(0.95 * static_cast<double>(ms.size() - 1))];
  return {median < 100.0 && p95 < 200.0,
          fmt("abd k = 5, d = 128, N = 30, m = %zu: median %.1f ms, p95 %.1f ms over %zu requests", vocab.size(),
              median, p95, ms.size())};
}

Outcome session_accounting() {
  const auto path = std::filesystem::temp_directory_path() /
                    ("vcsc_acceptance_" + std::to_string(std::random_device{}()) + ".jsonl");
  std::filesystem::remove(path);
  SessionStats live;
  Session stored;
  std::string id;
  {
    SessionStore store(std::make_shared<EventLog>(path));
    id = store.create_session("img");
    store.record_snapshot(id, "一", 1, 0.5);
    store.record_snapshot(id, "一只", 2, 1.0);
    store.record_selection(id, 1, "一只狗", 1.5);
    live = store.submit(id, "一只狗", 2.0);
    stored = store.get(id);
  }
  // By hand: S = [一, 一只, 一只狗], T = 3, one edit per step.
  const std::size_t T = 3;
  const std::size_t levd = levenshtein("一", "一只") + levenshtein("一只", "一只狗");
  const bool hand = live.T == T && live.accumulated_edits == T - 1 && live.accumulated_levd == levd &&
                    levd == 2 && live.num_selections == 1 && live.mode == SessionMode::interactive;
  SessionStore rebuilt;
  rebuilt.replay(path);
  const auto replayed = rebuilt.get(id);
  const bool same = replayed == stored && compute_stats(replayed) == live;
  std::filesystem::remove(path);
  return {hand && same, fmt("T %zu, edits %zu, levd %zu, mode %s; replay %s", live.T, live.accumulated_edits,
                            live.accumulated_levd, to_string(live.mode).c_str(), same ? "identical" : "differs")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"levenshtein oracle equivalence", levd_oracle},
      {"overfit convergence", overfit_convergence},
      {"prefix constraint", prefix_constraint},
      {"fixed backward length", fixed_backward_length},
      {"zero oov", zero_oov},
      {"beam sanity", beam_sanity},
      {"metric fixtures", metric_fixtures},
      {"suffix utilization", suffix_utilization},
      {"latency", latency},
      {"session accounting", session_accounting},
  };
  std::set<std::size_t> only;
  for (int i = 1; i < argc; ++i) only.insert(static_cast<std::size_t>(std::stoul(argv[i])));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.contains(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failures;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
