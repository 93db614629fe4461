#include "vcsc/training.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "vcsc/decoders.hpp"
#include "vcsc/error.hpp"
#include "vcsc/eval.hpp"
#include "vcsc/gradients.hpp"

namespace vcsc {

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig c;
  try {
    c.lr = j.value("lr", c.lr);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.seed = j.value("seed", c.seed);
    c.N = j.value("N", c.N);
    c.d = j.value("d", c.d);
    c.d_embed = j.value("d_embed", c.d_embed);
    c.clip_norm = j.value("clip_norm", c.clip_norm);
    c.min_count = j.value("min_count", c.min_count);
    c.abd_empty_view = j.value("abd_empty_view", c.abd_empty_view);
    c.abd_gapped_views = j.value("abd_gapped_views", c.abd_gapped_views);
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed training config: ") + e.what());
  }
  if (c.lr <= 0 || c.max_epochs == 0 || c.batch_size == 0 || c.N == 0 || c.d == 0 || c.d_embed == 0 ||
      c.clip_norm <= 0 || c.min_count == 0) {
    throw Error("training config values must be positive");
  }
  return c;
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr}, {"max_epochs", max_epochs}, {"batch_size", batch_size}, {"seed", seed},
          {"N", N},   {"d", d},                   {"d_embed", d_embed},       {"clip_norm", clip_norm},
          {"min_count", min_count}, {"abd_empty_view", abd_empty_view}, {"abd_gapped_views", abd_gapped_views}};
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open training config '" + path.string() + "'", Error::Kind::io);
  try {
    return TrainConfig::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed training config '" + path.string() + "': " + e.what());
  }
}

namespace {

struct Example {
  const Tensor* feature = nullptr;
  TokenSeq targets;
  const BackwardStateSequence* backward = nullptr;
};

/// Forward decoder plus attention, trained together on top of frozen
/// backward states.
struct AbdTrainable {
  AttentionParams attention;
  ForwardDecoderParams forward;

  AbdTrainable zeros_like() const { return {attention.zeros_like(), forward.zeros_like()}; }
  ParamRefs refs(const std::string&) {
    ParamRefs r = attention.refs("attention");
    auto f = forward.refs("forward");
    r.insert(r.end(), f.begin(), f.end());
    return r;
  }
};

void zero(const ParamRefs& refs) {
  for (const auto& r : refs) r.tensor->fill(0.0);
}

void add_into(const ParamRefs& dst, const ParamRefs& src) {
  for (std::size_t k = 0; k < dst.size(); ++k) {
    auto d = dst[k].tensor->values();
    auto s = src[k].tensor->values();
    for (std::size_t j = 0; j < d.size(); ++j) d[j] += s[j];
  }
}

void scale(const ParamRefs& refs, double factor) {
  for (const auto& r : refs) {
    for (auto& v : r.tensor->values()) v *= factor;
  }
}

struct ValidationResult {
  double loss = 0.0;
  double cider = 0.0;
};

enum class Selection { lowest_val_loss, highest_val_cider };

/// Mini-batch Adam over teacher-forced sequences. Per-example gradients are
/// computed in parallel into private buffers and summed in batch order, so
/// results do not depend on the thread count.
template <typename Params, typename LossFn, typename ValidateFn>
std::pair<Params, std::vector<EpochStats>> run_training(Params params, const std::vector<Example>& examples,
                                                        const TrainConfig& config, Selection selection,
                                                        const LossFn& loss_fn, const ValidateFn& validate,
                                                        std::size_t& best_epoch) {
  if (examples.empty()) throw Error("training corpus is empty");
  ParamRefs param_refs = params.refs("p");
  AdamState adam = AdamState::for_params(param_refs, AdamConfig{config.lr});

  const std::size_t batch = std::min(config.batch_size, examples.size());
  std::vector<Params> slots(batch, params.zeros_like());
  std::vector<ParamRefs> slot_refs;
  for (auto& s : slots) slot_refs.push_back(s.refs("g"));
  Params total = params.zeros_like();
  ParamRefs total_refs = total.refs("g");

  std::mt19937_64 shuffle_rng(config.seed ^ 0x5DEECE66DULL);
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  std::vector<EpochStats> history;
  Params best = params;
  best_epoch = 0;
  double best_score = 0.0;
  double best_loss = 0.0;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0, step = 0; start < order.size(); start += batch, ++step) {
      const std::size_t B = std::min(batch, order.size() - start);
      std::vector<SequenceLoss> losses(B);
      std::vector<std::exception_ptr> errors(B);
      const auto nb = static_cast<std::ptrdiff_t>(B);
#pragma omp parallel for schedule(dynamic)
      for (std::ptrdiff_t s = 0; s < nb; ++s) {
        try {
          zero(slot_refs[s]);
          losses[s] = loss_fn(params, examples[order[start + s]], &slots[s]);
        } catch (...) {
          errors[s] = std::current_exception();
        }
      }
      for (const auto& e : errors) {
        if (!e) continue;
        try {
          std::rethrow_exception(e);
        } catch (const Error& err) {
          throw Error("training diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                          ": " + err.what(),
                      err.kind());
        }
      }
      zero(total_refs);
      double batch_loss = 0.0;
      std::size_t batch_tokens = 0;
      for (std::size_t s = 0; s < B; ++s) {
        add_into(total_refs, slot_refs[s]);
        batch_loss += losses[s].total;
        batch_tokens += losses[s].steps;
      }
      if (!std::isfinite(batch_loss)) {
        throw Error("training diverged at epoch " + std::to_string(epoch) + ", step " + std::to_string(step) +
                        ": non-finite loss",
                    Error::Kind::numerical);
      }
      scale(total_refs, 1.0 / static_cast<double>(B));
      clip_global_norm(total_refs, config.clip_norm);
      adam_update(param_refs, total_refs, adam);
      epoch_loss += batch_loss;
      epoch_tokens += batch_tokens;
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = epoch_tokens ? epoch_loss / static_cast<double>(epoch_tokens) : 0.0;
    if (!config.skip_validation) {
      const ValidationResult v = validate(params);
      stats.val_loss = v.loss;
      stats.val_cider = v.cider;
    }
    history.push_back(stats);
    if (config.on_epoch) config.on_epoch(stats);

    // CIDEr ties (common once captions are memorized) go to the lower loss.
    const double score = selection == Selection::lowest_val_loss ? -stats.val_loss : stats.val_cider;
    if (best_epoch == 0 || config.skip_validation || score > best_score ||
        (score == best_score && stats.val_loss < best_loss)) {
      best_score = score;
      best_loss = stats.val_loss;
      best_epoch = epoch;
      best = params;
    }
  }
  return {std::move(best), std::move(history)};
}

DecoderConfig make_config(const TrainConfig& tc, const FeatureStore& features, const Vocabulary& vocab) {
  DecoderConfig cfg;
  cfg.d = tc.d;
  cfg.d_embed = tc.d_embed;
  cfg.feature_dim = features.dim();
  cfg.N = tc.N;
  cfg.m = vocab.size();
  cfg.validate();
  return cfg;
}

TokenSeq clipped_tokens(const Vocabulary& vocab, const std::string& caption, std::size_t N) {
  TokenSeq ids = vocab.encode(caption);
  if (ids.size() > N) ids.resize(N);
  return ids;
}

std::vector<Example> make_examples(std::span<const CorpusRecord> records, const FeatureStore& features,
                                   const Vocabulary& vocab, std::size_t N, bool reversed) {
  std::vector<Example> out;
  for (const auto& r : records) {
    TokenSeq ids = vocab.encode(r.caption);
    if (reversed) std::reverse(ids.begin(), ids.end());
    out.push_back({&features.at(r.image_id), teacher_targets(ids, vocab.end_id(), N), nullptr});
  }
  return out;
}

/// References grouped by image for validation CIDEr.
struct ValidationImages {
  std::vector<std::string> ids;
  std::vector<std::vector<Tokens>> refs;
};

ValidationImages group_by_image(std::span<const CorpusRecord> records) {
  std::map<std::string, std::vector<Tokens>> grouped;
  for (const auto& r : records) grouped[r.image_id].push_back(char_tokens(r.caption));
  ValidationImages v;
  for (auto& [id, refs] : grouped) {
    v.ids.push_back(id);
    v.refs.push_back(std::move(refs));
  }
  return v;
}

template <typename LossFn, typename Params>
double mean_token_loss(const Params& params, const std::vector<Example>& examples, const LossFn& loss_fn) {
  std::vector<SequenceLoss> losses(examples.size());
  const auto n = static_cast<std::ptrdiff_t>(examples.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) losses[i] = loss_fn(params, examples[i], nullptr);
  double total = 0.0;
  std::size_t steps = 0;
  for (const auto& l : losses) {
    total += l.total;
    steps += l.steps;
  }
  return steps ? total / static_cast<double>(steps) : 0.0;
}

template <typename CaptionFn>
double validation_cider(const ValidationImages& images, const Vocabulary& vocab, const CiderScorer& scorer,
                        const CaptionFn& caption_fn) {
  std::vector<Tokens> cands(images.ids.size());
  const auto n = static_cast<std::ptrdiff_t>(images.ids.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) cands[i] = char_tokens(vocab.decode(caption_fn(static_cast<std::size_t>(i))));
  return scorer.corpus_score(cands, images.refs);
}

std::span<const CorpusRecord> validation_or_train(std::span<const CorpusRecord> train,
                                                  std::span<const CorpusRecord> val) {
  return val.empty() ? train : val;
}

void check_inputs(std::span<const CorpusRecord> train, std::span<const CorpusRecord> val,
                  const FeatureStore& features) {
  if (train.empty()) throw Error("empty corpus");
  validate_corpus(train, features);
  validate_corpus(val, features);
}

TrainOutcome train_plain(std::span<const CorpusRecord> train, std::span<const CorpusRecord> val_in,
                         const FeatureStore& features, const TrainConfig& config, bool reversed) {
  check_inputs(train, val_in, features);
  const auto val = validation_or_train(train, val_in);
  const auto captions = captions_of(train);
  const Vocabulary vocab = Vocabulary::build(captions, config.min_count);
  const DecoderConfig cfg = make_config(config, features, vocab);

  std::mt19937_64 rng(config.seed);
  DecoderParams init = DecoderParams::random(cfg, cfg.d_embed, rng);
  const auto examples = make_examples(train, features, vocab, cfg.N, reversed);
  const auto val_examples = make_examples(val, features, vocab, cfg.N, reversed);
  const auto images = group_by_image(val);
  const CiderScorer scorer(images.refs);

  auto loss_fn = [&](const DecoderParams& p, const Example& ex, DecoderParams* grad) {
    return decoder_sequence_loss(cfg, p, *ex.feature, ex.targets, grad);
  };
  auto validate = [&](const DecoderParams& p) {
    ValidationResult r;
    r.loss = mean_token_loss(p, val_examples, loss_fn);
    if (!reversed) {
      r.cider = validation_cider(images, vocab, scorer, [&](std::size_t i) {
        return greedy_decode(cfg, p, features.at(images.ids[i]), vocab.end_id());
      });
    }
    return r;
  };

  TrainOutcome outcome;
  auto [best, history] =
      run_training(std::move(init), examples, config,
                   reversed ? Selection::lowest_val_loss : Selection::highest_val_cider, loss_fn, validate,
                   outcome.best_epoch);
  outcome.history = std::move(history);
  Checkpoint& ckpt = outcome.checkpoint;
  ckpt.kind = reversed ? ModelKind::backward : ModelKind::show_and_tell;
  ckpt.config = cfg;
  ckpt.vocab = vocab;
  (reversed ? ckpt.backward : ckpt.forward) = std::move(best);
  ckpt.epoch = outcome.best_epoch;
  const auto& at_best = outcome.history[outcome.best_epoch - 1];
  ckpt.scores = {{"train_loss", at_best.train_loss}, {"val_loss", at_best.val_loss}};
  if (!reversed) ckpt.scores["val_cider"] = at_best.val_cider;
  return outcome;
}

}  // namespace

TrainOutcome train_backward(std::span<const CorpusRecord> train, std::span<const CorpusRecord> val,
                            const FeatureStore& features, const TrainConfig& config) {
  return train_plain(train, val, features, config, true);
}

TrainOutcome train_show_and_tell(std::span<const CorpusRecord> train, std::span<const CorpusRecord> val,
                                 const FeatureStore& features, const TrainConfig& config) {
  return train_plain(train, val, features, config, false);
}

TrainOutcome train_forward_abd(std::span<const CorpusRecord> train, std::span<const CorpusRecord> val_in,
                               const FeatureStore& features, const TrainConfig& config, const Checkpoint& backward) {
  check_inputs(train, val_in, features);
  if (backward.kind != ModelKind::backward) throw Error("train_forward_abd needs a backward checkpoint");
  if (backward.config.feature_dim != features.dim()) {
    throw Error("backward checkpoint expects features of dimension " + std::to_string(backward.config.feature_dim));
  }
  const auto val = validation_or_train(train, val_in);
  const Vocabulary& vocab = backward.vocab;
  const DecoderConfig& cfg = backward.config;
  const BackwardDecoderParams& bparams = backward.backward;

  // The backward decoder is frozen, so its state sequences are computed once
  // per (caption, input view).
  auto build = [&](std::span<const CorpusRecord> records, bool augment, std::vector<BackwardStateSequence>& states) {
    const std::vector<Example> base = make_examples(records, features, vocab, cfg.N, false);
    std::vector<Example> examples;
    std::vector<TokenSeq> inputs;
    std::mt19937_64 view_rng(config.seed ^ 0x9E3779B97F4A7C15ull);
    for (std::size_t i = 0; i < records.size(); ++i) {
      const TokenSeq full = clipped_tokens(vocab, records[i].caption, cfg.N);
      examples.push_back(base[i]);
      inputs.push_back(full);
      if (!augment) continue;
      if (config.abd_empty_view && !full.empty()) {
        examples.push_back(base[i]);
        inputs.emplace_back();
      }
      for (std::size_t v = 0; v < config.abd_gapped_views; ++v) {
        std::uniform_int_distribution<std::size_t> pick(0, full.size());
        std::size_t a = pick(view_rng), b = pick(view_rng);
        if (a > b) std::swap(a, b);
        TokenSeq view(full.begin(), full.begin() + static_cast<std::ptrdiff_t>(a));
        view.insert(view.end(), full.begin() + static_cast<std::ptrdiff_t>(b), full.end());
        examples.push_back(base[i]);
        inputs.push_back(std::move(view));
      }
    }
    states.resize(examples.size());
    const auto n = static_cast<std::ptrdiff_t>(examples.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) states[i] = backward_states(cfg, bparams, *examples[i].feature, inputs[i]);
    for (std::size_t i = 0; i < examples.size(); ++i) examples[i].backward = &states[i];
    return examples;
  };
  std::vector<BackwardStateSequence> train_states, val_states;
  const auto examples = build(train, true, train_states);
  const auto val_examples = build(val, false, val_states);

  const auto images = group_by_image(val);
  const CiderScorer scorer(images.refs);
  std::vector<BackwardStateSequence> empty_input_states(images.ids.size());
  for (std::size_t i = 0; i < images.ids.size(); ++i) {
    empty_input_states[i] = backward_states(cfg, bparams, features.at(images.ids[i]), {});
  }

  std::mt19937_64 rng(config.seed);
  AbdTrainable init{AttentionParams::random(cfg, rng), DecoderParams::random(cfg, cfg.d, rng)};

  auto loss_fn = [&](const AbdTrainable& p, const Example& ex, AbdTrainable* grad) {
    return abd_sequence_loss(cfg, p.attention, p.forward, *ex.feature, *ex.backward, ex.targets,
                             grad ? &grad->attention : nullptr, grad ? &grad->forward : nullptr);
  };
  auto validate = [&](const AbdTrainable& p) {
    ValidationResult r;
    r.loss = mean_token_loss(p, val_examples, loss_fn);
    r.cider = validation_cider(images, vocab, scorer, [&](std::size_t i) {
      return greedy_decode_abd(cfg, p.attention, p.forward, features.at(images.ids[i]), empty_input_states[i],
                               vocab.end_id());
    });
    return r;
  };

  TrainConfig effective = config;
  effective.N = cfg.N;
  effective.d = cfg.d;
  effective.d_embed = cfg.d_embed;

  TrainOutcome outcome;
  auto [best, history] = run_training(std::move(init), examples, effective, Selection::highest_val_cider, loss_fn,
                                      validate, outcome.best_epoch);
  outcome.history = std::move(history);
  Checkpoint& ckpt = outcome.checkpoint;
  ckpt.kind = ModelKind::abd;
  ckpt.config = cfg;
  ckpt.vocab = vocab;
  ckpt.backward = bparams;
  ckpt.forward = std::move(best.forward);
  ckpt.attention = std::move(best.attention);
  ckpt.epoch = outcome.best_epoch;
  const auto& at_best = outcome.history[outcome.best_epoch - 1];
  ckpt.scores = {{"train_loss", at_best.train_loss}, {"val_loss", at_best.val_loss}, {"val_cider", at_best.val_cider}};
  return outcome;
}

}  // namespace vcsc
