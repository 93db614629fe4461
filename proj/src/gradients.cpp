#include "vcsc/gradients.hpp"

#include <algorithm>

#include "vcsc/error.hpp"
#include "vcsc/kernels.hpp"

namespace vcsc {

TokenSeq teacher_targets(std::span<const TokenId> tokens, TokenId end_id, std::size_t N) {
  TokenSeq targets(tokens.begin(), tokens.end());
  targets.push_back(end_id);
  if (targets.size() > N) targets.resize(N);
  return targets;
}

namespace {

void check_finite(const Tensor& t, const char* op, std::size_t step) {
  if (!t.all_finite()) {
    throw Error(std::string("non-finite value in ") + op + " at step " + std::to_string(step), Error::Kind::numerical);
  }
}

void check_targets(const DecoderConfig& cfg, std::span<const TokenId> targets) {
  if (targets.size() > cfg.N) throw Error("target sequence longer than maximum length");
  for (TokenId t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= cfg.m) throw Error("target token id out of range");
  }
}

Tensor embedding(const Tensor& table, TokenId id) {
  const auto row = table.row(static_cast<std::size_t>(id));
  return Tensor::vec({row.begin(), row.end()});
}

/// dz of softmax + cross-entropy: p - one_hot(target).
Tensor ce_grad(const Tensor& p, TokenId target) {
  Tensor dz = p;
  dz[static_cast<std::size_t>(target)] -= 1.0;
  return dz;
}

/// Routes the gradient of an LSTM/attention input x_hat_t to the visual
/// projection (t == 0) or to the embedding row of the previous target.
void route_input_grad(std::size_t t, std::span<const TokenId> targets, const Tensor& image_feature,
                      const Tensor& dx, DecoderParams& grad) {
  if (t == 0) {
    kernels::outer_acc(image_feature.values(), dx.values(), grad.img_proj.W.data());
    kernels::axpy(1.0, dx.values(), grad.img_proj.b.values());
  } else {
    kernels::axpy(1.0, dx.values(), grad.embed.row(static_cast<std::size_t>(targets[t - 1])));
  }
}

}  // namespace

SequenceLoss decoder_sequence_loss(const DecoderConfig& cfg, const DecoderParams& params, const Tensor& image_feature,
                                   std::span<const TokenId> targets, DecoderParams* grad) {
  check_targets(cfg, targets);
  if (image_feature.size() != cfg.feature_dim) throw Error("image feature has wrong dimension");
  const std::size_t T = targets.size();
  SequenceLoss loss{0.0, T};
  if (T == 0) return loss;

  const Tensor visual = linear(params.img_proj, image_feature);
  check_finite(visual, "img_proj", 0);
  std::vector<LstmCache> caches(T);
  std::vector<Tensor> probs(T);
  Tensor h = Tensor::zeros(cfg.d);
  Tensor c = Tensor::zeros(cfg.d);
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor x = t == 0 ? visual : embedding(params.embed, targets[t - 1]);
    auto hc = lstm_step(params.lstm, h, c, x, &caches[t]);
    check_finite(hc.c, "lstm_step", t);
    h = std::move(hc.h);
    c = std::move(hc.c);
    const Tensor z = linear(params.out, h);
    check_finite(z, "linear", t);
    probs[t] = softmax(z);
    loss.total += cross_entropy(probs[t], targets[t]);
  }
  if (!grad) return loss;

  Tensor dh_next = Tensor::zeros(cfg.d);
  Tensor dc_next = Tensor::zeros(cfg.d);
  for (std::size_t t = T; t-- > 0;) {
    Tensor dh = linear_backward(params.out, caches[t].h, ce_grad(probs[t], targets[t]), grad->out);
    kernels::axpy(1.0, dh_next.values(), dh.values());
    LstmGrads g = lstm_backward(params.lstm, caches[t], dh, dc_next, grad->lstm);
    route_input_grad(t, targets, image_feature, g.dx, *grad);
    dh_next = std::move(g.dh_prev);
    dc_next = std::move(g.dc_prev);
  }
  return loss;
}

SequenceLoss abd_sequence_loss(const DecoderConfig& cfg, const AttentionParams& aparams,
                               const ForwardDecoderParams& fparams, const Tensor& image_feature,
                               const BackwardStateSequence& backward, std::span<const TokenId> targets,
                               AttentionParams* agrad, ForwardDecoderParams* fgrad) {
  check_targets(cfg, targets);
  if (image_feature.size() != cfg.feature_dim) throw Error("image feature has wrong dimension");
  if (backward.states.size() != cfg.N + 1) throw Error("backward state sequence must hold N+1 vectors");
  const std::size_t T = targets.size();
  SequenceLoss loss{0.0, T};
  if (T == 0) return loss;

  const Tensor visual = linear(fparams.img_proj, image_feature);
  check_finite(visual, "img_proj", 0);
  std::vector<LstmCache> caches(T);
  std::vector<AttentionOutput> atts(T);
  std::vector<Tensor> joints(T);
  std::vector<Tensor> probs(T);
  Tensor h = Tensor::zeros(cfg.d);
  Tensor c = Tensor::zeros(cfg.d);
  for (std::size_t t = 0; t < T; ++t) {
    const Tensor x = t == 0 ? visual : embedding(fparams.embed, targets[t - 1]);
    atts[t] = attend(aparams, x, h, backward);
    check_finite(atts[t].weights, "attention", t);
    joints[t] = Tensor({x.size() + h.size()});
    std::copy(x.values().begin(), x.values().end(), joints[t].values().begin());
    std::copy(h.values().begin(), h.values().end(),
              joints[t].values().begin() + static_cast<std::ptrdiff_t>(x.size()));
    auto hc = lstm_step(fparams.lstm, h, c, atts[t].context, &caches[t]);
    check_finite(hc.c, "lstm_step", t);
    h = std::move(hc.h);
    c = std::move(hc.c);
    const Tensor z = linear(fparams.out, h);
    check_finite(z, "linear", t);
    probs[t] = softmax(z);
    loss.total += cross_entropy(probs[t], targets[t]);
  }
  if (!agrad && !fgrad) return loss;

  AttentionParams a_scratch;
  ForwardDecoderParams f_scratch;
  if (!agrad) {
    a_scratch = aparams.zeros_like();
    agrad = &a_scratch;
  }
  if (!fgrad) {
    f_scratch = fparams.zeros_like();
    fgrad = &f_scratch;
  }

  const std::size_t N = cfg.N;
  Tensor dh_next = Tensor::zeros(cfg.d);
  Tensor dc_next = Tensor::zeros(cfg.d);
  for (std::size_t t = T; t-- > 0;) {
    Tensor dh = linear_backward(fparams.out, caches[t].h, ce_grad(probs[t], targets[t]), fgrad->out);
    kernels::axpy(1.0, dh_next.values(), dh.values());
    LstmGrads g = lstm_backward(fparams.lstm, caches[t], dh, dc_next, fgrad->lstm);

    // m_t = sum_i a_i H_i  =>  da_i = dm . H_i
    Tensor da({N});
    for (std::size_t i = 0; i < N; ++i) da[i] = kernels::dot(g.dx.values(), backward.states[i + 1].values());
    Tensor ds = softmax_backward(atts[t].weights, da);
    for (std::size_t i = 0; i < N; ++i) {
      if (atts[t].pre[i] <= 0.0) ds[i] = 0.0;
    }
    const Tensor djoint = linear_backward(aparams.att, joints[t], ds, agrad->att);
    const std::size_t de = cfg.d_embed;
    Tensor dx = Tensor::vec({djoint.values().begin(), djoint.values().begin() + static_cast<std::ptrdiff_t>(de)});
    route_input_grad(t, targets, image_feature, dx, *fgrad);

    dh_next = std::move(g.dh_prev);
    kernels::axpy(1.0, djoint.values().subspan(de), dh_next.values());
    dc_next = std::move(g.dc_prev);
  }
  return loss;
}

}  // namespace vcsc
