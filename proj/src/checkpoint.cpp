#include "vcsc/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include "vcsc/error.hpp"

namespace vcsc {

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::show_and_tell:
      return "show_and_tell";
    case ModelKind::backward:
      return "backward";
    case ModelKind::abd:
      return "abd";
  }
  return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
  if (name == "show_and_tell") return ModelKind::show_and_tell;
  if (name == "backward") return ModelKind::backward;
  if (name == "abd") return ModelKind::abd;
  throw Error("unknown model kind '" + name + "'");
}

ShowAndTellModel Checkpoint::show_and_tell() const {
  if (kind != ModelKind::show_and_tell) throw Error("checkpoint holds a " + to_string(kind) + " model");
  return {config, vocab, forward};
}

BackwardModel Checkpoint::backward_model() const {
  if (kind != ModelKind::backward && kind != ModelKind::abd) {
    throw Error("checkpoint holds no backward decoder");
  }
  return {config, vocab, backward};
}

AbdModel Checkpoint::abd() const {
  if (kind != ModelKind::abd) throw Error("checkpoint holds a " + to_string(kind) + " model");
  return {config, vocab, backward, forward, attention};
}

CompletionModel Checkpoint::completion_model() const {
  if (kind == ModelKind::abd) return abd();
  return show_and_tell();
}

namespace {

ParamRefs checkpoint_refs(Checkpoint& ckpt) {
  ParamRefs refs;
  auto append = [&refs](ParamRefs more) { refs.insert(refs.end(), more.begin(), more.end()); };
  if (ckpt.kind != ModelKind::backward) append(ckpt.forward.refs("forward"));
  if (ckpt.kind != ModelKind::show_and_tell) append(ckpt.backward.refs("backward"));
  if (ckpt.kind == ModelKind::abd) append(ckpt.attention.refs("attention"));
  return refs;
}

nlohmann::json config_to_json(const DecoderConfig& c) {
  return {{"d", c.d}, {"d_embed", c.d_embed}, {"feature_dim", c.feature_dim}, {"N", c.N}, {"m", c.m}};
}

DecoderConfig config_from_json(const nlohmann::json& j) {
  DecoderConfig c;
  c.d = j.at("d").get<std::size_t>();
  c.d_embed = j.at("d_embed").get<std::size_t>();
  c.feature_dim = j.at("feature_dim").get<std::size_t>();
  c.N = j.at("N").get<std::size_t>();
  c.m = j.at("m").get<std::size_t>();
  c.validate();
  return c;
}

}  // namespace

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt) {
  nlohmann::json doc;
  doc["magic"] = kCheckpointMagic;
  doc["kind"] = to_string(ckpt.kind);
  doc["config"] = config_to_json(ckpt.config);
  doc["vocab"] = ckpt.vocab.to_json();
  doc["epoch"] = ckpt.epoch;
  doc["scores"] = ckpt.scores;
  nlohmann::json tensors = nlohmann::json::object();
  for (const auto& [name, t] : checkpoint_refs(const_cast<Checkpoint&>(ckpt))) {
    tensors[name] = {{"shape", t->shape()}, {"data", std::vector<double>(t->values().begin(), t->values().end())}};
  }
  doc["tensors"] = std::move(tensors);
  return doc;
}

Checkpoint checkpoint_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("magic").get<std::string>() != kCheckpointMagic) throw Error("checkpoint magic mismatch", Error::Kind::io);
    Checkpoint ckpt;
    ckpt.kind = model_kind_from_string(doc.at("kind").get<std::string>());
    ckpt.config = config_from_json(doc.at("config"));
    ckpt.vocab = Vocabulary::from_json(doc.at("vocab"));
    if (ckpt.vocab.size() != ckpt.config.m) throw Error("checkpoint vocabulary size disagrees with config.m");
    ckpt.epoch = doc.at("epoch").get<std::size_t>();
    ckpt.scores = doc.at("scores").get<std::map<std::string, double>>();

    const auto& cfg = ckpt.config;
    if (ckpt.kind == ModelKind::show_and_tell) ckpt.forward = DecoderParams::zeros(cfg, cfg.d_embed);
    if (ckpt.kind == ModelKind::abd) {
      ckpt.forward = DecoderParams::zeros(cfg, cfg.d);
      ckpt.attention = AttentionParams::zeros(cfg);
    }
    if (ckpt.kind != ModelKind::show_and_tell) ckpt.backward = DecoderParams::zeros(cfg, cfg.d_embed);

    const auto& tensors = doc.at("tensors");
    for (auto& [name, t] : checkpoint_refs(ckpt)) {
      if (!tensors.contains(name)) throw Error("checkpoint is missing tensor '" + name + "'");
      const auto& entry = tensors.at(name);
      const auto shape = entry.at("shape").get<std::vector<std::size_t>>();
      if (shape != t->shape()) throw Error("checkpoint tensor '" + name + "' has unexpected shape");
      Tensor loaded(shape, entry.at("data").get<std::vector<double>>());
      *t = std::move(loaded);
    }
    return ckpt;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed checkpoint: ") + e.what(), Error::Kind::io);
  }
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing", Error::Kind::io);
  out << kCheckpointMagic << '\n' << checkpoint_to_json(ckpt).dump() << '\n';
  if (!out) throw Error("failed writing '" + path.string() + "'", Error::Kind::io);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint '" + path.string() + "'", Error::Kind::io);
  std::string magic;
  std::getline(in, magic);
  if (magic != kCheckpointMagic) throw Error("'" + path.string() + "' is not a VCSC1 checkpoint", Error::Kind::io);
  std::stringstream body;
  body << in.rdbuf();
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body.str());
  } catch (const nlohmann::json::exception& e) {
    throw Error("malformed checkpoint '" + path.string() + "': " + e.what(), Error::Kind::io);
  }
  return checkpoint_from_json(doc);
}

}  // namespace vcsc
