#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>

#include <json.hpp>

#include "vcsc/decoders.hpp"
#include "vcsc/model.hpp"

namespace vcsc {

/// Magic header written at the top of every checkpoint document.
inline constexpr const char* kCheckpointMagic = "VCSC1";

enum class ModelKind { show_and_tell, backward, abd };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

/// Named parameter tensors plus everything needed to rebuild a model.
/// Only the parameter groups of `kind` are meaningful:
///   show_and_tell: forward;  backward: backward;  abd: all three.
struct Checkpoint {
  ModelKind kind = ModelKind::show_and_tell;
  DecoderConfig config;
  Vocabulary vocab;
  ForwardDecoderParams forward;
  BackwardDecoderParams backward;
  AttentionParams attention;
  std::size_t epoch = 0;
  std::map<std::string, double> scores;

  ShowAndTellModel show_and_tell() const;
  BackwardModel backward_model() const;
  AbdModel abd() const;
  /// Throws unless kind is show_and_tell or abd.
  CompletionModel completion_model() const;

  bool operator==(const Checkpoint&) const = default;
};

nlohmann::json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const nlohmann::json& doc);

/// Writes "VCSC1\n" followed by the JSON document.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace vcsc
