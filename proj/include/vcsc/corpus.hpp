#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vcsc/tensor.hpp"

namespace vcsc {

struct CorpusRecord {
  std::string image_id;
  std::string caption;

  bool operator==(const CorpusRecord&) const = default;
};

/// image_id -> feature vector; every vector has `dim` elements.
class FeatureStore {
 public:
  explicit FeatureStore(std::size_t dim = 0) : dim_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return features_.size(); }
  bool contains(const std::string& image_id) const { return features_.contains(image_id); }
  const Tensor& at(const std::string& image_id) const;
  void insert(const std::string& image_id, Tensor feature);
  const std::map<std::string, Tensor>& items() const { return features_; }

 private:
  std::size_t dim_;
  std::map<std::string, Tensor> features_;
};

/// JSON-lines, one {"image_id": str, "caption": str} per line.
std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path);
void save_corpus(std::span<const CorpusRecord> records, const std::filesystem::path& path);

/// JSON-lines: a header {"dim": D} followed by {"image_id": str, "feature": [...]}.
FeatureStore load_features(const std::filesystem::path& path);
void save_features(const FeatureStore& store, const std::filesystem::path& path);

/// Throws listing every image_id in `records` that has no feature vector.
void validate_corpus(std::span<const CorpusRecord> records, const FeatureStore& features);

/// Seeded random unit-norm vectors, one per id.
FeatureStore synthetic_features(std::span<const std::string> image_ids, std::size_t dim, std::uint64_t seed);

enum class Split { train, val, test };

/// 80/10/10 split keyed by a stable FNV-1a hash of the image id, so all
/// captions of one image land in the same split.
Split split_of(const std::string& image_id);
std::vector<CorpusRecord> select_split(std::span<const CorpusRecord> records, Split split);
Split split_from_string(const std::string& name);

std::vector<std::string> captions_of(std::span<const CorpusRecord> records);

}  // namespace vcsc
