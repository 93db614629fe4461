#include "vcsc/corpus.hpp"

#include <cmath>
#include <fstream>
#include <optional>
#include <random>
#include <set>

#include <json.hpp>

#include "vcsc/error.hpp"

namespace vcsc {

const Tensor& FeatureStore::at(const std::string& image_id) const {
  auto it = features_.find(image_id);
  if (it == features_.end()) throw Error("no feature vector for image '" + image_id + "'", Error::Kind::not_found);
  return it->second;
}

void FeatureStore::insert(const std::string& image_id, Tensor feature) {
  if (feature.size() != dim_) {
    throw Error("feature for '" + image_id + "' has " + std::to_string(feature.size()) + " elements, expected " +
                std::to_string(dim_));
  }
  features_.insert_or_assign(image_id, std::move(feature));
}

namespace {

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "'", Error::Kind::io);
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing", Error::Kind::io);
  return out;
}

nlohmann::json parse_line(const std::string& line, const std::filesystem::path& path, std::size_t lineno) {
  try {
    return nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path.string() + ":" + std::to_string(lineno) + ": " + e.what(), Error::Kind::io);
  }
}

bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace

std::vector<CorpusRecord> load_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::vector<CorpusRecord> records;
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (blank(line)) continue;
    const auto j = parse_line(line, path, lineno);
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (!j.is_object() || !j.contains("image_id") || !j["image_id"].is_string() || !j.contains("caption") ||
        !j["caption"].is_string()) {
      throw Error(where + ": expected {\"image_id\": str, \"caption\": str}");
    }
    CorpusRecord rec{j["image_id"].get<std::string>(), j["caption"].get<std::string>()};
    if (rec.caption.empty()) throw Error(where + ": empty caption");
    records.push_back(std::move(rec));
  }
  return records;
}

void save_corpus(std::span<const CorpusRecord> records, const std::filesystem::path& path) {
  auto out = open_output(path);
  for (const auto& r : records) out << nlohmann::json{{"image_id", r.image_id}, {"caption", r.caption}}.dump() << '\n';
}

FeatureStore load_features(const std::filesystem::path& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  std::optional<FeatureStore> store;
  while (std::getline(in, line)) {
    ++lineno;
    if (blank(line)) continue;
    const auto j = parse_line(line, path, lineno);
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (!store) {
      if (!j.is_object() || !j.contains("dim") || !j["dim"].is_number_unsigned() || j["dim"].get<std::size_t>() == 0) {
        throw Error(where + ": feature file must start with a {\"dim\": D} header line");
      }
      store.emplace(j["dim"].get<std::size_t>());
      continue;
    }
    if (!j.is_object() || !j.contains("image_id") || !j["image_id"].is_string() || !j.contains("feature") ||
        !j["feature"].is_array()) {
      throw Error(where + ": expected {\"image_id\": str, \"feature\": [floats]}");
    }
    const auto id = j["image_id"].get<std::string>();
    std::vector<double> values;
    try {
      values = j["feature"].get<std::vector<double>>();
    } catch (const nlohmann::json::exception&) {
      throw Error(where + ": feature row for '" + id + "' contains non-numeric values");
    }
    if (values.size() != store->dim()) {
      throw Error(where + ": feature row for '" + id + "' has " + std::to_string(values.size()) +
                  " elements, header declares " + std::to_string(store->dim()));
    }
    if (store->contains(id)) throw Error(where + ": duplicate feature row for '" + id + "'");
    store->insert(id, Tensor::vec(std::move(values)));
  }
  if (!store) throw Error(path.string() + ": empty feature file", Error::Kind::io);
  return std::move(*store);
}

void save_features(const FeatureStore& store, const std::filesystem::path& path) {
  auto out = open_output(path);
  out << nlohmann::json{{"dim", store.dim()}}.dump() << '\n';
  for (const auto& [id, t] : store.items()) {
    out << nlohmann::json{{"image_id", id}, {"feature", std::vector<double>(t.values().begin(), t.values().end())}}
               .dump()
        << '\n';
  }
}

void validate_corpus(std::span<const CorpusRecord> records, const FeatureStore& features) {
  std::set<std::string> missing;
  for (const auto& r : records) {
    if (!features.contains(r.image_id)) missing.insert(r.image_id);
  }
  if (missing.empty()) return;
  std::string list;
  for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
  throw Error("captions reference images with no feature vector: " + list, Error::Kind::not_found);
}

FeatureStore synthetic_features(std::span<const std::string> image_ids, std::size_t dim, std::uint64_t seed) {
  FeatureStore store(dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (const auto& id : image_ids) {
    if (store.contains(id)) continue;
    Tensor t({dim});
    double sq = 0.0;
    for (auto& v : t.values()) {
      v = normal(rng);
      sq += v * v;
    }
    const double norm = std::sqrt(sq);
    for (auto& v : t.values()) v /= norm;
    store.insert(id, std::move(t));
  }
  return store;
}

Split split_of(const std::string& image_id) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : image_id) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  const auto bucket = h % 10;
  if (bucket < 8) return Split::train;
  return bucket == 8 ? Split::val : Split::test;
}

std::vector<CorpusRecord> select_split(std::span<const CorpusRecord> records, Split split) {
  std::vector<CorpusRecord> out;
  for (const auto& r : records) {
    if (split_of(r.image_id) == split) out.push_back(r);
  }
  return out;
}

Split split_from_string(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "val") return Split::val;
  if (name == "test") return Split::test;
  throw Error("unknown split '" + name + "' (expected train, val or test)");
}

std::vector<std::string> captions_of(std::span<const CorpusRecord> records) {
  std::vector<std::string> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.caption);
  return out;
}

}  // namespace vcsc
