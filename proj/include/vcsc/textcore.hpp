#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <json.hpp>

namespace vcsc {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

/// Decodes UTF-8 into code points. Throws on malformed input.
std::u32string utf8_decode(std::string_view text);
std::string utf8_encode(std::u32string_view cps);
std::string utf8_encode(char32_t cp);
/// Number of code points in `text`.
std::size_t utf8_length(std::string_view text);

/// Character-level token inventory. Ids 0, 1, 2 are the start, end and unk
/// specials; the remaining ids follow first-occurrence order in the corpus.
/// Immutable once built.
class Vocabulary {
 public:
  static constexpr char32_t kUnkGlyph = U'�';

  Vocabulary() = default;

  static Vocabulary build(std::span<const std::string> corpus, std::size_t min_count = 1);
  static Vocabulary from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  TokenSeq encode(std::string_view text) const;
  std::string decode(std::span<const TokenId> ids) const;

  TokenId id_of(char32_t cp) const;
  bool contains(char32_t cp) const { return index_.contains(cp); }
  /// Display form of a token; specials render as "<start>", "<end>", "<unk>".
  const std::string& token(TokenId id) const;

  TokenId start_id() const { return start_id_; }
  TokenId end_id() const { return end_id_; }
  TokenId unk_id() const { return unk_id_; }
  std::size_t size() const { return tokens_.size(); }

  bool operator==(const Vocabulary& other) const {
    return tokens_ == other.tokens_ && start_id_ == other.start_id_ &&
           end_id_ == other.end_id_ && unk_id_ == other.unk_id_;
  }

 private:
  void reindex();

  std::vector<std::string> tokens_;
  std::vector<char32_t> code_points_;  // parallel to tokens_, 0 for specials
  std::unordered_map<char32_t, TokenId> index_;
  TokenId start_id_ = 0;
  TokenId end_id_ = 1;
  TokenId unk_id_ = 2;
};

/// Edit distance over code points (unit-cost insert, delete, substitute).
std::size_t levenshtein(std::string_view a, std::string_view b);
std::size_t levenshtein(std::u32string_view a, std::u32string_view b);

/// Sum of distances between consecutive strings; 0 for a single string.
std::size_t accumulated_levd(std::span<const std::string> seq);

}  // namespace vcsc
