#include "vcsc/textcore.hpp"

#include <algorithm>
#include <numeric>

#include "vcsc/error.hpp"

namespace vcsc {

namespace {

constexpr const char* kStartToken = "<start>";
constexpr const char* kEndToken = "<end>";
constexpr const char* kUnkToken = "<unk>";

}  // namespace

std::u32string utf8_decode(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (lead < 0x80) {
      len = 1;
      cp = lead;
    } else if ((lead & 0xE0) == 0xC0) {
      len = 2;
      cp = lead & 0x1F;
    } else if ((lead & 0xF0) == 0xE0) {
      len = 3;
      cp = lead & 0x0F;
    } else if ((lead & 0xF8) == 0xF0) {
      len = 4;
      cp = lead & 0x07;
    } else {
      throw Error("invalid UTF-8 lead byte at offset " + std::to_string(i));
    }
    if (i + len > text.size()) throw Error("truncated UTF-8 sequence at offset " + std::to_string(i));
    for (std::size_t k = 1; k < len; ++k) {
      const auto cont = static_cast<unsigned char>(text[i + k]);
      if ((cont & 0xC0) != 0x80) throw Error("invalid UTF-8 continuation at offset " + std::to_string(i + k));
      cp = (cp << 6) | (cont & 0x3F);
    }
    static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
    if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) {
      throw Error("invalid UTF-8 code point at offset " + std::to_string(i));
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

std::string utf8_encode(std::u32string_view cps) {
  std::string out;
  out.reserve(cps.size());
  for (char32_t cp : cps) out += utf8_encode(cp);
  return out;
}

std::size_t utf8_length(std::string_view text) { return utf8_decode(text).size(); }

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary Vocabulary::build(std::span<const std::string> corpus, std::size_t min_count) {
  if (corpus.empty()) throw Error("empty corpus");
  if (min_count < 1) throw Error("min_count must be at least 1");

  std::vector<char32_t> order;
  std::unordered_map<char32_t, std::size_t> counts;
  for (const auto& caption : corpus) {
    for (char32_t cp : utf8_decode(caption)) {
      auto [it, inserted] = counts.try_emplace(cp, 0);
      if (inserted) order.push_back(cp);
      ++it->second;
    }
  }

  Vocabulary vocab;
  vocab.tokens_ = {kStartToken, kEndToken, kUnkToken};
  vocab.code_points_ = {0, 0, 0};
  for (char32_t cp : order) {
    if (counts[cp] < min_count) continue;
    vocab.tokens_.push_back(utf8_encode(cp));
    vocab.code_points_.push_back(cp);
  }
  vocab.reindex();
  return vocab;
}

void Vocabulary::reindex() {
  index_.clear();
  for (std::size_t id = 0; id < tokens_.size(); ++id) {
    const auto tid = static_cast<TokenId>(id);
    if (tid == start_id_ || tid == end_id_ || tid == unk_id_) continue;
    if (!index_.emplace(code_points_[id], tid).second) {
      throw Error("duplicate vocabulary token '" + tokens_[id] + "'");
    }
  }
}

Vocabulary Vocabulary::from_json(const nlohmann::json& doc) {
  Vocabulary vocab;
  try {
    vocab.tokens_ = doc.at("tokens").get<std::vector<std::string>>();
    vocab.start_id_ = doc.at("start").get<TokenId>();
    vocab.end_id_ = doc.at("end").get<TokenId>();
    vocab.unk_id_ = doc.at("unk").get<TokenId>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("malformed vocabulary: ") + e.what());
  }
  const auto m = static_cast<TokenId>(vocab.tokens_.size());
  const TokenId specials[] = {vocab.start_id_, vocab.end_id_, vocab.unk_id_};
  for (TokenId s : specials) {
    if (s < 0 || s >= m) throw Error("vocabulary special id out of range");
  }
  if (vocab.start_id_ == vocab.end_id_ || vocab.start_id_ == vocab.unk_id_ ||
      vocab.end_id_ == vocab.unk_id_) {
    throw Error("vocabulary special ids must be distinct");
  }
  vocab.code_points_.assign(vocab.tokens_.size(), 0);
  for (TokenId id = 0; id < m; ++id) {
    if (id == vocab.start_id_ || id == vocab.end_id_ || id == vocab.unk_id_) continue;
    const auto cps = utf8_decode(vocab.tokens_[id]);
    if (cps.size() != 1) throw Error("vocabulary token '" + vocab.tokens_[id] + "' is not a single code point");
    vocab.code_points_[id] = cps[0];
  }
  vocab.reindex();
  return vocab;
}

nlohmann::json Vocabulary::to_json() const {
  return {{"tokens", tokens_}, {"start", start_id_}, {"end", end_id_}, {"unk", unk_id_}};
}

TokenId Vocabulary::id_of(char32_t cp) const {
  auto it = index_.find(cp);
  return it == index_.end() ? unk_id_ : it->second;
}

TokenSeq Vocabulary::encode(std::string_view text) const {
  TokenSeq ids;
  for (char32_t cp : utf8_decode(text)) ids.push_back(id_of(cp));
  return ids;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw Error("token id out of range");
    if (id == start_id_ || id == end_id_) continue;
    out += id == unk_id_ ? utf8_encode(kUnkGlyph) : tokens_[id];
  }
  return out;
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) throw Error("token id out of range");
  return tokens_[id];
}

// ---------------------------------------------------------------------------
// Edit distance

std::size_t levenshtein(std::u32string_view a, std::u32string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  std::iota(prev.begin(), prev.end(), std::size_t{0});
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  return levenshtein(utf8_decode(a), utf8_decode(b));
}

std::size_t accumulated_levd(std::span<const std::string> seq) {
  if (seq.empty()) throw Error("accumulated_levd requires at least one string");
  std::size_t total = 0;
  for (std::size_t i = 1; i < seq.size(); ++i) total += levenshtein(seq[i - 1], seq[i]);
  return total;
}

}  // namespace vcsc
