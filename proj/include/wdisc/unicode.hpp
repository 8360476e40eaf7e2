#pragma once

// UTF-8 helpers built on ICU: NFC normalization, whitespace stripping and
// splitting a line into symbols.

#include <algorithm>
#include <string>
#include <string_view>
#include <vector>

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "wdisc/error.hpp"

namespace wdisc::unicode {

inline std::string nfc(std::string_view text) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* norm = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw IoError("ICU NFC normalizer unavailable");
  icu::UnicodeString src = icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
  icu::UnicodeString out = norm->normalize(src, status);
  if (U_FAILURE(status)) throw ValidationError("NFC normalization failed");
  std::string result;
  out.toUTF8String(result);
  return result;
}

/// Decodes UTF-8 into codepoints; throws on malformed input.
inline std::vector<char32_t> codepoints(std::string_view text) {
  std::vector<char32_t> cps;
  int32_t i = 0;
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto len = static_cast<int32_t>(text.size());
  while (i < len) {
    UChar32 c;
    U8_NEXT(s, i, len, c);
    if (c < 0) throw ValidationError("malformed UTF-8 input");
    cps.push_back(static_cast<char32_t>(c));
  }
  return cps;
}

inline std::string encode(char32_t cp) {
  char buf[U8_MAX_LENGTH];
  int32_t n = 0;
  UBool err = false;
  U8_APPEND(reinterpret_cast<uint8_t*>(buf), n, U8_MAX_LENGTH, static_cast<UChar32>(cp), err);
  if (err) throw ValidationError("codepoint cannot be encoded");
  return std::string(buf, static_cast<std::size_t>(n));
}

inline bool is_space(char32_t cp) { return u_isUWhiteSpace(static_cast<UChar32>(cp)); }

inline std::string strip_whitespace(std::string_view text) {
  std::string out;
  for (char32_t cp : codepoints(text))
    if (!is_space(cp)) out += encode(cp);
  return out;
}

/// Splits on Unicode whitespace, dropping empty fields.
inline std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::string cur;
  for (char32_t cp : codepoints(text)) {
    if (is_space(cp)) {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += encode(cp);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

/// Splits whitespace-free text into symbols. Each symbol is one codepoint
/// unless `inventory` lists a multi-codepoint grapheme matching at that
/// position; inventory entries are matched longest-first.
class SymbolSplitter {
 public:
  SymbolSplitter() = default;

  explicit SymbolSplitter(std::vector<std::string> inventory) {
    for (auto& g : inventory) {
      g = nfc(g);
      if (codepoints(g).size() > 1) multi_.push_back(std::move(g));
    }
    std::sort(multi_.begin(), multi_.end(), [](const std::string& a, const std::string& b) {
      return a.size() != b.size() ? a.size() > b.size() : a < b;
    });
    multi_.erase(std::unique(multi_.begin(), multi_.end()), multi_.end());
  }

  std::vector<std::string> split(std::string_view text) const {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
      bool matched = false;
      for (const auto& g : multi_) {
        if (text.substr(pos, g.size()) == g) {
          out.push_back(g);
          pos += g.size();
          matched = true;
          break;
        }
      }
      if (matched) continue;
      const auto* s = reinterpret_cast<const uint8_t*>(text.data());
      auto i = static_cast<int32_t>(pos);
      UChar32 c;
      U8_NEXT(s, i, static_cast<int32_t>(text.size()), c);
      if (c < 0) throw ValidationError("malformed UTF-8 input");
      out.emplace_back(text.substr(pos, static_cast<std::size_t>(i) - pos));
      pos = static_cast<std::size_t>(i);
    }
    return out;
  }

 private:
  std::vector<std::string> multi_;
};

}  // namespace wdisc::unicode
