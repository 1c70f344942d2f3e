#pragma once
// Text canonicalization: the identity function for experiences.
//
// Normalization = trim + whitespace-run collapse + Unicode NFC.
// Identity of an experience = SHA-256 of its normalized UTF-8 bytes.

#include <openssl/evp.h>
#include <unicode/unorm2.h>
#include <unicode/ustring.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "flex/errors.hpp"

namespace flex {

inline bool is_ascii_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// NFC via ICU. Invalid UTF-8 is passed through untouched rather than
// mangled; identity then degrades to byte identity for that input.
inline std::string nfc(const std::string& utf8) {
  UErrorCode ec = U_ZERO_ERROR;
  const UNormalizer2* norm = unorm2_getNFCInstance(&ec);
  if (U_FAILURE(ec) || norm == nullptr) return utf8;

  std::u16string u16(utf8.size() + 1, u'\0');
  int32_t u16len = 0;
  u_strFromUTF8(u16.data(), static_cast<int32_t>(u16.size()), &u16len, utf8.data(),
                static_cast<int32_t>(utf8.size()), &ec);
  if (U_FAILURE(ec)) return utf8;
  u16.resize(static_cast<size_t>(u16len));

  ec = U_ZERO_ERROR;
  std::u16string composed(u16.size() + 16, u'\0');
  int32_t clen = unorm2_normalize(norm, u16.data(), static_cast<int32_t>(u16.size()),
                                  composed.data(), static_cast<int32_t>(composed.size()), &ec);
  if (ec == U_BUFFER_OVERFLOW_ERROR) {
    ec = U_ZERO_ERROR;
    composed.assign(static_cast<size_t>(clen), u'\0');
    clen = unorm2_normalize(norm, u16.data(), static_cast<int32_t>(u16.size()), composed.data(),
                            static_cast<int32_t>(composed.size()), &ec);
  }
  if (U_FAILURE(ec)) return utf8;
  composed.resize(static_cast<size_t>(clen));

  ec = U_ZERO_ERROR;
  std::string out(composed.size() * 4 + 16, '\0');
  int32_t olen = 0;
  u_strToUTF8(out.data(), static_cast<int32_t>(out.size()), &olen, composed.data(),
              static_cast<int32_t>(composed.size()), &ec);
  if (U_FAILURE(ec)) return utf8;
  out.resize(static_cast<size_t>(olen));
  return out;
}

// Trim, collapse internal whitespace runs to single spaces, compose to NFC.
// Throws NormalizesToEmpty when nothing survives.
inline std::string normalize_content(std::string_view raw) {
  std::string collapsed;
  collapsed.reserve(raw.size());
  bool in_run = false;
  for (char c : raw) {
    if (is_ascii_space(c)) {
      in_run = true;
      continue;
    }
    if (in_run && !collapsed.empty()) collapsed.push_back(' ');
    in_run = false;
    collapsed.push_back(c);
  }
  std::string result = nfc(collapsed);
  if (result.empty()) raise(Errc::NormalizesToEmpty, "content is empty after normalization");
  return result;
}

inline std::string sha256_hex(std::string_view bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int mdlen = 0;
  EVP_Digest(bytes.data(), bytes.size(), md, &mdlen, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(mdlen * 2);
  for (unsigned int i = 0; i < mdlen; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

inline std::string content_hash(std::string_view raw) {
  return sha256_hex(normalize_content(raw));
}

// Lowercased whitespace tokens, for the lexical similarity scorers.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char c : text) {
    if (is_ascii_space(c)) {
      if (!cur.empty()) tokens.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

using TokenSet = std::unordered_set<std::string>;

inline TokenSet token_set(std::string_view text) {
  auto toks = tokenize(text);
  return TokenSet(toks.begin(), toks.end());
}

inline double jaccard(const TokenSet& a, const TokenSet& b) {
  if (a.empty() && b.empty()) return 0.0;
  size_t inter = 0;
  const TokenSet& small = a.size() <= b.size() ? a : b;
  const TokenSet& large = a.size() <= b.size() ? b : a;
  for (const auto& t : small)
    if (large.count(t)) ++inter;
  size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

inline bool shares_token(const TokenSet& a, const TokenSet& b) {
  const TokenSet& small = a.size() <= b.size() ? a : b;
  const TokenSet& large = a.size() <= b.size() ? b : a;
  for (const auto& t : small)
    if (large.count(t)) return true;
  return false;
}

}  // namespace flex
