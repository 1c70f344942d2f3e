#pragma once
// Small helpers for the scenario generators.

#include <random>
#include <string>

namespace flex::detail {

inline std::string hex_token(std::mt19937_64& rng, int n_chars) {
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(static_cast<size_t>(n_chars));
  for (int i = 0; i < n_chars; ++i) out.push_back(hex[rng() % 16]);
  return out;
}

inline std::string regex_escape(const std::string& text) {
  static const std::string meta = R"(\^$.|?*+()[]{})";
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    if (meta.find(c) != std::string::npos) out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace flex::detail
