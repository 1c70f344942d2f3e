#pragma once
// Correctness scoring: exact match on normalized text, numeric tolerance,
// and Spearman rank correlation with average-rank tie handling.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flex/content.hpp"
#include "flex/errors.hpp"

namespace flex {

// ---------- numeric text helpers ----------

inline std::optional<double> parse_finite(std::string_view text) {
  size_t b = 0, e = text.size();
  while (b < e && is_ascii_space(text[b])) ++b;
  while (e > b && is_ascii_space(text[e - 1])) --e;
  if (b == e) return std::nullopt;
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data() + b, text.data() + e, v);
  if (ec != std::errc() || ptr != text.data() + e) return std::nullopt;
  if (!std::isfinite(v)) return std::nullopt;
  return v;
}

// Comma- and/or whitespace-separated reals; nullopt if any token fails.
inline std::optional<std::vector<double>> parse_real_list(std::string_view text) {
  std::vector<double> out;
  std::string tok;
  auto flush = [&]() -> bool {
    if (tok.empty()) return true;
    auto v = parse_finite(tok);
    tok.clear();
    if (!v) return false;
    out.push_back(*v);
    return true;
  };
  for (char c : text) {
    if (c == ',' || is_ascii_space(c)) {
      if (!flush()) return std::nullopt;
    } else {
      tok.push_back(c);
    }
  }
  if (!flush()) return std::nullopt;
  if (out.empty()) return std::nullopt;
  return out;
}

// Shortest round-trip decimal form.
inline std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// ---------- scorers ----------

inline double exact_match(std::string_view pred, std::string_view gold) {
  std::string p, g;
  try {
    p = normalize_content(pred);
  } catch (const Error&) {
    p.clear();
  }
  try {
    g = normalize_content(gold);
  } catch (const Error&) {
    g.clear();
  }
  return p == g ? 1.0 : 0.0;
}

inline double numeric_match(std::string_view pred, std::string_view gold, double atol) {
  auto p = parse_finite(pred);
  auto g = parse_finite(gold);
  if (!p || !g) return 0.0;
  return std::fabs(*p - *g) <= atol ? 1.0 : 0.0;
}

// Average (fractional) ranks, 1-based. Ties share the mean of the positions
// they occupy; values are exact multiples of 0.5.
inline std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

inline double spearman_rho(const std::vector<double>& preds, const std::vector<double>& golds) {
  if (preds.size() != golds.size())
    raise(Errc::LengthMismatch, std::to_string(preds.size()) + " vs " +
                                    std::to_string(golds.size()) + " points");
  const size_t n = preds.size();
  if (n < 2) raise(Errc::TooFewPoints, "need at least 2 points");

  auto r1 = average_ranks(preds);
  auto r2 = average_ranks(golds);

  // Perfect (anti)concordance has an exact answer; report it exactly
  // instead of through the rounding of the product-moment formula.
  bool same = true, opposite = true;
  const double flip = static_cast<double>(n + 1);
  for (size_t i = 0; i < n; ++i) {
    same = same && r1[i] == r2[i];
    opposite = opposite && r1[i] == flip - r2[i];
  }

  double mean1 = std::accumulate(r1.begin(), r1.end(), 0.0) / static_cast<double>(n);
  double mean2 = std::accumulate(r2.begin(), r2.end(), 0.0) / static_cast<double>(n);
  double num = 0.0, d1 = 0.0, d2 = 0.0;
  for (size_t i = 0; i < n; ++i) {
    double a = r1[i] - mean1;
    double b = r2[i] - mean2;
    num += a * b;
    d1 += a * a;
    d2 += b * b;
  }
  if (d1 == 0.0 || d2 == 0.0) raise(Errc::ZeroVariance, "an input is constant");
  if (same) return 1.0;
  if (opposite) return -1.0;
  double rho = num / std::sqrt(d1 * d2);
  return std::clamp(rho, -1.0, 1.0);
}

// ---------- evaluator binding ----------

enum class EvaluatorKind : uint8_t { ExactMatch, NumericTolerance, SpearmanRho };

struct Evaluator {
  EvaluatorKind kind = EvaluatorKind::ExactMatch;
  double atol = 0.0;  // NumericTolerance only

  static Evaluator exact() { return {EvaluatorKind::ExactMatch, 0.0}; }
  static Evaluator numeric(double atol) { return {EvaluatorKind::NumericTolerance, atol}; }
  static Evaluator spearman() { return {EvaluatorKind::SpearmanRho, 0.0}; }
};

// Gold is either text or a list of reals; exactly one is populated,
// matching the evaluator kind.
struct GoldValue {
  std::string text;
  std::vector<double> reals;
  bool is_reals = false;
};

// Scores a model answer against gold. Unparseable or mismatched
// predictions score 0 for the binary kinds and for SpearmanRho tasks;
// spearman_rho itself stays strict for direct callers.
inline double score_prediction(const Evaluator& ev, std::string_view answer,
                               const GoldValue& gold) {
  switch (ev.kind) {
    case EvaluatorKind::ExactMatch:
      return exact_match(answer, gold.text);
    case EvaluatorKind::NumericTolerance:
      return numeric_match(answer, gold.text, ev.atol);
    case EvaluatorKind::SpearmanRho: {
      auto preds = parse_real_list(answer);
      if (!preds || preds->size() != gold.reals.size() || gold.reals.size() < 2) return 0.0;
      try {
        return spearman_rho(*preds, gold.reals);
      } catch (const Error& e) {
        // A constant gold vector is broken task data and must fail loudly;
        // a constant or degenerate prediction is just a zero-score answer.
        if (e.code() == Errc::ZeroVariance &&
            std::all_of(gold.reals.begin(), gold.reals.end(),
                        [&](double v) { return v == gold.reals.front(); }))
          throw;
        return 0.0;
      }
    }
  }
  return 0.0;
}

}  // namespace flex
