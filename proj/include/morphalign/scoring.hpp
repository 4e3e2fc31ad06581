#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "morphalign/error.hpp"
#include "morphalign/gold.hpp"
#include "morphalign/stats.hpp"
#include "morphalign/tokenizer.hpp"
#include "morphalign/utf8.hpp"

namespace morphalign {

enum class ContextMode { leading_space, bare, both };

inline std::string_view to_string(ContextMode c) {
  switch (c) {
    case ContextMode::leading_space: return "leading_space";
    case ContextMode::bare: return "bare";
    case ContextMode::both: return "both";
  }
  return "leading_space";
}

inline std::optional<ContextMode> parse_context_mode(std::string_view s) {
  if (s == "leading_space") return ContextMode::leading_space;
  if (s == "bare") return ContextMode::bare;
  if (s == "both") return ContextMode::both;
  return std::nullopt;
}

struct EvalConfig {
  bool frequency_scaling = true;
  bool include_single_token = false;
  std::vector<std::string> breakdown_keys;  // "upos" or "feat:NAME"
  ContextMode context_mode = ContextMode::leading_space;

  // Condition label, e.g. "True_False" (frequency scaling, single tokens).
  std::string condition() const {
    return std::string(frequency_scaling ? "True" : "False") + "_" + (include_single_token ? "True" : "False");
  }
};

struct ItemScore {
  std::uint32_t boundary_tp = 0, boundary_fp = 0, boundary_fn = 0;
  std::uint32_t subword_tp = 0, subword_fp = 0, subword_fn = 0;
  std::uint32_t n_tokens = 1;
  std::int64_t weight = 1;  // item frequency; used when frequency scaling is on
  bool single_token = false;

  std::uint32_t n_morphemes() const noexcept { return subword_tp + subword_fn; }

  bool operator==(const ItemScore&) const = default;
};

// Per-item ratios for a multi-token item.
struct ItemRatios {
  double boundary_precision = 0, boundary_recall = 0;
  double subword_precision = 0, subword_recall = 0, subword_f1 = 0;
};

inline double f1(double p, double r) { return p + r > 0 ? 2 * p * r / (p + r) : 0.0; }

inline ItemRatios ratios(const ItemScore& s) {
  const auto ratio = [](std::uint32_t num, std::uint32_t den) {
    return den ? static_cast<double>(num) / static_cast<double>(den) : 0.0;
  };
  ItemRatios r;
  r.boundary_precision = ratio(s.boundary_tp, s.boundary_tp + s.boundary_fp);
  r.boundary_recall = ratio(s.boundary_tp, s.boundary_tp + s.boundary_fn);
  r.subword_precision = ratio(s.subword_tp, s.subword_tp + s.subword_fp);
  r.subword_recall = ratio(s.subword_tp, s.subword_tp + s.subword_fn);
  r.subword_f1 = f1(r.subword_precision, r.subword_recall);
  return r;
}

// Gold character boundaries as byte offsets into the word.
inline std::vector<std::size_t> gold_byte_boundaries(const GoldItem& gold) {
  const auto offsets = utf8::char_offsets(gold.word);
  std::vector<std::size_t> out;
  out.reserve(gold.boundaries.size());
  for (std::size_t c : gold.boundaries) {
    if (c == 0 || c + 1 >= offsets.size()) throw DataError("gold boundary " + std::to_string(c) + " outside '" + gold.word + "'");
    out.push_back(offsets[c]);
  }
  return out;
}

// Compares a tokenization with the gold segmentation. Boundaries are
// compared as byte-offset sets; a token counts as a subword match only when
// its byte span equals a gold morpheme span.
inline ItemScore score_item(const GoldItem& gold, const TokenizationResult& pred) {
  if (pred.word != gold.word) throw ConfigError("score_item: tokenization is for '" + pred.word + "', gold is '" + gold.word + "'");
  const auto gold_bounds = gold_byte_boundaries(gold);
  const std::set<std::size_t> gold_set(gold_bounds.begin(), gold_bounds.end());
  const std::set<std::size_t> pred_set(pred.boundaries.begin(), pred.boundaries.end());

  ItemScore s;
  for (std::size_t b : pred_set) (gold_set.count(b) ? s.boundary_tp : s.boundary_fp)++;
  s.boundary_fn = static_cast<std::uint32_t>(gold_set.size()) - s.boundary_tp;

  std::set<Span> gold_spans;
  std::size_t prev = 0;
  for (std::size_t b : gold_bounds) {
    gold_spans.insert({prev, b});
    prev = b;
  }
  gold_spans.insert({prev, gold.word.size()});
  for (const auto& span : pred.spans) (gold_spans.count(span) ? s.subword_tp : s.subword_fp)++;
  s.subword_fn = static_cast<std::uint32_t>(gold_spans.size()) - s.subword_tp;

  s.n_tokens = static_cast<std::uint32_t>(pred.tokens.size());
  s.single_token = s.n_tokens == 1;
  s.weight = gold.frequency;
  return s;
}

class NoScoreableItems : public DataError {
 public:
  NoScoreableItems() : DataError("no scoreable items") {}
};

struct MetricsBundle {
  double boundary_precision_macro = 0, boundary_recall_macro = 0;
  double subword_precision_micro = 0, subword_recall_micro = 0, subword_f1_micro = 0;
  double subword_precision_macro = 0, subword_recall_macro = 0, subword_f1_macro = 0;
  // Weighted per-item standard deviation of each macro metric.
  double boundary_precision_sd = 0, boundary_recall_sd = 0;
  double subword_precision_sd = 0, subword_recall_sd = 0, subword_f1_sd = 0;
  std::size_t n_items_scored = 0;
  std::size_t n_items_skipped = 0;
  // Micro counts after weighting; exposed for auditing and merge checks.
  std::uint64_t subword_tp = 0, subword_fp = 0, subword_fn = 0;
  std::uint64_t boundary_tp = 0, boundary_fp = 0, boundary_fn = 0;
  EvalConfig config;
};

// Commutative-monoid accumulator behind `aggregate`. Integer counts merge
// exactly; weighted sums merge up to floating-point reassociation.
class Accumulator {
 public:
  explicit Accumulator(EvalConfig config = {}) : config_(std::move(config)) {}

  void add(const ItemScore& s) {
    if (s.single_token && !config_.include_single_token) {
      ++n_skipped_;
      return;
    }
    const std::uint64_t w = config_.frequency_scaling ? static_cast<std::uint64_t>(std::max<std::int64_t>(s.weight, 1)) : 1;
    ++n_scored_;
    weight_sum_ += w;
    if (s.single_token) {
      // full credit: the word is treated as perfectly aligned
      for (std::size_t k = 0; k < kMetrics; ++k) {
        sums_[k] += static_cast<double>(w);
        sq_sums_[k] += static_cast<double>(w);
      }
      subword_tp_ += w * s.n_morphemes();
      return;
    }
    const auto r = ratios(s);
    const double values[kMetrics] = {r.boundary_precision, r.boundary_recall, r.subword_precision, r.subword_recall,
                                     r.subword_f1};
    for (std::size_t k = 0; k < kMetrics; ++k) {
      sums_[k] += static_cast<double>(w) * values[k];
      sq_sums_[k] += static_cast<double>(w) * values[k] * values[k];
    }
    subword_tp_ += w * s.subword_tp;
    subword_fp_ += w * s.subword_fp;
    subword_fn_ += w * s.subword_fn;
    boundary_tp_ += w * s.boundary_tp;
    boundary_fp_ += w * s.boundary_fp;
    boundary_fn_ += w * s.boundary_fn;
  }

  void merge(const Accumulator& o) {
    n_scored_ += o.n_scored_;
    n_skipped_ += o.n_skipped_;
    weight_sum_ += o.weight_sum_;
    for (std::size_t k = 0; k < kMetrics; ++k) {
      sums_[k] += o.sums_[k];
      sq_sums_[k] += o.sq_sums_[k];
    }
    subword_tp_ += o.subword_tp_;
    subword_fp_ += o.subword_fp_;
    subword_fn_ += o.subword_fn_;
    boundary_tp_ += o.boundary_tp_;
    boundary_fp_ += o.boundary_fp_;
    boundary_fn_ += o.boundary_fn_;
  }

  std::size_t n_scored() const noexcept { return n_scored_; }

  MetricsBundle finish() const {
    if (n_scored_ == 0) throw NoScoreableItems();
    MetricsBundle m;
    m.config = config_;
    m.n_items_scored = n_scored_;
    m.n_items_skipped = n_skipped_;
    const double W = static_cast<double>(weight_sum_);
    double mean[kMetrics], sd[kMetrics];
    for (std::size_t k = 0; k < kMetrics; ++k) {
      mean[k] = sums_[k] / W;
      sd[k] = std::sqrt(std::max(0.0, sq_sums_[k] / W - mean[k] * mean[k]));
    }
    m.boundary_precision_macro = mean[0];
    m.boundary_recall_macro = mean[1];
    m.subword_precision_macro = mean[2];
    m.subword_recall_macro = mean[3];
    m.subword_f1_macro = mean[4];
    m.boundary_precision_sd = sd[0];
    m.boundary_recall_sd = sd[1];
    m.subword_precision_sd = sd[2];
    m.subword_recall_sd = sd[3];
    m.subword_f1_sd = sd[4];

    const auto ratio = [](std::uint64_t a, std::uint64_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
    m.subword_precision_micro = ratio(subword_tp_, subword_tp_ + subword_fp_);
    m.subword_recall_micro = ratio(subword_tp_, subword_tp_ + subword_fn_);
    m.subword_f1_micro = f1(m.subword_precision_micro, m.subword_recall_micro);
    m.subword_tp = subword_tp_;
    m.subword_fp = subword_fp_;
    m.subword_fn = subword_fn_;
    m.boundary_tp = boundary_tp_;
    m.boundary_fp = boundary_fp_;
    m.boundary_fn = boundary_fn_;
    return m;
  }

 private:
  static constexpr std::size_t kMetrics = 5;
  EvalConfig config_;
  std::size_t n_scored_ = 0, n_skipped_ = 0;
  std::uint64_t weight_sum_ = 0;
  double sums_[kMetrics] = {};
  double sq_sums_[kMetrics] = {};
  std::uint64_t subword_tp_ = 0, subword_fp_ = 0, subword_fn_ = 0;
  std::uint64_t boundary_tp_ = 0, boundary_fp_ = 0, boundary_fn_ = 0;
};

// Single-token items are dropped or given full credit before any ratio is
// taken, so no per-item denominator is ever zero. Throws NoScoreableItems
// when nothing is left.
inline MetricsBundle aggregate(std::span<const ItemScore> scores, const EvalConfig& config) {
  Accumulator acc(config);
  for (const auto& s : scores) acc.add(s);
  return acc.finish();
}

inline constexpr std::string_view kAbsentFeature = "_absent_";

inline void validate_breakdown_key(const std::string& key) {
  if (key == "upos") return;
  if (key.starts_with("feat:") && key.size() > 5) return;
  throw ConfigError("unknown breakdown key '" + key + "' (expected 'upos' or 'feat:NAME')");
}

inline std::string breakdown_value(const GoldItem& item, const std::string& key) {
  if (key == "upos") return item.upos;
  const auto it = item.feats.find(key.substr(5));
  return it == item.feats.end() ? std::string(kAbsentFeature) : it->second;
}

// Partitions items by UPOS or a feature value and aggregates each cell.
// Cells with nothing to score are omitted.
inline std::map<std::string, MetricsBundle> breakdown(std::span<const GoldItem> items, std::span<const ItemScore> scores,
                                                      const std::string& key, const EvalConfig& config) {
  validate_breakdown_key(key);
  if (items.size() != scores.size()) throw ConfigError("breakdown: items and scores differ in length");
  std::map<std::string, Accumulator> cells;
  for (std::size_t i = 0; i < items.size(); ++i) {
    auto [it, inserted] = cells.try_emplace(breakdown_value(items[i], key), config);
    it->second.add(scores[i]);
  }
  std::map<std::string, MetricsBundle> out;
  for (const auto& [value, acc] : cells)
    if (acc.n_scored() > 0) out.emplace(value, acc.finish());
  return out;
}

struct CompressionMetrics {
  double fertility = 0;
  std::uint64_t corpus_token_count = 0;
};

inline CompressionMetrics compression_metrics(std::span<const ItemScore> scores) {
  if (scores.empty()) throw DataError("compression metrics need at least one item");
  CompressionMetrics c;
  for (const auto& s : scores) c.corpus_token_count += s.n_tokens;
  c.fertility = static_cast<double>(c.corpus_token_count) / static_cast<double>(scores.size());
  return c;
}

enum class AlignmentMetric { boundary_precision, boundary_recall, subword_precision, subword_recall, subword_f1 };

// Per-item alignment score; a single-token item counts as fully aligned.
inline double item_alignment(const ItemScore& s, AlignmentMetric metric) {
  if (s.single_token) return 1.0;
  const auto r = ratios(s);
  switch (metric) {
    case AlignmentMetric::boundary_precision: return r.boundary_precision;
    case AlignmentMetric::boundary_recall: return r.boundary_recall;
    case AlignmentMetric::subword_precision: return r.subword_precision;
    case AlignmentMetric::subword_recall: return r.subword_recall;
    case AlignmentMetric::subword_f1: return r.subword_f1;
  }
  return r.boundary_precision;
}

struct FrequencyCorrelations {
  stats::Correlation frequency_vs_alignment;
  stats::Correlation frequency_vs_tokens;
};

inline FrequencyCorrelations frequency_alignment_correlation(std::span<const ItemScore> scores,
                                                             AlignmentMetric metric = AlignmentMetric::boundary_precision) {
  if (scores.size() < 3) throw DataError("frequency correlation: insufficient data (need at least 3 items)");
  std::vector<double> freq, align, ntok;
  for (const auto& s : scores) {
    freq.push_back(static_cast<double>(s.weight));
    align.push_back(item_alignment(s, metric));
    ntok.push_back(static_cast<double>(s.n_tokens));
  }
  return {stats::spearman(freq, align), stats::spearman(freq, ntok)};
}

}  // namespace morphalign
