#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <variant>
#include <vector>

#include <json.hpp>

#include "morphalign/conllu.hpp"
#include "morphalign/error.hpp"
#include "morphalign/utf8.hpp"

namespace morphalign {

enum class RejectReason {
  missing_annotation,  // `_` or empty form/lemma
  single_morpheme,
  lemma_not_substring,
  identical_after_normalization,
};

inline constexpr RejectReason kAllRejectReasons[] = {
    RejectReason::missing_annotation, RejectReason::single_morpheme, RejectReason::lemma_not_substring,
    RejectReason::identical_after_normalization};

inline std::string_view to_string(RejectReason r) {
  switch (r) {
    case RejectReason::missing_annotation: return "missing_annotation";
    case RejectReason::single_morpheme: return "single_morpheme";
    case RejectReason::lemma_not_substring: return "lemma_not_substring";
    case RejectReason::identical_after_normalization: return "identical_after_normalization";
  }
  return "unknown";
}

struct MatchPolicy {
  bool case_insensitive = false;
};

// Accepted gold segmentation: optional prefix, stem, optional suffix.
struct Segmentation {
  std::vector<std::string> morphemes;
  std::size_t stem_index = 0;
  std::vector<std::size_t> boundaries;  // character offsets strictly inside the word
  bool multiple_stem_matches = false;   // lemma occurs more than once; leftmost taken

  bool operator==(const Segmentation&) const = default;
};

using Proposal = std::variant<Segmentation, RejectReason>;

// Segments `word` around the leftmost occurrence of the whole lemma.
// Matching runs on characters, so a stem never starts or ends inside a
// multi-byte character. Under a case-insensitive policy the match is found
// on lowercased text but morphemes keep the word's original spelling.
inline Proposal propose_segmentation(std::string_view word, std::string_view lemma, MatchPolicy policy = {}) {
  if (word.empty() || lemma.empty() || word == "_" || lemma == "_") return RejectReason::missing_annotation;
  if (word == lemma) return RejectReason::single_morpheme;

  const std::string w = policy.case_insensitive ? utf8::to_lower(word) : std::string(word);
  const std::string l = policy.case_insensitive ? utf8::to_lower(lemma) : std::string(lemma);
  if (w == l) return RejectReason::identical_after_normalization;

  const auto wc = utf8::split_chars(w);
  const auto lc = utf8::split_chars(l);
  if (lc.size() >= wc.size()) return RejectReason::lemma_not_substring;

  std::optional<std::size_t> first;
  bool multiple = false;
  for (std::size_t i = 0; i + lc.size() <= wc.size(); ++i) {
    if (std::equal(lc.begin(), lc.end(), wc.begin() + static_cast<std::ptrdiff_t>(i))) {
      if (first) {
        multiple = true;
        break;
      }
      first = i;
    }
  }
  if (!first) return RejectReason::lemma_not_substring;

  // Slice the original word; lowercasing preserves per-character byte length.
  const auto offsets = utf8::char_offsets(word);
  const std::size_t stem_begin = *first;
  const std::size_t stem_end = *first + lc.size();
  const std::size_t n_chars = offsets.size() - 1;

  Segmentation seg;
  seg.multiple_stem_matches = multiple;
  if (stem_begin > 0) {
    seg.morphemes.emplace_back(word.substr(0, offsets[stem_begin]));
    seg.boundaries.push_back(stem_begin);
  }
  seg.stem_index = seg.morphemes.size();
  seg.morphemes.emplace_back(word.substr(offsets[stem_begin], offsets[stem_end] - offsets[stem_begin]));
  if (stem_end < n_chars) {
    seg.boundaries.push_back(stem_end);
    seg.morphemes.emplace_back(word.substr(offsets[stem_end]));
  }
  return seg;
}

struct GoldItem {
  std::string language;  // ISO 639-3
  std::string script;    // ISO 15924
  std::string treebank;
  Split split = Split::train;
  std::string sent_id;
  int word_index = 0;
  std::string word;
  std::string lemma;
  std::vector<std::string> morphemes;
  std::vector<std::size_t> boundaries;  // character offsets
  std::string upos;
  FeatureMap feats;
  std::string sentence;
  bool reconstructed = false;
  std::int64_t frequency = 1;

  bool operator==(const GoldItem&) const = default;

  // Join key for pre-tokenized input.
  std::string occurrence_key() const { return sent_id + "#" + std::to_string(word_index); }
};

struct BuildStats {
  std::size_t candidates = 0;
  std::size_t accepted = 0;
  std::map<std::string, std::size_t> rejected;  // reason -> count
  std::size_t multiple_stem_matches = 0;

  bool operator==(const BuildStats&) const = default;

  std::size_t total_rejected() const {
    std::size_t n = 0;
    for (const auto& [k, v] : rejected) n += v;
    return n;
  }
};

struct LanguageDataset {
  std::string language;
  std::string script;
  std::string treebank;
  std::vector<GoldItem> items;
  BuildStats stats;
  std::size_t min_items = 100;
  bool scoreable = false;

  bool operator==(const LanguageDataset&) const = default;
};

struct LanguageInfo {
  std::string language;
  std::string script;
  std::string treebank;
};

enum class FrequencyMode { wordform, lemma };

struct BuildOptions {
  MatchPolicy policy;
  std::size_t min_items = 100;
  FrequencyMode frequency_mode = FrequencyMode::wordform;
};

// One item per accepted token occurrence. Frequencies are counted over all
// tokens of the supplied sentences before any filtering.
inline LanguageDataset build_dataset(const std::vector<UdSentence>& sentences, const LanguageInfo& info,
                                     const BuildOptions& options = {}) {
  LanguageDataset ds;
  ds.language = info.language;
  ds.script = info.script;
  ds.treebank = info.treebank;
  ds.min_items = options.min_items;
  for (RejectReason r : kAllRejectReasons) ds.stats.rejected[std::string(to_string(r))] = 0;

  std::unordered_map<std::string, std::int64_t> counts;
  for (const auto& s : sentences)
    for (const auto& t : s.tokens)
      ++counts[options.frequency_mode == FrequencyMode::wordform ? t.form : t.lemma];

  for (const auto& s : sentences) {
    for (const auto& t : s.tokens) {
      ++ds.stats.candidates;
      auto proposal = propose_segmentation(t.form, t.lemma, options.policy);
      if (const auto* reason = std::get_if<RejectReason>(&proposal)) {
        ++ds.stats.rejected[std::string(to_string(*reason))];
        continue;
      }
      auto& seg = std::get<Segmentation>(proposal);
      ++ds.stats.accepted;
      if (seg.multiple_stem_matches) ++ds.stats.multiple_stem_matches;

      GoldItem item;
      item.language = info.language;
      item.script = info.script;
      item.treebank = info.treebank;
      item.split = s.split;
      item.sent_id = s.sent_id;
      item.word_index = t.id;
      item.word = t.form;
      item.lemma = t.lemma;
      item.morphemes = std::move(seg.morphemes);
      item.boundaries = std::move(seg.boundaries);
      item.upos = t.upos;
      item.feats = t.feats;
      item.sentence = s.text;
      item.reconstructed = s.reconstructed;
      item.frequency = counts[options.frequency_mode == FrequencyMode::wordform ? t.form : t.lemma];
      ds.items.push_back(std::move(item));
    }
  }
  ds.scoreable = ds.items.size() >= options.min_items;
  return ds;
}

// ---------------------------------------------------------------------------
// JSONL dataset format and stats sidecar.

inline nlohmann::ordered_json item_to_json(const GoldItem& it) {
  nlohmann::ordered_json j;
  j["language"] = it.language;
  j["script"] = it.script;
  j["treebank"] = it.treebank;
  j["split"] = to_string(it.split);
  j["sent_id"] = it.sent_id;
  j["word_index"] = it.word_index;
  j["word"] = it.word;
  j["lemma"] = it.lemma;
  j["morphemes"] = it.morphemes;
  j["boundaries"] = it.boundaries;
  j["upos"] = it.upos;
  j["feats"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : it.feats) j["feats"][k] = v;
  j["sentence"] = it.sentence;
  j["reconstructed"] = it.reconstructed;
  j["frequency"] = it.frequency;
  return j;
}

namespace detail {

template <class T>
T require(const nlohmann::json& j, const char* field, std::size_t record) {
  const auto it = j.find(field);
  if (it == j.end()) throw RecordError(record, field, "missing");
  try {
    return it->get<T>();
  } catch (const nlohmann::json::exception&) {
    throw RecordError(record, field, "wrong type");
  }
}

}  // namespace detail

// Parses and validates one dataset record (1-based `record` for messages).
inline GoldItem item_from_json(const nlohmann::json& j, std::size_t record) {
  using detail::require;
  if (!j.is_object()) throw RecordError(record, "<record>", "not a JSON object");
  GoldItem it;
  it.language = require<std::string>(j, "language", record);
  it.script = require<std::string>(j, "script", record);
  it.treebank = require<std::string>(j, "treebank", record);
  const auto split = parse_split(require<std::string>(j, "split", record));
  if (!split) throw RecordError(record, "split", "must be train, dev or test");
  it.split = *split;
  it.sent_id = require<std::string>(j, "sent_id", record);
  it.word_index = require<int>(j, "word_index", record);
  it.word = require<std::string>(j, "word", record);
  it.lemma = require<std::string>(j, "lemma", record);
  it.morphemes = require<std::vector<std::string>>(j, "morphemes", record);
  it.boundaries = require<std::vector<std::size_t>>(j, "boundaries", record);
  it.upos = require<std::string>(j, "upos", record);
  it.feats = require<FeatureMap>(j, "feats", record);
  it.sentence = require<std::string>(j, "sentence", record);
  it.reconstructed = require<bool>(j, "reconstructed", record);
  it.frequency = require<std::int64_t>(j, "frequency", record);

  if (it.word.empty()) throw RecordError(record, "word", "empty");
  if (it.lemma.empty()) throw RecordError(record, "lemma", "empty");
  if (it.frequency < 1) throw RecordError(record, "frequency", "must be positive");
  if (it.morphemes.size() < 2 || it.morphemes.size() > 3)
    throw RecordError(record, "morphemes", "expected 2 or 3 morphemes");
  std::string joined;
  std::vector<std::size_t> cumulative;
  for (const auto& m : it.morphemes) {
    if (m.empty()) throw RecordError(record, "morphemes", "empty morpheme");
    joined += m;
    cumulative.push_back(utf8::char_length(joined));
  }
  if (joined != it.word) throw RecordError(record, "morphemes", "do not concatenate to word");
  cumulative.pop_back();
  if (cumulative != it.boundaries) throw RecordError(record, "boundaries", "inconsistent with morphemes");
  return it;
}

// Writes one JSON object per item. Returns the number of bytes written.
inline std::size_t write_dataset(const LanguageDataset& ds, std::ostream& out) {
  std::size_t bytes = 0;
  for (const auto& it : ds.items) {
    const std::string line = item_to_json(it).dump() + "\n";
    out << line;
    bytes += line.size();
  }
  return bytes;
}

inline nlohmann::ordered_json stats_to_json(const LanguageDataset& ds) {
  nlohmann::ordered_json j;
  j["language"] = ds.language;
  j["script"] = ds.script;
  j["treebank"] = ds.treebank;
  j["n_items"] = ds.items.size();
  j["min_items"] = ds.min_items;
  j["scoreable"] = ds.scoreable;
  j["candidates"] = ds.stats.candidates;
  j["accepted"] = ds.stats.accepted;
  j["rejected"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : ds.stats.rejected) j["rejected"][k] = v;
  j["multiple_stem_matches"] = ds.stats.multiple_stem_matches;
  return j;
}

inline std::size_t write_stats(const LanguageDataset& ds, std::ostream& out) {
  const std::string text = stats_to_json(ds).dump(2) + "\n";
  out << text;
  return text.size();
}

// Reads a dataset JSONL stream and, if given, its stats sidecar. Without a
// sidecar the language metadata comes from the first record and the
// threshold defaults to 100.
inline LanguageDataset read_dataset(std::istream& in, std::istream* stats = nullptr) {
  LanguageDataset ds;
  std::string line;
  std::size_t record = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    ++record;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw RecordError(record, "<record>", std::string("invalid JSON: ") + e.what());
    }
    ds.items.push_back(item_from_json(j, record));
  }
  if (stats) {
    nlohmann::json s;
    try {
      s = nlohmann::json::parse(*stats);
      ds.language = s.at("language").get<std::string>();
      ds.script = s.at("script").get<std::string>();
      ds.treebank = s.at("treebank").get<std::string>();
      ds.min_items = s.at("min_items").get<std::size_t>();
      ds.scoreable = s.at("scoreable").get<bool>();
      ds.stats.candidates = s.at("candidates").get<std::size_t>();
      ds.stats.accepted = s.at("accepted").get<std::size_t>();
      ds.stats.rejected = s.at("rejected").get<std::map<std::string, std::size_t>>();
      ds.stats.multiple_stem_matches = s.at("multiple_stem_matches").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("invalid stats sidecar: ") + e.what());
    }
  } else {
    if (!ds.items.empty()) {
      ds.language = ds.items.front().language;
      ds.script = ds.items.front().script;
      ds.treebank = ds.items.front().treebank;
    }
    ds.stats.accepted = ds.items.size();
    ds.stats.candidates = ds.items.size();
    ds.scoreable = ds.items.size() >= ds.min_items;
  }
  return ds;
}

// Collapses occurrences to one item per (word, segmentation), keeping the
// first occurrence's context. Frequencies already hold treebank counts.
inline std::vector<GoldItem> dedupe_types(const std::vector<GoldItem>& items) {
  std::vector<GoldItem> out;
  std::map<std::pair<std::string, std::vector<std::string>>, bool> seen;
  for (const auto& it : items) {
    if (seen.emplace(std::make_pair(it.word, it.morphemes), true).second) out.push_back(it);
  }
  return out;
}

}  // namespace morphalign
