#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "morphalign/error.hpp"
#include "morphalign/utf8.hpp"

namespace morphalign {

enum class TokenizerKind { byte_bpe, wordpiece, pretokenized };
enum class WordBegin { gpt2_byte_space, sentencepiece_underscore, none };
enum class UnknownPolicy { residue, fail };

inline std::string_view to_string(TokenizerKind k) {
  switch (k) {
    case TokenizerKind::byte_bpe: return "byte_bpe";
    case TokenizerKind::wordpiece: return "wordpiece";
    case TokenizerKind::pretokenized: return "pretokenized";
  }
  return "byte_bpe";
}

inline std::string_view to_string(WordBegin w) {
  switch (w) {
    case WordBegin::gpt2_byte_space: return "gpt2_byte_space";
    case WordBegin::sentencepiece_underscore: return "sentencepiece_underscore";
    case WordBegin::none: return "none";
  }
  return "none";
}

inline constexpr std::string_view kSentencePieceMarker = "\xE2\x96\x81";  // U+2581
inline constexpr std::string_view kGpt2SpaceSymbol = "\xC4\xA0";          // U+0120

struct TokenizerSpec {
  TokenizerKind kind = TokenizerKind::byte_bpe;
  std::string name;
  std::unordered_map<std::string, int> vocabulary;
  std::vector<std::pair<std::string, std::string>> merges;  // in rank order
  std::string continuation_marker = "##";
  std::string unknown_token = "[UNK]";
  WordBegin word_begin = WordBegin::none;
  UnknownPolicy unknown_policy = UnknownPolicy::residue;
};

// Byte spans are half-open intervals over the UTF-8 bytes of `word`.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;
  bool operator==(const Span&) const = default;
  auto operator<=>(const Span&) const = default;
};

struct TokenizationResult {
  std::string word;
  std::vector<std::string> tokens;
  std::vector<Span> spans;
  std::vector<std::size_t> boundaries;  // internal byte offsets

  bool operator==(const TokenizationResult&) const = default;
};

class TokenizerError : public DataError {
 public:
  using DataError::DataError;
};

// Checks that spans tile [0, word.size()] and match tokens in arity, then
// fills the boundary set. Throws TokenizerError naming the violation.
inline TokenizationResult make_result(std::string word, std::vector<std::string> tokens, std::vector<Span> spans) {
  if (tokens.size() != spans.size())
    throw TokenizerError("arity mismatch: " + std::to_string(tokens.size()) + " tokens but " +
                         std::to_string(spans.size()) + " spans");
  if (spans.empty()) throw TokenizerError("no tokens for word '" + word + "'");
  std::size_t expected = 0;
  for (const auto& s : spans) {
    if (s.begin != expected)
      throw TokenizerError((s.begin > expected ? "gap" : "overlap") + std::string(" at byte ") +
                           std::to_string(expected) + " in '" + word + "'");
    if (s.end <= s.begin) throw TokenizerError("empty span at byte " + std::to_string(s.begin));
    expected = s.end;
  }
  if (expected != word.size())
    throw TokenizerError("spans end at byte " + std::to_string(expected) + " but word has " +
                         std::to_string(word.size()) + " bytes");
  TokenizationResult r;
  r.word = std::move(word);
  r.tokens = std::move(tokens);
  r.spans = std::move(spans);
  for (std::size_t i = 0; i + 1 < r.spans.size(); ++i) r.boundaries.push_back(r.spans[i].end);
  return r;
}

namespace detail {

inline std::pair<std::string, std::string> parse_merge_line(std::string_view line) {
  const auto sp = line.find(' ');
  if (sp == std::string_view::npos || sp == 0 || sp + 1 >= line.size())
    throw TokenizerError("malformed merge rule '" + std::string(line) + "'");
  return {std::string(line.substr(0, sp)), std::string(line.substr(sp + 1))};
}

inline WordBegin detect_word_begin(const std::unordered_map<std::string, int>& vocab) {
  std::size_t gpt2 = 0, sp = 0;
  for (const auto& [tok, id] : vocab) {
    if (tok.starts_with(kGpt2SpaceSymbol)) ++gpt2;
    if (tok.starts_with(kSentencePieceMarker)) ++sp;
  }
  if (gpt2 == 0 && sp == 0) return WordBegin::none;
  return gpt2 >= sp ? WordBegin::gpt2_byte_space : WordBegin::sentencepiece_underscore;
}

inline void validate(const TokenizerSpec& spec) {
  if (spec.vocabulary.empty()) throw TokenizerError("tokenizer '" + spec.name + "': missing vocabulary");
  if (spec.kind != TokenizerKind::byte_bpe) return;
  std::size_t rank = 0;
  for (const auto& [a, b] : spec.merges) {
    ++rank;
    for (const std::string* sym : {&a, &b}) {
      if (!spec.vocabulary.count(*sym))
        throw TokenizerError("merge " + std::to_string(rank) + " references '" + *sym + "' absent from vocabulary");
    }
    if (!spec.vocabulary.count(a + b))
      throw TokenizerError("merge " + std::to_string(rank) + " result '" + a + b + "' absent from vocabulary");
  }
}

inline std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw TokenizerError("cannot open '" + p.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
  }
  return out;
}

}  // namespace detail

// Builds a spec from a JSON tokenizer definition. Accepts both the flat
// `{"vocab": {...}, "merges": [...]}` layout and the nested `model` layout
// of tokenizer.json files. Merges may be "a b" strings or [a, b] pairs.
inline TokenizerSpec load_tokenizer_json(const nlohmann::json& root, std::string name) {
  TokenizerSpec spec;
  spec.name = std::move(name);
  const nlohmann::json& model = root.contains("model") && root["model"].is_object() ? root["model"] : root;

  const nlohmann::json* vocab = nullptr;
  for (const char* key : {"vocab", "vocabulary"})
    if (model.contains(key)) vocab = &model[key];
  if (!vocab) throw TokenizerError("tokenizer '" + spec.name + "': missing vocabulary");
  if (vocab->is_object()) {
    for (auto it = vocab->begin(); it != vocab->end(); ++it) spec.vocabulary[it.key()] = it.value().get<int>();
  } else if (vocab->is_array()) {
    int id = 0;
    for (const auto& entry : *vocab) {
      // unigram-style [piece, score] entries or bare strings
      spec.vocabulary[entry.is_array() ? entry.at(0).get<std::string>() : entry.get<std::string>()] = id++;
    }
  } else {
    throw TokenizerError("tokenizer '" + spec.name + "': vocabulary must be an object or array");
  }

  const std::string type = model.value("type", std::string());
  if (model.contains("merges")) {
    for (const auto& m : model["merges"]) {
      if (m.is_string())
        spec.merges.push_back(detail::parse_merge_line(m.get<std::string>()));
      else if (m.is_array() && m.size() == 2)
        spec.merges.emplace_back(m[0].get<std::string>(), m[1].get<std::string>());
      else
        throw TokenizerError("tokenizer '" + spec.name + "': malformed merge entry");
    }
  }

  if (type == "WordPiece" || (type.empty() && !model.contains("merges") && model.contains("continuing_subword_prefix"))) {
    spec.kind = TokenizerKind::wordpiece;
    spec.continuation_marker = model.value("continuing_subword_prefix", std::string("##"));
    spec.unknown_token = model.value("unk_token", std::string("[UNK]"));
    spec.word_begin = WordBegin::none;
  } else if (type == "BPE" || model.contains("merges")) {
    spec.kind = TokenizerKind::byte_bpe;
    spec.word_begin = detail::detect_word_begin(spec.vocabulary);
    if (model.value("byte_fallback", false)) spec.word_begin = WordBegin::sentencepiece_underscore;
  } else {
    // vocabulary only: WordPiece if continuation pieces exist, otherwise BPE without merges
    bool has_marker = false;
    for (const auto& [tok, id] : spec.vocabulary) has_marker = has_marker || tok.starts_with("##");
    spec.kind = has_marker ? TokenizerKind::wordpiece : TokenizerKind::byte_bpe;
    spec.word_begin = has_marker ? WordBegin::none : detail::detect_word_begin(spec.vocabulary);
  }
  if (root.contains("word_begin")) {
    const auto wb = root["word_begin"].get<std::string>();
    if (wb == "gpt2_byte_space") spec.word_begin = WordBegin::gpt2_byte_space;
    else if (wb == "sentencepiece_underscore") spec.word_begin = WordBegin::sentencepiece_underscore;
    else if (wb == "none") spec.word_begin = WordBegin::none;
    else throw TokenizerError("unknown word_begin convention '" + wb + "'");
  }
  detail::validate(spec);
  return spec;
}

// Builds a spec from a vocabulary file and optional merges file. The
// vocabulary is either a JSON object (token -> id) or text with one token
// per line (id = line number). Merge files hold one `A B` pair per line;
// lines starting with `#` are skipped.
inline TokenizerSpec load_tokenizer_files(const std::string& vocab_text, const std::optional<std::string>& merges_text,
                                          std::string name) {
  TokenizerSpec spec;
  spec.name = std::move(name);
  const auto first = vocab_text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && vocab_text[first] == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(vocab_text);
    } catch (const nlohmann::json::parse_error& e) {
      throw TokenizerError("tokenizer '" + spec.name + "': invalid vocabulary JSON: " + e.what());
    }
    for (auto it = j.begin(); it != j.end(); ++it) spec.vocabulary[it.key()] = it.value().get<int>();
  } else {
    int id = 0;
    for (auto& line : detail::lines_of(vocab_text)) {
      if (line.empty()) continue;
      // allow "token<TAB>score" lines
      const auto tab = line.find('\t');
      if (tab != std::string::npos) line.resize(tab);
      spec.vocabulary.emplace(line, id++);
    }
  }
  if (merges_text) {
    spec.kind = TokenizerKind::byte_bpe;
    for (const auto& line : detail::lines_of(*merges_text)) {
      if (line.empty() || line.starts_with("#")) continue;
      spec.merges.push_back(detail::parse_merge_line(line));
    }
    spec.word_begin = detail::detect_word_begin(spec.vocabulary);
  } else {
    bool has_marker = false;
    for (const auto& [tok, id] : spec.vocabulary) has_marker = has_marker || tok.starts_with("##");
    spec.kind = has_marker ? TokenizerKind::wordpiece : TokenizerKind::byte_bpe;
    spec.word_begin = has_marker ? WordBegin::none : detail::detect_word_begin(spec.vocabulary);
  }
  detail::validate(spec);
  return spec;
}

// Loads either a single JSON definition or a vocab + merges pair from disk.
inline TokenizerSpec load_tokenizer(const std::filesystem::path& vocab_or_json,
                                    const std::optional<std::filesystem::path>& merges = std::nullopt,
                                    std::string name = {}) {
  if (name.empty()) name = vocab_or_json.stem().string();
  const std::string text = detail::read_file(vocab_or_json);
  if (!merges && vocab_or_json.extension() == ".json") {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw TokenizerError("tokenizer '" + name + "': invalid JSON: " + e.what());
    }
    // A bare GPT-2 style vocab.json maps strings to integers at the top level.
    const bool bare_vocab = j.is_object() && !j.contains("model") && !j.contains("vocab") && !j.contains("vocabulary");
    if (!bare_vocab) return load_tokenizer_json(j, std::move(name));
  }
  std::optional<std::string> merges_text;
  if (merges) merges_text = detail::read_file(*merges);
  return load_tokenizer_files(text, merges_text, std::move(name));
}

// ---------------------------------------------------------------------------
// Encoding.

namespace detail {

struct Symbol {
  std::string text;  // vocabulary form
  std::size_t begin;  // byte offsets in the marker-prefixed buffer
  std::size_t end;
};

inline std::string byte_token(unsigned char b) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "<0x%02X>", b);
  return buf;
}

// Lowest-rank adjacent pair first; equal ranks resolve to the leftmost pair.
inline void apply_merges(std::vector<Symbol>& symbols, const std::map<std::pair<std::string, std::string>, std::size_t>& ranks) {
  while (symbols.size() > 1) {
    std::size_t best_rank = std::numeric_limits<std::size_t>::max();
    std::size_t best_pos = 0;
    for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
      const auto it = ranks.find({symbols[i].text, symbols[i + 1].text});
      if (it != ranks.end() && it->second < best_rank) {
        best_rank = it->second;
        best_pos = i;
      }
    }
    if (best_rank == std::numeric_limits<std::size_t>::max()) break;
    symbols[best_pos].text += symbols[best_pos + 1].text;
    symbols[best_pos].end = symbols[best_pos + 1].end;
    symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
  }
}

}  // namespace detail

// Immutable, shareable tokenizer. Holds the spec plus the merge-rank index.
class Tokenizer {
 public:
  explicit Tokenizer(TokenizerSpec spec) : spec_(std::move(spec)) {
    detail::validate(spec_);
    for (std::size_t i = 0; i < spec_.merges.size(); ++i) ranks_.emplace(spec_.merges[i], i);
  }

  const TokenizerSpec& spec() const noexcept { return spec_; }
  const std::string& name() const noexcept { return spec_.name; }

  // Tokenizes a bare word. With `leading_space` the convention's word-begin
  // marker is prepended before encoding and removed from the first span, so
  // spans always index the bare word. A token made only of the marker is
  // dropped.
  TokenizationResult tokenize(const std::string& word, bool leading_space) const {
    if (word.empty()) throw TokenizerError("cannot tokenize an empty word");
    switch (spec_.kind) {
      case TokenizerKind::byte_bpe:
        return spec_.word_begin == WordBegin::sentencepiece_underscore ? encode_sentencepiece(word, leading_space)
                                                                       : encode_byte_level(word, leading_space);
      case TokenizerKind::wordpiece: return encode_wordpiece(word);
      case TokenizerKind::pretokenized: break;
    }
    throw TokenizerError("tokenizer '" + spec_.name + "' is pre-tokenized; use ingest_pretokenized");
  }

 private:
  TokenizationResult finish(const std::string& word, std::vector<detail::Symbol> symbols, std::size_t prefix) const {
    std::vector<std::string> tokens;
    std::vector<Span> spans;
    for (auto& s : symbols) {
      const std::size_t b = s.begin > prefix ? s.begin - prefix : 0;
      const std::size_t e = s.end > prefix ? s.end - prefix : 0;
      if (e == b) continue;
      tokens.push_back(std::move(s.text));
      spans.push_back({b, e});
    }
    return make_result(word, std::move(tokens), std::move(spans));
  }

  TokenizationResult encode_byte_level(const std::string& word, bool leading_space) const {
    std::string buffer;
    if (leading_space && spec_.word_begin == WordBegin::gpt2_byte_space) buffer.push_back(' ');
    const std::size_t prefix = buffer.size();
    buffer += word;
    const auto& table = utf8::gpt2_byte_symbols();
    std::vector<detail::Symbol> symbols;
    symbols.reserve(buffer.size());
    for (std::size_t i = 0; i < buffer.size(); ++i)
      symbols.push_back({table[static_cast<unsigned char>(buffer[i])], i, i + 1});
    detail::apply_merges(symbols, ranks_);
    return finish(word, std::move(symbols), prefix);
  }

  // Character-level BPE over raw UTF-8 with `▁` as the word-begin marker.
  // Symbols left outside the vocabulary fall back to `<0xNN>` byte tokens.
  TokenizationResult encode_sentencepiece(const std::string& word, bool leading_space) const {
    std::string buffer;
    if (leading_space) buffer += kSentencePieceMarker;
    const std::size_t prefix = buffer.size();
    buffer += word;
    const auto offsets = utf8::char_offsets(buffer);
    std::vector<detail::Symbol> symbols;
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i)
      symbols.push_back({buffer.substr(offsets[i], offsets[i + 1] - offsets[i]), offsets[i], offsets[i + 1]});
    detail::apply_merges(symbols, ranks_);
    std::vector<detail::Symbol> out;
    for (auto& s : symbols) {
      if (spec_.vocabulary.count(s.text)) {
        out.push_back(std::move(s));
        continue;
      }
      for (std::size_t k = s.begin; k < s.end; ++k)
        out.push_back({detail::byte_token(static_cast<unsigned char>(buffer[k])), k, k + 1});
    }
    return finish(word, std::move(out), prefix);
  }

  // Greedy longest-match-first over character boundaries.
  TokenizationResult encode_wordpiece(const std::string& word) const {
    const auto offsets = utf8::char_offsets(word);
    const std::size_t n = offsets.size() - 1;
    std::vector<std::string> tokens;
    std::vector<Span> spans;
    std::size_t start = 0;
    while (start < n) {
      std::size_t end = n;
      std::optional<std::string> match;
      for (; end > start; --end) {
        std::string piece = word.substr(offsets[start], offsets[end] - offsets[start]);
        if (start > 0) piece = spec_.continuation_marker + piece;
        if (spec_.vocabulary.count(piece)) {
          match = std::move(piece);
          break;
        }
      }
      if (!match) {
        if (spec_.unknown_policy == UnknownPolicy::fail)
          throw TokenizerError("wordpiece tokenizer '" + spec_.name + "' cannot cover '" + word + "' from byte " +
                               std::to_string(offsets[start]));
        tokens.push_back(spec_.unknown_token);
        spans.push_back({offsets[start], word.size()});
        break;
      }
      tokens.push_back(std::move(*match));
      spans.push_back({offsets[start], offsets[end]});
      start = end;
    }
    return make_result(word, std::move(tokens), std::move(spans));
  }

  TokenizerSpec spec_;
  std::map<std::pair<std::string, std::string>, std::size_t> ranks_;
};

inline TokenizationResult tokenize_word(const TokenizerSpec& spec, const std::string& word, bool leading_space) {
  return Tokenizer(spec).tokenize(word, leading_space);
}

// ---------------------------------------------------------------------------
// Pre-tokenized input: JSONL `{key, word, tokens, spans}` records.

inline std::map<std::string, TokenizationResult> ingest_pretokenized(std::istream& in) {
  std::map<std::string, TokenizationResult> out;
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
    std::string key, word;
    std::vector<std::string> tokens;
    std::vector<Span> spans;
    try {
      key = j.at("key").get<std::string>();
      word = j.at("word").get<std::string>();
      tokens = j.at("tokens").get<std::vector<std::string>>();
      for (const auto& s : j.at("spans")) {
        if (!s.is_array() || s.size() != 2) throw RecordError(record, "spans", "each span must be [start, end]");
        spans.push_back({s[0].get<std::size_t>(), s[1].get<std::size_t>()});
      }
    } catch (const nlohmann::json::exception& e) {
      throw RecordError(record, "<record>", std::string("schema violation: ") + e.what());
    }
    try {
      auto result = make_result(std::move(word), std::move(tokens), std::move(spans));
      if (!out.emplace(key, std::move(result)).second) throw RecordError(record, "key", "duplicate key '" + key + "'");
    } catch (const TokenizerError& e) {
      throw RecordError(record, "spans", e.what());
    }
  }
  return out;
}

}  // namespace morphalign
