#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <future>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "morphalign/error.hpp"

namespace morphalign {

enum class Split { train, dev, test };

inline std::string_view to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "train";
}

inline std::optional<Split> parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "dev") return Split::dev;
  if (s == "test") return Split::test;
  return std::nullopt;
}

using FeatureMap = std::map<std::string, std::string>;

// One syntactic-word row of a CoNLL-U file.
struct UdToken {
  int id = 0;
  std::string form;
  std::string lemma;
  std::string upos;
  std::string xpos = "_";
  FeatureMap feats;
  std::string head = "_";
  std::string deprel = "_";
  std::string deps = "_";
  std::string misc = "_";

  bool operator==(const UdToken&) const = default;
};

struct UdSentence {
  std::string sent_id;
  std::string text;
  bool reconstructed = false;  // text was rebuilt from forms
  Split split = Split::train;
  std::vector<std::pair<std::string, std::string>> comments;  // key, value
  std::vector<UdToken> tokens;

  bool operator==(const UdSentence&) const = default;
};

namespace conllu {

enum class Mode { strict, lenient };

struct ParseResult {
  std::vector<UdSentence> sentences;
  std::size_t skipped_rows = 0;   // malformed rows dropped in lenient mode
  std::vector<ParseError> errors;  // one per skipped row
};

// `A=B|C=D` -> map. `_` and empty give an empty map. Entries without `=`
// keep an empty value.
inline FeatureMap parse_feats(std::string_view s) {
  FeatureMap out;
  if (s.empty() || s == "_") return out;
  std::size_t start = 0;
  while (start <= s.size()) {
    std::size_t bar = s.find('|', start);
    if (bar == std::string_view::npos) bar = s.size();
    const auto item = s.substr(start, bar - start);
    if (!item.empty()) {
      const auto eq = item.find('=');
      if (eq == std::string_view::npos)
        out.emplace(std::string(item), std::string());
      else
        out.emplace(std::string(item.substr(0, eq)), std::string(item.substr(eq + 1)));
    }
    start = bar + 1;
  }
  return out;
}

inline std::string format_feats(const FeatureMap& feats) {
  if (feats.empty()) return "_";
  std::string out;
  for (const auto& [k, v] : feats) {
    if (!out.empty()) out += '|';
    out += k;
    out += '=';
    out += v;
  }
  return out;
}

inline std::string format_token(const UdToken& t) {
  std::string out = std::to_string(t.id);
  for (const std::string* col : {&t.form, &t.lemma, &t.upos, &t.xpos}) {
    out += '\t';
    out += *col;
  }
  out += '\t';
  out += format_feats(t.feats);
  for (const std::string* col : {&t.head, &t.deprel, &t.deps, &t.misc}) {
    out += '\t';
    out += *col;
  }
  return out;
}

inline void write(std::ostream& out, const std::vector<UdSentence>& sentences) {
  for (const auto& s : sentences) {
    for (const auto& [k, v] : s.comments) {
      if (v.empty())
        out << "# " << k << '\n';
      else
        out << "# " << k << " = " << v << '\n';
    }
    for (const auto& t : s.tokens) out << format_token(t) << '\n';
    out << '\n';
  }
}

namespace detail {

inline std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline void finish_sentence(UdSentence& s, std::vector<UdSentence>& out, std::size_t& counter) {
  if (s.tokens.empty()) {
    s = UdSentence{};
    return;
  }
  ++counter;
  if (s.sent_id.empty()) s.sent_id = std::string(to_string(s.split)) + "-" + std::to_string(counter);
  bool has_text = false;
  for (const auto& [k, v] : s.comments) has_text = has_text || k == "text";
  if (!has_text) {
    std::string text;
    for (const auto& t : s.tokens) {
      if (!text.empty()) text += ' ';
      text += t.form;
    }
    s.text = std::move(text);
    s.reconstructed = true;
  }
  out.push_back(std::move(s));
  s = UdSentence{};
}

}  // namespace detail

// Parses CoNLL-U text. Multiword range rows (`1-2`) and empty nodes (`1.1`)
// are skipped; the syntactic words inside a range are kept. In strict mode
// the first malformed row throws ParseError; in lenient mode it is dropped
// and recorded.
inline ParseResult parse(std::istream& in, Mode mode = Mode::strict, Split split = Split::train) {
  ParseResult result;
  UdSentence current;
  current.split = split;
  std::size_t counter = 0;
  std::string line;
  std::size_t line_no = 0;

  const auto reject = [&](std::size_t ln, const std::string& what) {
    ParseError err(ln, what);
    if (mode == Mode::strict) throw err;
    ++result.skipped_rows;
    result.errors.push_back(std::move(err));
  };

  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view(line);
    if (!view.empty() && view.back() == '\r') view.remove_suffix(1);
    if (detail::trim(view).empty()) {
      detail::finish_sentence(current, result.sentences, counter);
      current.split = split;
      continue;
    }
    if (view.front() == '#') {
      auto body = detail::trim(view.substr(1));
      const auto eq = body.find('=');
      std::string key, value;
      if (eq == std::string_view::npos) {
        key = std::string(body);
      } else {
        key = std::string(detail::trim(body.substr(0, eq)));
        value = std::string(detail::trim(body.substr(eq + 1)));
      }
      if (key == "sent_id") current.sent_id = value;
      if (key == "text") current.text = value;
      current.comments.emplace_back(std::move(key), std::move(value));
      continue;
    }
    const auto cols = detail::split_tabs(view);
    if (cols.size() != 10) {
      reject(line_no, "expected 10 tab-separated columns, found " + std::to_string(cols.size()));
      continue;
    }
    const auto id_col = cols[0];
    if (id_col.find('-') != std::string_view::npos || id_col.find('.') != std::string_view::npos) continue;
    int id = 0;
    const auto [ptr, ec] = std::from_chars(id_col.data(), id_col.data() + id_col.size(), id);
    if (ec != std::errc{} || ptr != id_col.data() + id_col.size() || id <= 0) {
      reject(line_no, "invalid word id '" + std::string(id_col) + "'");
      continue;
    }
    if (!current.tokens.empty() && id <= current.tokens.back().id) {
      reject(line_no, "word id " + std::to_string(id) + " is not increasing");
      continue;
    }
    UdToken tok;
    tok.id = id;
    tok.form = std::string(cols[1]);
    tok.lemma = std::string(cols[2]);
    tok.upos = std::string(cols[3]);
    tok.xpos = std::string(cols[4]);
    tok.feats = parse_feats(cols[5]);
    tok.head = std::string(cols[6]);
    tok.deprel = std::string(cols[7]);
    tok.deps = std::string(cols[8]);
    tok.misc = std::string(cols[9]);
    current.tokens.push_back(std::move(tok));
  }
  detail::finish_sentence(current, result.sentences, counter);
  return result;
}

inline ParseResult parse_string(std::string_view text, Mode mode = Mode::strict, Split split = Split::train) {
  std::istringstream in{std::string(text)};
  return parse(in, mode, split);
}

// Split implied by a UD file name (`xx_tb-ud-train.conllu`).
inline std::optional<Split> split_from_filename(std::string_view name) {
  for (Split s : {Split::train, Split::dev, Split::test}) {
    const std::string tag = "-" + std::string(to_string(s)) + ".conllu";
    if (name.size() >= tag.size() && name.substr(name.size() - tag.size()) == tag) return s;
  }
  for (Split s : {Split::train, Split::dev, Split::test}) {
    if (name.find(to_string(s)) != std::string_view::npos) return s;
  }
  return std::nullopt;
}

struct TreebankFile {
  std::filesystem::path path;
  Split split;
};

// `.conllu` files under `dir` whose split is selected, sorted by file name.
inline std::vector<TreebankFile> list_treebank(const std::filesystem::path& dir, const std::set<Split>& splits) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw DataError("empty treebank: '" + dir.string() + "' is not a directory");
  std::vector<TreebankFile> files;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || entry.path().extension() != ".conllu") continue;
    const auto split = split_from_filename(entry.path().filename().string());
    if (split && splits.count(*split)) files.push_back({entry.path(), *split});
  }
  if (files.empty()) throw DataError("empty treebank: no .conllu file for the requested splits in '" + dir.string() + "'");
  std::sort(files.begin(), files.end(),
            [](const TreebankFile& a, const TreebankFile& b) { return a.path.filename() < b.path.filename(); });
  return files;
}

struct TreebankResult {
  std::vector<UdSentence> sentences;
  std::vector<TreebankFile> files;
  std::size_t skipped_rows = 0;
};

// Reads every selected split file. Files parse concurrently; output keeps
// file-name order, then in-file order.
inline TreebankResult read_treebank(const std::filesystem::path& dir, const std::set<Split>& splits,
                                    Mode mode = Mode::strict) {
  TreebankResult out;
  out.files = list_treebank(dir, splits);
  std::vector<std::future<ParseResult>> jobs;
  jobs.reserve(out.files.size());
  for (const auto& f : out.files) {
    jobs.push_back(std::async(std::launch::async, [f, mode] {
      std::ifstream in(f.path, std::ios::binary);
      if (!in) throw DataError("cannot open '" + f.path.string() + "'");
      try {
        return parse(in, mode, f.split);
      } catch (const ParseError& e) {
        throw DataError(f.path.filename().string() + ": " + e.what());
      }
    }));
  }
  for (auto& job : jobs) {
    auto r = job.get();
    out.skipped_rows += r.skipped_rows;
    for (auto& s : r.sentences) out.sentences.push_back(std::move(s));
  }
  return out;
}

}  // namespace conllu
}  // namespace morphalign
