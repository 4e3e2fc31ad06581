#pragma once

// Pipeline commands behind the `morphalign` CLI. Each command takes a
// plain options struct, writes its outputs, prints progress to `log` and
// returns a process exit code.

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <iterator>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "morphalign/conllu.hpp"
#include "morphalign/csv.hpp"
#include "morphalign/error.hpp"
#include "morphalign/gold.hpp"
#include "morphalign/report.hpp"
#include "morphalign/scoring.hpp"
#include "morphalign/stats.hpp"
#include "morphalign/tokenizer.hpp"

namespace morphalign::cli {

namespace fs = std::filesystem;
using report::Json;

enum ExitCode : int {
  kOk = 0,
  kUsage = 2,
  kDataError = 3,
  kBelowThreshold = 4,
};

inline std::string join_args(const std::vector<std::string>& args) {
  std::string out;
  for (const auto& a : args) {
    if (!out.empty()) out += ' ';
    out += a;
  }
  return out;
}

inline std::string sanitize(std::string_view s) {
  std::string out;
  for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '.' || c == '-') ? c : '-';
  return out.empty() ? "unnamed" : out;
}

// Stats sidecar path for a dataset file: `x.jsonl` -> `x.stats.json`.
inline fs::path stats_path_for(const fs::path& dataset) {
  fs::path p = dataset;
  if (p.extension() == ".jsonl") return p.replace_extension(".stats.json");
  return fs::path(dataset.string() + ".stats.json");
}

inline void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

inline std::size_t default_workers() {
  if (const char* env = std::getenv("MORPHALIGN_WORKERS")) {
    const long n = std::strtol(env, nullptr, 10);
    if (n > 0) return static_cast<std::size_t>(n);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on at most `workers` threads.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::jthread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  pool.clear();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// build

struct BuildArgs {
  fs::path treebank;
  std::string language;
  std::string script;
  fs::path out;
  std::set<Split> splits = {Split::train, Split::dev, Split::test};
  bool case_insensitive = false;
  std::size_t min_items = 100;
  std::string treebank_name;  // defaults to the directory name
  FrequencyMode frequency_mode = FrequencyMode::wordform;
  bool lenient = false;
};

inline int cmd_build(const BuildArgs& args, std::ostream& log = std::cerr) {
  const auto tb = conllu::read_treebank(args.treebank, args.splits,
                                        args.lenient ? conllu::Mode::lenient : conllu::Mode::strict);
  LanguageInfo info{args.language, args.script,
                    args.treebank_name.empty() ? fs::absolute(args.treebank).lexically_normal().filename().string()
                                               : args.treebank_name};
  if (info.treebank.empty()) info.treebank = fs::absolute(args.treebank).parent_path().filename().string();
  BuildOptions opts;
  opts.policy.case_insensitive = args.case_insensitive;
  opts.min_items = args.min_items;
  opts.frequency_mode = args.frequency_mode;
  const auto ds = build_dataset(tb.sentences, info, opts);

  std::ostringstream items, stats;
  write_dataset(ds, items);
  write_stats(ds, stats);
  write_text(args.out, items.str());
  write_text(stats_path_for(args.out), stats.str());

  log << "build: " << ds.language << " (" << info.treebank << "): " << tb.files.size() << " file(s), "
      << tb.sentences.size() << " sentences, " << ds.stats.candidates << " candidates, " << ds.items.size()
      << " items";
  if (tb.skipped_rows) log << ", " << tb.skipped_rows << " malformed rows skipped";
  log << (ds.scoreable ? "" : " (below threshold of " + std::to_string(ds.min_items) + ")") << "\n";
  return ds.scoreable ? kOk : kBelowThreshold;
}

// ---------------------------------------------------------------------------
// score

struct TokenizerArg {
  std::string name;
  fs::path vocab_or_json;
  std::optional<fs::path> merges;
};

// `[NAME=]PATH[,MERGES]`
inline TokenizerArg parse_tokenizer_arg(const std::string& s) {
  TokenizerArg a;
  std::string rest = s;
  const auto eq = rest.find('=');
  if (eq != std::string::npos) {
    a.name = rest.substr(0, eq);
    rest = rest.substr(eq + 1);
  }
  const auto comma = rest.find(',');
  if (comma != std::string::npos) {
    a.vocab_or_json = rest.substr(0, comma);
    a.merges = fs::path(rest.substr(comma + 1));
  } else {
    a.vocab_or_json = rest;
  }
  if (a.vocab_or_json.empty()) throw ConfigError("empty tokenizer path in '" + s + "'");
  if (a.name.empty()) a.name = a.vocab_or_json.stem().string();
  return a;
}

struct ScoreArgs {
  std::vector<fs::path> datasets;
  std::vector<std::string> tokenizers;    // `[NAME=]PATH[,MERGES]`
  std::vector<std::string> pretokenized;  // `[NAME=]PATH`
  fs::path out;
  bool grid = false;
  bool by_pos = false;
  std::vector<std::string> by_feats;
  ContextMode context = ContextMode::leading_space;
  bool dedupe_types = true;
  bool emit_items = false;
  std::size_t workers = 0;  // 0: MORPHALIGN_WORKERS or hardware concurrency
  std::vector<std::string> command_line;
};

struct ScoredCell {
  std::string language;
  std::string tokenizer;
  std::string context;  // leading_space, bare or pretokenized
  std::string file_tag;
  std::vector<GoldItem> items;
  std::vector<ItemScore> scores;
  std::vector<TokenizationResult> tokenizations;
  std::size_t missing = 0;  // pre-tokenized items with no record
};

struct ScoreOutput {
  std::vector<fs::path> reports;
  fs::path csv;
  std::size_t empty_cells = 0;
};

namespace detail {

inline Json item_json(const GoldItem& g, const TokenizationResult& t, const ItemScore& s) {
  Json j;
  j["key"] = g.occurrence_key();
  j["word"] = g.word;
  j["morphemes"] = g.morphemes;
  j["tokens"] = t.tokens;
  Json spans = Json::array();
  for (const auto& sp : t.spans) spans.push_back({sp.begin, sp.end});
  j["spans"] = spans;
  j["frequency"] = g.frequency;
  j["boundary"] = {s.boundary_tp, s.boundary_fp, s.boundary_fn};
  j["subword"] = {s.subword_tp, s.subword_fp, s.subword_fn};
  return j;
}

}  // namespace detail

inline ScoreOutput run_score(const ScoreArgs& args, std::ostream& log = std::cerr) {
  if (args.datasets.empty()) throw ConfigError("score: at least one --dataset is required");
  if (args.tokenizers.empty() && args.pretokenized.empty())
    throw ConfigError("score: at least one --tokenizer or --pretokenized is required");
  for (const auto& f : args.by_feats) validate_breakdown_key("feat:" + f);

  report::RunManifest manifest;
  manifest.command_line = join_args(args.command_line);

  struct Loaded {
    LanguageDataset ds;
    std::vector<GoldItem> items;
  };
  std::vector<Loaded> datasets;
  for (const auto& path : args.datasets) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read dataset '" + path.string() + "'");
    const auto sidecar = stats_path_for(path);
    std::ifstream stats_in(sidecar, std::ios::binary);
    Loaded l;
    try {
      l.ds = read_dataset(in, stats_in ? &stats_in : nullptr);
    } catch (const Error& e) {
      throw DataError(path.string() + ": " + e.what());
    }
    if (l.ds.language.empty()) l.ds.language = path.stem().string();
    l.items = args.dedupe_types ? dedupe_types(l.ds.items) : l.ds.items;
    manifest.input_digests[path.string()] = report::file_sha256(path);
    manifest.item_counts[l.ds.language] += l.items.size();
    datasets.push_back(std::move(l));
  }

  std::vector<Tokenizer> tokenizers;
  for (const auto& spec : args.tokenizers) {
    const auto a = parse_tokenizer_arg(spec);
    tokenizers.emplace_back(load_tokenizer(a.vocab_or_json, a.merges, a.name));
    manifest.input_digests[a.vocab_or_json.string()] = report::file_sha256(a.vocab_or_json);
    if (a.merges) manifest.input_digests[a.merges->string()] = report::file_sha256(*a.merges);
  }
  std::vector<std::pair<std::string, std::map<std::string, TokenizationResult>>> pretok;
  for (const auto& spec : args.pretokenized) {
    const auto a = parse_tokenizer_arg(spec);
    std::ifstream in(a.vocab_or_json, std::ios::binary);
    if (!in) throw DataError("cannot read pre-tokenized file '" + a.vocab_or_json.string() + "'");
    try {
      pretok.emplace_back(a.name, ingest_pretokenized(in));
    } catch (const Error& e) {
      throw DataError(a.vocab_or_json.string() + ": " + e.what());
    }
    manifest.input_digests[a.vocab_or_json.string()] = report::file_sha256(a.vocab_or_json);
  }

  std::vector<ContextMode> contexts;
  if (args.context == ContextMode::both)
    contexts = {ContextMode::leading_space, ContextMode::bare};
  else
    contexts = {args.context};

  std::vector<EvalConfig> conditions;
  std::vector<std::string> breakdown_keys;
  if (args.by_pos) breakdown_keys.push_back("upos");
  for (const auto& f : args.by_feats) breakdown_keys.push_back("feat:" + f);
  const std::vector<std::pair<bool, bool>> grid = {{true, true}, {true, false}, {false, true}, {false, false}};
  for (const auto& [fs_on, ist_on] : args.grid ? grid : std::vector<std::pair<bool, bool>>{{true, false}}) {
    EvalConfig c;
    c.frequency_scaling = fs_on;
    c.include_single_token = ist_on;
    c.breakdown_keys = breakdown_keys;
    c.context_mode = args.context;
    conditions.push_back(c);
  }

  Json run_config;
  run_config["conditions"] = Json::array();
  for (const auto& c : conditions) run_config["conditions"].push_back(c.condition());
  run_config["context"] = to_string(args.context);
  run_config["breakdown_keys"] = breakdown_keys;
  run_config["dedupe_types"] = args.dedupe_types;
  run_config["emit_items"] = args.emit_items;
  run_config["position_space"] = "utf8_bytes";
  manifest.config_hash = report::config_hash(run_config);
  manifest.timestamp = report::timestamp();

  // One cell per dataset x tokenizer x context.
  std::vector<ScoredCell> cells;
  struct CellSource {
    std::size_t dataset;
    const Tokenizer* tokenizer;
    const std::map<std::string, TokenizationResult>* pretokenized;
    bool leading_space;
  };
  std::vector<CellSource> sources;
  for (std::size_t d = 0; d < datasets.size(); ++d) {
    for (const auto& tok : tokenizers) {
      for (ContextMode ctx : contexts) {
        ScoredCell c;
        c.language = datasets[d].ds.language;
        c.tokenizer = tok.name();
        c.context = std::string(to_string(ctx));
        c.file_tag = sanitize(tok.name()) + (args.context == ContextMode::both ? "-" + sanitize(c.context) : "");
        cells.push_back(std::move(c));
        sources.push_back({d, &tok, nullptr, ctx == ContextMode::leading_space});
      }
    }
    for (const auto& [name, records] : pretok) {
      ScoredCell c;
      c.language = datasets[d].ds.language;
      c.tokenizer = name;
      c.context = "pretokenized";
      c.file_tag = sanitize(name);
      cells.push_back(std::move(c));
      sources.push_back({d, nullptr, &records, false});
    }
  }

  parallel_for(cells.size(), args.workers ? args.workers : default_workers(), [&](std::size_t i) {
    auto& cell = cells[i];
    const auto& src = sources[i];
    for (const auto& item : datasets[src.dataset].items) {
      TokenizationResult tr;
      if (src.tokenizer) {
        tr = src.tokenizer->tokenize(item.word, src.leading_space);
      } else {
        auto it = src.pretokenized->find(item.occurrence_key());
        if (it == src.pretokenized->end()) it = src.pretokenized->find(item.word);
        if (it == src.pretokenized->end() || it->second.word != item.word) {
          ++cell.missing;
          continue;
        }
        tr = it->second;
      }
      cell.scores.push_back(score_item(item, tr));
      cell.items.push_back(item);
      cell.tokenizations.push_back(std::move(tr));
    }
  });

  std::vector<std::pair<std::string, std::vector<std::string>>> csv_rows;  // sort key, row
  std::vector<std::pair<fs::path, std::string>> files;
  std::size_t empty_cells = 0;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    const auto& cell = cells[i];
    const auto& ds = datasets[sources[i].dataset].ds;
    if (cell.missing)
      log << "score: " << cell.language << "/" << cell.tokenizer << ": " << cell.missing
          << " item(s) without a pre-tokenized record were skipped\n";
    std::optional<CompressionMetrics> compression;
    if (!cell.scores.empty()) compression = compression_metrics(cell.scores);
    Json freq_corr = nullptr;
    if (cell.scores.size() >= 3) {
      const auto fc = frequency_alignment_correlation(cell.scores);
      freq_corr = Json::object();
      freq_corr["alignment_metric"] = "boundary_precision (single-token items = 1.0)";
      freq_corr["frequency_vs_alignment"] = report::correlation_to_json(fc.frequency_vs_alignment);
      freq_corr["frequency_vs_n_tokens"] = report::correlation_to_json(fc.frequency_vs_tokens);
    }

    for (const auto& cond : conditions) {
      Json j;
      j["manifest"] = manifest.to_json();
      j["language"] = ds.language;
      j["script"] = ds.script;
      j["treebank"] = ds.treebank;
      Json tok;
      tok["name"] = cell.tokenizer;
      if (sources[i].tokenizer) {
        const auto& spec = sources[i].tokenizer->spec();
        tok["kind"] = to_string(spec.kind);
        tok["word_begin"] = to_string(spec.word_begin);
        tok["vocab_size"] = spec.vocabulary.size();
        tok["n_merges"] = spec.merges.size();
      } else {
        tok["kind"] = "pretokenized";
      }
      j["tokenizer"] = tok;
      j["context"] = cell.context;
      Json config = report::config_to_json(cond);
      config["dedupe_types"] = args.dedupe_types;
      config["position_space"] = "utf8_bytes";
      j["config"] = config;
      j["notes"] = {
          "single-token items, when included, score 1.0 on every macro metric and contribute "
          "(#morphemes, 0, 0) to micro subword counts",
          "boundaries and subword spans are compared as UTF-8 byte offsets of the bare word",
          "macro averages are weighted by wordform frequency when frequency_scaling is true"};

      std::vector<std::string> row = {ds.language, cell.tokenizer, cell.context,
                                      cond.frequency_scaling ? "True" : "False",
                                      cond.include_single_token ? "True" : "False"};
      try {
        const auto bundle = aggregate(cell.scores, cond);
        j["status"] = "ok";
        j["metrics"] = report::bundle_to_json(bundle);
        for (double v : {bundle.boundary_precision_macro, bundle.boundary_recall_macro,
                         bundle.subword_precision_micro, bundle.subword_recall_micro, bundle.subword_f1_micro,
                         bundle.subword_precision_macro, bundle.subword_recall_macro, bundle.subword_f1_macro})
          row.push_back(report::fmt4(v));
        row.push_back(std::to_string(bundle.n_items_scored));
        row.push_back(std::to_string(bundle.n_items_skipped));
      } catch (const NoScoreableItems&) {
        ++empty_cells;
        j["status"] = "no_scoreable_items";
        j["metrics"] = nullptr;
        for (int k = 0; k < 8; ++k) row.push_back("NA");
        row.push_back("0");
        row.push_back(std::to_string(cell.scores.size()));
      }
      if (compression) {
        j["compression"] = {{"fertility", compression->fertility},
                            {"corpus_token_count", compression->corpus_token_count}};
        row.push_back(report::fmt4(compression->fertility));
        row.push_back(std::to_string(compression->corpus_token_count));
      } else {
        j["compression"] = nullptr;
        row.push_back("NA");
        row.push_back("0");
      }
      j["frequency_correlation"] = freq_corr;
      if (!breakdown_keys.empty()) {
        Json bd = Json::object();
        for (const auto& key : breakdown_keys) {
          Json cells_json = Json::object();
          for (const auto& [value, bundle] : breakdown(cell.items, cell.scores, key, cond))
            cells_json[value] = report::bundle_to_json(bundle);
          bd[key] = cells_json;
        }
        j["breakdown"] = bd;
      }
      if (args.emit_items) {
        Json items = Json::array();
        for (std::size_t k = 0; k < cell.items.size(); ++k)
          items.push_back(detail::item_json(cell.items[k], cell.tokenizations[k], cell.scores[k]));
        j["items"] = items;
      }

      const std::string fs_tag = cond.frequency_scaling ? "True" : "False";
      const std::string ist_tag = cond.include_single_token ? "True" : "False";
      const std::string name = sanitize(ds.language) + "_" + cell.file_tag + "_" + fs_tag + "_" + ist_tag + ".json";
      files.emplace_back(args.out / name, j.dump(2) + "\n");
      csv_rows.emplace_back(name, std::move(row));
    }
  }

  if (empty_cells == csv_rows.size()) throw NoScoreableItems();

  std::sort(files.begin(), files.end());
  std::sort(csv_rows.begin(), csv_rows.end());
  for (std::size_t k = 1; k < files.size(); ++k)
    if (files[k].first == files[k - 1].first)
      throw ConfigError("score: duplicate report name '" + files[k].first.filename().string() +
                        "' (give tokenizers distinct NAME= prefixes)");

  ScoreOutput out;
  for (const auto& [path, text] : files) {
    write_text(path, text);
    out.reports.push_back(path);
  }
  std::ostringstream csv_text;
  csv::write_row(csv_text, report::score_csv_header());
  for (const auto& [key, row] : csv_rows) csv::write_row(csv_text, row);
  out.csv = args.out / "scores.csv";
  write_text(out.csv, csv_text.str());
  out.empty_cells = empty_cells;
  log << "score: " << out.reports.size() << " report(s), " << csv_rows.size() << " CSV row(s) -> " << args.out.string()
      << "\n";
  return out;
}

inline int cmd_score(const ScoreArgs& args, std::ostream& log = std::cerr) {
  run_score(args, log);
  return kOk;
}

// ---------------------------------------------------------------------------
// compare

enum class MetricLevel { boundary, subword };

struct CompareArgs {
  std::vector<fs::path> inputs;
  fs::path out;
  MetricLevel level = MetricLevel::boundary;
};

struct RankingRow {
  std::string context, frequency_scaling, include_single_token;
  std::string tokenizer;
  std::size_t n_languages = 0;
  double mean_precision = 0, mean_recall = 0;
  std::size_t precision_rank = 0, recall_rank = 0;
  bool leader_flip = false;          // best-precision and best-recall tokenizers differ
  bool precision_rank_flip = false;  // this tokenizer's precision rank varies across conditions
  bool recall_rank_flip = false;
};

struct CompareResult {
  std::vector<RankingRow> rows;
  std::vector<std::string> warnings;
};

inline CompareResult compare_tables(const std::vector<csv::Table>& tables, MetricLevel level) {
  if (tables.size() < 2) throw ConfigError("compare: at least 2 score CSVs are required");
  const std::string pcol = level == MetricLevel::boundary ? "boundary_precision_macro" : "subword_precision_macro";
  const std::string rcol = level == MetricLevel::boundary ? "boundary_recall_macro" : "subword_recall_macro";

  using CondKey = std::tuple<std::string, std::string, std::string>;
  // condition -> tokenizer -> language -> (precision, recall)
  std::map<CondKey, std::map<std::string, std::map<std::string, std::pair<double, double>>>> data;
  for (const auto& t : tables) {
    const auto il = t.require("language"), it = t.require("tokenizer"), ic = t.require("context"),
               ifs = t.require("frequency_scaling"), iist = t.require("include_single_token"), ip = t.require(pcol),
               ir = t.require(rcol);
    for (const auto& row : t.rows) {
      if (row[ip] == "NA" || row[ir] == "NA") continue;
      auto& cell = data[{row[ic], row[ifs], row[iist]}][row[it]];
      if (!cell.emplace(row[il], std::pair{std::stod(row[ip]), std::stod(row[ir])}).second)
        throw DataError("compare: duplicate row for " + row[il] + "/" + row[it] + " under one condition");
    }
  }

  CompareResult result;
  for (const auto& [cond, toks] : data) {
    if (toks.size() < 2) continue;
    std::set<std::string> common;
    bool first = true;
    for (const auto& [tok, langs] : toks) {
      std::set<std::string> ls;
      for (const auto& [l, v] : langs) ls.insert(l);
      if (first) {
        common = ls;
        first = false;
      } else {
        std::set<std::string> inter;
        std::set_intersection(common.begin(), common.end(), ls.begin(), ls.end(), std::inserter(inter, inter.end()));
        common = std::move(inter);
      }
    }
    for (const auto& [tok, langs] : toks) {
      if (langs.size() != common.size()) {
        std::string w = "condition " + std::get<0>(cond) + "/" + std::get<1>(cond) + "_" + std::get<2>(cond) +
                        ": language coverage differs; using intersection {";
        bool f = true;
        for (const auto& l : common) {
          w += (f ? "" : ",") + l;
          f = false;
        }
        result.warnings.push_back(w + "}");
        break;
      }
    }
    if (common.empty()) continue;

    std::vector<RankingRow> rows;
    for (const auto& [tok, langs] : toks) {
      RankingRow r;
      std::tie(r.context, r.frequency_scaling, r.include_single_token) = cond;
      r.tokenizer = tok;
      r.n_languages = common.size();
      for (const auto& l : common) {
        r.mean_precision += langs.at(l).first;
        r.mean_recall += langs.at(l).second;
      }
      r.mean_precision /= static_cast<double>(common.size());
      r.mean_recall /= static_cast<double>(common.size());
      rows.push_back(r);
    }
    const auto assign_ranks = [&](auto value, auto rank) {
      std::vector<std::size_t> order(rows.size());
      std::iota(order.begin(), order.end(), std::size_t{0});
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (value(rows[a]) != value(rows[b])) return value(rows[a]) > value(rows[b]);
        return rows[a].tokenizer < rows[b].tokenizer;
      });
      for (std::size_t k = 0; k < order.size(); ++k) rank(rows[order[k]]) = k + 1;
    };
    assign_ranks([](const RankingRow& r) { return r.mean_precision; },
                 [](RankingRow& r) -> std::size_t& { return r.precision_rank; });
    assign_ranks([](const RankingRow& r) { return r.mean_recall; },
                 [](RankingRow& r) -> std::size_t& { return r.recall_rank; });
    std::string p_leader, r_leader;
    for (const auto& r : rows) {
      if (r.precision_rank == 1) p_leader = r.tokenizer;
      if (r.recall_rank == 1) r_leader = r.tokenizer;
    }
    for (auto& r : rows) r.leader_flip = p_leader != r_leader;
    std::sort(rows.begin(), rows.end(),
              [](const RankingRow& a, const RankingRow& b) { return a.precision_rank < b.precision_rank; });
    for (auto& r : rows) result.rows.push_back(std::move(r));
  }
  if (result.rows.empty()) throw DataError("compare: no condition has at least 2 tokenizers with shared languages");

  std::map<std::string, std::set<std::size_t>> p_ranks, r_ranks;
  for (const auto& r : result.rows) {
    p_ranks[r.tokenizer].insert(r.precision_rank);
    r_ranks[r.tokenizer].insert(r.recall_rank);
  }
  for (auto& r : result.rows) {
    r.precision_rank_flip = p_ranks[r.tokenizer].size() > 1;
    r.recall_rank_flip = r_ranks[r.tokenizer].size() > 1;
  }
  return result;
}

inline int cmd_compare(const CompareArgs& args, std::ostream& log = std::cerr, std::ostream& out = std::cout) {
  if (args.inputs.size() < 2) throw ConfigError("compare: at least 2 score CSVs are required");
  std::vector<csv::Table> tables;
  for (const auto& p : args.inputs) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw DataError("cannot read '" + p.string() + "'");
    tables.push_back(csv::read(in, p.string()));
  }
  const auto result = compare_tables(tables, args.level);
  for (const auto& w : result.warnings) log << "compare: warning: " << w << "\n";

  std::ostringstream text;
  csv::write_row(text, {"context", "frequency_scaling", "include_single_token", "tokenizer", "n_languages",
                        "mean_precision", "precision_rank", "mean_recall", "recall_rank", "leader_flip",
                        "precision_rank_flip", "recall_rank_flip"});
  for (const auto& r : result.rows) {
    csv::write_row(text, {r.context, r.frequency_scaling, r.include_single_token, r.tokenizer,
                          std::to_string(r.n_languages), report::fmt4(r.mean_precision),
                          std::to_string(r.precision_rank), report::fmt4(r.mean_recall), std::to_string(r.recall_rank),
                          r.leader_flip ? "True" : "False", r.precision_rank_flip ? "True" : "False",
                          r.recall_rank_flip ? "True" : "False"});
  }
  if (!args.out.empty()) write_text(args.out, text.str());

  std::string last;
  for (const auto& r : result.rows) {
    const std::string cond = r.context + " " + r.frequency_scaling + "_" + r.include_single_token;
    if (cond != last) {
      out << "\n[" << cond << "]" << (r.leader_flip ? "  precision/recall leaders differ" : "") << "\n";
      last = cond;
    }
    out << "  " << r.precision_rank << ". " << r.tokenizer << "  P=" << report::fmt4(r.mean_precision)
        << "  R=" << report::fmt4(r.mean_recall) << " (recall rank " << r.recall_rank << ")"
        << (r.precision_rank_flip ? "  *rank varies across conditions" : "") << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------------------
// correlate

struct PerformanceRow {
  std::string model, task, language, tokenizer;
  double score = 0, n_params = 0, train_data_proportion = 0;
  double alignment = 0;
};

struct CorrelationAnalysis {
  std::vector<PerformanceRow> rows;
  std::vector<std::string> dropped_predictors;  // zero variance, left out of the fits
  stats::RegressionFit intercept_only, base, full, simple;
  std::optional<stats::FTest> base_vs_intercept;
  stats::FTest alignment_test;
  stats::Correlation spearman;
};

// score ~ n_params + train_data_proportion + task dummies [+ alignment]
inline CorrelationAnalysis analyze_correlation(std::vector<PerformanceRow> rows) {
  CorrelationAnalysis a;
  a.rows = std::move(rows);
  const std::size_t n = a.rows.size();
  std::vector<double> y(n), params(n), prop(n), align(n);
  std::vector<std::string> tasks(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = a.rows[i].score;
    params[i] = a.rows[i].n_params;
    prop[i] = a.rows[i].train_data_proportion;
    align[i] = a.rows[i].alignment;
    tasks[i] = a.rows[i].task;
  }
  const auto varies = [](const std::vector<double>& v) {
    return std::any_of(v.begin(), v.end(), [&](double x) { return x != v.front(); });
  };
  if (!varies(align)) throw DataError("correlate: alignment scores do not vary across joined rows");

  stats::Design base, full, tasks_only, simple;
  tasks_only.add_categorical("task", tasks);
  base.add_categorical("task", tasks);
  full.add_categorical("task", tasks);
  for (const auto& [name, col] : {std::pair<std::string, const std::vector<double>*>{"n_params", &params},
                                  {"train_data_proportion", &prop}}) {
    if (!varies(*col)) {
      a.dropped_predictors.push_back(name);
      continue;
    }
    base.add(name, *col);
    full.add(name, *col);
  }
  full.add("alignment", align);
  simple.add("alignment", align);
  if (n < full.cols() + 2)
    throw DataError("correlate: joined data has " + std::to_string(n) + " rows; need at least " +
                    std::to_string(full.cols() + 2));

  a.intercept_only = stats::ols(tasks_only, y);
  a.base = stats::ols(base, y);
  a.full = stats::ols(full, y);
  a.simple = stats::ols(simple, y);
  if (a.base.p > a.intercept_only.p) a.base_vs_intercept = stats::nested_f_test(a.intercept_only, a.base);
  a.alignment_test = stats::nested_f_test(a.base, a.full);
  a.spearman = stats::spearman(align, y);
  return a;
}

struct CorrelateArgs {
  fs::path alignment;
  fs::path performance;
  std::string metric = "recall";  // recall | precision
  MetricLevel level = MetricLevel::boundary;
  std::string condition = "True_False";
  std::string context = "any";
  std::vector<std::string> model_map;  // MODEL=TOKENIZER
  fs::path out;
  std::vector<std::string> command_line;
};

inline std::string lower(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

inline Json fit_to_json(const stats::RegressionFit& f) {
  Json j;
  j["coefficients"] = Json::object();
  j["coefficients"][stats::kInterceptName] = f.coefficients.at(stats::kInterceptName);
  for (const auto& name : f.predictors) j["coefficients"][name] = f.coefficients.at(name);
  j["r_squared"] = f.r_squared;
  j["residual_ss"] = f.residual_ss;
  j["total_ss"] = f.total_ss;
  j["n"] = f.n;
  j["p"] = f.p;
  j["degenerate"] = f.degenerate;
  return j;
}

inline Json ftest_to_json(const stats::FTest& t) {
  Json j;
  j["F"] = t.f;
  j["df"] = {t.df_num, t.df_den};
  j["p_value"] = t.p_value;
  return j;
}

inline CorrelationAnalysis run_correlate(const CorrelateArgs& args, std::ostream& log = std::cerr) {
  if (args.metric != "recall" && args.metric != "precision")
    throw ConfigError("correlate: --metric must be recall or precision");
  std::ifstream ain(args.alignment, std::ios::binary);
  if (!ain) throw DataError("cannot read '" + args.alignment.string() + "'");
  std::ifstream pin(args.performance, std::ios::binary);
  if (!pin) throw DataError("cannot read '" + args.performance.string() + "'");
  const auto at = csv::read(ain, args.alignment.string());
  const auto pt = csv::read(pin, args.performance.string());

  const std::string col = std::string(args.level == MetricLevel::boundary ? "boundary_" : "subword_") + args.metric +
                          "_macro";
  const auto al = at.require("language"), atok = at.require("tokenizer"), actx = at.require("context"),
             afs = at.require("frequency_scaling"), aist = at.require("include_single_token"),
             am = at.require(col);
  std::map<std::pair<std::string, std::string>, double> alignment;  // (language, tokenizer)
  std::set<std::string> tokenizer_names;
  for (const auto& row : at.rows) {
    if (row[afs] + "_" + row[aist] != args.condition) continue;
    if (args.context != "any" && row[actx] != args.context) continue;
    if (row[am] == "NA") continue;
    if (!alignment.emplace(std::pair{row[al], row[atok]}, std::stod(row[am])).second)
      throw DataError("correlate: several alignment rows for " + row[al] + "/" + row[atok] +
                      "; select one with --context");
    tokenizer_names.insert(row[atok]);
  }

  const std::string src = args.performance.string();
  const auto pm = pt.require("model", src), ptask = pt.require("task", src), pl = pt.require("language", src),
             ps = pt.require("score", src), pp = pt.require("n_params", src),
             pprop = pt.require("train_data_proportion", src);

  std::map<std::string, std::string> explicit_map;
  for (const auto& m : args.model_map) {
    const auto eq = m.find('=');
    if (eq == std::string::npos) throw ConfigError("correlate: --model-map expects MODEL=TOKENIZER, got '" + m + "'");
    explicit_map[m.substr(0, eq)] = m.substr(eq + 1);
  }
  const auto tokenizer_for = [&](const std::string& model) -> std::optional<std::string> {
    if (auto it = explicit_map.find(model); it != explicit_map.end()) return it->second;
    const std::string lm = lower(model);
    std::optional<std::string> best;
    for (const auto& t : tokenizer_names) {
      const std::string lt = lower(t);
      if (lm == lt) return t;
      if (lm.starts_with(lt) && (!best || t.size() > best->size())) best = t;
    }
    return best;
  };

  std::vector<PerformanceRow> rows;
  std::size_t missing_prop = 0, unmatched = 0;
  const auto parse_num = [](const std::string& s) -> std::optional<double> {
    if (s.empty() || s == "NA" || s == "nan" || s == "NaN") return std::nullopt;
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) return std::nullopt;
      return v;
    } catch (...) {
      return std::nullopt;
    }
  };
  for (std::size_t r = 0; r < pt.rows.size(); ++r) {
    const auto& row = pt.rows[r];
    const auto prop = parse_num(row[pprop]);
    if (!prop) {
      ++missing_prop;
      continue;
    }
    const auto score = parse_num(row[ps]);
    const auto params = parse_num(row[pp]);
    if (!score) throw DataError(src + ": record " + std::to_string(r + 1) + ": invalid 'score'");
    if (!params) throw DataError(src + ": record " + std::to_string(r + 1) + ": invalid 'n_params'");
    const auto tok = tokenizer_for(row[pm]);
    if (!tok) {
      ++unmatched;
      continue;
    }
    const auto it = alignment.find({row[pl], *tok});
    if (it == alignment.end()) {
      ++unmatched;
      continue;
    }
    rows.push_back({row[pm], row[ptask], row[pl], *tok, *score, *params, *prop, it->second});
  }
  if (missing_prop) log << "correlate: dropped " << missing_prop << " row(s) without train_data_proportion\n";
  if (unmatched) log << "correlate: " << unmatched << " row(s) had no matching alignment score\n";

  auto a = analyze_correlation(std::move(rows));

  Json j;
  report::RunManifest manifest;
  manifest.command_line = join_args(args.command_line);
  manifest.input_digests[args.alignment.string()] = report::file_sha256(args.alignment);
  manifest.input_digests[args.performance.string()] = report::file_sha256(args.performance);
  Json config;
  config["metric"] = args.metric;
  config["metric_column"] = col;
  config["condition"] = args.condition;
  config["context"] = args.context;
  config["model_map"] = args.model_map;
  manifest.config_hash = report::config_hash(config);
  manifest.timestamp = report::timestamp();
  j["manifest"] = manifest.to_json();
  j["config"] = config;
  j["method"] = "OLS with task dummy intercepts and a nested-model F test (approximates a linear mixed model "
                "with task random intercepts and a likelihood-ratio test)";
  j["n_rows"] = a.rows.size();
  j["dropped_rows_missing_proportion"] = missing_prop;
  j["unmatched_rows"] = unmatched;
  j["dropped_predictors"] = a.dropped_predictors;
  Json fits;
  fits["intercept_only"] = fit_to_json(a.intercept_only);
  fits["base"] = fit_to_json(a.base);
  fits["full"] = fit_to_json(a.full);
  fits["alignment_only"] = fit_to_json(a.simple);
  j["fits"] = fits;
  j["f_test_base_vs_intercept"] = a.base_vs_intercept ? ftest_to_json(*a.base_vs_intercept) : Json(nullptr);
  j["f_test_alignment"] = ftest_to_json(a.alignment_test);
  j["alignment_coefficient"] = a.full.coefficients.at("alignment");
  j["alignment_r_squared"] = a.simple.r_squared;
  j["spearman"] = report::correlation_to_json(a.spearman);
  Json scatter = Json::object();
  for (const auto& r : a.rows) {
    if (!scatter.contains(r.task)) scatter[r.task] = Json::array();
    scatter[r.task].push_back({{"model", r.model}, {"language", r.language}, {"alignment", r.alignment}, {"score", r.score}});
  }
  j["scatter"] = scatter;
  write_text(args.out, j.dump(2) + "\n");
  log << "correlate: " << a.rows.size() << " rows, alignment R^2=" << report::fmt4(a.simple.r_squared)
      << ", F=" << a.alignment_test.f << " (p=" << a.alignment_test.p_value << ")\n";
  return a;
}

inline int cmd_correlate(const CorrelateArgs& args, std::ostream& log = std::cerr) {
  run_correlate(args, log);
  return kOk;
}

}  // namespace morphalign::cli
