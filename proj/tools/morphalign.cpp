#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "morphalign/commands.hpp"

using namespace morphalign;

namespace {

std::set<Split> parse_splits(const std::string& list) {
  std::set<Split> out;
  std::size_t start = 0;
  while (start <= list.size()) {
    auto comma = list.find(',', start);
    if (comma == std::string::npos) comma = list.size();
    const auto item = list.substr(start, comma - start);
    if (!item.empty()) {
      const auto s = parse_split(item);
      if (!s) throw ConfigError("unknown split '" + item + "' (expected train, dev, test)");
      out.insert(*s);
    }
    start = comma + 1;
  }
  if (out.empty()) throw ConfigError("--splits selects nothing");
  return out;
}

cli::MetricLevel parse_level(const std::string& s) {
  if (s == "boundary") return cli::MetricLevel::boundary;
  if (s == "subword") return cli::MetricLevel::subword;
  throw ConfigError("--level must be boundary or subword");
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> command_line(argv, argv + argc);

  CLI::App app{"Morphological alignment evaluation for subword tokenizers"};
  app.set_version_flag("--version", std::string(MORPHALIGN_VERSION));
  app.require_subcommand(1);

  // build
  cli::BuildArgs build;
  std::string splits = "train,dev,test", freq_mode = "wordform";
  auto* b = app.add_subcommand("build", "Build a gold segmentation dataset from a UD treebank directory");
  b->add_option("--treebank", build.treebank, "Directory with *.conllu files")->required();
  b->add_option("--lang", build.language, "ISO 639-3 language code")->required();
  b->add_option("--script", build.script, "ISO 15924 script code")->required();
  b->add_option("--out", build.out, "Output dataset path (JSONL); stats go next to it")->required();
  b->add_option("--splits", splits, "Comma-separated splits to read")->capture_default_str();
  b->add_flag("--case-insensitive", build.case_insensitive, "Lowercase word and lemma before matching");
  b->add_option("--min-items", build.min_items, "Minimum items for a scoreable dataset")->capture_default_str();
  b->add_option("--treebank-name", build.treebank_name, "Treebank label (default: directory name)");
  b->add_option("--frequency-mode", freq_mode, "wordform or lemma")
      ->check(CLI::IsMember({"wordform", "lemma"}))
      ->capture_default_str();
  b->add_flag("--lenient", build.lenient, "Skip malformed CoNLL-U rows instead of failing");

  // score
  cli::ScoreArgs score;
  std::string context = "leading_space";
  bool no_dedupe = false;
  auto* s = app.add_subcommand("score", "Score tokenizers against gold datasets");
  s->add_option("--dataset", score.datasets, "Dataset JSONL file(s)")->required();
  s->add_option("--tokenizer", score.tokenizers, "[NAME=]TOKENIZER.json or [NAME=]VOCAB[,MERGES]");
  s->add_option("--pretokenized", score.pretokenized, "[NAME=]PATH to pre-tokenized JSONL");
  s->add_option("--out", score.out, "Output directory")->required();
  s->add_flag("--grid", score.grid, "Run all four frequency-scaling x single-token conditions");
  s->add_flag("--by-pos", score.by_pos, "Add a per-UPOS breakdown");
  s->add_option("--by-feat", score.by_feats, "Add a breakdown by a UD feature (repeatable)");
  s->add_option("--context", context, "leading_space, bare or both")
      ->check(CLI::IsMember({"leading_space", "bare", "both"}))
      ->capture_default_str();
  s->add_flag("--no-dedupe-types", no_dedupe, "Score every occurrence instead of one item per word type");
  s->add_flag("--emit-items", score.emit_items, "Include per-item scores in reports");
  s->add_option("--workers", score.workers, "Worker threads (default: $MORPHALIGN_WORKERS or CPU count)");

  // compare
  cli::CompareArgs compare;
  std::string compare_level = "boundary";
  auto* c = app.add_subcommand("compare", "Rank tokenizers from two or more score CSVs");
  c->add_option("inputs", compare.inputs, "Score CSV files")->required();
  c->add_option("--out", compare.out, "Ranking CSV output path");
  c->add_option("--level", compare_level, "boundary or subword metrics")->capture_default_str();

  // correlate
  cli::CorrelateArgs corr;
  std::string corr_level = "boundary";
  auto* r = app.add_subcommand("correlate", "Relate alignment scores to model performance");
  r->add_option("--alignment", corr.alignment, "Score CSV")->required();
  r->add_option("--performance", corr.performance, "Performance CSV")->required();
  r->add_option("--metric", corr.metric, "recall or precision")
      ->check(CLI::IsMember({"recall", "precision"}))
      ->capture_default_str();
  r->add_option("--level", corr_level, "boundary or subword metrics")->capture_default_str();
  r->add_option("--condition", corr.condition, "Scoring condition, e.g. True_False")->capture_default_str();
  r->add_option("--context", corr.context, "Context rows to use, or 'any'")->capture_default_str();
  r->add_option("--model-map", corr.model_map, "MODEL=TOKENIZER (repeatable)");
  r->add_option("--out", corr.out, "Analysis report path (JSON)")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cli::kUsage;
  }

  try {
    if (*b) {
      build.splits = parse_splits(splits);
      build.frequency_mode = freq_mode == "lemma" ? FrequencyMode::lemma : FrequencyMode::wordform;
      return cli::cmd_build(build);
    }
    if (*s) {
      score.context = *parse_context_mode(context);
      score.dedupe_types = !no_dedupe;
      score.command_line = command_line;
      return cli::cmd_score(score);
    }
    if (*c) {
      compare.level = parse_level(compare_level);
      return cli::cmd_compare(compare);
    }
    if (*r) {
      corr.level = parse_level(corr_level);
      corr.command_line = command_line;
      return cli::cmd_correlate(corr);
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kDataError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return cli::kDataError;
  }
  return cli::kUsage;
}
