#include <gtest/gtest.h>

#include <numeric>
#include <random>

#include "morphalign/scoring.hpp"

using namespace morphalign;

namespace {

GoldItem gold(const std::vector<std::string>& morphemes, std::int64_t frequency = 1, std::string upos = "NOUN") {
  GoldItem g;
  g.language = "eng";
  g.script = "Latn";
  g.morphemes = morphemes;
  for (std::size_t i = 0; i < morphemes.size(); ++i) {
    g.word += morphemes[i];
    if (i + 1 < morphemes.size()) g.boundaries.push_back(utf8::char_length(g.word));
  }
  g.lemma = morphemes[0];
  g.frequency = frequency;
  g.upos = std::move(upos);
  return g;
}

TokenizationResult pred(const std::vector<std::string>& pieces) {
  std::string word;
  std::vector<Span> spans;
  for (const auto& p : pieces) {
    spans.push_back({word.size(), word.size() + p.size()});
    word += p;
  }
  return make_result(word, pieces, spans);
}

ItemScore score(const std::vector<std::string>& g, const std::vector<std::string>& p, std::int64_t freq = 1) {
  return score_item(gold(g, freq), pred(p));
}

EvalConfig config(bool fs, bool ist) {
  EvalConfig c;
  c.frequency_scaling = fs;
  c.include_single_token = ist;
  return c;
}

// Random segmentation of `word` into contiguous byte pieces.
std::vector<std::string> random_split(const std::string& word, std::mt19937& rng) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (std::size_t i = 1; i < word.size(); ++i)
    if (rng() % 3 == 0) {
      out.push_back(word.substr(start, i - start));
      start = i;
    }
  out.push_back(word.substr(start));
  return out;
}

std::vector<std::pair<GoldItem, ItemScore>> random_items(std::mt19937& rng, std::size_t n) {
  const std::vector<std::vector<std::string>> golds = {
      {"book", "s"}, {"walk", "ed"}, {"un", "lock", "ed"}, {"play", "ing"}, {"caf\xC3\xA9", "s"}, {"kind", "er"}};
  std::vector<std::pair<GoldItem, ItemScore>> out;
  for (std::size_t i = 0; i < n; ++i) {
    auto g = gold(golds[rng() % golds.size()], 1 + static_cast<std::int64_t>(rng() % 50), i % 2 ? "VERB" : "NOUN");
    if (i % 3 == 0) g.feats["Number"] = "Plur";
    const auto p = rng() % 5 == 0 ? std::vector<std::string>{g.word} : random_split(g.word, rng);
    auto s = score_item(g, pred(p));
    out.emplace_back(std::move(g), s);
  }
  return out;
}

}  // namespace

TEST(ScoreItem, OversplitStem) {
  const auto s = score({"book", "s"}, {"boo", "k", "s"});
  const auto r = ratios(s);
  EXPECT_DOUBLE_EQ(r.boundary_precision, 1.0 / 2);
  EXPECT_DOUBLE_EQ(r.boundary_recall, 1.0);
  EXPECT_DOUBLE_EQ(r.subword_precision, 1.0 / 3);
  EXPECT_DOUBLE_EQ(r.subword_recall, 1.0 / 2);
  EXPECT_EQ(s.n_tokens, 3u);
  EXPECT_EQ(s.n_morphemes(), 2u);
}

TEST(ScoreItem, ExactMatch) {
  const auto r = ratios(score({"un", "lock", "ed"}, {"un", "lock", "ed"}));
  EXPECT_DOUBLE_EQ(r.boundary_precision, 1.0);
  EXPECT_DOUBLE_EQ(r.boundary_recall, 1.0);
  EXPECT_DOUBLE_EQ(r.subword_f1, 1.0);
}

TEST(ScoreItem, CharacterLevel) {
  const auto r = ratios(score({"book", "s"}, {"b", "o", "o", "k", "s"}));
  EXPECT_DOUBLE_EQ(r.boundary_precision, 1.0 / 4);
  EXPECT_DOUBLE_EQ(r.boundary_recall, 1.0);
  EXPECT_DOUBLE_EQ(r.subword_precision, 1.0 / 5);
  EXPECT_DOUBLE_EQ(r.subword_recall, 1.0 / 2);
}

TEST(ScoreItem, GoldBoundariesAreConvertedToBytes) {
  // café|s: gold boundary after character 4 is byte 5
  const auto g = gold({"caf\xC3\xA9", "s"});
  EXPECT_EQ(gold_byte_boundaries(g), (std::vector<std::size_t>{5}));
  const auto r = ratios(score_item(g, pred({"caf\xC3\xA9", "s"})));
  EXPECT_DOUBLE_EQ(r.boundary_precision, 1.0);
  // a boundary inside é never matches
  const auto r2 = ratios(score_item(g, pred({"caf\xC3", "\xA9s"})));
  EXPECT_DOUBLE_EQ(r2.boundary_precision, 0.0);
}

TEST(ScoreItem, WordMismatchIsError) { EXPECT_THROW(score_item(gold({"book", "s"}), pred({"cat", "s"})), ConfigError); }

TEST(Aggregate, MacroMean) {
  const std::vector<ItemScore> items = {score({"book", "s"}, {"book", "s"}), score({"walk", "ed"}, {"wa", "lked"})};
  const auto m = aggregate(items, config(false, false));
  EXPECT_DOUBLE_EQ(m.boundary_precision_macro, 0.5);
  EXPECT_EQ(m.n_items_scored, 2u);
}

TEST(Aggregate, FrequencyWeightedMacro) {
  const std::vector<ItemScore> items = {score({"book", "s"}, {"book", "s"}, 3), score({"walk", "ed"}, {"wa", "lked"}, 1)};
  EXPECT_DOUBLE_EQ(aggregate(items, config(true, false)).boundary_precision_macro, 0.75);
  EXPECT_DOUBLE_EQ(aggregate(items, config(false, false)).boundary_precision_macro, 0.5);
}

TEST(Aggregate, SingleTokenFullCredit) {
  const std::vector<ItemScore> items = {score({"book", "s"}, {"book", "s"}), score({"walk", "ed"}, {"wa", "lked"}),
                                        score({"play", "ing"}, {"playing"})};
  const auto with = aggregate(items, config(false, true));
  EXPECT_DOUBLE_EQ(with.boundary_precision_macro, 2.0 / 3);
  EXPECT_EQ(with.n_items_scored, 3u);
  const auto without = aggregate(items, config(false, false));
  EXPECT_DOUBLE_EQ(without.boundary_precision_macro, 0.5);
  EXPECT_EQ(without.n_items_skipped, 1u);
}

TEST(Aggregate, SingleTokenMicroCounts) {
  const std::vector<ItemScore> items = {score({"un", "lock", "ed"}, {"unlocked"})};
  const auto m = aggregate(items, config(false, true));
  EXPECT_EQ(m.subword_tp, 3u);
  EXPECT_EQ(m.subword_fp, 0u);
  EXPECT_EQ(m.subword_fn, 0u);
  EXPECT_DOUBLE_EQ(m.subword_f1_micro, 1.0);
}

TEST(Aggregate, NothingScoreable) {
  const std::vector<ItemScore> single = {score({"book", "s"}, {"books"})};
  EXPECT_THROW(aggregate(single, config(true, false)), NoScoreableItems);
  EXPECT_THROW(aggregate({}, config(true, true)), NoScoreableItems);
}

TEST(Aggregate, MicroCountsOracle) {
  std::mt19937 rng(1);
  const auto items = random_items(rng, 300);
  std::vector<ItemScore> scores;
  std::uint64_t tp = 0, fp = 0, fn = 0;
  for (const auto& [g, s] : items) {
    scores.push_back(s);
    if (s.single_token) continue;
    tp += s.subword_tp * static_cast<std::uint64_t>(g.frequency);
    fp += s.subword_fp * static_cast<std::uint64_t>(g.frequency);
    fn += s.subword_fn * static_cast<std::uint64_t>(g.frequency);
  }
  const auto m = aggregate(scores, config(true, false));
  EXPECT_DOUBLE_EQ(m.subword_precision_micro, static_cast<double>(tp) / static_cast<double>(tp + fp));
  EXPECT_DOUBLE_EQ(m.subword_recall_micro, static_cast<double>(tp) / static_cast<double>(tp + fn));
}

TEST(Breakdown, UposPartition) {
  std::mt19937 rng(2);
  const auto items = random_items(rng, 200);
  std::vector<GoldItem> golds;
  std::vector<ItemScore> scores;
  for (const auto& [g, s] : items) {
    golds.push_back(g);
    scores.push_back(s);
  }
  const auto cfg = config(true, false);
  const auto total = aggregate(scores, cfg);
  const auto cells = breakdown(golds, scores, "upos", cfg);
  ASSERT_EQ(cells.size(), 2u);
  std::size_t n = 0;
  std::uint64_t tp = 0;
  for (const auto& [k, m] : cells) {
    n += m.n_items_scored;
    tp += m.subword_tp;
  }
  EXPECT_EQ(n, total.n_items_scored);
  EXPECT_EQ(tp, total.subword_tp);
}

TEST(Breakdown, AbsentFeatureCell) {
  std::vector<GoldItem> golds = {gold({"book", "s"}), gold({"walk", "ed"})};
  golds[0].feats["Number"] = "Plur";
  const std::vector<ItemScore> scores = {score_item(golds[0], pred({"book", "s"})),
                                         score_item(golds[1], pred({"wa", "lked"}))};
  const auto cells = breakdown(golds, scores, "feat:Number", config(false, false));
  ASSERT_EQ(cells.size(), 2u);
  EXPECT_DOUBLE_EQ(cells.at("Plur").boundary_precision_macro, 1.0);
  EXPECT_DOUBLE_EQ(cells.at(std::string(kAbsentFeature)).boundary_precision_macro, 0.0);
}

TEST(Breakdown, EmptyCellsOmittedAndKeysValidated) {
  std::vector<GoldItem> golds = {gold({"book", "s"}, 1, "NOUN"), gold({"walk", "ed"}, 1, "VERB")};
  const std::vector<ItemScore> scores = {score_item(golds[0], pred({"book", "s"})),
                                         score_item(golds[1], pred({"walked"}))};
  const auto cells = breakdown(golds, scores, "upos", config(false, false));
  EXPECT_EQ(cells.size(), 1u);
  EXPECT_TRUE(cells.count("NOUN"));
  EXPECT_THROW(breakdown(golds, scores, "lemma", config(false, false)), ConfigError);
  EXPECT_THROW(breakdown(golds, scores, "feat:", config(false, false)), ConfigError);
}

TEST(Compression, FertilityAndTokenCount) {
  std::vector<ItemScore> two = {score({"book", "s"}, {"book", "s"}), score({"walk", "ed"}, {"wa", "lked"}),
                                score({"play", "ing"}, {"play", "ing"})};
  const auto c = compression_metrics(two);
  EXPECT_DOUBLE_EQ(c.fertility, 2.0);
  EXPECT_EQ(c.corpus_token_count, 6u);
  std::vector<ItemScore> one = {score({"book", "s"}, {"books"}), score({"walk", "ed"}, {"walked"})};
  EXPECT_DOUBLE_EQ(compression_metrics(one).fertility, 1.0);
  std::vector<ItemScore> mixed = {score({"book", "s"}, {"books"}), score({"un", "lock", "ed"}, {"un", "lo", "cked"}),
                                  score({"kind", "er"}, {"kinder"})};
  EXPECT_EQ(compression_metrics(mixed).corpus_token_count, 5u);
}

TEST(FrequencyCorrelation, MonotoneRelation) {
  // higher frequency, more boundaries correct
  std::vector<ItemScore> scores = {score({"un", "lock", "ed"}, {"u", "nl", "o", "c", "k", "ed"}, 1),
                                   score({"un", "lock", "ed"}, {"un", "l", "o", "c", "ked"}, 2),
                                   score({"un", "lock", "ed"}, {"un", "lo", "ck", "ed"}, 3),
                                   score({"un", "lock", "ed"}, {"un", "lock", "ed"}, 4)};
  const auto c = frequency_alignment_correlation(scores);
  EXPECT_DOUBLE_EQ(c.frequency_vs_alignment.rho, 1.0);
  EXPECT_DOUBLE_EQ(c.frequency_vs_tokens.rho, -1.0);
}

TEST(FrequencyCorrelation, ConstantAlignmentIsDegenerate) {
  std::vector<ItemScore> scores;
  for (int f = 1; f <= 5; ++f) scores.push_back(score({"book", "s"}, {"book", "s"}, f));
  const auto c = frequency_alignment_correlation(scores);
  EXPECT_TRUE(c.frequency_vs_alignment.degenerate);
  EXPECT_EQ(c.frequency_vs_alignment.rho, 0.0);
  EXPECT_EQ(c.frequency_vs_alignment.p_value, 1.0);
}

TEST(FrequencyCorrelation, FivePointOracle) {
  // precisions 1/4, 1, 1/2, 1/3, 1/5 (distinct), frequencies 5,1,4,2,3
  std::vector<ItemScore> scores = {score({"ab", "cde"}, {"a", "b", "c", "d", "e"}, 5),
                                   score({"ab", "cde"}, {"ab", "cde"}, 1),
                                   score({"ab", "cde"}, {"a", "b", "cde"}, 4),
                                   score({"ab", "cde"}, {"a", "b", "c", "de"}, 2),
                                   score({"abcde", "f"}, {"a", "b", "c", "d", "e", "f"}, 3)};
  const std::vector<double> freq = {5, 1, 4, 2, 3};
  const std::vector<double> align = {0.25, 1.0, 0.5, 1.0 / 3, 0.2};
  // rank oracle, no ties: rho = 1 - 6 sum d^2 / (n (n^2 - 1))
  const auto rank = [](const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i)
      r[i] = 1.0 + static_cast<double>(std::count_if(v.begin(), v.end(), [&](double x) { return x < v[i]; }));
    return r;
  };
  const auto rf = rank(freq), ra = rank(align);
  double d2 = 0;
  for (std::size_t i = 0; i < 5; ++i) d2 += (rf[i] - ra[i]) * (rf[i] - ra[i]);
  const double expected = 1.0 - 6.0 * d2 / (5.0 * 24.0);
  EXPECT_NEAR(frequency_alignment_correlation(scores).frequency_vs_alignment.rho, expected, 1e-12);
}

TEST(ScoringProperties, PerfectTokenizationScoresOne) {
  std::mt19937 rng(3);
  for (const auto& [g, s] : random_items(rng, 100)) {
    const auto r = ratios(score_item(g, pred(g.morphemes)));
    EXPECT_DOUBLE_EQ(r.boundary_precision, 1.0);
    EXPECT_DOUBLE_EQ(r.boundary_recall, 1.0);
    EXPECT_DOUBLE_EQ(r.subword_precision, 1.0);
    EXPECT_DOUBLE_EQ(r.subword_recall, 1.0);
  }
}

TEST(ScoringProperties, CharacterSplitHasFullBoundaryRecall) {
  std::mt19937 rng(4);
  for (const auto& [g, s] : random_items(rng, 100)) {
    std::vector<std::string> chars;
    for (const auto& c : utf8::split_chars(g.word)) chars.emplace_back(c);
    const auto r = ratios(score_item(g, pred(chars)));
    EXPECT_DOUBLE_EQ(r.boundary_recall, 1.0);
  }
}

TEST(ScoringProperties, IncludingSingleTokensNeverLowersMacro) {
  std::mt19937 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<ItemScore> scores;
    for (const auto& [g, s] : random_items(rng, 40)) scores.push_back(s);
    scores.push_back(score({"book", "s"}, {"bo", "oks"}));
    for (bool fs : {false, true}) {
      const auto a = aggregate(scores, config(fs, false));
      const auto b = aggregate(scores, config(fs, true));
      EXPECT_GE(b.boundary_precision_macro + 1e-12, a.boundary_precision_macro);
      EXPECT_GE(b.boundary_recall_macro + 1e-12, a.boundary_recall_macro);
      EXPECT_GE(b.subword_f1_macro + 1e-12, a.subword_f1_macro);
    }
  }
}

TEST(ScoringProperties, UniformFrequencyMakesScalingNeutral) {
  std::mt19937 rng(6);
  std::vector<ItemScore> scores;
  for (auto [g, s] : random_items(rng, 100)) {
    s.weight = 7;
    scores.push_back(s);
  }
  const auto a = aggregate(scores, config(true, false));
  const auto b = aggregate(scores, config(false, false));
  EXPECT_NEAR(a.boundary_precision_macro, b.boundary_precision_macro, 1e-12);
  EXPECT_NEAR(a.subword_f1_macro, b.subword_f1_macro, 1e-12);
  EXPECT_NEAR(a.subword_precision_micro, b.subword_precision_micro, 1e-12);
}

TEST(ScoringProperties, MicroEqualsMacroForEqualSizes) {
  std::mt19937 rng(7);
  std::vector<ItemScore> scores;
  const std::vector<std::string> words = {"booked", "walked", "player", "kinder"};
  for (int i = 0; i < 60; ++i) {
    const auto& w = words[rng() % words.size()];
    const std::size_t g = 1 + rng() % 5, p = 1 + rng() % 5;
    scores.push_back(score({w.substr(0, g), w.substr(g)}, {w.substr(0, p), w.substr(p)}));
  }
  const auto m = aggregate(scores, config(false, false));
  EXPECT_NEAR(m.subword_precision_micro, m.subword_precision_macro, 1e-12);
  EXPECT_NEAR(m.subword_recall_micro, m.subword_recall_macro, 1e-12);
}

TEST(ScoringProperties, ParallelMergeMatchesSequential) {
  std::mt19937 rng(8);
  std::vector<ItemScore> scores;
  for (const auto& [g, s] : random_items(rng, 500)) scores.push_back(s);
  for (bool ist : {false, true}) {
    const auto cfg = config(true, ist);
    const auto seq = aggregate(scores, cfg);
    for (int trial = 0; trial < 20; ++trial) {
      const std::size_t parts = 1 + rng() % 8;
      std::vector<Accumulator> accs(parts, Accumulator(cfg));
      for (const auto& s : scores) accs[rng() % parts].add(s);
      Accumulator total(cfg);
      for (std::size_t k = parts; k-- > 0;) total.merge(accs[k]);
      const auto par = total.finish();
      EXPECT_EQ(par.subword_tp, seq.subword_tp);
      EXPECT_EQ(par.boundary_fp, seq.boundary_fp);
      EXPECT_EQ(par.n_items_scored, seq.n_items_scored);
      EXPECT_NEAR(par.boundary_precision_macro, seq.boundary_precision_macro, 1e-12);
      EXPECT_NEAR(par.subword_f1_macro, seq.subword_f1_macro, 1e-12);
      EXPECT_NEAR(par.boundary_recall_sd, seq.boundary_recall_sd, 1e-9);
    }
  }
}
