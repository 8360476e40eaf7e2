#include <cmath>
#include <set>

#include <gtest/gtest.h>

#include "test_util.hpp"
#include "wdisc/corpus.hpp"
#include "wdisc/evaluation.hpp"
#include "wdisc/synthcorpus.hpp"

namespace wdisc {
namespace {

std::string despace(const std::string& s) {
  std::string out;
  for (char c : s)
    if (c != ' ') out += c;
  return out;
}

TEST(Synth, DefaultSpecFiles) {
  testing::TempDir dir;
  const auto files = generate_files(SynthSpec{}, dir.path());
  const auto src = detail::read_lines(files.source);
  const auto tgt = detail::read_lines(files.target);
  const auto gold = detail::read_lines(files.gold);
  ASSERT_EQ(src.size(), 3000u);
  ASSERT_EQ(tgt.size(), 3000u);
  ASSERT_EQ(gold.size(), 3000u);
  for (std::size_t i = 0; i < src.size(); ++i) {
    ASSERT_EQ(despace(gold[i]), src[i]) << "line " << i + 1;
    EXPECT_EQ(unicode::split_words(gold[i]).size(), unicode::split_words(tgt[i]).size());
  }
  // The files load as a corpus with gold segmentation.
  const Corpus c = load_parallel(files.source, files.target, files.gold);
  EXPECT_EQ(c.size(), 3000u);
  EXPECT_LE(c.source_vocab.num_regular(), 10u);
  EXPECT_LE(c.target_vocab.num_regular(), 30u);
}

TEST(Synth, InfeasibleLexicon) {
  SynthSpec s;
  s.lexicon_size = 10000;
  s.alphabet_size = 2;
  s.min_word_length = 1;
  s.max_word_length = 3;
  try {
    generate(s);
    FAIL() << "expected an infeasibility error";
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("only 14 distinct strings"), std::string::npos) << e.what();
  }
}

TEST(Synth, ExactlyFeasibleLexiconUsesEveryString) {
  SynthSpec s;
  s.lexicon_size = 14;
  s.alphabet_size = 2;
  s.min_word_length = 1;
  s.max_word_length = 3;
  s.sentences = 10;
  const auto c = generate(s);
  std::set<std::string> surfaces;
  for (const auto& e : c.lexicon) surfaces.insert(e.surface);
  EXPECT_EQ(surfaces.size(), 14u);
}

TEST(Synth, LexiconIsBijective) {
  const auto c = generate(SynthSpec{});
  std::set<std::string> src, tgt;
  for (const auto& e : c.lexicon) {
    src.insert(e.surface);
    tgt.insert(e.translation);
    EXPECT_GE(e.symbols.size(), 2u);
    EXPECT_LE(e.symbols.size(), 4u);
  }
  EXPECT_EQ(src.size(), 30u);
  EXPECT_EQ(tgt.size(), 30u);
}

TEST(Synth, OracleSegmentationFromTargetLine) {
  // With a bijective lexicon and monotone order, the target line alone
  // determines the gold segmentation.
  const auto c = generate(SynthSpec{});
  std::map<std::string, std::string> back;
  for (const auto& e : c.lexicon) back[e.translation] = e.surface;
  for (std::size_t s = 0; s < 200; ++s) {
    std::string rebuilt;
    for (const auto& w : unicode::split_words(c.target_line(s))) rebuilt += (rebuilt.empty() ? "" : " ") + back.at(w);
    EXPECT_EQ(rebuilt, c.gold_line(s));
  }
}

TEST(Synth, DeterministicPerSeed) {
  testing::TempDir dir;
  SynthSpec s;
  s.sentences = 100;
  generate_files(s, dir / "a");
  generate_files(s, dir / "b");
  for (const char* f : {"source.txt", "target.txt", "gold.txt"})
    EXPECT_EQ(testing::slurp(dir / "a" / f), testing::slurp(dir / "b" / f)) << f;
  s.seed = 8;
  generate_files(s, dir / "c");
  EXPECT_NE(testing::slurp(dir / "a" / "gold.txt"), testing::slurp(dir / "c" / "gold.txt"));
}

TEST(Synth, SentenceLengthsInRange) {
  const auto c = generate(SynthSpec{});
  for (const auto& s : c.sentences) {
    EXPECT_GE(s.size(), 3u);
    EXPECT_LE(s.size(), 8u);
  }
}

TEST(Synth, ZipfRatioOfRankOneToRankTen) {
  const auto c = generate(SynthSpec{});
  std::vector<std::vector<std::string>> tokens;
  for (std::size_t s = 0; s < c.sentences.size(); ++s) tokens.push_back(unicode::split_words(c.gold_line(s)));
  const auto rows = rank_frequency(tokens);
  ASSERT_GE(rows.size(), 10u);
  // Under Zipf with exponent 1 the rank-1 word is ten times as frequent as
  // the rank-10 word.
  const double ratio = static_cast<double>(rows[0].frequency) / static_cast<double>(rows[9].frequency);
  EXPECT_NEAR(ratio, 10.0, 0.25 * 10.0) << "observed " << ratio;
  // Rank order follows lexicon order at the top of the list.
  EXPECT_EQ(rows[0].type, c.lexicon[0].surface);
}

TEST(Synth, SwapNoiseOnlyReordersTargets) {
  SynthSpec s;
  s.swap_rate = 0.5;
  s.sentences = 300;
  const auto c = generate(s);
  std::size_t changed = 0;
  for (std::size_t i = 0; i < c.sentences.size(); ++i) {
    auto a = c.sentences[i], b = c.translations[i];
    changed += a != b;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    EXPECT_EQ(a, b);
  }
  EXPECT_GT(changed, 0u);
}

TEST(Synth, AlphabetIsLatinThenGreek) {
  const auto a = synth_alphabet(28);
  EXPECT_EQ(a[0], "a");
  EXPECT_EQ(a[25], "z");
  EXPECT_EQ(a[26], "α");
  EXPECT_EQ(a[27], "β");
  SynthSpec s;
  s.alphabet_size = 51;
  EXPECT_THROW(s.validate(), ValidationError);
}

}  // namespace
}  // namespace wdisc
