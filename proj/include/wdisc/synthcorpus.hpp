#pragma once

// Seeded generator of an artificial parallel corpus with a known segmentation.
// Source words are random strings over a small alphabet; each maps to exactly
// one target word; sentences draw words from a Zipf law.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "wdisc/error.hpp"
#include "wdisc/random.hpp"
#include "wdisc/unicode.hpp"

namespace wdisc {

struct SynthSpec {
  std::size_t lexicon_size = 30;
  std::size_t alphabet_size = 10;
  std::size_t min_word_length = 2;
  std::size_t max_word_length = 4;
  std::size_t min_sentence_length = 3;
  std::size_t max_sentence_length = 8;
  std::size_t sentences = 3000;
  double zipf_exponent = 1.0;
  /// Probability of swapping each adjacent pair of target words.
  double swap_rate = 0.0;
  std::uint64_t seed = 7;

  void validate() const;
};

namespace synth_detail {

/// Number of distinct strings over `alphabet` symbols with length in [lo, hi],
/// saturating at `cap`.
inline std::size_t count_strings(std::size_t alphabet, std::size_t lo, std::size_t hi, std::size_t cap) {
  std::size_t total = 0;
  for (std::size_t len = lo; len <= hi; ++len) {
    std::size_t n = 1;
    for (std::size_t i = 0; i < len && n < cap; ++i) n *= alphabet;
    total += std::min(n, cap);
    if (total >= cap) return cap;
  }
  return total;
}

inline std::size_t capped_power(std::size_t base, std::size_t exp, std::size_t cap) {
  std::size_t n = 1;
  for (std::size_t i = 0; i < exp && n < cap; ++i) n *= base;
  return std::min(n, cap);
}

}  // namespace synth_detail

inline void SynthSpec::validate() const {
  if (lexicon_size == 0) throw ValidationError("lexicon size must be at least 1");
  if (alphabet_size == 0) throw ValidationError("alphabet size must be at least 1");
  if (alphabet_size > 26 + 24) throw ValidationError("alphabet size is limited to 50 symbols");
  if (min_word_length == 0 || min_word_length > max_word_length)
    throw ValidationError("word length range must satisfy 1 <= min <= max");
  if (min_sentence_length == 0 || min_sentence_length > max_sentence_length)
    throw ValidationError("sentence length range must satisfy 1 <= min <= max");
  if (sentences == 0) throw ValidationError("sentence count must be at least 1");
  if (!(zipf_exponent >= 0.0) || !std::isfinite(zipf_exponent))
    throw ValidationError("Zipf exponent must be finite and non-negative");
  if (!(swap_rate >= 0.0 && swap_rate <= 1.0)) throw ValidationError("swap rate must lie in [0, 1]");
  const std::size_t available =
      synth_detail::count_strings(alphabet_size, min_word_length, max_word_length, lexicon_size);
  if (available < lexicon_size)
    throw ValidationError("infeasible lexicon: only " + std::to_string(available) + " distinct strings of length " +
                          std::to_string(min_word_length) + "-" + std::to_string(max_word_length) + " exist over " +
                          std::to_string(alphabet_size) + " symbols, " + std::to_string(lexicon_size) +
                          " requested");
}

/// Lowercase Latin letters first, then lowercase Greek.
inline std::vector<std::string> synth_alphabet(std::size_t n) {
  std::vector<std::string> out;
  for (char32_t c = U'a'; c <= U'z' && out.size() < n; ++c) out.push_back(unicode::encode(c));
  for (char32_t c = U'α'; c <= U'ω' && out.size() < n; ++c)
    if (c != U'ς') out.push_back(unicode::encode(c));
  return out;
}

struct SynthEntry {
  /// Source word as symbol strings.
  std::vector<std::string> symbols;
  std::string surface;
  std::string translation;
};

struct SynthCorpus {
  /// Entry i has Zipf rank i + 1.
  std::vector<SynthEntry> lexicon;
  /// Lexicon indices of each sentence's source words.
  std::vector<std::vector<std::size_t>> sentences;
  /// Lexicon indices in target order (differs from `sentences` only with swaps).
  std::vector<std::vector<std::size_t>> translations;

  std::string source_line(std::size_t s) const {
    std::string out;
    for (auto w : sentences[s]) out += lexicon[w].surface;
    return out;
  }
  std::string gold_line(std::size_t s) const {
    std::string out;
    for (std::size_t i = 0; i < sentences[s].size(); ++i) out += (i ? " " : "") + lexicon[sentences[s][i]].surface;
    return out;
  }
  std::string target_line(std::size_t s) const {
    std::string out;
    for (std::size_t i = 0; i < translations[s].size(); ++i)
      out += (i ? " " : "") + lexicon[translations[s][i]].translation;
    return out;
  }
};

inline SynthCorpus generate(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const auto alphabet = synth_alphabet(spec.alphabet_size);
  SynthCorpus out;

  // Lexicon: a length drawn uniformly among lengths that still have unused
  // strings, then a uniformly random unused string of that length.
  std::vector<std::set<std::vector<std::size_t>>> used(spec.max_word_length + 1);
  const std::size_t width = spec.max_word_length - spec.min_word_length + 1;
  while (out.lexicon.size() < spec.lexicon_size) {
    std::size_t len = spec.min_word_length + static_cast<std::size_t>(rng.below(width));
    const std::size_t capacity = synth_detail::capped_power(spec.alphabet_size, len, spec.lexicon_size + 1);
    if (used[len].size() >= capacity) continue;
    std::vector<std::size_t> w(len);
    for (auto& c : w) c = static_cast<std::size_t>(rng.below(spec.alphabet_size));
    if (!used[len].insert(w).second) continue;
    SynthEntry e;
    for (auto c : w) {
      e.symbols.push_back(alphabet[c]);
      e.surface += alphabet[c];
    }
    const std::size_t idx = out.lexicon.size();
    e.translation = "w" + std::to_string(idx / 100) + std::to_string(idx / 10 % 10) + std::to_string(idx % 10);
    out.lexicon.push_back(std::move(e));
  }

  // Zipf sampling by inverse CDF.
  std::vector<double> cdf(spec.lexicon_size);
  double z = 0.0;
  for (std::size_t r = 0; r < spec.lexicon_size; ++r) cdf[r] = (z += std::pow(static_cast<double>(r + 1), -spec.zipf_exponent));
  for (auto& c : cdf) c /= z;
  auto draw = [&] {
    const double u = rng.uniform();
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    return std::min(static_cast<std::size_t>(it - cdf.begin()), spec.lexicon_size - 1);
  };

  const std::size_t len_width = spec.max_sentence_length - spec.min_sentence_length + 1;
  for (std::size_t s = 0; s < spec.sentences; ++s) {
    const std::size_t n = spec.min_sentence_length + static_cast<std::size_t>(rng.below(len_width));
    std::vector<std::size_t> words(n);
    for (auto& w : words) w = draw();
    std::vector<std::size_t> target = words;
    if (spec.swap_rate > 0.0) {
      for (std::size_t i = 0; i + 1 < target.size(); ++i)
        if (rng.uniform() < spec.swap_rate) std::swap(target[i], target[i + 1]);
    }
    out.sentences.push_back(std::move(words));
    out.translations.push_back(std::move(target));
  }
  return out;
}

struct SynthFiles {
  std::filesystem::path source, target, gold, lexicon;
};

/// Writes source.txt, target.txt, gold.txt and lexicon.tsv (source word,
/// translation, Zipf rank) into `dir`.
inline SynthFiles write_synth_corpus(const SynthCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  SynthFiles f{dir / "source.txt", dir / "target.txt", dir / "gold.txt", dir / "lexicon.tsv"};
  std::ofstream src(f.source, std::ios::binary), tgt(f.target, std::ios::binary), gold(f.gold, std::ios::binary),
      lex(f.lexicon, std::ios::binary);
  if (!src || !tgt || !gold || !lex) throw IoError("cannot write synthetic corpus to " + dir.string());
  for (std::size_t s = 0; s < corpus.sentences.size(); ++s) {
    src << corpus.source_line(s) << '\n';
    tgt << corpus.target_line(s) << '\n';
    gold << corpus.gold_line(s) << '\n';
  }
  for (std::size_t i = 0; i < corpus.lexicon.size(); ++i)
    lex << corpus.lexicon[i].surface << '\t' << corpus.lexicon[i].translation << '\t' << i + 1 << '\n';
  if (!src || !tgt || !gold || !lex) throw IoError("failed writing synthetic corpus to " + dir.string());
  return f;
}

inline SynthFiles generate_files(const SynthSpec& spec, const std::filesystem::path& dir) {
  return write_synth_corpus(generate(spec), dir);
}

}  // namespace wdisc
