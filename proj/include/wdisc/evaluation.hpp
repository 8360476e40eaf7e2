#pragma once

// Segmentation scoring against a gold standard: token precision/recall/F by
// exact span match, type precision/recall/F over vocabularies, and the
// rank-frequency and type-length distributions of a segmented corpus.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wdisc/checkpoint.hpp"
#include "wdisc/corpus.hpp"
#include "wdisc/random.hpp"
#include "wdisc/unicode.hpp"

namespace wdisc {

/// A sentence as a symbol sequence plus a tiling of it into tokens.
struct SegmentedSentence {
  std::vector<std::string> symbols;
  std::vector<Span> spans;

  std::string token(const Span& s) const {
    std::string out;
    for (std::size_t i = s.begin; i < s.end; ++i) out += symbols[i];
    return out;
  }
  std::vector<std::string> tokens() const {
    std::vector<std::string> out;
    out.reserve(spans.size());
    for (const auto& s : spans) out.push_back(token(s));
    return out;
  }
  std::string line() const {
    std::string out;
    for (std::size_t k = 0; k < spans.size(); ++k) out += (k ? " " : "") + token(spans[k]);
    return out;
  }
};

/// Splits a whitespace-segmented line into symbols and token spans.
inline SegmentedSentence parse_segmented(const std::string& line,
                                         const unicode::SymbolSplitter& splitter = unicode::SymbolSplitter()) {
  SegmentedSentence s;
  for (const auto& w : unicode::split_words(unicode::nfc(line))) {
    auto sym = splitter.split(w);
    const std::size_t b = s.symbols.size();
    s.symbols.insert(s.symbols.end(), sym.begin(), sym.end());
    s.spans.push_back({b, s.symbols.size()});
  }
  return s;
}

inline std::vector<SegmentedSentence> read_segmented(const std::filesystem::path& path,
                                                     const unicode::SymbolSplitter& splitter = unicode::SymbolSplitter()) {
  std::vector<SegmentedSentence> out;
  for (const auto& l : detail::read_lines(path)) out.push_back(parse_segmented(l, splitter));
  return out;
}

inline void write_segmented(const std::filesystem::path& path, const std::vector<SegmentedSentence>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : sentences) out << s.line() << '\n';
}

/// Gold segmentation of every corpus pair, in symbol coordinates.
inline std::vector<SegmentedSentence> gold_sentences(const Corpus& corpus) {
  std::vector<SegmentedSentence> out;
  out.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    if (!p.gold) throw ValidationError("pair at line " + std::to_string(p.line + 1) + " has no gold segmentation");
    SegmentedSentence s;
    s.symbols = corpus.symbols(p);
    s.spans = expand_spans(*p.gold, p);
    out.push_back(std::move(s));
  }
  return out;
}

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
};

inline double f_score(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

inline PRF make_prf(std::size_t correct, std::size_t hypothesis, std::size_t gold) {
  PRF m;
  m.precision = hypothesis ? static_cast<double>(correct) / static_cast<double>(hypothesis) : 0.0;
  m.recall = gold ? static_cast<double>(correct) / static_cast<double>(gold) : 0.0;
  m.f = f_score(m.precision, m.recall);
  return m;
}

struct TokenMetrics {
  PRF prf;
  std::size_t correct = 0;
  std::size_t hypothesis_tokens = 0;
  std::size_t gold_tokens = 0;
};

/// A hypothesis token is correct when the gold tiling of the same sentence
/// contains exactly its span.
inline TokenMetrics token_metrics(const std::vector<SegmentedSentence>& hypothesis,
                                  const std::vector<SegmentedSentence>& gold) {
  if (hypothesis.size() != gold.size())
    throw ValidationError("hypothesis has " + std::to_string(hypothesis.size()) + " sentences, gold has " +
                          std::to_string(gold.size()));
  TokenMetrics m;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const auto& h = hypothesis[s];
    const auto& g = gold[s];
    if (h.symbols != g.symbols)
      throw ValidationError("symbol sequences differ between hypothesis and gold in sentence " + std::to_string(s + 1));
    if (!tiles(h.spans, h.symbols.size()) || !tiles(g.spans, g.symbols.size()))
      throw ValidationError("segmentation does not tile sentence " + std::to_string(s + 1));
    // Both tilings are sorted, so a merge walk finds the shared spans.
    std::size_t i = 0, j = 0;
    while (i < h.spans.size() && j < g.spans.size()) {
      if (h.spans[i] == g.spans[j]) {
        ++m.correct;
        ++i;
        ++j;
      } else if (h.spans[i].end <= g.spans[j].end) {
        ++i;
      } else {
        ++j;
      }
    }
    m.hypothesis_tokens += h.spans.size();
    m.gold_tokens += g.spans.size();
  }
  m.prf = make_prf(m.correct, m.hypothesis_tokens, m.gold_tokens);
  return m;
}

struct TypeMetrics {
  PRF prf;
  std::size_t correct = 0;
  std::size_t generated = 0;
  std::size_t gold = 0;
};

inline TypeMetrics type_metrics(const std::set<std::string>& hypothesis, const std::set<std::string>& gold) {
  TypeMetrics m;
  for (const auto& t : hypothesis)
    if (gold.count(t)) ++m.correct;
  m.generated = hypothesis.size();
  m.gold = gold.size();
  m.prf = make_prf(m.correct, m.generated, m.gold);
  return m;
}

inline std::set<std::string> vocabulary(const std::vector<SegmentedSentence>& sentences) {
  std::set<std::string> v;
  for (const auto& s : sentences)
    for (const auto& sp : s.spans) v.insert(s.token(sp));
  return v;
}

struct EvalOptions {
  bool token_scores = true;
  /// Types removed from both vocabularies before type scoring.
  std::vector<std::string> excluded_types;
};

struct EvalReport {
  std::size_t sentences = 0;
  bool has_token_scores = false;
  TokenMetrics tokens;
  TypeMetrics types;
  std::size_t excluded_types = 0;

  std::string to_text() const {
    auto pct = [](double x) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%6.2f", 100.0 * x);
      return std::string(buf);
    };
    std::ostringstream o;
    o << "sentences           " << sentences << '\n';
    if (has_token_scores) {
      o << "token precision     " << pct(tokens.prf.precision) << "%\n"
        << "token recall        " << pct(tokens.prf.recall) << "%\n"
        << "token F-score       " << pct(tokens.prf.f) << "%\n"
        << "tokens hyp/gold     " << tokens.hypothesis_tokens << " / " << tokens.gold_tokens << " (" << tokens.correct
        << " correct)\n";
    }
    o << "type precision      " << pct(types.prf.precision) << "%\n"
      << "type recall         " << pct(types.prf.recall) << "%\n"
      << "type F-score        " << pct(types.prf.f) << "%\n"
      << "correct types       " << types.correct << '\n'
      << "generated types     " << types.generated << '\n'
      << "gold types          " << types.gold << '\n';
    if (excluded_types) o << "excluded types      " << excluded_types << '\n';
    return o.str();
  }

  std::string to_key_values() const {
    std::ostringstream o;
    o << "sentences=" << sentences << '\n';
    if (has_token_scores) {
      o << "token_precision=" << format_double(tokens.prf.precision) << '\n'
        << "token_recall=" << format_double(tokens.prf.recall) << '\n'
        << "token_f=" << format_double(tokens.prf.f) << '\n'
        << "token_correct=" << tokens.correct << '\n'
        << "token_hypothesis=" << tokens.hypothesis_tokens << '\n'
        << "token_gold=" << tokens.gold_tokens << '\n';
    }
    o << "type_precision=" << format_double(types.prf.precision) << '\n'
      << "type_recall=" << format_double(types.prf.recall) << '\n'
      << "type_f=" << format_double(types.prf.f) << '\n'
      << "type_correct=" << types.correct << '\n'
      << "type_generated=" << types.generated << '\n'
      << "type_gold=" << types.gold << '\n'
      << "excluded_types=" << excluded_types << '\n';
    return o.str();
  }
};

/// Scores a hypothesis against gold. The type vocabularies are those of the
/// given sentences, so pass the portion that was segmented.
inline EvalReport evaluate(const std::vector<SegmentedSentence>& hypothesis, const std::vector<SegmentedSentence>& gold,
                           const EvalOptions& options = {}) {
  EvalReport r;
  r.sentences = gold.size();
  if (options.token_scores) {
    r.tokens = token_metrics(hypothesis, gold);
    r.has_token_scores = true;
  } else if (hypothesis.size() != gold.size()) {
    throw ValidationError("hypothesis and gold differ in sentence count");
  }
  auto h = vocabulary(hypothesis);
  auto g = vocabulary(gold);
  for (const auto& t : options.excluded_types) {
    h.erase(t);
    g.erase(t);
  }
  r.excluded_types = options.excluded_types.size();
  r.types = type_metrics(h, g);
  return r;
}

/// Recall of a fixed type list among the hypothesis types.
inline double type_list_recall(const std::vector<SegmentedSentence>& hypothesis, const std::vector<std::string>& types) {
  if (types.empty()) return 0.0;
  const auto h = vocabulary(hypothesis);
  std::size_t found = 0;
  for (const auto& t : types) found += h.count(t);
  return static_cast<double>(found) / static_cast<double>(types.size());
}

// ---------------------------------------------------------------------------
// Vocabulary analyses.

struct RankFrequencyRow {
  std::size_t rank = 0;
  std::string type;
  std::size_t frequency = 0;
  friend bool operator==(const RankFrequencyRow&, const RankFrequencyRow&) = default;
};

/// Type frequencies sorted descending, ties in lexicographic order.
inline std::vector<RankFrequencyRow> rank_frequency(const std::vector<std::vector<std::string>>& token_lists) {
  std::map<std::string, std::size_t> counts;
  for (const auto& l : token_lists)
    for (const auto& t : l) ++counts[t];
  std::vector<RankFrequencyRow> rows;
  for (const auto& [t, n] : counts) rows.push_back({0, t, n});
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.frequency > b.frequency; });
  for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = i + 1;
  return rows;
}

inline std::vector<RankFrequencyRow> rank_frequency(const std::vector<SegmentedSentence>& sentences) {
  std::vector<std::vector<std::string>> lists;
  for (const auto& s : sentences) lists.push_back(s.tokens());
  return rank_frequency(lists);
}

struct LengthHistogram {
  /// Length in symbols -> share of types.
  std::map<std::size_t, double> bins;
  double mean = 0.0;
  std::size_t types = 0;
};

inline LengthHistogram length_histogram(const std::vector<std::size_t>& type_lengths) {
  LengthHistogram h;
  h.types = type_lengths.size();
  if (type_lengths.empty()) return h;
  std::map<std::size_t, std::size_t> counts;
  double sum = 0.0;
  for (auto l : type_lengths) {
    ++counts[l];
    sum += static_cast<double>(l);
  }
  const auto n = static_cast<double>(type_lengths.size());
  for (const auto& [l, c] : counts) h.bins[l] = static_cast<double>(c) / n;
  h.mean = sum / n;
  return h;
}

/// Length distribution over the distinct types of a segmentation.
inline LengthHistogram length_histogram(const std::vector<SegmentedSentence>& sentences) {
  std::map<std::string, std::size_t> len;
  for (const auto& s : sentences)
    for (const auto& sp : s.spans) len.emplace(s.token(sp), sp.size());
  std::vector<std::size_t> v;
  for (const auto& [t, l] : len) v.push_back(l);
  return length_histogram(v);
}

inline void write_rank_frequency(const std::filesystem::path& path, const std::vector<RankFrequencyRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "rank\ttype\tfrequency\n";
  for (const auto& r : rows) out << r.rank << '\t' << r.type << '\t' << r.frequency << '\n';
}

inline void write_length_histogram(const std::filesystem::path& path, const LengthHistogram& h) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << "length\tshare\n";
  for (const auto& [l, p] : h.bins) out << l << '\t' << format_double(p) << '\n';
  out << "# mean\t" << format_double(h.mean) << '\n';
}

// ---------------------------------------------------------------------------
// Random-boundary baseline.

/// Share of symbol gaps that carry a gold boundary.
inline double boundary_rate(const std::vector<SegmentedSentence>& gold) {
  std::size_t boundaries = 0, gaps = 0;
  for (const auto& s : gold) {
    if (s.symbols.empty()) continue;
    boundaries += s.spans.size() - 1;
    gaps += s.symbols.size() - 1;
  }
  return gaps ? static_cast<double>(boundaries) / static_cast<double>(gaps) : 0.0;
}

/// Places a boundary in each gap independently with probability `rate`.
inline std::vector<SegmentedSentence> random_segmentation(const std::vector<SegmentedSentence>& gold, double rate,
                                                          std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SegmentedSentence> out;
  out.reserve(gold.size());
  for (const auto& g : gold) {
    SegmentedSentence s;
    s.symbols = g.symbols;
    std::size_t begin = 0;
    for (std::size_t i = 1; i < s.symbols.size(); ++i) {
      if (rng.uniform() < rate) {
        s.spans.push_back({begin, i});
        begin = i;
      }
    }
    if (!s.symbols.empty()) s.spans.push_back({begin, s.symbols.size()});
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace wdisc
