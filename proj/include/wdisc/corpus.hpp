#pragma once

// Parallel corpora of unsegmented source text and word-segmented target
// text: loading, vocabularies, splits, and injection of known words.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "wdisc/error.hpp"
#include "wdisc/random.hpp"
#include "wdisc/unicode.hpp"

namespace wdisc {

using TokenId = std::uint32_t;

/// Half-open interval [begin, end) over a token sequence.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend auto operator<=>(const Span&, const Span&) = default;
};

/// True when `spans` are contiguous, non-empty, and cover [0, length).
inline bool tiles(const std::vector<Span>& spans, std::size_t length) {
  std::size_t pos = 0;
  for (const auto& s : spans) {
    if (s.begin != pos || s.end <= s.begin) return false;
    pos = s.end;
  }
  return pos == length && (length == 0 || !spans.empty());
}

class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kNumReserved = 4;

  Vocabulary() : surfaces_{"<pad>", "<s>", "</s>", "<unk>"} {
    for (TokenId i = 0; i < kNumReserved; ++i) index_.emplace(surfaces_[i], i);
  }

  /// Ids assigned by descending count, ties broken by byte-wise string order.
  static Vocabulary from_counts(const std::map<std::string, std::size_t>& counts) {
    std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
    std::stable_sort(items.begin(), items.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });
    Vocabulary v;
    for (const auto& [s, c] : items) v.add(s);
    return v;
  }

  /// Returns the id of `surface`, appending it if new.
  TokenId add(const std::string& surface) {
    if (auto it = index_.find(surface); it != index_.end()) return it->second;
    const auto id = static_cast<TokenId>(surfaces_.size());
    surfaces_.push_back(surface);
    index_.emplace(surface, id);
    return id;
  }

  std::optional<TokenId> find(const std::string& surface) const {
    if (auto it = index_.find(surface); it != index_.end()) return it->second;
    return std::nullopt;
  }

  /// Maps unseen surfaces to the unknown id.
  TokenId id(const std::string& surface) const { return find(surface).value_or(kUnk); }

  const std::string& surface(TokenId id) const {
    if (id >= surfaces_.size()) throw ValidationError("token id out of vocabulary range");
    return surfaces_[id];
  }

  bool contains(TokenId id) const { return id < surfaces_.size(); }
  std::size_t size() const { return surfaces_.size(); }
  std::size_t num_regular() const { return surfaces_.size() - kNumReserved; }
  const std::vector<std::string>& surfaces() const { return surfaces_; }

  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write vocabulary: " + path.string());
    for (const auto& s : surfaces_) out << s << '\n';
  }

  static Vocabulary load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read vocabulary: " + path.string());
    Vocabulary v;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      if (n < kNumReserved) {
        if (line != v.surfaces_[n]) throw IoError("vocabulary reserved ids are corrupt: " + path.string());
      } else if (v.add(line) != n) {
        throw IoError("duplicate vocabulary entry '" + line + "' in " + path.string());
      }
      ++n;
    }
    return v;
  }

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.surfaces_ == b.surfaces_; }

 private:
  std::vector<std::string> surfaces_;
  std::unordered_map<std::string, TokenId> index_;
};

struct SentencePair {
  /// Source tokens: single symbols, or whole words after injection.
  std::vector<TokenId> source;
  std::vector<TokenId> target;
  /// Gold word spans over `source`.
  std::optional<std::vector<Span>> gold;
  /// Number of underlying symbols per source token; empty means all ones.
  std::vector<std::size_t> widths;
  /// Zero-based line number in the originating files.
  std::size_t line = 0;

  std::size_t width(std::size_t i) const { return widths.empty() ? 1 : widths[i]; }

  std::size_t num_symbols() const {
    if (widths.empty()) return source.size();
    std::size_t n = 0;
    for (auto w : widths) n += w;
    return n;
  }
};

/// Converts spans over tokens into spans over underlying symbols.
inline std::vector<Span> expand_spans(const std::vector<Span>& spans, const SentencePair& pair) {
  if (pair.widths.empty()) return spans;
  std::vector<std::size_t> offset(pair.source.size() + 1, 0);
  for (std::size_t i = 0; i < pair.source.size(); ++i) offset[i + 1] = offset[i] + pair.widths[i];
  std::vector<Span> out;
  out.reserve(spans.size());
  for (const auto& s : spans) {
    if (s.end > pair.source.size()) throw ValidationError("span exceeds token sequence");
    out.push_back({offset[s.begin], offset[s.end]});
  }
  return out;
}

enum class Side { source, target };

struct Provenance {
  std::string source_path;
  std::string target_path;
  std::string gold_path;
  std::string inventory_path;
  std::string normalization = "NFC";
};

struct Corpus {
  std::vector<SentencePair> pairs;
  Vocabulary source_vocab;
  Vocabulary target_vocab;
  Provenance provenance;
  /// Word types merged into single source tokens, most frequent first.
  std::vector<std::string> supervised_types;
  /// Symbol sequence of every merged type.
  std::map<std::string, std::vector<std::string>> merged_symbols;

  std::size_t size() const { return pairs.size(); }
  bool empty() const { return pairs.empty(); }

  const Vocabulary& vocab(Side side) const { return side == Side::source ? source_vocab : target_vocab; }

  std::string source_surface(const SentencePair& p, Span s) const {
    std::string out;
    for (std::size_t i = s.begin; i < s.end; ++i) out += source_vocab.surface(p.source[i]);
    return out;
  }

  /// Gold word surfaces of one sentence.
  std::vector<std::string> gold_words(const SentencePair& p) const {
    if (!p.gold) throw ValidationError("sentence has no gold segmentation");
    std::vector<std::string> words;
    for (const auto& s : *p.gold) words.push_back(source_surface(p, s));
    return words;
  }

  /// Source side of a pair as symbol strings, with merged tokens expanded.
  std::vector<std::string> symbols(const SentencePair& p) const {
    std::vector<std::string> out;
    out.reserve(p.num_symbols());
    for (std::size_t i = 0; i < p.source.size(); ++i) {
      const std::string& surf = source_vocab.surface(p.source[i]);
      if (p.width(i) == 1) {
        out.push_back(surf);
        continue;
      }
      auto it = merged_symbols.find(surf);
      if (it == merged_symbols.end() || it->second.size() != p.width(i))
        throw ValidationError("merged token '" + surf + "' has no recorded symbol sequence");
      out.insert(out.end(), it->second.begin(), it->second.end());
    }
    return out;
  }
};

namespace detail {

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(std::move(line));
  }
  return lines;
}

inline void count_into(std::map<std::string, std::size_t>& counts, const std::vector<std::string>& toks) {
  for (const auto& t : toks) ++counts[t];
}

}  // namespace detail

/// Recomputes the vocabulary of one side from token frequencies. Reserved ids
/// are never counted.
inline Vocabulary build_vocab(const Corpus& corpus, Side side) {
  if (corpus.empty()) throw ValidationError("cannot build a vocabulary from an empty corpus");
  const Vocabulary& old = corpus.vocab(side);
  std::map<std::string, std::size_t> counts;
  for (const auto& p : corpus.pairs) {
    for (TokenId id : side == Side::source ? p.source : p.target)
      if (id >= Vocabulary::kNumReserved) ++counts[old.surface(id)];
  }
  return Vocabulary::from_counts(counts);
}

/// Re-expresses every pair under new vocabularies; unseen surfaces become
/// the unknown id.
inline Corpus with_vocabularies(const Corpus& corpus, const Vocabulary& source, const Vocabulary& target) {
  Corpus out;
  out.source_vocab = source;
  out.target_vocab = target;
  out.provenance = corpus.provenance;
  out.supervised_types = corpus.supervised_types;
  out.merged_symbols = corpus.merged_symbols;
  out.pairs.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    SentencePair q = p;
    for (auto& id : q.source) id = source.id(corpus.source_vocab.surface(id));
    for (auto& id : q.target) id = target.id(corpus.target_vocab.surface(id));
    out.pairs.push_back(std::move(q));
  }
  return out;
}

/// Reads line-aligned UTF-8 files. Source lines are NFC-normalized,
/// whitespace-stripped and split into symbols; target lines are split on
/// whitespace; gold lines give the reference word segmentation of the source.
inline Corpus load_parallel(const std::filesystem::path& source_path, const std::filesystem::path& target_path,
                            const std::optional<std::filesystem::path>& gold_path = std::nullopt,
                            const std::optional<std::filesystem::path>& symbol_inventory = std::nullopt) {
  unicode::SymbolSplitter splitter;
  if (symbol_inventory) {
    std::vector<std::string> graphemes;
    for (auto& l : detail::read_lines(*symbol_inventory)) {
      auto g = unicode::strip_whitespace(l);
      if (!g.empty()) graphemes.push_back(std::move(g));
    }
    splitter = unicode::SymbolSplitter(std::move(graphemes));
  }

  const auto src_lines = detail::read_lines(source_path);
  const auto tgt_lines = detail::read_lines(target_path);
  std::vector<std::string> gold_lines;
  if (gold_path) gold_lines = detail::read_lines(*gold_path);

  if (src_lines.size() != tgt_lines.size())
    throw ValidationError("line-count mismatch: " + std::to_string(src_lines.size()) + " source lines vs " +
                          std::to_string(tgt_lines.size()) + " target lines");
  if (gold_path && gold_lines.size() != src_lines.size())
    throw ValidationError("line-count mismatch: " + std::to_string(src_lines.size()) + " source lines vs " +
                          std::to_string(gold_lines.size()) + " gold lines");
  if (src_lines.empty()) throw ValidationError("corpus is empty");

  struct Raw {
    std::vector<std::string> source, target;
    std::optional<std::vector<Span>> gold;
  };
  std::vector<Raw> raw(src_lines.size());
  std::map<std::string, std::size_t> src_counts, tgt_counts;

  for (std::size_t i = 0; i < src_lines.size(); ++i) {
    const auto where = " at line " + std::to_string(i + 1);
    const std::string src = unicode::strip_whitespace(unicode::nfc(src_lines[i]));
    if (src.empty()) throw ValidationError("empty source line" + where);
    raw[i].source = splitter.split(src);
    raw[i].target = unicode::split_words(unicode::nfc(tgt_lines[i]));
    if (raw[i].target.empty()) throw ValidationError("empty target line" + where);
    if (gold_path) {
      const auto words = unicode::split_words(unicode::nfc(gold_lines[i]));
      if (words.empty()) throw ValidationError("empty gold line" + where);
      std::string joined;
      std::vector<Span> spans;
      std::size_t pos = 0;
      for (const auto& w : words) {
        joined += w;
        const auto n = splitter.split(w).size();
        spans.push_back({pos, pos + n});
        pos += n;
      }
      if (joined != src || pos != raw[i].source.size())
        throw ValidationError("gold segmentation does not match source text" + where);
      raw[i].gold = std::move(spans);
    }
    detail::count_into(src_counts, raw[i].source);
    detail::count_into(tgt_counts, raw[i].target);
  }

  Corpus corpus;
  corpus.source_vocab = Vocabulary::from_counts(src_counts);
  corpus.target_vocab = Vocabulary::from_counts(tgt_counts);
  corpus.provenance.source_path = source_path.string();
  corpus.provenance.target_path = target_path.string();
  if (gold_path) corpus.provenance.gold_path = gold_path->string();
  if (symbol_inventory) corpus.provenance.inventory_path = symbol_inventory->string();
  corpus.pairs.reserve(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    SentencePair p;
    p.line = i;
    for (const auto& s : raw[i].source) p.source.push_back(corpus.source_vocab.id(s));
    for (const auto& w : raw[i].target) p.target.push_back(corpus.target_vocab.id(w));
    p.gold = std::move(raw[i].gold);
    corpus.pairs.push_back(std::move(p));
  }
  return corpus;
}

namespace detail {

inline Corpus subset(const Corpus& corpus, const std::vector<std::size_t>& idx) {
  Corpus out;
  out.source_vocab = corpus.source_vocab;
  out.target_vocab = corpus.target_vocab;
  out.provenance = corpus.provenance;
  out.supervised_types = corpus.supervised_types;
  out.merged_symbols = corpus.merged_symbols;
  out.pairs.reserve(idx.size());
  for (auto i : idx) out.pairs.push_back(corpus.pairs[i]);
  return out;
}

}  // namespace detail

/// Seeded partition into (train, dev) with exactly `dev_count` dev pairs.
/// Both halves keep the original sentence order and share the vocabularies.
inline std::pair<Corpus, Corpus> split_train_dev_count(const Corpus& corpus, std::size_t dev_count,
                                                       std::uint64_t seed) {
  if (dev_count == 0 || dev_count >= corpus.size())
    throw ValidationError("corpus of " + std::to_string(corpus.size()) +
                          " pairs is too small for a non-empty train/dev split");
  std::vector<std::size_t> perm(corpus.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(seed);
  rng.shuffle(perm);
  std::vector<std::size_t> dev(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(dev_count));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(dev_count), perm.end());
  std::sort(dev.begin(), dev.end());
  std::sort(train.begin(), train.end());
  return {detail::subset(corpus, train), detail::subset(corpus, dev)};
}

/// |dev| = round(dev_fraction * |corpus|).
inline std::pair<Corpus, Corpus> split_train_dev(const Corpus& corpus, double dev_fraction, std::uint64_t seed) {
  if (!(dev_fraction > 0.0 && dev_fraction < 1.0)) throw ValidationError("dev_fraction must lie in (0, 1)");
  const auto n = static_cast<std::size_t>(std::llround(dev_fraction * static_cast<double>(corpus.size())));
  return split_train_dev_count(corpus, n, seed);
}

/// Gold word types ranked by token count, ties broken lexicographically.
inline std::vector<std::pair<std::string, std::size_t>> gold_type_counts(const Corpus& corpus) {
  std::map<std::string, std::size_t> counts;
  for (const auto& p : corpus.pairs)
    for (auto& w : corpus.gold_words(p)) ++counts[w];
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranked;
}

/// Merges every gold occurrence of the `k` most frequent gold word types into
/// a single source token; all other positions stay single symbols. The source
/// vocabulary keeps its ids and is extended with the merged types.
inline Corpus inject_supervision(const Corpus& corpus, std::size_t k) {
  if (k == 0) throw ValidationError("supervision requires k >= 1");
  if (!corpus.supervised_types.empty()) throw ValidationError("corpus already carries injected supervision");
  for (const auto& p : corpus.pairs)
    if (!p.gold) throw ValidationError("supervision requires gold segmentation on every pair");
  const auto ranked = gold_type_counts(corpus);
  if (k > ranked.size())
    throw ValidationError("k = " + std::to_string(k) + " exceeds the " + std::to_string(ranked.size()) +
                          " gold word types");

  Corpus out;
  out.source_vocab = corpus.source_vocab;
  out.target_vocab = corpus.target_vocab;
  out.provenance = corpus.provenance;
  std::unordered_set<std::string> selected;
  for (std::size_t i = 0; i < k; ++i) {
    selected.insert(ranked[i].first);
    out.supervised_types.push_back(ranked[i].first);
    out.source_vocab.add(ranked[i].first);
  }

  out.pairs.reserve(corpus.size());
  for (const auto& p : corpus.pairs) {
    SentencePair q;
    q.target = p.target;
    q.line = p.line;
    std::vector<Span> gold;
    for (const auto& s : *p.gold) {
      const std::string w = corpus.source_surface(p, s);
      const std::size_t begin = q.source.size();
      if (selected.count(w)) {
        if (!out.merged_symbols.count(w)) {
          auto& sym = out.merged_symbols[w];
          for (std::size_t i = s.begin; i < s.end; ++i) sym.push_back(corpus.source_vocab.surface(p.source[i]));
        }
        q.source.push_back(*out.source_vocab.find(w));
        q.widths.push_back(s.size());
      } else {
        for (std::size_t i = s.begin; i < s.end; ++i) {
          q.source.push_back(p.source[i]);
          q.widths.push_back(1);
        }
      }
      gold.push_back({begin, q.source.size()});
    }
    q.gold = std::move(gold);
    out.pairs.push_back(std::move(q));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization: a directory holding both vocabularies, one line per pair
// (source ids, target ids, gold spans, widths, line number; tab-separated)
// and a metadata file.

inline void save_corpus(const Corpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  corpus.source_vocab.save(dir / "source.vocab");
  corpus.target_vocab.save(dir / "target.vocab");
  std::ofstream out(dir / "pairs.tsv", std::ios::binary);
  if (!out) throw IoError("cannot write " + (dir / "pairs.tsv").string());
  auto ids = [&](const std::vector<TokenId>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << v[i];
  };
  for (const auto& p : corpus.pairs) {
    ids(p.source);
    out << '\t';
    ids(p.target);
    out << '\t';
    if (p.gold) {
      for (std::size_t i = 0; i < p.gold->size(); ++i) out << (i ? " " : "") << (*p.gold)[i].end;
    } else {
      out << '-';
    }
    out << '\t';
    if (p.widths.empty()) {
      out << '-';
    } else {
      for (std::size_t i = 0; i < p.widths.size(); ++i) out << (i ? " " : "") << p.widths[i];
    }
    out << '\t' << p.line << '\n';
  }
  std::ofstream meta(dir / "meta.txt", std::ios::binary);
  meta << "source_path\t" << corpus.provenance.source_path << '\n'
       << "target_path\t" << corpus.provenance.target_path << '\n'
       << "gold_path\t" << corpus.provenance.gold_path << '\n'
       << "inventory_path\t" << corpus.provenance.inventory_path << '\n'
       << "normalization\t" << corpus.provenance.normalization << '\n';
  for (const auto& t : corpus.supervised_types) {
    meta << "supervised\t" << t << '\t';
    const auto it = corpus.merged_symbols.find(t);
    if (it != corpus.merged_symbols.end())
      for (std::size_t i = 0; i < it->second.size(); ++i) meta << (i ? " " : "") << it->second[i];
    meta << '\n';
  }
}

inline Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  corpus.source_vocab = Vocabulary::load(dir / "source.vocab");
  corpus.target_vocab = Vocabulary::load(dir / "target.vocab");
  auto split_fields = [](const std::string& line) {
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string x;
    while (std::getline(ss, x, '\t')) f.push_back(x);
    return f;
  };
  auto numbers = [](const std::string& s) {
    std::vector<std::size_t> v;
    if (s == "-") return v;
    std::istringstream in(s);
    std::size_t x;
    while (in >> x) v.push_back(x);
    return v;
  };
  for (const auto& line : detail::read_lines(dir / "pairs.tsv")) {
    const auto f = split_fields(line);
    if (f.size() != 5) throw IoError("malformed corpus line in " + (dir / "pairs.tsv").string());
    SentencePair p;
    for (auto x : numbers(f[0])) p.source.push_back(static_cast<TokenId>(x));
    for (auto x : numbers(f[1])) p.target.push_back(static_cast<TokenId>(x));
    if (f[2] != "-") {
      std::vector<Span> spans;
      std::size_t b = 0;
      for (auto e : numbers(f[2])) {
        spans.push_back({b, e});
        b = e;
      }
      p.gold = std::move(spans);
    }
    p.widths = numbers(f[3]);
    p.line = numbers(f[4]).at(0);
    for (auto id : p.source)
      if (!corpus.source_vocab.contains(id)) throw IoError("source id out of range in stored corpus");
    for (auto id : p.target)
      if (!corpus.target_vocab.contains(id)) throw IoError("target id out of range in stored corpus");
    corpus.pairs.push_back(std::move(p));
  }
  for (const auto& line : detail::read_lines(dir / "meta.txt")) {
    const auto f = split_fields(line);
    const std::string value = f.size() > 1 ? f[1] : "";
    if (f.empty()) continue;
    if (f[0] == "source_path") corpus.provenance.source_path = value;
    else if (f[0] == "target_path") corpus.provenance.target_path = value;
    else if (f[0] == "gold_path") corpus.provenance.gold_path = value;
    else if (f[0] == "inventory_path") corpus.provenance.inventory_path = value;
    else if (f[0] == "normalization") corpus.provenance.normalization = value;
    else if (f[0] == "supervised") {
      corpus.supervised_types.push_back(value);
      if (f.size() > 2) {
        std::istringstream syms(f[2]);
        std::string x;
        auto& v = corpus.merged_symbols[value];
        while (syms >> x) v.push_back(x);
      }
    }
  }
  return corpus;
}

}  // namespace wdisc
