#pragma once

// Turns per-sentence alignment matrices into word segmentations of the
// source side, each token labelled with the target word it aligned to.

#include <string>
#include <vector>

#include "wdisc/alignment.hpp"
#include "wdisc/corpus.hpp"
#include "wdisc/evaluation.hpp"

namespace wdisc {

struct DiscoveredSentence {
  SegmentedSentence segmentation;
  /// Target word aligned to each token.
  std::vector<std::string> aligned_words;
};

/// Hard-aligns and segments one matrix. Segmentation runs over source tokens,
/// so merged supervision tokens are never split.
inline DiscoveredSentence discover(const Corpus& corpus, const SentencePair& pair, const AlignmentMatrix& m) {
  const HardAlignment h = hard_align(m);
  if (h.word_of_symbol.size() != pair.source.size())
    throw ShapeError("matrix for sentence " + std::to_string(m.sentence + 1) + " covers " +
                     std::to_string(h.word_of_symbol.size()) + " source tokens, the corpus pair has " +
                     std::to_string(pair.source.size()));
  const Segmentation seg = segment(pair.source.size(), h);
  DiscoveredSentence d;
  d.segmentation.symbols = corpus.symbols(pair);
  d.segmentation.spans = expand_spans(seg.spans, pair);
  const auto words = word_tokens(m);
  for (auto w : seg.words) d.aligned_words.push_back(w < words.size() ? words[w] : corpus.target_vocab.surface(pair.target.at(w)));
  return d;
}

inline std::vector<DiscoveredSentence> discover(const Corpus& corpus, const std::vector<AlignmentMatrix>& matrices) {
  if (matrices.size() != corpus.size())
    throw ValidationError(std::to_string(matrices.size()) + " matrices for a corpus of " +
                          std::to_string(corpus.size()) + " sentences");
  std::vector<DiscoveredSentence> out;
  out.reserve(matrices.size());
  for (std::size_t i = 0; i < matrices.size(); ++i) out.push_back(discover(corpus, corpus.pairs[i], matrices[i]));
  return out;
}

inline std::vector<SegmentedSentence> segmentations(const std::vector<DiscoveredSentence>& d) {
  std::vector<SegmentedSentence> out;
  out.reserve(d.size());
  for (const auto& x : d) out.push_back(x.segmentation);
  return out;
}

/// One line per sentence with tokens separated by spaces.
inline void write_segmentation(const std::filesystem::path& path, const std::vector<DiscoveredSentence>& d) {
  write_segmented(path, segmentations(d));
}

/// Bilingual by-product: one "token TAB aligned word" line per token, with a
/// blank line after each sentence.
inline void write_token_alignments(const std::filesystem::path& path, const std::vector<DiscoveredSentence>& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& s : d) {
    const auto toks = s.segmentation.tokens();
    for (std::size_t k = 0; k < toks.size(); ++k) out << toks[k] << '\t' << s.aligned_words[k] << '\n';
    out << '\n';
  }
}

}  // namespace wdisc
