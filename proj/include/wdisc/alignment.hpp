#pragma once

// Post-processing of soft-alignment matrices into word segmentations:
// neighbour smoothing, two-direction fusion, hard alignment, and boundary
// placement between symbols aligned to different words.

#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "wdisc/checkpoint.hpp"
#include "wdisc/corpus.hpp"
#include "wdisc/tensor.hpp"

namespace wdisc {

/// base: symbols are encoded and words decoded; reverse: words are encoded
/// and symbols decoded.
enum class Direction { base, reverse };

inline std::string to_string(Direction d) { return d == Direction::base ? "base" : "reverse"; }

inline Direction parse_direction(const std::string& s) {
  if (s == "base") return Direction::base;
  if (s == "reverse") return Direction::reverse;
  throw ValidationError("unknown direction '" + s + "' (expected base or reverse)");
}

/// Attention probabilities of one sentence. Rows are decoder steps, columns
/// encoder positions. In the base direction rows are words and columns
/// symbols; in the reverse direction the roles swap.
struct AlignmentMatrix {
  std::size_t sentence = 0;
  Direction direction = Direction::base;
  Tensor probs;
  std::vector<std::string> row_tokens;
  std::vector<std::string> col_tokens;
  /// The last row belongs to the end-of-sentence step.
  bool eos_row = false;

  std::size_t rows() const { return probs.rows(); }
  std::size_t cols() const { return probs.cols(); }
  std::size_t content_rows() const { return probs.rows() - (eos_row ? 1 : 0); }
  std::size_t num_symbols() const { return direction == Direction::reverse ? content_rows() : cols(); }
  std::size_t num_words() const { return direction == Direction::reverse ? cols() : content_rows(); }

  friend bool operator==(const AlignmentMatrix&, const AlignmentMatrix&) = default;
};

struct HardAlignment {
  /// For each symbol position, the index of its aligned word.
  std::vector<std::size_t> word_of_symbol;
};

struct Segmentation {
  std::vector<Span> spans;
  /// Aligned word index of each token.
  std::vector<std::size_t> words;
};

/// Copy without the end-of-sentence row.
inline AlignmentMatrix without_eos(const AlignmentMatrix& m) {
  if (!m.eos_row) return m;
  AlignmentMatrix out = m;
  out.eos_row = false;
  const std::size_t r = m.content_rows();
  out.probs = Tensor(r, m.cols(), std::vector<double>(m.probs.data(), m.probs.data() + r * m.cols()));
  if (out.row_tokens.size() == m.rows()) out.row_tokens.pop_back();
  return out;
}

/// Swaps rows and columns and flips the direction tag.
inline AlignmentMatrix transpose(const AlignmentMatrix& m) {
  if (m.eos_row) throw ValidationError("drop the end-of-sentence row before transposing");
  AlignmentMatrix out;
  out.sentence = m.sentence;
  out.direction = m.direction == Direction::base ? Direction::reverse : Direction::base;
  out.probs = Tensor(m.cols(), m.rows());
  out.probs.mat() = m.probs.mat().transpose();
  out.row_tokens = m.col_tokens;
  out.col_tokens = m.row_tokens;
  return out;
}

/// Which neighbours smoothing averages over. `encoder` averages along each
/// row (neighbouring encoder positions); `symbol` averages neighbouring
/// symbol positions, which is the same thing in the base direction and runs
/// down the columns in the reverse direction.
enum class SmoothAxis { encoder, symbol };

inline std::string to_string(SmoothAxis a) { return a == SmoothAxis::encoder ? "encoder" : "symbol"; }

inline SmoothAxis parse_smooth_axis(const std::string& s) {
  if (s == "encoder") return SmoothAxis::encoder;
  if (s == "symbol") return SmoothAxis::symbol;
  throw ValidationError("unknown smoothing axis '" + s + "' (expected encoder or symbol)");
}

/// Each entry becomes the mean of itself and its two neighbours along the
/// chosen axis, with out-of-range neighbours counted as zero. No
/// renormalization. Column smoothing leaves the end-of-sentence row as is.
inline AlignmentMatrix smooth(const AlignmentMatrix& m, SmoothAxis axis = SmoothAxis::encoder) {
  AlignmentMatrix out = m;
  if (axis == SmoothAxis::encoder || m.direction == Direction::base) {
    const std::size_t C = m.cols();
    for (std::size_t r = 0; r < m.rows(); ++r) {
      for (std::size_t c = 0; c < C; ++c) {
        double s = m.probs(r, c);
        if (c > 0) s += m.probs(r, c - 1);
        if (c + 1 < C) s += m.probs(r, c + 1);
        out.probs(r, c) = s / 3.0;
      }
    }
    return out;
  }
  const std::size_t R = m.content_rows();
  for (std::size_t r = 0; r < R; ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) {
      double s = m.probs(r, c);
      if (r > 0) s += m.probs(r - 1, c);
      if (r + 1 < R) s += m.probs(r + 1, c);
      out.probs(r, c) = s / 3.0;
    }
  }
  return out;
}

/// Symbol-axis smoothing when source positions are tokens of several symbols,
/// as after injecting known words. `widths[k]` is the symbol count of source
/// token k. Each token is repeated once per symbol, the filter runs over that
/// symbol sequence, and each token takes the mean of its smoothed copies. With
/// every width 1 this is smooth(m, SmoothAxis::symbol).
inline AlignmentMatrix smooth(const AlignmentMatrix& m, SmoothAxis axis, const std::vector<std::size_t>& widths) {
  if (axis == SmoothAxis::encoder || widths.empty()) return smooth(m, axis);
  const bool by_row = m.direction == Direction::reverse;
  const std::size_t tokens = by_row ? m.content_rows() : m.cols();
  const std::size_t other = by_row ? m.cols() : m.rows();
  if (widths.size() != tokens)
    throw ShapeError("smoothing widths cover " + std::to_string(widths.size()) + " tokens, the matrix has " +
                     std::to_string(tokens));
  std::vector<std::size_t> token_of;
  for (std::size_t k = 0; k < tokens; ++k) {
    if (widths[k] == 0) throw ValidationError("token width must be at least 1");
    token_of.insert(token_of.end(), widths[k], k);
  }
  auto at = [&](std::size_t k, std::size_t o) { return by_row ? m.probs(k, o) : m.probs(o, k); };
  AlignmentMatrix out = m;
  const std::size_t S = token_of.size();
  for (std::size_t o = 0; o < other; ++o) {
    std::vector<double> sum(tokens, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      double v = at(token_of[s], o);
      if (s > 0) v += at(token_of[s - 1], o);
      if (s + 1 < S) v += at(token_of[s + 1], o);
      sum[token_of[s]] += v / 3.0;
    }
    for (std::size_t k = 0; k < tokens; ++k) (by_row ? out.probs(k, o) : out.probs(o, k)) = sum[k] / widths[k];
  }
  return out;
}

/// Averages a base-direction matrix with a reverse-direction one for the
/// same sentence: fused(i, t) = (alpha(t, i) + beta(i, t)) / 2. The result
/// is reverse-oriented (rows are symbols) and has no end-of-sentence row.
/// Arguments may be given in either order.
inline AlignmentMatrix fuse(const AlignmentMatrix& first, const AlignmentMatrix& second) {
  if (first.direction == second.direction) throw ValidationError("fusion needs one base and one reverse matrix");
  const AlignmentMatrix& base = first.direction == Direction::base ? first : second;
  const AlignmentMatrix& rev = first.direction == Direction::base ? second : first;
  const AlignmentMatrix a = without_eos(base);
  AlignmentMatrix out = without_eos(rev);
  if (a.rows() != out.cols() || a.cols() != out.rows())
    throw ShapeError("alignment shapes are not transpose-compatible: " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(out.rows()) + "x" +
                     std::to_string(out.cols()));
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t t = 0; t < out.cols(); ++t) out.probs(i, t) = 0.5 * (a.probs(t, i) + out.probs(i, t));
  return out;
}

/// Aligns every symbol to its most probable word (ties to the lowest
/// index). The end-of-sentence row never takes part.
inline HardAlignment hard_align(const AlignmentMatrix& m) {
  HardAlignment h;
  const std::size_t R = m.content_rows();
  if (m.direction == Direction::reverse) {
    for (std::size_t i = 0; i < R; ++i) {
      std::size_t best = 0;
      for (std::size_t t = 1; t < m.cols(); ++t)
        if (m.probs(i, t) > m.probs(i, best)) best = t;
      h.word_of_symbol.push_back(best);
    }
  } else {
    for (std::size_t i = 0; i < m.cols(); ++i) {
      std::size_t best = 0;
      for (std::size_t t = 1; t < R; ++t)
        if (m.probs(t, i) > m.probs(best, i)) best = t;
      h.word_of_symbol.push_back(best);
    }
  }
  return h;
}

/// Places a boundary between consecutive symbols aligned to different words.
inline Segmentation segment(std::size_t num_symbols, const HardAlignment& alignment) {
  const auto& a = alignment.word_of_symbol;
  if (a.size() != num_symbols)
    throw ValidationError("alignment covers " + std::to_string(a.size()) + " symbols, expected " +
                          std::to_string(num_symbols));
  Segmentation seg;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i == 0 || a[i] != a[i - 1]) {
      seg.spans.push_back({i, i + 1});
      seg.words.push_back(a[i]);
    } else {
      seg.spans.back().end = i + 1;
    }
  }
  return seg;
}

inline Segmentation segment(const std::vector<std::string>& symbols, const HardAlignment& alignment) {
  return segment(symbols.size(), alignment);
}

/// Surface strings of the segmented tokens.
inline std::vector<std::string> token_surfaces(const Segmentation& seg, const std::vector<std::string>& symbols) {
  std::vector<std::string> out;
  for (const auto& s : seg.spans) {
    if (s.end > symbols.size()) throw ValidationError("segmentation exceeds the symbol sequence");
    std::string w;
    for (std::size_t i = s.begin; i < s.end; ++i) w += symbols[i];
    out.push_back(std::move(w));
  }
  return out;
}

/// Symbol-side and word-side token surfaces of a matrix.
inline std::vector<std::string> symbol_tokens(const AlignmentMatrix& m) {
  if (m.direction == Direction::base) return m.col_tokens;
  auto v = m.row_tokens;
  if (m.eos_row && v.size() == m.rows()) v.pop_back();
  return v;
}

inline std::vector<std::string> word_tokens(const AlignmentMatrix& m) {
  if (m.direction == Direction::reverse) return m.col_tokens;
  auto v = m.row_tokens;
  if (m.eos_row && v.size() == m.rows()) v.pop_back();
  return v;
}

// ---------------------------------------------------------------------------
// Text serialization. One block per sentence:
//
//   sentence <index> <rows> <cols> <base|reverse> <eos-flag>
//   rows<TAB>tok...
//   cols<TAB>tok...
//   <rows lines of tab-separated probabilities, 17 significant digits>
//   <blank line>

inline void write_matrix(std::ostream& out, const AlignmentMatrix& m) {
  out << "sentence " << m.sentence << ' ' << m.rows() << ' ' << m.cols() << ' ' << to_string(m.direction) << ' '
      << (m.eos_row ? 1 : 0) << '\n';
  out << "rows";
  for (const auto& t : m.row_tokens) out << '\t' << t;
  out << "\ncols";
  for (const auto& t : m.col_tokens) out << '\t' << t;
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out << (c ? "\t" : "") << format_double(m.probs(r, c));
    out << '\n';
  }
  out << '\n';
}

inline void write_matrices(const std::filesystem::path& path, const std::vector<AlignmentMatrix>& ms) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& m : ms) write_matrix(out, m);
  if (!out) throw IoError("failed writing " + path.string());
}

inline std::vector<AlignmentMatrix> read_matrices(std::istream& in) {
  std::vector<AlignmentMatrix> out;
  std::string line;
  auto fields = [](const std::string& l) {
    std::vector<std::string> f;
    std::stringstream ss(l);
    std::string x;
    while (std::getline(ss, x, '\t')) f.push_back(x);
    return f;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream hs(line);
    std::string tag, dir;
    AlignmentMatrix m;
    std::size_t rows = 0, cols = 0;
    int eos = 0;
    if (!(hs >> tag >> m.sentence >> rows >> cols >> dir >> eos) || tag != "sentence")
      throw IoError("malformed alignment header: " + line);
    m.direction = parse_direction(dir);
    m.eos_row = eos != 0;
    m.probs = Tensor(rows, cols);
    for (auto* tokens : {&m.row_tokens, &m.col_tokens}) {
      if (!std::getline(in, line)) throw IoError("truncated alignment block");
      auto f = fields(line);
      if (f.empty() || (f[0] != "rows" && f[0] != "cols")) throw IoError("malformed alignment token line");
      tokens->assign(f.begin() + 1, f.end());
    }
    for (std::size_t r = 0; r < rows; ++r) {
      if (!std::getline(in, line)) throw IoError("truncated alignment block");
      auto f = fields(line);
      if (f.size() != cols) throw IoError("alignment row has wrong width");
      for (std::size_t c = 0; c < cols; ++c) m.probs(r, c) = parse_double(f[c]);
    }
    out.push_back(std::move(m));
  }
  return out;
}

inline std::vector<AlignmentMatrix> read_matrices(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return read_matrices(in);
}

}  // namespace wdisc
