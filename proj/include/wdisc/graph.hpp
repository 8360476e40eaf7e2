#pragma once

// Tape-based reverse-mode differentiation over row-major matrices.
//
// A Graph records every operation applied to its variables. Calling
// backward() on a 1x1 result walks the tape in reverse and accumulates
// gradients; gradients of parameter leaves go straight into
// Parameter::grad. A graph built with gradients disabled keeps values only.
//
// Layout convention used by the sequence model: features run down the rows,
// batch elements across the columns, and a sequence of A batched states is
// stored side by side as a [features x (A*B)] matrix whose column i*B+b holds
// position i of batch element b.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <utility>
#include <vector>

#include "wdisc/tensor.hpp"

namespace wdisc {

class Graph;

struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;
};

class Graph {
 public:
  explicit Graph(bool record_gradients = true) : record_(record_gradients) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool records_gradients() const { return record_; }
  std::size_t num_nodes() const { return nodes_.size(); }

  Var input(Tensor value) {
    nodes_.push_back(Node{std::move(value), {}, nullptr, {}, false});
    return {this, nodes_.size() - 1};
  }

  Var param(Parameter& p) {
    nodes_.push_back(Node{{}, {}, &p, {}, record_});
    return {this, nodes_.size() - 1};
  }

  const Tensor& value(Var v) const {
    const Node& n = nodes_[v.id];
    return n.param ? n.param->value : n.value;
  }

  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }

  /// Gradient buffer of `v`, allocated as zeros on first access.
  Tensor& grad(Var v) {
    Node& n = nodes_[v.id];
    if (n.param) {
      if (!n.param->grad.same_shape(n.param->value)) n.param->grad = Tensor(n.param->value.rows(), n.param->value.cols());
      return n.param->grad;
    }
    if (n.grad.empty() && !n.value.empty()) n.grad = Tensor(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Appends a computed node. `backprop` runs during backward() once the node
  /// has received a gradient; it is dropped when no parent needs one.
  Var push(Tensor value, std::initializer_list<Var> parents, std::function<void()> backprop) {
    bool needs = false;
    for (Var p : parents) needs = needs || nodes_[p.id].needs_grad;
    return push_node(std::move(value), needs, std::move(backprop));
  }

  Var push(Tensor value, std::span<const Var> parents, std::function<void()> backprop) {
    bool needs = false;
    for (Var p : parents) needs = needs || nodes_[p.id].needs_grad;
    return push_node(std::move(value), needs, std::move(backprop));
  }

  /// Seeds d(loss)/d(loss) = 1 and propagates to every reachable node.
  void backward(Var loss) {
    if (!record_) throw ValidationError("graph was built without gradient recording");
    const Tensor& v = value(loss);
    if (v.rows() != 1 || v.cols() != 1) throw ShapeError("backward() requires a scalar");
    grad(loss)[0] += 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.backprop && !n.grad.empty()) n.backprop();
    }
  }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* param;
    std::function<void()> backprop;
    bool needs_grad;
  };

  Var push_node(Tensor value, bool needs, std::function<void()> backprop) {
    needs = needs && record_;
    nodes_.push_back(Node{std::move(value), {}, nullptr, needs ? std::move(backprop) : nullptr, needs});
    return {this, nodes_.size() - 1};
  }

  bool record_;
  std::vector<Node> nodes_;
};

namespace ops {

namespace detail {

inline Graph& same_graph(Var a, Var b) {
  if (a.graph != b.graph || a.graph == nullptr) throw ValidationError("variables belong to different graphs");
  return *a.graph;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace detail

inline Var matmul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (A.cols() != B.rows()) throw ShapeError("matmul inner dimensions differ");
  Tensor C(A.rows(), B.cols());
  C.mat().noalias() = A.mat() * B.mat();
  return g.push(std::move(C), {a, b}, [&g, a, b, id = g.num_nodes()] {
    const Tensor& dC = g.grad(Var{&g, id});
    if (g.needs_grad(a)) g.grad(a).mat().noalias() += dC.mat() * g.value(b).mat().transpose();
    if (g.needs_grad(b)) g.grad(b).mat().noalias() += g.value(a).mat().transpose() * dC.mat();
  });
}

inline Var add(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (!A.same_shape(B)) throw ShapeError("add operands differ in shape");
  Tensor C = A;
  C.mat() += B.mat();
  return g.push(std::move(C), {a, b}, [&g, a, b, id = g.num_nodes()] {
    const Tensor& dC = g.grad(Var{&g, id});
    if (g.needs_grad(a)) g.grad(a).mat() += dC.mat();
    if (g.needs_grad(b)) g.grad(b).mat() += dC.mat();
  });
}

/// a [m x n] plus column vector b [m x 1] broadcast over columns.
inline Var add_bias(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (B.cols() != 1 || B.rows() != A.rows()) throw ShapeError("bias must be a column matching rows");
  Tensor C = A;
  C.mat().colwise() += B.mat().col(0);
  return g.push(std::move(C), {a, b}, [&g, a, b, id = g.num_nodes()] {
    const Tensor& dC = g.grad(Var{&g, id});
    if (g.needs_grad(a)) g.grad(a).mat() += dC.mat();
    if (g.needs_grad(b)) g.grad(b).mat().col(0) += dC.mat().rowwise().sum();
  });
}

inline Var mul(Var a, Var b) {
  Graph& g = detail::same_graph(a, b);
  const Tensor& A = g.value(a);
  const Tensor& B = g.value(b);
  if (!A.same_shape(B)) throw ShapeError("mul operands differ in shape");
  Tensor C = A;
  C.mat().array() *= B.mat().array();
  return g.push(std::move(C), {a, b}, [&g, a, b, id = g.num_nodes()] {
    const Tensor& dC = g.grad(Var{&g, id});
    if (g.needs_grad(a)) g.grad(a).mat().array() += dC.mat().array() * g.value(b).mat().array();
    if (g.needs_grad(b)) g.grad(b).mat().array() += dC.mat().array() * g.value(a).mat().array();
  });
}

inline Var scale(Var a, double c) {
  Graph& g = *a.graph;
  Tensor C = g.value(a);
  C.mat() *= c;
  return g.push(std::move(C), {a}, [&g, a, c, id = g.num_nodes()] { g.grad(a).mat() += c * g.grad(Var{&g, id}).mat(); });
}

inline Var tanh(Var a) {
  Graph& g = *a.graph;
  Tensor C = g.value(a);
  for (auto& x : C.values()) x = std::tanh(x);
  return g.push(std::move(C), {a}, [&g, a, id = g.num_nodes()] {
    const Var out{&g, id};
    const Tensor& y = g.value(out);
    const Tensor& dy = g.grad(out);
    Tensor& da = g.grad(a);
    for (std::size_t i = 0; i < y.size(); ++i) da[i] += dy[i] * (1.0 - y[i] * y[i]);
  });
}

inline Var sigmoid(Var a) {
  Graph& g = *a.graph;
  Tensor C = g.value(a);
  for (auto& x : C.values()) x = detail::sigmoid(x);
  return g.push(std::move(C), {a}, [&g, a, id = g.num_nodes()] {
    const Var out{&g, id};
    const Tensor& y = g.value(out);
    const Tensor& dy = g.grad(out);
    Tensor& da = g.grad(a);
    for (std::size_t i = 0; i < y.size(); ++i) da[i] += dy[i] * y[i] * (1.0 - y[i]);
  });
}

/// Sum of all entries as a 1x1 tensor.
inline Var sum(Var a) {
  Graph& g = *a.graph;
  Tensor C(1, 1, g.value(a).mat().sum());
  return g.push(std::move(C), {a}, [&g, a, id = g.num_nodes()] {
    g.grad(a).mat().array() += g.grad(Var{&g, id})[0];
  });
}

inline Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows needs at least one operand");
  Graph& g = *parts.front().graph;
  std::size_t rows = 0;
  const std::size_t cols = g.value(parts.front()).cols();
  for (Var p : parts) {
    if (p.graph != &g) throw ValidationError("variables belong to different graphs");
    if (g.value(p).cols() != cols) throw ShapeError("concat_rows operands differ in columns");
    rows += g.value(p).rows();
  }
  Tensor C(rows, cols);
  std::size_t r = 0;
  for (Var p : parts) {
    const Tensor& P = g.value(p);
    std::copy(P.data(), P.data() + P.size(), C.data() + r * cols);
    r += P.rows();
  }
  return g.push(std::move(C), std::span<const Var>(parts), [&g, parts, id = g.num_nodes()] {
    const Tensor& dC = g.grad(Var{&g, id});
    std::size_t r0 = 0;
    for (Var p : parts) {
      const auto n = static_cast<Eigen::Index>(g.value(p).rows());
      if (g.needs_grad(p)) g.grad(p).mat() += dC.mat().middleRows(static_cast<Eigen::Index>(r0), n);
      r0 += static_cast<std::size_t>(n);
    }
  });
}

inline Var slice_rows(Var a, std::size_t begin, std::size_t count) {
  Graph& g = *a.graph;
  const Tensor& A = g.value(a);
  if (begin + count > A.rows()) throw ShapeError("slice_rows out of range");
  Tensor C(count, A.cols());
  std::copy(A.data() + begin * A.cols(), A.data() + (begin + count) * A.cols(), C.data());
  return g.push(std::move(C), {a}, [&g, a, begin, count, id = g.num_nodes()] {
    g.grad(a).mat().middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        g.grad(Var{&g, id}).mat();
  });
}

inline Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols needs at least one operand");
  Graph& g = *parts.front().graph;
  const std::size_t rows = g.value(parts.front()).rows();
  std::size_t cols = 0;
  for (Var p : parts) {
    if (p.graph != &g) throw ValidationError("variables belong to different graphs");
    if (g.value(p).rows() != rows) throw ShapeError("concat_cols operands differ in rows");
    cols += g.value(p).cols();
  }
  Tensor C(rows, cols);
  std::size_t c = 0;
  for (Var p : parts) {
    const Tensor& P = g.value(p);
    C.mat().middleCols(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(P.cols())) = P.mat();
    c += P.cols();
  }
  return g.push(std::move(C), std::span<const Var>(parts), [&g, parts, id = g.num_nodes()] {
    const Tensor& dC = g.grad(Var{&g, id});
    std::size_t c0 = 0;
    for (Var p : parts) {
      const auto n = static_cast<Eigen::Index>(g.value(p).cols());
      if (g.needs_grad(p)) g.grad(p).mat() += dC.mat().middleCols(static_cast<Eigen::Index>(c0), n);
      c0 += static_cast<std::size_t>(n);
    }
  });
}

inline Var slice_cols(Var a, std::size_t begin, std::size_t count) {
  Graph& g = *a.graph;
  const Tensor& A = g.value(a);
  if (begin + count > A.cols()) throw ShapeError("slice_cols out of range");
  Tensor C(A.rows(), count);
  C.mat() = A.mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count));
  return g.push(std::move(C), {a}, [&g, a, begin, count, id = g.num_nodes()] {
    g.grad(a).mat().middleCols(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(count)) +=
        g.grad(Var{&g, id}).mat();
  });
}

/// Same row-major data viewed with a different shape.
inline Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Graph& g = *a.graph;
  const Tensor& A = g.value(a);
  if (rows * cols != A.size()) throw ShapeError("reshape changes element count");
  Tensor C(rows, cols, std::vector<double>(A.data(), A.data() + A.size()));
  return g.push(std::move(C), {a}, [&g, a, id = g.num_nodes()] {
    const Tensor& dC = g.grad(Var{&g, id});
    Tensor& dA = g.grad(a);
    for (std::size_t i = 0; i < dC.size(); ++i) dA[i] += dC[i];
  });
}

/// Maxout over consecutive groups of `pool` rows; ties go to the first row.
inline Var maxout(Var a, std::size_t pool) {
  Graph& g = *a.graph;
  const Tensor& A = g.value(a);
  if (pool == 0 || A.rows() % pool != 0) throw ShapeError("maxout pool must divide the row count");
  const std::size_t rows = A.rows() / pool;
  Tensor C(rows, A.cols());
  std::vector<std::uint32_t> arg(rows * A.cols());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < A.cols(); ++c) {
      std::size_t best = r * pool;
      for (std::size_t j = 1; j < pool; ++j)
        if (A(r * pool + j, c) > A(best, c)) best = r * pool + j;
      C(r, c) = A(best, c);
      arg[r * A.cols() + c] = static_cast<std::uint32_t>(best);
    }
  }
  return g.push(std::move(C), {a}, [&g, a, arg = std::move(arg), id = g.num_nodes()] {
    const Tensor& dC = g.grad(Var{&g, id});
    Tensor& dA = g.grad(a);
    const std::size_t cols = dC.cols();
    for (std::size_t r = 0; r < dC.rows(); ++r)
      for (std::size_t c = 0; c < cols; ++c) dA(arg[r * cols + c], c) += dC(r, c);
  });
}

/// Gathers rows of `table` [V x d] into columns: result [d x ids.size()].
inline Var lookup(Var table, std::vector<std::uint32_t> ids) {
  Graph& g = *table.graph;
  const Tensor& E = g.value(table);
  Tensor C(E.cols(), ids.size());
  for (std::size_t b = 0; b < ids.size(); ++b) {
    if (ids[b] >= E.rows()) throw ValidationError("embedding id out of range");
    for (std::size_t k = 0; k < E.cols(); ++k) C(k, b) = E(ids[b], k);
  }
  return g.push(std::move(C), {table}, [&g, table, ids = std::move(ids), id = g.num_nodes()] {
    const Tensor& dC = g.grad(Var{&g, id});
    Tensor& dE = g.grad(table);
    for (std::size_t b = 0; b < ids.size(); ++b)
      for (std::size_t k = 0; k < dC.rows(); ++k) dE(ids[b], k) += dC(k, b);
  });
}

/// Per column b: keep[b] ? fresh[:,b] : old[:,b].
inline Var select_cols(Var fresh, Var old, std::vector<std::uint8_t> keep) {
  Graph& g = detail::same_graph(fresh, old);
  const Tensor& F = g.value(fresh);
  const Tensor& O = g.value(old);
  if (!F.same_shape(O) || keep.size() != F.cols()) throw ShapeError("select_cols shape mismatch");
  Tensor C = O;
  for (std::size_t r = 0; r < F.rows(); ++r)
    for (std::size_t c = 0; c < F.cols(); ++c)
      if (keep[c]) C(r, c) = F(r, c);
  return g.push(std::move(C), {fresh, old}, [&g, fresh, old, keep = std::move(keep), id = g.num_nodes()] {
    const Tensor& dC = g.grad(Var{&g, id});
    const bool nf = g.needs_grad(fresh), no = g.needs_grad(old);
    for (std::size_t r = 0; r < dC.rows(); ++r) {
      for (std::size_t c = 0; c < dC.cols(); ++c) {
        if (keep[c]) {
          if (nf) g.grad(fresh)(r, c) += dC(r, c);
        } else if (no) {
          g.grad(old)(r, c) += dC(r, c);
        }
      }
    }
  });
}

/// X [m x (A*B)] plus Y [m x B] added to each of the A column blocks.
inline Var tile_add(Var x, Var y) {
  Graph& g = detail::same_graph(x, y);
  const Tensor& X = g.value(x);
  const Tensor& Y = g.value(y);
  const std::size_t B = Y.cols();
  if (X.rows() != Y.rows() || B == 0 || X.cols() % B != 0) throw ShapeError("tile_add shape mismatch");
  const std::size_t A = X.cols() / B;
  Tensor C = X;
  for (std::size_t i = 0; i < A; ++i)
    C.mat().middleCols(static_cast<Eigen::Index>(i * B), static_cast<Eigen::Index>(B)) += Y.mat();
  return g.push(std::move(C), {x, y}, [&g, x, y, A, B, id = g.num_nodes()] {
    const Tensor& dC = g.grad(Var{&g, id});
    if (g.needs_grad(x)) g.grad(x).mat() += dC.mat();
    if (g.needs_grad(y)) {
      auto dY = g.grad(y).mat();
      for (std::size_t i = 0; i < A; ++i)
        dY += dC.mat().middleCols(static_cast<Eigen::Index>(i * B), static_cast<Eigen::Index>(B));
    }
  });
}

/// Column-wise softmax of scores/temperature over rows whose mask entry is
/// non-zero; masked rows get probability exactly 0.
inline Var masked_softmax_cols(Var scores, const std::vector<std::uint8_t>& mask, double temperature) {
  Graph& g = *scores.graph;
  const Tensor& E = g.value(scores);
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ValidationError("temperature must be positive");
  if (mask.size() != E.size()) throw ShapeError("mask does not match scores");
  Tensor P(E.rows(), E.cols());
  for (std::size_t c = 0; c < E.cols(); ++c) {
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < E.rows(); ++r)
      if (mask[r * E.cols() + c]) hi = std::max(hi, E(r, c));
    if (hi == -std::numeric_limits<double>::infinity()) throw ValidationError("all attention positions are masked");
    double z = 0.0;
    for (std::size_t r = 0; r < E.rows(); ++r) {
      if (!mask[r * E.cols() + c]) continue;
      P(r, c) = std::exp((E(r, c) - hi) / temperature);
      z += P(r, c);
    }
    for (std::size_t r = 0; r < E.rows(); ++r) P(r, c) /= z;
  }
  return g.push(std::move(P), {scores}, [&g, scores, temperature, id = g.num_nodes()] {
    const Var out{&g, id};
    const Tensor& P = g.value(out);
    const Tensor& dP = g.grad(out);
    Tensor& dE = g.grad(scores);
    for (std::size_t c = 0; c < P.cols(); ++c) {
      double dot = 0.0;
      for (std::size_t r = 0; r < P.rows(); ++r) dot += P(r, c) * dP(r, c);
      for (std::size_t r = 0; r < P.rows(); ++r) dE(r, c) += P(r, c) * (dP(r, c) - dot) / temperature;
    }
  });
}

/// Context vectors: out[:, b] = sum_i alpha(i, b) * states[:, i*B + b].
inline Var attention_context(Var alpha, Var states) {
  Graph& g = detail::same_graph(alpha, states);
  const Tensor& W = g.value(alpha);
  const Tensor& H = g.value(states);
  const std::size_t A = W.rows(), B = W.cols();
  if (H.cols() != A * B) throw ShapeError("attention_context shape mismatch");
  Tensor C(H.rows(), B);
  for (std::size_t i = 0; i < A; ++i)
    for (std::size_t k = 0; k < H.rows(); ++k)
      for (std::size_t b = 0; b < B; ++b) C(k, b) += W(i, b) * H(k, i * B + b);
  return g.push(std::move(C), {alpha, states}, [&g, alpha, states, A, B, id = g.num_nodes()] {
    const Tensor& dC = g.grad(Var{&g, id});
    const Tensor& W = g.value(alpha);
    const Tensor& H = g.value(states);
    if (g.needs_grad(alpha)) {
      Tensor& dW = g.grad(alpha);
      for (std::size_t i = 0; i < A; ++i)
        for (std::size_t k = 0; k < H.rows(); ++k)
          for (std::size_t b = 0; b < B; ++b) dW(i, b) += dC(k, b) * H(k, i * B + b);
    }
    if (g.needs_grad(states)) {
      Tensor& dH = g.grad(states);
      for (std::size_t i = 0; i < A; ++i)
        for (std::size_t k = 0; k < H.rows(); ++k)
          for (std::size_t b = 0; b < B; ++b) dH(k, i * B + b) += W(i, b) * dC(k, b);
    }
  });
}

/// Fused LSTM update. `pre` [4n x B] holds the input, forget, output and
/// candidate pre-activations stacked in that order; `cell` is [n x B].
/// Returns [2n x B]: the new hidden state on top of the new cell state.
inline Var lstm(Var pre, Var cell) {
  Graph& g = detail::same_graph(pre, cell);
  const Tensor& P = g.value(pre);
  const Tensor& C0 = g.value(cell);
  const std::size_t n = C0.rows(), B = C0.cols();
  if (P.rows() != 4 * n || P.cols() != B) throw ShapeError("lstm pre-activation must be [4n x B]");
  Tensor out(2 * n, B);
  for (std::size_t k = 0; k < n; ++k) {
    for (std::size_t b = 0; b < B; ++b) {
      const double i = detail::sigmoid(P(k, b));
      const double f = detail::sigmoid(P(n + k, b));
      const double o = detail::sigmoid(P(2 * n + k, b));
      const double gg = std::tanh(P(3 * n + k, b));
      const double c = f * C0(k, b) + i * gg;
      out(n + k, b) = c;
      out(k, b) = o * std::tanh(c);
    }
  }
  return g.push(std::move(out), {pre, cell}, [&g, pre, cell, n, B, id = g.num_nodes()] {
    const Var o_var{&g, id};
    const Tensor& P = g.value(pre);
    const Tensor& C0 = g.value(cell);
    const Tensor& Y = g.value(o_var);
    const Tensor& dY = g.grad(o_var);
    const bool np = g.needs_grad(pre), nc = g.needs_grad(cell);
    for (std::size_t k = 0; k < n; ++k) {
      for (std::size_t b = 0; b < B; ++b) {
        const double i = detail::sigmoid(P(k, b));
        const double f = detail::sigmoid(P(n + k, b));
        const double o = detail::sigmoid(P(2 * n + k, b));
        const double gg = std::tanh(P(3 * n + k, b));
        const double tc = std::tanh(Y(n + k, b));
        const double dh = dY(k, b);
        const double dc = dY(n + k, b) + dh * o * (1.0 - tc * tc);
        if (np) {
          Tensor& dP = g.grad(pre);
          dP(k, b) += dc * gg * i * (1.0 - i);
          dP(n + k, b) += dc * C0(k, b) * f * (1.0 - f);
          dP(2 * n + k, b) += dh * tc * o * (1.0 - o);
          dP(3 * n + k, b) += dc * i * (1.0 - gg * gg);
        }
        if (nc) g.grad(cell)(k, b) += dc * f;
      }
    }
  });
}

/// Probability floor applied inside the logarithm of the cross-entropy.
inline constexpr double kProbabilityFloor = 1e-12;

/// Softmax cross-entropy per column. logits [V x B]; result [1 x B] with
/// entry b = weights[b] * -log(max(softmax(logits[:,b])[targets[b]], floor)).
/// Columns with zero weight contribute nothing and receive no gradient.
inline Var softmax_cross_entropy(Var logits, std::vector<std::uint32_t> targets, std::vector<double> weights) {
  Graph& g = *logits.graph;
  const Tensor& Y = g.value(logits);
  const std::size_t V = Y.rows(), B = Y.cols();
  if (targets.size() != B || weights.size() != B) throw ShapeError("cross-entropy targets do not match logits");
  Tensor probs(V, B);
  Tensor loss(1, B);
  for (std::size_t b = 0; b < B; ++b) {
    if (weights[b] == 0.0) continue;
    if (targets[b] >= V) throw ValidationError("reference id outside the output vocabulary");
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t v = 0; v < V; ++v) hi = std::max(hi, Y(v, b));
    double z = 0.0;
    for (std::size_t v = 0; v < V; ++v) z += (probs(v, b) = std::exp(Y(v, b) - hi));
    for (std::size_t v = 0; v < V; ++v) probs(v, b) /= z;
    loss(0, b) = -weights[b] * std::log(std::max(probs(targets[b], b), kProbabilityFloor));
  }
  return g.push(std::move(loss), {logits},
                [&g, logits, probs = std::move(probs), targets = std::move(targets), weights = std::move(weights),
                 id = g.num_nodes()] {
                  const Tensor& dL = g.grad(Var{&g, id});
                  Tensor& dY = g.grad(logits);
                  for (std::size_t b = 0; b < weights.size(); ++b) {
                    if (weights[b] == 0.0 || probs(targets[b], b) < kProbabilityFloor) continue;
                    const double s = dL(0, b) * weights[b];
                    for (std::size_t v = 0; v < probs.rows(); ++v) dY(v, b) += s * probs(v, b);
                    dY(targets[b], b) -= s;
                  }
                });
}

}  // namespace ops
}  // namespace wdisc
