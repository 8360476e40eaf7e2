#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wdisc/graph.hpp"
#include "wdisc/random.hpp"

namespace wdisc {

/// exp(x_i / T) / sum_j exp(x_j / T), stabilized by subtracting the maximum.
inline std::vector<double> softmax_temperature(std::span<const double> logits, double temperature = 1.0) {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) throw ValidationError("temperature must be positive");
  if (logits.empty()) throw ValidationError("softmax of an empty vector");
  double hi = -std::numeric_limits<double>::infinity();
  for (double x : logits) {
    if (!std::isfinite(x)) throw ValidationError("softmax input is not finite");
    hi = std::max(hi, x);
  }
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (p[i] = std::exp((logits[i] - hi) / temperature));
  for (auto& x : p) x /= z;
  return p;
}

/// Loss of one sentence: -sum_t log p_t[w_t], with probabilities floored.
inline double cross_entropy(const std::vector<std::vector<double>>& step_probabilities,
                            std::span<const std::uint32_t> references) {
  if (step_probabilities.size() != references.size())
    throw ShapeError("one probability vector is required per reference");
  double loss = 0.0;
  for (std::size_t t = 0; t < references.size(); ++t) {
    const auto& p = step_probabilities[t];
    if (references[t] >= p.size()) throw ValidationError("reference outside the vocabulary");
    loss -= std::log(std::max(p[references[t]], ops::kProbabilityFloor));
  }
  return loss;
}

/// Batch objective: mean of the per-sentence losses.
inline double batch_loss(std::span<const double> sentence_losses) {
  if (sentence_losses.empty()) throw ValidationError("empty batch");
  double s = 0.0;
  for (double l : sentence_losses) s += l;
  return s / static_cast<double>(sentence_losses.size());
}

// ---------------------------------------------------------------------------
// LSTM cell

/// Weights of one LSTM cell: Wx [4n x in], Wh [4n x n], b [4n x 1], gate
/// blocks ordered input, forget, output, candidate.
struct LstmParams {
  Parameter* wx = nullptr;
  Parameter* wh = nullptr;
  Parameter* b = nullptr;

  std::size_t cell_size() const { return wh->value.cols(); }
  std::size_t input_size() const { return wx->value.cols(); }

  static LstmParams create(ParameterSet& set, const std::string& prefix, std::size_t input, std::size_t n) {
    return {&set.add(prefix + ".Wx", 4 * n, input), &set.add(prefix + ".Wh", 4 * n, n), &set.add(prefix + ".b", 4 * n, 1)};
  }

  static LstmParams find(ParameterSet& set, const std::string& prefix) {
    return {&set.at(prefix + ".Wx"), &set.at(prefix + ".Wh"), &set.at(prefix + ".b")};
  }
};

/// Gate pre-activations from an already projected input term.
inline Var lstm_preactivation(Var projected_input, Var hidden, const LstmParams& p) {
  Graph& g = *hidden.graph;
  return ops::add_bias(ops::add(projected_input, ops::matmul(g.param(*p.wh), hidden)), g.param(*p.b));
}

/// One step of the cell: i, f, o = logistic, g = tanh, c' = f*c + i*g,
/// h' = o * tanh(c'). Inputs are batched as columns.
inline std::pair<Var, Var> lstm_cell(Var input, Var hidden, Var cell, const LstmParams& p) {
  Graph& g = *input.graph;
  const std::size_t n = p.cell_size();
  if (g.value(input).rows() != p.input_size() || g.value(hidden).rows() != n || g.value(cell).rows() != n ||
      g.value(hidden).cols() != g.value(input).cols() || g.value(cell).cols() != g.value(input).cols())
    throw ShapeError("lstm_cell operand shapes do not match the cell parameters");
  Var pre = lstm_preactivation(ops::matmul(g.param(*p.wx), input), hidden, p);
  Var hc = ops::lstm(pre, cell);
  return {ops::slice_rows(hc, 0, n), ops::slice_rows(hc, n, n)};
}

// ---------------------------------------------------------------------------
// Adam

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Global gradient-norm clip; 0 disables clipping.
  double clip_norm = 0.0;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const ParameterSet& params, AdamConfig cfg) : config(cfg) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      first_moment.emplace_back(params[i].value.rows(), params[i].value.cols());
      second_moment.emplace_back(params[i].value.rows(), params[i].value.cols());
    }
  }
};

enum class AdamStatus { applied, skipped_non_finite };

/// Bias-corrected Adam update applied in place. A step whose gradients
/// contain a non-finite value is skipped and leaves the state untouched.
inline AdamStatus adam_step(ParameterSet& params, AdamState& state) {
  if (state.first_moment.size() != params.size()) throw ShapeError("Adam state does not match parameters");
  double norm2 = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Parameter& p = params[i];
    if (!p.grad.same_shape(p.value)) throw ValidationError("missing gradient for " + p.name);
    if (!state.first_moment[i].same_shape(p.value)) throw ShapeError("Adam accumulator shape differs for " + p.name);
    for (double x : p.grad.values()) norm2 += x * x;
  }
  if (!std::isfinite(norm2)) return AdamStatus::skipped_non_finite;

  const auto& c = state.config;
  double clip = 1.0;
  if (c.clip_norm > 0.0 && std::sqrt(norm2) > c.clip_norm) clip = c.clip_norm / std::sqrt(norm2);

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter& p = params[i];
    Tensor& m = state.first_moment[i];
    Tensor& v = state.second_moment[i];
    for (std::size_t k = 0; k < p.value.size(); ++k) {
      const double gk = p.grad[k] * clip;
      m[k] = c.beta1 * m[k] + (1.0 - c.beta1) * gk;
      v[k] = c.beta2 * v[k] + (1.0 - c.beta2) * gk * gk;
      const double mhat = m[k] / correction1;
      const double vhat = v[k] / correction2;
      p.value[k] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.epsilon);
    }
  }
  return AdamStatus::applied;
}

// ---------------------------------------------------------------------------
// Finite-difference gradient check

struct GradientCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  std::size_t samples = 200;
  std::uint64_t seed = 0;
  /// Relative error is |a - n| / max(|a|, |n|, floor), where the floor is the
  /// larger of this value and the resolution of the central difference itself
  /// (machine epsilon times |loss| over the step, divided by the tolerance).
  /// Gradients smaller than that resolution cannot be checked relatively.
  double denominator_floor = 1e-7;
};

struct GradientCheckEntry {
  std::string parameter;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double relative_error = 0.0;
};

struct GradientCheckReport {
  std::vector<GradientCheckEntry> entries;
  double max_relative_error = 0.0;
  std::size_t worst = 0;
  bool passed = true;
};

/// Builds the scalar loss inside the given graph.
using LossBuilder = std::function<Var(Graph&)>;

inline double evaluate_loss(const LossBuilder& build) {
  Graph g(false);
  return g.value(build(g))[0];
}

/// Compares the gradients currently stored in `params` against central
/// differences of `build` at sampled coordinates.
inline GradientCheckReport compare_with_finite_differences(ParameterSet& params, const LossBuilder& build,
                                                           const GradientCheckOptions& opt = {}) {
  std::vector<std::pair<std::size_t, std::size_t>> coords;
  const std::size_t total = params.num_values();
  if (total == 0) throw ValidationError("no parameters to check");
  if (opt.samples >= total) {
    for (std::size_t i = 0; i < params.size(); ++i)
      for (std::size_t k = 0; k < params[i].value.size(); ++k) coords.emplace_back(i, k);
  } else {
    Rng rng(opt.seed);
    std::vector<std::size_t> flat(total);
    for (std::size_t i = 0; i < total; ++i) flat[i] = i;
    rng.shuffle(flat);
    flat.resize(opt.samples);
    std::sort(flat.begin(), flat.end());
    std::size_t base = 0, p = 0;
    for (auto f : flat) {
      while (f >= base + params[p].value.size()) base += params[p++].value.size();
      coords.emplace_back(p, f - base);
    }
  }

  const double resolution =
      std::numeric_limits<double>::epsilon() * std::abs(evaluate_loss(build)) / opt.step;
  const double floor = std::max(opt.denominator_floor, resolution / opt.tolerance);

  GradientCheckReport report;
  for (auto [pi, k] : coords) {
    Parameter& p = params[pi];
    const double saved = p.value[k];
    p.value[k] = saved + opt.step;
    const double up = evaluate_loss(build);
    p.value[k] = saved - opt.step;
    const double down = evaluate_loss(build);
    p.value[k] = saved;
    GradientCheckEntry e{p.name, k, p.grad[k], (up - down) / (2.0 * opt.step), 0.0};
    const double denom = std::max({std::abs(e.analytic), std::abs(e.numeric), floor});
    e.relative_error = std::abs(e.analytic - e.numeric) / denom;
    if (e.relative_error > report.max_relative_error || report.entries.empty()) {
      report.max_relative_error = std::max(report.max_relative_error, e.relative_error);
      if (e.relative_error >= report.max_relative_error) report.worst = report.entries.size();
    }
    report.entries.push_back(std::move(e));
  }
  report.passed = report.max_relative_error < opt.tolerance;
  return report;
}

/// Runs one backward pass to obtain reverse-mode gradients, then compares
/// them against central differences.
inline GradientCheckReport gradient_check(ParameterSet& params, const LossBuilder& build,
                                          const GradientCheckOptions& opt = {}) {
  params.zero_grad();
  {
    Graph g;
    g.backward(build(g));
  }
  return compare_with_finite_differences(params, build, opt);
}

}  // namespace wdisc
