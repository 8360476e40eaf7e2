#pragma once

// Attention-based encoder-decoder.
//
//   encoder   stacked bidirectional LSTM, states h_i = fwd_i (+) bwd_i
//   s_0       tanh(W_init [fwd_A (+) bwd_1] + b_init)
//   step t    c_t = attend(h, s_{t-1})
//             y_t = W_out maxout(W_m [s_{t-1} (+) E(w_{t-1}) (+) c_t] + b_m) + b_out
//             s_t = LSTM(s_{t-1}, E(w_t) (+) c_t)
//   attend    e_i = v . tanh(W1 h_i + W2 s + b2), alpha = softmax(e / T)
//
// Decoding is always teacher-forced: the reference word, never the argmax
// of y_t, is fed to the next step.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "wdisc/alignment.hpp"
#include "wdisc/checkpoint.hpp"
#include "wdisc/corpus.hpp"
#include "wdisc/graph.hpp"
#include "wdisc/numerics.hpp"
#include "wdisc/random.hpp"

namespace wdisc {

struct ModelConfig {
  Direction direction = Direction::reverse;
  std::size_t embedding = 64;
  std::size_t cell = 64;
  std::size_t encoder_layers = 1;
  std::size_t decoder_layers = 1;
  double temperature = 1.0;
  /// Vocabulary sizes (reserved ids included) of the encoded and decoded sides.
  std::size_t encoder_vocab = 0;
  std::size_t decoder_vocab = 0;
  /// Half-width of the uniform weight initialization.
  double init_scale = 0.08;

  /// Symbols to words: 12-unit embeddings and cells, two encoder layers.
  static ModelConfig base(std::size_t encoder_vocab, std::size_t decoder_vocab) {
    return {Direction::base, 12, 12, 2, 1, 1.0, encoder_vocab, decoder_vocab, 0.08};
  }

  /// Words to symbols: 64-unit embeddings and cells, one encoder layer.
  static ModelConfig reverse(std::size_t encoder_vocab, std::size_t decoder_vocab) {
    return {Direction::reverse, 64, 64, 1, 1, 1.0, encoder_vocab, decoder_vocab, 0.08};
  }

  static ModelConfig preset(Direction d, std::size_t encoder_vocab, std::size_t decoder_vocab) {
    return d == Direction::base ? base(encoder_vocab, decoder_vocab) : reverse(encoder_vocab, decoder_vocab);
  }

  /// Preset sized for a corpus, taking the encoded/decoded sides from the
  /// direction.
  static ModelConfig preset(Direction d, const Corpus& corpus) {
    return d == Direction::base ? base(corpus.source_vocab.size(), corpus.target_vocab.size())
                                : reverse(corpus.target_vocab.size(), corpus.source_vocab.size());
  }

  void validate() const {
    if (embedding == 0 || cell == 0 || encoder_layers == 0 || decoder_layers == 0)
      throw ValidationError("model dimensions and layer counts must be positive");
    if (!(temperature > 0.0)) throw ValidationError("temperature must be positive");
    if (encoder_vocab <= Vocabulary::kNumReserved || decoder_vocab <= Vocabulary::kNumReserved)
      throw ValidationError("vocabularies must contain at least one regular token");
  }

  ConfigMap to_map() const {
    return {{"direction", to_string(direction)},
            {"embedding", std::to_string(embedding)},
            {"cell", std::to_string(cell)},
            {"encoder_layers", std::to_string(encoder_layers)},
            {"decoder_layers", std::to_string(decoder_layers)},
            {"temperature", format_double(temperature)},
            {"encoder_vocab", std::to_string(encoder_vocab)},
            {"decoder_vocab", std::to_string(decoder_vocab)},
            {"init_scale", format_double(init_scale)}};
  }

  static ModelConfig from_map(const ConfigMap& m) {
    auto get = [&](const std::string& k) {
      auto it = m.find(k);
      if (it == m.end()) throw IoError("model configuration lacks '" + k + "'");
      return it->second;
    };
    ModelConfig c;
    c.direction = parse_direction(get("direction"));
    c.embedding = std::stoul(get("embedding"));
    c.cell = std::stoul(get("cell"));
    c.encoder_layers = std::stoul(get("encoder_layers"));
    c.decoder_layers = std::stoul(get("decoder_layers"));
    c.temperature = parse_double(get("temperature"));
    c.encoder_vocab = std::stoul(get("encoder_vocab"));
    c.decoder_vocab = std::stoul(get("decoder_vocab"));
    if (m.count("init_scale")) c.init_scale = parse_double(get("init_scale"));
    return c;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

class Seq2SeqModel {
 public:
  explicit Seq2SeqModel(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    const std::size_t d = config_.embedding, n = config_.cell;
    src_embed_ = &params_.add("embed.encoder", config_.encoder_vocab, d);
    tgt_embed_ = &params_.add("embed.decoder", config_.decoder_vocab, d);
    for (std::size_t l = 0; l < config_.encoder_layers; ++l) {
      const std::size_t in = l == 0 ? d : 2 * n;
      const auto prefix = "encoder" + std::to_string(l);
      encoder_.push_back({LstmParams::create(params_, prefix + ".fw", in, n),
                          LstmParams::create(params_, prefix + ".bw", in, n)});
    }
    for (std::size_t k = 0; k < config_.decoder_layers; ++k) {
      const auto prefix = "decoder" + std::to_string(k);
      init_.push_back({&params_.add(prefix + ".init.W", n, 2 * n), &params_.add(prefix + ".init.b", n, 1)});
      decoder_.push_back(LstmParams::create(params_, prefix, k == 0 ? d + 2 * n : n, n));
    }
    att_w1_ = &params_.add("attention.W1", n, 2 * n);
    att_w2_ = &params_.add("attention.W2", n, n);
    att_b2_ = &params_.add("attention.b2", n, 1);
    att_v_ = &params_.add("attention.v", 1, n);
    maxout_w_ = &params_.add("maxout.W", 2 * n, n + d + 2 * n);
    maxout_b_ = &params_.add("maxout.b", 2 * n, 1);
    out_w_ = &params_.add("output.W", config_.decoder_vocab, n);
    out_b_ = &params_.add("output.b", config_.decoder_vocab, 1);
  }

  Seq2SeqModel(const Seq2SeqModel& o) : Seq2SeqModel(o.config_) { params_.assign_values(o.params_); }
  Seq2SeqModel(Seq2SeqModel&&) = default;
  Seq2SeqModel& operator=(const Seq2SeqModel&) = delete;

  /// Uniform weights in [-init_scale, init_scale]; zero biases except the
  /// LSTM forget gates, which start at 1.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Parameter& p = params_[i];
      const bool bias = p.value.cols() == 1 && p.name.size() > 2 && p.name.compare(p.name.size() - 2, 2, ".b") == 0;
      const bool b2 = p.name == "attention.b2";
      for (auto& x : p.value.values()) x = (bias || b2) ? 0.0 : rng.uniform(-config_.init_scale, config_.init_scale);
    }
    auto forget = [&](const LstmParams& lp) {
      const std::size_t n = config_.cell;
      for (std::size_t k = n; k < 2 * n; ++k) lp.b->value[k] = 1.0;
    };
    for (auto& layer : encoder_) {
      forget(layer[0]);
      forget(layer[1]);
    }
    for (auto& lp : decoder_) forget(lp);
  }

  const ModelConfig& config() const { return config_; }
  ModelConfig& mutable_config() { return config_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  void save(const std::filesystem::path& path) const { save_checkpoint(path, config_.to_map(), params_); }

  static Seq2SeqModel load(const std::filesystem::path& path) {
    Checkpoint ck = load_checkpoint(path);
    Seq2SeqModel m(ModelConfig::from_map(ck.config));
    if (ck.params.size() != m.params_.size()) throw IoError("checkpoint parameter count does not match its config");
    for (std::size_t i = 0; i < m.params_.size(); ++i) {
      const Parameter& src = ck.params.at(m.params_[i].name);
      if (!src.value.same_shape(m.params_[i].value)) throw IoError("checkpoint shape mismatch for " + src.name);
      m.params_[i].value = src.value;
    }
    return m;
  }

  // Slots used by the forward computation.
  Parameter& encoder_embedding() const { return *src_embed_; }
  Parameter& decoder_embedding() const { return *tgt_embed_; }
  const LstmParams& encoder_cell(std::size_t layer, bool backward) const { return encoder_[layer][backward ? 1 : 0]; }
  const LstmParams& decoder_cell(std::size_t layer) const { return decoder_[layer]; }
  std::pair<Parameter*, Parameter*> init_transform(std::size_t layer) const { return init_[layer]; }
  Parameter& attention_w1() const { return *att_w1_; }
  Parameter& attention_w2() const { return *att_w2_; }
  Parameter& attention_b2() const { return *att_b2_; }
  Parameter& attention_v() const { return *att_v_; }
  Parameter& maxout_w() const { return *maxout_w_; }
  Parameter& maxout_b() const { return *maxout_b_; }
  Parameter& output_w() const { return *out_w_; }
  Parameter& output_b() const { return *out_b_; }

 private:
  ModelConfig config_;
  ParameterSet params_;
  Parameter* src_embed_ = nullptr;
  Parameter* tgt_embed_ = nullptr;
  std::vector<std::array<LstmParams, 2>> encoder_;
  std::vector<std::pair<Parameter*, Parameter*>> init_;
  std::vector<LstmParams> decoder_;
  Parameter *att_w1_ = nullptr, *att_w2_ = nullptr, *att_b2_ = nullptr, *att_v_ = nullptr;
  Parameter *maxout_w_ = nullptr, *maxout_b_ = nullptr, *out_w_ = nullptr, *out_b_ = nullptr;
};

// ---------------------------------------------------------------------------
// Batched computation. Sequences are padded to the longest one in the batch.

struct EncodedBatch {
  /// [2n x (A*B)], column i*B+b = state of position i in sentence b.
  Var states;
  /// W1 * states, shared by every decoder step.
  Var keys;
  /// [2n x B], last forward state (+) last backward state.
  Var final_state;
  std::size_t max_len = 0;
  std::size_t batch = 0;
  std::vector<std::size_t> lengths;
  /// [A x B] row-major; 1 where position i exists in sentence b.
  std::vector<std::uint8_t> mask;
};

inline EncodedBatch encode_batch(Graph& g, const Seq2SeqModel& model,
                                 std::span<const std::vector<TokenId>> inputs) {
  const auto& cfg = model.config();
  const std::size_t B = inputs.size(), n = cfg.cell;
  if (B == 0) throw ValidationError("empty batch");
  EncodedBatch enc;
  enc.batch = B;
  for (const auto& s : inputs) {
    if (s.empty()) throw ValidationError("cannot encode an empty sequence");
    for (auto id : s)
      if (id >= cfg.encoder_vocab) throw ValidationError("encoder input id out of range");
    enc.lengths.push_back(s.size());
    enc.max_len = std::max(enc.max_len, s.size());
  }
  const std::size_t A = enc.max_len;
  enc.mask.assign(A * B, 0);
  std::vector<std::uint32_t> flat(A * B, Vocabulary::kPad);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t i = 0; i < inputs[b].size(); ++i) {
      flat[i * B + b] = inputs[b][i];
      enc.mask[i * B + b] = 1;
    }
  }
  auto keep = [&](std::size_t i) {
    return std::vector<std::uint8_t>(enc.mask.begin() + static_cast<std::ptrdiff_t>(i * B),
                                     enc.mask.begin() + static_cast<std::ptrdiff_t>((i + 1) * B));
  };
  auto full = [&](std::size_t i) {
    for (std::size_t b = 0; b < B; ++b)
      if (!enc.mask[i * B + b]) return false;
    return true;
  };

  Var layer_input = ops::lookup(g.param(model.encoder_embedding()), flat);
  Var fw_final, bw_final;
  for (std::size_t l = 0; l < cfg.encoder_layers; ++l) {
    std::vector<Var> fw(A), bw(A);
    for (int dir = 0; dir < 2; ++dir) {
      const LstmParams& p = model.encoder_cell(l, dir == 1);
      Var proj = ops::matmul(g.param(*p.wx), layer_input);
      Var h = g.input(Tensor(n, B));
      Var c = g.input(Tensor(n, B));
      for (std::size_t step = 0; step < A; ++step) {
        const std::size_t i = dir == 0 ? step : A - 1 - step;
        Var pre = lstm_preactivation(ops::slice_cols(proj, i * B, B), h, p);
        Var hc = ops::lstm(pre, c);
        Var hn = ops::slice_rows(hc, 0, n);
        Var cn = ops::slice_rows(hc, n, n);
        if (!full(i)) {
          hn = ops::select_cols(hn, h, keep(i));
          cn = ops::select_cols(cn, c, keep(i));
        }
        h = hn;
        c = cn;
        (dir == 0 ? fw : bw)[i] = h;
      }
      (dir == 0 ? fw_final : bw_final) = h;
    }
    std::vector<Var> per_position(A);
    for (std::size_t i = 0; i < A; ++i) per_position[i] = ops::concat_rows({fw[i], bw[i]});
    layer_input = ops::concat_cols(per_position);
  }
  enc.states = layer_input;
  enc.final_state = ops::concat_rows({fw_final, bw_final});
  enc.keys = ops::matmul(g.param(model.attention_w1()), enc.states);
  return enc;
}

struct DecoderState {
  std::vector<Var> hidden;
  std::vector<Var> cell;

  Var top() const { return hidden.back(); }
};

inline DecoderState initial_state(Graph& g, const Seq2SeqModel& model, const EncodedBatch& enc) {
  DecoderState s;
  for (std::size_t k = 0; k < model.config().decoder_layers; ++k) {
    auto [w, b] = model.init_transform(k);
    s.hidden.push_back(ops::tanh(ops::add_bias(ops::matmul(g.param(*w), enc.final_state), g.param(*b))));
    s.cell.push_back(g.input(Tensor(model.config().cell, enc.batch)));
  }
  return s;
}

struct AttentionResult {
  /// [2n x B]
  Var context;
  /// [A x B], each column a distribution over source positions.
  Var weights;
};

inline AttentionResult attend(Graph& g, const Seq2SeqModel& model, const EncodedBatch& enc, Var query) {
  Var q = ops::add_bias(ops::matmul(g.param(model.attention_w2()), query), g.param(model.attention_b2()));
  Var hidden = ops::tanh(ops::tile_add(enc.keys, q));
  Var scores = ops::reshape(ops::matmul(g.param(model.attention_v()), hidden), enc.max_len, enc.batch);
  Var alpha = ops::masked_softmax_cols(scores, enc.mask, model.config().temperature);
  return {ops::attention_context(alpha, enc.states), alpha};
}

struct StepResult {
  /// [|V| x B] unnormalized output scores y_t.
  Var logits;
  DecoderState state;
  Var weights;
};

/// One teacher-forced step. `previous_words` are w_{t-1}; `current_words`
/// are the references w_t that update the state. Passing no current words
/// skips the state update (the final step of a sentence needs none).
inline StepResult decoder_step(Graph& g, const Seq2SeqModel& model, const EncodedBatch& enc,
                               const DecoderState& previous, const std::vector<TokenId>& previous_words,
                               const std::vector<TokenId>* current_words) {
  const auto& cfg = model.config();
  for (auto id : previous_words)
    if (id >= cfg.decoder_vocab) throw ValidationError("decoder word id out of range");
  Var s = previous.top();
  AttentionResult att = attend(g, model, enc, s);
  Var emb_prev = ops::lookup(g.param(model.decoder_embedding()), previous_words);
  Var features = ops::concat_rows({s, emb_prev, att.context});
  Var pooled = ops::maxout(ops::add_bias(ops::matmul(g.param(model.maxout_w()), features), g.param(model.maxout_b())), 2);
  Var logits = ops::add_bias(ops::matmul(g.param(model.output_w()), pooled), g.param(model.output_b()));

  StepResult r{logits, previous, att.weights};
  if (current_words) {
    for (auto id : *current_words)
      if (id >= cfg.decoder_vocab) throw ValidationError("decoder word id out of range");
    Var input = ops::concat_rows({ops::lookup(g.param(model.decoder_embedding()), *current_words), att.context});
    for (std::size_t k = 0; k < cfg.decoder_layers; ++k) {
      auto [h, c] = lstm_cell(input, previous.hidden[k], previous.cell[k], model.decoder_cell(k));
      r.state.hidden[k] = h;
      r.state.cell[k] = c;
      input = h;
    }
  }
  return r;
}

struct BatchDecode {
  /// Sum over sentences of the per-sentence cross-entropy (1x1).
  Var loss;
  /// Per step, [1 x B] weighted token losses (zero past a sentence's end).
  std::vector<Var> step_losses;
  std::vector<Var> step_logits;
  std::vector<Var> step_weights;
  EncodedBatch encoded;
  /// Decoder lengths including the end-of-sentence step.
  std::vector<std::size_t> output_lengths;
};

/// Teacher-forced decoding of every output sequence with an end-of-sentence
/// token appended.
inline BatchDecode force_decode_batch(Graph& g, const Seq2SeqModel& model,
                                      std::span<const std::vector<TokenId>> inputs,
                                      std::span<const std::vector<TokenId>> outputs) {
  if (inputs.size() != outputs.size()) throw ValidationError("inputs and outputs differ in count");
  const std::size_t B = inputs.size();
  BatchDecode r;
  r.encoded = encode_batch(g, model, inputs);
  std::size_t steps = 0;
  for (const auto& o : outputs) {
    if (o.empty()) throw ValidationError("cannot decode an empty reference");
    r.output_lengths.push_back(o.size() + 1);
    steps = std::max(steps, o.size() + 1);
  }
  auto word_at = [&](std::size_t b, std::size_t t) -> TokenId {
    const auto& o = outputs[b];
    if (t < o.size()) return o[t];
    if (t == o.size()) return Vocabulary::kEos;
    return Vocabulary::kPad;
  };

  DecoderState state = initial_state(g, model, r.encoded);
  std::vector<TokenId> prev(B, Vocabulary::kBos);
  std::vector<Var> losses;
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<TokenId> cur(B);
    std::vector<double> weight(B);
    for (std::size_t b = 0; b < B; ++b) {
      cur[b] = word_at(b, t);
      weight[b] = t < r.output_lengths[b] ? 1.0 : 0.0;
    }
    const bool last = t + 1 == steps;
    StepResult step = decoder_step(g, model, r.encoded, state, prev, last ? nullptr : &cur);
    Var l = ops::softmax_cross_entropy(step.logits, cur, weight);
    r.step_losses.push_back(l);
    r.step_logits.push_back(step.logits);
    r.step_weights.push_back(step.weights);
    losses.push_back(l);
    state = step.state;
    prev = cur;
  }
  r.loss = ops::sum(ops::concat_cols(losses));
  return r;
}

/// Per-sentence losses read back from a decoded batch.
inline std::vector<double> sentence_losses(const Graph& g, const BatchDecode& d) {
  std::vector<double> out(d.output_lengths.size(), 0.0);
  for (Var l : d.step_losses) {
    const Tensor& v = g.value(l);
    for (std::size_t b = 0; b < out.size(); ++b) out[b] += v(0, b);
  }
  return out;
}

/// Attention rows of sentence b: (output length + 1) x input length.
inline Tensor sentence_alignment(const Graph& g, const BatchDecode& d, std::size_t b) {
  const std::size_t rows = d.output_lengths[b], cols = d.encoded.lengths[b];
  Tensor m(rows, cols);
  for (std::size_t t = 0; t < rows; ++t) {
    const Tensor& w = g.value(d.step_weights[t]);
    for (std::size_t i = 0; i < cols; ++i) m(t, i) = w(i, b);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Single-sentence conveniences.

/// Encoded and decoded token sequences of a pair for a direction.
inline std::pair<const std::vector<TokenId>&, const std::vector<TokenId>&> model_io(const SentencePair& p,
                                                                                    Direction d) {
  if (d == Direction::base) return {p.source, p.target};
  return {p.target, p.source};
}

/// Encoder states as rows: [A x 2n].
inline Tensor encode(const Seq2SeqModel& model, const std::vector<TokenId>& input) {
  Graph g(false);
  std::vector<std::vector<TokenId>> batch{input};
  EncodedBatch enc = encode_batch(g, model, batch);
  const Tensor& s = g.value(enc.states);
  Tensor out(enc.max_len, s.rows());
  out.mat() = s.mat().transpose();
  return out;
}

struct DecodeResult {
  double loss = 0.0;
  /// (output length + 1) x input length; last row is the end-of-sentence step.
  Tensor alignment;
  /// Softmax of y_t for every step.
  std::vector<std::vector<double>> step_probabilities;
};

inline DecodeResult force_decode(const Seq2SeqModel& model, const std::vector<TokenId>& input,
                                 const std::vector<TokenId>& output) {
  Graph g(false);
  std::vector<std::vector<TokenId>> in{input}, out{output};
  BatchDecode d = force_decode_batch(g, model, in, out);
  DecodeResult r;
  r.loss = g.value(d.loss)[0];
  r.alignment = sentence_alignment(g, d, 0);
  for (Var y : d.step_logits) {
    const Tensor& v = g.value(y);
    r.step_probabilities.push_back(softmax_temperature(v.values()));
  }
  return r;
}

/// Force-decodes a corpus pair and labels the matrix with token surfaces.
inline std::pair<double, AlignmentMatrix> force_decode(const Seq2SeqModel& model, const SentencePair& pair,
                                                       const Vocabulary& source_vocab,
                                                       const Vocabulary& target_vocab, std::size_t index = 0) {
  const Direction dir = model.config().direction;
  auto [in, out] = model_io(pair, dir);
  DecodeResult r = force_decode(model, in, out);
  const Vocabulary& in_vocab = dir == Direction::base ? source_vocab : target_vocab;
  const Vocabulary& out_vocab = dir == Direction::base ? target_vocab : source_vocab;
  AlignmentMatrix m;
  m.sentence = index;
  m.direction = dir;
  m.probs = std::move(r.alignment);
  m.eos_row = true;
  for (auto id : out) m.row_tokens.push_back(out_vocab.surface(id));
  m.row_tokens.push_back(out_vocab.surface(Vocabulary::kEos));
  for (auto id : in) m.col_tokens.push_back(in_vocab.surface(id));
  return {r.loss, std::move(m)};
}

}  // namespace wdisc
