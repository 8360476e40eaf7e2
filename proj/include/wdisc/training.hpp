#pragma once

// Mini-batch Adam training with loss-plateau early stopping, and corpus-wide
// extraction of attention matrices by forced decoding.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "wdisc/model.hpp"

namespace wdisc {

struct EpochStats {
  std::size_t epoch = 0;
  /// Training loss per decoded token (end-of-sentence steps included).
  double token_loss = 0.0;
  /// Mean per-sentence loss, the optimized objective.
  double sentence_loss = 0.0;
  std::size_t skipped_updates = 0;
};

struct TrainConfig {
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  std::size_t patience = 3;
  double min_delta = 1e-4;
  std::size_t max_epochs = 200;
  std::uint64_t seed = 1;
  double clip_norm = 0.0;
  /// Stop once the per-token training loss of an epoch falls below this
  /// value. Zero disables the target.
  double target_loss = 0.0;
  /// Called after every epoch; may be empty.
  std::function<void(const EpochStats&)> on_epoch;

  void validate() const {
    if (batch_size == 0) throw ValidationError("batch size must be at least 1");
    if (patience == 0) throw ValidationError("patience must be at least 1");
    if (max_epochs == 0) throw ValidationError("max epochs must be at least 1");
    if (!(learning_rate > 0.0)) throw ValidationError("learning rate must be positive");
    if (min_delta < 0.0) throw ValidationError("minimum improvement must be non-negative");
    if (target_loss < 0.0) throw ValidationError("target loss must be non-negative");
  }
};

/// Stops once the monitored loss has failed to improve on the best value by
/// more than `min_delta` for `patience` consecutive epochs.
class EarlyStopping {
 public:
  EarlyStopping(std::size_t patience, double min_delta) : patience_(patience), min_delta_(min_delta) {}

  /// Records one epoch; returns true when training should stop.
  bool update(double loss) {
    if (loss < best_ - min_delta_) {
      best_ = loss;
      stale_ = 0;
      improved_ = true;
    } else {
      ++stale_;
      improved_ = false;
    }
    return stale_ >= patience_;
  }

  bool improved() const { return improved_; }
  double best() const { return best_; }

 private:
  std::size_t patience_;
  double min_delta_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t stale_ = 0;
  bool improved_ = false;
};

struct TrainResult {
  Seq2SeqModel model;
  std::vector<EpochStats> trace;
  std::size_t best_epoch = 0;
  bool early_stopped = false;
  bool reached_target = false;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(const std::string& what, std::vector<EpochStats> trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const std::vector<EpochStats>& trace() const { return trace_; }

 private:
  std::vector<EpochStats> trace_;
};

struct BatchOutcome {
  double loss_sum = 0.0;
  std::size_t tokens = 0;
  AdamStatus status = AdamStatus::applied;
};

/// One optimization step on a batch of pairs: loss = mean sentence loss.
inline BatchOutcome train_batch(Seq2SeqModel& model, AdamState& adam, const std::vector<const SentencePair*>& batch) {
  const Direction dir = model.config().direction;
  std::vector<std::vector<TokenId>> in, out;
  BatchOutcome r;
  for (const SentencePair* p : batch) {
    auto [i, o] = model_io(*p, dir);
    in.push_back(i);
    out.push_back(o);
    r.tokens += o.size() + 1;
  }
  model.params().zero_grad();
  Graph g;
  BatchDecode d = force_decode_batch(g, model, in, out);
  r.loss_sum = g.value(d.loss)[0];
  if (!std::isfinite(r.loss_sum)) return r;
  g.backward(ops::scale(d.loss, 1.0 / static_cast<double>(batch.size())));
  r.status = adam_step(model.params(), adam);
  return r;
}

inline void check_vocabularies(const Corpus& corpus, const ModelConfig& mc) {
  const auto& enc = mc.direction == Direction::base ? corpus.source_vocab : corpus.target_vocab;
  const auto& dec = mc.direction == Direction::base ? corpus.target_vocab : corpus.source_vocab;
  if (enc.size() != mc.encoder_vocab || dec.size() != mc.decoder_vocab)
    throw ValidationError("corpus vocabularies (" + std::to_string(enc.size()) + ", " + std::to_string(dec.size()) +
                          ") do not match the model configuration (" + std::to_string(mc.encoder_vocab) + ", " +
                          std::to_string(mc.decoder_vocab) + ")");
}

/// Trains from a seeded initialization. Each epoch is one shuffled pass in
/// batches of `batch_size`; the returned model holds the parameters from the
/// epoch with the lowest training loss.
inline TrainResult train(const Corpus& corpus, const TrainConfig& config, const ModelConfig& model_config) {
  config.validate();
  if (corpus.empty()) throw ValidationError("cannot train on an empty corpus");
  check_vocabularies(corpus, model_config);

  Seq2SeqModel model(model_config);
  model.initialize(config.seed);
  AdamConfig ac;
  ac.learning_rate = config.learning_rate;
  ac.clip_norm = config.clip_norm;
  AdamState adam(model.params(), ac);
  Rng order_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);

  TrainResult result{Seq2SeqModel(model_config), {}, 0, false, false};
  EarlyStopping stopper(config.patience, config.min_delta);
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    order_rng.shuffle(order);
    EpochStats stats;
    stats.epoch = epoch;
    double loss_sum = 0.0;
    std::size_t tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      std::vector<const SentencePair*> batch;
      for (std::size_t k = start; k < std::min(order.size(), start + config.batch_size); ++k)
        batch.push_back(&corpus.pairs[order[k]]);
      BatchOutcome b = train_batch(model, adam, batch);
      if (!std::isfinite(b.loss_sum)) {
        stats.token_loss = stats.sentence_loss = b.loss_sum;
        result.trace.push_back(stats);
        throw TrainingDiverged("training loss became non-finite in epoch " + std::to_string(epoch), result.trace);
      }
      if (b.status == AdamStatus::skipped_non_finite) ++stats.skipped_updates;
      loss_sum += b.loss_sum;
      tokens += b.tokens;
    }
    stats.token_loss = loss_sum / static_cast<double>(tokens);
    stats.sentence_loss = loss_sum / static_cast<double>(corpus.size());
    result.trace.push_back(stats);
    if (config.on_epoch) config.on_epoch(stats);
    const bool stop = stopper.update(stats.token_loss);
    if (stopper.improved()) {
      result.model.params().assign_values(model.params());
      result.best_epoch = epoch;
    }
    if (config.target_loss > 0.0 && stats.token_loss < config.target_loss) {
      result.reached_target = true;
      break;
    }
    if (stop) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

/// Forced decoding of every pair, one matrix per pair in corpus order.
inline std::vector<AlignmentMatrix> extract_alignments(const Seq2SeqModel& model, const Corpus& corpus,
                                                       std::size_t batch_size = 32) {
  check_vocabularies(corpus, model.config());
  if (batch_size == 0) throw ValidationError("batch size must be at least 1");
  const Direction dir = model.config().direction;
  const Vocabulary& in_vocab = dir == Direction::base ? corpus.source_vocab : corpus.target_vocab;
  const Vocabulary& out_vocab = dir == Direction::base ? corpus.target_vocab : corpus.source_vocab;
  std::vector<AlignmentMatrix> out;
  out.reserve(corpus.size());
  for (std::size_t start = 0; start < corpus.size(); start += batch_size) {
    const std::size_t end = std::min(corpus.size(), start + batch_size);
    std::vector<std::vector<TokenId>> in, dec;
    for (std::size_t k = start; k < end; ++k) {
      auto [i, o] = model_io(corpus.pairs[k], dir);
      in.push_back(i);
      dec.push_back(o);
    }
    Graph g(false);
    BatchDecode d = force_decode_batch(g, model, in, dec);
    for (std::size_t b = 0; b < in.size(); ++b) {
      AlignmentMatrix m;
      m.sentence = start + b;
      m.direction = dir;
      m.eos_row = true;
      m.probs = sentence_alignment(g, d, b);
      for (auto id : dec[b]) m.row_tokens.push_back(out_vocab.surface(id));
      m.row_tokens.push_back(out_vocab.surface(Vocabulary::kEos));
      for (auto id : in[b]) m.col_tokens.push_back(in_vocab.surface(id));
      out.push_back(std::move(m));
    }
  }
  return out;
}

inline void write_loss_trace(const std::filesystem::path& path, const std::vector<EpochStats>& trace) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& e : trace) out << e.epoch << '\t' << format_double(e.token_loss) << '\n';
}

}  // namespace wdisc
