#pragma once

// The end-to-end discovery pipeline driven by a key=value configuration:
// prepare -> train -> extract -> smooth -> fuse -> segment -> evaluate ->
// analyze -> heatmap. Every stage writes its artifacts under the output
// directory and records itself in a manifest, so a re-run with the same
// settings skips finished stages.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "wdisc/alignment.hpp"
#include "wdisc/corpus.hpp"
#include "wdisc/discovery.hpp"
#include "wdisc/evaluation.hpp"
#include "wdisc/training.hpp"

namespace wdisc {

// ---------------------------------------------------------------------------
// Configuration

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ValidationError("'" + key + "' expects a boolean, got '" + v + "'");
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& v) {
  std::uint64_t x = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), x);
  if (ec != std::errc() || ptr != v.data() + v.size())
    throw ValidationError("'" + key + "' expects a non-negative integer, got '" + v + "'");
  return x;
}

inline double parse_number(const std::string& key, const std::string& v) {
  try {
    return parse_double(v);
  } catch (const IoError&) {
    throw ValidationError("'" + key + "' expects a number, got '" + v + "'");
  }
}

struct PipelineConfig {
  std::filesystem::path source, target, gold, inventory;
  std::filesystem::path out = "wdisc-out";
  Direction preset = Direction::reverse;
  std::optional<double> temperature;
  bool smooth = false;
  /// Symbol-axis smoothing averages neighbouring symbols in both directions.
  SmoothAxis smooth_axis = SmoothAxis::symbol;
  /// Matrices of the opposite direction to fuse with (optional).
  std::filesystem::path fuse_with;
  /// Smooth again after fusion.
  bool smooth_after_fuse = false;
  std::size_t supervise_k = 0;
  std::optional<bool> evaluate;
  std::optional<bool> token_scores;
  bool exclude_supervised = true;
  /// "train" scores the segmented training portion; "all" adds the dev part
  /// to the gold type inventory.
  std::string eval_portion = "train";
  double dev_fraction = 0.1;
  std::uint64_t seed = 1;
  std::size_t batch_size = 32;
  double learning_rate = 0.001;
  std::size_t patience = 3;
  double min_delta = 1e-4;
  std::size_t max_epochs = 200;
  double clip_norm = 0.0;
  std::size_t embedding = 0;
  std::size_t cell = 0;
  std::size_t heatmaps = 3;
  std::size_t heatmap_scale = 8;

  double effective_temperature() const { return temperature.value_or(smooth ? 10.0 : 1.0); }
  bool effective_evaluate() const { return evaluate.value_or(!gold.empty()); }
  bool effective_token_scores() const { return token_scores.value_or(supervise_k == 0); }

  void set(const std::string& key, const std::string& v) {
    if (key == "source") source = v;
    else if (key == "target") target = v;
    else if (key == "gold") gold = v;
    else if (key == "inventory") inventory = v;
    else if (key == "out") out = v;
    else if (key == "preset") preset = parse_direction(v);
    else if (key == "temperature") temperature = parse_number(key, v);
    else if (key == "smooth") smooth = parse_bool(key, v);
    else if (key == "smooth_axis") smooth_axis = parse_smooth_axis(v);
    else if (key == "fuse_with") fuse_with = v;
    else if (key == "smooth_after_fuse") smooth_after_fuse = parse_bool(key, v);
    else if (key == "supervise_k") supervise_k = parse_unsigned(key, v);
    else if (key == "evaluate") evaluate = parse_bool(key, v);
    else if (key == "token_scores") token_scores = parse_bool(key, v);
    else if (key == "exclude_supervised") exclude_supervised = parse_bool(key, v);
    else if (key == "eval_portion") eval_portion = v;
    else if (key == "dev_fraction") dev_fraction = parse_number(key, v);
    else if (key == "seed") seed = parse_unsigned(key, v);
    else if (key == "batch_size") batch_size = parse_unsigned(key, v);
    else if (key == "learning_rate") learning_rate = parse_number(key, v);
    else if (key == "patience") patience = parse_unsigned(key, v);
    else if (key == "min_delta") min_delta = parse_number(key, v);
    else if (key == "max_epochs") max_epochs = parse_unsigned(key, v);
    else if (key == "clip_norm") clip_norm = parse_number(key, v);
    else if (key == "embedding") embedding = parse_unsigned(key, v);
    else if (key == "cell") cell = parse_unsigned(key, v);
    else if (key == "heatmaps") heatmaps = parse_unsigned(key, v);
    else if (key == "heatmap_scale") heatmap_scale = parse_unsigned(key, v);
    else throw ValidationError("unknown configuration key '" + key + "'");
  }

  /// Canonical key=value form; absent optional values are omitted.
  ConfigMap to_map() const {
    ConfigMap m;
    auto put = [&](const std::string& k, const std::string& v) { m[k] = v; };
    put("source", source.string());
    put("target", target.string());
    put("gold", gold.string());
    put("inventory", inventory.string());
    put("out", out.string());
    put("preset", to_string(preset));
    put("temperature", format_double(effective_temperature()));
    put("smooth", smooth ? "true" : "false");
    put("smooth_axis", to_string(smooth_axis));
    put("fuse_with", fuse_with.string());
    put("smooth_after_fuse", smooth_after_fuse ? "true" : "false");
    put("supervise_k", std::to_string(supervise_k));
    put("evaluate", effective_evaluate() ? "true" : "false");
    put("token_scores", effective_token_scores() ? "true" : "false");
    put("exclude_supervised", exclude_supervised ? "true" : "false");
    put("eval_portion", eval_portion);
    put("dev_fraction", format_double(dev_fraction));
    put("seed", std::to_string(seed));
    put("batch_size", std::to_string(batch_size));
    put("learning_rate", format_double(learning_rate));
    put("patience", std::to_string(patience));
    put("min_delta", format_double(min_delta));
    put("max_epochs", std::to_string(max_epochs));
    put("clip_norm", format_double(clip_norm));
    put("embedding", std::to_string(embedding));
    put("cell", std::to_string(cell));
    put("heatmaps", std::to_string(heatmaps));
    put("heatmap_scale", std::to_string(heatmap_scale));
    return m;
  }

  /// Checks values and that every referenced input file exists. Runs before
  /// any stage so that a bad configuration never starts training.
  void validate() const {
    auto need = [](const std::filesystem::path& p, const char* what) {
      if (p.empty()) throw ValidationError(std::string("no ") + what + " file configured");
      if (!std::filesystem::is_regular_file(p))
        throw ValidationError(std::string(what) + " file not found: " + p.string());
    };
    need(source, "source");
    need(target, "target");
    if (!inventory.empty()) need(inventory, "symbol inventory");
    if (effective_evaluate()) need(gold, "gold");
    if (supervise_k > 0 && gold.empty()) throw ValidationError("supervision needs a gold file");
    if (!fuse_with.empty()) need(fuse_with, "fusion matrices");
    if (!(effective_temperature() > 0.0)) throw ValidationError("temperature must be positive");
    if (!(dev_fraction >= 0.0 && dev_fraction < 1.0)) throw ValidationError("dev_fraction must lie in [0, 1)");
    if (eval_portion != "train" && eval_portion != "all")
      throw ValidationError("eval_portion must be 'train' or 'all'");
    if (heatmap_scale == 0) throw ValidationError("heatmap_scale must be at least 1");
    train_config().validate();
  }

  TrainConfig train_config() const {
    TrainConfig t;
    t.batch_size = batch_size;
    t.learning_rate = learning_rate;
    t.patience = patience;
    t.min_delta = min_delta;
    t.max_epochs = max_epochs;
    t.seed = seed;
    t.clip_norm = clip_norm;
    return t;
  }

  ModelConfig model_config(const Corpus& corpus) const {
    ModelConfig m = ModelConfig::preset(preset, corpus);
    if (embedding) m.embedding = embedding;
    if (cell) m.cell = cell;
    m.temperature = effective_temperature();
    m.validate();
    return m;
  }
};

namespace pipeline_detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace pipeline_detail

/// Reads "key = value" lines; '#' starts a comment. Relative paths are taken
/// relative to the configuration file's directory.
inline PipelineConfig read_config(const std::filesystem::path& path) {
  PipelineConfig c;
  const auto base = path.parent_path();
  std::size_t n = 0;
  for (const auto& raw : detail::read_lines(path)) {
    ++n;
    std::string line = raw.substr(0, raw.find('#'));
    line = pipeline_detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(path.string() + ":" + std::to_string(n) + ": expected key = value");
    const std::string key = pipeline_detail::trim(line.substr(0, eq));
    std::string value = pipeline_detail::trim(line.substr(eq + 1));
    static const std::set<std::string> paths{"source", "target", "gold", "inventory", "out", "fuse_with"};
    if (paths.count(key) && !value.empty() && std::filesystem::path(value).is_relative()) value = (base / value).string();
    c.set(key, value);
  }
  return c;
}

inline void write_config(const std::filesystem::path& path, const PipelineConfig& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  for (const auto& [k, v] : c.to_map()) out << k << " = " << v << '\n';
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

// ---------------------------------------------------------------------------
// Stages

enum class Stage { prepare, train, extract, smooth, fuse, segment, evaluate, analyze, heatmap };

inline const std::vector<Stage>& all_stages() {
  static const std::vector<Stage> s{Stage::prepare, Stage::train,    Stage::extract, Stage::smooth, Stage::fuse,
                                    Stage::segment, Stage::evaluate, Stage::analyze, Stage::heatmap};
  return s;
}

inline std::string to_string(Stage s) {
  switch (s) {
    case Stage::prepare: return "prepare";
    case Stage::train: return "train";
    case Stage::extract: return "extract";
    case Stage::smooth: return "smooth";
    case Stage::fuse: return "fuse";
    case Stage::segment: return "segment";
    case Stage::evaluate: return "evaluate";
    case Stage::analyze: return "analyze";
    case Stage::heatmap: return "heatmap";
  }
  return "?";
}

inline Stage parse_stage(const std::string& s) {
  for (Stage x : all_stages())
    if (to_string(x) == s) return x;
  throw ValidationError("unknown stage '" + s + "'");
}

/// Configuration keys whose values a stage's output depends on, including
/// those of the stages before it.
inline std::vector<std::string> stage_keys(Stage s) {
  std::vector<std::string> keys{"source", "target", "gold", "inventory", "supervise_k", "dev_fraction", "seed"};
  auto add = [&](std::initializer_list<const char*> k) { keys.insert(keys.end(), k.begin(), k.end()); };
  if (s >= Stage::train)
    add({"preset", "temperature", "batch_size", "learning_rate", "patience", "min_delta", "max_epochs", "clip_norm",
         "embedding", "cell"});
  if (s >= Stage::smooth) add({"smooth", "smooth_axis"});
  if (s >= Stage::fuse) add({"fuse_with", "smooth_after_fuse"});
  if (s >= Stage::evaluate) add({"evaluate", "token_scores", "exclude_supervised", "eval_portion"});
  if (s >= Stage::heatmap) add({"heatmaps", "heatmap_scale"});
  return keys;
}

inline std::string stage_hash(const PipelineConfig& c, Stage s) {
  const auto m = c.to_map();
  std::string canon;
  for (const auto& k : stage_keys(s)) canon += k + "=" + m.at(k) + "\n";
  return hex64(fnv1a(canon));
}

/// Artifact locations under the output directory.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path manifest() const { return root / "manifest.tsv"; }
  std::filesystem::path config() const { return root / "config.txt"; }
  std::filesystem::path train_corpus() const { return root / "corpus" / "train"; }
  std::filesystem::path dev_corpus() const { return root / "corpus" / "dev"; }
  std::filesystem::path checkpoint() const { return root / "model.ckpt"; }
  std::filesystem::path loss_trace() const { return root / "loss.tsv"; }
  std::filesystem::path dev_loss() const { return root / "dev_loss.txt"; }
  std::filesystem::path raw_matrices() const { return root / "matrices.raw.txt"; }
  std::filesystem::path smoothed_matrices() const { return root / "matrices.smoothed.txt"; }
  std::filesystem::path fused_matrices() const { return root / "matrices.fused.txt"; }
  std::filesystem::path segmentation() const { return root / "segmentation.txt"; }
  std::filesystem::path token_alignments() const { return root / "token_alignments.tsv"; }
  std::filesystem::path report_text() const { return root / "report.txt"; }
  std::filesystem::path report_kv() const { return root / "report.kv"; }
  std::filesystem::path rank_frequency() const { return root / "rank_frequency.tsv"; }
  std::filesystem::path gold_rank_frequency() const { return root / "gold_rank_frequency.tsv"; }
  std::filesystem::path length_histogram() const { return root / "length_histogram.tsv"; }
  std::filesystem::path gold_length_histogram() const { return root / "gold_length_histogram.tsv"; }
  std::filesystem::path heatmap_dir() const { return root / "heatmaps"; }
};

struct ManifestEntry {
  std::string stage;
  std::string hash;
  std::uint64_t seed = 0;
  std::vector<std::string> artifacts;
};

class Manifest {
 public:
  explicit Manifest(std::filesystem::path path) : path_(std::move(path)) {
    if (!std::filesystem::exists(path_)) return;
    for (const auto& line : detail::read_lines(path_)) {
      if (line.empty() || line[0] == '#') continue;
      std::istringstream in(line);
      ManifestEntry e;
      std::string artifacts;
      if (!std::getline(in, e.stage, '\t') || !std::getline(in, e.hash, '\t')) throw IoError("malformed manifest line");
      std::string seed;
      std::getline(in, seed, '\t');
      e.seed = seed.empty() ? 0 : std::stoull(seed);
      std::getline(in, artifacts);
      std::istringstream as(artifacts);
      std::string a;
      while (std::getline(as, a, ',')) e.artifacts.push_back(a);
      entries_[e.stage] = e;
    }
  }

  /// True when the stage finished with this hash and its artifacts exist.
  bool done(const std::string& stage, const std::string& hash, const std::filesystem::path& root) const {
    auto it = entries_.find(stage);
    if (it == entries_.end() || it->second.hash != hash) return false;
    for (const auto& a : it->second.artifacts)
      if (!std::filesystem::exists(root / a)) return false;
    return true;
  }

  void record(ManifestEntry e) {
    entries_[e.stage] = std::move(e);
    save();
  }

  void forget(const std::string& stage) {
    if (entries_.erase(stage)) save();
  }

  const std::map<std::string, ManifestEntry>& entries() const { return entries_; }

 private:
  void save() const {
    std::ofstream out(path_, std::ios::binary);
    if (!out) throw IoError("cannot write " + path_.string());
    out << "# stage\tconfig-hash\tseed\tartifacts\n";
    for (Stage s : all_stages()) {
      auto it = entries_.find(to_string(s));
      if (it == entries_.end()) continue;
      const auto& e = it->second;
      out << e.stage << '\t' << e.hash << '\t' << e.seed << '\t';
      for (std::size_t i = 0; i < e.artifacts.size(); ++i) out << (i ? "," : "") << e.artifacts[i];
      out << '\n';
    }
  }

  std::filesystem::path path_;
  std::map<std::string, ManifestEntry> entries_;
};

// ---------------------------------------------------------------------------
// Heatmaps

/// Binary PGM with each cell drawn as a `scale` x `scale` block; gray level
/// 255 * (1 - p) so that darker means more probable.
inline void write_pgm(const std::filesystem::path& path, const Tensor& probs, std::size_t scale = 8) {
  if (scale == 0) throw ValidationError("heatmap scale must be at least 1");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  const std::size_t w = probs.cols() * scale, h = probs.rows() * scale;
  out << "P5\n" << w << ' ' << h << "\n255\n";
  std::vector<unsigned char> row(w);
  for (std::size_t r = 0; r < probs.rows(); ++r) {
    for (std::size_t c = 0; c < probs.cols(); ++c) {
      const double p = std::clamp(probs(r, c), 0.0, 1.0);
      const auto gray = static_cast<unsigned char>(std::lround(255.0 * (1.0 - p)));
      std::fill(row.begin() + static_cast<std::ptrdiff_t>(c * scale),
                row.begin() + static_cast<std::ptrdiff_t>((c + 1) * scale), gray);
    }
    for (std::size_t k = 0; k < scale; ++k) out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(w));
  }
  if (!out) throw IoError("failed writing " + path.string());
}

struct Pgm {
  std::size_t width = 0, height = 0;
  std::vector<unsigned char> pixels;
  unsigned char at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

inline Pgm read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::string magic;
  int maxval = 0;
  Pgm p;
  in >> magic >> p.width >> p.height >> maxval;
  if (magic != "P5" || maxval != 255) throw IoError("unsupported image " + path.string());
  in.get();
  p.pixels.resize(p.width * p.height);
  in.read(reinterpret_cast<char*>(p.pixels.data()), static_cast<std::streamsize>(p.pixels.size()));
  if (!in) throw IoError("truncated image " + path.string());
  return p;
}

/// Tab-separated table: a header of column tokens, then one line per row
/// starting with the row token.
inline void write_heatmap_table(const std::filesystem::path& path, const AlignmentMatrix& m) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  auto label = [](const std::vector<std::string>& v, std::size_t i) { return i < v.size() ? v[i] : std::to_string(i); };
  out << to_string(m.direction);
  for (std::size_t c = 0; c < m.cols(); ++c) out << '\t' << label(m.col_tokens, c);
  out << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    out << label(m.row_tokens, r);
    for (std::size_t c = 0; c < m.cols(); ++c) out << '\t' << format_double(m.probs(r, c));
    out << '\n';
  }
}

inline AlignmentMatrix read_heatmap_table(const std::filesystem::path& path) {
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw IoError("empty heatmap table " + path.string());
  auto fields = [](const std::string& l) {
    std::vector<std::string> f;
    std::stringstream ss(l);
    std::string x;
    while (std::getline(ss, x, '\t')) f.push_back(x);
    return f;
  };
  AlignmentMatrix m;
  auto head = fields(lines[0]);
  m.direction = parse_direction(head.at(0));
  m.col_tokens.assign(head.begin() + 1, head.end());
  const std::size_t cols = m.col_tokens.size();
  std::vector<double> values;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = fields(lines[i]);
    if (f.size() != cols + 1) throw IoError("heatmap table row has wrong width");
    m.row_tokens.push_back(f[0]);
    for (std::size_t c = 0; c < cols; ++c) values.push_back(parse_double(f[c + 1]));
  }
  m.probs = Tensor(m.row_tokens.size(), cols, std::move(values));
  return m;
}

/// Writes <stem>.pgm and <stem>.tsv.
inline void export_heatmap(const AlignmentMatrix& m, const std::filesystem::path& stem, std::size_t scale = 8) {
  if (!stem.parent_path().empty()) std::filesystem::create_directories(stem.parent_path());
  write_pgm(stem.string() + ".pgm", m.probs, scale);
  write_heatmap_table(stem.string() + ".tsv", m);
}

// ---------------------------------------------------------------------------
// Runner

struct StageError : std::runtime_error {
  StageError(Stage s, const std::string& what, bool validation)
      : std::runtime_error("stage '" + to_string(s) + "' failed: " + what), stage(s), validation(validation) {}
  Stage stage;
  bool validation;
};

struct PipelineResult {
  std::vector<std::string> ran;
  std::vector<std::string> skipped;
  std::optional<EvalReport> report;
};

class Pipeline {
 public:
  explicit Pipeline(PipelineConfig config, std::ostream* log = nullptr)
      : config_(std::move(config)), layout_{config_.out}, log_(log) {}

  const PipelineConfig& config() const { return config_; }
  const Layout& layout() const { return layout_; }

  /// Runs the given stages in pipeline order. Finished stages whose inputs
  /// are unchanged are skipped unless `force` is set.
  PipelineResult run(const std::vector<Stage>& stages, bool force = false) {
    config_.validate();
    std::filesystem::create_directories(layout_.root);
    write_config(layout_.config(), config_);
    Manifest manifest(layout_.manifest());
    PipelineResult result;
    // Once a stage has run, the stages after it read fresh inputs and run too.
    bool upstream_ran = false;
    for (Stage s : all_stages()) {
      if (std::find(stages.begin(), stages.end(), s) == stages.end()) continue;
      const std::string name = to_string(s), hash = stage_hash(config_, s);
      if (!force && !upstream_ran && manifest.done(name, hash, layout_.root)) {
        result.skipped.push_back(name);
        say("skip " + name + " (up to date)");
        if (s == Stage::evaluate && config_.effective_evaluate()) result.report = load_report();
        continue;
      }
      say("run " + name);
      manifest.forget(name);
      std::vector<std::string> artifacts;
      try {
        artifacts = run_stage(s, result);
      } catch (const ValidationError& e) {
        throw StageError(s, e.what(), true);
      } catch (const StageError&) {
        throw;
      } catch (const std::exception& e) {
        throw StageError(s, e.what(), false);
      }
      manifest.record({name, hash, config_.seed, artifacts});
      result.ran.push_back(name);
      upstream_ran = true;
    }
    return result;
  }

  PipelineResult run_all(bool force = false) { return run(all_stages(), force); }

  /// The matrices the segmentation is computed from.
  std::filesystem::path final_matrices() const {
    if (!config_.fuse_with.empty()) return layout_.fused_matrices();
    if (config_.smooth) return layout_.smoothed_matrices();
    return layout_.raw_matrices();
  }

 private:
  void say(const std::string& s) const {
    if (log_) *log_ << "[wdisc] " << s << std::endl;
  }

  std::string rel(const std::filesystem::path& p) const { return std::filesystem::relative(p, layout_.root).string(); }

  Corpus train_corpus() const {
    if (!std::filesystem::exists(layout_.train_corpus() / "pairs.tsv"))
      throw IoError("no prepared corpus in " + layout_.root.string() + " (run the prepare stage first)");
    return load_corpus(layout_.train_corpus());
  }

  std::vector<AlignmentMatrix> read_required(const std::filesystem::path& p, const char* producer) const {
    if (!std::filesystem::exists(p))
      throw IoError("missing " + p.string() + " (run the " + producer + " stage first)");
    return read_matrices(p);
  }

  std::vector<std::string> run_stage(Stage s, PipelineResult& result) {
    switch (s) {
      case Stage::prepare: return prepare();
      case Stage::train: return train_stage();
      case Stage::extract: return extract();
      case Stage::smooth: return smooth_stage();
      case Stage::fuse: return fuse_stage();
      case Stage::segment: return segment_stage();
      case Stage::evaluate: return evaluate_stage(result);
      case Stage::analyze: return analyze();
      case Stage::heatmap: return heatmap();
    }
    return {};
  }

  std::vector<std::string> prepare() {
    const auto opt = [](const std::filesystem::path& p) {
      return p.empty() ? std::nullopt : std::optional<std::filesystem::path>(p);
    };
    Corpus corpus = load_parallel(config_.source, config_.target, opt(config_.gold), opt(config_.inventory));
    say("loaded " + std::to_string(corpus.size()) + " pairs, " + std::to_string(corpus.source_vocab.num_regular()) +
        " source symbols, " + std::to_string(corpus.target_vocab.num_regular()) + " target words");
    if (config_.supervise_k > 0) corpus = inject_supervision(corpus, config_.supervise_k);
    Corpus train = corpus, dev;
    if (config_.dev_fraction > 0.0) std::tie(train, dev) = split_train_dev(corpus, config_.dev_fraction, config_.seed);
    std::filesystem::remove_all(layout_.root / "corpus");
    save_corpus(train, layout_.train_corpus());
    std::vector<std::string> arts{rel(layout_.train_corpus() / "pairs.tsv")};
    if (!dev.empty()) {
      save_corpus(dev, layout_.dev_corpus());
      arts.push_back(rel(layout_.dev_corpus() / "pairs.tsv"));
    }
    return arts;
  }

  std::vector<std::string> train_stage() {
    const Corpus train = train_corpus();
    TrainConfig tc = config_.train_config();
    tc.on_epoch = [&](const EpochStats& e) {
      say("epoch " + std::to_string(e.epoch) + " loss/token " + format_double(e.token_loss));
    };
    TrainResult r = [&] {
      try {
        return wdisc::train(train, tc, config_.model_config(train));
      } catch (const TrainingDiverged& d) {
        write_loss_trace(layout_.loss_trace(), d.trace());
        throw;
      }
    }();
    r.model.save(layout_.checkpoint());
    write_loss_trace(layout_.loss_trace(), r.trace);
    std::vector<std::string> arts{rel(layout_.checkpoint()), rel(layout_.loss_trace())};
    if (std::filesystem::exists(layout_.dev_corpus() / "pairs.tsv")) {
      // Dev pairs are scored for monitoring only.
      const Corpus dev = load_corpus(layout_.dev_corpus());
      std::ofstream out(layout_.dev_loss(), std::ios::binary);
      out << "dev_token_loss\t" << format_double(corpus_token_loss(r.model, dev)) << '\n';
      arts.push_back(rel(layout_.dev_loss()));
    }
    return arts;
  }

  static double corpus_token_loss(const Seq2SeqModel& model, const Corpus& corpus) {
    double loss = 0.0;
    std::size_t tokens = 0;
    for (const auto& p : corpus.pairs) {
      auto [in, out] = model_io(p, model.config().direction);
      loss += force_decode(model, in, out).loss;
      tokens += out.size() + 1;
    }
    return tokens ? loss / static_cast<double>(tokens) : 0.0;
  }

  std::vector<std::string> extract() {
    const Corpus train = train_corpus();
    if (!std::filesystem::exists(layout_.checkpoint()))
      throw IoError("missing " + layout_.checkpoint().string() + " (run the train stage first)");
    const Seq2SeqModel model = Seq2SeqModel::load(layout_.checkpoint());
    write_matrices(layout_.raw_matrices(), extract_alignments(model, train));
    return {rel(layout_.raw_matrices())};
  }

  std::vector<std::string> smooth_stage() {
    if (!config_.smooth) return {};
    const Corpus train = train_corpus();
    auto ms = read_required(layout_.raw_matrices(), "extract");
    for (auto& m : ms) m = smooth(without_eos(m), config_.smooth_axis, train.pairs.at(m.sentence).widths);
    write_matrices(layout_.smoothed_matrices(), ms);
    return {rel(layout_.smoothed_matrices())};
  }

  std::vector<std::string> fuse_stage() {
    if (config_.fuse_with.empty()) return {};
    const Corpus train = train_corpus();
    auto own = read_required(config_.smooth ? layout_.smoothed_matrices() : layout_.raw_matrices(),
                             config_.smooth ? "smooth" : "extract");
    const auto other = read_matrices(config_.fuse_with);
    if (other.size() != own.size())
      throw ValidationError("fusion inputs differ in sentence count: " + std::to_string(own.size()) + " vs " +
                            std::to_string(other.size()));
    std::vector<AlignmentMatrix> fused;
    fused.reserve(own.size());
    for (std::size_t i = 0; i < own.size(); ++i) {
      AlignmentMatrix f = fuse(own[i], other[i]);
      if (config_.smooth_after_fuse) f = smooth(f, config_.smooth_axis, train.pairs.at(f.sentence).widths);
      fused.push_back(std::move(f));
    }
    write_matrices(layout_.fused_matrices(), fused);
    return {rel(layout_.fused_matrices())};
  }

  std::vector<std::string> segment_stage() {
    const Corpus train = train_corpus();
    const auto ms = read_required(final_matrices(), "extract");
    const auto d = discover(train, ms);
    write_segmentation(layout_.segmentation(), d);
    write_token_alignments(layout_.token_alignments(), d);
    return {rel(layout_.segmentation()), rel(layout_.token_alignments())};
  }

  std::vector<SegmentedSentence> hypothesis(const Corpus& train) const {
    if (!std::filesystem::exists(layout_.segmentation()))
      throw IoError("missing " + layout_.segmentation().string() + " (run the segment stage first)");
    auto hyp = read_segmented(layout_.segmentation());
    // Re-split with the corpus symbols so multi-codepoint graphemes survive.
    if (hyp.size() != train.size()) throw ValidationError("segmentation and corpus differ in sentence count");
    for (std::size_t i = 0; i < hyp.size(); ++i) {
      auto symbols = train.symbols(train.pairs[i]);
      std::vector<Span> spans;
      std::size_t pos = 0;
      for (const auto& tok : hyp[i].tokens()) {
        std::string acc;
        const std::size_t b = pos;
        while (pos < symbols.size() && acc.size() < tok.size()) acc += symbols[pos++];
        if (acc != tok) throw ValidationError("segmentation line " + std::to_string(i + 1) + " does not match the corpus");
        spans.push_back({b, pos});
      }
      hyp[i].symbols = std::move(symbols);
      hyp[i].spans = std::move(spans);
    }
    return hyp;
  }

  std::vector<std::string> evaluate_stage(PipelineResult& result) {
    if (!config_.effective_evaluate()) return {};
    const Corpus train = train_corpus();
    const auto gold = gold_sentences(train);
    const auto hyp = hypothesis(train);
    EvalOptions opt;
    opt.token_scores = config_.effective_token_scores();
    if (config_.exclude_supervised) opt.excluded_types = train.supervised_types;
    EvalReport rep = wdisc::evaluate(hyp, gold, opt);
    if (config_.eval_portion == "all" && std::filesystem::exists(layout_.dev_corpus() / "pairs.tsv")) {
      auto g = vocabulary(gold);
      for (const auto& t : vocabulary(gold_sentences(load_corpus(layout_.dev_corpus())))) g.insert(t);
      auto h = vocabulary(hyp);
      for (const auto& t : opt.excluded_types) {
        g.erase(t);
        h.erase(t);
      }
      rep.types = type_metrics(h, g);
    }
    std::ofstream(layout_.report_text(), std::ios::binary) << rep.to_text();
    std::ofstream(layout_.report_kv(), std::ios::binary) << rep.to_key_values();
    say("report\n" + rep.to_text());
    result.report = rep;
    return {rel(layout_.report_text()), rel(layout_.report_kv())};
  }

  EvalReport load_report() const {
    EvalReport r;
    std::map<std::string, std::string> kv;
    for (const auto& l : detail::read_lines(layout_.report_kv())) {
      const auto eq = l.find('=');
      if (eq != std::string::npos) kv[l.substr(0, eq)] = l.substr(eq + 1);
    }
    auto num = [&](const char* k) { return kv.count(k) ? parse_double(kv[k]) : 0.0; };
    auto cnt = [&](const char* k) { return kv.count(k) ? static_cast<std::size_t>(std::stoull(kv[k])) : 0; };
    r.sentences = cnt("sentences");
    r.has_token_scores = kv.count("token_f") > 0;
    r.tokens.prf = {num("token_precision"), num("token_recall"), num("token_f")};
    r.tokens.correct = cnt("token_correct");
    r.tokens.hypothesis_tokens = cnt("token_hypothesis");
    r.tokens.gold_tokens = cnt("token_gold");
    r.types.prf = {num("type_precision"), num("type_recall"), num("type_f")};
    r.types.correct = cnt("type_correct");
    r.types.generated = cnt("type_generated");
    r.types.gold = cnt("type_gold");
    r.excluded_types = cnt("excluded_types");
    return r;
  }

  std::vector<std::string> analyze() {
    const Corpus train = train_corpus();
    const auto hyp = hypothesis(train);
    write_rank_frequency(layout_.rank_frequency(), rank_frequency(hyp));
    write_length_histogram(layout_.length_histogram(), length_histogram(hyp));
    std::vector<std::string> arts{rel(layout_.rank_frequency()), rel(layout_.length_histogram())};
    if (!train.empty() && train.pairs.front().gold) {
      const auto gold = gold_sentences(train);
      write_rank_frequency(layout_.gold_rank_frequency(), rank_frequency(gold));
      write_length_histogram(layout_.gold_length_histogram(), length_histogram(gold));
      arts.push_back(rel(layout_.gold_rank_frequency()));
      arts.push_back(rel(layout_.gold_length_histogram()));
    }
    return arts;
  }

  std::vector<std::string> heatmap() {
    if (config_.heatmaps == 0) return {};
    const auto ms = read_required(final_matrices(), "extract");
    std::filesystem::remove_all(layout_.heatmap_dir());
    std::vector<std::string> arts;
    for (std::size_t i = 0; i < std::min(config_.heatmaps, ms.size()); ++i) {
      const auto stem = layout_.heatmap_dir() / ("sentence_" + std::to_string(ms[i].sentence + 1));
      export_heatmap(ms[i], stem, config_.heatmap_scale);
      arts.push_back(rel(stem.string() + ".pgm"));
      arts.push_back(rel(stem.string() + ".tsv"));
    }
    return arts;
  }

  PipelineConfig config_;
  Layout layout_;
  std::ostream* log_;
};

}  // namespace wdisc
