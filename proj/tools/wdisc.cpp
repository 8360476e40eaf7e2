// Command-line driver for the word discovery pipeline.
//
//   wdisc run-all --config run.cfg
//   wdisc train --source src.txt --target tgt.txt --preset reverse --out runs/a
//   wdisc synth --out data/synth --seed 7
//
// Exit status: 0 on success, 1 for invalid input or configuration, 2 when a
// stage fails at run time.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wdisc/pipeline.hpp"
#include "wdisc/synthcorpus.hpp"

namespace {

constexpr int kValidationFailure = 1;
constexpr int kRuntimeFailure = 2;

/// Flag values collected before the configuration file is read; any flag
/// given on the command line overrides the file.
struct Overrides {
  std::string config;
  std::optional<std::string> source, target, gold, inventory, out, preset, smooth_axis, fuse_with;
  std::optional<std::uint64_t> seed;
  std::optional<double> temperature, clip_norm;
  std::optional<std::size_t> supervise_k, max_epochs, heatmaps;
  bool smooth = false;
  bool no_smooth = false;
  bool force = false;
  bool quiet = false;

  void attach(CLI::App& app) {
    app.add_option("--config", config, "key = value configuration file");
    app.add_option("--source", source, "unsegmented source text, one sentence per line");
    app.add_option("--target", target, "word-segmented translations, line-aligned with the source");
    app.add_option("--gold", gold, "reference segmentation of the source");
    app.add_option("--inventory", inventory, "multi-codepoint symbol inventory, one per line");
    app.add_option("--out", out, "output directory (default: $WDISC_OUT or ./wdisc-out)");
    app.add_option("--preset", preset, "model preset: base or reverse");
    app.add_option("--seed", seed, "run seed");
    app.add_option("--temperature", temperature, "attention softmax temperature");
    app.add_flag("--smooth", smooth, "enable alignment smoothing");
    app.add_flag("--no-smooth", no_smooth, "disable alignment smoothing");
    app.add_option("--smooth-axis", smooth_axis, "smoothing neighbours: encoder or symbol");
    app.add_option("--fuse-with", fuse_with, "matrices of the opposite direction to fuse with");
    app.add_option("--supervise-k", supervise_k, "inject the k most frequent gold words");
    app.add_option("--max-epochs", max_epochs, "upper bound on training epochs");
    app.add_option("--clip-norm", clip_norm, "gradient norm clipping threshold (0 disables)");
    app.add_option("--heatmaps", heatmaps, "number of sentences to export as heatmaps");
    app.add_flag("--force", force, "re-run stages even when up to date");
    app.add_flag("-q,--quiet", quiet, "suppress progress messages");
  }

  wdisc::PipelineConfig resolve() const {
    wdisc::PipelineConfig c;
    if (const char* env = std::getenv("WDISC_OUT"); env && *env) c.out = env;
    if (!config.empty()) {
      if (!std::filesystem::is_regular_file(config)) throw wdisc::ValidationError("config file not found: " + config);
      const auto from_file = wdisc::read_config(config);
      const bool file_sets_out = from_file.out != wdisc::PipelineConfig().out;
      const auto out_before = c.out;
      c = from_file;
      if (!file_sets_out) c.out = out_before;
    }
    auto set = [&](const char* key, const std::optional<std::string>& v) {
      if (v) c.set(key, *v);
    };
    set("source", source);
    set("target", target);
    set("gold", gold);
    set("inventory", inventory);
    set("out", out);
    set("preset", preset);
    set("smooth_axis", smooth_axis);
    set("fuse_with", fuse_with);
    if (seed) c.seed = *seed;
    if (temperature) c.temperature = *temperature;
    if (supervise_k) c.supervise_k = *supervise_k;
    if (max_epochs) c.max_epochs = *max_epochs;
    if (heatmaps) c.heatmaps = *heatmaps;
    if (clip_norm) c.clip_norm = *clip_norm;
    if (smooth && no_smooth) throw wdisc::ValidationError("--smooth and --no-smooth are mutually exclusive");
    if (smooth) c.smooth = true;
    if (no_smooth) c.smooth = false;
    return c;
  }
};

int run_stages(const Overrides& o, const std::vector<wdisc::Stage>& stages) {
  wdisc::Pipeline p(o.resolve(), o.quiet ? nullptr : &std::cerr);
  auto r = p.run(stages, o.force);
  if (r.report && std::find(stages.begin(), stages.end(), wdisc::Stage::evaluate) != stages.end())
    std::cout << r.report->to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Word discovery from attention alignments"};
  app.require_subcommand(1);
  Overrides o;

  struct Sub {
    const char* name;
    const char* help;
    std::vector<wdisc::Stage> stages;
  };
  using wdisc::Stage;
  const std::vector<Sub> subs{
      {"prepare", "load, validate and split the corpus", {Stage::prepare}},
      {"train", "train the encoder-decoder", {Stage::train}},
      {"extract", "force-decode the training set into alignment matrices", {Stage::extract}},
      {"smooth", "smooth the extracted matrices", {Stage::smooth}},
      {"fuse", "average with matrices of the opposite direction", {Stage::fuse}},
      {"segment", "segment the source side from the matrices", {Stage::segment}},
      {"evaluate", "score the segmentation against the gold standard", {Stage::evaluate}},
      {"analyze", "rank-frequency and type-length tables", {Stage::analyze}},
      {"heatmap", "export alignment heatmaps", {Stage::heatmap}},
      {"run-all", "run every stage in order, skipping finished ones", wdisc::all_stages()},
  };
  std::vector<CLI::App*> commands;
  for (const auto& s : subs) {
    CLI::App* sc = app.add_subcommand(s.name, s.help);
    o.attach(*sc);
    commands.push_back(sc);
  }

  wdisc::SynthSpec spec;
  std::string synth_out = "synth";
  CLI::App* synth = app.add_subcommand("synth", "write a synthetic parallel corpus with gold segmentation");
  synth->add_option("--out", synth_out, "output directory");
  synth->add_option("--seed", spec.seed, "generator seed");
  synth->add_option("--lexicon", spec.lexicon_size, "number of source words");
  synth->add_option("--alphabet", spec.alphabet_size, "number of symbols");
  synth->add_option("--min-word", spec.min_word_length, "shortest word in symbols");
  synth->add_option("--max-word", spec.max_word_length, "longest word in symbols");
  synth->add_option("--min-sentence", spec.min_sentence_length, "shortest sentence in words");
  synth->add_option("--max-sentence", spec.max_sentence_length, "longest sentence in words");
  synth->add_option("--sentences", spec.sentences, "number of sentences");
  synth->add_option("--zipf", spec.zipf_exponent, "Zipf exponent of word frequencies");
  synth->add_option("--swap-rate", spec.swap_rate, "probability of swapping adjacent target words");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kValidationFailure;
  }

  try {
    if (synth->parsed()) {
      const auto f = wdisc::generate_files(spec, synth_out);
      std::cout << f.source.string() << '\n' << f.target.string() << '\n' << f.gold.string() << '\n';
      return 0;
    }
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (commands[i]->parsed()) return run_stages(o, subs[i].stages);
  } catch (const wdisc::StageError& e) {
    std::cerr << "wdisc: " << e.what() << '\n';
    return e.validation ? kValidationFailure : kRuntimeFailure;
  } catch (const wdisc::ValidationError& e) {
    std::cerr << "wdisc: " << e.what() << '\n';
    return kValidationFailure;
  } catch (const std::exception& e) {
    std::cerr << "wdisc: " << e.what() << '\n';
    return kRuntimeFailure;
  }
  return 0;
}
