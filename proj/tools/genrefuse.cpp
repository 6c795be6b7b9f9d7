// genrefuse command-line front end.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "genrefuse/checkpoint.hpp"
#include "genrefuse/config.hpp"
#include "genrefuse/data.hpp"
#include "genrefuse/trainer.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace genrefuse;
using nlohmann::ordered_json;

namespace {

struct CommonFlags {
  std::string config_path;
  std::string ablate;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
  std::string data;
  std::size_t epochs = 0;
  double lambda = -1;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "JSON run configuration");
  cmd->add_option("--ablate", f.ablate, "Comma list of components to disable: al-loss,scma,gcem");
  cmd->add_option_function<std::uint64_t>(
      "--seed", [&f](std::uint64_t s) { f.seed = s, f.seed_set = true; }, "Random seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--data", f.data, "Dataset directory (manifest.jsonl, genres.json, vocab.json)");
  cmd->add_option("--epochs", f.epochs, "Override the number of epochs");
  cmd->add_option("--lambda", f.lambda, "Override the loss weight lambda");
}

RunConfig resolve_config(const CommonFlags& f) {
  RunConfig c = f.config_path.empty() ? RunConfig{} : RunConfig::load(f.config_path);
  c.apply_ablation(f.ablate);
  if (f.seed_set) c.seed = f.seed;
  if (!f.out.empty()) c.out_dir = f.out;
  if (!f.data.empty()) c.data_dir = f.data;
  if (f.epochs > 0) c.train.epochs = f.epochs;
  if (f.lambda >= 0) c.loss.lambda = f.lambda;
  c.validate();
  return c;
}

std::vector<double> parse_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + item + "'");
    }
  }
  return out;
}

void emit(const std::string& out_path, const std::string& text) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path);
  if (!out) throw ConfigError("cannot write " + out_path);
  out << text;
}

ordered_json matrix_json(const Tensor<double>& m) {
  auto rows = ordered_json::array();
  for (std::size_t i = 0; i < m.dim(0); ++i) {
    auto row = ordered_json::array();
    for (std::size_t j = 0; j < m.dim(1); ++j) row.push_back(m.at(i, j));
    rows.push_back(row);
  }
  return rows;
}

// Reads {id, audio, lyrics | lyric_ids, genres} records, writes mel caches and
// a training manifest next to them.
void preprocess(const fs::path& input, const fs::path& out_dir, const std::string& genres_path,
                const dsp::MelConfig& mc) {
  std::ifstream in(input);
  if (!in) throw InputError("cannot open " + input.string());
  std::vector<ordered_json> records;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      auto rec = ordered_json::parse(line);
      for (const char* key : {"id", "audio", "genres"}) {
        if (!rec.contains(key)) throw InputError(std::string("missing field \"") + key + "\"");
      }
      records.push_back(std::move(rec));
    } catch (const std::exception& e) {
      throw InputError("input line " + std::to_string(line_no) + ": " + e.what());
    }
  }

  std::vector<std::string> genre_names;
  if (!genres_path.empty()) {
    genre_names = load_genre_names(genres_path);
  } else {
    std::set<std::string> all;
    for (const auto& r : records)
      for (const auto& g : r.at("genres")) all.insert(g.get<std::string>());
    genre_names.assign(all.begin(), all.end());
  }
  std::vector<std::string> texts;
  for (const auto& r : records) {
    if (r.contains("lyrics")) texts.push_back(r.at("lyrics").get<std::string>());
  }

  fs::create_directories(out_dir / "mels");
  std::ofstream manifest(out_dir / "manifest.jsonl");
  for (const auto& r : records) {
    const auto id = r.at("id").get<std::string>();
    fs::path audio = r.at("audio").get<std::string>();
    if (audio.is_relative()) audio = input.parent_path() / audio;
    const auto clip = dsp::read_wav(audio);
    if (clip.sample_rate != mc.sample_rate) {
      throw InputError(audio.string() + ": sample rate " + std::to_string(clip.sample_rate) + " Hz, expected " +
                       std::to_string(mc.sample_rate) + " Hz (resample before preprocessing)");
    }
    dsp::write_mel(out_dir / "mels" / (id + ".mel"), dsp::mel_spectrogram(clip, mc));
    ordered_json rec{{"id", id}, {"mel", "mels/" + id + ".mel"}};
    if (r.contains("lyric_ids")) rec["lyric_ids"] = r.at("lyric_ids");
    if (r.contains("lyrics")) rec["lyrics"] = r.at("lyrics");
    rec["genres"] = r.at("genres");
    manifest << rec.dump() << "\n";
  }
  save_genre_names(out_dir / "genres.json", genre_names);
  if (!texts.empty()) Vocabulary::build(texts).save(out_dir / "vocab.json");
  std::cout << "preprocessed " << records.size() << " tracks into " << out_dir << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multimodal music genre classification: audio + lyrics fusion with a genre graph head"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with planted genre structure");
  std::size_t tracks = 2000, genres = 12;
  std::uint64_t synth_seed = 0;
  std::string synth_out;
  double synth_seconds = 30.0;
  bool write_audio = false;
  synth->add_option("--tracks", tracks, "Number of tracks")->capture_default_str();
  synth->add_option("--genres", genres, "Number of genres")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Random seed")->capture_default_str();
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seconds", synth_seconds, "Clip length in seconds")->capture_default_str();
  synth->add_flag("--write-audio", write_audio, "Also write WAV files");

  // preprocess
  auto* prep = app.add_subcommand("preprocess", "Compute mel caches for a manifest of WAV files");
  std::string prep_input, prep_out, prep_genres;
  dsp::MelConfig prep_mel;
  prep->add_option("--manifest,--input", prep_input, "JSONL with id, audio, lyrics|lyric_ids, genres")->required();
  prep->add_option("--out", prep_out, "Output dataset directory")->required();
  prep->add_option("--genres", prep_genres, "JSON array of genre names (default: sorted union)");
  prep->add_option("--sample-rate", prep_mel.sample_rate, "Expected WAV sample rate")->capture_default_str();
  prep->add_option("--n-fft", prep_mel.n_fft, "FFT size (power of two)")->capture_default_str();
  prep->add_option("--hop", prep_mel.hop, "Hop length in samples")->capture_default_str();
  prep->add_option("--mels", prep_mel.n_mels, "Number of mel bands")->capture_default_str();
  prep->add_option("--seconds", prep_mel.seconds, "Clip length in seconds")->capture_default_str();

  CommonFlags train_flags, sweep_flags, graph_flags;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  add_common(train_cmd, train_flags);

  auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint");
  std::string ckpt_path, eval_data, eval_split = "test", eval_out;
  eval_cmd->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
  eval_cmd->add_option("--data", eval_data, "Dataset directory (default: the one in the checkpoint config)");
  eval_cmd->add_option("--split", eval_split, "train, val, test or all")->capture_default_str();
  eval_cmd->add_option("--out", eval_out, "Write the JSON report here instead of stdout");

  auto* sweep_cmd = app.add_subcommand("sweep", "Train once per lambda value and tabulate test metrics");
  add_common(sweep_cmd, sweep_flags);
  std::string lambdas = "0,0.1,0.3,0.5,0.7,1";
  sweep_cmd->add_option("--lambdas", lambdas, "Comma-separated lambda values")->capture_default_str();

  auto* graph_cmd = app.add_subcommand("graph", "Dump the genre correlation matrices as JSON");
  add_common(graph_cmd, graph_flags);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (synth->parsed()) {
      auto spec = SyntheticSpec::standard(tracks, genres, synth_seed);
      spec.seconds = synth_seconds;
      spec.write_audio = write_audio;
      const auto summary = synth_dataset(spec, synth_out, {});
      std::cout << "wrote " << summary.tracks << " tracks to " << summary.manifest << "\nmarginals:";
      for (const double m : summary.marginals) std::cout << ' ' << m;
      std::cout << "\n";
    } else if (prep->parsed()) {
      preprocess(prep_input, prep_out, prep_genres, prep_mel);
    } else if (train_cmd->parsed()) {
      const auto config = resolve_config(train_flags);
      const auto data = Dataset::load(config.data_dir);
      const auto r = train(config, data, {&std::cerr});
      std::cout << r.test.report.to_json(data.genre_names) << "\n";
      if (!r.checkpoint.empty()) std::cerr << "checkpoint: " << r.checkpoint << "\n";
    } else if (eval_cmd->parsed()) {
      const auto ckpt = load_checkpoint(ckpt_path);
      const auto data = Dataset::load(eval_data.empty() ? ckpt.meta.config.data_dir : eval_data);
      const auto out = evaluate_checkpoint(ckpt, data, eval_split);
      emit(eval_out, out.report.to_json(data.genre_names) + "\n");
    } else if (sweep_cmd->parsed()) {
      const auto config = resolve_config(sweep_flags);
      const auto data = Dataset::load(config.data_dir);
      const auto rows = lambda_sweep(config, data, parse_list(lambdas), {&std::cerr});
      std::cout << sweep_csv(rows);
    } else if (graph_cmd->parsed()) {
      const auto config = resolve_config(graph_flags);
      const auto data = Dataset::load(config.data_dir);
      const auto sp = resolve_split(config, data);
      const auto m = genre_correlation(config.model, data.genre_names, training_counts(data, sp.train));
      ordered_json j;
      j["genres"] = data.genre_names;
      j["denominator"] = config.model.denominator;
      j["A1"] = matrix_json(m.a1);
      j["A2"] = matrix_json(m.a2);
      j["A"] = matrix_json(m.a);
      j["A_hat"] = matrix_json(m.adjacency);
      const std::string target = config.out_dir.empty() ? "" : (fs::path(config.out_dir) / "graph.json").string();
      if (!target.empty()) fs::create_directories(config.out_dir);
      emit(target, j.dump(2) + "\n");
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
