#include "genrefuse/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

namespace genrefuse {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json_file(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw ConfigError(std::string("cannot open ") + what + " " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + " " + path.string() + ": invalid JSON: " + e.what());
  }
}

std::string manifest_error(std::size_t line, const std::string& msg) {
  return "manifest line " + std::to_string(line) + ": " + msg;
}

}  // namespace

std::vector<std::string> load_genre_names(const fs::path& path) {
  const auto j = read_json_file(path, "genre list");
  if (!j.is_array()) throw ConfigError("genre list " + path.string() + " must be a JSON array of names");
  std::vector<std::string> names;
  std::set<std::string> seen;
  for (const auto& v : j) {
    if (!v.is_string()) throw ConfigError("genre list " + path.string() + " contains a non-string entry");
    if (!seen.insert(v.get<std::string>()).second) {
      throw ConfigError("genre list " + path.string() + " repeats '" + v.get<std::string>() + "'");
    }
    names.push_back(v.get<std::string>());
  }
  return names;
}

void save_genre_names(const fs::path& path, const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write genre list " + path.string());
  out << json(names).dump() << "\n";
}

std::vector<TrackSample> load_manifest(const fs::path& path, const std::vector<std::string>& genre_names,
                                       const Vocabulary* vocab) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open manifest " + path.string());
  std::map<std::string, std::size_t> genre_ids;
  for (std::size_t g = 0; g < genre_names.size(); ++g) genre_ids[genre_names[g]] = g;
  const fs::path base = path.parent_path();

  std::vector<TrackSample> samples;
  std::set<std::string> ids;
  std::vector<std::string> unknown;
  std::string line;
  for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError(manifest_error(line_no, std::string("malformed JSON: ") + e.what()));
    }
    if (!rec.is_object()) throw InputError(manifest_error(line_no, "record is not a JSON object"));
    for (const char* key : {"id", "mel", "genres"}) {
      if (!rec.contains(key)) throw InputError(manifest_error(line_no, std::string("missing field \"") + key + "\""));
    }
    TrackSample s;
    try {
      s.id = rec.at("id").get<std::string>();
      s.mel_path = rec.at("mel").get<std::string>();
      if (rec.contains("lyric_ids")) {
        s.lyric_tokens = rec.at("lyric_ids").get<std::vector<std::int64_t>>();
      } else if (rec.contains("lyrics")) {
        if (vocab == nullptr) throw InputError(manifest_error(line_no, "text lyrics need a token vocabulary"));
        s.lyric_tokens = vocab->encode(rec.at("lyrics").get<std::string>());
      } else {
        throw InputError(manifest_error(line_no, "missing field \"lyrics\" or \"lyric_ids\""));
      }
      for (const auto& name : rec.at("genres").get<std::vector<std::string>>()) {
        const auto it = genre_ids.find(name);
        if (it == genre_ids.end()) {
          unknown.push_back("'" + name + "' (line " + std::to_string(line_no) + ")");
        } else {
          s.genres.push_back(it->second);
        }
      }
    } catch (const json::exception& e) {
      throw InputError(manifest_error(line_no, std::string("bad field type: ") + e.what()));
    }
    if (s.mel_path.is_relative()) s.mel_path = base / s.mel_path;
    std::sort(s.genres.begin(), s.genres.end());
    s.genres.erase(std::unique(s.genres.begin(), s.genres.end()), s.genres.end());
    if (s.genres.empty() && unknown.empty()) throw InputError(manifest_error(line_no, "empty genre list"));
    if (s.lyric_tokens.empty()) throw InputError(manifest_error(line_no, "no lyric tokens"));
    if (vocab != nullptr) {
      for (const auto t : s.lyric_tokens) {
        if (t < 0 || static_cast<std::size_t>(t) >= vocab->size()) {
          throw InputError(manifest_error(line_no, "lyric id " + std::to_string(t) + " outside vocabulary"));
        }
      }
    }
    if (!ids.insert(s.id).second) throw InputError(manifest_error(line_no, "duplicate id '" + s.id + "'"));
    if (!fs::exists(s.mel_path)) throw InputError(manifest_error(line_no, "mel file " + s.mel_path.string() + " not found"));
    samples.push_back(std::move(s));
  }
  if (!unknown.empty()) {
    std::string msg = "manifest " + path.string() + ": unknown genres:";
    for (const auto& u : unknown) msg += " " + u;
    throw InputError(msg);
  }
  return samples;
}

void write_manifest(const fs::path& path, const std::vector<TrackSample>& samples,
                    const std::vector<std::string>& genre_names) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write manifest " + path.string());
  const fs::path base = path.parent_path();
  for (const auto& s : samples) {
    std::vector<std::string> names;
    for (const auto g : s.genres) names.push_back(genre_names.at(g));
    const auto mel = s.mel_path.is_absolute() ? s.mel_path.lexically_relative(fs::absolute(base)) : s.mel_path;
    json rec{{"id", s.id}, {"mel", mel.generic_string()}, {"lyric_ids", s.lyric_tokens}, {"genres", names}};
    out << rec.dump() << "\n";
  }
}

DatasetSplit split(const std::vector<std::string>& ids, const SplitRatios& ratios, std::uint64_t seed) {
  if (ratios.train < 0 || ratios.val < 0 || ratios.test < 0 ||
      std::abs(ratios.train + ratios.val + ratios.test - 1.0) > 1e-9) {
    throw ConfigError("split ratios must be non-negative and sum to 1");
  }
  std::vector<std::string> order = ids;
  Rng rng(seed);
  rng.shuffle(order.begin(), order.end());
  const auto n = static_cast<double>(order.size());
  const auto n_train = static_cast<std::size_t>(std::floor(n * ratios.train + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(n * ratios.val + 1e-9));
  DatasetSplit s;
  s.seed = seed;
  s.ratios = ratios;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  return s;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch) {
  if (batch_size == 0) throw ConfigError("batch size must be at least 1");
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(mix64(seed) ^ mix64(0x9e3779b97f4a7c15ULL + epoch));
  rng.shuffle(order.begin(), order.end());
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < count; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(count, i + batch_size)));
  }
  return out;
}

std::vector<std::int64_t> fit_length(const std::vector<std::int64_t>& ids, std::size_t length) {
  std::vector<std::int64_t> out(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(std::min(length, ids.size())));
  out.resize(length, Vocabulary::kPad);
  return out;
}

template <typename T>
Tensor<T> label_matrix(const std::vector<LabelSet>& sets, std::size_t num_genres) {
  std::vector<T> y(sets.size() * num_genres, T(0));
  for (std::size_t b = 0; b < sets.size(); ++b) {
    for (const auto g : sets[b]) {
      if (g >= num_genres) throw InputError("label " + std::to_string(g) + " out of range");
      y[b * num_genres + g] = T(1);
    }
  }
  return Tensor<T>::from({sets.size(), num_genres}, std::move(y));
}

Dataset Dataset::load(const fs::path& dir) {
  Dataset d;
  d.genre_names = load_genre_names(dir / "genres.json");
  const bool has_vocab = fs::exists(dir / "vocab.json");
  if (has_vocab) d.vocab = Vocabulary::load(dir / "vocab.json");
  d.samples = load_manifest(dir / "manifest.jsonl", d.genre_names, has_vocab ? &d.vocab : nullptr);
  d.mels.reserve(d.samples.size());
  for (const auto& s : d.samples) d.mels.push_back(dsp::read_mel(s.mel_path));
  return d;
}

std::vector<std::size_t> Dataset::indices_of(const std::vector<std::string>& ids) const {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < samples.size(); ++i) index[samples[i].id] = i;
  std::vector<std::size_t> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto it = index.find(id);
    if (it == index.end()) throw InputError("unknown sample id '" + id + "'");
    out.push_back(it->second);
  }
  return out;
}

template <typename T>
Batch<T> make_batch(const Dataset& data, const std::vector<std::size_t>& indices, std::size_t lyric_length) {
  Batch<T> b;
  b.indices = indices;
  std::vector<LabelSet> sets;
  for (const auto i : indices) {
    const auto& mel = data.mels.at(i);
    b.mels.push_back(Tensor<T>::from({mel.mels, mel.frames}, std::vector<T>(mel.values.begin(), mel.values.end())));
    b.tokens.push_back(fit_length(data.samples[i].lyric_tokens, lyric_length));
    sets.push_back(data.samples[i].genres);
  }
  b.labels = label_matrix<T>(sets, data.genre_names.size());
  return b;
}

template <typename T>
std::vector<Batch<T>> batches(const Dataset& data, const std::vector<std::size_t>& split_indices,
                              std::size_t batch_size, std::uint64_t seed, std::size_t epoch, std::size_t lyric_length) {
  if (split_indices.empty()) throw InputError("cannot batch an empty split");
  std::vector<Batch<T>> out;
  for (const auto& group : batch_indices(split_indices.size(), batch_size, seed, epoch)) {
    std::vector<std::size_t> idx;
    for (const auto g : group) idx.push_back(split_indices[g]);
    out.push_back(make_batch<T>(data, idx, lyric_length));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic data

SyntheticSpec SyntheticSpec::standard(std::size_t num_tracks, std::size_t num_genres, std::uint64_t seed) {
  SyntheticSpec s;
  s.num_tracks = num_tracks;
  s.num_genres = num_genres;
  s.seed = seed;
  s.marginals.assign(num_genres, 0.4);
  if (num_genres >= 2) {
    s.marginals[0] = s.marginals[1] = 0.5;
    s.pairs.push_back({0, 1, 0.4});
  }
  if (num_genres >= 4) s.pairs.push_back({2, 3, 0.3});
  if (num_genres >= 6) s.pairs.push_back({4, 5, 0.3});
  return s;
}

std::vector<std::string> synthetic_genre_names(std::size_t num_genres) {
  static const std::vector<std::string> known{"rock",   "pop",     "jazz",    "blues", "metal",  "folk",
                                              "soul",   "punk",    "funk",    "disco", "reggae", "techno",
                                              "country", "ambient", "gospel", "house", "grunge", "swing"};
  std::vector<std::string> names;
  for (std::size_t g = 0; g < num_genres; ++g) names.push_back(g < known.size() ? known[g] : "genre" + std::to_string(g));
  return names;
}

std::vector<std::vector<double>> synthetic_tones(const SyntheticSpec& spec) {
  const std::size_t total = spec.num_genres * spec.tones_per_genre;
  const double lo = dsp::hz_to_mel(spec.f_low, dsp::MelScale::kSlaney);
  const double hi = dsp::hz_to_mel(spec.f_high, dsp::MelScale::kSlaney);
  std::vector<std::vector<double>> tones(spec.num_genres);
  for (std::size_t k = 0; k < total; ++k) {
    const double mel = total == 1 ? lo : lo + (hi - lo) * static_cast<double>(k) / static_cast<double>(total - 1);
    // Interleave so each genre gets tones across the whole band.
    tones[k % spec.num_genres].push_back(dsp::mel_to_hz(mel, dsp::MelScale::kSlaney));
  }
  return tones;
}

std::vector<std::string> synthetic_genre_words(const std::string& genre_name, std::size_t count) {
  std::string stem;
  for (const char c : genre_name) {
    if (std::isalnum(static_cast<unsigned char>(c))) stem.push_back(static_cast<char>(std::tolower(c)));
  }
  std::vector<std::string> words;
  for (std::size_t k = 0; k < count; ++k) words.push_back(stem + "w" + std::to_string(k));
  return words;
}

const std::vector<std::string>& shared_word_pool() {
  static const std::vector<std::string> pool{
      "the",  "and",  "you",  "love", "night", "baby", "heart", "time",  "know", "never", "feel", "away",
      "down", "come", "home", "light", "day",  "go",   "want",  "dream", "say",  "still", "back", "all",
      "my",   "your", "we",   "in",   "on",    "to",   "of",    "me",    "a",    "is",    "so",   "oh"};
  return pool;
}

namespace {

std::vector<double> effective_marginals(const SyntheticSpec& spec) {
  if (spec.marginals.empty()) return std::vector<double>(spec.num_genres, spec.marginal);
  if (spec.marginals.size() != spec.num_genres) {
    throw ConfigError("synthetic spec: " + std::to_string(spec.marginals.size()) + " marginals for " +
                      std::to_string(spec.num_genres) + " genres");
  }
  return spec.marginals;
}

void validate_spec(const SyntheticSpec& spec) {
  if (spec.num_genres == 0) throw ConfigError("synthetic spec: need at least one genre");
  if (spec.num_tracks == 0) throw ConfigError("synthetic spec: need at least one track");
  if (spec.tones_per_genre == 0 || spec.f_high >= spec.sample_rate / 2.0 || spec.f_low <= 0 ||
      spec.f_low >= spec.f_high) {
    throw ConfigError("synthetic spec: tone band must satisfy 0 < f_low < f_high < Nyquist");
  }
  if (spec.min_lyric_tokens == 0 || spec.min_lyric_tokens > spec.max_lyric_tokens) {
    throw ConfigError("synthetic spec: invalid lyric length range");
  }
  if (spec.genre_word_fraction < 0 || spec.genre_word_fraction > 1) {
    throw ConfigError("synthetic spec: genre word fraction must lie in [0, 1]");
  }
  for (const double p : effective_marginals(spec)) {
    if (!(p >= 0 && p <= 1)) throw ConfigError("synthetic spec: marginals must lie in [0, 1]");
  }
  std::set<std::size_t> used;
  for (const auto& pr : spec.pairs) {
    if (pr.first >= spec.num_genres || pr.second >= spec.num_genres || pr.first == pr.second) {
      throw ConfigError("synthetic spec: pair (" + std::to_string(pr.first) + ", " + std::to_string(pr.second) +
                        ") is invalid");
    }
    if (!used.insert(pr.first).second || !used.insert(pr.second).second) {
      throw ConfigError("synthetic spec: correlated pairs must be disjoint");
    }
  }
}

}  // namespace

LabelSet sample_genre_set(const SyntheticSpec& spec, Rng& rng) {
  const auto p = effective_marginals(spec);
  std::vector<int> paired(spec.num_genres, -1);
  for (std::size_t k = 0; k < spec.pairs.size(); ++k) {
    const auto& pr = spec.pairs[k];
    const double pi = p[pr.first], pj = p[pr.second];
    // Any valid 2x2 joint table has max(0, pi + pj - 1) <= joint <= min(pi, pj).
    if (pr.joint > std::min(pi, pj) + 1e-12 || pr.joint < std::max(0.0, pi + pj - 1.0) - 1e-12) {
      throw ConfigError("synthetic spec: co-occurrence target " + std::to_string(pr.joint) + " for pair (" +
                        std::to_string(pr.first) + ", " + std::to_string(pr.second) +
                        ") is unreachable with marginals " + std::to_string(pi) + " and " + std::to_string(pj));
    }
    paired[pr.first] = paired[pr.second] = static_cast<int>(k);
  }
  for (std::size_t attempt = 0; attempt < spec.max_rejections; ++attempt) {
    LabelSet set;
    std::vector<bool> on(spec.num_genres, false);
    for (const auto& pr : spec.pairs) {
      const double both = pr.joint;
      const double only_i = p[pr.first] - both;
      const double only_j = p[pr.second] - both;
      const double u = rng.uniform();
      if (u < both) {
        on[pr.first] = on[pr.second] = true;
      } else if (u < both + only_i) {
        on[pr.first] = true;
      } else if (u < both + only_i + only_j) {
        on[pr.second] = true;
      }
    }
    for (std::size_t g = 0; g < spec.num_genres; ++g) {
      if (paired[g] < 0) on[g] = rng.bernoulli(p[g]);
    }
    for (std::size_t g = 0; g < spec.num_genres; ++g) {
      if (on[g]) set.push_back(g);
    }
    if (!set.empty()) return set;
  }
  throw ConfigError("synthetic spec: could not draw a non-empty genre set in " + std::to_string(spec.max_rejections) +
                    " attempts; the targets are unreachable");
}

dsp::AudioClip synthesize_audio(const SyntheticSpec& spec, const LabelSet& genres, Rng& rng) {
  const auto tones = synthetic_tones(spec);
  const auto n = static_cast<std::size_t>(std::llround(spec.seconds * spec.sample_rate));
  std::vector<double> x(n, 0.0);
  for (const auto g : genres) {
    for (const double f : tones.at(g)) {
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double w = 2.0 * std::numbers::pi * f / spec.sample_rate;
      for (std::size_t t = 0; t < n; ++t) x[t] += std::sin(w * static_cast<double>(t) + phase);
    }
  }
  double power = 0;
  for (const double v : x) power += v * v;
  power /= static_cast<double>(std::max<std::size_t>(n, 1));
  const double sigma = std::sqrt(power / std::pow(10.0, spec.snr_db / 10.0));
  double peak = 0;
  for (auto& v : x) {
    v += sigma * rng.normal();
    peak = std::max(peak, std::abs(v));
  }
  dsp::AudioClip clip;
  clip.sample_rate = spec.sample_rate;
  clip.samples.resize(n);
  const double gain = peak > 0 ? 0.9 / peak : 1.0;
  for (std::size_t t = 0; t < n; ++t) clip.samples[t] = static_cast<float>(x[t] * gain);
  return clip;
}

std::string synthesize_lyrics(const SyntheticSpec& spec, const LabelSet& genres, Rng& rng) {
  const auto names = synthetic_genre_names(spec.num_genres);
  std::vector<std::string> genre_words;
  for (const auto g : genres) {
    const auto w = synthetic_genre_words(names.at(g), spec.words_per_genre);
    genre_words.insert(genre_words.end(), w.begin(), w.end());
  }
  const auto& pool = shared_word_pool();
  const std::size_t len = spec.min_lyric_tokens + rng.below(spec.max_lyric_tokens - spec.min_lyric_tokens + 1);
  std::string text;
  for (std::size_t i = 0; i < len; ++i) {
    if (i > 0) text += (i % 8 == 0) ? "\n" : " ";
    if (!genre_words.empty() && rng.bernoulli(spec.genre_word_fraction)) {
      text += genre_words[rng.below(genre_words.size())];
    } else {
      text += pool[rng.below(pool.size())];
    }
  }
  return text;
}

SynthSummary synth_dataset(const SyntheticSpec& spec, const fs::path& out_dir, const dsp::MelConfig& mel_config) {
  validate_spec(spec);
  dsp::MelConfig mc = mel_config;
  mc.sample_rate = spec.sample_rate;
  mc.seconds = spec.seconds;
  fs::create_directories(out_dir / "mels");
  if (spec.write_audio) fs::create_directories(out_dir / "wav");
  const auto names = synthetic_genre_names(spec.num_genres);

  struct Record {
    std::string id;
    std::string lyrics;
    LabelSet genres;
  };
  std::vector<Record> records;
  std::vector<std::string> texts;
  std::vector<double> counts(spec.num_genres, 0.0);
  const int width = static_cast<int>(std::to_string(spec.num_tracks).size());
  for (std::size_t i = 0; i < spec.num_tracks; ++i) {
    // Independent stream per track so tracks can be generated in any order.
    Rng rng(mix64(spec.seed) ^ mix64(i + 1));
    Record r;
    std::ostringstream id;
    id << "trk" << std::setw(width) << std::setfill('0') << i;
    r.id = id.str();
    r.genres = sample_genre_set(spec, rng);
    const auto audio = synthesize_audio(spec, r.genres, rng);
    r.lyrics = synthesize_lyrics(spec, r.genres, rng);
    dsp::write_mel(out_dir / "mels" / (r.id + ".mel"), dsp::mel_spectrogram(audio, mc));
    if (spec.write_audio) dsp::write_wav(out_dir / "wav" / (r.id + ".wav"), audio);
    for (const auto g : r.genres) counts[g] += 1;
    texts.push_back(r.lyrics);
    records.push_back(std::move(r));
  }

  const auto vocab = Vocabulary::build(texts);
  vocab.save(out_dir / "vocab.json");
  save_genre_names(out_dir / "genres.json", names);
  SynthSummary summary;
  summary.manifest = out_dir / "manifest.jsonl";
  summary.tracks = records.size();
  std::ofstream out(summary.manifest);
  if (!out) throw ConfigError("cannot write manifest " + summary.manifest.string());
  for (const auto& r : records) {
    std::vector<std::string> g;
    for (const auto k : r.genres) g.push_back(names[k]);
    out << json{{"id", r.id}, {"mel", "mels/" + r.id + ".mel"}, {"lyrics", r.lyrics}, {"genres", g}}.dump() << "\n";
  }
  for (auto& c : counts) c /= static_cast<double>(spec.num_tracks);
  summary.marginals = counts;
  return summary;
}

template Tensor<float> label_matrix<float>(const std::vector<LabelSet>&, std::size_t);
template Tensor<double> label_matrix<double>(const std::vector<LabelSet>&, std::size_t);
template Batch<float> make_batch<float>(const Dataset&, const std::vector<std::size_t>&, std::size_t);
template Batch<double> make_batch<double>(const Dataset&, const std::vector<std::size_t>&, std::size_t);
template std::vector<Batch<float>> batches<float>(const Dataset&, const std::vector<std::size_t>&, std::size_t,
                                                  std::uint64_t, std::size_t, std::size_t);
template std::vector<Batch<double>> batches<double>(const Dataset&, const std::vector<std::size_t>&, std::size_t,
                                                    std::uint64_t, std::size_t, std::size_t);

}  // namespace genrefuse
