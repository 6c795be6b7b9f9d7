#pragma once

// Dataset plumbing: JSONL manifests, seeded splits, batching and the
// synthetic generator with planted genre co-occurrence.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "genrefuse/dsp.hpp"
#include "genrefuse/encoders.hpp"
#include "genrefuse/graph.hpp"
#include "genrefuse/tensor.hpp"

namespace genrefuse {

struct TrackSample {
  std::string id;
  std::filesystem::path mel_path;  // absolute, or relative to the working directory
  std::vector<std::int64_t> lyric_tokens;
  LabelSet genres;  // sorted, unique

  bool operator==(const TrackSample&) const = default;
};

std::vector<std::string> load_genre_names(const std::filesystem::path& path);
void save_genre_names(const std::filesystem::path& path, const std::vector<std::string>& names);

/// One JSON object per line with id, mel, genres and either lyrics (text,
/// encoded with `vocab`) or lyric_ids. Relative mel paths resolve against the
/// manifest's directory. Blank lines are skipped.
std::vector<TrackSample> load_manifest(const std::filesystem::path& path, const std::vector<std::string>& genre_names,
                                       const Vocabulary* vocab = nullptr);
/// Writes lyric_ids records; mel paths are stored relative to the manifest.
void write_manifest(const std::filesystem::path& path, const std::vector<TrackSample>& samples,
                    const std::vector<std::string>& genre_names);

struct SplitRatios {
  double train = 0.7;
  double val = 0.1;
  double test = 0.2;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
  SplitRatios ratios;
};

/// Seeded shuffle, then floor(n * train) and floor(n * val) ids, rest to test.
DatasetSplit split(const std::vector<std::string>& ids, const SplitRatios& ratios, std::uint64_t seed);

/// Per-epoch shuffled index groups over [0, count); the last group may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t count, std::size_t batch_size, std::uint64_t seed,
                                                    std::size_t epoch);
/// Right-truncates or pads with the padding id to exactly `length` tokens.
std::vector<std::int64_t> fit_length(const std::vector<std::int64_t>& ids, std::size_t length);

template <typename T>
Tensor<T> label_matrix(const std::vector<LabelSet>& sets, std::size_t num_genres);

/// Everything needed for training, held in memory.
struct Dataset {
  std::vector<std::string> genre_names;
  Vocabulary vocab;
  std::vector<TrackSample> samples;
  std::vector<dsp::MelSpectrogram> mels;  // parallel to samples

  /// Reads manifest.jsonl, genres.json and vocab.json (if present) from `dir`.
  static Dataset load(const std::filesystem::path& dir);
  std::vector<std::size_t> indices_of(const std::vector<std::string>& ids) const;
};

template <typename T>
struct Batch {
  std::vector<std::size_t> indices;
  std::vector<Tensor<T>> mels;
  std::vector<std::vector<std::int64_t>> tokens;
  Tensor<T> labels;  // B x G
};

template <typename T>
Batch<T> make_batch(const Dataset& data, const std::vector<std::size_t>& indices, std::size_t lyric_length);

/// Batches of one split for one epoch. An empty split is an error.
template <typename T>
std::vector<Batch<T>> batches(const Dataset& data, const std::vector<std::size_t>& split_indices,
                              std::size_t batch_size, std::uint64_t seed, std::size_t epoch, std::size_t lyric_length);

struct GenrePair {
  std::size_t first = 0;
  std::size_t second = 1;
  double joint = 0.4;
};

struct SyntheticSpec {
  std::size_t num_tracks = 2000;
  std::size_t num_genres = 12;
  std::uint64_t seed = 0;
  double seconds = 30.0;
  std::uint32_t sample_rate = 22050;
  double marginal = 0.4;            // default per-genre probability
  std::vector<double> marginals;    // overrides `marginal` when non-empty
  std::vector<GenrePair> pairs;     // disjoint pairs with target joint probability
  std::size_t tones_per_genre = 2;
  double f_low = 150.0;
  double f_high = 6000.0;
  double snr_db = 10.0;
  std::size_t words_per_genre = 12;
  std::size_t min_lyric_tokens = 50;
  std::size_t max_lyric_tokens = 200;
  double genre_word_fraction = 0.7;
  std::size_t max_rejections = 1000;
  bool write_audio = false;  // also emit wav/<id>.wav

  /// The 12-genre design used by the acceptance suite and `synth` defaults.
  static SyntheticSpec standard(std::size_t num_tracks, std::size_t num_genres, std::uint64_t seed);
};

std::vector<std::string> synthetic_genre_names(std::size_t num_genres);
/// Signature tone frequencies (Hz) of each genre, spread evenly on the mel scale.
std::vector<std::vector<double>> synthetic_tones(const SyntheticSpec& spec);
std::vector<std::string> synthetic_genre_words(const std::string& genre_name, std::size_t count);
const std::vector<std::string>& shared_word_pool();

/// Draws one non-empty genre set.
LabelSet sample_genre_set(const SyntheticSpec& spec, Rng& rng);
dsp::AudioClip synthesize_audio(const SyntheticSpec& spec, const LabelSet& genres, Rng& rng);
std::string synthesize_lyrics(const SyntheticSpec& spec, const LabelSet& genres, Rng& rng);

struct SynthSummary {
  std::filesystem::path manifest;
  std::size_t tracks = 0;
  std::vector<double> marginals;  // empirical
};

/// Writes mels/, manifest.jsonl, genres.json and vocab.json under out_dir.
SynthSummary synth_dataset(const SyntheticSpec& spec, const std::filesystem::path& out_dir,
                           const dsp::MelConfig& mel_config);

}  // namespace genrefuse
