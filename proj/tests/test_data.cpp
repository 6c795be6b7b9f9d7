#include <filesystem>
#include <functional>
#include <fstream>
#include <set>
#include <sstream>

#include "doctest.h"
#include "genrefuse/data.hpp"

using namespace genrefuse;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("genrefuse_test_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_text(const fs::path& path, const std::string& text) { std::ofstream(path) << text; }

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string error_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("manifest loading") {
  const auto dir = scratch("manifest");
  dsp::write_mel(dir / "a.mel", {2, 2, {1, 2, 3, 4}});
  const std::vector<std::string> genres{"rock", "pop", "jazz"};

  write_text(dir / "empty.jsonl", "");
  CHECK(load_manifest(dir / "empty.jsonl", genres).empty());

  TrackSample s{"t1", dir / "a.mel", {5, 6, 7}, {0, 2}};
  write_manifest(dir / "one.jsonl", {s}, genres);
  const auto back = load_manifest(dir / "one.jsonl", genres);
  REQUIRE(back.size() == 1);
  CHECK(back[0].id == "t1");
  CHECK(fs::equivalent(back[0].mel_path, s.mel_path));
  CHECK(back[0].lyric_tokens == s.lyric_tokens);
  CHECK(back[0].genres == s.genres);

  write_text(dir / "missing.jsonl",
             "{\"id\":\"a\",\"mel\":\"a.mel\",\"lyric_ids\":[2],\"genres\":[\"rock\"]}\n"
             "{\"id\":\"b\",\"mel\":\"a.mel\",\"lyric_ids\":[2]}\n");
  const auto msg = error_of([&] { load_manifest(dir / "missing.jsonl", genres); });
  CHECK(msg.find("line 2") != std::string::npos);
  CHECK(msg.find("genres") != std::string::npos);
  CHECK_THROWS_AS(load_manifest(dir / "missing.jsonl", genres), InputError);

  write_text(dir / "bad.jsonl", "{\"id\":\"a\",\"mel\":\"a.mel\",\"lyric_ids\":[2],\"genres\":[\"rock\"]}\n{oops\n");
  CHECK(error_of([&] { load_manifest(dir / "bad.jsonl", genres); }).find("line 2") != std::string::npos);

  write_text(dir / "unknown.jsonl",
             "{\"id\":\"a\",\"mel\":\"a.mel\",\"lyric_ids\":[2],\"genres\":[\"polka\"]}\n"
             "{\"id\":\"b\",\"mel\":\"a.mel\",\"lyric_ids\":[2],\"genres\":[\"rock\",\"zydeco\"]}\n");
  const auto unk = error_of([&] { load_manifest(dir / "unknown.jsonl", genres); });
  CHECK(unk.find("polka") != std::string::npos);
  CHECK(unk.find("zydeco") != std::string::npos);

  write_text(dir / "nomel.jsonl", "{\"id\":\"a\",\"mel\":\"nope.mel\",\"lyric_ids\":[2],\"genres\":[\"rock\"]}\n");
  CHECK_THROWS_AS(load_manifest(dir / "nomel.jsonl", genres), InputError);

  const auto vocab = Vocabulary::build({"hello world"});
  write_text(dir / "text.jsonl", "{\"id\":\"a\",\"mel\":\"a.mel\",\"lyrics\":\"Hello there world\",\"genres\":[\"pop\"]}\n");
  const auto text = load_manifest(dir / "text.jsonl", genres, &vocab);
  CHECK(text[0].lyric_tokens == vocab.encode("hello there world"));
  CHECK_THROWS_AS(load_manifest(dir / "text.jsonl", genres), InputError);
}

TEST_CASE("split sizes, determinism and coverage") {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("id" + std::to_string(i));
  const auto s = split(ids, {}, 3);
  CHECK(s.train.size() == 7);
  CHECK(s.val.size() == 1);
  CHECK(s.test.size() == 2);
  const auto again = split(ids, {}, 3);
  CHECK(s.train == again.train);
  CHECK(s.test == again.test);

  std::set<std::string> all(s.train.begin(), s.train.end());
  all.insert(s.val.begin(), s.val.end());
  all.insert(s.test.begin(), s.test.end());
  CHECK(all.size() == ids.size());

  std::vector<std::string> many;
  for (int i = 0; i < 100; ++i) many.push_back("x" + std::to_string(i));
  int differing = 0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) differing += split(many, {}, seed).train != split(many, {}, seed + 100).train;
  CHECK(differing == 20);

  const auto big = split(many, {}, 1);
  CHECK(big.train.size() == 70);
  CHECK(big.val.size() == 10);
  CHECK(big.test.size() == 20);
  CHECK_THROWS_AS(split(ids, {0.5, 0.1, 0.1}, 0), ConfigError);
  CHECK_THROWS_AS(split(ids, {1.2, -0.1, -0.1}, 0), ConfigError);
}

TEST_CASE("batch indices") {
  const auto b = batch_indices(33, 16, 1, 0);
  REQUIRE(b.size() == 3);
  CHECK(b[0].size() == 16);
  CHECK(b[1].size() == 16);
  CHECK(b[2].size() == 1);
  std::set<std::size_t> seen;
  for (const auto& g : b) seen.insert(g.begin(), g.end());
  CHECK(seen.size() == 33);
  CHECK(batch_indices(33, 16, 1, 0) == b);
  CHECK(batch_indices(33, 16, 1, 1) != b);
  CHECK_THROWS_AS(batch_indices(5, 0, 1, 0), ConfigError);

  CHECK(fit_length({4, 5, 6}, 5) == std::vector<std::int64_t>{4, 5, 6, 0, 0});
  CHECK(fit_length({4, 5, 6}, 2) == std::vector<std::int64_t>{4, 5});

  const auto y = label_matrix<float>({{0, 2}, {1}}, 3);
  CHECK(std::vector<float>(y.data().begin(), y.data().end()) == std::vector<float>{1, 0, 1, 0, 1, 0});
}

TEST_CASE("genre set sampler honours marginals and pair targets") {
  auto spec = SyntheticSpec::standard(2000, 12, 5);
  Rng rng(9);
  std::vector<double> marg(12, 0.0);
  double joint01 = 0, joint23 = 0;
  const int n = 4000;
  for (int i = 0; i < n; ++i) {
    const auto set = sample_genre_set(spec, rng);
    CHECK_FALSE(set.empty());
    std::vector<bool> on(12, false);
    for (auto g : set) on[g] = true;
    for (std::size_t g = 0; g < 12; ++g) marg[g] += on[g];
    joint01 += on[0] && on[1];
    joint23 += on[2] && on[3];
  }
  for (std::size_t g = 0; g < 12; ++g) CHECK(std::abs(marg[g] / n - spec.marginals[g]) < 0.05);
  CHECK(std::abs(joint01 / n - 0.4) < 0.05);
  CHECK(std::abs(joint23 / n - 0.3) < 0.05);

  SyntheticSpec single;
  single.num_genres = 1;
  single.marginal = 0.3;
  for (int i = 0; i < 50; ++i) CHECK(sample_genre_set(single, rng) == LabelSet{0});

  SyntheticSpec bad = SyntheticSpec::standard(10, 4, 0);
  bad.pairs[0].joint = 0.6;  // above both marginals
  CHECK_THROWS_AS(sample_genre_set(bad, rng), ConfigError);
  SyntheticSpec impossible;
  impossible.num_genres = 3;
  impossible.marginal = 0.0;
  CHECK_THROWS_AS(sample_genre_set(impossible, rng), ConfigError);
}

TEST_CASE("synthetic content: tones, words, lyrics") {
  auto spec = SyntheticSpec::standard(10, 12, 1);
  const auto tones = synthetic_tones(spec);
  std::set<double> all;
  for (const auto& t : tones) {
    CHECK(t.size() == 2);
    for (double f : t) {
      CHECK(f < spec.sample_rate / 2.0);
      all.insert(f);
    }
  }
  CHECK(all.size() == 24);

  const auto names = synthetic_genre_names(20);
  CHECK(names[0] == "rock");
  CHECK(names[19] == "genre19");
  std::set<std::string> words;
  for (const auto& n : names)
    for (const auto& w : synthetic_genre_words(n, 12)) CHECK(words.insert(w).second);
  for (const auto& w : shared_word_pool()) CHECK(words.count(w) == 0);

  Rng rng(2);
  const auto text = synthesize_lyrics(spec, {0, 3}, rng);
  const auto tokens = tokenize(text);
  CHECK(tokens.size() >= 50);
  CHECK(tokens.size() <= 200);
  std::set<std::string> allowed(shared_word_pool().begin(), shared_word_pool().end());
  for (auto g : {0, 3})
    for (const auto& w : synthetic_genre_words(synthetic_genre_names(12)[g], 12)) allowed.insert(w);
  for (const auto& t : tokens) CHECK(allowed.count(t) == 1);

  spec.seconds = 0.5;
  Rng r1(4), r2(4);
  const auto a1 = synthesize_audio(spec, {1, 5}, r1);
  const auto a2 = synthesize_audio(spec, {1, 5}, r2);
  CHECK(a1.samples == a2.samples);
  CHECK(a1.samples.size() == 11025);
}

TEST_CASE("synthetic dataset: deterministic files that load back") {
  auto spec = SyntheticSpec::standard(6, 4, 11);
  spec.seconds = 1.5;
  const auto d1 = scratch("synth1");
  const auto d2 = scratch("synth2");
  synth_dataset(spec, d1, {});
  synth_dataset(spec, d2, {});
  CHECK(read_bytes(d1 / "manifest.jsonl") == read_bytes(d2 / "manifest.jsonl"));
  CHECK(read_bytes(d1 / "vocab.json") == read_bytes(d2 / "vocab.json"));
  for (const auto& entry : fs::directory_iterator(d1 / "mels")) {
    CHECK(read_bytes(entry.path()) == read_bytes(d2 / "mels" / entry.path().filename()));
  }

  const auto data = Dataset::load(d1);
  REQUIRE(data.samples.size() == 6);
  CHECK(data.genre_names == synthetic_genre_names(4));
  for (const auto& mel : data.mels) {
    CHECK(mel.mels == 128);
    CHECK(mel.frames == 1 + 33075 / 512);
  }
  for (const auto& s : data.samples) {
    CHECK_FALSE(s.genres.empty());
    for (auto t : s.lyric_tokens) CHECK(t >= 2);  // every token is in the vocabulary
  }

  const auto all = data.indices_of({data.samples[0].id, data.samples[5].id});
  CHECK(all == std::vector<std::size_t>{0, 5});
  const auto bs = batches<float>(data, {0, 1, 2, 3, 4}, 2, 7, 0, 128);
  REQUIRE(bs.size() == 3);
  CHECK(bs[2].mels.size() == 1);
  CHECK(bs[0].tokens[0].size() == 128);
  CHECK(bs[0].labels.shape() == Shape{2, 4});
  for (float v : bs[0].labels.data()) CHECK((v == 0.0f || v == 1.0f));
  CHECK_THROWS_AS(batches<float>(data, {}, 2, 7, 0, 128), InputError);

  // Manifest round trip through the lyric_ids form.
  write_manifest(d1 / "copy.jsonl", data.samples, data.genre_names);
  const auto copy = load_manifest(d1 / "copy.jsonl", data.genre_names, &data.vocab);
  REQUIRE(copy.size() == data.samples.size());
  for (std::size_t i = 0; i < copy.size(); ++i) {
    CHECK(copy[i].id == data.samples[i].id);
    CHECK(copy[i].genres == data.samples[i].genres);
    CHECK(copy[i].lyric_tokens == data.samples[i].lyric_tokens);
  }
}

TEST_CASE("30 second synthetic clips give 128 x 1292 mels") {
  auto spec = SyntheticSpec::standard(2, 3, 2);
  const auto dir = scratch("synth30");
  synth_dataset(spec, dir, {});
  for (const auto& entry : fs::directory_iterator(dir / "mels")) {
    const auto mel = dsp::read_mel(entry.path());
    CHECK(mel.mels == 128);
    CHECK(mel.frames == 1292);
  }
}

TEST_CASE("2000-track manifest: planted pair frequency by counting") {
  auto spec = SyntheticSpec::standard(2000, 12, 21);
  spec.seconds = 0.05;
  spec.min_lyric_tokens = spec.max_lyric_tokens = 50;
  const auto dir = scratch("synth2000");
  const auto summary = synth_dataset(spec, dir, {});
  const auto names = load_genre_names(dir / "genres.json");
  const auto vocab = Vocabulary::load(dir / "vocab.json");
  const auto samples = load_manifest(summary.manifest, names, &vocab);
  REQUIRE(samples.size() == 2000);
  std::vector<LabelSet> sets;
  for (const auto& s : samples) sets.push_back(s.genres);
  const auto c = count_cooccurrence(sets, 12);
  CHECK(std::abs(static_cast<double>(c.pair(0, 1)) / 2000 - 0.4) <= 0.05);
  for (std::size_t g = 0; g < 12; ++g) {
    CHECK(std::abs(static_cast<double>(c.n[g]) / 2000 - spec.marginals[g]) <= 0.05);
    CHECK(summary.marginals[g] == static_cast<double>(c.n[g]) / 2000);
  }
  fs::remove_all(dir);
}
