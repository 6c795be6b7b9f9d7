#include "genrefuse/encoders.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>

#include "genrefuse/ops.hpp"
#include "json.hpp"

namespace genrefuse {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (const char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isalnum(c) && c < 128) {
      current.push_back(static_cast<char>(std::tolower(c)));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary() {
  insert("<pad>", kPad);
  insert("<unk>", kUnknown);
}

void Vocabulary::insert(const std::string& token, std::int64_t id) {
  if (id != static_cast<std::int64_t>(tokens_.size())) {
    throw ConfigError("vocabulary ids must be dense; token '" + token + "' has id " +
                      std::to_string(id) + ", expected " + std::to_string(tokens_.size()));
  }
  if (!ids_.emplace(token, id).second) throw ConfigError("duplicate vocabulary token '" + token + "'");
  tokens_.push_back(token);
}

Vocabulary Vocabulary::build(const std::vector<std::string>& texts) {
  std::set<std::string> all;
  for (const auto& text : texts)
    for (auto& tok : tokenize(text)) all.insert(std::move(tok));
  Vocabulary vocab;
  for (const auto& tok : all) vocab.insert(tok, static_cast<std::int64_t>(vocab.size()));
  return vocab;
}

std::string Vocabulary::to_json() const {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < tokens_.size(); ++i) j[tokens_[i]] = i;
  return j.dump();
}

Vocabulary Vocabulary::from_json(const std::string& json) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("vocabulary: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("vocabulary: expected a JSON object {token: id}");
  std::vector<std::pair<std::int64_t, std::string>> by_id;
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!it.value().is_number_integer()) throw ConfigError("vocabulary: id of '" + it.key() + "' is not an integer");
    by_id.emplace_back(it.value().get<std::int64_t>(), it.key());
  }
  std::sort(by_id.begin(), by_id.end());
  Vocabulary vocab;
  vocab.ids_.clear();
  vocab.tokens_.clear();
  for (const auto& [id, tok] : by_id) vocab.insert(tok, id);
  if (vocab.size() < 2 || vocab.tokens_[kPad] != "<pad>" || vocab.tokens_[kUnknown] != "<unk>") {
    throw ConfigError("vocabulary: ids 0 and 1 must be <pad> and <unk>");
  }
  return vocab;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open vocabulary " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write vocabulary " + path.string());
  out << to_json() << "\n";
}

std::int64_t Vocabulary::id(const std::string& token) const {
  const auto it = ids_.find(token);
  return it == ids_.end() ? kUnknown : it->second;
}

std::vector<std::int64_t> Vocabulary::encode(std::string_view text) const {
  std::vector<std::int64_t> out;
  for (const auto& tok : tokenize(text)) out.push_back(id(tok));
  return out;
}

const std::string& Vocabulary::token(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw InputError("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

FrozenEmbedder::FrozenEmbedder(std::size_t dim, std::uint64_t seed, std::size_t vocab_size)
    : dim_(dim), seed_(seed), vocab_size_(vocab_size) {
  if (dim == 0) throw ConfigError("frozen embedder: dimension must be positive");
}

std::vector<double> FrozenEmbedder::from_key(std::uint64_t key) const {
  std::vector<double> v(dim_);
  const std::uint64_t base = mix64(seed_ ^ mix64(key));
  const double scale = 1.0 / std::sqrt(static_cast<double>(dim_));
  for (std::size_t k = 0; k < dim_; k += 2) {
    const double u1 = unit_open(mix64(base + 2 * k));
    const double u2 = unit_open(mix64(base + 2 * k + 1));
    const double r = std::sqrt(-2.0 * std::log(u1));
    v[k] = scale * r * std::cos(2.0 * std::numbers::pi * u2);
    if (k + 1 < dim_) v[k + 1] = scale * r * std::sin(2.0 * std::numbers::pi * u2);
  }
  return v;
}

std::vector<double> FrozenEmbedder::embed_id(std::int64_t id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= vocab_size_) {
    throw InputError("frozen embedder: token id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(vocab_size_));
  }
  if (id == Vocabulary::kPad) return std::vector<double>(dim_, 0.0);
  return from_key(static_cast<std::uint64_t>(id));
}

std::vector<double> FrozenEmbedder::embed_token(std::string_view token) const {
  // Offset keeps string keys disjoint from small integer id keys in practice.
  return from_key(hash_string(token) ^ 0x5bd1e9955bd1e995ULL);
}

template <typename T>
Tensor<T> FrozenEmbedder::embed_sequence(const std::vector<std::int64_t>& ids) const {
  if (ids.empty()) throw InputError("frozen embedder: empty token sequence");
  std::vector<T> data;
  data.reserve(ids.size() * dim_);
  for (const auto id : ids) {
    for (const double x : embed_id(id)) data.push_back(static_cast<T>(x));
  }
  return Tensor<T>::from({ids.size(), dim_}, std::move(data), false);
}

template <typename T>
Tensor<T> genre_node_features(const std::vector<std::string>& genre_names,
                              const FrozenEmbedder& embedder) {
  if (genre_names.empty()) throw ConfigError("genre features: no genre names");
  std::set<std::string> seen;
  std::vector<T> data;
  for (const auto& name : genre_names) {
    if (!seen.insert(name).second) throw ConfigError("genre features: duplicate genre name '" + name + "'");
    const auto tokens = tokenize(name);
    if (tokens.empty()) throw ConfigError("genre features: genre name '" + name + "' has no tokens");
    std::vector<double> row(embedder.dim(), 0.0);
    for (const auto& tok : tokens) {
      const auto v = embedder.embed_token(tok);
      for (std::size_t k = 0; k < row.size(); ++k) row[k] += v[k];
    }
    for (const double x : row) data.push_back(static_cast<T>(x / static_cast<double>(tokens.size())));
  }
  return Tensor<T>::from({genre_names.size(), embedder.dim()}, std::move(data), false);
}

template <typename T>
Tensor<T> pool_embedding(const Tensor<T>& seq) {
  if (seq.rank() != 2 || seq.dim(0) == 0) {
    throw DimensionError("pool_embedding: expected a non-empty L x d sequence, got " + shape_str(seq.shape()));
  }
  return ops::mean_axis(seq, 0);
}

template <typename T>
AudioEncoder<T>::AudioEncoder(AudioEncoderConfig config, Rng& rng) : config_(std::move(config)) {
  if (config_.channels.empty()) throw ConfigError("audio encoder: at least one conv block is required");
  std::size_t in = 1;
  for (const std::size_t out : config_.channels) {
    if (out == 0) throw ConfigError("audio encoder: channel widths must be positive");
    // He initialisation for ReLU blocks.
    weights_.push_back(init_normal<T>({out, in, 3, 3}, std::sqrt(2.0 / (9.0 * static_cast<double>(in))), rng));
    biases_.push_back(Tensor<T>::zeros({out}, true));
    in = out;
  }
}

template <typename T>
std::size_t AudioEncoder<T>::output_steps(std::size_t frames, std::size_t blocks) {
  for (std::size_t b = 0; b < blocks; ++b) frames = (frames + 1) / 2;
  return frames;
}

template <typename T>
Tensor<T> AudioEncoder<T>::forward(const Tensor<T>& mel) const {
  if (mel.rank() != 2 || mel.dim(0) != config_.n_mels) {
    throw DimensionError("audio encoder: expected " + std::to_string(config_.n_mels) + " x T mel, got " +
                         shape_str(mel.shape()));
  }
  if (mel.dim(1) < kMinFrames) {
    throw InputError("audio encoder: input too short, " + std::to_string(mel.dim(1)) + " frames < " +
                     std::to_string(kMinFrames));
  }
  auto x = ops::reshape(mel, {1, mel.dim(0), mel.dim(1)});
  for (std::size_t b = 0; b < weights_.size(); ++b) {
    x = ops::maxpool2x2(ops::relu(ops::conv2d_3x3(x, weights_[b], biases_[b])));
  }
  return ops::freq_mean_sequence(x);
}

template <typename T>
void AudioEncoder<T>::register_params(ParameterSet<T>& params, const std::string& prefix) const {
  for (std::size_t b = 0; b < weights_.size(); ++b) {
    params.add(prefix + ".conv" + std::to_string(b) + ".weight", weights_[b]);
    params.add(prefix + ".conv" + std::to_string(b) + ".bias", biases_[b]);
  }
}

template <typename T>
LyricsEncoder<T>::LyricsEncoder(const FrozenEmbedder& embedder, std::size_t out_dim, Rng& rng)
    : embedder_(embedder), adapter_(embedder.dim(), out_dim, rng) {}

template <typename T>
Tensor<T> LyricsEncoder<T>::frozen(const std::vector<std::int64_t>& ids) const {
  return embedder_.embed_sequence<T>(ids);
}

template <typename T>
Tensor<T> LyricsEncoder<T>::forward(const std::vector<std::int64_t>& ids) const {
  return adapter_.forward(frozen(ids));
}

template <typename T>
void LyricsEncoder<T>::register_params(ParameterSet<T>& params, const std::string& prefix) const {
  adapter_.register_params(params, prefix + ".adapter");
}

template Tensor<float> FrozenEmbedder::embed_sequence<float>(const std::vector<std::int64_t>&) const;
template Tensor<double> FrozenEmbedder::embed_sequence<double>(const std::vector<std::int64_t>&) const;
template Tensor<float> genre_node_features<float>(const std::vector<std::string>&, const FrozenEmbedder&);
template Tensor<double> genre_node_features<double>(const std::vector<std::string>&, const FrozenEmbedder&);
template Tensor<float> pool_embedding<float>(const Tensor<float>&);
template Tensor<double> pool_embedding<double>(const Tensor<double>&);
template class AudioEncoder<float>;
template class AudioEncoder<double>;
template class LyricsEncoder<float>;
template class LyricsEncoder<double>;

}  // namespace genrefuse
