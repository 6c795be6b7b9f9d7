#include "genrefuse/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "json.hpp"

namespace genrefuse {

using nlohmann::ordered_json;

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

template <typename U>
void put(std::vector<std::uint8_t>& out, U v) {
  const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
  out.insert(out.end(), p, p + sizeof(U));
}

template <typename U>
U get(const std::vector<std::uint8_t>& in, std::size_t offset, const char* what) {
  if (offset + sizeof(U) > in.size()) throw FormatError(std::string("checkpoint truncated in ") + what, in.size());
  U v;
  std::memcpy(&v, in.data() + offset, sizeof(U));
  return v;
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const CheckpointMeta& meta, const ParameterSet<float>& params) {
  ordered_json header;
  header["config"] = ordered_json::parse(meta.config.to_json());
  header["genres"] = meta.genre_names;
  header["vocab_size"] = meta.vocab_size;
  header["epoch"] = meta.epoch;
  header["best"] = {{"metric", "val_f_measure"}, {"value", meta.best_val_f}};
  auto dir = ordered_json::array();
  std::uint64_t offset = 0;
  for (const auto& e : params.entries()) {
    dir.push_back({{"name", e.name}, {"shape", e.tensor.shape()}, {"offset", offset}, {"trainable", e.trainable}});
    offset += e.tensor.numel() * sizeof(float);
  }
  header["tensors"] = dir;
  const std::string text = header.dump();

  std::vector<std::uint8_t> out{'M', 'G', 'C', 'K'};
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& e : params.entries()) {
    for (const float v : e.tensor.data()) put<float>(out, v);
  }
  return out;
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "MGCK", 4) != 0) throw FormatError("not a checkpoint (bad magic)", 0);
  const auto version = get<std::uint32_t>(bytes, 4, "version");
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint version " + std::to_string(version) + " is not supported (this build reads version " +
                          std::to_string(kCheckpointVersion) + ")",
                      4);
  }
  const auto header_len = get<std::uint64_t>(bytes, 8, "header length");
  const std::size_t header_start = 16;
  if (header_len > bytes.size() - header_start) throw FormatError("checkpoint truncated in header", bytes.size());
  const std::size_t payload_start = header_start + header_len;

  ordered_json header;
  Checkpoint ckpt;
  try {
    header = ordered_json::parse(bytes.begin() + header_start, bytes.begin() + static_cast<std::ptrdiff_t>(payload_start));
    ckpt.meta.config = RunConfig::from_json(header.at("config").dump());
    ckpt.meta.genre_names = header.at("genres").get<std::vector<std::string>>();
    ckpt.meta.vocab_size = header.at("vocab_size").get<std::size_t>();
    ckpt.meta.epoch = header.at("epoch").get<std::size_t>();
    ckpt.meta.best_val_f = header.at("best").at("value").get<double>();
    for (const auto& t : header.at("tensors")) {
      StoredTensor st;
      st.name = t.at("name").get<std::string>();
      st.shape = t.at("shape").get<Shape>();
      st.trainable = t.at("trainable").get<bool>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      const std::size_t n = shape_numel(st.shape);
      const std::size_t begin = payload_start + offset;
      if (offset > bytes.size() || n * sizeof(float) > bytes.size() - begin) {
        throw FormatError("checkpoint truncated in tensor '" + st.name + "'", bytes.size());
      }
      st.values.resize(n);
      std::memcpy(st.values.data(), bytes.data() + begin, n * sizeof(float));
      ckpt.tensors.push_back(std::move(st));
    }
  } catch (const ordered_json::exception& e) {
    throw FormatError(std::string("checkpoint header is invalid: ") + e.what(), header_start);
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta, const ParameterSet<float>& params) {
  const auto bytes = encode_checkpoint(meta, params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

void restore_parameters(const Checkpoint& ckpt, ParameterSet<float>& params) {
  if (ckpt.tensors.size() != params.entries().size()) {
    throw ConfigError("checkpoint has " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                      std::to_string(params.entries().size()));
  }
  for (const auto& st : ckpt.tensors) {
    if (!params.contains(st.name)) throw ConfigError("checkpoint tensor '" + st.name + "' is not part of the model");
    auto& t = params.at(st.name);
    if (t.shape() != st.shape) {
      throw DimensionError("checkpoint tensor '" + st.name + "' has shape " + shape_str(st.shape) + ", model has " +
                           shape_str(t.shape()));
    }
    std::copy(st.values.begin(), st.values.end(), t.mutable_data().begin());
  }
}

}  // namespace genrefuse
