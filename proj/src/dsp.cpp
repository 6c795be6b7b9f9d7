#include "genrefuse/dsp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <new>
#include <numbers>

#include <fftw3.h>

#include "genrefuse/errors.hpp"

namespace genrefuse::dsp {

namespace {

// Owns one real-to-complex FFTW plan and its buffers.
class RealFft {
 public:
  explicit RealFft(std::size_t n)
      : in_(static_cast<double*>(fftw_malloc(sizeof(double) * n))),
        out_(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)))) {
    if (in_ == nullptr || out_ == nullptr) throw std::bad_alloc();
    plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
  }
  ~RealFft() {
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  double* input() { return in_; }
  void run() { fftw_execute(plan_); }
  double magnitude(std::size_t k) const { return std::hypot(out_[k][0], out_[k][1]); }

 private:
  double* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

// Reflect (no edge repeat) an out-of-range index back into [0, n).
double reflected(std::span<const float> x, std::ptrdiff_t i) {
  const auto n = static_cast<std::ptrdiff_t>(x.size());
  if (n == 1) return i == 0 ? x[0] : 0.0;
  const std::ptrdiff_t period = 2 * (n - 1);
  i %= period;
  if (i < 0) i += period;
  if (i >= n) i = period - i;
  return x[static_cast<std::size_t>(i)];
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t off) {
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(b[off + k]) << (8 * k);
  return v;
}

std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint16_t>(b[off] | (b[off + 1] << 8));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw InputError("short write to " + path.string());
}

}  // namespace

AudioClip crop_or_pad(const AudioClip& audio, double seconds) {
  if (audio.samples.empty()) throw InputError("crop_or_pad: empty audio");
  if (!(seconds > 0.0)) throw ConfigError("crop_or_pad: seconds must be positive");
  const auto target = static_cast<std::size_t>(std::llround(seconds * audio.sample_rate));
  const std::size_t len = audio.samples.size();
  AudioClip out{std::vector<float>(target, 0.0f), audio.sample_rate};
  if (len >= target) {
    const std::size_t start = (len - target) / 2;
    std::copy_n(audio.samples.begin() + static_cast<std::ptrdiff_t>(start), target, out.samples.begin());
  } else {
    const std::size_t left = (target - len) / 2;
    std::copy(audio.samples.begin(), audio.samples.end(), out.samples.begin() + static_cast<std::ptrdiff_t>(left));
  }
  return out;
}

std::size_t frame_count(std::size_t num_samples, std::size_t hop) {
  return 1 + num_samples / hop;
}

Spectrogram stft_magnitude(std::span<const float> samples, std::size_t n_fft, std::size_t hop) {
  if (n_fft < 2 || !std::has_single_bit(n_fft)) {
    throw ConfigError("stft: n_fft must be a power of two, got " + std::to_string(n_fft));
  }
  if (hop == 0 || hop > n_fft) {
    throw ConfigError("stft: hop must be in [1, n_fft], got " + std::to_string(hop));
  }
  if (samples.empty()) throw InputError("stft: empty signal");

  std::vector<double> window(n_fft);
  for (std::size_t i = 0; i < n_fft; ++i) {
    // Periodic Hann.
    window[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                      static_cast<double>(n_fft));
  }

  Spectrogram spec;
  spec.bins = n_fft / 2 + 1;
  spec.frames = frame_count(samples.size(), hop);
  spec.values.assign(spec.bins * spec.frames, 0.0);
  const auto half = static_cast<std::ptrdiff_t>(n_fft / 2);
  const auto n = static_cast<std::ptrdiff_t>(samples.size());
  RealFft fft(n_fft);
  double* buf = fft.input();
  for (std::size_t f = 0; f < spec.frames; ++f) {
    const std::ptrdiff_t start = static_cast<std::ptrdiff_t>(f * hop) - half;
    for (std::size_t i = 0; i < n_fft; ++i) {
      const std::ptrdiff_t idx = start + static_cast<std::ptrdiff_t>(i);
      const double v = (idx >= 0 && idx < n) ? samples[static_cast<std::size_t>(idx)] : reflected(samples, idx);
      buf[i] = v * window[i];
    }
    fft.run();
    for (std::size_t k = 0; k < spec.bins; ++k) spec.values[k * spec.frames + f] = fft.magnitude(k);
  }
  return spec;
}

double hz_to_mel(double hz, MelScale scale) {
  if (scale == MelScale::kHtk) return 2595.0 * std::log10(1.0 + hz / 700.0);
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (hz < min_log_hz) return hz / f_sp;
  return min_log_mel + std::log(hz / min_log_hz) / logstep;
}

double mel_to_hz(double mel, MelScale scale) {
  if (scale == MelScale::kHtk) return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
  constexpr double f_sp = 200.0 / 3.0;
  constexpr double min_log_hz = 1000.0;
  constexpr double min_log_mel = min_log_hz / f_sp;
  const double logstep = std::log(6.4) / 27.0;
  if (mel < min_log_mel) return mel * f_sp;
  return min_log_hz * std::exp(logstep * (mel - min_log_mel));
}

std::vector<double> mel_filterbank(const MelConfig& config) {
  if (config.n_mels == 0) throw ConfigError("mel_filterbank: n_mels must be positive");
  const double nyquist = config.sample_rate / 2.0;
  const double f_max = config.f_max > 0.0 ? config.f_max : nyquist;
  if (!(config.f_min >= 0.0 && config.f_min < f_max && f_max <= nyquist)) {
    throw ConfigError("mel_filterbank: need 0 <= f_min < f_max <= sample_rate/2");
  }
  const std::size_t bins = config.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(config.f_min, config.scale);
  const double mel_hi = hz_to_mel(f_max, config.scale);
  std::vector<double> edges(config.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i) {
    const double m = mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                  static_cast<double>(config.n_mels + 1);
    edges[i] = mel_to_hz(m, config.scale);
  }
  std::vector<double> fb(config.n_mels * bins, 0.0);
  for (std::size_t m = 0; m < config.n_mels; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    const double norm = config.scale == MelScale::kSlaney ? 2.0 / (hi - lo) : 1.0;
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * config.sample_rate / static_cast<double>(config.n_fft);
      const double rising = (f - lo) / (centre - lo);
      const double falling = (hi - f) / (hi - centre);
      fb[m * bins + k] = std::max(0.0, std::min(rising, falling)) * norm;
    }
  }
  return fb;
}

Spectrogram mel_energies(const AudioClip& audio, const MelConfig& config) {
  if (audio.sample_rate != config.sample_rate) {
    throw InputError("mel: audio is " + std::to_string(audio.sample_rate) + " Hz, expected " +
                     std::to_string(config.sample_rate) + " Hz (no resampling)");
  }
  const auto mag = stft_magnitude(audio.samples, config.n_fft, config.hop);
  const auto fb = mel_filterbank(config);
  Spectrogram out;
  out.bins = config.n_mels;
  out.frames = mag.frames;
  out.values.assign(out.bins * out.frames, 0.0);
  for (std::size_t m = 0; m < config.n_mels; ++m) {
    double* row = out.values.data() + m * out.frames;
    for (std::size_t k = 0; k < mag.bins; ++k) {
      const double w = fb[m * mag.bins + k];
      if (w == 0.0) continue;
      const double* mrow = mag.values.data() + k * mag.frames;
      for (std::size_t t = 0; t < out.frames; ++t) row[t] += w * mrow[t] * mrow[t];
    }
  }
  return out;
}

MelSpectrogram mel_spectrogram(const AudioClip& audio, const MelConfig& config) {
  const auto energies = mel_energies(audio, config);
  MelSpectrogram mel;
  mel.mels = energies.bins;
  mel.frames = energies.frames;
  mel.values.resize(energies.values.size());
  for (std::size_t i = 0; i < mel.values.size(); ++i) {
    mel.values[i] = static_cast<float>(std::log1p(energies.values[i]));
  }
  return mel;
}

std::vector<std::uint8_t> encode_mel(const MelSpectrogram& mel) {
  if (mel.values.size() != mel.mels * mel.frames) {
    throw InputError("encode_mel: value count does not match rows*cols");
  }
  std::vector<std::uint8_t> out{'M', 'E', 'L', 'S'};
  out.reserve(16 + 4 * mel.values.size());
  put_u32(out, kMelCacheVersion);
  put_u32(out, static_cast<std::uint32_t>(mel.mels));
  put_u32(out, static_cast<std::uint32_t>(mel.frames));
  for (const float v : mel.values) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

MelSpectrogram decode_mel(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), "MELS", 4) != 0) {
    throw FormatError("mel cache: bad magic (expected \"MELS\")", 0);
  }
  if (bytes.size() < 16) throw FormatError("mel cache: truncated header", bytes.size());
  const std::uint32_t version = get_u32(bytes, 4);
  if (version != kMelCacheVersion) {
    throw FormatError("mel cache: unsupported version " + std::to_string(version), 4);
  }
  MelSpectrogram mel;
  mel.mels = get_u32(bytes, 8);
  mel.frames = get_u32(bytes, 12);
  const std::uint64_t count = static_cast<std::uint64_t>(mel.mels) * mel.frames;
  const std::uint64_t expected = 16 + 4 * count;
  if (bytes.size() < expected) {
    throw FormatError("mel cache: truncated payload, expected " + std::to_string(expected) +
                          " bytes, have " + std::to_string(bytes.size()),
                      bytes.size());
  }
  if (bytes.size() > expected) throw FormatError("mel cache: trailing bytes", expected);
  mel.values.resize(count);
  for (std::size_t i = 0; i < count; ++i) mel.values[i] = std::bit_cast<float>(get_u32(bytes, 16 + 4 * i));
  return mel;
}

void write_mel(const std::filesystem::path& path, const MelSpectrogram& mel) {
  write_file(path, encode_mel(mel));
}

MelSpectrogram read_mel(const std::filesystem::path& path) {
  return decode_mel(read_file(path));
}

AudioClip read_wav(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  std::span<const std::uint8_t> b(bytes);
  if (b.size() < 12 || std::memcmp(b.data(), "RIFF", 4) != 0 || std::memcmp(b.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("wav: not a RIFF/WAVE file: " + path.string(), 0);
  }
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  bool have_fmt = false;
  std::size_t off = 12;
  while (off + 8 <= b.size()) {
    const std::uint32_t size = get_u32(b, off + 4);
    const std::size_t body = off + 8;
    if (body + size > b.size()) throw FormatError("wav: chunk overruns file", off);
    if (std::memcmp(b.data() + off, "fmt ", 4) == 0) {
      if (size < 16) throw FormatError("wav: fmt chunk too small", off);
      format = get_u16(b, body);
      channels = get_u16(b, body + 2);
      rate = get_u32(b, body + 4);
      bits = get_u16(b, body + 14);
      have_fmt = true;
    } else if (std::memcmp(b.data() + off, "data", 4) == 0) {
      if (!have_fmt) throw FormatError("wav: data chunk before fmt chunk", off);
      if (format != 1 || bits != 16) throw FormatError("wav: only PCM16 is supported", off);
      if (channels != 1 && channels != 2) throw FormatError("wav: only mono or stereo is supported", off);
      const std::size_t frames = size / (2u * channels);
      AudioClip clip{std::vector<float>(frames), rate};
      for (std::size_t i = 0; i < frames; ++i) {
        double acc = 0.0;
        for (std::size_t c = 0; c < channels; ++c) {
          acc += static_cast<std::int16_t>(get_u16(b, body + 2 * (i * channels + c))) / 32768.0;
        }
        clip.samples[i] = static_cast<float>(acc / channels);
      }
      return clip;
    }
    off = body + size + (size & 1u);
  }
  throw FormatError("wav: no data chunk", off);
}

void write_wav(const std::filesystem::path& path, const AudioClip& audio) {
  const auto data_bytes = static_cast<std::uint32_t>(2 * audio.samples.size());
  std::vector<std::uint8_t> out{'R', 'I', 'F', 'F'};
  put_u32(out, 36 + data_bytes);
  for (char c : std::string("WAVEfmt ")) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, 16);
  out.push_back(1);  // PCM
  out.push_back(0);
  out.push_back(1);  // mono
  out.push_back(0);
  put_u32(out, audio.sample_rate);
  put_u32(out, audio.sample_rate * 2);
  out.push_back(2);  // block align
  out.push_back(0);
  out.push_back(16);
  out.push_back(0);
  for (char c : std::string("data")) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, data_bytes);
  for (const float s : audio.samples) {
    const auto q = static_cast<std::int16_t>(std::lround(std::clamp(s, -1.0f, 1.0f) * 32767.0f));
    const auto u = static_cast<std::uint16_t>(q);
    out.push_back(static_cast<std::uint8_t>(u & 0xff));
    out.push_back(static_cast<std::uint8_t>(u >> 8));
  }
  write_file(path, out);
}

}  // namespace genrefuse::dsp
