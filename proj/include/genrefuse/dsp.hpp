#pragma once

// Audio frontend: crop/pad, STFT magnitude, mel filterbank, log-mel
// spectrogram, PCM16 WAV I/O and the binary mel cache.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace genrefuse::dsp {

struct AudioClip {
  std::vector<float> samples;
  std::uint32_t sample_rate = 22050;
};

enum class MelScale { kSlaney, kHtk };

struct MelConfig {
  std::uint32_t sample_rate = 22050;
  std::size_t n_fft = 2048;
  std::size_t hop = 512;
  std::size_t n_mels = 128;
  double seconds = 30.0;
  double f_min = 0.0;
  double f_max = 0.0;  // 0 means sample_rate / 2
  MelScale scale = MelScale::kSlaney;
};

/// Row-major (bins x frames) magnitude spectrogram.
struct Spectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  std::vector<double> values;

  double at(std::size_t bin, std::size_t frame) const { return values[bin * frames + frame]; }
};

/// Row-major (mels x frames) log-compressed mel energies.
struct MelSpectrogram {
  std::size_t mels = 0;
  std::size_t frames = 0;
  std::vector<float> values;

  float at(std::size_t mel, std::size_t frame) const { return values[mel * frames + frame]; }
  bool operator==(const MelSpectrogram&) const = default;
};

/// Exactly round(seconds * rate) samples: longer input keeps the centred
/// window, shorter input is zero-padded symmetrically (extra sample on the right).
AudioClip crop_or_pad(const AudioClip& audio, double seconds);

/// 1 + floor(num_samples / hop): frame count under centre padding.
std::size_t frame_count(std::size_t num_samples, std::size_t hop);

/// Hann-windowed, centre (reflect) padded STFT magnitude, (n_fft/2+1) x T.
Spectrogram stft_magnitude(std::span<const float> samples, std::size_t n_fft, std::size_t hop);

double hz_to_mel(double hz, MelScale scale);
double mel_to_hz(double mel, MelScale scale);

/// Triangular filters, row-major n_mels x (n_fft/2+1). Slaney scale uses
/// area normalisation (2 / bandwidth), HTK scale uses unit peaks.
std::vector<double> mel_filterbank(const MelConfig& config);

/// Mel energies before log compression (filterbank applied to |STFT|^2).
Spectrogram mel_energies(const AudioClip& audio, const MelConfig& config);

/// log(1 + mel energies); expects a clip already passed through crop_or_pad.
MelSpectrogram mel_spectrogram(const AudioClip& audio, const MelConfig& config = {});

// Mel cache: "MELS", u32 LE version (1), u32 LE rows, u32 LE cols, rows*cols f32 LE.
inline constexpr std::uint32_t kMelCacheVersion = 1;
void write_mel(const std::filesystem::path& path, const MelSpectrogram& mel);
MelSpectrogram read_mel(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_mel(const MelSpectrogram& mel);
MelSpectrogram decode_mel(std::span<const std::uint8_t> bytes);

/// RIFF/WAVE PCM16, mono or stereo (stereo is averaged to mono).
AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const AudioClip& audio);

}  // namespace genrefuse::dsp
