#include "rtop/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>
#include <string>

#include "rtop/error.hpp"

namespace rtop {

void validate(const AudioData& audio) {
  if (audio.samples.size() != static_cast<std::size_t>(kAudioSamples)) {
    throw Error(ErrorKind::Malformed, "audio node needs exactly 12800 samples, got " +
                                          std::to_string(audio.samples.size()));
  }
}

AudioSummary audio_summary(const AudioData& audio) {
  const auto& s = audio.samples;
  if (s.empty()) return {};
  double sum = 0.0, sq = 0.0;
  for (auto v : s) {
    sum += v;
    sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(s.size());
  const double mean = sum / n;
  std::size_t crossings = 0;
  bool above = s[0] >= mean;
  for (std::size_t i = 1; i < s.size(); ++i) {
    const bool now = s[i] >= mean;
    if (now != above) ++crossings;
    above = now;
  }
  const double seconds = n / kAudioSampleRate;
  return AudioSummary{std::max(0.0, sq / n - mean * mean), static_cast<double>(crossings) / seconds};
}

AudioSummary absolute_tolerance(const AudioSummary& a, const AudioSummary& b,
                                const AudioTolerance& rel) {
  return AudioSummary{
      rel.var_rel * std::max(std::abs(a.var_amplitude), std::abs(b.var_amplitude)),
      rel.cross_rel * std::max(std::abs(a.mean_cross_rate), std::abs(b.mean_cross_rate))};
}

namespace {

bool within(const AudioSummary& a, const AudioSummary& b, const AudioSummary& tol) {
  return std::abs(a.var_amplitude - b.var_amplitude) <= tol.var_amplitude &&
         std::abs(a.mean_cross_rate - b.mean_cross_rate) <= tol.mean_cross_rate;
}

}  // namespace

bool match_audio(const AudioData& probe, const AudioData& candidate, const AudioSummary& tol) {
  return within(audio_summary(probe), audio_summary(candidate), tol);
}

bool match_audio(const AudioData& probe, const AudioData& candidate, const AudioTolerance& rel) {
  const auto a = audio_summary(probe);
  const auto b = audio_summary(candidate);
  return within(a, b, absolute_tolerance(a, b, rel));
}

bool match_audio_merged(const AudioSummary& probe, const AudioMergedData& merged) {
  return within(probe, merged.center, merged.tol);
}

double audio_distance(const AudioSummary& a, const AudioSummary& b) {
  return std::abs(a.var_amplitude - b.var_amplitude) /
             std::max({1.0, a.var_amplitude, b.var_amplitude}) +
         std::abs(a.mean_cross_rate - b.mean_cross_rate) /
             std::max({1.0, a.mean_cross_rate, b.mean_cross_rate});
}

namespace {

std::int8_t clip8(double v) {
  return static_cast<std::int8_t>(std::clamp(std::lround(v), -128L, 127L));
}

}  // namespace

AudioData silence() { return AudioData{std::vector<std::int8_t>(kAudioSamples, 0)}; }

AudioData sine(double freq_hz, double amplitude, double phase_rad) {
  AudioData out;
  out.samples.resize(kAudioSamples);
  for (int i = 0; i < kAudioSamples; ++i) {
    const double t = static_cast<double>(i) / kAudioSampleRate;
    out.samples[static_cast<std::size_t>(i)] =
        clip8(amplitude * std::sin(2.0 * std::numbers::pi * freq_hz * t + phase_rad));
  }
  return out;
}

AudioData noise(std::uint64_t seed, double amplitude) {
  std::mt19937_64 rng(seed);
  AudioData out;
  out.samples.resize(kAudioSamples);
  for (auto& s : out.samples) {
    const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;  // [0,1)
    s = clip8((2.0 * u - 1.0) * amplitude);
  }
  return out;
}

AudioData token_waveform(std::size_t slot) {
  // Octave-spaced frequencies and amplitude steps of 1.7x keep every pair of slots further apart
  // than the merge rejection bound, not just the match tolerance.
  constexpr std::size_t kFreqSteps = 6;
  constexpr std::size_t kAmpSteps = 4;
  const std::size_t k = slot % kFreqSteps;
  const std::size_t j = (slot / kFreqSteps) % kAmpSteps;
  const double freq = 100.0 * std::pow(2.0, static_cast<double>(k));
  const double amp = 100.0 / std::pow(1.7, static_cast<double>(j));
  return sine(freq, amp);
}

namespace {

std::uint32_t le32(const char* p) {
  return static_cast<std::uint32_t>(static_cast<unsigned char>(p[0])) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 8) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 16) |
         (static_cast<std::uint32_t>(static_cast<unsigned char>(p[3])) << 24);
}

std::uint16_t le16(const char* p) {
  return static_cast<std::uint16_t>(static_cast<unsigned char>(p[0]) |
                                    (static_cast<unsigned char>(p[1]) << 8));
}

}  // namespace

AudioData decode_wav(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 4) != "RIFF" || bytes.substr(8, 4) != "WAVE") {
    throw Error(ErrorKind::Malformed, "not a RIFF/WAVE file");
  }
  std::size_t pos = 12;
  int bits = 0;
  bool have_fmt = false;
  while (pos + 8 <= bytes.size()) {
    const auto id = bytes.substr(pos, 4);
    const std::uint32_t size = le32(bytes.data() + pos + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw Error(ErrorKind::Malformed, "truncated WAV chunk");
    if (id == "fmt ") {
      if (size < 16) throw Error(ErrorKind::Malformed, "short fmt chunk");
      const auto format = le16(bytes.data() + body);
      const auto channels = le16(bytes.data() + body + 2);
      const auto rate = le32(bytes.data() + body + 4);
      bits = le16(bytes.data() + body + 14);
      if (format != 1 || channels != 1 || rate != kAudioSampleRate || (bits != 8 && bits != 16)) {
        throw Error(ErrorKind::Malformed, "WAV must be 16 kHz mono PCM, 8 or 16 bit");
      }
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw Error(ErrorKind::Malformed, "data chunk before fmt");
      AudioData out = silence();
      const std::size_t width = static_cast<std::size_t>(bits / 8);
      const std::size_t n = std::min<std::size_t>(size / width, kAudioSamples);
      for (std::size_t i = 0; i < n; ++i) {
        const char* p = bytes.data() + body + i * width;
        if (bits == 8) {
          out.samples[i] = static_cast<std::int8_t>(static_cast<int>(static_cast<unsigned char>(*p)) - 128);
        } else {
          const auto v = static_cast<std::int16_t>(le16(p));
          out.samples[i] = static_cast<std::int8_t>(v >> 8);
        }
      }
      return out;
    }
    pos = body + size + (size & 1u);
  }
  throw Error(ErrorKind::Malformed, "WAV without data chunk");
}

AudioData load_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  return decode_wav(bytes);
}

void save_wav(const AudioData& audio, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  auto put32 = [&](std::uint32_t v) {
    const char b[4] = {static_cast<char>(v), static_cast<char>(v >> 8), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 24)};
    out.write(b, 4);
  };
  auto put16 = [&](std::uint16_t v) {
    const char b[2] = {static_cast<char>(v), static_cast<char>(v >> 8)};
    out.write(b, 2);
  };
  const auto n = static_cast<std::uint32_t>(audio.samples.size());
  out.write("RIFF", 4);
  put32(36 + n);
  out.write("WAVEfmt ", 8);
  put32(16);
  put16(1);
  put16(1);
  put32(kAudioSampleRate);
  put32(kAudioSampleRate);
  put16(1);
  put16(8);
  out.write("data", 4);
  put32(n);
  for (auto s : audio.samples) {
    const char u = static_cast<char>(static_cast<unsigned char>(static_cast<int>(s) + 128));
    out.write(&u, 1);
  }
}

}  // namespace rtop
