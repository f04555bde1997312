#pragma once

// Audio nodes are 800 ms of signed 8-bit mono PCM at 16 kHz. Indexing and matching both work on
// summary values only.

#include <cstdint>
#include <filesystem>
#include <string_view>

#include "rtop/node.hpp"

namespace rtop {

void validate(const AudioData& audio);

AudioSummary audio_summary(const AudioData& audio);

// Relative tolerances, resolved against the larger magnitude of the two values compared.
struct AudioTolerance {
  double var_rel = 0.15;
  double cross_rel = 0.10;
};

AudioSummary absolute_tolerance(const AudioSummary& a, const AudioSummary& b,
                                const AudioTolerance& rel);

bool match_audio(const AudioData& probe, const AudioData& candidate, const AudioSummary& tol);
bool match_audio(const AudioData& probe, const AudioData& candidate, const AudioTolerance& rel);
bool match_audio_merged(const AudioSummary& probe, const AudioMergedData& merged);

// Normalized deviation used to rank audio candidates.
double audio_distance(const AudioSummary& a, const AudioSummary& b);

AudioData silence();
AudioData sine(double freq_hz, double amplitude, double phase_rad = 0.0);
AudioData noise(std::uint64_t seed, double amplitude);
// Synthetic word stand-in. Each of the 24 slots maps to a distinct (frequency, amplitude) pair;
// tokens in different slots neither match nor merge under the default tolerances.
AudioData token_waveform(std::size_t slot);

AudioData load_wav(const std::filesystem::path& path);
AudioData decode_wav(std::string_view bytes);
void save_wav(const AudioData& audio, const std::filesystem::path& path);

}  // namespace rtop
