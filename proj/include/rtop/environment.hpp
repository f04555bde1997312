#pragma once

// Scripted world: stimulus library, script parsing, the simulation clock, and responses to the
// agent's speech.

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rtop/image.hpp"
#include "rtop/node.hpp"

namespace rtop {

struct PresentImage {
  std::string source;
  std::int64_t hold = 0;  // ticks; 0 keeps the image until the next presentation
};
struct PlayAudio {
  std::string token;
  int repeat = 1;
};
struct SetComfort {
  double delta = 0.0;
};
struct Feed {};
struct Expect {
  std::string source;
};

using ScriptEvent = std::variant<PresentImage, PlayAudio, SetComfort, Feed, Expect>;

struct TimedEvent {
  std::int64_t at = 0;
  ScriptEvent event;
};

// Response to a spoken phone sequence; `speech` empty marks the default rule.
struct SpeechRule {
  std::string speech;
  double comfort = 0.0;
  std::string reply;
};

struct StimulusScript {
  std::vector<TimedEvent> events;  // sorted by tick (stable)
  std::vector<SpeechRule> rules;
  std::optional<std::int64_t> end;

  // Last tick the script needs: explicit `end`, else the last event plus its duration.
  std::int64_t end_tick() const;
  const SpeechRule* rule_for(const std::string& speech) const;
};

// Lines: `at=<tick> present_image <id> [hold=N]`, `at=<tick> play_audio <token> [repeat=N]`,
// `at=<tick> set_comfort <d>`, `at=<tick> feed`, `at=<tick> expect <id>`,
// `rule speech=<phones>|default [comfort=<d>] [reply=<token>]`, `end <tick>`. `#` starts a comment.
StimulusScript parse_script(std::string_view text);
StimulusScript load_script(const std::filesystem::path& path);
std::string format_script(const StimulusScript& script);

// Named rasters and audio tokens. Tokens without a file get a synthetic waveform whose slot is
// assigned in order of first use, unless the manifest pins one.
class StimulusLibrary {
 public:
  void add_image(const std::string& name, Raster raster);
  void add_audio(const std::string& name, AudioData audio);
  void pin_slot(const std::string& token, std::size_t slot);

  bool has_image(const std::string& name) const { return images_.count(name) != 0; }
  const Raster& image(const std::string& name) const;
  // File-backed or pinned token; otherwise allocates the next free synthetic slot.
  const AudioData& audio(const std::string& token);
  // Registers every token and image name the script uses, in order, so slots are stable.
  void prepare(const StimulusScript& script);

  std::vector<std::string> image_names() const;
  std::vector<std::string> audio_names() const;

  // Manifest `manifest.json`: {"images": {"name": "file.png"}, "audio": {"NAME": "file.wav" |
  // {"slot": k}}}. Paths are relative to the directory.
  static StimulusLibrary load(const std::filesystem::path& dir);

 private:
  std::map<std::string, Raster> images_;
  std::map<std::string, AudioData> audio_;
  std::map<std::string, std::size_t> slots_;
  std::size_t next_slot_ = 0;
};

struct SimClock {
  std::int64_t tick = 0;
  int tick_ms = 250;
  bool operator==(const SimClock&) const = default;
};

// Everything the agent receives for one tick.
struct TickInput {
  std::int64_t tick = 0;
  const Raster* visual = nullptr;       // current scene (blank when nothing is presented)
  std::optional<AudioData> audio;       // a new 800 ms window started this tick
  std::optional<std::string> audio_token;
  std::vector<double> comfort_deltas;   // scripted or rule-driven
  bool feed = false;
  std::vector<std::pair<std::string, const Raster*>> expects;  // library images to look for
};

class World {
 public:
  World(StimulusScript script, StimulusLibrary library);

  const SimClock& clock() const { return clock_; }
  const StimulusScript& script() const { return script_; }
  StimulusLibrary& library() { return library_; }

  // Applies the events due at the current tick and advances the clock.
  TickInput step();

  // Queues the rule response to a spoken phone sequence for the next tick. Returns the rule that
  // fired, if any.
  std::optional<SpeechRule> echo_speech(const SpeechAction& action);

  // Out-of-band stimuli (service layer), applied at the next step.
  void inject_image(Raster raster, std::int64_t hold = 0);
  void inject_audio(AudioData audio, std::string label);
  void inject_comfort(double delta);
  void inject_feed();

  bool finished() const { return clock_.tick > script_.end_tick(); }
  std::string current_image() const { return current_name_; }

 private:
  StimulusScript script_;
  StimulusLibrary library_;
  SimClock clock_;
  std::size_t next_event_ = 0;
  std::string current_name_;
  std::optional<Raster> current_;
  std::int64_t current_until_ = -1;  // exclusive; -1 for no limit
  std::int64_t last_audio_tick_ = -1000;
  std::deque<std::pair<std::int64_t, std::string>> audio_queue_;  // (onset tick, token)
  std::map<std::string, AudioData> injected_audio_;
  std::size_t injected_count_ = 0;
  std::vector<double> pending_comfort_;
  bool pending_feed_ = false;
  Raster blank_;
};

// Gap between the onsets of consecutive audio windows, in ticks.
inline constexpr std::int64_t kAudioWindowTicks = 4;

}  // namespace rtop
