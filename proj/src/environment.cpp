#include "rtop/environment.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include "json.hpp"

#include "rtop/audio.hpp"
#include "rtop/error.hpp"

namespace rtop {

namespace {

inline constexpr std::size_t kTokenSlots = 24;
inline constexpr int kDefaultBlankSide = 64;

std::vector<std::string_view> split_words(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

[[noreturn]] void parse_error(std::size_t line_no, const std::string& msg) {
  throw Error(ErrorKind::Parse, fmt::format("script line {}: {}", line_no, msg));
}

std::int64_t parse_int(std::string_view s, std::size_t line_no) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    parse_error(line_no, fmt::format("expected integer, got '{}'", s));
  }
  return v;
}

double parse_double(std::string_view s, std::size_t line_no) {
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) {
    parse_error(line_no, fmt::format("expected number, got '{}'", s));
  }
  return v;
}

// `key=value` split; nullopt when the word has no '='.
std::optional<std::pair<std::string_view, std::string_view>> key_value(std::string_view w) {
  const auto eq = w.find('=');
  if (eq == std::string_view::npos) return std::nullopt;
  return std::pair{w.substr(0, eq), w.substr(eq + 1)};
}

std::int64_t event_duration(const ScriptEvent& e) {
  if (const auto* p = std::get_if<PresentImage>(&e)) return std::max<std::int64_t>(p->hold, 1);
  if (const auto* a = std::get_if<PlayAudio>(&e)) return kAudioWindowTicks * a->repeat;
  return 1;
}

std::string format_number(double v) {
  return fmt::format("{}{}", v > 0 ? "+" : "", v);
}

}  // namespace

std::int64_t StimulusScript::end_tick() const {
  if (end) return *end;
  std::int64_t last = -1;
  for (const auto& e : events) last = std::max(last, e.at + event_duration(e.event) - 1);
  return last;
}

const SpeechRule* StimulusScript::rule_for(const std::string& speech) const {
  const SpeechRule* fallback = nullptr;
  for (const auto& r : rules) {
    if (r.speech == speech) return &r;
    if (r.speech.empty() && fallback == nullptr) fallback = &r;
  }
  return fallback;
}

StimulusScript parse_script(std::string_view text) {
  StimulusScript script;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto words = split_words(line);
    if (words.empty()) continue;

    if (words[0] == "end" || words[0].starts_with("end=")) {
      if (words[0] == "end") {
        if (words.size() != 2) parse_error(line_no, "end takes one tick");
        script.end = parse_int(words[1], line_no);
      } else {
        script.end = parse_int(words[0].substr(4), line_no);
      }
      continue;
    }

    if (words[0] == "rule") {
      SpeechRule rule;
      bool have_speech = false;
      for (std::size_t i = 1; i < words.size(); ++i) {
        if (words[i] == "default") {
          have_speech = true;
          continue;
        }
        const auto kv = key_value(words[i]);
        if (!kv) parse_error(line_no, fmt::format("unexpected '{}'", words[i]));
        const auto [k, v] = *kv;
        if (k == "speech") {
          rule.speech = v == "default" ? "" : SpeechAction::parse(v).text();
          have_speech = true;
        } else if (k == "comfort") {
          rule.comfort = parse_double(v, line_no);
        } else if (k == "reply") {
          rule.reply = std::string(v);
        } else {
          parse_error(line_no, fmt::format("unknown rule field '{}'", k));
        }
      }
      if (!have_speech) parse_error(line_no, "rule needs speech=<phones> or default");
      script.rules.push_back(std::move(rule));
      continue;
    }

    const auto at = key_value(words[0]);
    if (!at || at->first != "at") parse_error(line_no, "expected at=<tick>");
    if (words.size() < 2) parse_error(line_no, "missing event");
    TimedEvent ev;
    ev.at = parse_int(at->second, line_no);
    if (ev.at < 0) parse_error(line_no, "negative tick");
    const auto kind = words[1];
    auto arg = [&](std::size_t i) -> std::string_view {
      if (words.size() <= i) parse_error(line_no, fmt::format("{} needs an argument", kind));
      return words[i];
    };
    auto options = [&](std::size_t from, auto&& handle) {
      for (std::size_t i = from; i < words.size(); ++i) {
        const auto kv = key_value(words[i]);
        if (!kv || !handle(kv->first, kv->second)) {
          parse_error(line_no, fmt::format("unexpected '{}'", words[i]));
        }
      }
    };

    if (kind == "present_image") {
      PresentImage e{std::string(arg(2)), 0};
      options(3, [&](std::string_view k, std::string_view v) {
        if (k != "hold") return false;
        e.hold = parse_int(v, line_no);
        return e.hold >= 0;
      });
      ev.event = std::move(e);
    } else if (kind == "play_audio") {
      PlayAudio e{std::string(arg(2)), 1};
      options(3, [&](std::string_view k, std::string_view v) {
        if (k != "repeat") return false;
        e.repeat = static_cast<int>(parse_int(v, line_no));
        return e.repeat >= 1;
      });
      ev.event = std::move(e);
    } else if (kind == "set_comfort") {
      ev.event = SetComfort{parse_double(arg(2), line_no)};
      options(3, [](auto, auto) { return false; });
    } else if (kind == "feed") {
      ev.event = Feed{};
      options(2, [](auto, auto) { return false; });
    } else if (kind == "expect") {
      ev.event = Expect{std::string(arg(2))};
      options(3, [](auto, auto) { return false; });
    } else {
      parse_error(line_no, fmt::format("unknown event '{}'", kind));
    }
    script.events.push_back(std::move(ev));
  }
  std::stable_sort(script.events.begin(), script.events.end(),
                   [](const TimedEvent& a, const TimedEvent& b) { return a.at < b.at; });
  return script;
}

StimulusScript load_script(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_script(ss.str());
}

std::string format_script(const StimulusScript& script) {
  std::string out;
  for (const auto& r : script.rules) {
    out += r.speech.empty() ? "rule default" : "rule speech=" + r.speech;
    if (r.comfort != 0.0) out += " comfort=" + format_number(r.comfort);
    if (!r.reply.empty()) out += " reply=" + r.reply;
    out += '\n';
  }
  for (const auto& e : script.events) {
    out += fmt::format("at={} ", e.at);
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, PresentImage>) {
            out += "present_image " + v.source;
            if (v.hold != 0) out += fmt::format(" hold={}", v.hold);
          } else if constexpr (std::is_same_v<T, PlayAudio>) {
            out += "play_audio " + v.token;
            if (v.repeat != 1) out += fmt::format(" repeat={}", v.repeat);
          } else if constexpr (std::is_same_v<T, SetComfort>) {
            out += "set_comfort " + format_number(v.delta);
          } else if constexpr (std::is_same_v<T, Feed>) {
            out += "feed";
          } else {
            out += "expect " + v.source;
          }
        },
        e.event);
    out += '\n';
  }
  if (script.end) out += fmt::format("end {}\n", *script.end);
  return out;
}

// ---- library ----------------------------------------------------------------

void StimulusLibrary::add_image(const std::string& name, Raster raster) {
  if (raster.width <= 0 || raster.height <= 0) {
    throw Error(ErrorKind::Malformed, "empty raster for image " + name);
  }
  images_[name] = std::move(raster);
}

void StimulusLibrary::add_audio(const std::string& name, AudioData audio) {
  validate(audio);
  audio_[name] = std::move(audio);
}

void StimulusLibrary::pin_slot(const std::string& token, std::size_t slot) {
  if (slot >= kTokenSlots) {
    throw Error(ErrorKind::OutOfBounds, fmt::format("token slot {} out of range", slot));
  }
  slots_[token] = slot;
  audio_.erase(token);
}

const Raster& StimulusLibrary::image(const std::string& name) const {
  const auto it = images_.find(name);
  if (it == images_.end()) throw Error(ErrorKind::NotFound, "no image named " + name);
  return it->second;
}

const AudioData& StimulusLibrary::audio(const std::string& token) {
  if (const auto it = audio_.find(token); it != audio_.end()) return it->second;
  auto slot_it = slots_.find(token);
  if (slot_it == slots_.end()) {
    auto taken = [&](std::size_t s) {
      return std::any_of(slots_.begin(), slots_.end(), [&](const auto& kv) { return kv.second == s; });
    };
    while (next_slot_ < kTokenSlots && taken(next_slot_)) ++next_slot_;
    if (next_slot_ >= kTokenSlots) {
      throw Error(ErrorKind::OutOfBounds, "no free synthetic token slot for " + token);
    }
    slot_it = slots_.emplace(token, next_slot_++).first;
  }
  return audio_.emplace(token, token_waveform(slot_it->second)).first->second;
}

void StimulusLibrary::prepare(const StimulusScript& script) {
  for (const auto& e : script.events) {
    if (const auto* p = std::get_if<PresentImage>(&e.event)) image(p->source);
    if (const auto* x = std::get_if<Expect>(&e.event)) image(x->source);
    if (const auto* a = std::get_if<PlayAudio>(&e.event)) audio(a->token);
  }
  for (const auto& r : script.rules) {
    if (!r.reply.empty()) audio(r.reply);
  }
}

std::vector<std::string> StimulusLibrary::image_names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : images_) out.push_back(k);
  return out;
}

std::vector<std::string> StimulusLibrary::audio_names() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : audio_) out.push_back(k);
  for (const auto& [k, v] : slots_) {
    if (!audio_.count(k)) out.push_back(k);
  }
  std::sort(out.begin(), out.end());
  return out;
}

StimulusLibrary StimulusLibrary::load(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  StimulusLibrary lib;
  const auto manifest = dir / "manifest.json";
  if (!fs::exists(manifest)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      const auto ext = f.extension().string();
      if (ext == ".png" || ext == ".ppm") lib.add_image(f.stem().string(), load_raster(f));
      if (ext == ".wav") lib.add_audio(f.stem().string(), load_wav(f));
    }
    return lib;
  }

  std::ifstream in(manifest);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, "manifest: " + std::string(e.what()));
  }
  if (j.contains("images")) {
    for (const auto& [name, file] : j["images"].items()) {
      lib.add_image(name, load_raster(dir / file.get<std::string>()));
    }
  }
  if (j.contains("audio")) {
    for (const auto& [name, spec] : j["audio"].items()) {
      if (spec.is_string()) {
        lib.add_audio(name, load_wav(dir / spec.get<std::string>()));
      } else if (spec.contains("file")) {
        lib.add_audio(name, load_wav(dir / spec["file"].get<std::string>()));
      } else if (spec.contains("slot")) {
        lib.pin_slot(name, spec["slot"].get<std::size_t>());
      } else if (spec.contains("sine")) {
        const auto& s = spec["sine"];
        lib.add_audio(name, sine(s.value("freq", 440.0), s.value("amp", 60.0)));
      } else if (spec.contains("noise")) {
        const auto& s = spec["noise"];
        lib.add_audio(name, noise(s.value("seed", std::uint64_t{1}), s.value("amp", 30.0)));
      } else {
        throw Error(ErrorKind::Parse, "manifest: unrecognized audio entry " + name);
      }
    }
  }
  return lib;
}

// ---- world ------------------------------------------------------------------

World::World(StimulusScript script, StimulusLibrary library)
    : script_(std::move(script)),
      library_(std::move(library)),
      blank_(kDefaultBlankSide, kDefaultBlankSide) {
  library_.prepare(script_);
}

TickInput World::step() {
  const std::int64_t t = clock_.tick;
  TickInput in;
  in.tick = t;
  in.comfort_deltas = std::move(pending_comfort_);
  pending_comfort_.clear();
  in.feed = std::exchange(pending_feed_, false);

  if (current_ && current_until_ >= 0 && t >= current_until_) {
    blank_ = Raster(current_->width, current_->height);
    current_.reset();
    current_name_.clear();
  }

  for (; next_event_ < script_.events.size() && script_.events[next_event_].at <= t; ++next_event_) {
    const auto& ev = script_.events[next_event_];
    std::visit(
        [&](const auto& v) {
          using T = std::decay_t<decltype(v)>;
          if constexpr (std::is_same_v<T, PresentImage>) {
            current_ = library_.image(v.source);
            current_name_ = v.source;
            current_until_ = v.hold > 0 ? ev.at + v.hold : -1;
          } else if constexpr (std::is_same_v<T, PlayAudio>) {
            for (int i = 0; i < v.repeat; ++i) {
              audio_queue_.emplace_back(ev.at + kAudioWindowTicks * i, v.token);
            }
          } else if constexpr (std::is_same_v<T, SetComfort>) {
            in.comfort_deltas.push_back(v.delta);
          } else if constexpr (std::is_same_v<T, Feed>) {
            in.feed = true;
          } else {
            in.expects.emplace_back(v.source, &library_.image(v.source));
          }
        },
        ev.event);
  }
  std::stable_sort(audio_queue_.begin(), audio_queue_.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });

  if (current_ && current_until_ >= 0 && t >= current_until_) {
    blank_ = Raster(current_->width, current_->height);
    current_.reset();
    current_name_.clear();
  }
  in.visual = current_ ? &*current_ : &blank_;

  if (!audio_queue_.empty() && audio_queue_.front().first <= t) {
    const auto token = audio_queue_.front().second;
    audio_queue_.pop_front();
    if (const auto it = injected_audio_.find(token); it != injected_audio_.end()) {
      in.audio = it->second;
      injected_audio_.erase(it);
    } else {
      in.audio = library_.audio(token);
    }
    in.audio_token = token;
    last_audio_tick_ = t;
  } else if (t - last_audio_tick_ >= kAudioWindowTicks) {
    in.audio = silence();
    last_audio_tick_ = t;
  }

  ++clock_.tick;
  return in;
}

std::optional<SpeechRule> World::echo_speech(const SpeechAction& action) {
  const auto* rule = script_.rule_for(action.text());
  if (rule == nullptr) return std::nullopt;
  if (rule->comfort != 0.0) pending_comfort_.push_back(rule->comfort);
  if (!rule->reply.empty()) {
    audio_queue_.emplace_front(clock_.tick, rule->reply);
  }
  return *rule;
}

void World::inject_image(Raster raster, std::int64_t hold) {
  current_ = std::move(raster);
  current_name_ = "(injected)";
  current_until_ = hold > 0 ? clock_.tick + hold : -1;
}

void World::inject_audio(AudioData audio, std::string label) {
  validate(audio);
  const auto key = fmt::format("{}#{}", label, injected_count_++);
  injected_audio_[key] = std::move(audio);
  audio_queue_.emplace_front(clock_.tick, key);
}

void World::inject_comfort(double delta) { pending_comfort_.push_back(delta); }

void World::inject_feed() { pending_feed_ = true; }

}  // namespace rtop
