#pragma once

// Fixture builders shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <utility>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "rtop/agent.hpp"
#include "rtop/environment.hpp"
#include "rtop/image.hpp"
#include "rtop/innovation.hpp"
#include "rtop/matcher.hpp"
#include "rtop/session.hpp"

namespace rtop::testing {

struct Rect {
  int x, y, w, h;
  int level;  // lightness bucket 0..7
};

// Bucket center on the 8-bit scale, so encoding recovers `level` exactly.
inline std::uint8_t level_value(int level) { return static_cast<std::uint8_t>(level * 32 + 16); }

inline Raster scene(int side, int background, const std::vector<Rect>& rects) {
  Raster r(side, side, Hsl8{0, 0, level_value(background)});
  for (const auto& q : rects) {
    for (int y = q.y; y < q.y + q.h; ++y) {
      for (int x = q.x; x < q.x + q.w; ++x) r.at(x, y).l = level_value(q.level);
    }
  }
  return r;
}

// Moves `fraction` of the 2x2 source blocks one lightness bucket up or down.
inline Raster with_noise(const Raster& base, double fraction, std::uint64_t seed) {
  Raster r = base;
  std::mt19937_64 gen(seed);
  for (int by = 0; by < r.height; by += 2) {
    for (int bx = 0; bx < r.width; bx += 2) {
      const double u = static_cast<double>(gen() >> 11) * 0x1.0p-53;
      if (u >= fraction) continue;
      const int level = r.at(bx, by).l / 32;
      const int next = level == 0 ? 1 : level == 7 ? 6 : ((gen() & 1) ? level + 1 : level - 1);
      for (int y = by; y < by + 2 && y < r.height; ++y) {
        for (int x = bx; x < bx + 2 && x < r.width; ++x) r.at(x, y).l = level_value(next);
      }
    }
  }
  return r;
}

inline ImageData encode_full(const Raster& r) { return encode_image(r, FocusWindow{0, 0, r.width}); }

// Quiet configuration for scripted experiments: no hunger drift, no thought episodes.
inline SessionConfig quiet_config() {
  SessionConfig c;
  c.hunger_interval = 0;
  c.thought_enabled = false;
  c.action_interval = 0;
  return c;
}

// ---- relationship learning -------------------------------------------------

inline const std::vector<std::string>& relation_words() {
  static const std::vector<std::string> w = {"WHEEL", "FOOTBALL", "CAT", "APPLE"};
  return w;
}

inline Raster relation_image(std::size_t i) {
  switch (i) {
    case 0: return scene(64, 2, {{16, 16, 32, 32, 6}, {28, 28, 8, 8, 1}});   // wheel: ring and hub
    case 1: return scene(64, 3, {{8, 8, 24, 48, 7}, {40, 24, 16, 16, 0}});   // football
    case 2: return scene(64, 5, {{0, 32, 64, 32, 1}, {20, 8, 24, 16, 7}});   // cat
    default: return scene(64, 4, {{24, 0, 16, 64, 7}, {0, 44, 64, 20, 0}});  // apple
  }
}

struct RelationSetup {
  StimulusLibrary library;
  StimulusScript script;
  std::int64_t probe_tick = 0;  // tick at which the lone token starts
};

// Token, then its picture for six ticks, then blank; 17 ticks per cycle.
inline RelationSetup relation_setup(std::size_t repetitions, double noise) {
  RelationSetup s;
  for (std::size_t i = 0; i < relation_words().size(); ++i) {
    s.library.add_image(relation_words()[i], relation_image(i));
  }
  std::int64_t t = 1;
  std::uint64_t seed = 1;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    for (std::size_t i = 0; i < relation_words().size(); ++i) {
      const auto& word = relation_words()[i];
      const std::string variant = word + "_" + std::to_string(rep);
      s.library.add_image(variant, with_noise(relation_image(i), noise, seed++));
      s.script.events.push_back({t, PlayAudio{word, 1}});
      s.script.events.push_back({t + 2, PresentImage{variant, 7}});
      t += 17;
    }
  }
  s.probe_tick = t;
  s.script.events.push_back({t, PlayAudio{"WHEEL", 1}});
  s.script.end = t + 2;
  return s;
}

// ---- action conditioning ---------------------------------------------------

inline const std::vector<std::string>& vocabulary_words() {
  static const std::vector<std::string> w = {"A-p-l", "b-O-l", "k-A-r", "k-{-t",
                                             "h-e-l-o", "m-A-m-A", "p-A-p-A", "w-i-l"};
  return w;
}

// Full-overlap windows, so every decision's outcome is folded under the scene that preceded it.
inline SessionConfig conditioning_config() {
  SessionConfig c = quiet_config();
  c.action_interval = 3;
  c.window.stride = 1;
  c.repertoire.vocabulary.clear();
  for (const auto& w : vocabulary_words()) c.repertoire.vocabulary.push_back(SpeechAction::parse(w));
  c.repertoire.speech_enabled = true;
  c.repertoire.focus_moves.clear();
  c.repertoire.attention_moves = false;
  c.repertoire.epsilon = 0.5;
  c.repertoire.epsilon_tau = 5.0;
  c.repertoire.epsilon_floor = 0.0;
  return c;
}

// ---- merging -----------------------------------------------------------------

enum class Bushes { Left, Right, Both, None };

// House on grass with dark bushes on one side, the other, or both.
inline Raster bush_scene(Bushes b) {
  std::vector<Rect> rects = {{24, 12, 16, 20, 2}, {28, 22, 8, 10, 6}};
  if (b == Bushes::Left || b == Bushes::Both) rects.push_back({4, 36, 16, 24, 0});
  if (b == Bushes::Right || b == Bushes::Both) rects.push_back({44, 36, 16, 24, 0});
  return scene(64, 5, rects);
}

struct MergeSetup {
  StimulusLibrary library;
  StimulusScript script;
};

// 16-tick cycles: lead-in, the bush scene for two ticks, a tail picture, then twelve fillers.
// Odd cycles show the bush on the left, even cycles on the right.
inline MergeSetup merge_setup(std::size_t cycles) {
  MergeSetup s;
  s.library.add_image("lead", scene(64, 1, {{8, 8, 48, 16, 6}}));
  s.library.add_image("left", bush_scene(Bushes::Left));
  s.library.add_image("right", bush_scene(Bushes::Right));
  s.library.add_image("tail", scene(64, 6, {{0, 40, 64, 24, 1}}));
  s.library.add_image("filler", scene(64, 3, {{16, 0, 32, 64, 7}}));
  for (std::size_t c = 0; c < cycles; ++c) {
    const auto t = static_cast<std::int64_t>(c * 16);
    s.script.events.push_back({t, PresentImage{"lead", 1}});
    s.script.events.push_back({t + 1, PresentImage{c % 2 ? "right" : "left", 2}});
    s.script.events.push_back({t + 3, PresentImage{"tail", 1}});
    s.script.events.push_back({t + 4, PresentImage{"filler", 12}});
  }
  s.script.end = static_cast<std::int64_t>(cycles * 16 + 15);
  return s;
}

inline SessionConfig merge_config() {
  SessionConfig c = quiet_config();
  c.generalization.n_trace = 100000;
  return c;
}

// ---- grouping ----------------------------------------------------------------

inline const std::vector<std::string>& sentence_head() {
  static const std::vector<std::string> w = {"A_BOY", "NAMED"};
  return w;
}
inline const std::vector<std::string>& sentence_tail() {
  static const std::vector<std::string> w = {"WENT", "TO_A", "PARK"};
  return w;
}
inline const std::vector<std::string>& sentence_names() {
  static const std::vector<std::string> w = {"JOHN", "ANDY", "WILL"};
  return w;
}

// One sentence per 64 ticks: six tokens four ticks apart, then ten silent windows.
inline void add_sentence(StimulusScript& script, std::int64_t base, const std::string& name) {
  std::vector<std::string> words = sentence_head();
  words.push_back(name);
  words.insert(words.end(), sentence_tail().begin(), sentence_tail().end());
  for (std::size_t j = 0; j < words.size(); ++j) {
    script.events.push_back({base + static_cast<std::int64_t>(4 * j), PlayAudio{words[j], 1}});
  }
}

inline StimulusScript sentence_script(const std::vector<std::string>& names) {
  StimulusScript s;
  std::int64_t base = 0;
  for (const auto& n : names) {
    add_sentence(s, base, n);
    base += 64;
  }
  s.end = base - 1;
  return s;
}

inline SessionConfig grouping_config() {
  SessionConfig c = quiet_config();
  c.initial_attention = AttentionTarget::Audio;
  c.generalization.n_trace = 100000;
  return c;
}

// Stored audio node whose waveform is the library's rendering of `token`.
inline std::optional<NodeId> audio_node(const MemoryStore& store, StimulusLibrary& library,
                                        const std::string& token) {
  const AudioData probe = library.audio(token);
  for (const auto& [id, n] : store.nodes()) {
    if (const auto* a = std::get_if<AudioData>(&n.payload); a && *a == probe) return id;
  }
  return std::nullopt;
}

// ---- projection ----------------------------------------------------------------

// Highest net probability of each image node within `depth` levels of any live cursor.
inline std::map<NodeId, double> image_ranking(const PredictionSet& set, std::size_t depth) {
  std::map<NodeId, double> best;
  std::function<void(const FutureNode&, double, std::size_t)> walk =
      [&](const FutureNode& n, double rho, std::size_t left) {
        if (left == 0) return;
        for (const auto& c : n.children) {
          const double r = rho * c.probability;
          if (c.id.type == NodeType::Image) best[c.id] = std::max(best[c.id], r);
          walk(c, r, left - 1);
        }
      };
  for (const auto& t : set.active) {
    if (!t.violated) walk(t.at_cursor(), 1.0, depth);
  }
  return best;
}

// ---- brute-force oracle ----------------------------------------------------------

// Random path multiset over a small alphabet; deltas are whole multiples of 1e-9.
struct RandomKb {
  std::vector<NodeId> alphabet;
  std::vector<std::vector<NodeId>> paths;
  std::vector<std::vector<std::int64_t>> deltas;  // nano-units, deltas[p][0] unused
};

inline RandomKb random_kb(std::uint64_t seed, const std::vector<NodeId>& alphabet) {
  std::mt19937_64 gen(seed);
  RandomKb kb;
  kb.alphabet = alphabet;
  const std::size_t n_paths = 1 + gen() % 50;
  const std::size_t roots = 1 + gen() % 3;
  for (std::size_t p = 0; p < n_paths; ++p) {
    const std::size_t len = 2 + gen() % 7;
    std::vector<NodeId> nodes{alphabet[gen() % roots]};
    std::vector<std::int64_t> d{0};
    for (std::size_t i = 1; i < len; ++i) {
      // Narrow branching near the root so that prefixes are shared.
      const std::size_t width = std::min<std::size_t>(alphabet.size(), 2 + i);
      nodes.push_back(alphabet[gen() % width]);
      d.push_back(static_cast<std::int64_t>(gen() % 4001) * 250'000 - 500'000'000);
    }
    kb.paths.push_back(std::move(nodes));
    kb.deltas.push_back(std::move(d));
  }
  return kb;
}

// Net probability and mean delta of every node reachable by a prefix, computed from the multiset
// alone: at each step the branch probability is (paths through the child) / (paths continuing
// past the parent).
struct OracleNode {
  double rho = 0.0;
  double delta = 0.0;
};

inline std::map<std::vector<NodeId>, OracleNode> oracle_prefixes(const RandomKb& kb,
                                                                 const std::vector<NodeId>& start) {
  std::map<std::vector<NodeId>, OracleNode> out;
  auto through = [&](const std::vector<NodeId>& prefix, bool continuing, std::int64_t* sum) {
    std::uint64_t n = 0;
    for (std::size_t p = 0; p < kb.paths.size(); ++p) {
      const auto& path = kb.paths[p];
      if (path.size() < prefix.size() + (continuing ? 1 : 0)) continue;
      if (!std::equal(prefix.begin(), prefix.end(), path.begin())) continue;
      ++n;
      if (sum) *sum += kb.deltas[p][prefix.size() - 1];
    }
    return n;
  };
  std::function<void(const std::vector<NodeId>&, double)> expand = [&](const std::vector<NodeId>& prefix,
                                                                       double rho) {
    const std::uint64_t parent = through(prefix, true, nullptr);
    if (parent == 0) return;
    for (const auto& next : kb.alphabet) {
      auto child = prefix;
      child.push_back(next);
      std::int64_t sum = 0;
      const std::uint64_t n = through(child, false, &sum);
      if (n == 0) continue;
      const double r = rho * (static_cast<double>(n) / static_cast<double>(parent));
      const double mean = (static_cast<double>(sum) / 1e9) / static_cast<double>(n);
      out[child] = {r, mean};
      expand(child, r);
    }
  };
  expand(start, 1.0);
  return out;
}

// Sum of rho * delta over the prefixes, in depth-first order of ascending node id.
inline double oracle_delta_p_net(const std::map<std::vector<NodeId>, OracleNode>& prefixes,
                                 const std::vector<NodeId>& start) {
  std::function<double(const std::vector<NodeId>&)> sum_below = [&](const std::vector<NodeId>& p) {
    double s = 0.0;
    auto it = prefixes.upper_bound(p);
    for (; it != prefixes.end(); ++it) {
      const auto& k = it->first;
      if (k.size() <= p.size() || !std::equal(p.begin(), p.end(), k.begin())) break;
      if (k.size() != p.size() + 1) continue;
      s += it->second.rho * it->second.delta;
      s += sum_below(k);
    }
    return s;
  };
  return sum_below(start);
}

}  // namespace rtop::testing
