#include "rtop/motivation.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace rtop {

bool apply_reward(PleasurePainState& s, RewardKind kind, double amount) {
  if (kind == RewardKind::Feed) {
    s.hunger = 0.0;
    return false;
  }
  const double raw = s.comfort + amount;
  s.comfort = std::clamp(raw, s.comfort_min, s.comfort_max);
  return s.comfort != raw;
}

void add_hunger(PleasurePainState& s, double amount) {
  s.hunger = std::clamp(s.hunger + amount, 0.0, s.hunger_max);
}

bool ActionRepertoire::permits(const Payload& action) const {
  if (const auto* sp = std::get_if<SpeechAction>(&action)) {
    if (!speech_enabled) return false;
    return vocabulary.empty() ||
           std::find(vocabulary.begin(), vocabulary.end(), *sp) != vocabulary.end();
  }
  if (const auto* f = std::get_if<FocusAction>(&action)) {
    return std::find(focus_moves.begin(), focus_moves.end(), *f) != focus_moves.end();
  }
  if (const auto* f = std::get_if<FocusMergedAction>(&action)) {
    return std::find(focus_moves.begin(), focus_moves.end(), f->rounded()) != focus_moves.end();
  }
  if (const auto* a = std::get_if<AttentionAction>(&action)) {
    return attention_moves && a->target != AttentionTarget::Thought;
  }
  return false;
}

double ActionRepertoire::effective_epsilon(std::size_t decisions_in_context) const {
  if (epsilon_tau <= 0.0) return epsilon;
  return epsilon_floor + (epsilon - epsilon_floor) * epsilon_tau /
                             (epsilon_tau + static_cast<double>(decisions_in_context));
}

namespace {

double accumulate(const FutureNode& node, double rho) {
  double sum = 0.0;
  for (const auto& c : node.children) {
    const double r = rho * c.probability;
    sum += r * c.delta_p;
    sum += accumulate(c, r);
  }
  return sum;
}

// Expected change below `node`, stopping at the next action of type `stop`.
double accumulate_until(const FutureNode& node, double rho, NodeType stop) {
  double sum = 0.0;
  for (const auto& c : node.children) {
    if (c.id.type == stop) continue;
    const double r = rho * c.probability;
    sum += r * c.delta_p;
    sum += accumulate_until(c, r, stop);
  }
  return sum;
}

}  // namespace

double delta_p_net(const FutureNode& root) { return accumulate(root, 1.0); }

double delta_p_net(const FutureTree& tree) { return accumulate(tree.at_cursor(), 1.0); }

double happiness(const PredictionSet& set) {
  double h = 0.0;
  for (const auto& t : set.active) h += delta_p_net(t);
  return h;
}

std::optional<LearnedChoice> select_action(const PredictionSet& set, const ActionRepertoire& rep,
                                           const MemoryStore& store) {
  std::optional<LearnedChoice> best;
  for (const auto& t : set.active) {
    if (t.violated) continue;
    const FutureNode& cur = t.at_cursor();
    for (const auto& c : cur.children) {
      if (!is_action(c.id.type)) continue;
      const auto* node = store.find(c.id);
      if (!node || !rep.permits(node->payload)) continue;
      LearnedChoice cand{c.id, c.delta_p + accumulate_until(c, 1.0, c.id.type), c.probability,
                         cur.id};
      if (!best) {
        best = cand;
        continue;
      }
      if (cand.expected != best->expected) {
        if (cand.expected > best->expected) best = cand;
      } else if (cand.probability != best->probability) {
        if (cand.probability > best->probability) best = cand;
      } else if (cand.action.serial < best->action.serial) {
        best = cand;
      }
    }
  }
  return best;
}

namespace {

constexpr std::array<const char*, 12> kConsonants = {"p", "t", "k", "b", "d", "g",
                                                     "m", "n", "s", "l", "r", "w"};
constexpr std::array<const char*, 6> kVowels = {"A", "i", "u", "e", "o", "{"};

// Geometric skew: earlier entries are more likely.
std::size_t skewed(Rng& rng, std::size_t n) {
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (rng.uniform() < 0.35) return i;
  }
  return n - 1;
}

bool is_vowel(const std::string& p) {
  return std::find(kVowels.begin(), kVowels.end(), p) != kVowels.end();
}

}  // namespace

SpeechAction random_phones(Rng& rng) {
  SpeechAction s;
  const std::size_t syllables = 1 + rng.below(3);
  for (std::size_t i = 0; i < syllables; ++i) {
    s.phones.emplace_back(kConsonants[skewed(rng, kConsonants.size())]);
    s.phones.emplace_back(kVowels[skewed(rng, kVowels.size())]);
  }
  return s;
}

int speech_duration_ms(const SpeechAction& s) {
  int ms = 0;
  for (const auto& p : s.phones) ms += is_vowel(p) ? 500 : 100;
  return ms;
}

namespace {

template <class T>
Payload pick(const std::vector<T>& options, Rng& rng, const TriedFn& tried) {
  std::vector<const T*> fresh;
  if (tried) {
    for (const auto& o : options) {
      if (!tried(Payload{o})) fresh.push_back(&o);
    }
  }
  if (fresh.empty()) return options[rng.below(options.size())];
  return *fresh[rng.below(fresh.size())];
}

}  // namespace

Payload explore(const ActionRepertoire& rep, Rng& rng, AttentionTarget current_focus,
                const TriedFn& tried) {
  const bool speech = rep.speech_enabled && rep.weights.speech > 0.0;
  const bool focus = !rep.focus_moves.empty() && rep.weights.focus > 0.0;
  const bool attention = rep.attention_moves && rep.weights.attention > 0.0;
  const double ws = speech ? rep.weights.speech : 0.0;
  const double wf = focus ? rep.weights.focus : 0.0;
  const double wa = attention ? rep.weights.attention : 0.0;
  const double total = ws + wf + wa;
  if (total <= 0.0) return AttentionAction{current_focus};
  const double u = rng.uniform() * total;
  if (u < ws) {
    if (rep.vocabulary.empty()) return random_phones(rng);
    return pick(rep.vocabulary, rng, tried);
  }
  if (u < ws + wf) return pick(rep.focus_moves, rng, tried);
  static const std::vector<AttentionAction> kTargets = {{AttentionTarget::Visual},
                                                        {AttentionTarget::Audio}};
  return pick(kTargets, rng, tried);
}

bool repertoire_covered(const ActionRepertoire& rep, const TriedFn& known) {
  auto all = [&](const auto& options) {
    return std::all_of(options.begin(), options.end(),
                       [&](const auto& o) { return known(Payload{o}); });
  };
  if (rep.speech_enabled && rep.weights.speech > 0.0 && !all(rep.vocabulary)) return false;
  if (rep.weights.focus > 0.0 && !all(rep.focus_moves)) return false;
  if (rep.attention_moves && rep.weights.attention > 0.0) {
    const std::vector<AttentionAction> targets = {{AttentionTarget::Visual}, {AttentionTarget::Audio}};
    if (!all(targets)) return false;
  }
  return true;
}

std::optional<AttentionTarget> background_reflex(Channel channel, double summary_delta,
                                                 AttentionTarget current, const ReflexConfig& cfg) {
  const AttentionTarget target =
      channel == Channel::Visual ? AttentionTarget::Visual : AttentionTarget::Audio;
  if (target == current) return std::nullopt;
  const double threshold =
      channel == Channel::Visual ? cfg.visual_mean_delta : cfg.audio_relative_var;
  if (summary_delta > threshold) return target;
  return std::nullopt;
}

}  // namespace rtop
