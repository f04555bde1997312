#pragma once

// Pleasure-pain bookkeeping, happiness over future-trees, and action choice.

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rtop/image.hpp"
#include "rtop/memory_store.hpp"
#include "rtop/prediction.hpp"
#include "rtop/rng.hpp"

namespace rtop {

struct PleasurePainState {
  double hunger = 0.0;   // pain, 0..hunger_max
  double comfort = 0.0;  // comfort_min..comfort_max
  double c_hunger = 1.0;
  double c_comfort = 1.0;
  double hunger_max = 10.0;
  double comfort_min = -5.0;
  double comfort_max = 5.0;

  double p_net() const { return -c_hunger * hunger + c_comfort * comfort; }
  bool operator==(const PleasurePainState&) const = default;
};

enum class RewardKind { Feed, Comfort };

// Returns true when the result had to be clamped to the sense bounds.
bool apply_reward(PleasurePainState& s, RewardKind kind, double amount = 0.0);
// Hunger grows by one step, saturating.
void add_hunger(PleasurePainState& s, double amount);

struct AttentionState {
  AttentionTarget focus = AttentionTarget::Visual;
  FocusWindow visual_focus{};
  bool operator==(const AttentionState&) const = default;
};

struct KindWeights {
  double speech = 0.5;
  double focus = 0.3;
  double attention = 0.2;
};

struct ActionRepertoire {
  std::vector<SpeechAction> vocabulary;  // empty: random phone sequences
  bool speech_enabled = true;
  std::vector<FocusAction> focus_moves;
  bool attention_moves = true;
  KindWeights weights{};
  double epsilon = 0.1;
  // Exploration decays with the number of decisions already made under the current percept:
  // eps_eff = floor + (epsilon - floor) * tau / (tau + n). tau = 0 disables the decay.
  double epsilon_tau = 0.0;
  double epsilon_floor = 0.0;

  bool permits(const Payload& action) const;
  double effective_epsilon(std::size_t decisions_in_context) const;
};

// Sum over every node below the root of (net probability from the root) x (edge change).
double delta_p_net(const FutureNode& root);
// Same, over the part of the tree still ahead of the cursor.
double delta_p_net(const FutureTree& tree);
double happiness(const PredictionSet& set);

struct LearnedChoice {
  NodeId action;
  double expected = 0.0;     // edge change plus the discounted subtree up to the next same-kind action
  double probability = 0.0;  // branch probability at the cursor
  NodeId context;            // node at the cursor
};

// Best action child at any active cursor by expected change; ties go to the more probable branch,
// then the lower serial.
std::optional<LearnedChoice> select_action(const PredictionSet& set, const ActionRepertoire& rep,
                                           const MemoryStore& store);

// Random action payload drawn by kind weight, then uniformly within the kind. Options for which
// `tried` holds are skipped while untried ones of the same kind remain.
using TriedFn = std::function<bool(const Payload&)>;
Payload explore(const ActionRepertoire& rep, Rng& rng, AttentionTarget current_focus,
                const TriedFn& tried = {});
SpeechAction random_phones(Rng& rng);
// True when every enumerable option of the enabled kinds satisfies `known`. Random phone
// sequences (empty vocabulary) never count as uncovered.
bool repertoire_covered(const ActionRepertoire& rep, const TriedFn& known);
// Consonants last 100 ms, vowels 500 ms.
int speech_duration_ms(const SpeechAction& s);

enum class Channel { Visual, Audio };

struct ReflexConfig {
  double visual_mean_delta = 1.5;
  double audio_relative_var = 1.0;
};

// Attention shift toward `channel` when its summary change exceeds the threshold and it is not
// already in focus.
std::optional<AttentionTarget> background_reflex(Channel channel, double summary_delta,
                                                 AttentionTarget current, const ReflexConfig& cfg);

}  // namespace rtop
