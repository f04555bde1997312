#pragma once

// The agent loop: perception, foreground/background arbitration, learning, prediction, action
// choice, thought episodes, and the offline pass, one tick at a time.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "rtop/environment.hpp"
#include "rtop/generalization.hpp"
#include "rtop/innovation.hpp"
#include "rtop/motivation.hpp"

namespace rtop {

struct SessionConfig {
  std::uint64_t seed = 1;
  int tick_ms = 250;
  WindowConfig window{};
  MatchConfig match{};
  PredictionConfig prediction{};
  GeneralizationConfig generalization{};
  ReflexConfig reflex{};
  double c_hunger = 1.0;
  double c_comfort = 1.0;
  std::int64_t hunger_interval = 40;  // ticks per unit of hunger; 0 disables
  std::int64_t action_interval = 3;   // ticks between decisions; 0 disables actions
  ActionRepertoire repertoire{};
  std::size_t thought_budget = 8;
  bool thought_enabled = true;
  AttentionTarget initial_attention = AttentionTarget::Visual;
  FocusWindow initial_focus{0, 0, 0};  // side 0: largest square at the top-left of the frame
  bool global_groups = true;
};

void to_json(nlohmann::json& j, const SessionConfig& c);
void from_json(const nlohmann::json& j, SessionConfig& c);
SessionConfig load_config(const std::filesystem::path& path);

enum class EventKind : std::uint8_t {
  NodeCaptured = 0,
  MatchFound,
  FutureBuilt,
  ActionTaken,
  RewardApplied,
  GeneralizationReport,
  ProjectionFrame,
  AttentionShift,
};

std::string_view to_string(EventKind k);
std::optional<EventKind> parse_event_kind(std::string_view s);

struct AgentEvent {
  std::int64_t tick = 0;
  std::uint64_t seq = 0;
  EventKind kind = EventKind::NodeCaptured;
  nlohmann::json payload;

  // `<tick> <seq> <kind> <compact json>`
  std::string line() const;
  static AgentEvent parse(std::string_view line);
};

// Result of one `expect` assertion: the most probable stored image within three levels of any
// active cursor that the expected image matches.
struct ExpectResult {
  std::int64_t tick = 0;
  std::string source;
  std::optional<NodeId> node;
  double rho = 0.0;
};

struct StepOutcome {
  std::optional<NodeId> foreground;  // trace entry appended this tick
  std::optional<NodeId> action;
  std::optional<SpeechAction> speech;  // spoken this tick; the world may respond
  bool generalized = false;
};

class Agent {
 public:
  explicit Agent(SessionConfig cfg);

  const SessionConfig& config() const { return cfg_; }
  const MemoryStore& store() const { return store_; }
  MemoryStore& mutable_store() { return store_; }
  const ObservationLearner& learner() const { return learner_; }
  ObservationLearner& mutable_learner() { return learner_; }
  const PleasurePainState& pleasure() const { return pp_; }
  const AttentionState& attention() const { return attention_; }
  const PredictionSet& predictions() const { return predictions_; }
  const ProjectionCanvas& canvas() const { return canvas_; }
  const std::vector<AgentEvent>& events() const { return events_; }
  const std::vector<std::string>& action_log() const { return action_log_; }
  const std::vector<ExpectResult>& expectations() const { return expectations_; }
  std::int64_t next_tick() const { return next_tick_; }
  bool offline() const { return offline_; }
  double happiness() const { return rtop::happiness(predictions_); }

  StepOutcome step(const TickInput& in);

  // Out-of-band controls (service layer, forced passes).
  GeneralizationReport generalize();
  void set_attention(AttentionTarget target);
  void clear_events() { events_.clear(); }

  // Decision count under the given sensory context (used for exploration decay).
  std::size_t decisions_in_context(NodeId context) const;

  // Snapshot support.
  friend std::vector<std::uint8_t> save_snapshot(const Agent& agent);
  friend Agent load_snapshot(const std::vector<std::uint8_t>& bytes);
  // KB rebuilt from node_captured and generalization_report events only.
  friend Agent replay_events(const SessionConfig& cfg, const std::vector<AgentEvent>& events);

 private:
  void emit(std::int64_t tick, EventKind kind, nlohmann::json payload);
  void append_foreground(NodeId id, bool is_new, std::int64_t tick);
  void after_append(NodeId id, std::int64_t tick);
  NodeId capture(const Payload& payload, std::int64_t tick);
  void take_action(std::int64_t tick, StepOutcome& out);
  void apply_action(const Payload& action, std::int64_t tick);
  bool thought_ready() const;
  void check_expect(const std::string& source, const Raster& raster, std::int64_t tick);
  FocusWindow clamped_focus(const Raster& r, bool* clamped = nullptr) const;
  NodeId context_node() const;

  SessionConfig cfg_;
  MemoryStore store_;
  ObservationLearner learner_;
  PleasurePainState pp_;
  AttentionState attention_;
  Rng rng_;
  PredictionSet predictions_;
  std::vector<NodeId> recent_;
  ProjectionCanvas canvas_;
  std::vector<AgentEvent> events_;
  std::vector<std::string> action_log_;
  std::vector<ExpectResult> expectations_;
  std::map<NodeId, std::size_t> decisions_;
  std::int64_t next_tick_ = 0;
  std::int64_t last_feed_tick_ = 0;
  std::int64_t last_action_tick_ = -1'000'000;
  std::optional<ImageSummary> prev_visual_;
  AudioSummary prev_audio_{};
  std::optional<AudioData> pending_audio_;
  bool audio_fresh_ = false;  // pending window not yet captured
  double visual_delta_ = 0.0;
  double audio_delta_ = 0.0;
  AttentionTarget return_focus_ = AttentionTarget::Visual;
  NodeId background_anchor_;
  int frame_w_ = 0;
  int frame_h_ = 0;
  std::size_t thought_remaining_ = 0;
  bool thought_spent_ = false;
  bool offline_ = false;
  std::uint64_t seq_ = 0;
  std::optional<NodeId> appended_;
};

// Binary snapshot: `RTOPKB` magic, format version, then config, store, learner and agent state.
inline constexpr std::uint32_t kSnapshotVersion = 1;
std::vector<std::uint8_t> save_snapshot(const Agent& agent);
Agent load_snapshot(const std::vector<std::uint8_t>& bytes);
void write_snapshot(const Agent& agent, const std::filesystem::path& path);
Agent read_snapshot(const std::filesystem::path& path);

Agent replay_events(const SessionConfig& cfg, const std::vector<AgentEvent>& events);

}  // namespace rtop
