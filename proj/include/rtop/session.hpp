#pragma once

// Scripted sessions and read-only views of a knowledge base.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rtop/agent.hpp"
#include "rtop/environment.hpp"

namespace rtop {

struct SessionResult {
  Agent agent;
  std::vector<AgentEvent> events;
  std::vector<std::string> action_log;
  std::size_t ticks = 0;
};

// Runs the script to its end. With `kb_in`, learning continues from that snapshot (and its
// embedded configuration); script ticks are offset to follow the snapshot's last tick.
SessionResult run_session(const SessionConfig& cfg, const StimulusScript& script,
                          StimulusLibrary library, std::optional<Agent> kb_in = std::nullopt);

// One tick of world and agent together; speech is echoed back into the world.
StepOutcome step_world(Agent& agent, World& world, std::int64_t tick_offset);

// Direct and jump trees of `node`, rendered depth-limited. Empty when the node indexes no tree.
// Throws NotFound for an unknown node.
std::string inspect(const Agent& agent, NodeId node, std::size_t depth = 4);

std::string render_predictions(const Agent& agent, std::size_t depth = 4);

std::string format_events(const std::vector<AgentEvent>& events);
std::vector<AgentEvent> parse_events(std::string_view text);

}  // namespace rtop
