#pragma once

// Two-stage lookup: summary-index candidates, then a detailed per-type comparison.

#include <optional>

#include "rtop/audio.hpp"
#include "rtop/memory_store.hpp"

namespace rtop {

struct MatchConfig {
  double image_threshold = 0.5;     // mean |dl| on the 0..7 scale
  double leeway_mean_lightness = 0.75;
  double leeway_var_lightness = 2.0;
  AudioTolerance audio{};
};

struct MatchHit {
  NodeId id;
  double distance = 0.0;
};

// Distance of a probe against one stored node, or nullopt when it does not match. Raw image and
// audio nodes use their thresholds, merged nodes their masks. Other node types never match here.
std::optional<double> match_against(const Payload& probe, const MemoryNode& node,
                                    const MatchConfig& cfg);

// Best stored IMG/AUD node for the probe: smallest distance, then lowest serial. Merged nodes with
// an empty mask are considered only when nothing else matches.
std::optional<MatchHit> find_match(const MemoryStore& store, const Payload& probe,
                                   const MatchConfig& cfg);

// Does `probe` match any of the group's members (or anything, for wildcard groups)?
bool group_accepts(const MemoryStore& store, const GroupSpec& group, const Payload& probe,
                   const MatchConfig& cfg);

}  // namespace rtop
