#pragma once

// Offline reduction of similar observation paths by merging or grouping the nodes in which they
// differ.

#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "rtop/matcher.hpp"
#include "rtop/memory_store.hpp"
#include "rtop/observation.hpp"

namespace rtop {

struct GeneralizationConfig {
  std::size_t n_trace = 512;
  double image_slack = 0.5;
  double image_tol_cutoff = 2.0;
  double min_must_match_fraction = 0.25;
  double audio_relative_slack = 0.10;
  double audio_reject_factor = 3.0;
  double focus_box = 16.0;
  std::size_t wildcard_members = 8;
  std::size_t provenance_limit = 16;
  std::size_t max_reductions_per_tree = 64;
  std::size_t d_max_divisor = 8;
  bool parameterize = true;
};

// ceil(length / divisor).
std::size_t d_max(std::size_t length, std::size_t divisor = 8);

struct PathPair {
  std::vector<NodeId> a;
  std::vector<NodeId> b;
  std::vector<std::size_t> diff;
};

// Unordered pairs of equal-length root-to-leaf paths that differ in 1..d_max positions, each
// holding two sensory or two action nodes. Ordered by (a, b).
std::vector<PathPair> similar_pairs(const ObservationTree& tree, std::size_t divisor = 8);

std::optional<ImageMergedData> merge_images(const Payload& a, NodeId a_id, const Payload& b,
                                            NodeId b_id, const GeneralizationConfig& cfg);
std::optional<AudioMergedData> merge_audio(const Payload& a, NodeId a_id, const Payload& b,
                                           NodeId b_id, const MatchConfig& match,
                                           const GeneralizationConfig& cfg);
std::optional<FocusMergedAction> merge_focus(const Payload& a, const Payload& b,
                                             const GeneralizationConfig& cfg);

// Stores a group of the (flattened, deduplicated) members, reusing an identical existing group.
// Throws Precondition for fewer than two distinct members.
NodeId make_group(MemoryStore& store, std::vector<NodeId> members, std::int64_t tick,
                  const GeneralizationConfig& cfg);

// Replaces the two branches of `pair` in `tree` by one branch through `replacement[i]` at each
// diff position, summing counts and deltas.
void rewrite_paths(ObservationTree& tree, const PathPair& pair,
                   const std::vector<NodeId>& replacement);

struct GeneralizationReport {
  std::vector<std::string> lines;
  std::size_t pairs_reduced = 0;
  std::size_t merged_created = 0;
  std::size_t groups_created = 0;
  std::size_t rejected = 0;
  std::size_t retired = 0;
  std::size_t parameterized = 0;
  std::vector<NodeId> created;
  std::vector<NodeId> retired_ids;

  bool empty() const { return lines.empty(); }
  std::string text() const;
};

// Places `SIA[P_IMG, M]` where a merged image M sits in a tree although its sources appear under
// different other indexing nodes. Returns the number of connections replaced.
std::size_t parameterize_paths(MemoryStore& store, ObservationLearner& learner, std::int64_t tick,
                               std::vector<std::string>* log = nullptr);

// Full pass over the trees touched since the previous pass; clears the trace at the end.
GeneralizationReport run_generalization(MemoryStore& store, ObservationLearner& learner,
                                        const MatchConfig& match, const GeneralizationConfig& cfg,
                                        std::int64_t tick);

}  // namespace rtop
