#pragma once

// Foreground observation trace, its segmentation into direct and jump paths, and the per-node
// observation trees those paths are folded into.

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "rtop/node.hpp"

namespace rtop {

// Pleasure-pain deltas are accumulated as integers in units of 1e-9 so that folding is exact and
// independent of order.
inline constexpr double kDeltaScale = 1e9;
std::int64_t to_fixed(double delta);
double from_fixed(std::int64_t fixed);

struct TraceEntry {
  NodeId node;
  std::int64_t tick = 0;
  double p_net_at = 0.0;
  bool operator==(const TraceEntry&) const = default;
};

struct Connection {
  NodeId child;
  std::uint64_t count = 0;
  std::int64_t delta_p_sum = 0;  // fixed point
  std::vector<Connection> children;  // sorted by child id

  double mean_delta() const;
  bool operator==(const Connection&) const = default;
};

// Probability of `c` among `siblings` (count ratio).
double probability(const Connection& c, const std::vector<Connection>& siblings);
std::uint64_t total_count(const std::vector<Connection>& siblings);

struct ObservationTree {
  NodeId root;
  std::uint64_t count = 0;  // number of paths folded at this root
  std::vector<Connection> branches;
  bool operator==(const ObservationTree&) const = default;
};

enum class PathKind : std::uint8_t { Direct = 0, Jump = 1 };

struct ObservationPath {
  PathKind kind = PathKind::Direct;
  std::vector<NodeId> nodes;
  std::vector<double> deltas;  // deltas[i] is the edge ending at nodes[i]; deltas[0] unused
};

// Walks (and extends) the tree along `nodes[1..]`, adding one occurrence per edge.
void fold_into(ObservationTree& tree, const std::vector<NodeId>& nodes,
               const std::vector<std::int64_t>& fixed_deltas);

// Finds the child connection for `id`, or nullptr.
Connection* find_child(std::vector<Connection>& siblings, NodeId id);
const Connection* find_child(const std::vector<Connection>& siblings, NodeId id);
// Inserts (keeping order) or returns the existing child.
Connection& child_slot(std::vector<Connection>& siblings, NodeId id);
// Adds the counts, deltas and subtree of `from` into `into`.
void absorb(Connection& into, const Connection& from);

// Every root-to-leaf node sequence with the occurrence count of its final edge.
struct LeafPath {
  std::vector<NodeId> nodes;
  std::uint64_t count = 0;
};
std::vector<LeafPath> leaf_paths(const ObservationTree& tree);

// Nodes referenced anywhere in the tree (root included).
void collect_nodes(const ObservationTree& tree, std::set<NodeId>& out);

struct WindowConfig {
  std::size_t path_length = 16;
  std::size_t stride = 4;
  std::uint32_t hop = 5;
  std::size_t jump_max_raw = 5;
  std::size_t jump_min_raw = 3;
};

// Batch segmentation over a complete trace window: direct paths at every stride offset with a full
// window, then jump paths (skipped when `jump_node` is invalid).
std::vector<ObservationPath> emit_paths(const std::vector<TraceEntry>& trace, NodeId jump_node,
                                        const WindowConfig& cfg);
// Jump paths: trace[i], JMP, trace[i+hop+1], JMP, ... with jump_min_raw..jump_max_raw raw nodes;
// only non-action nodes anchor.
std::vector<ObservationPath> build_jump_paths(const std::vector<TraceEntry>& trace,
                                              NodeId jump_node, const WindowConfig& cfg);

class ObservationLearner {
 public:
  explicit ObservationLearner(WindowConfig cfg = {});

  const WindowConfig& config() const { return cfg_; }
  void set_jump_node(NodeId id) { jump_node_ = id; }
  NodeId jump_node() const { return jump_node_; }

  // Appends and folds every path that became complete. Throws NonMonotonic on a tick that does
  // not increase.
  std::vector<ObservationPath> append(const TraceEntry& entry);
  // Emits jump paths that are still short but have at least jump_min_raw raw nodes; used before
  // the trace is cleared.
  std::vector<ObservationPath> flush();
  void clear_trace();

  void fold_path(const ObservationPath& path);
  void fold_path(PathKind kind, const std::vector<NodeId>& nodes,
                 const std::vector<double>& deltas);

  const std::vector<TraceEntry>& trace() const { return trace_; }
  const std::map<NodeId, ObservationTree>& trees(PathKind kind) const {
    return kind == PathKind::Direct ? direct_ : jump_;
  }
  std::map<NodeId, ObservationTree>& mutable_trees(PathKind kind) {
    return kind == PathKind::Direct ? direct_ : jump_;
  }
  const ObservationTree* tree(PathKind kind, NodeId root) const;

  // Roots folded since the last generalization pass.
  const std::set<std::pair<PathKind, NodeId>>& touched() const { return touched_; }
  void clear_touched() { touched_.clear(); }

  bool references(NodeId id) const;

  // Snapshot support.
  struct State {
    std::vector<TraceEntry> trace;
    std::size_t next_direct = 0;
    std::size_t next_jump = 0;
    std::map<NodeId, ObservationTree> direct;
    std::map<NodeId, ObservationTree> jump;
    std::set<std::pair<PathKind, NodeId>> touched;
  };
  State state() const;
  void restore(State s);

 private:
  ObservationPath direct_path(std::size_t offset) const;
  ObservationPath jump_path(std::size_t offset, std::size_t raw_nodes) const;

  WindowConfig cfg_;
  NodeId jump_node_;
  std::vector<TraceEntry> trace_;
  std::size_t next_direct_ = 0;  // next direct-path offset to emit
  std::size_t next_jump_ = 0;    // next jump-path offset to consider
  std::map<NodeId, ObservationTree> direct_;
  std::map<NodeId, ObservationTree> jump_;
  std::set<std::pair<PathKind, NodeId>> touched_;
};

// `tick <TYPE>.<id> p_net=<v>` per entry.
std::string export_trace(const std::vector<TraceEntry>& trace);

}  // namespace rtop
