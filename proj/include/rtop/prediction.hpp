#pragma once

// Future-trees: copies of observation subtrees selected by the ongoing observation, with a cursor
// that follows incoming nodes.

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "rtop/matcher.hpp"
#include "rtop/memory_store.hpp"
#include "rtop/observation.hpp"

namespace rtop {

struct FutureNode {
  NodeId id;
  std::uint64_t count = 0;
  double probability = 1.0;  // among siblings, fixed at build time
  double delta_p = 0.0;      // mean change over the edge into this node
  std::vector<FutureNode> children;
  bool operator==(const FutureNode&) const = default;
};

// Deep copy of a connection (or of a whole tree, with the root as a probability-1 node).
FutureNode copy_subtree(const Connection& c, double probability);
FutureNode copy_tree(const ObservationTree& tree);

std::size_t subtree_height(const FutureNode& n);

// Decides whether an incoming stored node satisfies an expected child: identity, raw match, mask
// match against merged children, group membership, superimpose overlays, and global groups.
class NodeAcceptor {
 public:
  NodeAcceptor(const MemoryStore& store, MatchConfig cfg, bool global_groups = true);
  bool accepts(NodeId expected, NodeId incoming) const;
  const MemoryStore& store() const { return store_; }

 private:
  bool payload_accepts(NodeId expected, const MemoryNode& incoming) const;

  const MemoryStore& store_;
  MatchConfig cfg_;
  bool global_groups_;
  std::map<NodeId, std::vector<NodeId>> groups_of_;
};

struct FutureTree {
  PathKind kind = PathKind::Direct;
  NodeId anchor;                 // the indexing node whose tree was used
  std::vector<NodeId> context;   // observed suffix matched from the anchor
  FutureNode root;               // node at the end of the context
  std::vector<std::size_t> cursor;  // child indices from root
  std::uint32_t skip_budget = 0;    // remaining wildcard skips while the cursor sits on a JMP node
  std::int64_t age = 0;
  bool violated = false;

  std::size_t context_depth() const { return context.size(); }
  const FutureNode& at_cursor() const;
  // Product of probabilities from root to cursor.
  double cursor_rho() const;
  std::size_t remaining_depth() const { return subtree_height(at_cursor()); }
  // Net probability of the best child of the cursor.
  double best_remaining() const;
  bool operator==(const FutureTree&) const = default;
};

struct PredictionConfig {
  std::size_t context_depth = 3;
  std::size_t k_active = 8;
  std::size_t k_background = 2;
  double min_net_probability = 0.05;
  std::size_t min_remaining_depth = 2;
};

// Future trees for the most recent observation (oldest first in `recent`). Every suffix whose
// first node has a direct tree contributes one tree; the newest node also contributes its jump
// tree. Ordered by context depth, then best root-branch probability; at most `k` kept.
std::vector<FutureTree> build_futures(const std::vector<NodeId>& recent,
                                      const ObservationLearner& learner,
                                      const NodeAcceptor& acceptor, std::size_t k,
                                      std::size_t max_context);

enum class ConformResult { Conformed, Violated };

// Advances the cursor on success. A violated tree stays violated.
ConformResult conform(FutureTree& tree, NodeId incoming, const NodeAcceptor& acceptor);

struct PredictionSet {
  std::vector<FutureTree> active;
  std::vector<FutureTree> background;
  bool operator==(const PredictionSet&) const = default;
};

// True when the set should be rebuilt after an incoming node: nothing conformed, or every tree is
// nearly exhausted.
bool refresh_policy(const PredictionSet& set, bool any_conformed, const PredictionConfig& cfg);

// One line per root-to-leaf path: `-->IMG.1--[0.70,0.00]-->IMG.2--[1.00,0.00]-->IMG.3`.
// Paths deeper than `max_depth` edges are cut with ` ... (+n)`, n being the nodes elided.
using LabelFn = std::function<std::string(NodeId)>;
std::string render_future(const FutureNode& root, std::size_t max_depth, const LabelFn& label);
std::string render_tree(const ObservationTree& tree, std::size_t max_depth, const LabelFn& label);

}  // namespace rtop
