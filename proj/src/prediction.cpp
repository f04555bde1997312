#include "rtop/prediction.hpp"

#include <algorithm>
#include <tuple>

#include <fmt/format.h>

namespace rtop {

FutureNode copy_subtree(const Connection& c, double probability) {
  FutureNode n;
  n.id = c.child;
  n.count = c.count;
  n.probability = probability;
  n.delta_p = c.mean_delta();
  n.children.reserve(c.children.size());
  for (const auto& k : c.children) n.children.push_back(copy_subtree(k, rtop::probability(k, c.children)));
  return n;
}

FutureNode copy_tree(const ObservationTree& tree) {
  FutureNode n;
  n.id = tree.root;
  n.count = tree.count;
  for (const auto& k : tree.branches) {
    n.children.push_back(copy_subtree(k, probability(k, tree.branches)));
  }
  return n;
}

std::size_t subtree_height(const FutureNode& n) {
  std::size_t h = 0;
  for (const auto& c : n.children) h = std::max(h, 1 + subtree_height(c));
  return h;
}

NodeAcceptor::NodeAcceptor(const MemoryStore& store, MatchConfig cfg, bool global_groups)
    : store_(store), cfg_(cfg), global_groups_(global_groups) {
  if (!global_groups_) return;
  for (auto gid : store_.ids_of(NodeType::Group, false)) {
    const auto& g = std::get<GroupSpec>(store_.get(gid).payload);
    for (auto m : g.members) groups_of_[m].push_back(gid);
  }
}

bool NodeAcceptor::payload_accepts(NodeId expected, const MemoryNode& incoming) const {
  const auto* exp = store_.find(expected);
  if (!exp) return false;
  return std::visit(
      [&](const auto& p) -> bool {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, ImageData> || std::is_same_v<T, ImageMergedData> ||
                      std::is_same_v<T, AudioData> || std::is_same_v<T, AudioMergedData>) {
          return match_against(incoming.payload, *exp, cfg_).has_value();
        } else if constexpr (std::is_same_v<T, FocusMergedAction>) {
          const auto* f = std::get_if<FocusAction>(&incoming.payload);
          return f && p.accepts(*f);
        } else if constexpr (std::is_same_v<T, JumpSpec>) {
          return true;
        } else if constexpr (std::is_same_v<T, GroupSpec>) {
          if (p.is_wildcard || p.contains(incoming.id)) return true;
          for (auto m : p.members) {
            if (m.type == incoming.id.type && payload_accepts(m, incoming)) return true;
          }
          return false;
        } else if constexpr (std::is_same_v<T, SuperimposeSpec>) {
          for (const Operand* op : {&p.overlay, &p.base}) {
            if (const auto* id = std::get_if<NodeId>(op)) {
              if (*id == incoming.id || payload_accepts(*id, incoming)) return true;
            }
          }
          return false;
        } else {
          return false;
        }
      },
      exp->payload);
}

bool NodeAcceptor::accepts(NodeId expected, NodeId incoming) const {
  if (expected == incoming) return true;
  if (expected.type == NodeType::Jump) return true;
  const auto* in = store_.find(incoming);
  if (!in) return false;
  // Raw payloads only; a merged incoming node matches by identity alone.
  if (!incoming.merged && payload_accepts(expected, *in)) return true;
  if (global_groups_) {
    auto it = groups_of_.find(expected);
    if (it != groups_of_.end()) {
      for (auto gid : it->second) {
        const auto& g = std::get<GroupSpec>(store_.get(gid).payload);
        if (g.contains(incoming)) return true;
      }
    }
  }
  return false;
}

const FutureNode& FutureTree::at_cursor() const {
  const FutureNode* n = &root;
  for (auto i : cursor) n = &n->children[i];
  return *n;
}

double FutureTree::cursor_rho() const {
  double rho = 1.0;
  const FutureNode* n = &root;
  for (auto i : cursor) {
    n = &n->children[i];
    rho *= n->probability;
  }
  return rho;
}

double FutureTree::best_remaining() const {
  double best = 0.0;
  for (const auto& c : at_cursor().children) best = std::max(best, c.probability);
  return cursor_rho() * best;
}

namespace {

// Best child accepting `incoming`: exact id first, then highest count, then lowest id.
template <typename Children, typename IdOf, typename CountOf>
std::optional<std::size_t> pick_child(const Children& children, NodeId incoming,
                                      const NodeAcceptor& acceptor, IdOf id_of, CountOf count_of,
                                      bool allow_jump) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < children.size(); ++i) {
    const NodeId cid = id_of(children[i]);
    if (cid == incoming) return i;
  }
  for (std::size_t i = 0; i < children.size(); ++i) {
    const NodeId cid = id_of(children[i]);
    if (cid.type == NodeType::Jump && !allow_jump) continue;
    if (!acceptor.accepts(cid, incoming)) continue;
    if (!best || count_of(children[i]) > count_of(children[*best])) best = i;
  }
  return best;
}

double best_root_probability(const FutureNode& n) {
  double best = 0.0;
  for (const auto& c : n.children) best = std::max(best, c.probability);
  return best;
}

}  // namespace

std::vector<FutureTree> build_futures(const std::vector<NodeId>& recent,
                                      const ObservationLearner& learner,
                                      const NodeAcceptor& acceptor, std::size_t k,
                                      std::size_t max_context) {
  std::vector<FutureTree> out;
  if (recent.empty() || k == 0) return out;
  const std::size_t n = recent.size();
  const std::size_t first = n > max_context ? n - max_context : 0;
  for (std::size_t s = first; s < n; ++s) {
    const ObservationTree* tree = learner.tree(PathKind::Direct, recent[s]);
    if (!tree) continue;
    const std::vector<Connection>* level = &tree->branches;
    const Connection* reached = nullptr;
    bool ok = true;
    for (std::size_t j = s + 1; j < n && ok; ++j) {
      auto idx = pick_child(
          *level, recent[j], acceptor, [](const Connection& c) { return c.child; },
          [](const Connection& c) { return c.count; }, false);
      if (!idx) {
        ok = false;
        break;
      }
      reached = &(*level)[*idx];
      level = &reached->children;
    }
    if (!ok) continue;
    FutureTree ft;
    ft.kind = PathKind::Direct;
    ft.anchor = recent[s];
    ft.context.assign(recent.begin() + static_cast<std::ptrdiff_t>(s), recent.end());
    ft.root = reached ? copy_subtree(*reached, 1.0) : copy_tree(*tree);
    ft.root.probability = 1.0;
    ft.root.delta_p = 0.0;
    if (ft.root.children.empty()) continue;
    out.push_back(std::move(ft));
  }
  if (const auto* jt = learner.tree(PathKind::Jump, recent.back())) {
    FutureTree ft;
    ft.kind = PathKind::Jump;
    ft.anchor = recent.back();
    ft.context = {recent.back()};
    ft.root = copy_tree(*jt);
    if (!ft.root.children.empty()) out.push_back(std::move(ft));
  }
  auto rank = [](const FutureTree& t) {
    return std::make_tuple(t.context_depth(), best_root_probability(t.root));
  };
  std::stable_sort(out.begin(), out.end(), [&](const FutureTree& a, const FutureTree& b) {
    if (rank(a) != rank(b)) return rank(a) > rank(b);
    if (a.kind != b.kind) return a.kind < b.kind;
    return a.anchor < b.anchor;
  });
  if (out.size() > k) out.resize(k);
  return out;
}

ConformResult conform(FutureTree& tree, NodeId incoming, const NodeAcceptor& acceptor) {
  if (tree.violated) return ConformResult::Violated;
  tree.age += 1;
  const FutureNode& cur = tree.at_cursor();
  auto idx = pick_child(
      cur.children, incoming, acceptor, [](const FutureNode& c) { return c.id; },
      [](const FutureNode& c) { return c.count; }, true);
  if (idx) {
    const NodeId next = cur.children[*idx].id;
    tree.cursor.push_back(*idx);
    tree.skip_budget = 0;
    if (next.type == NodeType::Jump && next != incoming) {
      // The incoming node is the first of the skipped ones.
      std::uint32_t hop = 1;
      if (const auto* n = acceptor.store().find(next)) {
        if (const auto* j = std::get_if<JumpSpec>(&n->payload)) hop = j->hop;
      }
      tree.skip_budget = hop > 0 ? hop - 1 : 0;
    }
    return ConformResult::Conformed;
  }
  if (cur.id.type == NodeType::Jump && tree.skip_budget > 0) {
    tree.skip_budget -= 1;
    return ConformResult::Conformed;
  }
  tree.violated = true;
  return ConformResult::Violated;
}

bool refresh_policy(const PredictionSet& set, bool any_conformed, const PredictionConfig& cfg) {
  if (!any_conformed) return true;
  for (const auto& t : set.active) {
    if (t.violated) continue;
    if (t.best_remaining() >= cfg.min_net_probability &&
        t.remaining_depth() >= cfg.min_remaining_depth) {
      return false;
    }
  }
  return true;
}

namespace {

std::size_t count_nodes(const std::vector<FutureNode>& level) {
  std::size_t n = 0;
  for (const auto& c : level) n += 1 + count_nodes(c.children);
  return n;
}

void render_rec(const FutureNode& node, const std::string& prefix, std::size_t depth,
                std::size_t max_depth, const LabelFn& label, std::string& out) {
  if (node.children.empty()) {
    out += prefix;
    out += '\n';
    return;
  }
  if (depth >= max_depth) {
    out += fmt::format("{} ... (+{})\n", prefix, count_nodes(node.children));
    return;
  }
  for (const auto& c : node.children) {
    render_rec(c, fmt::format("{}--[{:.2f},{:.2f}]-->{}", prefix, c.probability, c.delta_p, label(c.id)),
               depth + 1, max_depth, label, out);
  }
}

}  // namespace

std::string render_future(const FutureNode& root, std::size_t max_depth, const LabelFn& label) {
  std::string out;
  if (root.children.empty()) return out;
  render_rec(root, "-->" + label(root.id), 0, max_depth, label, out);
  return out;
}

std::string render_tree(const ObservationTree& tree, std::size_t max_depth, const LabelFn& label) {
  return render_future(copy_tree(tree), max_depth, label);
}

}  // namespace rtop
