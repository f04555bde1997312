#include "rtop/observation.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "rtop/error.hpp"

namespace rtop {

std::int64_t to_fixed(double delta) { return std::llround(delta * kDeltaScale); }
double from_fixed(std::int64_t fixed) { return static_cast<double>(fixed) / kDeltaScale; }

double Connection::mean_delta() const {
  return count == 0 ? 0.0 : from_fixed(delta_p_sum) / static_cast<double>(count);
}

std::uint64_t total_count(const std::vector<Connection>& siblings) {
  std::uint64_t n = 0;
  for (const auto& s : siblings) n += s.count;
  return n;
}

double probability(const Connection& c, const std::vector<Connection>& siblings) {
  const auto n = total_count(siblings);
  return n == 0 ? 0.0 : static_cast<double>(c.count) / static_cast<double>(n);
}

namespace {

auto child_lower(std::vector<Connection>& siblings, NodeId id) {
  return std::lower_bound(siblings.begin(), siblings.end(), id,
                          [](const Connection& c, NodeId v) { return c.child < v; });
}

}  // namespace

Connection* find_child(std::vector<Connection>& siblings, NodeId id) {
  auto it = child_lower(siblings, id);
  return it != siblings.end() && it->child == id ? &*it : nullptr;
}

const Connection* find_child(const std::vector<Connection>& siblings, NodeId id) {
  return find_child(const_cast<std::vector<Connection>&>(siblings), id);
}

Connection& child_slot(std::vector<Connection>& siblings, NodeId id) {
  auto it = child_lower(siblings, id);
  if (it != siblings.end() && it->child == id) return *it;
  Connection c;
  c.child = id;
  return *siblings.insert(it, std::move(c));
}

void absorb(Connection& into, const Connection& from) {
  into.count += from.count;
  into.delta_p_sum += from.delta_p_sum;
  for (const auto& c : from.children) absorb(child_slot(into.children, c.child), c);
}

void fold_into(ObservationTree& tree, const std::vector<NodeId>& nodes,
               const std::vector<std::int64_t>& fixed_deltas) {
  if (nodes.size() < 2) throw Error(ErrorKind::Precondition, "path needs at least two nodes");
  if (tree.count == 0 && tree.branches.empty()) tree.root = nodes[0];
  tree.count += 1;
  std::vector<Connection>* level = &tree.branches;
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    Connection& c = child_slot(*level, nodes[i]);
    c.count += 1;
    c.delta_p_sum += i < fixed_deltas.size() ? fixed_deltas[i] : 0;
    level = &c.children;
  }
}

namespace {

void walk_leaves(const std::vector<Connection>& level, std::vector<NodeId>& prefix,
                 std::vector<LeafPath>& out) {
  for (const auto& c : level) {
    prefix.push_back(c.child);
    if (c.children.empty()) {
      out.push_back(LeafPath{prefix, c.count});
    } else {
      walk_leaves(c.children, prefix, out);
    }
    prefix.pop_back();
  }
}

void walk_nodes(const std::vector<Connection>& level, std::set<NodeId>& out) {
  for (const auto& c : level) {
    out.insert(c.child);
    walk_nodes(c.children, out);
  }
}

bool level_references(const std::vector<Connection>& level, NodeId id) {
  for (const auto& c : level) {
    if (c.child == id || level_references(c.children, id)) return true;
  }
  return false;
}

}  // namespace

std::vector<LeafPath> leaf_paths(const ObservationTree& tree) {
  std::vector<LeafPath> out;
  std::vector<NodeId> prefix{tree.root};
  walk_leaves(tree.branches, prefix, out);
  return out;
}

void collect_nodes(const ObservationTree& tree, std::set<NodeId>& out) {
  out.insert(tree.root);
  walk_nodes(tree.branches, out);
}

namespace {

ObservationPath make_direct(const std::vector<TraceEntry>& trace, std::size_t offset,
                            std::size_t length) {
  ObservationPath p;
  p.kind = PathKind::Direct;
  for (std::size_t i = 0; i < length; ++i) {
    const auto& e = trace[offset + i];
    p.nodes.push_back(e.node);
    p.deltas.push_back(i == 0 ? 0.0 : e.p_net_at - trace[offset + i - 1].p_net_at);
  }
  return p;
}

// raw -> JMP carries no change; JMP -> raw carries the change across the hop.
ObservationPath make_jump(const std::vector<TraceEntry>& trace, std::size_t offset,
                          std::size_t raw_nodes, NodeId jump_node, std::uint32_t hop) {
  ObservationPath p;
  p.kind = PathKind::Jump;
  const std::size_t step = hop + 1;
  for (std::size_t k = 0; k < raw_nodes; ++k) {
    const auto& e = trace[offset + k * step];
    if (k > 0) {
      p.nodes.push_back(jump_node);
      p.deltas.push_back(0.0);
      p.nodes.push_back(e.node);
      p.deltas.push_back(e.p_net_at - trace[offset + (k - 1) * step].p_net_at);
    } else {
      p.nodes.push_back(e.node);
      p.deltas.push_back(0.0);
    }
  }
  return p;
}

std::size_t available_raw(std::size_t trace_len, std::size_t offset, std::size_t step,
                          std::size_t max_raw) {
  if (offset >= trace_len) return 0;
  return std::min(max_raw, (trace_len - 1 - offset) / step + 1);
}

}  // namespace

std::vector<ObservationPath> build_jump_paths(const std::vector<TraceEntry>& trace,
                                              NodeId jump_node, const WindowConfig& cfg) {
  std::vector<ObservationPath> out;
  const std::size_t step = cfg.hop + 1;
  for (std::size_t o = 0; o < trace.size(); o += cfg.stride) {
    const std::size_t raw = available_raw(trace.size(), o, step, cfg.jump_max_raw);
    if (raw < cfg.jump_min_raw) break;
    if (is_action(trace[o].node.type)) continue;
    out.push_back(make_jump(trace, o, raw, jump_node, cfg.hop));
  }
  return out;
}

std::vector<ObservationPath> emit_paths(const std::vector<TraceEntry>& trace, NodeId jump_node,
                                        const WindowConfig& cfg) {
  std::vector<ObservationPath> out;
  for (std::size_t o = 0; o + cfg.path_length <= trace.size(); o += cfg.stride) {
    out.push_back(make_direct(trace, o, cfg.path_length));
  }
  if (jump_node.valid()) {
    auto jumps = build_jump_paths(trace, jump_node, cfg);
    out.insert(out.end(), std::make_move_iterator(jumps.begin()),
               std::make_move_iterator(jumps.end()));
  }
  return out;
}

ObservationLearner::ObservationLearner(WindowConfig cfg) : cfg_(cfg) {
  if (cfg_.path_length < 2 || cfg_.stride < 1 || cfg_.hop < 1 || cfg_.jump_min_raw < 2 ||
      cfg_.jump_max_raw < cfg_.jump_min_raw) {
    throw Error(ErrorKind::Precondition, "invalid observation window configuration");
  }
}

ObservationPath ObservationLearner::direct_path(std::size_t offset) const {
  return make_direct(trace_, offset, cfg_.path_length);
}

ObservationPath ObservationLearner::jump_path(std::size_t offset, std::size_t raw_nodes) const {
  return make_jump(trace_, offset, raw_nodes, jump_node_, cfg_.hop);
}

std::vector<ObservationPath> ObservationLearner::append(const TraceEntry& entry) {
  if (!trace_.empty() && entry.tick <= trace_.back().tick) {
    throw Error(ErrorKind::NonMonotonic,
                fmt::format("trace tick {} after {}", entry.tick, trace_.back().tick));
  }
  trace_.push_back(entry);
  std::vector<ObservationPath> out;
  const std::size_t len = trace_.size();
  while (next_direct_ + cfg_.path_length <= len) {
    out.push_back(direct_path(next_direct_));
    next_direct_ += cfg_.stride;
  }
  if (jump_node_.valid()) {
    const std::size_t full_span = (cfg_.jump_max_raw - 1) * (cfg_.hop + 1) + 1;
    while (next_jump_ + full_span <= len) {
      if (!is_action(trace_[next_jump_].node.type)) {
        out.push_back(jump_path(next_jump_, cfg_.jump_max_raw));
      }
      next_jump_ += cfg_.stride;
    }
  }
  for (const auto& p : out) fold_path(p);
  return out;
}

std::vector<ObservationPath> ObservationLearner::flush() {
  std::vector<ObservationPath> out;
  if (!jump_node_.valid()) return out;
  const std::size_t step = cfg_.hop + 1;
  while (next_jump_ < trace_.size()) {
    const std::size_t raw = available_raw(trace_.size(), next_jump_, step, cfg_.jump_max_raw);
    if (raw < cfg_.jump_min_raw) break;
    if (!is_action(trace_[next_jump_].node.type)) out.push_back(jump_path(next_jump_, raw));
    next_jump_ += cfg_.stride;
  }
  for (const auto& p : out) fold_path(p);
  return out;
}

void ObservationLearner::clear_trace() {
  trace_.clear();
  next_direct_ = 0;
  next_jump_ = 0;
}

void ObservationLearner::fold_path(const ObservationPath& path) {
  fold_path(path.kind, path.nodes, path.deltas);
}

void ObservationLearner::fold_path(PathKind kind, const std::vector<NodeId>& nodes,
                                   const std::vector<double>& deltas) {
  if (nodes.size() < 2) throw Error(ErrorKind::Precondition, "path needs at least two nodes");
  std::vector<std::int64_t> fixed(deltas.size());
  std::transform(deltas.begin(), deltas.end(), fixed.begin(), to_fixed);
  auto& trees = mutable_trees(kind);
  auto& tree = trees[nodes[0]];
  tree.root = nodes[0];
  fold_into(tree, nodes, fixed);
  touched_.emplace(kind, nodes[0]);
}

const ObservationTree* ObservationLearner::tree(PathKind kind, NodeId root) const {
  const auto& trees = this->trees(kind);
  auto it = trees.find(root);
  return it == trees.end() ? nullptr : &it->second;
}

bool ObservationLearner::references(NodeId id) const {
  for (const auto& e : trace_) {
    if (e.node == id) return true;
  }
  for (const auto* trees : {&direct_, &jump_}) {
    for (const auto& [root, t] : *trees) {
      if (root == id || level_references(t.branches, id)) return true;
    }
  }
  return false;
}

ObservationLearner::State ObservationLearner::state() const {
  return State{trace_, next_direct_, next_jump_, direct_, jump_, touched_};
}

void ObservationLearner::restore(State s) {
  trace_ = std::move(s.trace);
  next_direct_ = s.next_direct;
  next_jump_ = s.next_jump;
  direct_ = std::move(s.direct);
  jump_ = std::move(s.jump);
  touched_ = std::move(s.touched);
}

std::string export_trace(const std::vector<TraceEntry>& trace) {
  std::string out;
  for (const auto& e : trace) {
    out += fmt::format("{} {} p_net={}\n", e.tick, e.node.str(), e.p_net_at);
  }
  return out;
}

}  // namespace rtop
