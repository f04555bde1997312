#include "rtop/generalization.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include <fmt/format.h>

#include "rtop/audio.hpp"
#include "rtop/error.hpp"
#include "rtop/image.hpp"

namespace rtop {

std::size_t d_max(std::size_t length, std::size_t divisor) {
  return (length + divisor - 1) / divisor;
}

namespace {

bool compatible(NodeId a, NodeId b) {
  if (a.type == NodeType::Jump || b.type == NodeType::Jump) return false;
  return (is_sensory(a.type) && is_sensory(b.type)) || (is_action(a.type) && is_action(b.type));
}

std::string join_path(const std::vector<NodeId>& nodes) {
  std::string s;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (i) s += "->";
    s += nodes[i].str();
  }
  return s;
}

}  // namespace

std::vector<PathPair> similar_pairs(const ObservationTree& tree, std::size_t divisor) {
  std::vector<PathPair> out;
  const auto leaves = leaf_paths(tree);
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    const auto& a = leaves[i].nodes;
    const std::size_t limit = d_max(a.size(), divisor);
    for (std::size_t j = i + 1; j < leaves.size(); ++j) {
      const auto& b = leaves[j].nodes;
      if (b.size() != a.size()) continue;
      std::vector<std::size_t> diff;
      bool ok = true;
      for (std::size_t k = 0; k < a.size() && ok; ++k) {
        if (a[k] == b[k]) continue;
        if (!compatible(a[k], b[k])) ok = false;
        diff.push_back(k);
        if (diff.size() > limit) ok = false;
      }
      if (ok && !diff.empty()) out.push_back(PathPair{a, b, std::move(diff)});
    }
  }
  return out;
}

namespace {

std::vector<ImageSource> image_sources(const Payload& p, NodeId id) {
  if (const auto* raw = std::get_if<ImageData>(&p)) return {ImageSource{id, *raw}};
  if (const auto* m = std::get_if<ImageMergedData>(&p)) return m->provenance;
  return {};
}

std::vector<AudioSource> audio_sources(const Payload& p, NodeId id) {
  if (const auto* raw = std::get_if<AudioData>(&p)) return {AudioSource{id, *raw}};
  if (const auto* m = std::get_if<AudioMergedData>(&p)) return m->provenance;
  return {};
}

// Concatenates, keeps the latest copy of each id, and bounds the list to the newest `limit`.
template <typename Source>
std::vector<Source> combine(std::vector<Source> a, const std::vector<Source>& b,
                            std::size_t limit) {
  for (const auto& s : b) {
    a.erase(std::remove_if(a.begin(), a.end(), [&](const Source& x) { return x.id == s.id; }),
            a.end());
    a.push_back(s);
  }
  if (a.size() > limit) a.erase(a.begin(), a.end() - static_cast<std::ptrdiff_t>(limit));
  return a;
}

}  // namespace

std::optional<ImageMergedData> merge_images(const Payload& a, NodeId a_id, const Payload& b,
                                            NodeId b_id, const GeneralizationConfig& cfg) {
  auto sources = combine(image_sources(a, a_id), image_sources(b, b_id), cfg.provenance_limit);
  if (sources.empty()) return std::nullopt;
  ImageMergedData out;
  const double n = static_cast<double>(sources.size());
  std::size_t must = 0;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    double h = 0.0, s = 0.0, l = 0.0;
    for (const auto& src : sources) {
      h += src.image.pixels[i].h;
      s += src.image.pixels[i].s;
      l += src.image.pixels[i].l;
    }
    auto& px = out.pixels[i];
    px.h = h / n;
    px.s = s / n;
    px.l = l / n;
    double dev = 0.0;
    for (const auto& src : sources) dev = std::max(dev, std::abs(src.image.pixels[i].l - px.l));
    px.l_tol = dev + cfg.image_slack;
    px.must_match = px.l_tol <= cfg.image_tol_cutoff;
    if (px.must_match) ++must;
  }
  if (static_cast<double>(must) < cfg.min_must_match_fraction * kImagePixels) return std::nullopt;
  out.provenance = std::move(sources);
  return out;
}

std::optional<AudioMergedData> merge_audio(const Payload& a, NodeId a_id, const Payload& b,
                                           NodeId b_id, const MatchConfig& match,
                                           const GeneralizationConfig& cfg) {
  auto sources = combine(audio_sources(a, a_id), audio_sources(b, b_id), cfg.provenance_limit);
  if (sources.empty()) return std::nullopt;
  std::vector<AudioSummary> sums;
  for (const auto& s : sources) sums.push_back(audio_summary(s.audio));
  AudioSummary c;
  for (const auto& s : sums) {
    c.var_amplitude += s.var_amplitude;
    c.mean_cross_rate += s.mean_cross_rate;
  }
  c.var_amplitude /= static_cast<double>(sums.size());
  c.mean_cross_rate /= static_cast<double>(sums.size());
  AudioSummary dev;
  for (const auto& s : sums) {
    dev.var_amplitude = std::max(dev.var_amplitude, std::abs(s.var_amplitude - c.var_amplitude));
    dev.mean_cross_rate =
        std::max(dev.mean_cross_rate, std::abs(s.mean_cross_rate - c.mean_cross_rate));
  }
  if (dev.var_amplitude > cfg.audio_reject_factor * match.audio.var_rel * c.var_amplitude ||
      dev.mean_cross_rate > cfg.audio_reject_factor * match.audio.cross_rel * c.mean_cross_rate) {
    return std::nullopt;
  }
  AudioMergedData out;
  out.center = c;
  out.tol = AudioSummary{dev.var_amplitude + cfg.audio_relative_slack * c.var_amplitude,
                         dev.mean_cross_rate + cfg.audio_relative_slack * c.mean_cross_rate};
  out.provenance = std::move(sources);
  return out;
}

std::optional<FocusMergedAction> merge_focus(const Payload& a, const Payload& b,
                                             const GeneralizationConfig& cfg) {
  std::vector<FocusAction> moves;
  for (const Payload* p : {&a, &b}) {
    if (const auto* f = std::get_if<FocusAction>(p)) {
      moves.push_back(*f);
    } else if (const auto* m = std::get_if<FocusMergedAction>(p)) {
      moves.insert(moves.end(), m->provenance.begin(), m->provenance.end());
    } else {
      return std::nullopt;
    }
  }
  if (moves.empty()) return std::nullopt;
  if (moves.size() > cfg.provenance_limit) {
    moves.erase(moves.begin(), moves.end() - static_cast<std::ptrdiff_t>(cfg.provenance_limit));
  }
  FocusMergedAction out;
  for (const auto& m : moves) {
    out.dx += m.dx;
    out.dy += m.dy;
    out.dzoom += m.dzoom;
  }
  const double n = static_cast<double>(moves.size());
  out.dx /= n;
  out.dy /= n;
  out.dzoom /= n;
  double spread = 0.0;
  for (const auto& m : moves) {
    spread = std::max({spread, std::abs(m.dx - out.dx), std::abs(m.dy - out.dy),
                       std::abs(m.dzoom - out.dzoom)});
  }
  if (spread > cfg.focus_box) return std::nullopt;
  out.tol = spread;
  out.provenance = std::move(moves);
  return out;
}

namespace {

void flatten_into(const MemoryStore& store, NodeId id, std::vector<NodeId>& out) {
  if (id.type == NodeType::Group) {
    const auto& g = std::get<GroupSpec>(store.get(id).payload);
    out.insert(out.end(), g.members.begin(), g.members.end());
  } else {
    out.push_back(id);
  }
}

}  // namespace

NodeId make_group(MemoryStore& store, std::vector<NodeId> members, std::int64_t tick,
                  const GeneralizationConfig& cfg) {
  std::vector<NodeId> flat;
  for (auto m : members) flatten_into(store, m, flat);
  std::sort(flat.begin(), flat.end());
  flat.erase(std::unique(flat.begin(), flat.end()), flat.end());
  if (flat.size() < 2) throw Error(ErrorKind::Precondition, "a group needs two distinct members");
  std::set<NodeType> types;
  for (auto m : flat) types.insert(m.type);
  GroupSpec spec{flat, flat.size() >= cfg.wildcard_members && types.size() >= 2};
  for (auto gid : store.ids_of(NodeType::Group, false)) {
    if (std::get<GroupSpec>(store.get(gid).payload) == spec) return gid;
  }
  return store.put(std::move(spec), tick);
}

void rewrite_paths(ObservationTree& tree, const PathPair& pair,
                   const std::vector<NodeId>& replacement) {
  if (replacement.size() != pair.diff.size()) {
    throw Error(ErrorKind::Precondition, "one replacement per differing position required");
  }
  std::vector<Connection>* level = &tree.branches;
  std::size_t k = 0;
  for (std::size_t pos = 1; pos < pair.a.size(); ++pos) {
    if (k < pair.diff.size() && pair.diff[k] == pos) {
      const NodeId r = replacement[k++];
      const Connection* ca = find_child(*level, pair.a[pos]);
      const Connection* cb = find_child(*level, pair.b[pos]);
      if (!ca || !cb) throw Error(ErrorKind::NotFound, "path pair not present in tree");
      const Connection a = *ca;
      const Connection b = *cb;
      level->erase(std::remove_if(level->begin(), level->end(),
                                  [&](const Connection& c) {
                                    return c.child == a.child || c.child == b.child;
                                  }),
                   level->end());
      Connection& slot = child_slot(*level, r);
      absorb(slot, a);
      absorb(slot, b);
      level = &slot.children;
    } else {
      Connection* c = find_child(*level, pair.a[pos]);
      if (!c) throw Error(ErrorKind::NotFound, "path pair not present in tree");
      level = &c->children;
    }
  }
}

std::string GeneralizationReport::text() const {
  std::string s;
  for (const auto& l : lines) {
    s += l;
    s += '\n';
  }
  return s;
}

namespace {

// How one differing position is to be resolved.
struct Plan {
  enum class Kind { Existing, Merge, Group } kind = Kind::Existing;
  NodeId existing;
  Payload payload;
  std::vector<NodeId> members;
};

std::optional<Plan> plan_position(const MemoryStore& store, NodeId a, NodeId b,
                                  const MatchConfig& match, const GeneralizationConfig& cfg) {
  const auto& na = store.get(a);
  const auto& nb = store.get(b);
  if (is_action(a.type) && is_action(b.type)) {
    if (a.type != NodeType::Focus || b.type != NodeType::Focus) return std::nullopt;
    if (const auto* m = std::get_if<FocusMergedAction>(&na.payload)) {
      if (const auto* f = std::get_if<FocusAction>(&nb.payload); f && m->accepts(*f)) {
        return Plan{Plan::Kind::Existing, a, {}, {}};
      }
    }
    if (const auto* m = std::get_if<FocusMergedAction>(&nb.payload)) {
      if (const auto* f = std::get_if<FocusAction>(&na.payload); f && m->accepts(*f)) {
        return Plan{Plan::Kind::Existing, b, {}, {}};
      }
    }
    auto merged = merge_focus(na.payload, nb.payload, cfg);
    if (!merged) return std::nullopt;
    return Plan{Plan::Kind::Merge, {}, std::move(*merged), {}};
  }
  if (!is_sensory(a.type) || !is_sensory(b.type)) return std::nullopt;

  if (a.type == b.type && (a.type == NodeType::Image || a.type == NodeType::Audio)) {
    // A merged node that already covers the other side absorbs it as is.
    if (a.merged && !b.merged && match_against(nb.payload, na, match)) {
      return Plan{Plan::Kind::Existing, a, {}, {}};
    }
    if (b.merged && !a.merged && match_against(na.payload, nb, match)) {
      return Plan{Plan::Kind::Existing, b, {}, {}};
    }
    if (!a.merged && !b.merged) {
      for (auto mid : store.ids_of(a.type, true)) {
        const auto& m = store.get(mid);
        if (match_against(na.payload, m, match) && match_against(nb.payload, m, match)) {
          return Plan{Plan::Kind::Existing, mid, {}, {}};
        }
      }
    }
    if (a.type == NodeType::Image) {
      if (auto m = merge_images(na.payload, a, nb.payload, b, cfg)) {
        return Plan{Plan::Kind::Merge, {}, std::move(*m), {}};
      }
    } else if (auto m = merge_audio(na.payload, a, nb.payload, b, match, cfg)) {
      return Plan{Plan::Kind::Merge, {}, std::move(*m), {}};
    }
  }
  if (a.type == NodeType::Group) {
    if (std::get<GroupSpec>(na.payload).contains(b)) return Plan{Plan::Kind::Existing, a, {}, {}};
  }
  if (b.type == NodeType::Group) {
    if (std::get<GroupSpec>(nb.payload).contains(a)) return Plan{Plan::Kind::Existing, b, {}, {}};
  }
  for (auto gid : store.ids_of(NodeType::Group, false)) {
    const auto& g = std::get<GroupSpec>(store.get(gid).payload);
    if (!g.is_wildcard && g.contains(a) && g.contains(b)) return Plan{Plan::Kind::Existing, gid, {}, {}};
  }
  return Plan{Plan::Kind::Group, {}, {}, {a, b}};
}

std::string pair_key(const PathPair& p) { return join_path(p.a) + "|" + join_path(p.b); }

// Reduces one tree until no feasible pair is left or the cap is reached.
void reduce_tree(ObservationTree& tree, MemoryStore& store, const MatchConfig& match,
                 const GeneralizationConfig& cfg, std::int64_t tick, GeneralizationReport& report,
                 std::set<NodeId>& replaced) {
  std::set<std::string> rejected;
  for (std::size_t done = 0; done < cfg.max_reductions_per_tree;) {
    bool progressed = false;
    for (const auto& pair : similar_pairs(tree, cfg.d_max_divisor)) {
      const auto key = pair_key(pair);
      if (rejected.count(key)) continue;
      std::vector<Plan> plans;
      std::optional<std::size_t> failed;
      for (std::size_t k = 0; k < pair.diff.size(); ++k) {
        auto p = plan_position(store, pair.a[pair.diff[k]], pair.b[pair.diff[k]], match, cfg);
        if (!p) {
          failed = k;
          break;
        }
        plans.push_back(std::move(*p));
      }
      if (failed) {
        rejected.insert(key);
        report.rejected += 1;
        const std::size_t pos = pair.diff[*failed];
        report.lines.push_back(fmt::format("Attempting reduction of path-pair: {} / {}",
                                           join_path(pair.a), join_path(pair.b)));
        report.lines.push_back(fmt::format("Rejected: {} and {} cannot be generalized",
                                           pair.a[pos].str(), pair.b[pos].str()));
        continue;
      }
      report.lines.push_back(fmt::format("Attempting reduction of path-pair: {} / {}",
                                         join_path(pair.a), join_path(pair.b)));
      std::vector<NodeId> replacement;
      for (std::size_t k = 0; k < plans.size(); ++k) {
        const NodeId a = pair.a[pair.diff[k]];
        const NodeId b = pair.b[pair.diff[k]];
        auto& plan = plans[k];
        NodeId r;
        if (plan.kind == Plan::Kind::Existing) {
          r = plan.existing;
          report.lines.push_back(fmt::format("Reusing {} for {} and {}", r.str(), a.str(), b.str()));
        } else if (plan.kind == Plan::Kind::Merge) {
          r = store.put(std::move(plan.payload), tick);
          report.merged_created += 1;
          report.created.push_back(r);
          report.lines.push_back(
              fmt::format("Created merged node {} by merging {} and {}", r.str(), a.str(), b.str()));
        } else {
          const auto before = store.next_serials()[static_cast<std::size_t>(NodeType::Group)];
          r = make_group(store, plan.members, tick, cfg);
          if (store.next_serials()[static_cast<std::size_t>(NodeType::Group)] != before) {
            report.groups_created += 1;
            report.created.push_back(r);
          }
          const auto& g = std::get<GroupSpec>(store.get(r).payload);
          std::vector<std::string> names;
          for (auto m : g.members) names.push_back(m.str());
          report.lines.push_back(fmt::format("Created group node {} from {}{}", r.str(),
                                             fmt::join(names, ","),
                                             g.is_wildcard ? " (wildcard)" : ""));
        }
        if (a != r) replaced.insert(a);
        if (b != r) replaced.insert(b);
        replacement.push_back(r);
      }
      rewrite_paths(tree, pair, replacement);
      report.pairs_reduced += 1;
      ++done;
      progressed = true;
      break;
    }
    if (!progressed) break;
  }
}

void walk_occurrences(const std::vector<Connection>& level, NodeId root,
                      std::map<NodeId, std::set<NodeId>>& out) {
  for (const auto& c : level) {
    out[c.child].insert(root);
    walk_occurrences(c.children, root, out);
  }
}

std::size_t replace_in_level(std::vector<Connection>& level, NodeId from, NodeId to) {
  std::size_t n = 0;
  for (auto& c : level) n += replace_in_level(c.children, from, to);
  std::vector<Connection> rebuilt;
  for (auto& c : level) {
    if (c.child == from) {
      c.child = to;
      ++n;
    }
  }
  for (auto& c : level) {
    if (Connection* existing = find_child(rebuilt, c.child)) {
      absorb(*existing, c);
    } else {
      child_slot(rebuilt, c.child) = std::move(c);
    }
  }
  level = std::move(rebuilt);
  return n;
}

}  // namespace

std::size_t parameterize_paths(MemoryStore& store, ObservationLearner& learner, std::int64_t tick,
                               std::vector<std::string>* log) {
  auto& trees = learner.mutable_trees(PathKind::Direct);
  std::map<NodeId, std::set<NodeId>> where;  // raw node -> roots of trees containing it below the root
  for (const auto& [root, t] : trees) walk_occurrences(t.branches, root, where);

  std::size_t total = 0;
  for (auto& [root, tree] : trees) {
    std::set<NodeId> present;
    collect_nodes(tree, present);
    for (auto id : present) {
      if (id.type != NodeType::Image || !id.merged || id == root) continue;
      const auto& merged = std::get<ImageMergedData>(store.get(id).payload);
      std::set<NodeId> contexts;
      std::size_t bound_sources = 0;
      for (const auto& src : merged.provenance) {
        auto it = where.find(src.id);
        if (it == where.end()) continue;
        std::set<NodeId> others = it->second;
        others.erase(root);
        if (others.empty()) continue;
        ++bound_sources;
        contexts.insert(others.begin(), others.end());
      }
      if (bound_sources < 2 || contexts.size() < 2) continue;
      const NodeId sia = store.intern(SuperimposeSpec{Placeholder::Image, id}, tick);
      const std::size_t n = replace_in_level(tree.branches, id, sia);
      total += n;
      if (log && n) {
        log->push_back(fmt::format("Parameterized {} as {} in tree of {}", id.str(),
                                   node_label(store.get(sia)), root.str()));
      }
    }
  }
  return total;
}

GeneralizationReport run_generalization(MemoryStore& store, ObservationLearner& learner,
                                        const MatchConfig& match, const GeneralizationConfig& cfg,
                                        std::int64_t tick) {
  GeneralizationReport report;
  learner.flush();
  std::set<NodeId> replaced;
  const auto touched = learner.touched();
  for (const auto& [kind, root] : touched) {
    auto& trees = learner.mutable_trees(kind);
    auto it = trees.find(root);
    if (it == trees.end()) continue;
    reduce_tree(it->second, store, match, cfg, tick, report, replaced);
  }
  if (cfg.parameterize && report.merged_created > 0) {
    report.parameterized = parameterize_paths(store, learner, tick, &report.lines);
  }
  learner.clear_touched();
  learner.clear_trace();

  // Retire replaced nodes nothing refers to any more.
  std::set<NodeId> live;
  for (auto kind : {PathKind::Direct, PathKind::Jump}) {
    for (const auto& [root, t] : learner.trees(kind)) collect_nodes(t, live);
  }
  for (const auto& [id, node] : store.nodes()) {
    if (const auto* g = std::get_if<GroupSpec>(&node.payload)) {
      live.insert(g->members.begin(), g->members.end());
    } else if (const auto* s = std::get_if<SuperimposeSpec>(&node.payload)) {
      for (const Operand* op : {&s->base, &s->overlay}) {
        if (const auto* oid = std::get_if<NodeId>(op)) live.insert(*oid);
      }
    }
  }
  std::vector<NodeId> doomed;
  for (auto id : replaced) {
    if (!live.count(id) && store.contains(id) && id.type != NodeType::Jump) doomed.push_back(id);
  }
  if (!doomed.empty()) {
    store.delete_nodes(doomed, [&](NodeId id) { return learner.references(id); });
    report.retired = doomed.size();
    report.retired_ids = doomed;
    std::vector<std::string> names;
    for (auto id : doomed) names.push_back(id.str());
    report.lines.push_back(fmt::format("Retired {} nodes: {}", doomed.size(), fmt::join(names, ",")));
  }
  return report;
}

}  // namespace rtop
