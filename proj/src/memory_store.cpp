#include "rtop/memory_store.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "rtop/audio.hpp"
#include "rtop/error.hpp"
#include "rtop/image.hpp"

namespace rtop {

std::array<std::string_view, kIndexedAttributes> attribute_names(NodeType type) {
  if (type == NodeType::Audio) return {"var_amplitude", "mean_cross_rate"};
  return {"mean_lightness", "var_lightness"};
}

std::optional<SummaryVector> summary_attributes(const Payload& payload) {
  if (const auto* img = std::get_if<ImageData>(&payload)) {
    const auto s = image_summary(*img);
    return SummaryVector{s.mean_lightness, s.var_lightness};
  }
  if (const auto* img = std::get_if<ImageMergedData>(&payload)) {
    const auto s = image_summary(*img);
    return SummaryVector{s.mean_lightness, s.var_lightness};
  }
  if (const auto* aud = std::get_if<AudioData>(&payload)) {
    const auto s = audio_summary(*aud);
    return SummaryVector{s.var_amplitude, s.mean_cross_rate};
  }
  if (const auto* aud = std::get_if<AudioMergedData>(&payload)) {
    return SummaryVector{aud->center.var_amplitude, aud->center.mean_cross_rate};
  }
  return std::nullopt;
}

namespace {

int modality(NodeType type) {
  if (type == NodeType::Image) return 0;
  if (type == NodeType::Audio) return 1;
  return -1;
}

}  // namespace

MemoryStore::MemoryStore() {
  next_serial_.fill(1);
  next_merged_serial_.fill(1);
}

void MemoryStore::validate(const Payload& payload) const {
  if (const auto* img = std::get_if<ImageData>(&payload)) {
    for (const auto& p : img->pixels) {
      if (p.h > 7 || p.s > 3 || p.l > 7) throw Error(ErrorKind::Malformed, "pixel out of bit range");
    }
  } else if (const auto* m = std::get_if<ImageMergedData>(&payload)) {
    for (const auto& p : m->pixels) {
      if (p.l_tol < 0.0) throw Error(ErrorKind::Malformed, "negative lightness tolerance");
    }
  } else if (const auto* a = std::get_if<AudioData>(&payload)) {
    rtop::validate(*a);
  } else if (const auto* am = std::get_if<AudioMergedData>(&payload)) {
    if (am->tol.var_amplitude < 0.0 || am->tol.mean_cross_rate < 0.0) {
      throw Error(ErrorKind::Malformed, "negative audio tolerance");
    }
  } else if (const auto* j = std::get_if<JumpSpec>(&payload)) {
    if (j->hop < 1) throw Error(ErrorKind::Malformed, "jump hop must be >= 1");
  } else if (const auto* g = std::get_if<GroupSpec>(&payload)) {
    if (g->members.size() < 2 && !g->is_wildcard) {
      throw Error(ErrorKind::Malformed, "group needs at least two members");
    }
    if (!std::is_sorted(g->members.begin(), g->members.end()) ||
        std::adjacent_find(g->members.begin(), g->members.end()) != g->members.end()) {
      throw Error(ErrorKind::Malformed, "group members must be sorted and distinct");
    }
    for (auto id : g->members) {
      if (id.type == NodeType::Group) throw Error(ErrorKind::Malformed, "groups do not nest");
      if (!contains(id)) throw Error(ErrorKind::DanglingReference, "group member " + id.str());
    }
  } else if (const auto* s = std::get_if<SuperimposeSpec>(&payload)) {
    for (const Operand* op : {&s->base, &s->overlay}) {
      if (const auto* id = std::get_if<NodeId>(op); id && !contains(*id)) {
        throw Error(ErrorKind::DanglingReference, "superimpose operand " + id->str());
      }
    }
  } else if (const auto* sp = std::get_if<SpeechAction>(&payload)) {
    if (sp->phones.empty()) throw Error(ErrorKind::Malformed, "empty speech action");
  }
}

NodeId MemoryStore::put(Payload payload, std::int64_t tick) {
  validate(payload);
  NodeId id;
  id.type = payload_type(payload);
  id.merged = payload_is_merged(payload);
  auto& counter = id.merged ? next_merged_serial_ : next_serial_;
  id.serial = counter[static_cast<std::size_t>(id.type)]++;
  if (auto key = intern_key(payload)) interned_.emplace(*key, id);
  auto [it, _] = nodes_.emplace(id, MemoryNode{id, std::move(payload), tick});
  index_add(it->second);
  return id;
}

NodeId MemoryStore::intern(Payload payload, std::int64_t tick) {
  if (auto key = intern_key(payload)) {
    if (auto it = interned_.find(*key); it != interned_.end()) return it->second;
  }
  return put(std::move(payload), tick);
}

std::optional<std::string> MemoryStore::intern_key(const Payload& payload) {
  if (const auto* f = std::get_if<FocusAction>(&payload)) {
    return fmt::format("IFA:{},{},{}", f->dx, f->dy, f->dzoom);
  }
  if (const auto* a = std::get_if<AttentionAction>(&payload)) {
    return fmt::format("ATT:{}", to_string(a->target));
  }
  if (const auto* s = std::get_if<SpeechAction>(&payload)) return "SPK:" + s->text();
  if (const auto* j = std::get_if<JumpSpec>(&payload)) return fmt::format("JMP:{}", j->hop);
  if (const auto* s = std::get_if<SuperimposeSpec>(&payload)) {
    return fmt::format("SIA:{},{}", operand_label(s->base), operand_label(s->overlay));
  }
  return std::nullopt;
}

const MemoryNode* MemoryStore::find(NodeId id) const {
  auto it = nodes_.find(id);
  return it == nodes_.end() ? nullptr : &it->second;
}

const MemoryNode& MemoryStore::get(NodeId id) const {
  if (const auto* n = find(id)) return *n;
  throw Error(ErrorKind::NotFound, "unknown node " + id.str());
}

void MemoryStore::index_add(const MemoryNode& node) {
  const int m = modality(node.id.type);
  if (m < 0) return;
  auto attrs = summary_attributes(node.payload);
  if (!attrs) return;
  attrs_[static_cast<std::size_t>(m)][node.id] = *attrs;
  by_first_[static_cast<std::size_t>(m)].emplace((*attrs)[0], node.id);
}

void MemoryStore::index_remove(const MemoryNode& node) {
  const int m = modality(node.id.type);
  if (m < 0) return;
  auto& attrs = attrs_[static_cast<std::size_t>(m)];
  auto it = attrs.find(node.id);
  if (it == attrs.end()) return;
  auto& ordered = by_first_[static_cast<std::size_t>(m)];
  auto [lo, hi] = ordered.equal_range(it->second[0]);
  for (auto o = lo; o != hi; ++o) {
    if (o->second == node.id) {
      ordered.erase(o);
      break;
    }
  }
  attrs.erase(it);
}

std::vector<NodeId> MemoryStore::candidates(const Payload& probe,
                                            std::span<const double> leeway) const {
  std::vector<NodeId> out;
  const NodeType type = payload_type(probe);
  const int m = modality(type);
  auto probe_attrs = summary_attributes(probe);
  if (m < 0 || !probe_attrs) return out;
  const auto lee = [&](std::size_t i) { return i < leeway.size() ? leeway[i] : 0.0; };
  const auto& ordered = by_first_[static_cast<std::size_t>(m)];
  const auto& attrs = attrs_[static_cast<std::size_t>(m)];
  auto lo = ordered.lower_bound((*probe_attrs)[0] - lee(0));
  for (auto it = lo; it != ordered.end() && it->first <= (*probe_attrs)[0] + lee(0); ++it) {
    const auto& a = attrs.at(it->second);
    bool ok = true;
    for (std::size_t i = 1; i < kIndexedAttributes; ++i) {
      if (std::abs(a[i] - (*probe_attrs)[i]) > lee(i)) {
        ok = false;
        break;
      }
    }
    if (ok) out.push_back(it->second);
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<NodeId> MemoryStore::ids_of(NodeType type, bool merged) const {
  std::vector<NodeId> out;
  const NodeId lo{type, merged, 0};
  for (auto it = nodes_.lower_bound(lo); it != nodes_.end(); ++it) {
    if (it->first.type != type || it->first.merged != merged) break;
    out.push_back(it->first);
  }
  return out;
}

std::size_t MemoryStore::delete_nodes(std::span<const NodeId> ids, const ReferenceProbe& external) {
  std::vector<NodeId> doomed(ids.begin(), ids.end());
  std::sort(doomed.begin(), doomed.end());
  doomed.erase(std::unique(doomed.begin(), doomed.end()), doomed.end());
  auto is_doomed = [&](NodeId id) { return std::binary_search(doomed.begin(), doomed.end(), id); };

  for (auto id : doomed) {
    if (!contains(id)) throw Error(ErrorKind::NotFound, "cannot delete unknown node " + id.str());
    if (external && external(id)) {
      throw Error(ErrorKind::DanglingReference, id.str() + " is still referenced by a path");
    }
  }
  for (const auto& [nid, node] : nodes_) {
    if (is_doomed(nid)) continue;
    if (const auto* g = std::get_if<GroupSpec>(&node.payload)) {
      for (auto m : g->members) {
        if (is_doomed(m)) {
          throw Error(ErrorKind::DanglingReference, m.str() + " is a member of " + nid.str());
        }
      }
    } else if (const auto* s = std::get_if<SuperimposeSpec>(&node.payload)) {
      for (const Operand* op : {&s->base, &s->overlay}) {
        if (const auto* oid = std::get_if<NodeId>(op); oid && is_doomed(*oid)) {
          throw Error(ErrorKind::DanglingReference, oid->str() + " is an operand of " + nid.str());
        }
      }
    }
  }
  for (auto id : doomed) {
    auto it = nodes_.find(id);
    index_remove(it->second);
    if (auto key = intern_key(it->second.payload)) interned_.erase(*key);
    nodes_.erase(it);
  }
  return doomed.size();
}

std::vector<IndexEntry> MemoryStore::index_table() const {
  std::vector<IndexEntry> out;
  for (std::size_t m = 0; m < attrs_.size(); ++m) {
    for (const auto& [id, a] : attrs_[m]) {
      const auto names = attribute_names(id.type);
      for (std::size_t i = 0; i < kIndexedAttributes; ++i) {
        out.push_back(IndexEntry{std::string(names[i]), a[i], id});
      }
    }
  }
  return out;
}

void MemoryStore::restore(Counters next_serial, Counters next_merged_serial,
                          std::vector<MemoryNode> nodes) {
  nodes_.clear();
  interned_.clear();
  for (auto& a : attrs_) a.clear();
  for (auto& b : by_first_) b.clear();
  next_serial_ = next_serial;
  next_merged_serial_ = next_merged_serial;
  for (auto& n : nodes) {
    const NodeId id = n.id;
    if (auto key = intern_key(n.payload)) interned_.emplace(*key, id);
    auto [it, _] = nodes_.emplace(id, std::move(n));
    index_add(it->second);
  }
}

}  // namespace rtop
