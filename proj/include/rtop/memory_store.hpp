#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rtop/node.hpp"

namespace rtop {

// Two indexed summary attributes per sensory modality.
inline constexpr std::size_t kIndexedAttributes = 2;
using SummaryVector = std::array<double, kIndexedAttributes>;

std::array<std::string_view, kIndexedAttributes> attribute_names(NodeType type);

// Summary attributes for IMG/AUD payloads (raw or merged); nullopt for other payloads.
std::optional<SummaryVector> summary_attributes(const Payload& payload);

struct IndexEntry {
  std::string attribute;
  double value = 0.0;
  NodeId node;
  bool operator==(const IndexEntry&) const = default;
};

// Returns true when something outside the store (an observation path, a trace) still refers to
// the id.
using ReferenceProbe = std::function<bool(NodeId)>;

class MemoryStore {
 public:
  using Counters = std::array<std::uint32_t, kNodeTypeCount>;

  MemoryStore();

  // Stores a new node; merged payloads receive ids in the type's `M` namespace.
  NodeId put(Payload payload, std::int64_t tick);
  // Returns the existing node for an identical action/jump/superimpose payload, else stores it.
  NodeId intern(Payload payload, std::int64_t tick);

  const MemoryNode* find(NodeId id) const;
  const MemoryNode& get(NodeId id) const;
  bool contains(NodeId id) const { return nodes_.count(id) != 0; }
  std::size_t size() const { return nodes_.size(); }

  // Every same-type node whose indexed attributes all lie within +-leeway of the probe's.
  // Ascending id order.
  std::vector<NodeId> candidates(const Payload& probe, std::span<const double> leeway) const;
  std::vector<NodeId> ids_of(NodeType type, bool merged) const;

  // Removes nodes and their index entries. Throws DanglingReference when a surviving group or
  // superimpose node, or the external probe, still references one of them.
  std::size_t delete_nodes(std::span<const NodeId> ids, const ReferenceProbe& external = {});

  const std::map<NodeId, MemoryNode>& nodes() const { return nodes_; }
  std::vector<IndexEntry> index_table() const;
  const Counters& next_serials() const { return next_serial_; }
  const Counters& next_merged_serials() const { return next_merged_serial_; }

  // Snapshot restore: replaces all contents. Index is rebuilt from payloads.
  void restore(Counters next_serial, Counters next_merged_serial, std::vector<MemoryNode> nodes);

 private:
  void validate(const Payload& payload) const;
  void index_add(const MemoryNode& node);
  void index_remove(const MemoryNode& node);
  static std::optional<std::string> intern_key(const Payload& payload);

  std::map<NodeId, MemoryNode> nodes_;
  Counters next_serial_{};
  Counters next_merged_serial_{};
  std::map<std::string, NodeId> interned_;
  // Per modality (image, audio): node -> attributes, plus an ordered view on the first attribute.
  std::array<std::map<NodeId, SummaryVector>, 2> attrs_;
  std::array<std::multimap<double, NodeId>, 2> by_first_;
};

}  // namespace rtop
