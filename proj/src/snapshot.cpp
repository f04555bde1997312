#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "rtop/agent.hpp"
#include "rtop/codec.hpp"
#include "rtop/error.hpp"

namespace rtop {

namespace {

constexpr char kMagic[] = "RTOPKB";

void write_connections(ByteWriter& w, const std::vector<Connection>& cs) {
  w.u32(static_cast<std::uint32_t>(cs.size()));
  for (const auto& c : cs) {
    w.id(c.child);
    w.u64(c.count);
    w.i64(c.delta_p_sum);
    write_connections(w, c.children);
  }
}

std::vector<Connection> read_connections(ByteReader& r) {
  std::vector<Connection> cs(r.count(26));
  for (auto& c : cs) {
    c.child = r.id();
    c.count = r.u64();
    c.delta_p_sum = r.i64();
    c.children = read_connections(r);
  }
  return cs;
}

void write_trees(ByteWriter& w, const std::map<NodeId, ObservationTree>& trees) {
  w.u32(static_cast<std::uint32_t>(trees.size()));
  for (const auto& [root, t] : trees) {
    w.id(root);
    w.u64(t.count);
    write_connections(w, t.branches);
  }
}

std::map<NodeId, ObservationTree> read_trees(ByteReader& r) {
  std::map<NodeId, ObservationTree> out;
  const auto n = r.count(18);
  for (std::size_t i = 0; i < n; ++i) {
    ObservationTree t;
    t.root = r.id();
    t.count = r.u64();
    t.branches = read_connections(r);
    out.emplace(t.root, std::move(t));
  }
  return out;
}

void write_future_node(ByteWriter& w, const FutureNode& n) {
  w.id(n.id);
  w.u64(n.count);
  w.f64(n.probability);
  w.f64(n.delta_p);
  w.u32(static_cast<std::uint32_t>(n.children.size()));
  for (const auto& c : n.children) write_future_node(w, c);
}

FutureNode read_future_node(ByteReader& r) {
  FutureNode n;
  n.id = r.id();
  n.count = r.u64();
  n.probability = r.f64();
  n.delta_p = r.f64();
  n.children.resize(r.count(34));
  for (auto& c : n.children) c = read_future_node(r);
  return n;
}

void write_futures(ByteWriter& w, const std::vector<FutureTree>& ts) {
  w.u32(static_cast<std::uint32_t>(ts.size()));
  for (const auto& t : ts) {
    w.u8(static_cast<std::uint8_t>(t.kind));
    w.id(t.anchor);
    w.u32(static_cast<std::uint32_t>(t.context.size()));
    for (auto id : t.context) w.id(id);
    write_future_node(w, t.root);
    w.u32(static_cast<std::uint32_t>(t.cursor.size()));
    for (auto c : t.cursor) w.u64(c);
    w.u32(t.skip_budget);
    w.i64(t.age);
    w.boolean(t.violated);
  }
}

std::vector<FutureTree> read_futures(ByteReader& r) {
  std::vector<FutureTree> ts(r.count(40));
  for (auto& t : ts) {
    const auto kind = r.u8();
    if (kind > 1) throw Error(ErrorKind::Malformed, "bad path kind");
    t.kind = static_cast<PathKind>(kind);
    t.anchor = r.id();
    t.context.resize(r.count(6));
    for (auto& id : t.context) id = r.id();
    t.root = read_future_node(r);
    t.cursor.resize(r.count(8));
    for (auto& c : t.cursor) c = r.u64();
    t.skip_budget = r.u32();
    t.age = r.i64();
    t.violated = r.boolean();
  }
  return ts;
}

void write_ids(ByteWriter& w, const std::vector<NodeId>& ids) {
  w.u32(static_cast<std::uint32_t>(ids.size()));
  for (auto id : ids) w.id(id);
}

std::vector<NodeId> read_ids(ByteReader& r) {
  std::vector<NodeId> ids(r.count(6));
  for (auto& id : ids) id = r.id();
  return ids;
}

}  // namespace

std::vector<std::uint8_t> save_snapshot(const Agent& a) {
  ByteWriter w;
  w.bytes(kMagic, 6);
  w.u32(kSnapshotVersion);
  w.str(nlohmann::json(a.cfg_).dump());

  // Store.
  for (auto c : a.store_.next_serials()) w.u32(c);
  for (auto c : a.store_.next_merged_serials()) w.u32(c);
  w.u32(static_cast<std::uint32_t>(a.store_.size()));
  for (const auto& [id, node] : a.store_.nodes()) {
    w.id(id);
    w.i64(node.created_at);
    w.payload(node.payload);
  }

  // Learner.
  const auto ls = a.learner_.state();
  w.u32(static_cast<std::uint32_t>(ls.trace.size()));
  for (const auto& e : ls.trace) {
    w.id(e.node);
    w.i64(e.tick);
    w.f64(e.p_net_at);
  }
  w.u64(ls.next_direct);
  w.u64(ls.next_jump);
  write_trees(w, ls.direct);
  write_trees(w, ls.jump);
  w.u32(static_cast<std::uint32_t>(ls.touched.size()));
  for (const auto& [kind, id] : ls.touched) {
    w.u8(static_cast<std::uint8_t>(kind));
    w.id(id);
  }

  // Agent.
  w.f64(a.pp_.hunger);
  w.f64(a.pp_.comfort);
  w.u8(static_cast<std::uint8_t>(a.attention_.focus));
  w.i64(a.attention_.visual_focus.x);
  w.i64(a.attention_.visual_focus.y);
  w.i64(a.attention_.visual_focus.side);
  w.str(a.rng_.save());
  write_futures(w, a.predictions_.active);
  write_futures(w, a.predictions_.background);
  write_ids(w, a.recent_);
  w.u32(static_cast<std::uint32_t>(a.canvas_.frames.size()));
  for (const auto& f : a.canvas_.frames) w.payload(f);
  write_ids(w, a.canvas_.stored);
  w.u32(static_cast<std::uint32_t>(a.decisions_.size()));
  for (const auto& [id, n] : a.decisions_) {
    w.id(id);
    w.u64(n);
  }
  w.i64(a.next_tick_);
  w.i64(a.last_feed_tick_);
  w.i64(a.last_action_tick_);
  w.boolean(a.prev_visual_.has_value());
  if (a.prev_visual_) {
    w.f64(a.prev_visual_->mean_lightness);
    w.f64(a.prev_visual_->var_lightness);
  }
  w.f64(a.prev_audio_.var_amplitude);
  w.f64(a.prev_audio_.mean_cross_rate);
  w.boolean(a.pending_audio_.has_value());
  if (a.pending_audio_) w.payload(*a.pending_audio_);
  w.boolean(a.audio_fresh_);
  w.f64(a.visual_delta_);
  w.f64(a.audio_delta_);
  w.u8(static_cast<std::uint8_t>(a.return_focus_));
  w.id(a.background_anchor_);
  w.i64(a.frame_w_);
  w.i64(a.frame_h_);
  w.u64(a.thought_remaining_);
  w.boolean(a.thought_spent_);
  w.u64(a.seq_);
  return w.take();
}

Agent load_snapshot(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  char magic[6];
  r.bytes(magic, 6);
  if (std::string_view(magic, 6) != std::string_view(kMagic, 6)) {
    throw Error(ErrorKind::Malformed, "not a knowledge-base snapshot");
  }
  const auto version = r.u32();
  if (version != kSnapshotVersion) {
    throw Error(ErrorKind::Malformed, fmt::format("unsupported snapshot version {}", version));
  }
  SessionConfig cfg;
  try {
    cfg = nlohmann::json::parse(r.str()).get<SessionConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Malformed, std::string("snapshot config: ") + e.what());
  }
  Agent a(cfg);

  MemoryStore::Counters serials{}, merged{};
  for (auto& c : serials) c = r.u32();
  for (auto& c : merged) c = r.u32();
  std::vector<MemoryNode> nodes(r.count(15));
  for (auto& n : nodes) {
    n.id = r.id();
    n.created_at = r.i64();
    n.payload = r.payload();
  }
  a.store_.restore(serials, merged, std::move(nodes));

  ObservationLearner::State ls;
  ls.trace.resize(r.count(22));
  for (auto& e : ls.trace) {
    e.node = r.id();
    e.tick = r.i64();
    e.p_net_at = r.f64();
  }
  ls.next_direct = r.u64();
  ls.next_jump = r.u64();
  ls.direct = read_trees(r);
  ls.jump = read_trees(r);
  const auto nt = r.count(7);
  for (std::size_t i = 0; i < nt; ++i) {
    const auto kind = r.u8();
    if (kind > 1) throw Error(ErrorKind::Malformed, "bad path kind");
    ls.touched.emplace(static_cast<PathKind>(kind), r.id());
  }
  a.learner_.restore(std::move(ls));

  a.pp_.hunger = r.f64();
  a.pp_.comfort = r.f64();
  const auto focus = r.u8();
  if (focus > 2) throw Error(ErrorKind::Malformed, "bad attention target");
  a.attention_.focus = static_cast<AttentionTarget>(focus);
  a.attention_.visual_focus.x = static_cast<int>(r.i64());
  a.attention_.visual_focus.y = static_cast<int>(r.i64());
  a.attention_.visual_focus.side = static_cast<int>(r.i64());
  a.rng_.load(r.str());
  a.predictions_.active = read_futures(r);
  a.predictions_.background = read_futures(r);
  a.recent_ = read_ids(r);
  const auto nf = r.count(1 + kImagePixels * 3);
  for (std::size_t i = 0; i < nf; ++i) {
    auto p = r.payload();
    if (!std::holds_alternative<ImageData>(p)) throw Error(ErrorKind::Malformed, "bad canvas frame");
    a.canvas_.frames.push_back(std::get<ImageData>(p));
  }
  a.canvas_.stored = read_ids(r);
  const auto nd = r.count(14);
  for (std::size_t i = 0; i < nd; ++i) {
    const auto id = r.id();
    a.decisions_[id] = r.u64();
  }
  a.next_tick_ = r.i64();
  a.last_feed_tick_ = r.i64();
  a.last_action_tick_ = r.i64();
  if (r.boolean()) {
    ImageSummary s;
    s.mean_lightness = r.f64();
    s.var_lightness = r.f64();
    a.prev_visual_ = s;
  }
  a.prev_audio_.var_amplitude = r.f64();
  a.prev_audio_.mean_cross_rate = r.f64();
  if (r.boolean()) {
    auto p = r.payload();
    if (!std::holds_alternative<AudioData>(p)) throw Error(ErrorKind::Malformed, "bad pending audio");
    a.pending_audio_ = std::get<AudioData>(std::move(p));
  }
  a.audio_fresh_ = r.boolean();
  a.visual_delta_ = r.f64();
  a.audio_delta_ = r.f64();
  const auto ret = r.u8();
  if (ret > 2) throw Error(ErrorKind::Malformed, "bad attention target");
  a.return_focus_ = static_cast<AttentionTarget>(ret);
  a.background_anchor_ = r.id();
  a.frame_w_ = static_cast<int>(r.i64());
  a.frame_h_ = static_cast<int>(r.i64());
  a.thought_remaining_ = r.u64();
  a.thought_spent_ = r.boolean();
  a.seq_ = r.u64();
  if (!r.done()) throw Error(ErrorKind::Malformed, "trailing snapshot bytes");
  return a;
}

void write_snapshot(const Agent& agent, const std::filesystem::path& path) {
  const auto bytes = save_snapshot(agent);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

Agent read_snapshot(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return load_snapshot(bytes);
}

Agent replay_events(const SessionConfig& cfg, const std::vector<AgentEvent>& events) {
  Agent a(cfg);
  for (const auto& e : events) {
    if (e.kind == EventKind::NodeCaptured) {
      const auto id = parse_node_id(e.payload.at("node").get<std::string>());
      if (!id) throw Error(ErrorKind::Parse, "bad node id in event");
      if (e.payload.at("new").get<bool>()) {
        auto payload = decode_payload_hex(e.payload.at("payload").get<std::string>());
        const NodeId got = is_sensory(id->type) && id->type != NodeType::Superimpose
                               ? a.store_.put(std::move(payload), e.tick)
                               : a.store_.intern(std::move(payload), e.tick);
        if (got != *id) {
          throw Error(ErrorKind::Malformed,
                      fmt::format("replay diverged: {} stored as {}", id->str(), got.str()));
        }
      }
      a.next_tick_ = e.tick + 1;
      a.learner_.append(TraceEntry{*id, e.tick, e.payload.at("p_net").get<double>()});
    } else if (e.kind == EventKind::GeneralizationReport) {
      a.next_tick_ = e.tick + 1;
      run_generalization(a.store_, a.learner_, cfg.match, cfg.generalization, e.tick);
    }
  }
  return a;
}

}  // namespace rtop
