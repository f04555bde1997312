#include "rtop/service.hpp"

#include <charconv>
#include <csignal>
#include <future>

#include <fmt/format.h>

#include "httplib.h"

#include "rtop/audio.hpp"
#include "rtop/error.hpp"
#include "rtop/image.hpp"
#include "rtop/session.hpp"

namespace rtop {

using json = nlohmann::json;

namespace {

Response json_response(const json& body, int status = 200) {
  return Response{status, "application/json", body.dump()};
}

Response error_response(int status, std::string_view message) {
  return json_response({{"error", message}}, status);
}

int status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::NotFound: return 404;
    case ErrorKind::OutOfBounds: return 404;
    default: return 400;
  }
}

json event_json(const AgentEvent& e) {
  return {{"tick", e.tick}, {"seq", e.seq}, {"kind", to_string(e.kind)}, {"payload", e.payload}};
}

std::optional<AttentionTarget> parse_attention(std::string_view s) {
  if (s == "visual" || s == "IMG") return AttentionTarget::Visual;
  if (s == "audio" || s == "AUD") return AttentionTarget::Audio;
  if (s == "thought" || s == "THT") return AttentionTarget::Thought;
  return std::nullopt;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
  T value{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return value;
}

std::string label_of(const MemoryStore& store, NodeId id) {
  const auto* n = store.find(id);
  return n ? node_label(*n) : id.str();
}

json tree_json(const FutureTree& t, const MemoryStore& store) {
  json context = json::array();
  for (auto id : t.context) context.push_back(label_of(store, id));
  const auto& at = t.at_cursor();
  json next = json::array();
  for (const auto& c : at.children) {
    next.push_back({{"node", label_of(store, c.id)}, {"p", c.probability}, {"delta", c.delta_p}});
  }
  return {{"kind", t.kind == PathKind::Direct ? "direct" : "jump"},
          {"anchor", label_of(store, t.anchor)},
          {"context", context},
          {"cursor", label_of(store, at.id)},
          {"depth", t.cursor.size()},
          {"rho", t.cursor_rho()},
          {"age", t.age},
          {"violated", t.violated},
          {"next", next}};
}

}  // namespace

Service::Service(Agent agent, StimulusLibrary library, ServiceOptions options,
                 StimulusScript script)
    : agent_(std::move(agent)),
      world_(std::move(script), std::move(library)),
      offset_(agent_.next_tick()),
      options_(options),
      paused_(options.start_paused) {
  agent_.clear_events();
  publish();
  thread_ = std::thread([this] { loop(); });
}

Service::~Service() { stop(); }

void Service::stop() {
  {
    std::lock_guard lock(queue_mutex_);
    if (stopping_ && !thread_.joinable()) return;
    stopping_ = true;
  }
  queue_cv_.notify_all();
  events_cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

bool Service::stopped() const {
  std::lock_guard lock(queue_mutex_);
  return stopping_;
}

void Service::loop() {
  const auto period = std::chrono::milliseconds(std::max(agent_.config().tick_ms, 1));
  auto next_tick = std::chrono::steady_clock::now() + period;
  for (;;) {
    Command cmd;
    {
      std::unique_lock lock(queue_mutex_);
      const auto ready = [&] { return stopping_ || !queue_.empty(); };
      if (options_.realtime && !paused_ && !offline_) {
        queue_cv_.wait_until(lock, next_tick, ready);
      } else {
        queue_cv_.wait(lock, ready);
      }
      if (stopping_) break;
      if (!queue_.empty()) {
        cmd = std::move(queue_.front());
        queue_.pop_front();
      }
    }
    if (cmd) {
      cmd();
      continue;
    }
    if (std::chrono::steady_clock::now() >= next_tick) {
      tick();
      next_tick += period;
      // Never try to catch up on missed ticks after a long command.
      next_tick = std::max(next_tick, std::chrono::steady_clock::now());
    }
  }
  std::lock_guard lock(queue_mutex_);
  queue_.clear();  // waiters see a broken promise
}

void Service::post(Command cmd) {
  {
    std::lock_guard lock(queue_mutex_);
    if (stopping_) throw Error(ErrorKind::Precondition, "service stopped");
    queue_.push_back(std::move(cmd));
  }
  queue_cv_.notify_all();
}

void Service::run(Command cmd) {
  auto done = std::make_shared<std::promise<void>>();
  auto result = done->get_future();
  post([cmd = std::move(cmd), done] {
    try {
      cmd();
      done->set_value();
    } catch (...) {
      done->set_exception(std::current_exception());
    }
  });
  result.get();
}

void Service::sync() {
  run([] {});
}

void Service::tick() {
  {
    std::unique_lock lock(kb_mutex_);
    step_world(agent_, world_, offset_);
  }
  publish();
}

void Service::publish_flags() {
  bool paused = false;
  bool offline = false;
  {
    std::lock_guard lock(queue_mutex_);
    paused = paused_;
    offline = offline_;
  }
  std::lock_guard lock(state_mutex_);
  auto state = json::parse(state_);
  state["paused"] = paused;
  state["offline"] = offline;
  state_ = state.dump();
}

void Service::publish() {
  json state;
  std::vector<AgentEvent> fresh;
  {
    std::shared_lock kb(kb_mutex_);
    const auto& pp = agent_.pleasure();
    const auto& att = agent_.attention();
    json active = json::array();
    for (const auto& t : agent_.predictions().active) active.push_back(tree_json(t, agent_.store()));
    bool paused = false;
    bool offline = false;
    {
      std::lock_guard lock(queue_mutex_);
      paused = paused_;
      offline = offline_;
    }
    state = {{"tick", agent_.next_tick()},
             {"attention", to_string(att.focus)},
             {"focus", {att.visual_focus.x, att.visual_focus.y, att.visual_focus.side}},
             {"p_net", pp.p_net()},
             {"hunger", pp.hunger},
             {"comfort", pp.comfort},
             {"happiness", agent_.happiness()},
             {"paused", paused},
             {"offline", offline || agent_.offline()},
             {"nodes", agent_.store().size()},
             {"frames", agent_.canvas().frames.size()},
             {"active_trees", active}};
    fresh = agent_.events();
  }
  {
    std::unique_lock kb(kb_mutex_);
    agent_.clear_events();
  }
  {
    std::lock_guard lock(state_mutex_);
    for (auto& e : fresh) events_.push_back(std::move(e));
    while (events_.size() > options_.event_capacity) events_.pop_front();
    state["last_seq"] = events_.empty() ? json(nullptr) : json(events_.back().seq);
    state_ = state.dump();
  }
  events_cv_.notify_all();
}

std::string Service::state_json() const {
  std::lock_guard lock(state_mutex_);
  return state_;
}

std::vector<AgentEvent> Service::events_since(std::optional<std::uint64_t> after,
                                              std::chrono::milliseconds timeout) {
  std::unique_lock lock(state_mutex_);
  const auto newer = [&](const AgentEvent& e) { return !after || e.seq > *after; };
  const auto available = [&] { return !events_.empty() && newer(events_.back()); };
  if (!available() && timeout.count() > 0) {
    events_cv_.wait_for(lock, timeout, [&] { return available() || stopped(); });
  }
  std::vector<AgentEvent> out;
  for (const auto& e : events_) {
    if (newer(e)) out.push_back(e);
  }
  return out;
}

std::vector<std::uint8_t> Service::snapshot() const {
  std::shared_lock lock(kb_mutex_);
  return save_snapshot(agent_);
}

Response Service::handle(std::string_view method, std::string_view path, const Query& query,
                         std::string_view body) {
  try {
    const bool get = method == "GET";
    const bool post = method == "POST";
    if (path == "/state") return get ? get_state() : error_response(405, "GET only");
    if (path == "/events") return get ? get_events(query) : error_response(405, "GET only");
    if (path == "/kb/nodes") return get ? get_nodes(query) : error_response(405, "GET only");
    if (path.starts_with("/kb/tree/")) {
      return get ? get_tree(path.substr(9), query) : error_response(405, "GET only");
    }
    if (path == "/projection/frames") return get ? get_frames() : error_response(405, "GET only");
    if (path.starts_with("/projection/frames/")) {
      return get ? get_frame(path.substr(19)) : error_response(405, "GET only");
    }
    const bool mutating = path == "/stimulus/image" || path == "/stimulus/audio" ||
                          path == "/reward" || path == "/control";
    if (!mutating) return error_response(404, fmt::format("no route {}", path));
    if (!post) return error_response(405, "POST only");
    {
      std::lock_guard lock(queue_mutex_);
      if (stopping_) return error_response(503, "service stopped");
      if (offline_) return error_response(409, "generalization pass running");
    }
    if (path == "/stimulus/image") return post_image(query, body);
    if (path == "/stimulus/audio") return post_audio(body);
    if (path == "/reward") return post_reward(body);
    return post_control(body);
  } catch (const Error& e) {
    return error_response(status_for(e.kind()), e.what());
  } catch (const json::exception& e) {
    return error_response(400, e.what());
  } catch (const std::future_error&) {
    return error_response(503, "service stopped");
  }
}

Response Service::get_state() const {
  return Response{200, "application/json", state_json()};
}

// Stimuli and rewards are delivered by stepping one tick right away, so their effect is visible
// in the response and the next /state whether or not the clock is running.
Response Service::post_image(const Query& query, std::string_view body) {
  std::int64_t hold = 0;
  if (auto it = query.find("hold"); it != query.end()) {
    const auto h = parse_number<std::int64_t>(it->second);
    if (!h || *h < 0) return error_response(400, "hold must be a non-negative tick count");
    hold = *h;
  }
  Raster raster = decode_raster(std::vector<std::uint8_t>(body.begin(), body.end()));
  json result;
  run([&] {
    {
      std::unique_lock lock(kb_mutex_);
      world_.inject_image(std::move(raster), hold);
      const auto out = step_world(agent_, world_, offset_);
      result = {{"tick", agent_.next_tick() - 1},
                {"captured", out.foreground ? json(out.foreground->str()) : json(nullptr)}};
    }
    publish();
  });
  return json_response(result);
}

Response Service::post_audio(std::string_view body) {
  std::optional<AudioData> audio;
  std::string label = "upload";
  if (body.starts_with("RIFF")) {
    audio = decode_wav(body);
  } else {
    const auto j = json::parse(body);
    label = j.at("token").get<std::string>();
  }
  json result;
  run([&] {
    {
      std::unique_lock lock(kb_mutex_);
      if (!audio) audio = world_.library().audio(label);
      world_.inject_audio(std::move(*audio), label);
      const auto out = step_world(agent_, world_, offset_);
      result = {{"tick", agent_.next_tick() - 1},
                {"captured", out.foreground ? json(out.foreground->str()) : json(nullptr)}};
    }
    publish();
  });
  return json_response(result);
}

Response Service::post_reward(std::string_view body) {
  const auto j = json::parse(body);
  const bool feed = j.value("feed", false);
  const bool has_comfort = j.contains("comfort_delta");
  if (!feed && !has_comfort) return error_response(400, "expected feed or comfort_delta");
  const double delta = has_comfort ? j.at("comfort_delta").get<double>() : 0.0;
  run([&] {
    {
      std::unique_lock lock(kb_mutex_);
      if (feed) world_.inject_feed();
      if (has_comfort) world_.inject_comfort(delta);
      step_world(agent_, world_, offset_);
    }
    publish();
  });
  return Response{200, "application/json", state_json()};
}

Response Service::post_control(std::string_view body) {
  const auto j = json::parse(body);
  const auto command = j.at("command").get<std::string>();
  if (command == "pause" || command == "resume") {
    run([&] {
      {
        std::lock_guard lock(queue_mutex_);
        paused_ = command == "pause";
      }
      publish();
    });
    return get_state();
  }
  if (command == "step") {
    const auto n = j.value("n", 1);
    if (n < 0) return error_response(400, "n must be non-negative");
    run([&] {
      for (int i = 0; i < n; ++i) tick();
    });
    return get_state();
  }
  if (command == "set-attention") {
    const auto target = parse_attention(j.at("target").get<std::string>());
    if (!target) return error_response(400, "target must be visual, audio or thought");
    run([&] {
      {
        std::unique_lock lock(kb_mutex_);
        agent_.set_attention(*target);
      }
      publish();
    });
    return get_state();
  }
  if (command == "generalize") {
    // The request returns once the service is marked offline; the pass itself runs on the loop.
    {
      std::lock_guard lock(queue_mutex_);
      if (offline_) return error_response(409, "generalization pass running");
      offline_ = true;
    }
    publish_flags();
    post([this] {
      {
        std::unique_lock lock(kb_mutex_);
        agent_.generalize();
      }
      publish();
      if (options_.offline_hold.count() > 0) std::this_thread::sleep_for(options_.offline_hold);
      {
        std::lock_guard lock(queue_mutex_);
        offline_ = false;
      }
      publish();
    });
    return get_state();
  }
  return error_response(400, fmt::format("unknown command {}", command));
}

Response Service::get_nodes(const Query& query) const {
  std::optional<NodeType> type;
  if (auto it = query.find("type"); it != query.end() && !it->second.empty()) {
    type = parse_type_tag(it->second);
    if (!type) return error_response(400, fmt::format("unknown node type {}", it->second));
  }
  json nodes = json::array();
  std::shared_lock lock(kb_mutex_);
  for (const auto& [id, node] : agent_.store().nodes()) {
    if (type && id.type != *type) continue;
    nodes.push_back({{"id", id.str()}, {"label", node_label(node)}, {"created", node.created_at}});
  }
  return json_response(nodes);
}

Response Service::get_tree(std::string_view id, const Query& query) const {
  const auto node = parse_node_id(id);
  if (!node) return error_response(400, fmt::format("malformed node id {}", id));
  std::size_t depth = 4;
  if (auto it = query.find("depth"); it != query.end()) {
    const auto d = parse_number<std::size_t>(it->second);
    if (!d) return error_response(400, "depth must be a non-negative integer");
    depth = *d;
  }
  std::shared_lock lock(kb_mutex_);
  return Response{200, "text/plain", inspect(agent_, *node, depth)};
}

Response Service::get_frames() const {
  json frames = json::array();
  std::shared_lock lock(kb_mutex_);
  const auto& canvas = agent_.canvas();
  for (std::size_t i = 0; i < canvas.frames.size(); ++i) {
    frames.push_back({{"index", i},
                      {"stored", i < canvas.stored.size() ? json(canvas.stored[i].str())
                                                          : json(nullptr)}});
  }
  return json_response({{"count", canvas.frames.size()}, {"frames", frames}});
}

Response Service::get_frame(std::string_view index) const {
  const auto i = parse_number<std::size_t>(index);
  if (!i) return error_response(400, "frame index must be an integer");
  std::shared_lock lock(kb_mutex_);
  const auto& frames = agent_.canvas().frames;
  if (*i >= frames.size()) return error_response(404, fmt::format("no frame {}", *i));
  return Response{200, "image/x-portable-pixmap", encode_ppm(render(frames[*i]))};
}

Response Service::get_events(const Query& query) {
  std::optional<std::uint64_t> after;
  if (auto it = query.find("since"); it != query.end()) {
    after = parse_number<std::uint64_t>(it->second);
    if (!after) return error_response(400, "since must be an event sequence number");
  }
  json out = json::array();
  for (const auto& e : events_since(after)) out.push_back(event_json(e));
  return json_response(out);
}

namespace {

httplib::Server* g_server = nullptr;
std::mutex g_server_mutex;

}  // namespace

void stop_serving() {
  std::lock_guard lock(g_server_mutex);
  if (g_server) g_server->stop();
}

void serve(Service& service, const std::string& host, int port) {
  httplib::Server server;
  const auto forward = [&service](const httplib::Request& req, httplib::Response& res) {
    Query query;
    for (const auto& [k, v] : req.params) query[k] = v;
    const auto r = service.handle(req.method, req.path, query, req.body);
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  server.Get("/events", [&service](const httplib::Request& req, httplib::Response& res) {
    // Without `since` the stream starts after the latest event already published.
    auto cursor = std::make_shared<std::optional<std::uint64_t>>();
    if (req.has_param("since")) {
      *cursor = parse_number<std::uint64_t>(req.get_param_value("since"));
      if (!*cursor) {
        res.status = 400;
        res.set_content(json{{"error", "since must be an event sequence number"}}.dump(),
                        "application/json");
        return;
      }
    } else if (const auto last = json::parse(service.state_json()).at("last_seq"); !last.is_null()) {
      *cursor = last.get<std::uint64_t>();
    }
    res.set_header("Cache-Control", "no-cache");
    res.set_chunked_content_provider(
        "text/event-stream", [&service, cursor](std::size_t, httplib::DataSink& sink) {
          if (service.stopped()) {
            sink.done();
            return false;
          }
          const auto batch = service.events_since(*cursor, std::chrono::milliseconds{1000});
          for (const auto& e : batch) {
            const auto msg = fmt::format("id: {}\nevent: {}\ndata: {}\n\n", e.seq, to_string(e.kind),
                                         event_json(e).dump());
            if (!sink.write(msg.data(), msg.size())) return false;
            *cursor = e.seq;
          }
          if (batch.empty()) {
            static constexpr std::string_view keepalive = ": keepalive\n\n";
            if (!sink.write(keepalive.data(), keepalive.size())) return false;
          }
          return true;
        });
  });
  server.Get(R"(/.*)", forward);
  server.Post(R"(/.*)", forward);
  {
    std::lock_guard lock(g_server_mutex);
    g_server = &server;
  }
  const bool ok = server.listen(host, port);
  {
    std::lock_guard lock(g_server_mutex);
    g_server = nullptr;
  }
  if (!ok && !service.stopped()) {
    throw Error(ErrorKind::Io, fmt::format("cannot listen on {}:{}", host, port));
  }
}

}  // namespace rtop
