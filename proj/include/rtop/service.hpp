#pragma once

// HTTP boundary around one live agent. A single loop thread owns the agent and its world; every
// mutating request becomes a command on that thread's queue. Reads are served from the state
// published after each command or tick, and from the KB under a shared lock.

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "rtop/agent.hpp"
#include "rtop/environment.hpp"

namespace rtop {

struct ServiceOptions {
  bool realtime = true;       // advance one tick every tick_ms while not paused
  bool start_paused = false;
  // Keeps the service offline this long after a generalization pass finishes (tests use it to
  // observe the offline state).
  std::chrono::milliseconds offline_hold{0};
  std::size_t event_capacity = 100000;
};

struct Response {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

using Query = std::map<std::string, std::string>;

class Service {
 public:
  // The script supplies timed events and speech rules for the live world; stimuli mostly arrive
  // through requests.
  Service(Agent agent, StimulusLibrary library, ServiceOptions options = {},
          StimulusScript script = {});
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  // Transport-independent request handler; `serve` maps HTTP requests onto it.
  Response handle(std::string_view method, std::string_view path, const Query& query = {},
                  std::string_view body = {});

  // Blocks until every command queued so far has run.
  void sync();
  void stop();

  std::string state_json() const;
  // Events with seq > after (all retained events when `after` is empty). Waits up to `timeout`
  // when none are available yet.
  std::vector<AgentEvent> events_since(std::optional<std::uint64_t> after,
                                       std::chrono::milliseconds timeout = std::chrono::milliseconds{0});
  std::vector<std::uint8_t> snapshot() const;
  bool stopped() const;

 private:
  using Command = std::function<void()>;

  void loop();
  // Runs `cmd` on the loop thread and waits for it.
  void run(Command cmd);
  void post(Command cmd);
  void tick();
  void publish();
  void publish_flags();

  Response get_state() const;
  Response post_image(const Query& query, std::string_view body);
  Response post_audio(std::string_view body);
  Response post_reward(std::string_view body);
  Response post_control(std::string_view body);
  Response get_nodes(const Query& query) const;
  Response get_tree(std::string_view id, const Query& query) const;
  Response get_frames() const;
  Response get_frame(std::string_view index) const;
  Response get_events(const Query& query);

  Agent agent_;
  World world_;
  std::int64_t offset_ = 0;
  ServiceOptions options_;

  mutable std::shared_mutex kb_mutex_;  // agent_ and world_; the loop writes, readers share

  mutable std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<Command> queue_;
  bool stopping_ = false;
  bool paused_ = false;
  bool offline_ = false;

  mutable std::mutex state_mutex_;
  std::condition_variable events_cv_;
  std::string state_;
  std::deque<AgentEvent> events_;

  std::thread thread_;
};

// Serves `service` over HTTP until the server is stopped (SIGINT/SIGTERM in the CLI). The event
// stream is `GET /events` as server-sent events, one AgentEvent JSON object per message.
void serve(Service& service, const std::string& host, int port);
// Stops a running `serve` call; safe to call from a signal handler's thread.
void stop_serving();

}  // namespace rtop
