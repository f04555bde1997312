#include "rtop/session.hpp"

#include <fmt/format.h>

#include "rtop/error.hpp"

namespace rtop {

StepOutcome step_world(Agent& agent, World& world, std::int64_t tick_offset) {
  TickInput in = world.step();
  in.tick += tick_offset;
  auto out = agent.step(in);
  if (out.speech) world.echo_speech(*out.speech);
  return out;
}

SessionResult run_session(const SessionConfig& cfg, const StimulusScript& script,
                          StimulusLibrary library, std::optional<Agent> kb_in) {
  Agent agent = kb_in ? std::move(*kb_in) : Agent(cfg);
  agent.clear_events();
  World world(script, std::move(library));
  const std::int64_t offset = agent.next_tick();
  const std::size_t log_start = agent.action_log().size();
  std::size_t ticks = 0;
  while (!world.finished()) {
    step_world(agent, world, offset);
    ++ticks;
  }
  std::vector<AgentEvent> events = agent.events();
  std::vector<std::string> log(agent.action_log().begin() + static_cast<std::ptrdiff_t>(log_start),
                               agent.action_log().end());
  return SessionResult{std::move(agent), std::move(events), std::move(log), ticks};
}

std::string inspect(const Agent& agent, NodeId node, std::size_t depth) {
  const auto& store = agent.store();
  if (!store.contains(node)) throw Error(ErrorKind::NotFound, "no node " + node.str());
  const LabelFn label = [&](NodeId id) {
    const auto* n = store.find(id);
    return n ? node_label(*n) : id.str();
  };
  std::string out;
  if (const auto* t = agent.learner().tree(PathKind::Direct, node)) {
    out += render_tree(*t, depth, label);
  }
  if (const auto* t = agent.learner().tree(PathKind::Jump, node)) {
    const auto text = render_tree(*t, depth, label);
    if (!text.empty()) out += "jump:\n" + text;
  }
  return out;
}

std::string render_predictions(const Agent& agent, std::size_t depth) {
  const auto& store = agent.store();
  const LabelFn label = [&](NodeId id) {
    const auto* n = store.find(id);
    return n ? node_label(*n) : id.str();
  };
  std::string out;
  for (const auto& t : agent.predictions().active) {
    out += fmt::format("# {} {} context={} age={}{}\n", t.kind == PathKind::Direct ? "direct" : "jump",
                       label(t.anchor), t.context_depth(), t.age, t.violated ? " violated" : "");
    out += render_future(t.at_cursor(), depth, label);
  }
  return out;
}

std::string format_events(const std::vector<AgentEvent>& events) {
  std::string out;
  for (const auto& e : events) {
    out += e.line();
    out += '\n';
  }
  return out;
}

std::vector<AgentEvent> parse_events(std::string_view text) {
  std::vector<AgentEvent> out;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    const auto line = text.substr(pos, nl - pos);
    if (!line.empty()) out.push_back(AgentEvent::parse(line));
    pos = nl + 1;
  }
  return out;
}

}  // namespace rtop
