// rtop: run scripted sessions, inspect and generalize knowledge bases, export predictions and
// projections, and serve a live agent over HTTP.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "rtop/error.hpp"
#include "rtop/service.hpp"
#include "rtop/session.hpp"

namespace fs = std::filesystem;

namespace {

// Explicit library directory, else a manifest next to the script, else an empty library
// (synthetic audio tokens only).
rtop::StimulusLibrary library_for(const std::string& dir, const std::string& script) {
  if (!dir.empty()) return rtop::StimulusLibrary::load(dir);
  if (!script.empty()) {
    const auto beside = fs::path(script).parent_path();
    if (fs::exists(beside / "manifest.json")) return rtop::StimulusLibrary::load(beside);
  }
  return {};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw rtop::Error(rtop::ErrorKind::Io, "cannot write " + path.string());
  out << text;
}

void on_signal(int) { rtop::stop_serving(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rtop: observation-trace agent"};
  app.require_subcommand(1);

  std::string script_path, config_path, kb_path, out_kb, log_path, library_dir, node, what, out_dir;
  std::string host = "127.0.0.1";
  std::size_t depth = 4;
  int port = 8080;
  bool paused = false;

  auto* run = app.add_subcommand("run", "Run a scripted session");
  run->add_option("--script", script_path, "Script file")->required()->check(CLI::ExistingFile);
  run->add_option("--config", config_path, "Session config (JSON)")->check(CLI::ExistingFile);
  run->add_option("--kb", kb_path, "Input knowledge base")->check(CLI::ExistingFile);
  run->add_option("--out-kb", out_kb, "Output knowledge base")->required();
  run->add_option("--log", log_path, "Event log (actions go to <log>.actions)");
  run->add_option("--library", library_dir, "Stimulus library directory")
      ->check(CLI::ExistingDirectory);

  auto* insp = app.add_subcommand("inspect", "Render the observation trees of a node");
  insp->add_option("--kb", kb_path)->required()->check(CLI::ExistingFile);
  insp->add_option("--node", node, "Node id, e.g. IMG.158")->required();
  insp->add_option("--depth", depth, "Edges shown per path")->capture_default_str();

  auto* gen = app.add_subcommand("generalize", "Run one generalization pass over a knowledge base");
  gen->add_option("--kb", kb_path)->required()->check(CLI::ExistingFile);
  gen->add_option("--out-kb", out_kb, "Where to write the result (default: in place)");

  auto* srv = app.add_subcommand("serve", "Serve a live agent over HTTP");
  srv->add_option("--kb", kb_path, "Knowledge base to start from")->check(CLI::ExistingFile);
  srv->add_option("--config", config_path, "Session config when starting without a KB")
      ->check(CLI::ExistingFile);
  srv->add_option("--port", port)->capture_default_str();
  srv->add_option("--host", host)->capture_default_str();
  srv->add_option("--library", library_dir, "Stimulus library directory")
      ->check(CLI::ExistingDirectory);
  srv->add_option("--script", script_path, "Script with timed events and speech rules")
      ->check(CLI::ExistingFile);
  srv->add_option("--out-kb", out_kb, "Write the knowledge base here on shutdown");
  srv->add_flag("--paused", paused, "Start with the clock paused");

  auto* exp = app.add_subcommand("export", "Export future-trees or projection frames");
  exp->add_option("--kb", kb_path)->required()->check(CLI::ExistingFile);
  exp->add_option("--what", what)
      ->required()
      ->check(CLI::IsMember({"future-trees", "projection"}));
  exp->add_option("--out", out_dir, "Output directory (future-trees defaults to stdout)");
  exp->add_option("--depth", depth, "Edges shown per path")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = config_path.empty() ? rtop::SessionConfig{} : rtop::load_config(config_path);
      const auto script = rtop::load_script(script_path);
      std::optional<rtop::Agent> kb_in;
      if (!kb_path.empty()) kb_in = rtop::read_snapshot(kb_path);
      auto result = rtop::run_session(cfg, script, library_for(library_dir, script_path),
                                      std::move(kb_in));
      rtop::write_snapshot(result.agent, out_kb);
      if (!log_path.empty()) {
        write_text(log_path, rtop::format_events(result.events));
        std::string actions;
        for (const auto& line : result.action_log) actions += line + '\n';
        write_text(log_path + ".actions", actions);
      }
      fmt::print("{} ticks, {} events, {} nodes\n", result.ticks, result.events.size(),
                 result.agent.store().size());
    } else if (*insp) {
      const auto agent = rtop::read_snapshot(kb_path);
      const auto id = rtop::parse_node_id(node);
      if (!id) throw rtop::Error(rtop::ErrorKind::Parse, "malformed node id " + node);
      std::cout << rtop::inspect(agent, *id, depth);
    } else if (*gen) {
      auto agent = rtop::read_snapshot(kb_path);
      const auto report = agent.generalize();
      std::cout << report.text();
      rtop::write_snapshot(agent, out_kb.empty() ? kb_path : out_kb);
    } else if (*srv) {
      auto agent = !kb_path.empty()       ? rtop::read_snapshot(kb_path)
                   : !config_path.empty() ? rtop::Agent(rtop::load_config(config_path))
                                          : rtop::Agent(rtop::SessionConfig{});
      rtop::StimulusScript script;
      if (!script_path.empty()) script = rtop::load_script(script_path);
      rtop::ServiceOptions options;
      options.start_paused = paused;
      rtop::Service service(std::move(agent), library_for(library_dir, script_path), options,
                            std::move(script));
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      fmt::print("serving on http://{}:{}\n", host, port);
      std::fflush(stdout);
      rtop::serve(service, host, port);
      service.stop();
      if (!out_kb.empty()) {
        const auto bytes = service.snapshot();
        write_text(out_kb, std::string(bytes.begin(), bytes.end()));
      }
    } else if (*exp) {
      const auto agent = rtop::read_snapshot(kb_path);
      if (what == "future-trees") {
        const auto text = rtop::render_predictions(agent, depth);
        if (out_dir.empty()) {
          std::cout << text;
        } else {
          fs::create_directories(out_dir);
          write_text(fs::path(out_dir) / "future_trees.txt", text);
        }
      } else {
        const auto dir = out_dir.empty() ? fs::path("projection") : fs::path(out_dir);
        fs::create_directories(dir);
        fmt::print("{} files written to {}\n", agent.canvas().export_to(dir), dir.string());
      }
    }
  } catch (const rtop::Error& e) {
    fmt::print(stderr, "rtop: {}\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    fmt::print(stderr, "rtop: {}\n", e.what());
    return 1;
  }
  return 0;
}
