#include "rtop/agent.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "rtop/codec.hpp"
#include "rtop/error.hpp"

namespace rtop {

using nlohmann::json;

// ---- config -----------------------------------------------------------------

namespace {

AttentionTarget parse_target(const std::string& s) {
  if (s == "visual" || s == "IMG") return AttentionTarget::Visual;
  if (s == "audio" || s == "AUD") return AttentionTarget::Audio;
  if (s == "thought" || s == "THT") return AttentionTarget::Thought;
  throw Error(ErrorKind::Parse, "unknown attention target " + s);
}

std::string target_name(AttentionTarget t) {
  switch (t) {
    case AttentionTarget::Visual: return "visual";
    case AttentionTarget::Audio: return "audio";
    case AttentionTarget::Thought: return "thought";
  }
  return "visual";
}

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

void to_json(json& j, const SessionConfig& c) {
  json vocab = json::array();
  for (const auto& w : c.repertoire.vocabulary) vocab.push_back(w.text());
  json moves = json::array();
  for (const auto& m : c.repertoire.focus_moves) moves.push_back({m.dx, m.dy, m.dzoom});
  j = json{
      {"seed", c.seed},
      {"tick_ms", c.tick_ms},
      {"window",
       {{"path_length", c.window.path_length},
        {"stride", c.window.stride},
        {"hop", c.window.hop},
        {"jump_max_raw", c.window.jump_max_raw},
        {"jump_min_raw", c.window.jump_min_raw}}},
      {"match",
       {{"image_threshold", c.match.image_threshold},
        {"leeway_mean_lightness", c.match.leeway_mean_lightness},
        {"leeway_var_lightness", c.match.leeway_var_lightness},
        {"audio_var_rel", c.match.audio.var_rel},
        {"audio_cross_rel", c.match.audio.cross_rel}}},
      {"prediction",
       {{"context_depth", c.prediction.context_depth},
        {"k_active", c.prediction.k_active},
        {"k_background", c.prediction.k_background},
        {"min_net_probability", c.prediction.min_net_probability},
        {"min_remaining_depth", c.prediction.min_remaining_depth}}},
      {"generalization",
       {{"n_trace", c.generalization.n_trace},
        {"image_slack", c.generalization.image_slack},
        {"image_tol_cutoff", c.generalization.image_tol_cutoff},
        {"min_must_match_fraction", c.generalization.min_must_match_fraction},
        {"audio_relative_slack", c.generalization.audio_relative_slack},
        {"audio_reject_factor", c.generalization.audio_reject_factor},
        {"focus_box", c.generalization.focus_box},
        {"wildcard_members", c.generalization.wildcard_members},
        {"provenance_limit", c.generalization.provenance_limit},
        {"max_reductions_per_tree", c.generalization.max_reductions_per_tree},
        {"d_max_divisor", c.generalization.d_max_divisor},
        {"parameterize", c.generalization.parameterize}}},
      {"reflex",
       {{"visual_mean_delta", c.reflex.visual_mean_delta},
        {"audio_relative_var", c.reflex.audio_relative_var}}},
      {"c_k", {{"hunger", c.c_hunger}, {"comfort", c.c_comfort}}},
      {"hunger_interval", c.hunger_interval},
      {"action_interval", c.action_interval},
      {"repertoire",
       {{"vocabulary", vocab},
        {"speech", c.repertoire.speech_enabled},
        {"focus_moves", moves},
        {"attention_moves", c.repertoire.attention_moves},
        {"weights",
         {{"speech", c.repertoire.weights.speech},
          {"focus", c.repertoire.weights.focus},
          {"attention", c.repertoire.weights.attention}}},
        {"epsilon", c.repertoire.epsilon},
        {"epsilon_tau", c.repertoire.epsilon_tau},
        {"epsilon_floor", c.repertoire.epsilon_floor}}},
      {"thought_budget", c.thought_budget},
      {"thought_enabled", c.thought_enabled},
      {"initial_attention", target_name(c.initial_attention)},
      {"initial_focus", {c.initial_focus.x, c.initial_focus.y, c.initial_focus.side}},
      {"global_groups", c.global_groups},
  };
}

void from_json(const json& j, SessionConfig& c) {
  read_opt(j, "seed", c.seed);
  read_opt(j, "tick_ms", c.tick_ms);
  if (j.contains("window")) {
    const auto& w = j["window"];
    read_opt(w, "path_length", c.window.path_length);
    read_opt(w, "stride", c.window.stride);
    read_opt(w, "hop", c.window.hop);
    read_opt(w, "jump_max_raw", c.window.jump_max_raw);
    read_opt(w, "jump_min_raw", c.window.jump_min_raw);
  }
  if (j.contains("match")) {
    const auto& m = j["match"];
    read_opt(m, "image_threshold", c.match.image_threshold);
    read_opt(m, "leeway_mean_lightness", c.match.leeway_mean_lightness);
    read_opt(m, "leeway_var_lightness", c.match.leeway_var_lightness);
    read_opt(m, "audio_var_rel", c.match.audio.var_rel);
    read_opt(m, "audio_cross_rel", c.match.audio.cross_rel);
  }
  if (j.contains("prediction")) {
    const auto& p = j["prediction"];
    read_opt(p, "context_depth", c.prediction.context_depth);
    read_opt(p, "k_active", c.prediction.k_active);
    read_opt(p, "k_background", c.prediction.k_background);
    read_opt(p, "min_net_probability", c.prediction.min_net_probability);
    read_opt(p, "min_remaining_depth", c.prediction.min_remaining_depth);
  }
  if (j.contains("generalization")) {
    const auto& g = j["generalization"];
    auto& o = c.generalization;
    read_opt(g, "n_trace", o.n_trace);
    read_opt(g, "image_slack", o.image_slack);
    read_opt(g, "image_tol_cutoff", o.image_tol_cutoff);
    read_opt(g, "min_must_match_fraction", o.min_must_match_fraction);
    read_opt(g, "audio_relative_slack", o.audio_relative_slack);
    read_opt(g, "audio_reject_factor", o.audio_reject_factor);
    read_opt(g, "focus_box", o.focus_box);
    read_opt(g, "wildcard_members", o.wildcard_members);
    read_opt(g, "provenance_limit", o.provenance_limit);
    read_opt(g, "max_reductions_per_tree", o.max_reductions_per_tree);
    read_opt(g, "d_max_divisor", o.d_max_divisor);
    read_opt(g, "parameterize", o.parameterize);
  }
  if (j.contains("reflex")) {
    read_opt(j["reflex"], "visual_mean_delta", c.reflex.visual_mean_delta);
    read_opt(j["reflex"], "audio_relative_var", c.reflex.audio_relative_var);
  }
  if (j.contains("c_k")) {
    read_opt(j["c_k"], "hunger", c.c_hunger);
    read_opt(j["c_k"], "comfort", c.c_comfort);
  }
  read_opt(j, "hunger_interval", c.hunger_interval);
  read_opt(j, "action_interval", c.action_interval);
  if (j.contains("repertoire")) {
    const auto& r = j["repertoire"];
    auto& o = c.repertoire;
    if (r.contains("vocabulary")) {
      o.vocabulary.clear();
      for (const auto& w : r["vocabulary"]) o.vocabulary.push_back(SpeechAction::parse(w.get<std::string>()));
    }
    read_opt(r, "speech", o.speech_enabled);
    if (r.contains("focus_moves")) {
      o.focus_moves.clear();
      for (const auto& m : r["focus_moves"]) {
        if (!m.is_array() || m.size() != 3) throw Error(ErrorKind::Parse, "focus move needs [dx,dy,dzoom]");
        o.focus_moves.push_back(FocusAction{m[0].get<int>(), m[1].get<int>(), m[2].get<int>()});
      }
    }
    read_opt(r, "attention_moves", o.attention_moves);
    if (r.contains("weights")) {
      read_opt(r["weights"], "speech", o.weights.speech);
      read_opt(r["weights"], "focus", o.weights.focus);
      read_opt(r["weights"], "attention", o.weights.attention);
    }
    read_opt(r, "epsilon", o.epsilon);
    read_opt(r, "epsilon_tau", o.epsilon_tau);
    read_opt(r, "epsilon_floor", o.epsilon_floor);
  }
  read_opt(j, "thought_budget", c.thought_budget);
  read_opt(j, "thought_enabled", c.thought_enabled);
  if (j.contains("initial_attention")) {
    c.initial_attention = parse_target(j["initial_attention"].get<std::string>());
  }
  if (j.contains("initial_focus")) {
    const auto& f = j["initial_focus"];
    if (!f.is_array() || f.size() != 3) throw Error(ErrorKind::Parse, "initial_focus needs [x,y,side]");
    c.initial_focus = FocusWindow{f[0].get<int>(), f[1].get<int>(), f[2].get<int>()};
  }
  read_opt(j, "global_groups", c.global_groups);
}

SessionConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  try {
    return json::parse(in).get<SessionConfig>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Parse, fmt::format("config {}: {}", path.string(), e.what()));
  }
}

// ---- events -----------------------------------------------------------------

namespace {

constexpr std::array<std::string_view, 8> kEventNames = {
    "node_captured",         "match_found",      "future_built",   "action_taken",
    "reward_applied",        "generalization_report", "projection_frame", "attention_shift"};

}  // namespace

std::string_view to_string(EventKind k) { return kEventNames[static_cast<std::size_t>(k)]; }

std::optional<EventKind> parse_event_kind(std::string_view s) {
  for (std::size_t i = 0; i < kEventNames.size(); ++i) {
    if (kEventNames[i] == s) return static_cast<EventKind>(i);
  }
  return std::nullopt;
}

std::string AgentEvent::line() const {
  return fmt::format("{} {} {} {}", tick, seq, to_string(kind), payload.dump());
}

AgentEvent AgentEvent::parse(std::string_view line) {
  auto next_word = [&](std::string_view& rest) {
    const auto sp = rest.find(' ');
    if (sp == std::string_view::npos) throw Error(ErrorKind::Parse, "short event line");
    auto w = rest.substr(0, sp);
    rest.remove_prefix(sp + 1);
    return std::string(w);
  };
  std::string_view rest = line;
  AgentEvent e;
  try {
    e.tick = std::stoll(next_word(rest));
    e.seq = std::stoull(next_word(rest));
  } catch (const std::logic_error&) {
    throw Error(ErrorKind::Parse, "bad event header");
  }
  const auto kind = parse_event_kind(next_word(rest));
  if (!kind) throw Error(ErrorKind::Parse, "unknown event kind");
  e.kind = *kind;
  try {
    e.payload = json::parse(rest);
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::Parse, std::string("event payload: ") + ex.what());
  }
  return e;
}

// ---- agent ------------------------------------------------------------------

Agent::Agent(SessionConfig cfg)
    : cfg_(std::move(cfg)), learner_(cfg_.window), rng_(cfg_.seed) {
  pp_.c_hunger = cfg_.c_hunger;
  pp_.c_comfort = cfg_.c_comfort;
  attention_.focus = cfg_.initial_attention;
  attention_.visual_focus = cfg_.initial_focus;
  return_focus_ = cfg_.initial_attention == AttentionTarget::Thought ? AttentionTarget::Visual
                                                                     : cfg_.initial_attention;
  learner_.set_jump_node(store_.intern(JumpSpec{cfg_.window.hop}, 0));
}

std::size_t Agent::decisions_in_context(NodeId context) const {
  const auto it = decisions_.find(context);
  return it == decisions_.end() ? 0 : it->second;
}

void Agent::emit(std::int64_t tick, EventKind kind, json payload) {
  events_.push_back(AgentEvent{tick, seq_++, kind, std::move(payload)});
}

FocusWindow Agent::clamped_focus(const Raster& r, bool* clamped) const {
  FocusWindow f = attention_.visual_focus;
  const int full = std::min(r.width, r.height);
  bool moved = false;
  if (f.side <= 0) {
    f.side = full;
  } else if (f.side > full) {
    f.side = full;
    moved = true;
  }
  const int x = std::clamp(f.x, 0, r.width - f.side);
  const int y = std::clamp(f.y, 0, r.height - f.side);
  moved = moved || x != f.x || y != f.y;
  f.x = x;
  f.y = y;
  if (clamped) *clamped = moved;
  return f;
}

NodeId Agent::context_node() const {
  for (auto it = recent_.rbegin(); it != recent_.rend(); ++it) {
    if (!is_action(it->type)) return *it;
  }
  return {};
}

NodeId Agent::capture(const Payload& payload, std::int64_t tick) {
  if (auto hit = find_match(store_, payload, cfg_.match)) {
    emit(tick, EventKind::MatchFound, {{"node", hit->id.str()}, {"distance", hit->distance}});
    append_foreground(hit->id, false, tick);
    return hit->id;
  }
  const NodeId id = store_.put(payload, tick);
  append_foreground(id, true, tick);
  return id;
}

void Agent::append_foreground(NodeId id, bool is_new, std::int64_t tick) {
  learner_.append(TraceEntry{id, tick, pp_.p_net()});
  json j{{"node", id.str()}, {"new", is_new}, {"p_net", pp_.p_net()}};
  if (is_new) j["payload"] = encode_payload_hex(store_.get(id).payload);
  emit(tick, EventKind::NodeCaptured, std::move(j));
  after_append(id, tick);
}

void Agent::after_append(NodeId id, std::int64_t tick) {
  appended_ = id;
  recent_.push_back(id);
  const std::size_t keep = std::max<std::size_t>(cfg_.prediction.context_depth, 1);
  if (recent_.size() > keep) recent_.erase(recent_.begin(), recent_.end() - keep);

  const NodeAcceptor acceptor(store_, cfg_.match, cfg_.global_groups);
  bool any = false;
  for (auto& t : predictions_.active) {
    if (conform(t, id, acceptor) == ConformResult::Conformed) any = true;
    ++t.age;
  }
  if (refresh_policy(predictions_, any, cfg_.prediction)) {
    predictions_.active = build_futures(recent_, learner_, acceptor, cfg_.prediction.k_active,
                                        cfg_.prediction.context_depth);
    thought_spent_ = false;
    json anchors = json::array();
    for (const auto& t : predictions_.active) anchors.push_back(t.anchor.str());
    emit(tick, EventKind::FutureBuilt,
         {{"trees", predictions_.active.size()}, {"anchors", anchors}, {"happiness", happiness()}});
  }
  if (learner_.trace().size() >= cfg_.generalization.n_trace) generalize();
}

GeneralizationReport Agent::generalize() {
  offline_ = true;
  const std::int64_t tick = std::max<std::int64_t>(next_tick_ - 1, 0);
  auto report = run_generalization(store_, learner_, cfg_.match, cfg_.generalization, tick);
  predictions_ = PredictionSet{};
  recent_.clear();
  background_anchor_ = NodeId{};
  thought_remaining_ = 0;
  if (attention_.focus == AttentionTarget::Thought) attention_.focus = return_focus_;
  offline_ = false;
  json created = json::array();
  for (auto id : report.created) created.push_back(id.str());
  json retired = json::array();
  for (auto id : report.retired_ids) retired.push_back(id.str());
  emit(tick, EventKind::GeneralizationReport,
       {{"lines", report.lines},
        {"pairs_reduced", report.pairs_reduced},
        {"merged_created", report.merged_created},
        {"groups_created", report.groups_created},
        {"rejected", report.rejected},
        {"parameterized", report.parameterized},
        {"created", created},
        {"retired", retired}});
  return report;
}

void Agent::set_attention(AttentionTarget target) {
  if (target == AttentionTarget::Thought) {
    throw Error(ErrorKind::Precondition, "thought episodes start from predictions only");
  }
  emit(std::max<std::int64_t>(next_tick_ - 1, 0), EventKind::AttentionShift,
       {{"from", target_name(attention_.focus)}, {"to", target_name(target)}, {"reason", "control"}});
  attention_.focus = target;
  thought_remaining_ = 0;
}

bool Agent::thought_ready() const {
  if (!cfg_.thought_enabled || thought_spent_ || cfg_.thought_budget == 0) return false;
  std::size_t live = 0;
  bool placeholder = false;
  std::function<void(const FutureNode&, std::size_t)> scan = [&](const FutureNode& n,
                                                                 std::size_t depth) {
    if (depth == 0 || placeholder) return;
    for (const auto& c : n.children) {
      if (c.id.type == NodeType::Superimpose) {
        const auto& spec = std::get<SuperimposeSpec>(store_.get(c.id).payload);
        if (std::holds_alternative<Placeholder>(spec.base) ||
            std::holds_alternative<Placeholder>(spec.overlay)) {
          placeholder = true;
          return;
        }
      }
      scan(c, depth - 1);
    }
  };
  for (const auto& t : predictions_.active) {
    if (t.violated) continue;
    ++live;
    scan(t.at_cursor(), 3);
  }
  return placeholder && live >= 2;
}

void Agent::apply_action(const Payload& action, std::int64_t tick) {
  if (const auto* f = std::get_if<FocusAction>(&action)) {
    auto& v = attention_.visual_focus;
    v.x += f->dx;
    v.y += f->dy;
    v.side = std::max(1, v.side - f->dzoom);
    if (frame_w_ > 0) {
      Raster probe;
      probe.width = frame_w_;
      probe.height = frame_h_;
      bool clamped = false;
      v = clamped_focus(probe, &clamped);
      if (clamped) action_log_.push_back(fmt::format("{} CLAMPED focus={},{},{}", tick, v.x, v.y, v.side));
    }
  } else if (const auto* a = std::get_if<AttentionAction>(&action)) {
    if (a->target != attention_.focus) {
      emit(tick, EventKind::AttentionShift,
           {{"from", target_name(attention_.focus)}, {"to", target_name(a->target)},
            {"reason", "action"}});
      attention_.focus = a->target;
    }
  }
}

void Agent::take_action(std::int64_t tick, StepOutcome& out) {
  const auto& rep = cfg_.repertoire;
  const NodeId ctx = context_node();
  // Ongoing trees may sit deep in one remembered path; trees rebuilt from the current context
  // expose every action taken here before.
  PredictionSet options = predictions_;
  const NodeAcceptor acceptor(store_, cfg_.match, cfg_.global_groups);
  for (auto& t : build_futures(recent_, learner_, acceptor, cfg_.prediction.k_active,
                               cfg_.prediction.context_depth)) {
    options.active.push_back(std::move(t));
  }
  const auto choice = select_action(options, rep, store_);
  std::vector<const Payload*> known;
  for (const auto& t : options.active) {
    if (t.violated) continue;
    for (const auto& c : t.at_cursor().children) {
      if (is_action(c.id.type)) known.push_back(&store_.get(c.id).payload);
    }
  }
  const TriedFn is_known = [&](const Payload& p) {
    return std::any_of(known.begin(), known.end(), [&](const Payload* k) {
      const auto* merged = std::get_if<FocusMergedAction>(k);
      const auto* move = std::get_if<FocusAction>(&p);
      return *k == p || (merged && move && merged->accepts(*move));
    });
  };
  // Exploration only decays once every option has shown up in this situation.
  const double eps = repertoire_covered(rep, is_known)
                         ? rep.effective_epsilon(decisions_in_context(ctx))
                         : rep.epsilon;
  const double u = rng_.uniform();

  Payload executed;
  json j;
  if (choice && u >= eps) {
    executed = store_.get(choice->action).payload;
    if (const auto* m = std::get_if<FocusMergedAction>(&executed)) executed = m->rounded();
    action_log_.push_back(fmt::format("{} DECISION best={} expected={:.4f}", tick,
                                      node_label(store_.get(choice->action)), choice->expected));
    j = {{"mode", "learned"}, {"best", choice->action.str()}, {"expected", choice->expected}};
  } else {
    // Exploration favours actions the knowledge base does not yet offer in this situation.
    executed = explore(rep, rng_, attention_.focus, is_known);
    j = {{"mode", "explore"}};
  }
  const std::size_t before = store_.size();
  const NodeId id = store_.intern(executed, tick);
  const bool is_new = store_.size() != before;
  if (j["mode"] == "explore") {
    action_log_.push_back(fmt::format("{} EXPLORE {}", tick, node_label(store_.get(id))));
  }
  j["node"] = id.str();
  j["label"] = node_label(store_.get(id));
  j["context"] = ctx.valid() ? ctx.str() : "";
  emit(tick, EventKind::ActionTaken, std::move(j));

  decisions_[ctx] += 1;
  last_action_tick_ = tick;
  out.action = id;
  if (const auto* s = std::get_if<SpeechAction>(&executed)) out.speech = *s;
  apply_action(executed, tick);
  append_foreground(id, is_new, tick);
}

void Agent::check_expect(const std::string& source, const Raster& raster, std::int64_t tick) {
  const Payload probe = encode_image(raster, clamped_focus(raster));
  ExpectResult r{tick, source, std::nullopt, 0.0};
  std::function<void(const FutureNode&, double, std::size_t)> scan = [&](const FutureNode& n,
                                                                         double rho,
                                                                         std::size_t depth) {
    if (depth == 0) return;
    for (const auto& c : n.children) {
      const double p = rho * c.probability;
      if (c.id.type == NodeType::Image && match_against(probe, store_.get(c.id), cfg_.match)) {
        if (!r.node || p > r.rho || (p == r.rho && c.id < *r.node)) {
          r.node = c.id;
          r.rho = p;
        }
      }
      scan(c, p, depth - 1);
    }
  };
  for (const auto& t : predictions_.active) {
    if (!t.violated) scan(t.at_cursor(), 1.0, 3);
  }
  emit(tick, EventKind::MatchFound,
       {{"expect", source}, {"node", r.node ? r.node->str() : ""}, {"rho", r.rho}});
  expectations_.push_back(std::move(r));
}

StepOutcome Agent::step(const TickInput& in) {
  const std::int64_t t = in.tick;
  if (t < next_tick_) {
    throw Error(ErrorKind::NonMonotonic, fmt::format("tick {} after {}", t, next_tick_ - 1));
  }
  next_tick_ = t + 1;
  StepOutcome out;
  appended_.reset();
  const std::size_t first_event = events_.size();

  for (double d : in.comfort_deltas) {
    const bool clamped = apply_reward(pp_, RewardKind::Comfort, d);
    emit(t, EventKind::RewardApplied,
         {{"kind", "comfort"}, {"amount", d}, {"clamped", clamped}, {"p_net", pp_.p_net()}});
  }
  if (in.feed) {
    apply_reward(pp_, RewardKind::Feed);
    last_feed_tick_ = t;
    emit(t, EventKind::RewardApplied, {{"kind", "feed"}, {"p_net", pp_.p_net()}});
  }
  if (cfg_.hunger_interval > 0 && t > last_feed_tick_ &&
      (t - last_feed_tick_) % cfg_.hunger_interval == 0) {
    add_hunger(pp_, 1.0);
  }

  std::optional<ImageData> visual;
  if (in.visual) {
    frame_w_ = in.visual->width;
    frame_h_ = in.visual->height;
    attention_.visual_focus = clamped_focus(*in.visual);
    visual = encode_image(*in.visual, attention_.visual_focus);
  }
  const bool audio_new = in.audio.has_value();
  if (audio_new) {
    pending_audio_ = *in.audio;
    audio_fresh_ = true;
  }

  // Background channel: summary deltas, reflex, and quick predictions without storage.
  double vd = 0.0, ad = 0.0;
  if (visual) {
    const auto s = image_summary(*visual);
    if (prev_visual_) vd = std::abs(s.mean_lightness - prev_visual_->mean_lightness);
    prev_visual_ = s;
    visual_delta_ = std::max(visual_delta_, vd);
  }
  if (audio_new) {
    const auto a = audio_summary(*pending_audio_);
    ad = std::abs(a.var_amplitude - prev_audio_.var_amplitude) /
         std::max(prev_audio_.var_amplitude, 1.0);
    prev_audio_ = a;
    audio_delta_ = std::max(audio_delta_, ad);
  }
  std::optional<AttentionTarget> reflex;
  double reflex_ratio = 0.0;
  if (visual) {
    if (auto r = background_reflex(Channel::Visual, vd, attention_.focus, cfg_.reflex)) {
      reflex = r;
      reflex_ratio = vd / cfg_.reflex.visual_mean_delta;
    }
  }
  if (audio_new) {
    if (auto r = background_reflex(Channel::Audio, ad, attention_.focus, cfg_.reflex)) {
      if (!reflex || ad / cfg_.reflex.audio_relative_var > reflex_ratio) reflex = r;
    }
  }
  {
    std::optional<Payload> bg;
    if (attention_.focus != AttentionTarget::Audio && audio_new) bg = *pending_audio_;
    else if (attention_.focus != AttentionTarget::Visual && visual) bg = *visual;
    if (bg) {
      const auto hit = find_match(store_, *bg, cfg_.match);
      const NodeId anchor = hit ? hit->id : NodeId{};
      if (anchor != background_anchor_) {
        background_anchor_ = anchor;
        predictions_.background.clear();
        if (anchor.valid()) {
          const NodeAcceptor acceptor(store_, cfg_.match, cfg_.global_groups);
          predictions_.background =
              build_futures({anchor}, learner_, acceptor, cfg_.prediction.k_background, 1);
        }
      }
    }
  }

  for (const auto& [name, raster] : in.expects) check_expect(name, *raster, t);

  // Foreground: exactly one trace entry at most.
  if (reflex) {
    const std::size_t before = store_.size();
    const NodeId id = store_.intern(AttentionAction{*reflex}, t);
    emit(t, EventKind::AttentionShift,
         {{"from", target_name(attention_.focus)}, {"to", target_name(*reflex)}, {"reason", "reflex"}});
    attention_.focus = *reflex;
    thought_remaining_ = 0;
    if (*reflex == AttentionTarget::Visual) visual_delta_ = 0.0;
    else audio_delta_ = 0.0;
    append_foreground(id, store_.size() != before, t);
  } else if (attention_.focus == AttentionTarget::Thought) {
    ThoughtResult r;
    const std::size_t before = store_.size();
    if (thought_remaining_ > 0) {
      r = thought_step(predictions_, 1, store_, learner_, canvas_, cfg_.match, t, pp_.p_net());
    }
    if (r.steps > 0) {
      --thought_remaining_;
      const NodeId id = r.stored.front();
      const bool is_new = store_.size() != before;
      emit(t, EventKind::ProjectionFrame,
           {{"node", id.str()}, {"frame", canvas_.frames.size() - 1}, {"distance", r.distances.front()}});
      json j{{"node", id.str()}, {"new", is_new}, {"p_net", pp_.p_net()}, {"thought", true}};
      if (is_new) j["payload"] = encode_payload_hex(store_.get(id).payload);
      emit(t, EventKind::NodeCaptured, std::move(j));
      after_append(id, t);
    } else {
      // Episode over: hand attention to the channel that changed most meanwhile.
      AttentionTarget target = return_focus_;
      const double vr = visual_delta_ / cfg_.reflex.visual_mean_delta;
      const double ar = audio_delta_ / cfg_.reflex.audio_relative_var;
      if (vr > 0.0 || ar > 0.0) target = ar > vr ? AttentionTarget::Audio : AttentionTarget::Visual;
      const std::size_t b = store_.size();
      const NodeId id = store_.intern(AttentionAction{target}, t);
      emit(t, EventKind::AttentionShift,
           {{"from", "thought"}, {"to", target_name(target)}, {"reason", "thought_end"}});
      attention_.focus = target;
      thought_spent_ = true;
      thought_remaining_ = 0;
      append_foreground(id, store_.size() != b, t);
    }
  } else if (thought_ready()) {
    const std::size_t before = store_.size();
    const NodeId id = store_.intern(AttentionAction{AttentionTarget::Thought}, t);
    emit(t, EventKind::AttentionShift,
         {{"from", target_name(attention_.focus)}, {"to", "thought"}, {"reason", "prediction"}});
    return_focus_ = attention_.focus;
    attention_.focus = AttentionTarget::Thought;
    thought_remaining_ = cfg_.thought_budget;
    visual_delta_ = 0.0;
    audio_delta_ = 0.0;
    append_foreground(id, store_.size() != before, t);
  } else if (cfg_.action_interval > 0 && t - last_action_tick_ >= cfg_.action_interval) {
    take_action(t, out);
  } else if (attention_.focus == AttentionTarget::Visual && visual) {
    capture(*visual, t);
  } else if (attention_.focus == AttentionTarget::Audio && audio_fresh_) {
    audio_fresh_ = false;
    capture(*pending_audio_, t);
  }
  out.foreground = appended_;
  out.generalized = std::any_of(events_.begin() + static_cast<std::ptrdiff_t>(first_event),
                                events_.end(), [](const AgentEvent& e) {
                                  return e.kind == EventKind::GeneralizationReport;
                                });
  return out;
}

}  // namespace rtop
