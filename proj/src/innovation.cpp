#include "rtop/innovation.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>

#include <fmt/format.h>

#include "rtop/audio.hpp"
#include "rtop/error.hpp"
#include "rtop/image.hpp"

namespace rtop {

ImageData image_pixels(const Payload& p) {
  if (const auto* raw = std::get_if<ImageData>(&p)) return *raw;
  ImageData out;
  if (const auto* m = std::get_if<ImageMergedData>(&p)) {
    auto q = [](double v, int maxv) {
      return static_cast<std::uint8_t>(std::clamp<long>(std::lround(v), 0L, maxv));
    };
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
      const auto& c = m->pixels[i];
      out.pixels[i] = HslPixel{q(c.h, 7), q(c.s, 3), q(c.l, 7)};
    }
    return out;
  }
  throw Error(ErrorKind::Precondition, "payload has no pixel grid");
}

ImageData superimpose_images(const Payload& base, const Payload& overlay) {
  ImageData out = image_pixels(base);
  const ImageData over = image_pixels(overlay);
  const auto* merged = std::get_if<ImageMergedData>(&overlay);
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    if (!merged || merged->pixels[i].must_match) out.pixels[i] = over.pixels[i];
  }
  return out;
}

AudioData superimpose_audio(const Payload& content, const Payload& timbre) {
  const AudioData* wave = std::get_if<AudioData>(&content);
  if (const auto* m = std::get_if<AudioMergedData>(&content)) {
    if (m->provenance.empty()) throw Error(ErrorKind::Unplayable, "merged audio has no waveform");
    wave = &m->provenance.front().audio;
  }
  if (!wave) throw Error(ErrorKind::Unplayable, "content is not audio");
  double target = 0.0;
  if (const auto* t = std::get_if<AudioMergedData>(&timbre)) {
    target = t->center.var_amplitude;
  } else if (const auto* t = std::get_if<AudioData>(&timbre)) {
    target = audio_summary(*t).var_amplitude;
  } else {
    throw Error(ErrorKind::Precondition, "timbre is not audio");
  }
  const auto s = audio_summary(*wave);
  if (s.var_amplitude <= 0.0) return *wave;
  const double k = std::sqrt(target / s.var_amplitude);
  double mean = 0.0;
  for (auto v : wave->samples) mean += v;
  mean /= static_cast<double>(wave->samples.size());
  AudioData out = *wave;
  for (auto& v : out.samples) {
    const double scaled = mean + (static_cast<double>(v) - mean) * k;
    v = static_cast<std::int8_t>(std::clamp<long>(std::lround(scaled), -128L, 127L));
  }
  return out;
}

namespace {

void frontier_rec(const FutureNode& node, double rho, std::size_t depth,
                  std::optional<std::pair<NodeId, double>>& best) {
  if (depth == 0) return;
  for (const auto& c : node.children) {
    const double r = rho * c.probability;
    if (c.id.type == NodeType::Image) {
      if (!best || r > best->second || (r == best->second && c.id.serial < best->first.serial)) {
        best = std::make_pair(c.id, r);
      }
    }
    frontier_rec(c, r, depth - 1, best);
  }
}

}  // namespace

std::optional<std::pair<NodeId, double>> frontier_image(const FutureTree& tree, std::size_t depth) {
  std::optional<std::pair<NodeId, double>> best;
  frontier_rec(tree.at_cursor(), 1.0, depth, best);
  return best;
}

std::vector<NodeId> likely_continuation(const FutureTree& tree, std::size_t depth) {
  std::vector<NodeId> out;
  const FutureNode* n = &tree.at_cursor();
  while (out.size() < depth && !n->children.empty()) {
    const FutureNode* best = &n->children.front();
    for (const auto& c : n->children) {
      if (c.probability > best->probability) best = &c;
    }
    out.push_back(best->id);
    n = best;
  }
  return out;
}

Instantiation bind_placeholders(const std::vector<NodeId>& path, std::size_t tree_index,
                                const PredictionSet& set, const MemoryStore& store,
                                const std::vector<std::size_t>& temporal_order) {
  constexpr std::size_t kFrontierDepth = 3;
  constexpr std::size_t kContinuationDepth = 8;

  std::optional<std::pair<NodeId, double>> p_img;
  for (std::size_t i = 0; i < set.active.size(); ++i) {
    if (i == tree_index || set.active[i].violated) continue;
    auto f = frontier_image(set.active[i], kFrontierDepth);
    if (!f) continue;
    if (!p_img || f->second > p_img->second ||
        (f->second == p_img->second && f->first.serial < p_img->first.serial)) {
      p_img = f;
    }
  }

  // Projection sequence: (node, belongs to the bound path at index k or npos).
  std::vector<std::size_t> order = temporal_order;
  if (order.empty()) {
    for (std::size_t i = 0; i < set.active.size(); ++i) order.push_back(i);
  }
  if (std::find(order.begin(), order.end(), tree_index) == order.end()) order.push_back(tree_index);
  constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();
  std::vector<std::pair<NodeId, std::size_t>> sequence;
  for (auto i : order) {
    if (i == tree_index) {
      for (std::size_t k = 0; k < path.size(); ++k) sequence.emplace_back(path[k], k);
    } else if (i < set.active.size() && !set.active[i].violated) {
      for (auto id : likely_continuation(set.active[i], kContinuationDepth)) {
        sequence.emplace_back(id, npos);
      }
    }
  }

  Instantiation inst;
  for (std::size_t k = 0; k < path.size(); ++k) {
    BoundStep step{path[k], std::nullopt};
    const auto* node = store.find(path[k]);
    const auto* spec = node ? std::get_if<SuperimposeSpec>(&node->payload) : nullptr;
    if (spec) {
      SuperimposeSpec b = *spec;
      std::size_t pos = 0;
      while (sequence[pos].second != k) ++pos;
      for (Operand* op : {&b.base, &b.overlay}) {
        const auto* ph = std::get_if<Placeholder>(op);
        if (!ph) continue;
        std::optional<NodeId> value;
        if (*ph == Placeholder::Image) {
          if (p_img) value = p_img->first;
        } else if (*ph == Placeholder::Preceding) {
          for (std::size_t q = pos; q-- > 0;) {
            if (sequence[q].first.type == NodeType::Audio) {
              value = sequence[q].first;
              break;
            }
          }
        } else {
          for (std::size_t q = pos + 1; q < sequence.size(); ++q) {
            if (sequence[q].first.type == NodeType::Audio) {
              value = sequence[q].first;
              break;
            }
          }
        }
        if (value) {
          *op = *value;
        } else if (std::find(inst.unbound.begin(), inst.unbound.end(), *ph) == inst.unbound.end()) {
          inst.unbound.push_back(*ph);
        }
      }
      step.bound = b;
    }
    inst.steps.push_back(step);
  }
  return inst;
}

std::string render_projection(const Instantiation& inst, const MemoryStore& store) {
  std::string out;
  for (std::size_t i = 0; i < inst.steps.size(); ++i) {
    if (i) out += " -> ";
    const auto& s = inst.steps[i];
    if (s.bound) {
      out += fmt::format("SIA:[{},{}]", operand_label(s.bound->base), operand_label(s.bound->overlay));
    } else if (const auto* n = store.find(s.node)) {
      out += node_label(*n);
    } else {
      out += s.node.str();
    }
  }
  return out;
}

std::optional<Payload> realize(const BoundStep& step, const MemoryStore& store) {
  if (!step.bound) {
    const auto* n = store.find(step.node);
    if (!n) return std::nullopt;
    return n->payload;
  }
  const auto* base_id = std::get_if<NodeId>(&step.bound->base);
  const auto* over_id = std::get_if<NodeId>(&step.bound->overlay);
  if (!base_id || !over_id) return std::nullopt;
  const auto& base = store.get(*base_id).payload;
  const auto& over = store.get(*over_id).payload;
  if (base_id->type == NodeType::Image && over_id->type == NodeType::Image) {
    return Payload{superimpose_images(base, over)};
  }
  if (base_id->type == NodeType::Audio && over_id->type == NodeType::Audio) {
    return Payload{superimpose_audio(over, base)};
  }
  return std::nullopt;
}

std::size_t ProjectionCanvas::export_to(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::size_t n = 0;
  for (std::size_t i = 0; i < frames.size(); ++i, ++n) {
    save_ppm(render(frames[i]), dir / fmt::format("frame_{:04}.ppm", i));
  }
  for (std::size_t i = 0; i < audio_track.size(); ++i, ++n) {
    save_wav(audio_track[i], dir / fmt::format("clip_{:04}.wav", i));
  }
  return n;
}

namespace {

// The overlay-capable part of a frontier node: merged images and SIA overlays.
struct FrontierPick {
  NodeId id;
  double rho = 0.0;
  const Payload* payload = nullptr;
  bool is_overlay = false;
};

std::optional<FrontierPick> pick_frontier(const FutureTree& tree, const MemoryStore& store) {
  std::optional<FrontierPick> best;
  std::function<void(const FutureNode&, double, std::size_t)> rec = [&](const FutureNode& n,
                                                                        double rho,
                                                                        std::size_t depth) {
    if (depth == 0) return;
    for (const auto& c : n.children) {
      const double r = rho * c.probability;
      const Payload* payload = nullptr;
      NodeId id = c.id;
      if (c.id.type == NodeType::Image) {
        payload = &store.get(c.id).payload;
      } else if (c.id.type == NodeType::Superimpose) {
        const auto& spec = std::get<SuperimposeSpec>(store.get(c.id).payload);
        if (const auto* o = std::get_if<NodeId>(&spec.overlay); o && o->type == NodeType::Image) {
          id = *o;
          payload = &store.get(*o).payload;
        }
      }
      if (payload && (!best || r > best->rho || (r == best->rho && id.serial < best->id.serial))) {
        best = FrontierPick{id, r, payload, id.merged};
      }
      rec(c, r, depth - 1);
    }
  };
  rec(tree.at_cursor(), 1.0, 3);
  return best;
}

double closeness(const ImageData& img, const MemoryStore& store) {
  double best = std::numeric_limits<double>::infinity();
  for (auto id : store.ids_of(NodeType::Image, false)) {
    best = std::min(best, image_distance(img, std::get<ImageData>(store.get(id).payload)));
  }
  for (auto id : store.ids_of(NodeType::Image, true)) {
    const auto& m = std::get<ImageMergedData>(store.get(id).payload);
    if (match_image_masked(img, m)) best = std::min(best, masked_distance(img, m));
  }
  return best;
}

}  // namespace

ThoughtResult thought_step(PredictionSet& set, std::size_t budget, MemoryStore& store,
                           ObservationLearner& learner, ProjectionCanvas& canvas,
                           const MatchConfig& match, std::int64_t tick, double p_net) {
  ThoughtResult result;
  while (result.steps < budget) {
    std::vector<std::size_t> live;
    std::vector<FrontierPick> picks;
    for (std::size_t i = 0; i < set.active.size(); ++i) {
      if (set.active[i].violated) continue;
      if (auto p = pick_frontier(set.active[i], store)) {
        live.push_back(i);
        picks.push_back(*p);
      }
    }
    if (live.size() < 2) break;

    struct Candidate {
      double distance;
      std::size_t base, overlay;
      ImageData image;
    };
    std::optional<Candidate> best;
    for (std::size_t x = 0; x < live.size(); ++x) {
      for (std::size_t y = x + 1; y < live.size(); ++y) {
        // Merged predictions are laid over raw ones; otherwise the less likely one goes on top.
        std::size_t b = x, o = y;
        if (picks[x].is_overlay && !picks[y].is_overlay) std::swap(b, o);
        else if (picks[x].is_overlay == picks[y].is_overlay && picks[y].rho > picks[x].rho) {
          std::swap(b, o);
        }
        ImageData composite = superimpose_images(*picks[b].payload, *picks[o].payload);
        const double d = closeness(composite, store);
        if (!best || d < best->distance) best = Candidate{d, live[b], live[o], composite};
      }
    }
    NodeId stored;
    Payload probe{best->image};
    if (auto hit = find_match(store, probe, match); hit && !hit->id.merged && hit->distance == 0.0) {
      stored = hit->id;
    } else {
      stored = store.put(best->image, tick + static_cast<std::int64_t>(result.steps));
    }
    learner.append(TraceEntry{stored, tick + static_cast<std::int64_t>(result.steps), p_net});
    canvas.frames.push_back(best->image);
    canvas.stored.push_back(stored);
    result.stored.push_back(stored);
    result.distances.push_back(best->distance);
    set.active.erase(set.active.begin() + static_cast<std::ptrdiff_t>(best->overlay));
    result.steps += 1;
  }
  return result;
}

}  // namespace rtop
