#include "rtop/matcher.hpp"

#include <algorithm>
#include <array>
#include <tuple>

#include "rtop/image.hpp"

namespace rtop {

std::optional<double> match_against(const Payload& probe, const MemoryNode& node,
                                    const MatchConfig& cfg) {
  if (const auto* img = std::get_if<ImageData>(&probe)) {
    if (const auto* raw = std::get_if<ImageData>(&node.payload)) {
      const auto r = match_image(*img, *raw, cfg.image_threshold);
      return r.matched ? std::optional(r.distance) : std::nullopt;
    }
    if (const auto* merged = std::get_if<ImageMergedData>(&node.payload)) {
      if (!match_image_masked(*img, *merged)) return std::nullopt;
      return masked_distance(*img, *merged);
    }
    return std::nullopt;
  }
  if (const auto* aud = std::get_if<AudioData>(&probe)) {
    const auto ps = audio_summary(*aud);
    if (const auto* raw = std::get_if<AudioData>(&node.payload)) {
      const auto cs = audio_summary(*raw);
      if (std::abs(ps.var_amplitude - cs.var_amplitude) >
              cfg.audio.var_rel * std::max(std::abs(ps.var_amplitude), std::abs(cs.var_amplitude)) ||
          std::abs(ps.mean_cross_rate - cs.mean_cross_rate) >
              cfg.audio.cross_rel *
                  std::max(std::abs(ps.mean_cross_rate), std::abs(cs.mean_cross_rate))) {
        return std::nullopt;
      }
      return audio_distance(ps, cs);
    }
    if (const auto* merged = std::get_if<AudioMergedData>(&node.payload)) {
      if (!match_audio_merged(ps, *merged)) return std::nullopt;
      return audio_distance(ps, merged->center);
    }
  }
  return std::nullopt;
}

namespace {

bool is_empty_mask(const MemoryNode& node) {
  if (const auto* m = std::get_if<ImageMergedData>(&node.payload)) return m->must_match_count() == 0;
  return false;
}

std::array<double, 2> leeway_for(const Payload& probe, const MatchConfig& cfg) {
  if (std::holds_alternative<AudioData>(probe)) {
    // The relative tolerance is resolved against the larger value, so a candidate may sit up to
    // rel/(1-rel) above the probe.
    const auto s = audio_summary(std::get<AudioData>(probe));
    return {s.var_amplitude * cfg.audio.var_rel / (1.0 - cfg.audio.var_rel),
            s.mean_cross_rate * cfg.audio.cross_rel / (1.0 - cfg.audio.cross_rel)};
  }
  return {cfg.leeway_mean_lightness, cfg.leeway_var_lightness};
}

}  // namespace

std::optional<MatchHit> find_match(const MemoryStore& store, const Payload& probe,
                                   const MatchConfig& cfg) {
  const NodeType type = payload_type(probe);
  if (type != NodeType::Image && type != NodeType::Audio) return std::nullopt;
  const auto lee = leeway_for(probe, cfg);
  std::vector<NodeId> pool = store.candidates(probe, lee);
  // Merged nodes are judged by their mask, not by their center's summary values.
  for (auto id : store.ids_of(type, true)) pool.push_back(id);
  std::sort(pool.begin(), pool.end());
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

  std::optional<MatchHit> best;
  std::tuple<bool, double, std::uint32_t, bool> best_key;
  for (auto id : pool) {
    const auto& node = store.get(id);
    auto d = match_against(probe, node, cfg);
    if (!d) continue;
    const auto key = std::make_tuple(is_empty_mask(node), *d, id.serial, id.merged);
    if (!best || key < best_key) {
      best = MatchHit{id, *d};
      best_key = key;
    }
  }
  return best;
}

bool group_accepts(const MemoryStore& store, const GroupSpec& group, const Payload& probe,
                   const MatchConfig& cfg) {
  if (group.is_wildcard) return true;
  for (auto m : group.members) {
    const auto* node = store.find(m);
    if (node && match_against(probe, *node, cfg)) return true;
  }
  return false;
}

}  // namespace rtop
