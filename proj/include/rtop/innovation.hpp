#pragma once

// Superimposition of predicted nodes, placeholder binding for parameterized paths, the projection
// canvas, and the bounded thought loop.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "rtop/matcher.hpp"
#include "rtop/memory_store.hpp"
#include "rtop/observation.hpp"
#include "rtop/prediction.hpp"

namespace rtop {

// Pixel grid of a raw image, or the rounded centers of a merged one.
ImageData image_pixels(const Payload& p);

// Overlay pixels replace base pixels wherever the overlay is defined: every pixel of a raw image,
// the must-match pixels of a merged one.
ImageData superimpose_images(const Payload& base, const Payload& overlay);

// Rescales the content waveform about its mean so its amplitude variance moves to the timbre's
// center. A raw timbre node contributes its own summary. Throws Unplayable for merged content
// without a source waveform.
AudioData superimpose_audio(const Payload& content, const Payload& timbre);

struct BoundStep {
  NodeId node;                          // step as it appears in the path
  std::optional<SuperimposeSpec> bound;  // SIA steps with every resolvable placeholder filled
};

struct Instantiation {
  std::vector<BoundStep> steps;
  std::vector<Placeholder> unbound;
  bool complete() const { return unbound.empty(); }
};

// Image node with the highest net probability within `depth` levels of the cursor; lower serial
// wins ties.
std::optional<std::pair<NodeId, double>> frontier_image(const FutureTree& tree, std::size_t depth);

// Most probable continuation from the cursor, up to `depth` nodes.
std::vector<NodeId> likely_continuation(const FutureTree& tree, std::size_t depth);

// Binds the placeholders of `path` (the continuation of `set.active[tree_index]`). P_IMG takes the
// most probable image among the other trees' next three levels. P_PRECEDING/P_FOLLOWING take the
// nearest audio nodes around the SIA step in the projection sequence, which concatenates each
// tree's likely continuation in `temporal_order` (tree indices; default is set order).
Instantiation bind_placeholders(const std::vector<NodeId>& path, std::size_t tree_index,
                                const PredictionSet& set, const MemoryStore& store,
                                const std::vector<std::size_t>& temporal_order = {});

std::string render_projection(const Instantiation& inst, const MemoryStore& store);

// Image or audio payload produced by a bound SIA step, or the stored payload of a plain step.
std::optional<Payload> realize(const BoundStep& step, const MemoryStore& store);

struct ProjectionCanvas {
  std::vector<ImageData> frames;
  std::vector<AudioData> audio_track;
  std::vector<NodeId> stored;

  // frame_0000.ppm ... and clip_0000.wav ...; returns the number of files written.
  std::size_t export_to(const std::filesystem::path& dir) const;
};

struct ThoughtResult {
  std::size_t steps = 0;
  std::vector<NodeId> stored;
  std::vector<double> distances;
};

// Up to `budget` superimposition steps over pairs of active trees. Each keeps the composite closest
// to a stored image, stores it (or reuses an exact match), appends it to the trace at the next tick
// from `tick`, and drops the overlay tree from the set.
ThoughtResult thought_step(PredictionSet& set, std::size_t budget, MemoryStore& store,
                           ObservationLearner& learner, ProjectionCanvas& canvas,
                           const MatchConfig& match, std::int64_t tick, double p_net);

}  // namespace rtop
