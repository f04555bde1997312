#pragma once

// Memory node identity and typed payloads.

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace rtop {

enum class NodeType : std::uint8_t {
  Image = 0,
  Audio,
  Focus,       // image focus change action
  Attention,   // attention change action
  Speech,      // speech action (phone sequence)
  Jump,
  Group,
  Superimpose,
  InternalSense,
};

inline constexpr std::size_t kNodeTypeCount = 9;

std::string_view type_tag(NodeType type);
std::optional<NodeType> parse_type_tag(std::string_view tag);

bool is_action(NodeType type);
bool is_sensory(NodeType type);

struct NodeId {
  NodeType type = NodeType::Image;
  bool merged = false;
  std::uint32_t serial = 0;  // 0 means "no node"

  bool valid() const { return serial != 0; }
  std::string str() const;

  auto operator<=>(const NodeId&) const = default;
  bool operator==(const NodeId&) const = default;
};

// Accepts `IMG.158` and `IMG.M.13`.
std::optional<NodeId> parse_node_id(std::string_view text);

// ---- sensory payloads ------------------------------------------------------

inline constexpr int kImageSide = 32;
inline constexpr int kImagePixels = kImageSide * kImageSide;

struct HslPixel {
  std::uint8_t h = 0;  // 0..7
  std::uint8_t s = 0;  // 0..3
  std::uint8_t l = 0;  // 0..7

  bool operator==(const HslPixel&) const = default;
};

struct ImageData {
  std::array<HslPixel, kImagePixels> pixels{};

  HslPixel& at(int x, int y) { return pixels[static_cast<std::size_t>(y * kImageSide + x)]; }
  const HslPixel& at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y * kImageSide + x)];
  }
  bool operator==(const ImageData&) const = default;
};

struct MergedPixel {
  double h = 0.0;
  double s = 0.0;
  double l = 0.0;
  bool must_match = true;
  double l_tol = 0.0;

  bool operator==(const MergedPixel&) const = default;
};

struct ImageSource {
  NodeId id;
  ImageData image;
  bool operator==(const ImageSource&) const = default;
};

struct ImageMergedData {
  std::array<MergedPixel, kImagePixels> pixels{};
  std::vector<ImageSource> provenance;  // most recent last, bounded

  std::size_t must_match_count() const;
  bool operator==(const ImageMergedData&) const = default;
};

inline constexpr int kAudioSampleRate = 16000;
inline constexpr int kAudioSamples = 12800;  // 800 ms

struct AudioData {
  std::vector<std::int8_t> samples;
  bool operator==(const AudioData&) const = default;
};

struct AudioSummary {
  double var_amplitude = 0.0;
  double mean_cross_rate = 0.0;  // crossings of the mean per second
  bool operator==(const AudioSummary&) const = default;
};

struct AudioSource {
  NodeId id;
  AudioData audio;
  bool operator==(const AudioSource&) const = default;
};

struct AudioMergedData {
  AudioSummary center;
  AudioSummary tol;
  std::vector<AudioSource> provenance;
  bool operator==(const AudioMergedData&) const = default;
};

// ---- action payloads -------------------------------------------------------

struct FocusAction {
  int dx = 0;
  int dy = 0;
  int dzoom = 0;
  bool operator==(const FocusAction&) const = default;
};

// Generalized focus change: accepts any move inside a box around the center.
struct FocusMergedAction {
  double dx = 0.0;
  double dy = 0.0;
  double dzoom = 0.0;
  double tol = 0.0;
  std::vector<FocusAction> provenance;

  FocusAction rounded() const;
  bool accepts(const FocusAction& a) const;
  bool operator==(const FocusMergedAction&) const = default;
};

enum class AttentionTarget : std::uint8_t { Visual = 0, Audio = 1, Thought = 2 };
std::string_view to_string(AttentionTarget t);

struct AttentionAction {
  AttentionTarget target = AttentionTarget::Visual;
  bool operator==(const AttentionAction&) const = default;
};

struct SpeechAction {
  std::vector<std::string> phones;
  bool operator==(const SpeechAction&) const = default;
  std::string text() const;  // "w-i-l"
  static SpeechAction parse(std::string_view text);
};

struct JumpSpec {
  std::uint32_t hop = 5;
  bool operator==(const JumpSpec&) const = default;
};

struct GroupSpec {
  std::vector<NodeId> members;  // sorted, distinct
  bool is_wildcard = false;
  bool contains(NodeId id) const;
  bool operator==(const GroupSpec&) const = default;
};

enum class Placeholder : std::uint8_t { Image = 0, Preceding = 1, Following = 2 };
std::string_view to_string(Placeholder p);

using Operand = std::variant<NodeId, Placeholder>;

struct SuperimposeSpec {
  Operand base;
  Operand overlay;
  bool operator==(const SuperimposeSpec&) const = default;
};

struct InternalSenseReading {
  std::string sense;
  double value = 0.0;
  bool operator==(const InternalSenseReading&) const = default;
};

using Payload = std::variant<ImageData, ImageMergedData, AudioData, AudioMergedData, FocusAction,
                             FocusMergedAction, AttentionAction, SpeechAction, JumpSpec, GroupSpec,
                             SuperimposeSpec, InternalSenseReading>;

NodeType payload_type(const Payload& p);
bool payload_is_merged(const Payload& p);

struct MemoryNode {
  NodeId id;
  Payload payload;
  std::int64_t created_at = 0;
};

// Display label used in tree dumps: IMG.158, SPK.w-i-l, IFA.40,50,100, ATT.AUD, JMP.5,
// SIA:[P_IMG,IMG.M.101].
std::string node_label(const MemoryNode& node);
std::string operand_label(const Operand& op);

}  // namespace rtop
