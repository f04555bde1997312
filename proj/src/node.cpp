#include "rtop/node.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include <fmt/format.h>

#include "rtop/error.hpp"

namespace rtop {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Malformed: return "malformed";
    case ErrorKind::DanglingReference: return "dangling-reference";
    case ErrorKind::NonMonotonic: return "non-monotonic";
    case ErrorKind::OutOfBounds: return "out-of-bounds";
    case ErrorKind::NotFound: return "not-found";
    case ErrorKind::Unplayable: return "unplayable";
    case ErrorKind::Precondition: return "precondition";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::Io: return "io";
  }
  return "error";
}

namespace {

constexpr std::array<std::string_view, kNodeTypeCount> kTags = {
    "IMG", "AUD", "IFA", "ATT", "SPK", "JMP", "GRP", "SIA", "INS"};

}  // namespace

std::string_view type_tag(NodeType type) { return kTags[static_cast<std::size_t>(type)]; }

std::optional<NodeType> parse_type_tag(std::string_view tag) {
  for (std::size_t i = 0; i < kTags.size(); ++i) {
    if (kTags[i] == tag) return static_cast<NodeType>(i);
  }
  return std::nullopt;
}

bool is_action(NodeType type) {
  return type == NodeType::Focus || type == NodeType::Attention || type == NodeType::Speech;
}

bool is_sensory(NodeType type) {
  return type == NodeType::Image || type == NodeType::Audio || type == NodeType::Group ||
         type == NodeType::Superimpose || type == NodeType::InternalSense;
}

std::string NodeId::str() const {
  if (merged) return fmt::format("{}.M.{}", type_tag(type), serial);
  return fmt::format("{}.{}", type_tag(type), serial);
}

std::optional<NodeId> parse_node_id(std::string_view text) {
  auto dot = text.find('.');
  if (dot == std::string_view::npos) return std::nullopt;
  auto type = parse_type_tag(text.substr(0, dot));
  if (!type) return std::nullopt;
  NodeId id;
  id.type = *type;
  std::string_view rest = text.substr(dot + 1);
  if (rest.size() > 2 && rest[0] == 'M' && rest[1] == '.') {
    id.merged = true;
    rest = rest.substr(2);
  }
  std::uint32_t serial = 0;
  auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), serial);
  if (ec != std::errc() || ptr != rest.data() + rest.size() || serial == 0) return std::nullopt;
  id.serial = serial;
  return id;
}

std::size_t ImageMergedData::must_match_count() const {
  return static_cast<std::size_t>(
      std::count_if(pixels.begin(), pixels.end(), [](const MergedPixel& p) { return p.must_match; }));
}

FocusAction FocusMergedAction::rounded() const {
  return FocusAction{static_cast<int>(std::lround(dx)), static_cast<int>(std::lround(dy)),
                     static_cast<int>(std::lround(dzoom))};
}

bool FocusMergedAction::accepts(const FocusAction& a) const {
  return std::abs(a.dx - dx) <= tol && std::abs(a.dy - dy) <= tol &&
         std::abs(a.dzoom - dzoom) <= tol;
}

std::string_view to_string(AttentionTarget t) {
  switch (t) {
    case AttentionTarget::Visual: return "IMG";
    case AttentionTarget::Audio: return "AUD";
    case AttentionTarget::Thought: return "THT";
  }
  return "?";
}

std::string SpeechAction::text() const {
  std::string out;
  for (std::size_t i = 0; i < phones.size(); ++i) {
    if (i) out += '-';
    out += phones[i];
  }
  return out;
}

SpeechAction SpeechAction::parse(std::string_view text) {
  SpeechAction a;
  std::size_t start = 0;
  while (start <= text.size()) {
    auto dash = text.find('-', start);
    auto piece = text.substr(start, dash == std::string_view::npos ? text.npos : dash - start);
    if (!piece.empty()) a.phones.emplace_back(piece);
    if (dash == std::string_view::npos) break;
    start = dash + 1;
  }
  if (a.phones.empty()) throw Error(ErrorKind::Malformed, "empty phone sequence");
  return a;
}

bool GroupSpec::contains(NodeId id) const {
  return std::binary_search(members.begin(), members.end(), id);
}

std::string_view to_string(Placeholder p) {
  switch (p) {
    case Placeholder::Image: return "P_IMG";
    case Placeholder::Preceding: return "P_PRECEDING";
    case Placeholder::Following: return "P_FOLLOWING";
  }
  return "P_?";
}

NodeType payload_type(const Payload& p) {
  struct V {
    NodeType operator()(const ImageData&) const { return NodeType::Image; }
    NodeType operator()(const ImageMergedData&) const { return NodeType::Image; }
    NodeType operator()(const AudioData&) const { return NodeType::Audio; }
    NodeType operator()(const AudioMergedData&) const { return NodeType::Audio; }
    NodeType operator()(const FocusAction&) const { return NodeType::Focus; }
    NodeType operator()(const FocusMergedAction&) const { return NodeType::Focus; }
    NodeType operator()(const AttentionAction&) const { return NodeType::Attention; }
    NodeType operator()(const SpeechAction&) const { return NodeType::Speech; }
    NodeType operator()(const JumpSpec&) const { return NodeType::Jump; }
    NodeType operator()(const GroupSpec&) const { return NodeType::Group; }
    NodeType operator()(const SuperimposeSpec&) const { return NodeType::Superimpose; }
    NodeType operator()(const InternalSenseReading&) const { return NodeType::InternalSense; }
  };
  return std::visit(V{}, p);
}

bool payload_is_merged(const Payload& p) {
  return std::holds_alternative<ImageMergedData>(p) || std::holds_alternative<AudioMergedData>(p) ||
         std::holds_alternative<FocusMergedAction>(p);
}

std::string operand_label(const Operand& op) {
  if (const auto* id = std::get_if<NodeId>(&op)) return id->str();
  return std::string(to_string(std::get<Placeholder>(op)));
}

std::string node_label(const MemoryNode& node) {
  const auto tag = type_tag(node.id.type);
  if (const auto* f = std::get_if<FocusAction>(&node.payload)) {
    return fmt::format("{}.{},{},{}", tag, f->dx, f->dy, f->dzoom);
  }
  if (const auto* a = std::get_if<AttentionAction>(&node.payload)) {
    return fmt::format("{}.{}", tag, to_string(a->target));
  }
  if (const auto* s = std::get_if<SpeechAction>(&node.payload)) {
    return fmt::format("{}.{}", tag, s->text());
  }
  if (const auto* j = std::get_if<JumpSpec>(&node.payload)) {
    return fmt::format("{}.{}", tag, j->hop);
  }
  if (const auto* s = std::get_if<SuperimposeSpec>(&node.payload)) {
    return fmt::format("SIA:[{},{}]", operand_label(s->base), operand_label(s->overlay));
  }
  return node.id.str();
}

}  // namespace rtop
