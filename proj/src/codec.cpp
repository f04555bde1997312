#include "rtop/codec.hpp"

#include <bit>
#include <cstring>

#include <fmt/format.h>

#include "rtop/error.hpp"

namespace rtop {

void ByteWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void ByteWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void ByteWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s.data(), s.size());
}

void ByteWriter::bytes(const void* data, std::size_t n) {
  const auto* p = static_cast<const std::uint8_t*>(data);
  buf_.insert(buf_.end(), p, p + n);
}

void ByteWriter::id(NodeId v) {
  u8(static_cast<std::uint8_t>(v.type));
  boolean(v.merged);
  u32(v.serial);
}

namespace {

void write_image(ByteWriter& w, const ImageData& img) {
  for (const auto& px : img.pixels) {
    w.u8(px.h);
    w.u8(px.s);
    w.u8(px.l);
  }
}

ImageData read_image(ByteReader& r) {
  ImageData img;
  for (auto& px : img.pixels) {
    px.h = r.u8();
    px.s = r.u8();
    px.l = r.u8();
  }
  return img;
}

void write_audio(ByteWriter& w, const AudioData& a) {
  w.u32(static_cast<std::uint32_t>(a.samples.size()));
  w.bytes(a.samples.data(), a.samples.size());
}

AudioData read_audio(ByteReader& r) {
  AudioData a;
  a.samples.resize(r.count());
  r.bytes(a.samples.data(), a.samples.size());
  return a;
}

void write_summary(ByteWriter& w, const AudioSummary& s) {
  w.f64(s.var_amplitude);
  w.f64(s.mean_cross_rate);
}

AudioSummary read_summary(ByteReader& r) {
  AudioSummary s;
  s.var_amplitude = r.f64();
  s.mean_cross_rate = r.f64();
  return s;
}

void write_operand(ByteWriter& w, const Operand& op) {
  if (const auto* id = std::get_if<NodeId>(&op)) {
    w.u8(0);
    w.id(*id);
  } else {
    w.u8(1);
    w.u8(static_cast<std::uint8_t>(std::get<Placeholder>(op)));
  }
}

Operand read_operand(ByteReader& r) {
  if (r.u8() == 0) return r.id();
  const auto p = r.u8();
  if (p > 2) throw Error(ErrorKind::Malformed, "bad placeholder tag");
  return static_cast<Placeholder>(p);
}

}  // namespace

void ByteWriter::payload(const Payload& p) {
  u8(static_cast<std::uint8_t>(p.index()));
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ImageData>) {
          write_image(*this, v);
        } else if constexpr (std::is_same_v<T, ImageMergedData>) {
          for (const auto& px : v.pixels) {
            f64(px.h);
            f64(px.s);
            f64(px.l);
            boolean(px.must_match);
            f64(px.l_tol);
          }
          u32(static_cast<std::uint32_t>(v.provenance.size()));
          for (const auto& s : v.provenance) {
            id(s.id);
            write_image(*this, s.image);
          }
        } else if constexpr (std::is_same_v<T, AudioData>) {
          write_audio(*this, v);
        } else if constexpr (std::is_same_v<T, AudioMergedData>) {
          write_summary(*this, v.center);
          write_summary(*this, v.tol);
          u32(static_cast<std::uint32_t>(v.provenance.size()));
          for (const auto& s : v.provenance) {
            id(s.id);
            write_audio(*this, s.audio);
          }
        } else if constexpr (std::is_same_v<T, FocusAction>) {
          i64(v.dx);
          i64(v.dy);
          i64(v.dzoom);
        } else if constexpr (std::is_same_v<T, FocusMergedAction>) {
          f64(v.dx);
          f64(v.dy);
          f64(v.dzoom);
          f64(v.tol);
          u32(static_cast<std::uint32_t>(v.provenance.size()));
          for (const auto& a : v.provenance) {
            i64(a.dx);
            i64(a.dy);
            i64(a.dzoom);
          }
        } else if constexpr (std::is_same_v<T, AttentionAction>) {
          u8(static_cast<std::uint8_t>(v.target));
        } else if constexpr (std::is_same_v<T, SpeechAction>) {
          str(v.text());
        } else if constexpr (std::is_same_v<T, JumpSpec>) {
          u32(v.hop);
        } else if constexpr (std::is_same_v<T, GroupSpec>) {
          boolean(v.is_wildcard);
          u32(static_cast<std::uint32_t>(v.members.size()));
          for (auto m : v.members) id(m);
        } else if constexpr (std::is_same_v<T, SuperimposeSpec>) {
          write_operand(*this, v.base);
          write_operand(*this, v.overlay);
        } else {
          str(v.sense);
          f64(v.value);
        }
      },
      p);
}

void ByteReader::need(std::size_t n) const {
  if (data_.size() - pos_ < n) throw Error(ErrorKind::Malformed, "truncated input");
}

std::uint8_t ByteReader::u8() {
  need(1);
  return static_cast<std::uint8_t>(data_[pos_++]);
}

std::uint32_t ByteReader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  }
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
  }
  return v;
}

double ByteReader::f64() { return std::bit_cast<double>(u64()); }

bool ByteReader::boolean() {
  const auto v = u8();
  if (v > 1) throw Error(ErrorKind::Malformed, "bad boolean");
  return v == 1;
}

std::string ByteReader::str() {
  const auto n = count();
  std::string s(n, '\0');
  bytes(s.data(), n);
  return s;
}

void ByteReader::bytes(void* out, std::size_t n) {
  need(n);
  std::memcpy(out, data_.data() + pos_, n);
  pos_ += n;
}

std::size_t ByteReader::count(std::size_t min_element_size) {
  const std::size_t n = u32();
  if (min_element_size > 0 && n > (data_.size() - pos_) / min_element_size) {
    throw Error(ErrorKind::Malformed, "element count exceeds input");
  }
  return n;
}

NodeId ByteReader::id() {
  NodeId v;
  const auto t = u8();
  if (t >= kNodeTypeCount) throw Error(ErrorKind::Malformed, "bad node type");
  v.type = static_cast<NodeType>(t);
  v.merged = boolean();
  v.serial = u32();
  return v;
}

Payload ByteReader::payload() {
  const auto index = u8();
  switch (index) {
    case 0: return read_image(*this);
    case 1: {
      ImageMergedData m;
      for (auto& px : m.pixels) {
        px.h = f64();
        px.s = f64();
        px.l = f64();
        px.must_match = boolean();
        px.l_tol = f64();
      }
      const auto n = count(6 + kImagePixels * 3);
      for (std::size_t i = 0; i < n; ++i) {
        ImageSource s;
        s.id = id();
        s.image = read_image(*this);
        m.provenance.push_back(std::move(s));
      }
      return m;
    }
    case 2: return read_audio(*this);
    case 3: {
      AudioMergedData m;
      m.center = read_summary(*this);
      m.tol = read_summary(*this);
      const auto n = count(10);
      for (std::size_t i = 0; i < n; ++i) {
        AudioSource s;
        s.id = id();
        s.audio = read_audio(*this);
        m.provenance.push_back(std::move(s));
      }
      return m;
    }
    case 4: {
      FocusAction a;
      a.dx = static_cast<int>(i64());
      a.dy = static_cast<int>(i64());
      a.dzoom = static_cast<int>(i64());
      return a;
    }
    case 5: {
      FocusMergedAction m;
      m.dx = f64();
      m.dy = f64();
      m.dzoom = f64();
      m.tol = f64();
      const auto n = count(24);
      for (std::size_t i = 0; i < n; ++i) {
        FocusAction a;
        a.dx = static_cast<int>(i64());
        a.dy = static_cast<int>(i64());
        a.dzoom = static_cast<int>(i64());
        m.provenance.push_back(a);
      }
      return m;
    }
    case 6: {
      const auto t = u8();
      if (t > 2) throw Error(ErrorKind::Malformed, "bad attention target");
      return AttentionAction{static_cast<AttentionTarget>(t)};
    }
    case 7: return SpeechAction::parse(str());
    case 8: return JumpSpec{u32()};
    case 9: {
      GroupSpec g;
      g.is_wildcard = boolean();
      const auto n = count(6);
      for (std::size_t i = 0; i < n; ++i) g.members.push_back(id());
      return g;
    }
    case 10: {
      SuperimposeSpec s;
      s.base = read_operand(*this);
      s.overlay = read_operand(*this);
      return s;
    }
    case 11: {
      InternalSenseReading r;
      r.sense = str();
      r.value = f64();
      return r;
    }
    default: throw Error(ErrorKind::Malformed, fmt::format("bad payload tag {}", index));
  }
}

std::string to_hex(const std::vector<std::uint8_t>& bytes) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  out.reserve(bytes.size() * 2);
  for (auto b : bytes) {
    out += kDigits[b >> 4];
    out += kDigits[b & 0xF];
  }
  return out;
}

std::vector<std::uint8_t> from_hex(std::string_view hex) {
  if (hex.size() % 2 != 0) throw Error(ErrorKind::Malformed, "odd hex length");
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    throw Error(ErrorKind::Malformed, "bad hex digit");
  };
  std::vector<std::uint8_t> out(hex.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
  }
  return out;
}

std::string encode_payload_hex(const Payload& p) {
  ByteWriter w;
  w.payload(p);
  return to_hex(w.data());
}

Payload decode_payload_hex(std::string_view hex) {
  const auto bytes = from_hex(hex);
  ByteReader r(bytes);
  auto p = r.payload();
  if (!r.done()) throw Error(ErrorKind::Malformed, "trailing payload bytes");
  return p;
}

}  // namespace rtop
