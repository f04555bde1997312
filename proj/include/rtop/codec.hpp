#pragma once

// Little-endian binary encoding shared by snapshots and the event log.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rtop/node.hpp"

namespace rtop {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v);
  void boolean(bool v) { u8(v ? 1 : 0); }
  void str(std::string_view s);
  void bytes(const void* data, std::size_t n);
  void id(NodeId v);
  void payload(const Payload& p);

  const std::vector<std::uint8_t>& data() const { return buf_; }
  std::vector<std::uint8_t> take() { return std::move(buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

// Throws Malformed on truncated or inconsistent input.
class ByteReader {
 public:
  explicit ByteReader(std::string_view data) : data_(data) {}
  explicit ByteReader(const std::vector<std::uint8_t>& data)
      : data_(reinterpret_cast<const char*>(data.data()), data.size()) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64();
  bool boolean();
  std::string str();
  void bytes(void* out, std::size_t n);
  NodeId id();
  Payload payload();
  // Element count guarded against the remaining input size.
  std::size_t count(std::size_t min_element_size = 1);

  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const;

  std::string_view data_;
  std::size_t pos_ = 0;
};

std::string to_hex(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> from_hex(std::string_view hex);

std::string encode_payload_hex(const Payload& p);
Payload decode_payload_hex(std::string_view hex);

}  // namespace rtop
