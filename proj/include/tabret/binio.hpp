#pragma once

// Little-endian binary encoding shared by every persisted artifact.
// Layouts are documented in docs/formats.md.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tabret/common.hpp"

namespace tabret {

class BinaryWriter {
 public:
  void magic(std::string_view four_cc);
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void str(std::string_view s);
  // Doubles are narrowed to float32; callers keep float-representable values.
  void f32_array(const std::vector<double>& v);

  const std::string& bytes() const { return buf_; }

 private:
  std::string buf_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::string bytes, std::string source = "<buffer>")
      : buf_(std::move(bytes)), source_(std::move(source)) {}

  // Throws unless the next four bytes equal `four_cc`.
  void expect_magic(std::string_view four_cc);
  // Reads a u32 version and throws unless it equals `expected`.
  void expect_version(std::uint32_t expected);

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  std::vector<double> f32_array(std::size_t count);

  bool at_end() const { return pos_ == buf_.size(); }
  void expect_end() const;

 private:
  const char* take(std::size_t n);

  std::string buf_;
  std::string source_;
  std::size_t pos_ = 0;
};

}  // namespace tabret
