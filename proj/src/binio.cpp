#include "tabret/binio.hpp"

#include <bit>
#include <cstring>

namespace tabret {

void BinaryWriter::magic(std::string_view four_cc) {
  if (four_cc.size() != 4) throw Error("magic must be 4 bytes");
  buf_.append(four_cc);
}

void BinaryWriter::u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void BinaryWriter::u64(std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void BinaryWriter::f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

void BinaryWriter::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void BinaryWriter::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  buf_.append(s);
}

void BinaryWriter::f32_array(const std::vector<double>& v) {
  buf_.reserve(buf_.size() + 4 * v.size());
  for (double x : v) f32(static_cast<float>(x));
}

const char* BinaryReader::take(std::size_t n) {
  if (buf_.size() - pos_ < n) throw Error(source_ + ": truncated file");
  const char* p = buf_.data() + pos_;
  pos_ += n;
  return p;
}

void BinaryReader::expect_magic(std::string_view four_cc) {
  const char* p = take(4);
  if (std::string_view(p, 4) != four_cc) {
    throw Error(source_ + ": bad magic, expected \"" + std::string(four_cc) + "\"");
  }
}

void BinaryReader::expect_version(std::uint32_t expected) {
  const std::uint32_t v = u32();
  if (v != expected) {
    throw Error(source_ + ": unsupported format version " + std::to_string(v) + " (expected " +
                std::to_string(expected) + ")");
  }
}

std::uint8_t BinaryReader::u8() { return static_cast<std::uint8_t>(*take(1)); }

std::uint32_t BinaryReader::u32() {
  const auto* p = reinterpret_cast<const unsigned char*>(take(4));
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return v;
}

std::uint64_t BinaryReader::u64() {
  const auto* p = reinterpret_cast<const unsigned char*>(take(8));
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  return v;
}

float BinaryReader::f32() { return std::bit_cast<float>(u32()); }

double BinaryReader::f64() { return std::bit_cast<double>(u64()); }

std::string BinaryReader::str() {
  const std::uint32_t n = u32();
  const char* p = take(n);
  return std::string(p, n);
}

std::vector<double> BinaryReader::f32_array(std::size_t count) {
  if ((buf_.size() - pos_) / 4 < count) throw Error(source_ + ": truncated file");
  std::vector<double> out(count);
  for (std::size_t i = 0; i < count; ++i) out[i] = static_cast<double>(f32());
  return out;
}

void BinaryReader::expect_end() const {
  if (!at_end()) throw Error(source_ + ": trailing bytes after payload");
}

}  // namespace tabret
