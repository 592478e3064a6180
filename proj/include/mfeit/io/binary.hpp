#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mfeit::io {

/// 64-bit FNV-1a over a byte range.
std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes);

// Little-endian byte sink. Everything is appended to an in-memory buffer so the
// trailing checksum can be computed over exactly what was emitted.
class ByteWriter {
 public:
  void magic(std::string_view tag);
  void u8(std::uint8_t v);
  void u16(std::uint16_t v);
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void bytes(std::span<const std::uint8_t> data);

  /// Appends fnv1a64 of everything written so far.
  void checksum();

  const std::vector<std::uint8_t>& buffer() const { return buf_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::vector<std::uint8_t> buf_;
};

// Bounds-checked little-endian reader; failures name the byte offset.
class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> data) : data_(std::move(data)) {}
  static ByteReader load(const std::filesystem::path& path);

  void expect_magic(std::string_view tag);
  std::uint8_t u8();
  std::uint16_t u16();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  std::vector<std::uint8_t> bytes(std::size_t count);

  /// Reads the trailing checksum and compares it with fnv1a64 of every byte before it.
  void verify_checksum();
  void expect_end() const;

  std::size_t offset() const { return pos_; }
  std::size_t size() const { return data_.size(); }

 private:
  void need(std::size_t count, const char* what) const;

  std::vector<std::uint8_t> data_;
  std::size_t pos_ = 0;
};

}  // namespace mfeit::io
