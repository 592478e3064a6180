#include "mfeit/io/binary.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "mfeit/error.hpp"

namespace mfeit::io {

std::uint64_t fnv1a64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& buf, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf.push_back(static_cast<std::uint8_t>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xffu));
  }
}

}  // namespace

void ByteWriter::magic(std::string_view tag) {
  buf_.insert(buf_.end(), tag.begin(), tag.end());
}

void ByteWriter::u8(std::uint8_t v) { buf_.push_back(v); }
void ByteWriter::u16(std::uint16_t v) { put_le(buf_, v); }
void ByteWriter::u32(std::uint32_t v) { put_le(buf_, v); }
void ByteWriter::u64(std::uint64_t v) { put_le(buf_, v); }
void ByteWriter::f32(float v) { put_le(buf_, std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::bytes(std::span<const std::uint8_t> data) {
  buf_.insert(buf_.end(), data.begin(), data.end());
}

void ByteWriter::checksum() { u64(fnv1a64(buf_)); }

void ByteWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw IoError("short write to '" + path.string() + "'");
}

ByteReader ByteReader::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ByteReader(std::move(data));
}

void ByteReader::need(std::size_t count, const char* what) const {
  if (pos_ + count > data_.size()) {
    throw IoError(std::string("truncated input reading ") + what + " at offset " + std::to_string(pos_) +
                  " (need " + std::to_string(count) + " bytes, have " + std::to_string(data_.size() - pos_) + ")");
  }
}

void ByteReader::expect_magic(std::string_view tag) {
  need(tag.size(), "magic");
  if (std::memcmp(data_.data() + pos_, tag.data(), tag.size()) != 0) {
    throw IoError("bad magic at offset " + std::to_string(pos_) + ": expected '" + std::string(tag) + "'");
  }
  pos_ += tag.size();
}

namespace {

template <typename T>
T get_le(const std::vector<std::uint8_t>& data, std::size_t pos) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(data[pos + i]) << (8 * i);
  return static_cast<T>(v);
}

}  // namespace

std::uint8_t ByteReader::u8() {
  need(1, "u8");
  return data_[pos_++];
}

std::uint16_t ByteReader::u16() {
  need(2, "u16");
  auto v = get_le<std::uint16_t>(data_, pos_);
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  need(4, "u32");
  auto v = get_le<std::uint32_t>(data_, pos_);
  pos_ += 4;
  return v;
}

std::uint64_t ByteReader::u64() {
  need(8, "u64");
  auto v = get_le<std::uint64_t>(data_, pos_);
  pos_ += 8;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

std::vector<std::uint8_t> ByteReader::bytes(std::size_t count) {
  need(count, "byte block");
  std::vector<std::uint8_t> out(data_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                data_.begin() + static_cast<std::ptrdiff_t>(pos_ + count));
  pos_ += count;
  return out;
}

void ByteReader::verify_checksum() {
  const std::size_t at = pos_;
  const std::uint64_t expected = fnv1a64(std::span(data_.data(), at));
  const std::uint64_t stored = u64();
  if (stored != expected) throw IoError("checksum mismatch at offset " + std::to_string(at));
}

void ByteReader::expect_end() const {
  if (pos_ != data_.size()) {
    throw IoError("unexpected trailing data at offset " + std::to_string(pos_) + " (" +
                  std::to_string(data_.size() - pos_) + " bytes)");
  }
}

}  // namespace mfeit::io
