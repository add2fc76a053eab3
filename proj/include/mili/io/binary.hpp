#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace mili::io {

// Little-endian encoder for the binary artifact formats.
class ByteWriter {
 public:
  void u8(std::uint8_t v) { data_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v);
  void bytes(std::string_view v) { data_.append(v); }
  // u32 length followed by the bytes.
  void str(std::string_view v);

  const std::string& data() const noexcept { return data_; }

 private:
  std::string data_;
};

// Decoder over an in-memory buffer. Running past the end throws Error(io)
// naming the source and the byte offset of the short read.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string source) : data_(data), source_(std::move(source)) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64();
  std::string_view bytes(std::size_t count);
  std::string str();

  std::size_t offset() const noexcept { return offset_; }
  std::size_t remaining() const noexcept { return data_.size() - offset_; }
  const std::string& source() const noexcept { return source_; }
  // Throws Error(io) if bytes are left over.
  void expect_end() const;

 private:
  void need(std::size_t count) const;

  std::string_view data_;
  std::string source_;
  std::size_t offset_ = 0;
};

std::string read_file(const std::filesystem::path& path);
// Writes through a temporary file and renames, creating parent directories.
void write_file(const std::filesystem::path& path, std::string_view data);

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t value);
std::uint64_t parse_hex64(std::string_view text);
// fnv1a64 of the file's bytes, as 16 hex digits.
std::string file_hash(const std::filesystem::path& path);

}  // namespace mili::io
