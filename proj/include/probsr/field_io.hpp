// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "probsr/fem.hpp"

namespace probsr
{

// PSRF field files: "PSRF", u32 version (1), u32 rows, u32 cols, then
// rows * cols little-endian f64 values, row-major, row 0 on the y = lo edge.

std::vector<std::uint8_t> encode_field(const Field &field);
Field decode_field(std::span<const std::uint8_t> bytes, const std::string &origin = "<memory>");

void write_field(const std::filesystem::path &path, const Field &field);
Field read_field(const std::filesystem::path &path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path &path);
void write_file_bytes(const std::filesystem::path &path, std::span<const std::uint8_t> bytes);

std::uint32_t crc32(std::span<const std::uint8_t> bytes);

// Little-endian primitive encoding shared by the binary formats.
void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t> &out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t> &out, double v);

/// Sequential little-endian reader; throws LengthMismatchError on overrun.
class ByteReader
{
public:
  ByteReader(std::span<const std::uint8_t> bytes, std::string origin)
    : bytes_(bytes), origin_(std::move(origin))
  {
  }
  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  void magic(const char (&expected)[5]);
  std::span<const std::uint8_t> bytes(std::size_t n);
  std::size_t remaining() const { return bytes_.size() - pos_; }
  const std::string &origin() const { return origin_; }

private:
  void need(std::size_t n);
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
  std::string origin_;
};

}  // namespace probsr
