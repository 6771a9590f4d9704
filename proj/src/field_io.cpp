// SPDX-License-Identifier: Apache-2.0

#include "probsr/field_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "probsr/errors.hpp"

namespace probsr
{

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

void put_u32(std::vector<std::uint8_t> &out, std::uint32_t v)
{
  for (int k = 0; k < 4; ++k)
  {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
}

void put_u64(std::vector<std::uint8_t> &out, std::uint64_t v)
{
  for (int k = 0; k < 8; ++k)
  {
    out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  }
}

void put_f64(std::vector<std::uint8_t> &out, double v)
{
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

void ByteReader::need(std::size_t n)
{
  if (remaining() < n)
  {
    throw LengthMismatchError(origin_ + ": unexpected end of data (need " + std::to_string(n) +
                              " bytes at offset " + std::to_string(pos_) + ", have " +
                              std::to_string(remaining()) + ")");
  }
}

std::uint32_t ByteReader::u32()
{
  need(4);
  std::uint32_t v = 0;
  for (int k = 0; k < 4; ++k)
  {
    v |= static_cast<std::uint32_t>(bytes_[pos_++]) << (8 * k);
  }
  return v;
}

std::uint64_t ByteReader::u64()
{
  need(8);
  std::uint64_t v = 0;
  for (int k = 0; k < 8; ++k)
  {
    v |= static_cast<std::uint64_t>(bytes_[pos_++]) << (8 * k);
  }
  return v;
}

double ByteReader::f64()
{
  return std::bit_cast<double>(u64());
}

void ByteReader::magic(const char (&expected)[5])
{
  if (remaining() < 4 || std::memcmp(bytes_.data() + pos_, expected, 4) != 0)
  {
    throw FormatError(origin_ + ": bad magic, expected \"" + std::string(expected) + "\"");
  }
  pos_ += 4;
}

std::span<const std::uint8_t> ByteReader::bytes(std::size_t n)
{
  need(n);
  const auto out = bytes_.subspan(pos_, n);
  pos_ += n;
  return out;
}

std::vector<std::uint8_t> encode_field(const Field &field)
{
  std::vector<std::uint8_t> out;
  out.reserve(16 + 8 * field.size());
  out.insert(out.end(), {'P', 'S', 'R', 'F'});
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(field.grid.n));
  put_u32(out, static_cast<std::uint32_t>(field.grid.n));
  for (double v : field.data)
  {
    put_f64(out, v);
  }
  return out;
}

Field decode_field(std::span<const std::uint8_t> bytes, const std::string &origin)
{
  ByteReader in(bytes, origin);
  in.magic("PSRF");
  const std::uint32_t version = in.u32();
  if (version != 1)
  {
    throw FormatError(origin + ": unsupported PSRF version " + std::to_string(version));
  }
  const std::uint32_t rows = in.u32();
  const std::uint32_t cols = in.u32();
  if (rows != cols)
  {
    throw ShapeError(origin + ": fields must be square, got " + std::to_string(rows) + "x" +
                     std::to_string(cols));
  }
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  if (in.remaining() != 8 * count)
  {
    throw LengthMismatchError(origin + ": header declares " + std::to_string(count) +
                              " values but payload holds " + std::to_string(in.remaining()) +
                              " bytes");
  }
  Grid grid(static_cast<int>(rows));
  check_grid(grid);
  Field f(grid);
  for (std::size_t k = 0; k < count; ++k)
  {
    f[k] = in.f64();
  }
  return f;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path &path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
  {
    if (!std::filesystem::exists(path))
    {
      throw MissingFileError("missing file: " + path.string());
    }
    throw IoError("cannot open " + path.string());
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path &path, std::span<const std::uint8_t> bytes)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
  {
    throw IoError("cannot open " + path.string() + " for writing");
  }
  out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out)
  {
    throw IoError("write failed: " + path.string());
  }
}

void write_field(const std::filesystem::path &path, const Field &field)
{
  write_file_bytes(path, encode_field(field));
}

Field read_field(const std::filesystem::path &path)
{
  return decode_field(read_file_bytes(path), path.string());
}

std::uint32_t crc32(std::span<const std::uint8_t> bytes)
{
  uLong crc = ::crc32(0L, Z_NULL, 0);
  crc = ::crc32_z(crc, bytes.data(), bytes.size());
  return static_cast<std::uint32_t>(crc);
}

}  // namespace probsr
