#include "binary_io.hpp"

#include <stdexcept>

namespace charlink::detail {

BinaryWriter::BinaryWriter(const std::filesystem::path& path)
    : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
  if (!out_) throw std::runtime_error("cannot open " + path.string() + " for writing");
}

void BinaryWriter::finish() {
  out_.flush();
  if (!out_) throw std::runtime_error("write to " + path_.string() + " failed");
}

BinaryReader::BinaryReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
  if (!in_) throw FormatError("file", "cannot open " + path.string());
  std::error_code ec;
  size_ = std::filesystem::file_size(path, ec);
  if (ec) throw FormatError("file", "cannot stat " + path.string());
}

void BinaryReader::read(char* dst, std::size_t n, std::string_view field) {
  if (n > remaining()) {
    throw FormatError(std::string(field), "file truncated (need " + std::to_string(n) +
                                              " bytes, " + std::to_string(remaining()) +
                                              " left)");
  }
  in_.read(dst, static_cast<std::streamsize>(n));
  if (!in_) throw FormatError(std::string(field), "read failed");
  offset_ += n;
}

std::string BinaryReader::get_bytes(std::size_t n, std::string_view field) {
  std::string bytes(n, '\0');
  read(bytes.data(), n, field);
  return bytes;
}

std::string BinaryReader::get_string(std::string_view field, std::uint32_t max_len) {
  const auto len = get<std::uint32_t>(field);
  if (len > max_len) throw FormatError(std::string(field), "string length out of range");
  return get_bytes(len, field);
}

void BinaryReader::expect_end() {
  if (remaining() != 0) {
    throw FormatError("file", std::to_string(remaining()) + " trailing bytes after last field");
  }
}

}  // namespace charlink::detail
