#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>

#include "charlink/errors.hpp"

namespace charlink::detail {

static_assert(std::endian::native == std::endian::little,
              "binary formats are little-endian; big-endian hosts need byte swapping");

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path);

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put(T value) {
    out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void put_span(std::span<const T> values) {
    out_.write(reinterpret_cast<const char*>(values.data()),
               static_cast<std::streamsize>(values.size_bytes()));
  }

  void put_bytes(std::string_view bytes) {
    out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }

  void put_string(std::string_view s) {
    put<std::uint32_t>(static_cast<std::uint32_t>(s.size()));
    put_bytes(s);
  }

  /// Flushes and throws if any write failed.
  void finish();

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  explicit BinaryReader(const std::filesystem::path& path);

  template <typename T>
    requires std::is_arithmetic_v<T>
  T get(std::string_view field) {
    T value{};
    read(reinterpret_cast<char*>(&value), sizeof(T), field);
    return value;
  }

  template <typename T>
    requires std::is_arithmetic_v<T>
  void get_span(std::span<T> values, std::string_view field) {
    read(reinterpret_cast<char*>(values.data()), values.size_bytes(), field);
  }

  std::string get_bytes(std::size_t n, std::string_view field);
  std::string get_string(std::string_view field, std::uint32_t max_len = 1u << 20);

  /// Throws FormatError if bytes remain after the last field.
  void expect_end();

  std::uint64_t remaining() const noexcept { return size_ - offset_; }

 private:
  void read(char* dst, std::size_t n, std::string_view field);

  std::ifstream in_;
  std::uint64_t size_ = 0;
  std::uint64_t offset_ = 0;
};

}  // namespace charlink::detail
