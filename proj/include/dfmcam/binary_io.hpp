#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dfmcam::binio {

// Little-endian encoders over a growable byte buffer, and a bounds-checked
// reader. All container formats in this project are built from these.

class Writer {
 public:
  void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
  void u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v);
  void u64(std::uint64_t v);
  void f32(float v);
  void f64(double v);
  void str(std::string_view s);  // u32 length prefix
  void f32_array(std::span<const float> v);

  const std::string& buffer() const { return buf_; }
  std::string release() { return std::move(buf_); }

 private:
  std::string buf_;
};

class Reader {
 public:
  explicit Reader(std::string_view data, std::string what = "stream")
      : data_(data), what_(std::move(what)) {}

  std::string_view bytes(std::size_t n);
  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  float f32();
  double f64();
  std::string str();
  std::vector<float> f32_array(std::size_t n);

  std::size_t position() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n);

  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

/// FNV-1a 64-bit, used as an integrity trailer.
std::uint64_t fnv1a(std::string_view data);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view data);

}  // namespace dfmcam::binio
