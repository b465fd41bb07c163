#include "dfmcam/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dfmcam/error.hpp"

namespace dfmcam::binio {

namespace {

template <typename U>
void put_le(std::string& buf, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

template <typename U>
U get_le(const char* p) {
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i)
    v |= static_cast<U>(static_cast<unsigned char>(p[i])) << (8 * i);
  return v;
}

}  // namespace

void Writer::u32(std::uint32_t v) { put_le(buf_, v); }
void Writer::u64(std::uint64_t v) { put_le(buf_, v); }
void Writer::f32(float v) { put_le(buf_, std::bit_cast<std::uint32_t>(v)); }
void Writer::f64(double v) { put_le(buf_, std::bit_cast<std::uint64_t>(v)); }

void Writer::str(std::string_view s) {
  u32(static_cast<std::uint32_t>(s.size()));
  bytes(s);
}

void Writer::f32_array(std::span<const float> v) {
  if constexpr (std::endian::native == std::endian::little) {
    const auto* p = reinterpret_cast<const char*>(v.data());
    buf_.append(p, v.size_bytes());
  } else {
    for (float x : v) f32(x);
  }
}

void Reader::need(std::size_t n) {
  if (remaining() < n)
    throw IoError(what_ + ": truncated (need " + std::to_string(n) + " bytes at offset " +
                  std::to_string(pos_) + ", have " + std::to_string(remaining()) + ")");
}

std::string_view Reader::bytes(std::size_t n) {
  need(n);
  auto out = data_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::uint8_t Reader::u8() { return static_cast<std::uint8_t>(bytes(1)[0]); }
std::uint32_t Reader::u32() { return get_le<std::uint32_t>(bytes(4).data()); }
std::uint64_t Reader::u64() { return get_le<std::uint64_t>(bytes(8).data()); }
float Reader::f32() { return std::bit_cast<float>(u32()); }
double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string Reader::str() {
  const auto n = u32();
  return std::string(bytes(n));
}

std::vector<float> Reader::f32_array(std::size_t n) {
  if (n > remaining() / 4) need(n * 4);
  std::vector<float> out(n);
  const auto raw = bytes(n * 4);
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(out.data(), raw.data(), raw.size());
  } else {
    for (std::size_t i = 0; i < n; ++i) out[i] = std::bit_cast<float>(get_le<std::uint32_t>(raw.data() + 4 * i));
  }
  return out;
}

std::uint64_t fnv1a(std::string_view data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view data) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path.string());
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace dfmcam::binio
