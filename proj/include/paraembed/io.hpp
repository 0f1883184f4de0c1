#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <stdexcept>
#include <string>
#include <type_traits>

namespace paraembed {

// Errors from malformed or unreadable files. The message names the file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Little-endian scalar encoding, independent of host byte order.
template <class T>
void write_le(std::ostream& os, T value) {
  static_assert(std::is_trivially_copyable_v<T>);
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  static_assert(sizeof(U) == sizeof(T));
  U bits;
  std::memcpy(&bits, &value, sizeof(T));
  char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
  os.write(buf, sizeof(T));
}

template <class T>
T decode_le(const unsigned char* bytes) {
  using U = std::conditional_t<sizeof(T) == 1, std::uint8_t,
            std::conditional_t<sizeof(T) == 2, std::uint16_t,
            std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>>>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<U>(bytes[i]) << (8 * i));
  T value;
  std::memcpy(&value, &bits, sizeof(T));
  return value;
}

// Throws FormatError("<what>: truncated") when the stream runs out.
template <class T>
T read_le(std::istream& is, const std::string& what) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (is.gcount() != static_cast<std::streamsize>(sizeof(T))) throw FormatError(what + ": truncated file");
  return decode_le<T>(buf);
}

// Output file that only appears at its final path after commit(). Writes go
// to a sibling temporary which is removed if the object dies uncommitted.
class AtomicOutputFile {
 public:
  explicit AtomicOutputFile(std::filesystem::path path, bool binary = true);
  ~AtomicOutputFile();
  AtomicOutputFile(const AtomicOutputFile&) = delete;
  AtomicOutputFile& operator=(const AtomicOutputFile&) = delete;

  std::ofstream& stream() { return out_; }
  void commit();

 private:
  std::filesystem::path path_;
  std::filesystem::path tmp_;
  std::ofstream out_;
  bool committed_ = false;
};

}  // namespace paraembed
