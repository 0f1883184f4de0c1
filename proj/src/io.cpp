#include "paraembed/io.hpp"

#include <system_error>
#include <unistd.h>

namespace paraembed {

AtomicOutputFile::AtomicOutputFile(std::filesystem::path path, bool binary)
    : path_(std::move(path)) {
  tmp_ = path_;
  tmp_ += ".tmp." + std::to_string(::getpid());
  auto mode = std::ios::out | std::ios::trunc;
  if (binary) mode |= std::ios::binary;
  out_.open(tmp_, mode);
  if (!out_) throw std::runtime_error("cannot open " + path_.string() + " for writing");
}

AtomicOutputFile::~AtomicOutputFile() {
  if (!committed_) {
    out_.close();
    std::error_code ec;
    std::filesystem::remove(tmp_, ec);
  }
}

void AtomicOutputFile::commit() {
  out_.flush();
  if (!out_) throw std::runtime_error("write failed: " + path_.string());
  out_.close();
  std::error_code ec;
  std::filesystem::rename(tmp_, path_, ec);
  if (ec) throw std::runtime_error("cannot rename into " + path_.string() + ": " + ec.message());
  committed_ = true;
}

}  // namespace paraembed
