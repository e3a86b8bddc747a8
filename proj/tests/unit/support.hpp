#pragma once

#include <filesystem>
#include <optional>
#include <random>
#include <string>

#include "plap/error.hpp"

namespace support {

// Kind of the plap::Error thrown by f, if any.
template <class F>
std::optional<plap::ErrorKind> thrown_kind(F&& f) {
  try {
    f();
  } catch (const plap::Error& e) {
    return e.kind();
  } catch (...) {
  }
  return std::nullopt;
}

// Fresh scratch directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("plap_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

}  // namespace support
