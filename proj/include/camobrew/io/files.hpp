#ifndef CAMOBREW_IO_FILES_HPP
#define CAMOBREW_IO_FILES_HPP

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <system_error>
#include <unistd.h>

#include "camobrew/error.hpp"

namespace camobrew::io {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorKind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Writes through a temporary sibling and renames it over `path`.
inline void write_atomic(const fs::path& path, const std::string& content) {
  static std::atomic<unsigned> counter{0};
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    require(!ec, ErrorKind::io, "cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::io, "cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    require(static_cast<bool>(out), ErrorKind::io, "write failed for " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error(ErrorKind::io, "cannot move output into place at " + path.string() + ": " + ec.message());
  }
}

/// Output directory: an explicit choice wins, then CAMOBREW_OUT_DIR, then `fallback`.
inline fs::path output_dir(const std::string& explicit_dir, const fs::path& fallback = "camobrew-out") {
  if (!explicit_dir.empty()) return explicit_dir;
  if (const char* env = std::getenv("CAMOBREW_OUT_DIR"); env && *env) return env;
  return fallback;
}

}  // namespace camobrew::io

#endif  // CAMOBREW_IO_FILES_HPP
