#pragma once

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <string>

#include "resto/common.hpp"

namespace resto {

/// Temp file path that removes itself; used by the external codec and
/// enhancer hooks.
class TempFile {
 public:
  explicit TempFile(const std::string& suffix) {
    static std::atomic<uint64_t> counter{0};
    auto unique = counter.fetch_add(1);
    auto name = "resto_" + hex_string(fnv1a(unique, fnv1a(uint64_t(::getpid())))) +
                "_" + std::to_string(unique) + suffix;
    path_ = (std::filesystem::temp_directory_path() / name).string();
  }
  TempFile(const TempFile&) = delete;
  TempFile& operator=(const TempFile&) = delete;
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path_, ec);
  }

  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

/// Run a shell command template after substituting {in} and {out}.
/// Nonzero exit status is an error.
inline void run_hook(const std::string& command_template,
                     const std::string& in_path,
                     const std::string& out_path) {
  require(!command_template.empty(), "external hook: empty command");
  std::string cmd = command_template;
  auto substitute = [&cmd](const std::string& key, const std::string& value) {
    size_t pos = 0;
    while ((pos = cmd.find(key, pos)) != std::string::npos) {
      cmd.replace(pos, key.size(), value);
      pos += value.size();
    }
  };
  substitute("{in}", in_path);
  substitute("{out}", out_path);
  int status = std::system(cmd.c_str());
  if (status != 0)
    fail("external hook failed (exit " + std::to_string(status) + "): " + cmd);
}

}  // namespace resto
