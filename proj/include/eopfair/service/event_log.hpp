#pragma once

// Append-only NDJSON event log. One JSON object per line; a record counts as
// written once append() returns. A torn final line (crash mid-write) is
// ignored on replay; a malformed line anywhere else is an error.

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "eopfair/errors.hpp"

namespace eopfair::service {

class EventLog {
 public:
  EventLog(std::filesystem::path path, bool sync_writes) : path_(std::move(path)), sync_(sync_writes) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
    drop_torn_tail();
    fd_ = ::open(path_.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) throw Error("cannot open event log " + path_.string() + ": " + std::strerror(errno));
  }
  ~EventLog() {
    if (fd_ >= 0) ::close(fd_);
  }
  EventLog(const EventLog&) = delete;
  EventLog& operator=(const EventLog&) = delete;

  void append(const nlohmann::json& record) {
    std::string line = record.dump();
    line.push_back('\n');
    std::lock_guard lock(mu_);
    std::size_t off = 0;
    while (off < line.size()) {
      const ssize_t n = ::write(fd_, line.data() + off, line.size() - off);
      if (n < 0) {
        if (errno == EINTR) continue;
        throw Error("event log write failed: " + std::string(std::strerror(errno)));
      }
      off += static_cast<std::size_t>(n);
    }
    if (sync_ && ::fdatasync(fd_) != 0) throw Error("event log sync failed: " + std::string(std::strerror(errno)));
  }

  const std::filesystem::path& path() const noexcept { return path_; }

  static std::vector<nlohmann::json> replay(const std::filesystem::path& path) {
    std::vector<nlohmann::json> out;
    std::ifstream in(path);
    if (!in) return out;
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) lines.push_back(std::move(line));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (lines[i].empty()) continue;
      try {
        out.push_back(nlohmann::json::parse(lines[i]));
      } catch (const nlohmann::json::parse_error&) {
        if (i + 1 == lines.size()) break;
        throw Error("corrupt event log " + path.string() + " at line " + std::to_string(i + 1));
      }
    }
    return out;
  }

 private:
  /// Truncates an unterminated final line so new records start on a fresh line.
  void drop_torn_tail() {
    std::error_code ec;
    const auto size = std::filesystem::file_size(path_, ec);
    if (ec || size == 0) return;
    std::ifstream in(path_, std::ios::binary);
    std::string content((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (content.back() == '\n') return;
    const auto last = content.find_last_of('\n');
    std::filesystem::resize_file(path_, last == std::string::npos ? 0 : last + 1);
  }

  std::filesystem::path path_;
  bool sync_ = false;
  int fd_ = -1;
  std::mutex mu_;
};

}  // namespace eopfair::service
