#pragma once

#include <filesystem>
#include <functional>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace smartcourse::io {

namespace fs = std::filesystem;

/// Reads a whole file. Throws Error(IoError) when it cannot be opened.
std::string read_file(const fs::path& path);

/// Missing file reads as empty.
std::string read_file_or_empty(const fs::path& path);

/// Called after the temp file is durable and before it replaces the target.
using PreRenameHook = std::function<void(const fs::path& temp_path)>;

/// Writes `content` to a sibling temp file, fsyncs it and renames it over
/// `path`. Readers see either the old or the new file, never a mix.
void atomic_write(const fs::path& path, std::string_view content, const PreRenameHook& hook = {});

/// Appends one line (newline added) and fsyncs.
void append_line(const fs::path& path, std::string_view line);

/// Exclusive writer lock for one repository file: an in-process mutex per
/// path plus an flock on "<path>.lock" so separate processes serialize too.
class WriteLock {
 public:
  explicit WriteLock(const fs::path& path);
  ~WriteLock();
  WriteLock(const WriteLock&) = delete;
  WriteLock& operator=(const WriteLock&) = delete;

 private:
  std::unique_lock<std::mutex> guard_;
  int fd_ = -1;
};

bool is_valid_utf8(std::string_view text) noexcept;

std::vector<std::string> split(std::string_view text, char delim);
std::string_view trim(std::string_view text) noexcept;

/// Splits into lines, dropping blank and '#'-comment lines. Each result keeps
/// its 1-based line number.
struct NumberedLine {
  std::size_t number;
  std::string text;
};
std::vector<NumberedLine> record_lines(std::string_view text);

std::string to_hex(std::string_view bytes);
std::string from_hex(std::string_view hex);

std::string utc_timestamp();

}  // namespace smartcourse::io
