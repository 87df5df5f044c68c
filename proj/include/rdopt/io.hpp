// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace rdopt::io {

// Little-endian binary primitives. All file formats in this project are
// little-endian 64-bit; these helpers keep the layout explicit.
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
void write_bytes(std::ostream& os, const void* data, std::size_t n);
std::uint64_t read_u64(std::istream& is);
double read_f64(std::istream& is);
void read_bytes(std::istream& is, void* data, std::size_t n);

// Writes `content` to `path` atomically (temp file + rename).
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

// Round-trip-exact decimal formatting for CSV cells.
std::string format_double(double v);

// Minimal CSV builder: header row first, dot decimal separator, "\n" rows.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void add_row(const std::vector<std::string>& cells);
  const std::string& content() const { return buffer_; }
  void save(const std::filesystem::path& path) const;

 private:
  std::string buffer_;
  std::size_t columns_;
};

std::string read_file(const std::filesystem::path& path);

}  // namespace rdopt::io
