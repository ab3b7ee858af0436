#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace stretchcap {

/// Raised for malformed input files; carries the offending path and line.
class FormatError : public std::runtime_error {
 public:
  FormatError(const std::string& path, std::size_t line, const std::string& what)
      : std::runtime_error(path + ":" + std::to_string(line) + ": " + what),
        path_(path), line_(line) {}

  const std::string& path() const { return path_; }
  std::size_t line() const { return line_; }

 private:
  std::string path_;
  std::size_t line_;
};

std::string read_text_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and a rename so readers never observe a
/// partially written file.
void write_text_file_atomic(const std::filesystem::path& path, std::string_view contents);
void write_binary_file_atomic(const std::filesystem::path& path, const std::vector<char>& bytes);

/// Splits one CSV line. No quoting support: none of our schemas need it.
std::vector<std::string> split_csv_line(std::string_view line);

/// Parses a double; "nan"/"NaN"/empty map to quiet NaN.
double parse_double(std::string_view field);

/// Shortest round-trip representation of a double.
std::string format_double(double value);

/// A frame-indexed numeric table, the common shape of our trace files:
/// header `frame,<col_0>,...` and one row per frame.
struct FrameTable {
  std::vector<std::string> columns;  // excludes the frame column
  std::vector<long> frames;
  Eigen::MatrixXd values;            // rows = frames
};

FrameTable read_frame_table(const std::filesystem::path& path);
std::string format_frame_table(const FrameTable& table);

/// FNV-1a, used for layout fingerprints and manifest digests.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t value);

}  // namespace stretchcap
