#include "stretchcap/io.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

namespace stretchcap {

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::filesystem::path temp_sibling(const std::filesystem::path& path) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  return tmp;
}

template <typename Bytes>
void write_atomic(const std::filesystem::path& path, const Bytes& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = temp_sibling(path);
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw std::runtime_error("write failed for " + path.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

void write_text_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  write_atomic(path, contents);
}

void write_binary_file_atomic(const std::filesystem::path& path, const std::vector<char>& bytes) {
  write_atomic(path, bytes);
}

std::vector<std::string> split_csv_line(std::string_view line) {
  std::vector<std::string> out;
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    auto field = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
    while (!field.empty() && field.back() == ' ') field.remove_suffix(1);
    out.emplace_back(field);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

double parse_double(std::string_view field) {
  if (field.empty() || field == "nan" || field == "NaN" || field == "NAN")
    return std::numeric_limits<double>::quiet_NaN();
  double value = 0.0;
  const auto* first = field.data();
  const auto* last = field.data() + field.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last)
    throw std::invalid_argument("not a number: '" + std::string(field) + "'");
  return value;
}

std::string format_double(double value) {
  if (std::isnan(value)) return "nan";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, ptr);
}

FrameTable read_frame_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  FrameTable table;
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (table.columns.empty() && lineno == 1) {
      if (fields.empty() || fields.front() != "frame")
        throw FormatError(path.string(), lineno, "header must start with 'frame'");
      table.columns.assign(fields.begin() + 1, fields.end());
      if (table.columns.empty()) throw FormatError(path.string(), lineno, "no value columns");
      continue;
    }
    if (fields.size() != table.columns.size() + 1)
      throw FormatError(path.string(), lineno,
                        "expected " + std::to_string(table.columns.size() + 1) + " fields, got " +
                            std::to_string(fields.size()));
    try {
      table.frames.push_back(std::stol(fields[0]));
      std::vector<double> row(table.columns.size());
      for (std::size_t c = 0; c < row.size(); ++c) row[c] = parse_double(fields[c + 1]);
      rows.push_back(std::move(row));
    } catch (const std::exception& e) {
      throw FormatError(path.string(), lineno, e.what());
    }
  }
  if (table.columns.empty()) throw FormatError(path.string(), lineno, "empty file");
  table.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(table.columns.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < rows[r].size(); ++c)
      table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return table;
}

std::string format_frame_table(const FrameTable& table) {
  std::string out = "frame";
  for (const auto& c : table.columns) out += "," + c;
  out += '\n';
  for (Eigen::Index r = 0; r < table.values.rows(); ++r) {
    out += std::to_string(table.frames[static_cast<std::size_t>(r)]);
    for (Eigen::Index c = 0; c < table.values.cols(); ++c) {
      out += ',';
      out += format_double(table.values(r, c));
    }
    out += '\n';
  }
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed) {
  std::uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace stretchcap
