#pragma once

// Plain-text persistence.
//
// SampleSet file:
//   p=<int>,n=<int>,K=<int>
//   K blocks of p lines, each with p comma-separated values
//   labels=<comma list>            (optional final line)
//
// Matrix file:
//   p=<int>
//   p lines of p comma-separated values

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "ewishart/error.hpp"
#include "ewishart/linalg.hpp"
#include "ewishart/model.hpp"

namespace ewishart {

struct SampleFile {
  int p = 0;
  int n = 0;
  SampleSet samples;
  std::optional<std::vector<int>> labels;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": not a number: '" + s + "'");
  }
}

inline long long parse_int(const std::string& s, const std::string& where) {
  long long v = 0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last) throw IoError(where + ": not an integer: '" + s + "'");
  return v;
}

// Non-blank lines, trimmed.
inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (!t.empty()) lines.push_back(std::move(t));
  }
  if (in.bad()) throw IoError("read error on " + path.string());
  return lines;
}

inline std::vector<double> parse_row(const std::string& line, std::size_t expected, const std::string& where) {
  const auto cells = split(line, ',');
  if (cells.size() != expected) {
    throw IoError(where + ": expected " + std::to_string(expected) + " values, got " + std::to_string(cells.size()));
  }
  std::vector<double> out;
  out.reserve(cells.size());
  for (const auto& c : cells) out.push_back(parse_double(c, where));
  return out;
}

inline Matrix parse_block(const std::vector<std::string>& lines, std::size_t first, int p, const std::string& where) {
  Matrix m(p, p);
  for (int i = 0; i < p; ++i) {
    const auto row = parse_row(lines[first + static_cast<std::size_t>(i)], static_cast<std::size_t>(p),
                               where + " line " + std::to_string(first + static_cast<std::size_t>(i) + 1));
    for (int j = 0; j < p; ++j) m(i, j) = row[static_cast<std::size_t>(j)];
  }
  return m;
}

inline void write_block(std::ostream& out, const Matrix& m) {
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) out << (j ? "," : "") << m(i, j);
    out << '\n';
  }
}

inline std::ofstream open_output(const std::filesystem::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << std::setprecision(17);
  return out;
}

inline void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw IoError("write error on " + path.string());
}

// "key=value" with the expected key.
inline std::string header_value(const std::string& item, std::string_view key, const std::string& where) {
  const auto eq = item.find('=');
  if (eq == std::string::npos || trim(item.substr(0, eq)) != key) {
    throw IoError(where + ": expected '" + std::string(key) + "=<value>'");
  }
  return trim(item.substr(eq + 1));
}

}  // namespace detail

inline SampleFile read_sample_file(const std::filesystem::path& path) {
  const std::string where = path.string();
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw IoError(where + ": empty file");
  const auto head = detail::split(lines[0], ',');
  if (head.size() != 3) throw IoError(where + ": header must be p=<int>,n=<int>,K=<int>");
  const long long p = detail::parse_int(detail::header_value(head[0], "p", where), where);
  const long long n = detail::parse_int(detail::header_value(head[1], "n", where), where);
  const long long k = detail::parse_int(detail::header_value(head[2], "K", where), where);
  if (p < 1 || n < 1 || k < 1) throw IoError(where + ": p, n and K must be positive");

  const auto body = static_cast<std::size_t>(k * p);
  const bool has_labels = lines.size() == body + 2 && lines.back().rfind("labels", 0) == 0;
  if (lines.size() != body + 1 && !has_labels) {
    throw IoError(where + ": expected " + std::to_string(body) + " matrix rows after the header");
  }

  SampleFile out;
  out.p = static_cast<int>(p);
  out.n = static_cast<int>(n);
  std::vector<SpdMat> mats;
  mats.reserve(static_cast<std::size_t>(k));
  for (long long b = 0; b < k; ++b) {
    const Matrix m = detail::parse_block(lines, 1 + static_cast<std::size_t>(b * p), out.p, where);
    if (!m.allFinite()) throw IoError(where + ": non-finite entry in sample " + std::to_string(b + 1));
    if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-10 * std::max(1.0, m.cwiseAbs().maxCoeff())) {
      throw IoError(where + ": sample " + std::to_string(b + 1) + " is not symmetric");
    }
    try {
      mats.emplace_back(SymMat(m));
    } catch (const SingularityError&) {
      throw IoError(where + ": sample " + std::to_string(b + 1) + " is not positive definite");
    }
  }
  try {
    out.samples = SampleSet(std::move(mats));
  } catch (const NumericInputError& e) {
    throw IoError(where + ": " + e.what());
  }
  if (has_labels) {
    const std::string list = detail::header_value(lines.back(), "labels", where);
    std::vector<int> labels;
    for (const auto& c : detail::split(list, ',')) labels.push_back(static_cast<int>(detail::parse_int(c, where)));
    if (labels.size() != static_cast<std::size_t>(k)) throw IoError(where + ": label count differs from K");
    out.labels = std::move(labels);
  }
  return out;
}

inline void write_sample_file(const std::filesystem::path& path, const SampleSet& data, int n,
                              const std::vector<int>* labels = nullptr) {
  if (labels && labels->size() != data.size()) throw IoError("write_sample_file: label count differs from K");
  auto out = detail::open_output(path);
  out << "p=" << data.dim() << ",n=" << n << ",K=" << data.size() << '\n';
  for (const auto& s : data) detail::write_block(out, s.matrix());
  if (labels) {
    out << "labels=";
    for (std::size_t k = 0; k < labels->size(); ++k) out << (k ? "," : "") << (*labels)[k];
    out << '\n';
  }
  detail::finish(out, path);
}

inline SpdMat read_matrix_file(const std::filesystem::path& path) {
  const std::string where = path.string();
  const auto lines = detail::read_lines(path);
  if (lines.empty()) throw IoError(where + ": empty file");
  const long long p = detail::parse_int(detail::header_value(lines[0], "p", where), where);
  if (p < 1 || lines.size() != static_cast<std::size_t>(p) + 1) throw IoError(where + ": expected p rows");
  const Matrix m = detail::parse_block(lines, 1, static_cast<int>(p), where);
  try {
    return SpdMat(m);
  } catch (const Error& e) {
    throw IoError(where + ": " + e.what());
  }
}

inline void write_matrix_file(const std::filesystem::path& path, const Matrix& m) {
  auto out = detail::open_output(path);
  out << "p=" << m.rows() << '\n';
  detail::write_block(out, m);
  detail::finish(out, path);
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  auto out = detail::open_output(path);
  out << text;
  detail::finish(out, path);
}

}  // namespace ewishart
