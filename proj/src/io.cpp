#include "mhmc/io.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace mhmc {

namespace fs = std::filesystem;

std::string format_double(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

namespace {

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

double parse_field(const std::string& field, Index row, Index col) {
  const std::string f = trim(field);
  const char* first = f.data();
  const char* last = f.data() + f.size();
  if (!f.empty() && *first == '+') ++first;
  double v = 0.0;
  const auto res = std::from_chars(first, last, v);
  if (f.empty() || res.ec != std::errc() || res.ptr != last) {
    throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(col + 1) + ": not a number: '" + f +
                         "'",
                     row);
  }
  if (!std::isfinite(v)) {
    throw ParseError("row " + std::to_string(row) + ", column " + std::to_string(col + 1) + ": non-finite value",
                     row);
  }
  return v;
}

}  // namespace

Matrix parse_matrix_csv(const std::string& text, std::optional<Index> expected_cols, bool skip_header) {
  std::istringstream in(text);
  std::vector<std::vector<double>> rows;
  std::string line;
  Index row = 0;
  std::optional<Index> width = expected_cols;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (skip_header && row == 1) continue;
    if (trim(line).empty()) continue;
    std::vector<double> vals;
    std::size_t start = 0;
    Index col = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      const std::string field = line.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
      vals.push_back(parse_field(field, row, col++));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    const Index w = static_cast<Index>(vals.size());
    if (width && w != *width) {
      throw ParseError("row " + std::to_string(row) + ": expected " + std::to_string(*width) + " columns, got " +
                           std::to_string(w),
                       row);
    }
    width = w;
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw ParseError("no data rows", 0);
  Matrix A(static_cast<Index>(rows.size()), *width);
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < A.cols(); ++j) A(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  return A;
}

Matrix read_matrix_csv(const fs::path& path, std::optional<Index> expected_cols, bool skip_header) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_matrix_csv(ss.str(), expected_cols, skip_header);
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed: " + path.string());
}

void append_row(std::string& s, const double* data, Index n, Index stride) {
  for (Index j = 0; j < n; ++j) {
    if (j) s += ',';
    s += format_double(data[j * stride]);
  }
  s += '\n';
}

}  // namespace

void write_matrix_csv(const fs::path& path, const Matrix& A) {
  std::string s;
  for (Index i = 0; i < A.rows(); ++i) append_row(s, A.data() + i, A.cols(), A.rows());
  write_text(path, s);
}

std::string chain_csv_string(const std::vector<Vector>& samples) {
  std::string s;
  if (!samples.empty()) s.reserve(samples.size() * static_cast<std::size_t>(samples.front().size()) * 24);
  for (const Vector& x : samples) append_row(s, x.data(), x.size(), 1);
  return s;
}

void write_chain_csv(const fs::path& path, const std::vector<Vector>& samples) {
  write_text(path, chain_csv_string(samples));
}

void write_json(const fs::path& path, const nlohmann::json& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path.string() + ": " + e.what(), 0);
  }
}

fs::path meta_path(const fs::path& dir, const std::string& run) { return dir / (run + ".meta.json"); }

}  // namespace mhmc
