#pragma once

#include "mhmc/types.hpp"

#include "json.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace mhmc {

/// Shortest decimal string that parses back to exactly x.
std::string format_double(double x);

/// Numeric CSV reader. Rows are numbered from 1 in file order (a skipped
/// header counts as row 1). Throws ParseError on malformed input.
Matrix read_matrix_csv(const std::filesystem::path& path, std::optional<Index> expected_cols = std::nullopt,
                       bool skip_header = false);
Matrix parse_matrix_csv(const std::string& text, std::optional<Index> expected_cols = std::nullopt,
                        bool skip_header = false);

void write_matrix_csv(const std::filesystem::path& path, const Matrix& A);

/// One sample per row, no header.
void write_chain_csv(const std::filesystem::path& path, const std::vector<Vector>& samples);
std::string chain_csv_string(const std::vector<Vector>& samples);

void write_json(const std::filesystem::path& path, const nlohmann::json& j);
nlohmann::json read_json(const std::filesystem::path& path);

/// "<dir>/<run>.meta.json"
std::filesystem::path meta_path(const std::filesystem::path& dir, const std::string& run);

}  // namespace mhmc
