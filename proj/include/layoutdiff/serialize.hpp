#pragma once

#include <string>

#include "json.hpp"

#include "layoutdiff/kernel.hpp"

namespace layoutdiff {

/// Matrix wire format: {"rows": R, "cols": C, "data": [row-major numbers]}.
nlohmann::json matrix_to_json(const Mat& m);

/// Parses the matrix wire format. Throws InvalidInput on missing fields,
/// wrong data length, or non-finite entries.
Mat matrix_from_json(const nlohmann::json& j);

/// Reads a whole file into a string. Throws IoError when unreadable.
std::string read_file(const std::string& path);

/// Writes a string to a file. Throws IoError when unwritable.
void write_file(const std::string& path, const std::string& contents);

/// json::parse wrapper that rethrows parse failures as InvalidInput.
nlohmann::json parse_json(const std::string& text, const std::string& what);

}  // namespace layoutdiff
