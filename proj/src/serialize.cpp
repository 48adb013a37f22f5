#include "layoutdiff/serialize.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

namespace layoutdiff {

using nlohmann::json;

json matrix_to_json(const Mat& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      data.push_back(m(i, j));
    }
  }
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::move(data)}};
}

Mat matrix_from_json(const json& j) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
    throw InvalidInput("matrix: expected object with rows, cols, data");
  }
  if (!j["rows"].is_number_integer() || !j["cols"].is_number_integer()) {
    throw InvalidInput("matrix: rows and cols must be integers");
  }
  const auto rows = j["rows"].get<Eigen::Index>();
  const auto cols = j["cols"].get<Eigen::Index>();
  if (rows < 0 || cols < 0) {
    throw InvalidInput("matrix: rows and cols must be nonnegative");
  }
  const json& data = j["data"];
  if (!data.is_array() || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw InvalidInput("matrix: data length " + std::to_string(data.size()) +
                       " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
  }
  Mat m(rows, cols);
  Eigen::Index idx = 0;
  for (const json& v : data) {
    if (!v.is_number()) {
      throw InvalidInput("matrix: data entry " + std::to_string(idx) + " is not a number");
    }
    const double x = v.get<double>();
    if (!std::isfinite(x)) {
      throw InvalidInput("matrix: data entry " + std::to_string(idx) + " is not finite");
    }
    m.data()[idx++] = x;
  }
  return m;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path + " for reading");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) {
    throw IoError("failed while reading " + path);
  }
  return buf.str();
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open " + path + " for writing");
  }
  out << contents;
  out.flush();
  if (!out) {
    throw IoError("failed while writing " + path);
  }
}

json parse_json(const std::string& text, const std::string& what) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) {
    throw InvalidInput(what + ": malformed JSON");
  }
  return j;
}

}  // namespace layoutdiff
