#include "fusioniv/csv.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

#include "fusioniv/error.hpp"

namespace fusioniv {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  return fields;
}

double parse_real(const std::string& field, int line_no, const char* what) {
  const char* begin = field.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end == begin || *end != '\0' || !std::isfinite(v)) {
    throw Error(ErrorCode::ParseError, std::string("line ") + std::to_string(line_no) +
                                           ": cannot parse " + what + " '" + field + "'");
  }
  return v;
}

int parse_binary(const std::string& field, int line_no, const char* what) {
  const double v = parse_real(field, line_no, what);
  if (v != 0.0 && v != 1.0) {
    throw Error(ErrorCode::ParseError, std::string("line ") + std::to_string(line_no) + ": " +
                                           what + " must be 0 or 1, got '" + field + "'");
  }
  return static_cast<int>(v);
}

}  // namespace

FusedSample read_fused_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::SchemaError, "empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
      static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF) {
    line.erase(0, 3);  // UTF-8 BOM
  }

  const std::vector<std::string> header = split_csv_line(line);
  if (header.size() < 5 || header[0] != "r" || header[1] != "y" || header[2] != "d" ||
      header[3] != "z") {
    throw Error(ErrorCode::SchemaError, "header must be r,y,d,z,x1,...,xp");
  }
  const int p = static_cast<int>(header.size()) - 4;
  for (int j = 0; j < p; ++j) {
    if (header[static_cast<std::size_t>(4 + j)] != "x" + std::to_string(j + 1)) {
      throw Error(ErrorCode::SchemaError, "covariate columns must be named x1..xp in order");
    }
  }

  std::vector<FusedRow> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() && in.eof()) break;
    const std::vector<std::string> fields = split_csv_line(line);
    if (static_cast<int>(fields.size()) != 4 + p) {
      throw Error(ErrorCode::ParseError,
                  "line " + std::to_string(line_no) + ": expected " + std::to_string(4 + p) +
                      " fields, got " + std::to_string(fields.size()));
    }
    FusedRow row;
    row.r = parse_binary(fields[0], line_no, "r");
    row.z = parse_binary(fields[3], line_no, "z");
    if (row.r == 1) {
      if (fields[1].empty()) {
        throw Error(ErrorCode::ConsistencyError,
                    "line " + std::to_string(line_no) + ": r=1 requires y");
      }
      if (!fields[2].empty()) {
        throw Error(ErrorCode::ConsistencyError,
                    "line " + std::to_string(line_no) + ": r=1 forbids d");
      }
      row.y = parse_real(fields[1], line_no, "y");
    } else {
      if (fields[2].empty()) {
        throw Error(ErrorCode::ConsistencyError,
                    "line " + std::to_string(line_no) + ": r=0 requires d");
      }
      if (!fields[1].empty()) {
        throw Error(ErrorCode::ConsistencyError,
                    "line " + std::to_string(line_no) + ": r=0 forbids y");
      }
      row.d = parse_binary(fields[2], line_no, "d");
    }
    row.x.resize(p);
    for (int j = 0; j < p; ++j) {
      row.x[j] = parse_real(fields[static_cast<std::size_t>(4 + j)], line_no, "covariate");
    }
    rows.push_back(std::move(row));
  }
  if (rows.size() < 2) throw Error(ErrorCode::DegenerateSample, "need at least two data rows");
  return FusedSample::from_rows(rows);
}

void write_fused_csv(const FusedSample& sample, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::IoError, "cannot open '" + path + "' for writing");
  out << "r,y,d,z";
  for (int j = 1; j <= sample.p(); ++j) out << ",x" << j;
  out << "\n";
  char buf[64];
  auto real = [&buf](double v) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  for (int i = 0; i < sample.n(); ++i) {
    out << sample.r(i) << ",";
    if (sample.r(i) == 1) out << real(sample.y(i));
    out << ",";
    if (sample.r(i) == 0) out << static_cast<int>(sample.d(i));
    out << "," << sample.z(i);
    for (int j = 0; j < sample.p(); ++j) out << "," << real(sample.x_mat()(i, j));
    out << "\n";
  }
  if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path + "'");
}

}  // namespace fusioniv
