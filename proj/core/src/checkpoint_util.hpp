#pragma once

// Internal helpers for JSON checkpoints. Floats are written with 17
// significant digits so that parsing returns the exact binary64 value.

#include <cstdio>
#include <string>

#include <nlohmann/json.hpp>

#include "remember/errors.hpp"
#include "remember/numerics.hpp"

namespace remember::detail {

inline void append_double(std::string& out, double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

inline void append_vector(std::string& out, const Vector& v) {
  out += '[';
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    append_double(out, v[i]);
  }
  out += ']';
}

inline void append_matrix(std::string& out, const Matrix& m) {
  out += '[';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    if (r) out += ", ";
    out += '[';
    for (std::size_t c = 0; c < m.cols(); ++c) {
      if (c) out += ", ";
      append_double(out, m(r, c));
    }
    out += ']';
  }
  out += ']';
}

inline Vector vector_from_json(const nlohmann::json& j, std::size_t size, const char* what) {
  if (!j.is_array() || j.size() != size) {
    throw LoadError(std::string("checkpoint field '") + what + "' has wrong shape");
  }
  Vector v(size);
  for (std::size_t i = 0; i < size; ++i) v[i] = j[i].get<double>();
  return v;
}

inline Matrix matrix_from_json(const nlohmann::json& j, std::size_t rows, std::size_t cols,
                               const char* what) {
  if (!j.is_array() || j.size() != rows) {
    throw LoadError(std::string("checkpoint field '") + what + "' has wrong shape");
  }
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const auto& row = j[r];
    if (!row.is_array() || row.size() != cols) {
      throw LoadError(std::string("checkpoint field '") + what + "' has wrong row width");
    }
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = row[c].get<double>();
  }
  return m;
}

}  // namespace remember::detail
