#pragma once

#include <Eigen/Dense>

#include <sstream>
#include <stdexcept>
#include <string>

namespace domst {

// Dense math types. Everything numeric in this project is 64-bit; the
// executor-equivalence tolerances (1e-9 .. 1e-12) depend on it.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Array = Eigen::ArrayXd;

// All library errors derive from this so callers can catch one type.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& what) : Error(what) {}
};

class ValueError : public Error {
 public:
  explicit ValueError(const std::string& what) : Error(what) {}
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

template <typename... Parts>
std::string cat(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

inline void check_shape(bool ok, const std::string& msg) {
  if (!ok) throw ShapeError(msg);
}

inline void check_finite(const Matrix& m, const std::string& where) {
  if (!m.allFinite())
    throw ValueError(cat(where, ": non-finite value in ", m.rows(), "x",
                         m.cols(), " tensor"));
}

inline void check_finite(const Vector& v, const std::string& where) {
  if (!v.allFinite())
    throw ValueError(cat(where, ": non-finite value in length-", v.size(),
                         " vector"));
}

inline void check_finite(const Array& a, const std::string& where) {
  if (!a.allFinite())
    throw ValueError(cat(where, ": non-finite value in length-", a.size(),
                         " array"));
}

inline void check_finite(double x, const std::string& where) {
  if (!std::isfinite(x)) throw ValueError(cat(where, ": non-finite scalar"));
}

}  // namespace domst
