#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <span>
#include <stdexcept>
#include <string>

namespace stablab {

using Complex = std::complex<double>;

enum class ErrorKind {
  DegenerateParameter,
  ChartFailure,
  Collision,
  RootFinding,
  RootBudget,
  NotPolynomial,
  ExtensionFailure,
  LevelBudget,
  NoClearPoint,
  OutOfRaster,
  InvalidArgument,
  Config,
  FailureBudget,
};

const char* to_string(ErrorKind kind);

class LabError : public std::runtime_error {
 public:
  LabError(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Homogeneous coordinate vector in C^{k+1}, k <= 2.
/// |z| without the exact-rounding cost of hypot; relative error ~1e-16.
inline double modulus(Complex z) {
  double a = std::abs(z.real()), b = std::abs(z.imag());
  if (a < b) std::swap(a, b);
  if (a == 0.0) return 0.0;
  const double t = b / a;
  return a * std::sqrt(1.0 + t * t);
}

struct HVec {
  std::array<Complex, 3> v{};
  int n = 2;

  HVec() = default;
  HVec(Complex a, Complex b) : v{a, b, Complex{}}, n(2) {}
  HVec(Complex a, Complex b, Complex c) : v{a, b, c}, n(3) {}

  Complex& operator[](int i) { return v[static_cast<std::size_t>(i)]; }
  Complex operator[](int i) const { return v[static_cast<std::size_t>(i)]; }
  int size() const { return n; }

  double max_norm() const {
    double m = 0.0;
    for (int i = 0; i < n; ++i) m = std::max(m, modulus(v[i]));
    return m;
  }
  double norm2() const {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += std::norm(v[i]);
    return s;
  }
  HVec scaled(Complex s) const {
    HVec r = *this;
    for (int i = 0; i < n; ++i) r.v[i] *= s;
    return r;
  }
};

inline HVec operator+(HVec a, const HVec& b) {
  for (int i = 0; i < a.n; ++i) a.v[i] += b.v[i];
  return a;
}
inline HVec operator-(HVec a, const HVec& b) {
  for (int i = 0; i < a.n; ++i) a.v[i] -= b.v[i];
  return a;
}

using Mat3 = std::array<std::array<Complex, 3>, 3>;

inline HVec mat_vec(const Mat3& m, const HVec& x) {
  HVec r;
  r.n = x.n;
  for (int i = 0; i < x.n; ++i) {
    Complex s{};
    for (int j = 0; j < x.n; ++j) s += m[i][j] * x.v[j];
    r.v[i] = s;
  }
  return r;
}

/// |u ^ v|: norm of the wedge product, computed without cancellation.
double wedge_norm(const HVec& u, const HVec& v);

/// Fubini-Study (sine of the angle) distance between the lines [u] and [v].
double fs_distance(const HVec& u, const HVec& v);

/// Speed of the projective curve [g(t)] given a lift g and its derivative g'.
double fs_speed(const HVec& g, const HVec& dg);

/// det[u, v] for k = 1 lifts.
inline Complex det2(const HVec& u, const HVec& v) { return u[0] * v[1] - u[1] * v[0]; }

/// A point of P^k. Stored with max |coordinate| == 1, achieved by the
/// coordinate that was largest at construction (which becomes exactly 1).
class ProjPoint {
 public:
  ProjPoint() : h_(Complex{0}, Complex{1}) {}
  explicit ProjPoint(const HVec& h);

  static ProjPoint affine(Complex z) { return ProjPoint(HVec(z, Complex{1})); }
  static ProjPoint affine2(Complex z, Complex w) {
    return ProjPoint(HVec(z, w, Complex{1}));
  }
  static ProjPoint infinity() { return ProjPoint(HVec(Complex{1}, Complex{0})); }

  const HVec& lift() const { return h_; }
  int size() const { return h_.n; }
  Complex operator[](int i) const { return h_[i]; }

  /// z_0 / z_last for k = 1; infinite for the point at infinity.
  Complex affine_value() const;
  bool is_finite(double tol = 1e-300) const { return std::abs(h_[h_.n - 1]) > tol; }

  /// True when the coordinates agree up to one complex scalar within tol.
  bool equals(const ProjPoint& other, double tol = 1e-9) const {
    return fs_distance(h_, other.h_) <= tol;
  }

 private:
  HVec h_;
};

double fs_distance(const ProjPoint& a, const ProjPoint& b);

/// Axis-aligned rectangle in C.
struct Rect {
  double re_min = -1, re_max = 1, im_min = -1, im_max = 1;

  bool contains(Complex z, double tol = 0.0) const {
    return z.real() >= re_min - tol && z.real() <= re_max + tol &&
           z.imag() >= im_min - tol && z.imag() <= im_max + tol;
  }
  double width() const { return re_max - re_min; }
  double height() const { return im_max - im_min; }
  Complex center() const {
    return {0.5 * (re_min + re_max), 0.5 * (im_min + im_max)};
  }
};

/// Cell-centred sample grid over a rectangle.
struct ParamGrid {
  Rect rect;
  int nx = 1, ny = 1;

  double dx() const { return rect.width() / nx; }
  double dy() const { return rect.height() / ny; }
  double cell_area() const { return dx() * dy(); }
  std::size_t size() const { return static_cast<std::size_t>(nx) * ny; }
  std::size_t index(int ix, int iy) const {
    return static_cast<std::size_t>(iy) * nx + ix;
  }
  Complex at(int ix, int iy) const {
    return {rect.re_min + (ix + 0.5) * dx(), rect.im_min + (iy + 0.5) * dy()};
  }
  Complex at(std::size_t i) const {
    return at(static_cast<int>(i % nx), static_cast<int>(i / nx));
  }
};

}  // namespace stablab
