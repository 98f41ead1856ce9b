#pragma once

#include <array>
#include <vector>

#include "stablab/types.hpp"

namespace stablab {

/// A holomorphic family lambda -> f_lambda of degree-d endomorphisms of P^k,
/// given by a homogeneous lift whose coefficients are polynomials in lambda.
///
/// coeffs[i][m][p] is the coefficient of lambda^p in front of monomial m of
/// lift component i. Monomials are the degree-d exponent vectors in
/// (z_0, ..., z_k) listed in graded-lex order (see monomials()).
struct FamilySpec {
  int k = 1;
  int d = 2;
  std::vector<std::vector<std::vector<Complex>>> coeffs;
  Rect domain{-4.0, 4.0, -4.0, 4.0};

  /// Exponent vectors of degree d in k+1 variables, lexicographically
  /// decreasing: z0^d, z0^{d-1} z1, ..., z_k^d.
  static std::vector<std::array<int, 3>> monomials(int k, int d);

  /// Polynomial family z -> sum_j a_j(lambda) z^j, a_j given by lambda-coefficients.
  static FamilySpec polynomial(const std::vector<std::vector<Complex>>& affine);
  static FamilySpec quadratic();  // z^2 + lambda
  static FamilySpec power(int d);  // z^d, constant in lambda

  /// Skew product (z, w) -> (p(z), q(z, w)) on P^2. p[i] holds the lambda
  /// coefficients of z^i; q[i][j] those of z^i w^j (i + j <= d).
  static FamilySpec skew_product(int d, const std::vector<std::vector<Complex>>& p,
                                 const std::vector<std::vector<std::vector<Complex>>>& q);

  /// Throws InvalidArgument on shape errors.
  void validate() const;

  /// k = 1 and the last lift component is b(lambda) w^d (infinity totally invariant).
  bool is_polynomial() const;

  /// Throws InvalidArgument when lambda is outside the parameter domain.
  void require_in_domain(Complex lambda) const;
};

/// f_lambda with its coefficients evaluated at one parameter.
class FrozenMap {
 public:
  FrozenMap(const FamilySpec& family, Complex lambda);

  int k() const { return k_; }
  int d() const { return d_; }
  Complex lambda() const { return lambda_; }

  HVec lift(const HVec& z) const;
  /// Lift value plus jac[i][j] = dF_i / dz_j.
  HVec lift(const HVec& z, Mat3& jac) const;
  /// dF / dlambda at fixed z.
  HVec dlambda(const HVec& z) const;

  /// Multiplies the lift by a nonzero constant (same map on P^k).
  void rescale(Complex s);

  /// Sum of |coefficients|: the size of F on the unit polydisc.
  double coeff_scale() const { return scale_; }

  /// F(z) rescaled to max-norm 1. Throws DegenerateParameter when F(z) is
  /// numerically the origin.
  HVec apply(const HVec& z) const;
  /// Same, also returning the scale factor that was divided out.
  HVec apply(const HVec& z, double& scale) const;

 private:
  struct Term {
    std::array<int, 3> e;
    Complex c;
    Complex dc;
  };
  int k_;
  int d_;
  Complex lambda_;
  double scale_ = 0.0;
  std::vector<std::vector<Term>> terms_;
};

ProjPoint evaluate(const FamilySpec& family, Complex lambda, const ProjPoint& z);

/// Phase and parameter derivatives of f_lambda at z, measured in the
/// Fubini-Study metric.
struct Derivative {
  Complex affine;     // derivative (k = 1) or Jacobian determinant in the charts
  Complex jac;        // affine value rescaled by the FS volume factors
  double jac_abs = 0.0;
  double dlambda_fs = 0.0;      // FS norm of d f_lambda(z) / d lambda
  std::array<Complex, 2> dlambda_affine{};
  int src_chart = 0;
  int dst_chart = 0;
};

/// Charts are indexed by the homogeneous coordinate set to 1; -1 picks the
/// coordinate of largest modulus. Throws ChartFailure when a requested chart
/// does not keep the point bounded (affine coordinates above 1e8).
Derivative derivative(const FamilySpec& family, Complex lambda, const ProjPoint& z,
                      int src_chart = -1, int dst_chart = -1);
Derivative derivative(const FrozenMap& map, const ProjPoint& z, int src_chart = -1,
                      int dst_chart = -1);

struct CriticalPoint {
  ProjPoint point;
  int multiplicity = 1;
};

/// Homogeneous coefficients w_e of the critical form
/// W = dF0/dz dF1/dw - dF0/dw dF1/dz = sum_e w_e z^{2d-2-e} w^e (k = 1).
std::vector<Complex> critical_form(const FrozenMap& map);

/// Critical points of f_lambda on P^1 with multiplicity (sum = 2d - 2).
/// Roots closer than cluster_tol (chordal) are merged into one point.
std::vector<CriticalPoint> critical_points(const FrozenMap& map, double cluster_tol = 1e-6);

/// The d preimages of z under f_lambda on P^1, listed with multiplicity.
/// Throws RootFinding when the fiber equation is numerically degenerate.
std::vector<ProjPoint> preimages(const FrozenMap& map, const ProjPoint& z);

enum class TrackKind { CriticalMarking, Postcritical, InverseBranch, RepellingPoint };

const char* to_string(TrackKind kind);

/// A point function lambda -> gamma(lambda) sampled on a parameter grid.
struct MotionTrack {
  ParamGrid grid;
  std::vector<ProjPoint> values;
  TrackKind kind = TrackKind::CriticalMarking;
  int multiplicity = 1;

  const ProjPoint& at(int ix, int iy) const { return values[grid.index(ix, iy)]; }
  /// Largest FS step between horizontally or vertically adjacent samples.
  double max_step() const;
};

struct MarkingOptions {
  double cluster_tol = 1e-6;   // two critical points closer than this collide
  double ambiguity = 0.5;      // best match must be below ambiguity * second best
  int max_halvings = 4;
};

/// Continues the critical points of f_lambda over the grid by nearest-root
/// matching (k = 1). Throws Collision when the multiplicity structure changes
/// or a match stays ambiguous after max_halvings step halvings.
std::vector<MotionTrack> critical_marking(const FamilySpec& family, const ParamGrid& grid,
                                          const MarkingOptions& opts = {});

}  // namespace stablab
