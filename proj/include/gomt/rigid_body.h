#ifndef GOMT_RIGID_BODY_H_
#define GOMT_RIGID_BODY_H_

#include <cstdint>
#include <functional>
#include <memory>
#include <string>

#include <Eigen/Core>

namespace gomt {

using StateVec = Eigen::Vector3d;
using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Principal moments of inertia together with the Euler drift coefficients
//   alpha = 1/J3 - 1/J2,  beta = 1/J1 - 1/J3,  gamma = 1/J2 - 1/J1,
// which sum to zero. Immutable once built.
class InertiaBody {
 public:
  // Throws InvalidInertiaError unless every moment is finite and positive.
  explicit InertiaBody(const Eigen::Vector3d& moments);

  const Eigen::Vector3d& moments() const { return moments_; }
  double alpha() const { return alpha_; }
  double beta() const { return beta_; }
  double gamma() const { return gamma_; }

 private:
  Eigen::Vector3d moments_;
  double alpha_;
  double beta_;
  double gamma_;
};

InertiaBody make_body(const Eigen::Vector3d& moments);

// The constant affine part picked up by the Euler drift when the terminal
// state x_f is translated to the origin:
//   f0(z + x_f) = f0(z) + A z + b.
struct AffinePair {
  Eigen::Matrix3d A;
  Eigen::Vector3d b;
  StateVec x_f;
};

// f0(z) = (alpha z2 z3, beta z3 z1, gamma z1 z2).
StateVec drift_f0(const InertiaBody& body, const StateVec& z);

// Jacobian of drift_f0 at z.
Eigen::Matrix3d drift_f0_jacobian(const InertiaBody& body, const StateVec& z);

AffinePair affine_pair(const InertiaBody& body, const StateVec& x_f);

// x-coordinate dynamics: f0(x) + u.
StateVec rhs_x(const InertiaBody& body, const StateVec& x,
               const Eigen::Vector3d& u);

// z-coordinate dynamics: f0(z) + A z + b + u.
StateVec rhs_z(const InertiaBody& body, const AffinePair& pair,
               const StateVec& z, const Eigen::Vector3d& u);

// An autonomous vector field on R^d with its Jacobian. The Euler drift is
// the built-in d = 3 specialization; the others exist so that steering and
// transcription can be exercised on arbitrary (e.g. translated
// norm-invariant) systems.
class Drift {
 public:
  using Field = std::function<Vec(const Vec&)>;
  using Jacobian = std::function<Mat(const Vec&)>;

  // When `jacobian` is empty it is approximated by central differences.
  Drift(int dim, Field field, Jacobian jacobian, std::string name);

  static Drift Euler(const InertiaBody& body);
  static Drift Zero(int dim);
  // f(x) = S x.
  static Drift Linear(const Mat& S);

  int dim() const { return dim_; }
  const std::string& name() const { return name_; }
  Vec operator()(const Vec& x) const { return field_(x); }
  Mat jacobian(const Vec& x) const;

  // Non-null only for drifts built with Euler().
  const InertiaBody* body() const { return body_.get(); }

 private:
  int dim_;
  Field field_;
  Jacobian jacobian_;
  std::string name_;
  std::shared_ptr<const InertiaBody> body_;
};

struct NormInvarianceOptions {
  int samples = 1000;
  double radius = 10.0;
  double tol = 1e-9;
  std::uint64_t seed = 0x5eed;
};

// Monte Carlo falsification test of translated norm invariance at x_f:
// true iff |<f(z + x_f), z>| <= tol (1 + |z| |f(z + x_f)|) for every z
// sampled uniformly in the ball of the given radius. A `true` answer is
// evidence, not a proof.
bool is_translated_norm_invariant(const Drift& drift, const Vec& x_f,
                                  const NormInvarianceOptions& options = {});

}  // namespace gomt

#endif  // GOMT_RIGID_BODY_H_
