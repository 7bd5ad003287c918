#include "gomt/rigid_body.h"

#include <cmath>
#include <random>
#include <utility>

#include "gomt/error.h"

namespace gomt {

InertiaBody::InertiaBody(const Eigen::Vector3d& moments) : moments_(moments) {
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(moments[i]) || moments[i] <= 0.0) {
      throw InvalidInertiaError("principal moment J" + std::to_string(i + 1) +
                                " must be finite and positive");
    }
  }
  const Eigen::Vector3d inv = moments.cwiseInverse();
  alpha_ = inv[2] - inv[1];
  beta_ = inv[0] - inv[2];
  gamma_ = inv[1] - inv[0];
}

InertiaBody make_body(const Eigen::Vector3d& moments) {
  return InertiaBody(moments);
}

StateVec drift_f0(const InertiaBody& body, const StateVec& z) {
  return {body.alpha() * z[1] * z[2], body.beta() * z[2] * z[0],
          body.gamma() * z[0] * z[1]};
}

Eigen::Matrix3d drift_f0_jacobian(const InertiaBody& body, const StateVec& z) {
  const double a = body.alpha(), b = body.beta(), c = body.gamma();
  Eigen::Matrix3d jac;
  jac << 0.0, a * z[2], a * z[1],
         b * z[2], 0.0, b * z[0],
         c * z[1], c * z[0], 0.0;
  return jac;
}

AffinePair affine_pair(const InertiaBody& body, const StateVec& x_f) {
  // The cross terms of f0(z + x_f) are exactly the Jacobian of f0 at x_f.
  return AffinePair{drift_f0_jacobian(body, x_f), drift_f0(body, x_f), x_f};
}

StateVec rhs_x(const InertiaBody& body, const StateVec& x,
               const Eigen::Vector3d& u) {
  return drift_f0(body, x) + u;
}

StateVec rhs_z(const InertiaBody& body, const AffinePair& pair,
               const StateVec& z, const Eigen::Vector3d& u) {
  return drift_f0(body, z) + pair.A * z + pair.b + u;
}

Drift::Drift(int dim, Field field, Jacobian jacobian, std::string name)
    : dim_(dim),
      field_(std::move(field)),
      jacobian_(std::move(jacobian)),
      name_(std::move(name)) {
  if (dim <= 0) throw InvalidArgumentError("drift dimension must be positive");
  if (!field_) throw InvalidArgumentError("drift field must be callable");
}

Drift Drift::Euler(const InertiaBody& body) {
  auto shared = std::make_shared<const InertiaBody>(body);
  Drift drift(
      3,
      [shared](const Vec& x) -> Vec {
        return drift_f0(*shared, StateVec(x));
      },
      [shared](const Vec& x) -> Mat {
        return drift_f0_jacobian(*shared, StateVec(x));
      },
      "euler");
  drift.body_ = std::move(shared);
  return drift;
}

Drift Drift::Zero(int dim) {
  return Drift(
      dim, [dim](const Vec&) -> Vec { return Vec::Zero(dim); },
      [dim](const Vec&) -> Mat { return Mat::Zero(dim, dim); }, "zero");
}

Drift Drift::Linear(const Mat& S) {
  if (S.rows() != S.cols()) {
    throw InvalidArgumentError("linear drift matrix must be square");
  }
  return Drift(
      static_cast<int>(S.rows()), [S](const Vec& x) -> Vec { return S * x; },
      [S](const Vec&) -> Mat { return S; }, "linear");
}

Mat Drift::jacobian(const Vec& x) const {
  if (jacobian_) return jacobian_(x);
  Mat jac(dim_, dim_);
  Vec probe = x;
  for (int j = 0; j < dim_; ++j) {
    const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
    probe[j] = x[j] + h;
    const Vec plus = field_(probe);
    probe[j] = x[j] - h;
    const Vec minus = field_(probe);
    probe[j] = x[j];
    jac.col(j) = (plus - minus) / (2.0 * h);
  }
  return jac;
}

bool is_translated_norm_invariant(const Drift& drift, const Vec& x_f,
                                  const NormInvarianceOptions& options) {
  if (options.samples < 1 || options.radius <= 0.0 || options.tol <= 0.0) {
    throw InvalidArgumentError("norm-invariance check needs samples >= 1, "
                               "radius > 0 and tol > 0");
  }
  if (x_f.size() != drift.dim()) {
    throw InvalidArgumentError("translation has the wrong dimension");
  }
  const int d = drift.dim();
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  for (int s = 0; s < options.samples; ++s) {
    Vec z(d);
    for (int i = 0; i < d; ++i) z[i] = normal(rng);
    const double norm = z.norm();
    if (norm == 0.0) continue;
    z *= options.radius * std::pow(uniform(rng), 1.0 / d) / norm;
    const Vec f = drift(z + x_f);
    const double inner = f.dot(z);
    if (std::abs(inner) > options.tol * (1.0 + z.norm() * f.norm())) {
      return false;
    }
  }
  return true;
}

}  // namespace gomt
