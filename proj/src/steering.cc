#include "gomt/steering.h"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include <Eigen/Eigenvalues>

#include "gomt/error.h"

namespace gomt {
namespace {

void check_horizon(double t_f) {
  if (!(t_f > 0.0) || !std::isfinite(t_f)) {
    throw InvalidArgumentError("horizon t_f must be positive and finite");
  }
}

void check_dims(const Drift& drift, const Vec& a, const Vec& b) {
  if (a.size() != drift.dim() || b.size() != drift.dim()) {
    throw InvalidArgumentError("endpoint dimension does not match the drift");
  }
}

bool all_finite(const Vec& v) { return v.allFinite(); }

struct LoopOutput {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> controls;
  std::vector<double> cost;
};

using ControlFn = std::function<Vec(double t, double mid, double h,
                                    const Vec& x, const Vec* ref_dir)>;
using OffsetFn = std::function<Vec(double mid, const Vec& x)>;
using RhsFn = std::function<Vec(const Vec& x, const Vec& u)>;

// Classical RK4 on [0, t_f] with `steps` equal steps. The quadratic running
// cost rides along as an extra state. `offset` gives the vector whose
// direction is frozen when it shrinks below `guard_eps`.
LoopOutput run_rk4(const Vec& x0, double t_f, int steps, const RhsFn& rhs,
                   const ControlFn& control, const OffsetFn& offset,
                   double guard_eps) {
  const double h = t_f / steps;
  LoopOutput out;
  out.times.reserve(steps + 1);
  out.states.reserve(steps + 1);
  out.controls.reserve(steps + 1);
  out.cost.reserve(steps + 1);

  Vec x = x0;
  double cost = 0.0;
  Vec last_dir;
  bool have_dir = false;
  for (int n = 0; n < steps; ++n) {
    const double t = n * h;
    const double mid = t + 0.5 * h;
    const Vec o = offset(mid, x);
    const double on = o.norm();
    if (on >= guard_eps) {
      last_dir = o / on;
      have_dir = true;
    }
    const Vec* ref = have_dir ? &last_dir : nullptr;

    const Vec u1 = control(t, mid, h, x, ref);
    const Vec k1 = rhs(x, u1);
    const Vec x2 = x + 0.5 * h * k1;
    const Vec u2 = control(mid, mid, h, x2, ref);
    const Vec k2 = rhs(x2, u2);
    const Vec x3 = x + 0.5 * h * k2;
    const Vec u3 = control(mid, mid, h, x3, ref);
    const Vec k3 = rhs(x3, u3);
    const Vec x4 = x + h * k3;
    const Vec u4 = control(t + h, mid, h, x4, ref);
    const Vec k4 = rhs(x4, u4);

    out.times.push_back(t);
    out.states.push_back(x);
    out.controls.push_back(u1);
    out.cost.push_back(cost);

    x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    cost += (h / 12.0) * (u1.squaredNorm() + 2.0 * u2.squaredNorm() +
                          2.0 * u3.squaredNorm() + u4.squaredNorm());
    if (!all_finite(x) || !std::isfinite(cost)) {
      throw DivergenceError("non-finite state during integration", t + h);
    }
  }
  const Vec* ref = have_dir ? &last_dir : nullptr;
  out.times.push_back(t_f);
  out.states.push_back(x);
  out.controls.push_back(control(t_f, t_f, h, x, ref));
  out.cost.push_back(cost);
  return out;
}

// Within one step of arrival the offset direction of an RK4 stage state is
// dominated by truncation error; below this fraction of (speed * step) the
// radial laws use the direction frozen at the start of the step.
constexpr double kStageGuardFraction = 0.25;

int step_count(double t_f, double step, bool even) {
  if (!(step > 0.0) || step > t_f * (1.0 + 1e-12)) {
    throw InvalidArgumentError("step must satisfy 0 < step <= t_f");
  }
  int n = static_cast<int>(std::ceil(t_f / step - 1e-9));
  n = std::max(n, 1);
  if (even && n % 2 != 0) ++n;
  return n;
}

}  // namespace

Eigen::Vector3d ustar(const RadialLawParams& params, const AffinePair& pair,
                      const StateVec& z) {
  check_horizon(params.t_f);
  const double norm = z.norm();
  if (norm == 0.0) {
    throw SingularStateError("u* is undefined at z = 0");
  }
  const double gain = -params.z0.norm() / params.t_f -
                      z.dot(pair.A * z + pair.b) / norm;
  return gain * z / norm;
}

Vec ustarstar(const RadialLawParams& params, const Vec& z) {
  check_horizon(params.t_f);
  const double z0_norm = params.z0.norm();
  if (z0_norm == 0.0) return Vec::Zero(z.size());
  const double norm = z.norm();
  if (norm == 0.0) {
    throw SingularStateError("u** is undefined at z = 0");
  }
  return (-z0_norm / params.t_f / norm) * z;
}

Vec ControlTable::at(double t, double hint) const {
  if (controls.empty()) throw InvalidArgumentError("empty control table");
  if (interpolation == Interpolation::kPiecewiseConstant) {
    if (times.size() != controls.size() + 1) {
      throw InvalidArgumentError(
          "piecewise-constant table needs one more time than controls");
    }
    const auto it = std::upper_bound(times.begin(), times.end(), hint);
    const long idx = std::clamp<long>(it - times.begin() - 1, 0,
                                      static_cast<long>(controls.size()) - 1);
    return controls[idx];
  }
  if (times.size() != controls.size()) {
    throw InvalidArgumentError("linear table needs matching sizes");
  }
  if (t <= times.front()) return controls.front();
  if (t >= times.back()) return controls.back();
  const auto it = std::upper_bound(times.begin(), times.end(), t);
  const std::size_t hi = it - times.begin();
  const std::size_t lo = hi - 1;
  const double w = (t - times[lo]) / (times[hi] - times[lo]);
  return (1.0 - w) * controls[lo] + w * controls[hi];
}

std::string_view to_string(PolicyKind kind) {
  switch (kind) {
    case PolicyKind::kFeasibleUstar:
      return "ustar";
    case PolicyKind::kNormInvUstarstar:
      return "ustarstar";
    case PolicyKind::kTwoPhase:
      return "two-phase";
    case PolicyKind::kOpenLoop:
      return "open-loop";
  }
  return "unknown";
}

PolicyKind policy_kind_from_string(std::string_view name) {
  if (name == "ustar") return PolicyKind::kFeasibleUstar;
  if (name == "ustarstar") return PolicyKind::kNormInvUstarstar;
  if (name == "two-phase") return PolicyKind::kTwoPhase;
  if (name == "open-loop") return PolicyKind::kOpenLoop;
  throw InvalidArgumentError("unknown policy kind '" + std::string(name) +
                             "'");
}

double default_guard_eps(const Vec& z0) {
  return 1e-8 * std::max(z0.norm(), 1.0);
}

Vec SteeringPolicy::hold(const Vec& z) const { return -(*drift_)(z + x_f_); }

namespace {

double radial_guard(double guard_eps, double speed, double step) {
  return std::max(guard_eps, kStageGuardFraction * speed * step);
}

}  // namespace

Vec SteeringPolicy::radial_law(const Vec& z, const Vec* ref_dir,
                               double step) const {
  const double k = -z0_.norm() / t_f_;
  const double norm = z.norm();
  if (norm >= radial_guard(guard_eps_, -k, step) && norm > 0.0) {
    if (kind_ == PolicyKind::kNormInvUstarstar) {
      return ustarstar(RadialLawParams{z0_, t_f_}, z);
    }
    if (pair_) {
      return ustar(RadialLawParams{z0_, t_f_}, *pair_, StateVec(z));
    }
    const double gain = k - z.dot((*drift_)(z + x_f_)) / norm;
    return gain * z / norm;
  }
  if (ref_dir == nullptr) return hold(z);
  // Limit of the law as z -> 0 along the frozen direction.
  const Vec& d = *ref_dir;
  if (kind_ == PolicyKind::kNormInvUstarstar) return k * d;
  const Vec f_at_target = (*drift_)(x_f_);
  return (k - d.dot(f_at_target)) * d;
}

Vec SteeringPolicy::control(const ControlQuery& query) const {
  const Vec& x = *query.x;
  switch (kind_) {
    case PolicyKind::kFeasibleUstar:
    case PolicyKind::kNormInvUstarstar:
      return radial_law(x - x_f_, query.ref_dir, query.step);
    case PolicyKind::kTwoPhase: {
      const double half = 0.5 * t_f_;
      if (query.step_mid <= half) {
        // Phase one: u** towards the origin over [0, t_f/2].
        const double k = -z0_.norm() / half;
        const double norm = x.norm();
        if (norm >= radial_guard(guard_eps_, -k, query.step) && norm > 0.0) {
          return k * x / norm;
        }
        if (query.ref_dir != nullptr) return k * *query.ref_dir;
        return -(*drift_)(x);
      }
      return table_.at(t_f_ - query.t, t_f_ - query.step_mid);
    }
    case PolicyKind::kOpenLoop:
      return table_.at(query.t, query.step_mid);
  }
  throw InvalidArgumentError("unhandled policy kind");
}

SteeringPolicy feasible_policy(const Drift& drift, const Vec& x0,
                               const Vec& x_f, double t_f,
                               std::optional<double> guard_eps) {
  check_horizon(t_f);
  check_dims(drift, x0, x_f);
  SteeringPolicy policy;
  policy.kind_ = PolicyKind::kFeasibleUstar;
  policy.t_f_ = t_f;
  policy.x_f_ = x_f;
  policy.z0_ = x0 - x_f;
  policy.guard_eps_ = guard_eps.value_or(default_guard_eps(policy.z0_));
  policy.drift_ = std::make_shared<const Drift>(drift);
  if (drift.body() != nullptr) {
    policy.pair_ = affine_pair(*drift.body(), StateVec(x_f));
  }
  return policy;
}

SteeringPolicy norminv_policy(const Drift& drift, const Vec& x0,
                              const Vec& x_f, double t_f,
                              std::optional<double> guard_eps) {
  check_horizon(t_f);
  check_dims(drift, x0, x_f);
  SteeringPolicy policy;
  policy.kind_ = PolicyKind::kNormInvUstarstar;
  policy.t_f_ = t_f;
  policy.x_f_ = x_f;
  policy.z0_ = x0 - x_f;
  policy.guard_eps_ = guard_eps.value_or(default_guard_eps(policy.z0_));
  policy.drift_ = std::make_shared<const Drift>(drift);
  return policy;
}

SteeringPolicy two_phase_policy(const Drift& drift, const Vec& x0,
                                const Vec& x_f, double t_f, double step) {
  check_horizon(t_f);
  check_dims(drift, x0, x_f);
  const double half = 0.5 * t_f;
  SteeringPolicy policy;
  policy.kind_ = PolicyKind::kTwoPhase;
  policy.t_f_ = t_f;
  policy.x_f_ = x_f;
  // Phase one steers x0 itself to the origin.
  policy.z0_ = x0;
  policy.guard_eps_ =
      std::min(default_guard_eps(x0), default_guard_eps(x_f));
  policy.drift_ = std::make_shared<const Drift>(drift);

  // Reversed system dx_r/dt = -f(x_r) - u_r from x_f to the origin with
  // u_r = (|x_f|/(t_f/2)) x_r/|x_r|, so that |x_r| decays linearly.
  const double k_r = x_f.norm() / half;
  const double eps = policy.guard_eps_;
  const Drift& f = *policy.drift_;
  const auto rhs = [&f](const Vec& x, const Vec& u) -> Vec {
    return -f(x) - u;
  };
  const auto law = [&f, k_r, eps](double, double, double h, const Vec& x,
                                  const Vec* ref) -> Vec {
    const double norm = x.norm();
    if (norm >= radial_guard(eps, k_r, h) && norm > 0.0) {
      return k_r * x / norm;
    }
    if (ref != nullptr) return k_r * *ref;
    return -f(x);
  };
  const auto offset = [](double, const Vec& x) -> Vec { return x; };
  const int steps = step_count(half, 0.5 * step, false);
  LoopOutput reversed = run_rk4(x_f, half, steps, rhs, law, offset, eps);

  // The reversed law reaches the origin exactly at t_f/2; its boundary value
  // there is the limit along the approach direction.
  if (k_r > 0.0) {
    const Vec& prev = reversed.states[reversed.states.size() - 2];
    if (prev.norm() > 0.0) {
      reversed.controls.back() = k_r * prev.normalized();
    }
  }
  policy.table_.times = std::move(reversed.times);
  policy.table_.controls = std::move(reversed.controls);
  policy.table_.interpolation = ControlTable::Interpolation::kLinear;
  return policy;
}

SteeringPolicy open_loop_policy(ControlTable table, double t_f) {
  check_horizon(t_f);
  if (table.controls.empty()) {
    throw InvalidArgumentError("open-loop policy needs a non-empty table");
  }
  SteeringPolicy policy;
  policy.kind_ = PolicyKind::kOpenLoop;
  policy.t_f_ = t_f;
  policy.table_ = std::move(table);
  return policy;
}

Trajectory integrate(const Drift& drift, const SteeringPolicy& policy,
                     const Vec& x0, const Vec& x_f, double t_f, double step) {
  check_horizon(t_f);
  check_dims(drift, x0, x_f);
  if (policy.kind() != PolicyKind::kOpenLoop &&
      std::abs(policy.t_f() - t_f) > 1e-12 * t_f) {
    throw InvalidArgumentError("policy was built for a different horizon");
  }
  if (policy.kind() != PolicyKind::kOpenLoop && policy.x_f() != x_f) {
    throw InvalidArgumentError("policy was built for a different target");
  }
  const bool two_phase = policy.kind() == PolicyKind::kTwoPhase;
  const int steps = step_count(t_f, step, two_phase);

  const auto rhs = [&drift](const Vec& x, const Vec& u) -> Vec {
    return drift(x) + u;
  };
  const auto control = [&policy](double t, double mid, double h,
                                 const Vec& x, const Vec* ref) -> Vec {
    ControlQuery query;
    query.t = t;
    query.step_mid = mid;
    query.step = h;
    query.x = &x;
    query.ref_dir = ref;
    return policy.control(query);
  };
  const double half = 0.5 * t_f;
  const auto offset = [two_phase, half, &x_f](double mid,
                                              const Vec& x) -> Vec {
    if (two_phase && mid <= half) return x;
    return x - x_f;
  };
  const double eps = policy.kind() == PolicyKind::kOpenLoop
                         ? 0.0
                         : policy.terminal_guard_eps();
  LoopOutput loop = run_rk4(x0, t_f, steps, rhs, control, offset, eps);

  Trajectory traj;
  traj.times = std::move(loop.times);
  traj.states = std::move(loop.states);
  traj.controls = std::move(loop.controls);
  traj.running_cost = std::move(loop.cost);
  traj.x_f = x_f;
  return traj;
}

Trajectory integrate(const InertiaBody& body, const SteeringPolicy& policy,
                     const StateVec& x0, const StateVec& x_f, double t_f,
                     double step) {
  return integrate(Drift::Euler(body), policy, Vec(x0), Vec(x_f), t_f, step);
}

double policy_cost(const Trajectory& trajectory) {
  if (trajectory.running_cost.empty()) {
    throw InvalidArgumentError("empty trajectory");
  }
  return trajectory.running_cost.back();
}

double norm_law_deviation(const Trajectory& trajectory) {
  const double t_f = trajectory.times.back();
  const double z0 = (trajectory.states.front() - trajectory.x_f).norm();
  double worst = 0.0;
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    const double predicted = (1.0 - trajectory.times[i] / t_f) * z0;
    const double actual = (trajectory.states[i] - trajectory.x_f).norm();
    worst = std::max(worst, std::abs(actual - predicted));
  }
  return worst;
}

namespace {

// Symmetric square root (or its inverse) of an SPD weight.
Mat spd_power(const Mat& R, bool inverse) {
  if (R.rows() != R.cols() || R.rows() == 0) {
    throw InvalidWeightError("weight must be a non-empty square matrix");
  }
  const double scale = std::max(1.0, R.cwiseAbs().maxCoeff());
  if ((R - R.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidWeightError("weight must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(R);
  if (eig.info() != Eigen::Success || eig.eigenvalues().minCoeff() <= 0.0) {
    throw InvalidWeightError("weight must be positive definite");
  }
  Vec d = eig.eigenvalues().cwiseSqrt();
  if (inverse) d = d.cwiseInverse();
  return eig.eigenvectors() * d.asDiagonal() * eig.eigenvectors().transpose();
}

std::vector<Vec> transform_path(const Mat& M, const std::vector<Vec>& path) {
  std::vector<Vec> out;
  out.reserve(path.size());
  for (const Vec& u : path) {
    if (u.size() != M.cols()) {
      throw InvalidArgumentError("control dimension does not match weight");
    }
    out.push_back(M * u);
  }
  return out;
}

}  // namespace

std::vector<Vec> rescale_weighted(const std::vector<Vec>& path,
                                  const Mat& R) {
  return transform_path(spd_power(R, false), path);
}

std::vector<Vec> unscale_weighted(const std::vector<Vec>& path,
                                  const Mat& R) {
  return transform_path(spd_power(R, true), path);
}

}  // namespace gomt
