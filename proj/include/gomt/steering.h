#ifndef GOMT_STEERING_H_
#define GOMT_STEERING_H_

#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "gomt/rigid_body.h"

namespace gomt {

// Parameters shared by the radial steering laws: initial offset
// z0 = x0 - x_f and horizon t_f.
struct RadialLawParams {
  Vec z0;
  double t_f = 1.0;
};

// Feasible controller for the translated Euler dynamics:
//   u*(z) = (-|z0|/t_f - <z, A z + b>/|z|) z/|z|
// Under u* the offset norm decays linearly, |z(t)| = (1 - t/t_f)|z0|.
// Throws SingularStateError at z = 0.
Eigen::Vector3d ustar(const RadialLawParams& params, const AffinePair& pair,
                      const StateVec& z);

// Constant-magnitude radial controller u**(z) = -(|z0|/t_f) z/|z|, optimal
// for translated norm-invariant drifts. Returns zero when z0 = 0; throws
// SingularStateError when z = 0 and z0 != 0.
Vec ustarstar(const RadialLawParams& params, const Vec& z);

// Piecewise control signal sampled on a time grid.
struct ControlTable {
  enum class Interpolation { kPiecewiseConstant, kLinear };

  std::vector<double> times;
  std::vector<Vec> controls;
  Interpolation interpolation = Interpolation::kPiecewiseConstant;

  // For piecewise-constant tables, `times` has one more entry than
  // `controls` (interval endpoints) and the interval is chosen from
  // `hint` so that every stage of an integrator step sees the same value.
  Vec at(double t, double hint) const;
};

enum class PolicyKind { kFeasibleUstar, kNormInvUstarstar, kTwoPhase, kOpenLoop };

std::string_view to_string(PolicyKind kind);
PolicyKind policy_kind_from_string(std::string_view name);

// Where a control is requested during integration.
struct ControlQuery {
  double t = 0.0;
  // Midpoint of the integrator step that owns this evaluation.
  double step_mid = 0.0;
  // Integrator step size; 0 outside of integration.
  double step = 0.0;
  const Vec* x = nullptr;
  // Last valid unit offset direction, used when |z| falls below the guard
  // before the horizon ends.
  const Vec* ref_dir = nullptr;
};

class SteeringPolicy {
 public:
  PolicyKind kind() const { return kind_; }
  double t_f() const { return t_f_; }
  const Vec& x_f() const { return x_f_; }
  const Vec& z0() const { return z0_; }
  double terminal_guard_eps() const { return guard_eps_; }
  const ControlTable& table() const { return table_; }

  Vec control(const ControlQuery& query) const;

  friend SteeringPolicy feasible_policy(const Drift&, const Vec&, const Vec&,
                                        double, std::optional<double>);
  friend SteeringPolicy norminv_policy(const Drift&, const Vec&, const Vec&,
                                       double, std::optional<double>);
  friend SteeringPolicy two_phase_policy(const Drift&, const Vec&, const Vec&,
                                         double, double);
  friend SteeringPolicy open_loop_policy(ControlTable, double);

 private:
  SteeringPolicy() = default;

  Vec radial_law(const Vec& z, const Vec* ref_dir, double step) const;
  Vec hold(const Vec& z) const;

  PolicyKind kind_ = PolicyKind::kOpenLoop;
  double t_f_ = 0.0;
  Vec x_f_;
  Vec z0_;
  double guard_eps_ = 0.0;
  std::shared_ptr<const Drift> drift_;
  std::optional<AffinePair> pair_;
  // Two-phase: reversed-system control indexed by reversed time.
  ControlTable table_;
};

double default_guard_eps(const Vec& z0);

// u* closed loop from x0 to x_f. For an Euler drift the affine pair of x_f
// is used; for other drifts the radial correction is <z, f(z + x_f)>/|z|,
// which reduces to the same expression for the Euler case.
SteeringPolicy feasible_policy(const Drift& drift, const Vec& x0,
                               const Vec& x_f, double t_f,
                               std::optional<double> guard_eps = {});

// u** closed loop. Reaches x_f only when the drift is translated
// norm-invariant at x_f.
SteeringPolicy norminv_policy(const Drift& drift, const Vec& x0,
                              const Vec& x_f, double t_f,
                              std::optional<double> guard_eps = {});

// Two half-horizon phases: u** from x0 to the origin on [0, t_f/2], then
// the time-flipped replay of u** on the reversed system (dx/dt = -f - u)
// steering x_f to the origin. Requires a drift that is norm invariant at the
// origin. `step` is the resolution of the reversed-system control table.
SteeringPolicy two_phase_policy(const Drift& drift, const Vec& x0,
                                const Vec& x_f, double t_f,
                                double step = 1e-3);

SteeringPolicy open_loop_policy(ControlTable table, double t_f);

struct Trajectory {
  std::vector<double> times;
  std::vector<Vec> states;
  std::vector<Vec> controls;
  // Accumulated integral of |u|^2/2.
  std::vector<double> running_cost;
  Vec x_f;

  std::size_t size() const { return times.size(); }
  double terminal_error() const { return (states.back() - x_f).norm(); }
};

// Fixed-step classical RK4 integration of dx/dt = f(x) + u in x
// coordinates; feedback policies see z = x - x_f. The running cost is an
// extra RK4 state, i.e. Simpson's rule on the stage controls. The step is
// shrunk so that it divides t_f (and t_f/2 for two-phase policies).
// Throws DivergenceError on a non-finite state.
Trajectory integrate(const Drift& drift, const SteeringPolicy& policy,
                     const Vec& x0, const Vec& x_f, double t_f, double step);
Trajectory integrate(const InertiaBody& body, const SteeringPolicy& policy,
                     const StateVec& x0, const StateVec& x_f, double t_f,
                     double step);

double policy_cost(const Trajectory& trajectory);

// max over nodes of | |z(t)| - (1 - t/t_f)|z0| |.
double norm_law_deviation(const Trajectory& trajectory);

// Change of control variable between the weighted Lagrangian u'Ru/2 and the
// unweighted one: v = R^{1/2} u. Throws InvalidWeightError unless R is
// symmetric positive definite.
std::vector<Vec> rescale_weighted(const std::vector<Vec>& path,
                                  const Mat& R);
std::vector<Vec> unscale_weighted(const std::vector<Vec>& path,
                                  const Mat& R);

}  // namespace gomt

#endif  // GOMT_STEERING_H_
