#ifndef GOMT_TRAJOPT_H_
#define GOMT_TRAJOPT_H_

#include <string>
#include <vector>

#include "gomt/rigid_body.h"

namespace gomt {

struct TranscriptionSettings {
  // Piecewise-constant control intervals (one RK4 step each).
  int intervals = 100;
  // Terminal penalty weights, strictly increasing.
  std::vector<double> penalty_schedule = {10.0, 100.0, 1e3, 1e4, 1e5};
  // Stationarity tolerance on max_k |dJ/du_k| / dt.
  double gradient_tol = 1e-6;
  int max_iterations = 3000;
  double violation_tol = 1e-4;
  // Armijo backtracking.
  double armijo_c = 1e-4;
  double armijo_shrink = 0.5;
  // Quasi-Newton memory for the search direction.
  int memory = 12;
  // Step used to integrate u* for warm starts and the incumbent cost.
  double ustar_step = 1e-3;
};

struct TranscriptionProblem {
  TranscriptionProblem(Drift drift, Vec x0, Vec x_f, double t_f,
                       TranscriptionSettings settings = {});

  Drift drift;
  Vec x0;
  Vec x_f;
  double t_f;
  TranscriptionSettings settings;

  double dt() const { return t_f / settings.intervals; }
};

struct StageLog {
  double rho = 0.0;
  double cost = 0.0;
  double violation = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
};

struct TranscriptionSolution {
  std::vector<Vec> controls;
  // Rollout states at the interval boundaries (intervals + 1 entries).
  std::vector<Vec> states;
  double dt = 0.0;
  // Control energy sum 0.5 |u_k|^2 dt.
  double cost = 0.0;
  double violation = 0.0;
  double gradient_norm = 0.0;
  bool converged = false;
  std::vector<StageLog> stages;
};

enum class InitKind { kZero, kWarmFromUstar };

// Penalized objective J_rho(u) = sum 0.5 |u_k|^2 dt + 0.5 rho |x_N - x_f|^2
// and its gradient by the discrete adjoint of the RK4 rollout.
struct ObjectiveValue {
  double value = 0.0;
  std::vector<Vec> gradient;
  std::vector<Vec> states;
};

// RK4 rollout with one step per interval. Throws DivergenceError.
std::vector<Vec> rollout(const TranscriptionProblem& problem,
                         const std::vector<Vec>& controls);

double objective(const TranscriptionProblem& problem,
                 const std::vector<Vec>& controls, double rho);

std::vector<Vec> adjoint_gradient(const TranscriptionProblem& problem,
                                  const std::vector<Vec>& controls,
                                  double rho);

ObjectiveValue evaluate(const TranscriptionProblem& problem,
                        const std::vector<Vec>& controls, double rho);

// Interval averages of the u* closed loop (feasible by construction).
std::vector<Vec> ustar_initial_controls(const TranscriptionProblem& problem);

// Penalty continuation through the schedule, each stage warm-started from
// the previous one. Non-convergence is flagged, not thrown.
TranscriptionSolution solve(const TranscriptionProblem& problem,
                            const std::vector<Vec>& init);
TranscriptionSolution solve(const TranscriptionProblem& problem,
                            InitKind init);

struct NumericGroundCost {
  double cost = 0.0;
  bool converged = false;
  // Which candidate produced `cost`: "zero-start", "ustar-start" or
  // "ustar-incumbent".
  std::string source;
  // Measured cost of the u* closed loop, always feasible.
  double ustar_cost = 0.0;
  // Lowest converged transcription cost (infinity if none converged).
  double transcription_cost = 0.0;
  TranscriptionSolution certificate;
};

// Multi-start numerical ground cost: transcription from zero and from the
// u* warm start, with the measured u* cost as the incumbent. The result is
// an upper envelope certified by a feasible (or penalty-feasible) control.
NumericGroundCost ground_cost_numeric(const Drift& drift, const Vec& x0,
                                      const Vec& x_f, double t_f,
                                      const TranscriptionSettings& settings =
                                          {});
NumericGroundCost ground_cost_numeric(const InertiaBody& body,
                                      const StateVec& x0, const StateVec& x_f,
                                      double t_f,
                                      const TranscriptionSettings& settings =
                                          {});

}  // namespace gomt

#endif  // GOMT_TRAJOPT_H_
