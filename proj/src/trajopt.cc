#include "gomt/trajopt.h"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <utility>

#include "gomt/error.h"
#include "gomt/steering.h"

namespace gomt {
namespace {

// Intermediate RK4 stage states of one step, kept for the adjoint sweep.
struct StepTape {
  Vec y1, y2, y3, y4;
};

struct Rollout {
  std::vector<Vec> states;
  std::vector<StepTape> tape;
};

Rollout forward(const TranscriptionProblem& problem,
                const std::vector<Vec>& controls, bool keep_tape) {
  const int n = problem.settings.intervals;
  if (static_cast<int>(controls.size()) != n) {
    throw InvalidArgumentError("control table has the wrong length");
  }
  const double h = problem.dt();
  const Drift& f = problem.drift;
  Rollout out;
  out.states.reserve(n + 1);
  if (keep_tape) out.tape.reserve(n);
  Vec x = problem.x0;
  out.states.push_back(x);
  for (int k = 0; k < n; ++k) {
    const Vec& u = controls[k];
    const Vec k1 = f(x) + u;
    const Vec y2 = x + 0.5 * h * k1;
    const Vec k2 = f(y2) + u;
    const Vec y3 = x + 0.5 * h * k2;
    const Vec k3 = f(y3) + u;
    const Vec y4 = x + h * k3;
    const Vec k4 = f(y4) + u;
    if (keep_tape) out.tape.push_back(StepTape{x, y2, y3, y4});
    x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!x.allFinite()) {
      throw DivergenceError("non-finite state in transcription rollout",
                            (k + 1) * h);
    }
    out.states.push_back(x);
  }
  return out;
}

double energy(const std::vector<Vec>& controls, double dt) {
  double e = 0.0;
  for (const Vec& u : controls) e += u.squaredNorm();
  return 0.5 * dt * e;
}

Vec flatten(const std::vector<Vec>& table) {
  const int d = static_cast<int>(table.front().size());
  Vec flat(static_cast<Eigen::Index>(table.size()) * d);
  for (std::size_t k = 0; k < table.size(); ++k) {
    flat.segment(static_cast<Eigen::Index>(k) * d, d) = table[k];
  }
  return flat;
}

std::vector<Vec> unflatten(const Vec& flat, int d) {
  std::vector<Vec> table(flat.size() / d);
  for (std::size_t k = 0; k < table.size(); ++k) {
    table[k] = flat.segment(static_cast<Eigen::Index>(k) * d, d);
  }
  return table;
}

double stationarity(const std::vector<Vec>& gradient, double dt) {
  double worst = 0.0;
  for (const Vec& g : gradient) worst = std::max(worst, g.cwiseAbs().maxCoeff());
  return worst / dt;
}

struct StageResult {
  std::vector<Vec> controls;
  StageLog log;
};

StageResult run_stage(const TranscriptionProblem& problem,
                      std::vector<Vec> start, double rho) {
  const TranscriptionSettings& s = problem.settings;
  const int d = problem.drift.dim();
  const double dt = problem.dt();

  Vec u = flatten(start);
  ObjectiveValue current = evaluate(problem, start, rho);
  Vec g = flatten(current.gradient);

  std::deque<std::pair<Vec, Vec>> memory;
  StageResult result;
  result.log.rho = rho;
  int it = 0;
  for (; it < s.max_iterations; ++it) {
    if (stationarity(current.gradient, dt) <= s.gradient_tol) {
      result.log.converged = true;
      break;
    }
    // Two-loop recursion.
    Vec q = g;
    std::vector<double> alphas(memory.size());
    for (int i = static_cast<int>(memory.size()) - 1; i >= 0; --i) {
      const auto& [si, yi] = memory[i];
      alphas[i] = si.dot(q) / yi.dot(si);
      q -= alphas[i] * yi;
    }
    double scale = 1.0 / dt;
    if (!memory.empty()) {
      const auto& [sl, yl] = memory.back();
      scale = sl.dot(yl) / yl.squaredNorm();
    }
    Vec dir = scale * q;
    for (std::size_t i = 0; i < memory.size(); ++i) {
      const auto& [si, yi] = memory[i];
      const double beta = yi.dot(dir) / yi.dot(si);
      dir += si * (alphas[i] - beta);
    }
    dir = -dir;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      memory.clear();
      dir = -g / dt;
      slope = g.dot(dir);
    }

    double step = 1.0;
    bool accepted = false;
    Vec trial;
    std::optional<ObjectiveValue> next;
    while (step > 1e-20) {
      trial = u + step * dir;
      double trial_value;
      try {
        trial_value = objective(problem, unflatten(trial, d), rho);
      } catch (const DivergenceError&) {
        trial_value = std::numeric_limits<double>::infinity();
      }
      // Strict decrease too: at the rounding floor Armijo alone accepts
      // steps that change nothing.
      if (trial_value <= current.value + s.armijo_c * step * slope &&
          trial_value < current.value) {
        accepted = true;
        break;
      }
      // Approximate Wolfe test (Hager-Zhang) when the value change is below
      // rounding: decide on the directional derivative instead.
      if (trial_value <= current.value + 1e-14 * std::abs(current.value)) {
        ObjectiveValue probe = evaluate(problem, unflatten(trial, d), rho);
        const double gd = flatten(probe.gradient).dot(dir);
        if (gd >= 0.9 * slope && gd <= (2.0 * s.armijo_c - 1.0) * slope) {
          next = std::move(probe);
          accepted = true;
          break;
        }
      }
      step *= s.armijo_shrink;
    }
    if (!accepted) {
      if (memory.empty()) break;  // stalled at machine precision
      memory.clear();
      continue;
    }
    if (!next) next = evaluate(problem, unflatten(trial, d), rho);
    Vec g_next = flatten(next->gradient);
    Vec s_k = trial - u;
    Vec y_k = g_next - g;
    if (s_k.dot(y_k) > 1e-12 * s_k.norm() * y_k.norm()) {
      memory.emplace_back(std::move(s_k), std::move(y_k));
      if (static_cast<int>(memory.size()) > s.memory) memory.pop_front();
    }
    u = std::move(trial);
    g = std::move(g_next);
    current = std::move(*next);
  }
  result.controls = unflatten(u, d);
  result.log.iterations = it;
  result.log.cost = energy(result.controls, dt);
  result.log.violation = (current.states.back() - problem.x_f).norm();
  result.log.gradient_norm = stationarity(current.gradient, dt);
  return result;
}

}  // namespace

TranscriptionProblem::TranscriptionProblem(Drift drift_in, Vec x0_in,
                                           Vec x_f_in, double t_f_in,
                                           TranscriptionSettings settings_in)
    : drift(std::move(drift_in)),
      x0(std::move(x0_in)),
      x_f(std::move(x_f_in)),
      t_f(t_f_in),
      settings(std::move(settings_in)) {
  if (!(t_f > 0.0) || !std::isfinite(t_f)) {
    throw InvalidArgumentError("horizon t_f must be positive and finite");
  }
  if (settings.intervals < 2) {
    throw InvalidArgumentError("transcription needs at least 2 intervals");
  }
  if (x0.size() != drift.dim() || x_f.size() != drift.dim()) {
    throw InvalidArgumentError("endpoint dimension does not match the drift");
  }
  const auto& rho = settings.penalty_schedule;
  if (rho.empty()) throw InvalidArgumentError("empty penalty schedule");
  for (std::size_t i = 0; i < rho.size(); ++i) {
    if (!(rho[i] > 0.0) || (i > 0 && !(rho[i] > rho[i - 1]))) {
      throw InvalidArgumentError(
          "penalty weights must be positive and strictly increasing");
    }
  }
}

std::vector<Vec> rollout(const TranscriptionProblem& problem,
                         const std::vector<Vec>& controls) {
  return forward(problem, controls, false).states;
}

double objective(const TranscriptionProblem& problem,
                 const std::vector<Vec>& controls, double rho) {
  const std::vector<Vec> states = rollout(problem, controls);
  return energy(controls, problem.dt()) +
         0.5 * rho * (states.back() - problem.x_f).squaredNorm();
}

ObjectiveValue evaluate(const TranscriptionProblem& problem,
                        const std::vector<Vec>& controls, double rho) {
  Rollout roll = forward(problem, controls, true);
  const double h = problem.dt();
  const int n = problem.settings.intervals;
  const Drift& f = problem.drift;

  ObjectiveValue out;
  const Vec miss = roll.states.back() - problem.x_f;
  out.value = energy(controls, h) + 0.5 * rho * miss.squaredNorm();
  out.gradient.resize(n);

  // Reverse sweep through
  //   k1 = f(y1) + u, y2 = x + h/2 k1, k2 = f(y2) + u, y3 = x + h/2 k2,
  //   k3 = f(y3) + u, y4 = x + h k3,   k4 = f(y4) + u,
  //   x+ = x + h/6 (k1 + 2 k2 + 2 k3 + k4).
  Vec lambda = rho * miss;
  for (int k = n - 1; k >= 0; --k) {
    const StepTape& tape = roll.tape[k];
    Vec a_k1 = (h / 6.0) * lambda;
    Vec a_k2 = (h / 3.0) * lambda;
    Vec a_k3 = (h / 3.0) * lambda;
    const Vec a_k4 = (h / 6.0) * lambda;
    Vec a_x = lambda;
    Vec a_u = a_k4;

    const Vec a_y4 = f.jacobian(tape.y4).transpose() * a_k4;
    a_x += a_y4;
    a_k3 += h * a_y4;

    const Vec a_y3 = f.jacobian(tape.y3).transpose() * a_k3;
    a_u += a_k3;
    a_x += a_y3;
    a_k2 += 0.5 * h * a_y3;

    const Vec a_y2 = f.jacobian(tape.y2).transpose() * a_k2;
    a_u += a_k2;
    a_x += a_y2;
    a_k1 += 0.5 * h * a_y2;

    a_x += f.jacobian(tape.y1).transpose() * a_k1;
    a_u += a_k1;

    out.gradient[k] = a_u + h * controls[k];
    lambda = std::move(a_x);
  }
  out.states = std::move(roll.states);
  return out;
}

std::vector<Vec> adjoint_gradient(const TranscriptionProblem& problem,
                                  const std::vector<Vec>& controls,
                                  double rho) {
  return evaluate(problem, controls, rho).gradient;
}

std::vector<Vec> ustar_initial_controls(const TranscriptionProblem& problem) {
  const int n = problem.settings.intervals;
  const double dt = problem.dt();
  const int per = std::max(
      1, static_cast<int>(std::ceil(dt / problem.settings.ustar_step - 1e-9)));
  const SteeringPolicy policy =
      feasible_policy(problem.drift, problem.x0, problem.x_f, problem.t_f);
  const Trajectory traj = integrate(problem.drift, policy, problem.x0,
                                    problem.x_f, problem.t_f, dt / per);
  std::vector<Vec> table(n);
  for (int k = 0; k < n; ++k) {
    Vec sum = 0.5 * (traj.controls[k * per] + traj.controls[(k + 1) * per]);
    for (int j = 1; j < per; ++j) sum += traj.controls[k * per + j];
    table[k] = sum / per;
  }
  return table;
}

TranscriptionSolution solve(const TranscriptionProblem& problem,
                            const std::vector<Vec>& init) {
  if (static_cast<int>(init.size()) != problem.settings.intervals) {
    throw InvalidArgumentError("initial control table has the wrong length");
  }
  for (const Vec& u : init) {
    if (u.size() != problem.drift.dim()) {
      throw InvalidArgumentError("initial control has the wrong dimension");
    }
  }
  TranscriptionSolution sol;
  sol.dt = problem.dt();
  std::vector<Vec> controls = init;
  bool last_converged = false;
  for (double rho : problem.settings.penalty_schedule) {
    StageResult stage = run_stage(problem, std::move(controls), rho);
    controls = std::move(stage.controls);
    last_converged = stage.log.converged;
    sol.stages.push_back(stage.log);
  }
  sol.controls = std::move(controls);
  sol.states = rollout(problem, sol.controls);
  sol.cost = energy(sol.controls, sol.dt);
  sol.violation = (sol.states.back() - problem.x_f).norm();
  sol.gradient_norm = sol.stages.back().gradient_norm;
  sol.converged =
      last_converged && sol.violation <= problem.settings.violation_tol;
  return sol;
}

TranscriptionSolution solve(const TranscriptionProblem& problem,
                            InitKind init) {
  if (init == InitKind::kZero) {
    return solve(problem,
                 std::vector<Vec>(problem.settings.intervals,
                                  Vec::Zero(problem.drift.dim())));
  }
  return solve(problem, ustar_initial_controls(problem));
}

NumericGroundCost ground_cost_numeric(const Drift& drift, const Vec& x0,
                                      const Vec& x_f, double t_f,
                                      const TranscriptionSettings& settings) {
  const TranscriptionProblem problem(drift, x0, x_f, t_f, settings);
  NumericGroundCost out;

  const SteeringPolicy policy = feasible_policy(drift, x0, x_f, t_f);
  const Trajectory incumbent = integrate(
      drift, policy, x0, x_f, t_f, std::min(settings.ustar_step, t_f));
  out.ustar_cost = policy_cost(incumbent);
  out.cost = out.ustar_cost;
  out.source = "ustar-incumbent";
  out.transcription_cost = std::numeric_limits<double>::infinity();

  const std::pair<InitKind, const char*> starts[] = {
      {InitKind::kZero, "zero-start"},
      {InitKind::kWarmFromUstar, "ustar-start"}};
  bool have_certificate = false;
  for (const auto& [kind, name] : starts) {
    TranscriptionSolution sol;
    try {
      sol = solve(problem, kind);
    } catch (const DivergenceError&) {
      continue;
    }
    if (sol.converged) {
      out.converged = true;
      out.transcription_cost = std::min(out.transcription_cost, sol.cost);
      if (sol.cost < out.cost) {
        out.cost = sol.cost;
        out.source = name;
        out.certificate = sol;
        have_certificate = true;
        continue;
      }
    }
    if (!have_certificate &&
        (out.certificate.controls.empty() ||
         sol.violation < out.certificate.violation)) {
      out.certificate = std::move(sol);
    }
  }
  return out;
}

NumericGroundCost ground_cost_numeric(const InertiaBody& body,
                                      const StateVec& x0, const StateVec& x_f,
                                      double t_f,
                                      const TranscriptionSettings& settings) {
  return ground_cost_numeric(Drift::Euler(body), Vec(x0), Vec(x_f), t_f,
                             settings);
}

}  // namespace gomt
