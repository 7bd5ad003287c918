// Scenario runner: gomt run <scenario.json> [--seed N] [--out DIR]
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "gomt/error.h"
#include "gomt/ground_cost.h"
#include "gomt/steering.h"
#include "gomt/trajopt.h"
#include "gomt/transport.h"
#include "scenario.h"

namespace gomt::cli {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

enum ExitCode {
  kOk = 0,
  kFailure = 1,
  kConfig = 2,
  kDivergence = 3,
  kMarginal = 4,
};

struct RunContext {
  Scenario scenario;
  fs::path out;
  bool quiet = false;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json vec_json(const Vec& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
  return out;
}

// Non-finite numbers are not valid JSON.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::string timestamp() {
  const std::time_t now = std::time(nullptr);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << content;
}

void write_json(const RunContext& ctx, const std::string& name, json body) {
  body["metadata"] = {{"generated_at", timestamp()},
                      {"task", to_string(ctx.scenario.task)}};
  write_file(ctx.out / name, body.dump(2) + "\n");
}

void announce(const RunContext& ctx, const std::string& line) {
  if (!ctx.quiet) std::cout << line << '\n';
}

void write_trajectory_csv(const Trajectory& traj, const fs::path& path) {
  std::ostringstream out;
  out << "t,x1,x2,x3,u1,u2,u3,znorm,cost\n";
  char buf[512];
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const Vec& x = traj.states[k];
    const Vec& u = traj.controls[k];
    std::snprintf(buf, sizeof buf,
                  "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                  traj.times[k], x[0], x[1], x[2], u[0], u[1], u[2],
                  (x - traj.x_f).norm(), traj.running_cost[k]);
    out << buf;
  }
  write_file(path, out.str());
}

int run_steer(const RunContext& ctx) {
  const Scenario& sc = ctx.scenario;
  const InertiaBody body = sc.body();
  const Drift drift = Drift::Euler(body);
  const Vec x0 = *sc.x0;
  const Vec x_f = *sc.x_f;
  double step = sc.steer.step;

  json summary;
  std::optional<double> predicted;
  SteeringPolicy policy = [&] {
    switch (sc.steer.policy) {
      case PolicyKind::kNormInvUstarstar:
        if (is_translated_norm_invariant(drift, x_f)) {
          predicted = cost_norminv(x0, x_f, sc.t_f);
        }
        return norminv_policy(drift, x0, x_f, sc.t_f, sc.steer.guard_eps);
      case PolicyKind::kTwoPhase:
        predicted = cost_upper_bound(x0, x_f, sc.t_f);
        return two_phase_policy(drift, x0, x_f, sc.t_f, step);
      case PolicyKind::kOpenLoop: {
        const TranscriptionSettings& settings = sc.cost.settings;
        const TranscriptionSolution sol = solve(
            TranscriptionProblem(drift, x0, x_f, sc.t_f, settings),
            InitKind::kWarmFromUstar);
        ControlTable table;
        for (int k = 0; k <= settings.intervals; ++k) {
          table.times.push_back(k * sol.dt);
        }
        table.controls = sol.controls;
        // Integrator steps must not straddle control intervals.
        step = sol.dt / std::ceil(sol.dt / step - 1e-9);
        summary["transcription"] = {{"cost", sol.cost},
                                    {"violation", sol.violation},
                                    {"converged", sol.converged}};
        return open_loop_policy(std::move(table), sc.t_f);
      }
      default:
        return feasible_policy(drift, x0, x_f, sc.t_f, sc.steer.guard_eps);
    }
  }();

  const auto t0 = std::chrono::steady_clock::now();
  const Trajectory traj = integrate(drift, policy, x0, x_f, sc.t_f, step);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_trajectory_csv(traj, ctx.out / "trajectory.csv");

  summary["policy"] = to_string(sc.steer.policy);
  summary["body"] = vec_json(body.moments());
  summary["x0"] = vec_json(x0);
  summary["x_f"] = vec_json(x_f);
  summary["horizon"] = sc.t_f;
  summary["step"] = traj.times[1] - traj.times[0];
  summary["nodes"] = traj.size();
  summary["terminal_error"] = traj.terminal_error();
  summary["total_cost"] = policy_cost(traj);
  summary["predicted_cost"] = predicted ? json(*predicted) : json(nullptr);
  summary["guard_eps"] = policy.terminal_guard_eps();
  summary["norm_law_deviation"] = norm_law_deviation(traj);
  summary["upper_bound"] = cost_upper_bound(x0, x_f, sc.t_f);
  summary["integration_seconds"] = seconds;
  write_json(ctx, "summary.json", summary);
  announce(ctx, "steer: terminal error " + fmt(traj.terminal_error()) +
                    ", cost " + fmt(policy_cost(traj)));
  return kOk;
}

int run_ground_cost(const RunContext& ctx) {
  const Scenario& sc = ctx.scenario;
  const GroundCostReport r =
      ground_cost_report(sc.body(), *sc.x0, *sc.x_f, sc.t_f, sc.cost.step,
                         sc.cost.settings, sc.cost.sandwich_tol);
  json out;
  out["body"] = vec_json(*sc.J);
  out["x0"] = vec_json(*sc.x0);
  out["x_f"] = vec_json(*sc.x_f);
  out["horizon"] = sc.t_f;
  out["classical"] = r.classical;
  out["norm_invariant"] = r.norm_invariant ? json(*r.norm_invariant) : json(nullptr);
  out["upper_bound"] = r.upper;
  out["lower_bound_on_ustar"] = r.lower_on_ustar;
  out["ustar_cost"] = r.ustar_cost;
  out["two_phase_cost"] = r.two_phase_cost;
  out["numeric"] = {
      {"cost", r.numeric.cost},
      {"converged", r.numeric.converged},
      {"source", r.numeric.source},
      {"transcription_cost", num(r.numeric.transcription_cost)},
      {"violation", r.numeric.certificate.violation},
      {"intervals", sc.cost.settings.intervals}};
  out["verdict"] = r.verdict;
  write_json(ctx, "ground_cost.json", out);
  announce(ctx, "ground-cost: numeric " + fmt(r.numeric.cost) + " (" +
                    r.verdict + "), upper bound " + fmt(r.upper));
  return kOk;
}

DiscreteMeasure sample_side(const Scenario& sc, const SampledSide& side) {
  DiscreteMeasure m = sample_gaussian(side.gaussian, side.count,
                                      sc.sampled->seed + side.seed_offset);
  if (side.axis) {
    std::vector<Vec> pts = m.support();
    for (Vec& p : pts) {
      const double keep = p[*side.axis];
      p.setZero();
      p[*side.axis] = keep;
    }
    m = DiscreteMeasure(std::move(pts), m.weights());
  }
  if (sc.sampled->frame == "omega") m = pushforward_inertia(m, sc.body());
  return m;
}

struct TransportRun {
  DiscreteMeasure source;
  DiscreteMeasure target;
  CostMatrix cost;
  Coupling coupling;
  json summary;
};

std::string csv(const std::function<void(std::ostream&)>& writer) {
  std::ostringstream out;
  writer(out);
  return out.str();
}

TransportRun solve_transport(const RunContext& ctx) {
  const Scenario& sc = ctx.scenario;
  TransportRun run;
  run.source = sample_side(sc, sc.sampled->source);
  run.target = sample_side(sc, sc.sampled->target);
  GroundCostCache cache;
  run.cost = cost_matrix(sc.cost_spec(), run.source.support(),
                         run.target.support(), &cache, sc.cost.threads);
  const Mat& C = run.cost.values;

  json& s = run.summary;
  s["ground_cost"] = to_string(sc.cost.kind);
  s["horizon"] = sc.t_f;
  s["source_count"] = run.source.size();
  s["target_count"] = run.target.size();
  s["seed"] = sc.sampled->seed;
  json flagged = json::array();
  for (const auto& [i, j] : run.cost.flagged) flagged.push_back({i, j});
  s["flagged_entries"] = flagged;

  const auto sinkhorn_at = [&](double eps) {
    SinkhornOptions opt;
    opt.epsilon = eps;
    opt.max_iter = sc.transport.max_iter;
    opt.tol = sc.transport.tol;
    return solve_sinkhorn(C, run.source, run.target, opt);
  };
  std::vector<double> schedule;
  const double med = median(C);
  if (sc.transport.epsilon) {
    schedule.push_back(*sc.transport.epsilon);
  } else if (!sc.transport.epsilon_schedule.empty()) {
    for (double f : sc.transport.epsilon_schedule) schedule.push_back(f * med);
  } else {
    schedule.push_back(0.05 * med);
  }

  std::optional<Coupling> exact;
  if (sc.transport.solver != "sinkhorn") {
    exact = solve_exact(C, run.source, run.target);
  }
  json entropic = json::array();
  std::optional<Coupling> floor;
  if (sc.transport.solver != "exact") {
    for (double eps : schedule) {
      Coupling c = sinkhorn_at(eps);
      json e = {{"epsilon", eps},
                {"cost", c.cost},
                {"col_residual", c.col_residual},
                {"iterations", c.iterations},
                {"newton_steps", c.newton_steps},
                {"converged", c.converged},
                {"solver", c.solver}};
      if (exact) {
        e["relative_gap"] = exact->cost > 0.0
                                ? (c.cost - exact->cost) / exact->cost
                                : c.cost;
      }
      entropic.push_back(e);
      floor = std::move(c);
    }
    s["sinkhorn"] = entropic;
  }
  run.coupling = exact ? *exact : *floor;

  const Coupling& c = run.coupling;
  s["transport_cost"] = c.cost;
  s["row_residual"] = c.row_residual;
  s["col_residual"] = c.col_residual;
  s["solver"] = c.solver;
  s["epsilon"] = c.epsilon ? json(*c.epsilon) : json(nullptr);
  s["converged"] = c.converged;

  const Coupling product = product_coupling(C, run.source, run.target);
  const double bound =
      (second_moment(run.source) + second_moment(run.target)) / sc.t_f;
  s["well_posedness"] = {{"product_cost", product.cost},
                         {"second_moment_bound", bound},
                         {"finite", std::isfinite(product.cost)}};
  s["source_second_moment"] = second_moment(run.source);
  s["target_second_moment"] = second_moment(run.target);

  write_file(ctx.out / "source.csv",
             csv([&](std::ostream& o) { write_measure_csv(run.source, o); }));
  write_file(ctx.out / "target.csv",
             csv([&](std::ostream& o) { write_measure_csv(run.target, o); }));
  write_file(ctx.out / "cost_matrix.csv",
             csv([&](std::ostream& o) { write_cost_matrix_csv(run.cost, o); }));
  write_file(ctx.out / "coupling.csv",
             csv([&](std::ostream& o) { write_coupling_csv(c, C, o); }));
  return run;
}

int run_transport(const RunContext& ctx) {
  TransportRun run = solve_transport(ctx);
  write_json(ctx, "summary.json", run.summary);
  announce(ctx, "transport: cost " + fmt(run.coupling.cost) + " via " +
                    run.coupling.solver);
  return kOk;
}

Vec mean_of(const DiscreteMeasure& m) {
  Vec mean = Vec::Zero(3);
  for (int k = 0; k < m.size(); ++k) mean += m.weights()[k] * m.support()[k];
  return mean;
}

int run_ensemble(const RunContext& ctx) {
  const Scenario& sc = ctx.scenario;
  TransportRun run = solve_transport(ctx);
  EnsembleOptions opt;
  opt.policy = sc.ensemble.policy;
  opt.step = sc.ensemble.step;
  opt.continue_on_divergence = true;
  opt.threads = sc.cost.threads;
  const EnsembleResult r = ensemble_steer(run.coupling, sc.cost_spec(), opt);
  if (r.terminal.size() > 0) {
    write_file(ctx.out / "terminal.csv",
               csv([&](std::ostream& o) { write_measure_csv(r.terminal, o); }));
  }
  json& s = run.summary;
  const double transport = run.coupling.cost;
  s["ensemble"] = {
      {"policy", to_string(sc.ensemble.policy)},
      {"step", sc.ensemble.step},
      {"steered_pairs", r.pairs.size()},
      {"realized_cost", r.total_cost},
      {"transport_cost", transport},
      {"cost_ratio", transport > 0.0 ? json(r.total_cost / transport)
                                     : json(nullptr)},
      {"max_terminal_error", r.max_terminal_error},
      {"terminal_second_moment",
       r.terminal.size() > 0 ? json(second_moment(r.terminal)) : json(nullptr)},
      {"target_second_moment", second_moment(run.target)},
      {"terminal_mean",
       r.terminal.size() > 0 ? vec_json(mean_of(r.terminal)) : json(nullptr)},
      {"target_mean", vec_json(mean_of(run.target))},
      {"failures", r.failures}};
  write_json(ctx, "summary.json", s);
  announce(ctx, "ensemble: realized " + fmt(r.total_cost) + " vs transport " +
                    fmt(transport));
  return kOk;
}

int run(const fs::path& scenario_path, std::optional<std::uint64_t> seed,
        std::optional<std::string> out_dir, bool quiet) {
  RunContext ctx;
  ctx.scenario = load_scenario(scenario_path);
  ctx.quiet = quiet;
  if (seed) {
    if (!ctx.scenario.sampled) {
      throw ConfigError("--seed given but the scenario has no sampled endpoints");
    }
    ctx.scenario.sampled->seed = *seed;
  }
  if (out_dir) {
    ctx.out = *out_dir;
  } else if (const char* env = std::getenv("GOMT_OUTPUT_DIR"); env && *env) {
    ctx.out = env;
  } else {
    ctx.out = ctx.scenario.output_dir;
  }
  fs::create_directories(ctx.out);
  switch (ctx.scenario.task) {
    case Task::kSteer:
      return run_steer(ctx);
    case Task::kGroundCost:
      return run_ground_cost(ctx);
    case Task::kTransport:
      return run_transport(ctx);
    case Task::kEnsemble:
      return run_ensemble(ctx);
  }
  return kFailure;
}

}  // namespace
}  // namespace gomt::cli

int main(int argc, char** argv) {
  using namespace gomt;
  CLI::App app{"Ground costs, steering and couplings for rigid-body mass "
               "transport"};
  app.require_subcommand(1);

  std::string scenario;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  bool quiet = false;
  CLI::App* run = app.add_subcommand("run", "Run a scenario file");
  run->add_option("scenario", scenario, "Scenario JSON file")->required();
  run->add_option("--seed", seed, "Override the sampling seed");
  run->add_option("--out", out,
                  "Output directory (overrides GOMT_OUTPUT_DIR and the "
                  "scenario)");
  run->add_flag("-q,--quiet", quiet, "No progress output");

  std::string check_path;
  CLI::App* check = app.add_subcommand("check", "Validate a scenario file");
  check->add_option("scenario", check_path, "Scenario JSON file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*check) {
      cli::load_scenario(check_path);
      std::cout << check_path << ": ok\n";
      return cli::kOk;
    }
    return cli::run(scenario, seed, out, quiet);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return cli::kConfig;
  } catch (const DivergenceError& e) {
    std::cerr << "divergence at t=" << e.time() << ": " << e.what() << '\n';
    return cli::kDivergence;
  } catch (const MarginalMismatchError& e) {
    std::cerr << "marginal mismatch: " << e.what() << '\n';
    return cli::kMarginal;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return cli::kFailure;
  }
}
