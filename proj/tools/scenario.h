#ifndef GOMT_TOOLS_SCENARIO_H_
#define GOMT_TOOLS_SCENARIO_H_

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <json.hpp>

#include "gomt/ground_cost.h"
#include "gomt/steering.h"
#include "gomt/transport.h"
#include "gomt/trajopt.h"

namespace gomt::cli {

enum class Task { kSteer, kGroundCost, kTransport, kEnsemble };

struct SampledSide {
  GaussianSpec gaussian;
  int count = 100;
  std::uint64_t seed_offset = 0;
  // Project every draw onto this coordinate axis (0, 1 or 2).
  std::optional<int> axis;
};

struct SampledEndpoints {
  SampledSide source;
  SampledSide target;
  std::uint64_t seed = 0;
  // "x": samples are angular momenta; "omega": angular velocities pushed
  // forward through J.
  std::string frame = "x";
};

struct Scenario {
  Task task = Task::kSteer;
  std::optional<Eigen::Vector3d> J;
  double t_f = 1.0;

  std::optional<Eigen::Vector3d> x0;
  std::optional<Eigen::Vector3d> x_f;
  std::optional<SampledEndpoints> sampled;

  struct Steer {
    PolicyKind policy = PolicyKind::kFeasibleUstar;
    double step = 1e-3;
    std::optional<double> guard_eps;
  } steer;

  struct Cost {
    CostKind kind = CostKind::kEulerNumeric;
    TranscriptionSettings settings;
    double step = 1e-3;
    double sandwich_tol = 1e-3;
    int threads = 0;
  } cost;

  struct Transport {
    // "exact", "sinkhorn" or "both".
    std::string solver = "exact";
    std::optional<double> epsilon;
    // Multiples of median(cost), largest first; the last is the floor.
    std::vector<double> epsilon_schedule;
    int max_iter = 10000;
    double tol = 1e-9;
  } transport;

  struct Ensemble {
    PolicyKind policy = PolicyKind::kFeasibleUstar;
    double step = 1e-3;
  } ensemble;

  std::string output_dir = "out";

  InertiaBody body() const;
  GroundCostSpec cost_spec() const;
};

std::string_view to_string(Task task);

// Throws ConfigError on unknown keys, type errors, missing or conflicting
// fields.
Scenario parse_scenario(const nlohmann::json& doc);
Scenario load_scenario(const std::filesystem::path& path);

}  // namespace gomt::cli

#endif  // GOMT_TOOLS_SCENARIO_H_
