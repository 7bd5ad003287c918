#include "scenario.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <set>

#include "gomt/error.h"

namespace gomt::cli {
namespace {

using nlohmann::json;

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a table");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& item : obj.items()) {
    if (!ok.count(item.key())) {
      throw ConfigError(where + ": unknown key '" + item.key() + "'");
    }
  }
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) throw ConfigError(where + ": expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw ConfigError(where + ": must be finite");
  return x;
}

double positive(const json& v, const std::string& where) {
  const double x = number(v, where);
  if (!(x > 0.0)) throw ConfigError(where + ": must be positive");
  return x;
}

int count(const json& v, const std::string& where, int min) {
  if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
  const long long x = v.get<long long>();
  if (x < min || x > 100000000) {
    throw ConfigError(where + ": must be at least " + std::to_string(min));
  }
  return static_cast<int>(x);
}

std::string text(const json& v, const std::string& where) {
  if (!v.is_string()) throw ConfigError(where + ": expected a string");
  return v.get<std::string>();
}

Eigen::Vector3d vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) {
    throw ConfigError(where + ": expected an array of 3 numbers");
  }
  Eigen::Vector3d out;
  for (int i = 0; i < 3; ++i) {
    out[i] = number(v[i], where + "[" + std::to_string(i) + "]");
  }
  return out;
}

Eigen::Matrix3d mat3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) {
    throw ConfigError(where + ": expected a 3x3 array");
  }
  Eigen::Matrix3d out;
  for (int i = 0; i < 3; ++i) {
    out.row(i) = vec3(v[i], where + "[" + std::to_string(i) + "]");
  }
  return out;
}

PolicyKind policy(const json& v, const std::string& where) {
  try {
    return policy_kind_from_string(text(v, where));
  } catch (const InvalidArgumentError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

SampledSide parse_side(const json& obj, const std::string& where) {
  check_keys(obj, where,
             {"mean", "covariance", "count", "seed_offset", "axis"});
  SampledSide side;
  if (!obj.contains("mean")) throw ConfigError(where + ": missing 'mean'");
  side.gaussian.mean = vec3(obj["mean"], where + ".mean");
  if (obj.contains("covariance")) {
    const json& c = obj["covariance"];
    if (c.is_number()) {
      side.gaussian.covariance =
          Eigen::Matrix3d::Identity() * positive(c, where + ".covariance");
    } else {
      side.gaussian.covariance = mat3(c, where + ".covariance");
    }
  }
  if (obj.contains("count")) side.count = count(obj["count"], where + ".count", 1);
  if (obj.contains("seed_offset")) {
    side.seed_offset = count(obj["seed_offset"], where + ".seed_offset", 0);
  }
  if (obj.contains("axis")) {
    const int axis = count(obj["axis"], where + ".axis", 0);
    if (axis > 2) throw ConfigError(where + ".axis: must be 0, 1 or 2");
    side.axis = axis;
  }
  return side;
}

void parse_settings(const json& obj, Scenario::Cost& cost) {
  const std::string where = "ground_cost";
  check_keys(obj, where,
             {"kind", "intervals", "penalty_schedule", "gradient_tol",
              "max_iterations", "violation_tol", "step", "sandwich_tol",
              "threads"});
  TranscriptionSettings& s = cost.settings;
  if (obj.contains("kind")) {
    try {
      cost.kind = cost_kind_from_string(text(obj["kind"], where + ".kind"));
    } catch (const InvalidArgumentError& e) {
      throw ConfigError(where + ".kind: " + e.what());
    }
  }
  if (obj.contains("intervals")) {
    s.intervals = count(obj["intervals"], where + ".intervals", 2);
  }
  if (obj.contains("penalty_schedule")) {
    const json& p = obj["penalty_schedule"];
    if (!p.is_array() || p.empty()) {
      throw ConfigError(where + ".penalty_schedule: expected a nonempty array");
    }
    s.penalty_schedule.clear();
    for (const json& rho : p) {
      s.penalty_schedule.push_back(positive(rho, where + ".penalty_schedule"));
    }
    if (!std::is_sorted(s.penalty_schedule.begin(), s.penalty_schedule.end(),
                        std::less_equal<>())) {
      throw ConfigError(where +
                        ".penalty_schedule: must be strictly increasing");
    }
  }
  if (obj.contains("gradient_tol")) {
    s.gradient_tol = positive(obj["gradient_tol"], where + ".gradient_tol");
  }
  if (obj.contains("max_iterations")) {
    s.max_iterations =
        count(obj["max_iterations"], where + ".max_iterations", 1);
  }
  if (obj.contains("violation_tol")) {
    s.violation_tol = positive(obj["violation_tol"], where + ".violation_tol");
  }
  if (obj.contains("step")) {
    cost.step = positive(obj["step"], where + ".step");
    s.ustar_step = cost.step;
  }
  if (obj.contains("sandwich_tol")) {
    cost.sandwich_tol = number(obj["sandwich_tol"], where + ".sandwich_tol");
    if (cost.sandwich_tol < 0.0) {
      throw ConfigError(where + ".sandwich_tol: must be nonnegative");
    }
  }
  if (obj.contains("threads")) {
    cost.threads = count(obj["threads"], where + ".threads", 0);
  }
}

}  // namespace

std::string_view to_string(Task task) {
  switch (task) {
    case Task::kSteer:
      return "steer";
    case Task::kGroundCost:
      return "ground-cost";
    case Task::kTransport:
      return "transport";
    case Task::kEnsemble:
      return "ensemble";
  }
  return "unknown";
}

InertiaBody Scenario::body() const {
  if (!J) throw ConfigError("scenario has no body");
  return make_body(*J);
}

GroundCostSpec Scenario::cost_spec() const {
  GroundCostSpec spec;
  spec.kind = cost.kind;
  spec.t_f = t_f;
  if (J) spec.body = body();
  spec.settings = cost.settings;
  spec.sandwich_tol = cost.sandwich_tol;
  return spec;
}

Scenario parse_scenario(const json& doc) {
  check_keys(doc, "scenario",
             {"task", "body", "horizon", "endpoints", "steer", "ground_cost",
              "transport", "ensemble", "output"});
  Scenario sc;
  if (!doc.contains("task")) throw ConfigError("scenario: missing 'task'");
  const std::string task = text(doc["task"], "task");
  if (task == "steer") {
    sc.task = Task::kSteer;
  } else if (task == "ground-cost") {
    sc.task = Task::kGroundCost;
  } else if (task == "transport") {
    sc.task = Task::kTransport;
  } else if (task == "ensemble") {
    sc.task = Task::kEnsemble;
  } else {
    throw ConfigError("task: unknown task '" + task + "'");
  }

  if (doc.contains("body")) {
    check_keys(doc["body"], "body", {"J"});
    if (!doc["body"].contains("J")) throw ConfigError("body: missing 'J'");
    sc.J = vec3(doc["body"]["J"], "body.J");
    try {
      make_body(*sc.J);
    } catch (const InvalidInertiaError& e) {
      throw ConfigError(std::string("body.J: ") + e.what());
    }
  }
  if (!doc.contains("horizon")) throw ConfigError("scenario: missing 'horizon'");
  sc.t_f = positive(doc["horizon"], "horizon");

  if (!doc.contains("endpoints")) {
    throw ConfigError("scenario: missing 'endpoints'");
  }
  const json& ep = doc["endpoints"];
  check_keys(ep, "endpoints", {"fixed", "sampled"});
  if (ep.contains("fixed") == ep.contains("sampled")) {
    throw ConfigError("endpoints: give exactly one of 'fixed' or 'sampled'");
  }
  if (ep.contains("fixed")) {
    const json& f = ep["fixed"];
    check_keys(f, "endpoints.fixed", {"x0", "x_f"});
    if (!f.contains("x0") || !f.contains("x_f")) {
      throw ConfigError("endpoints.fixed: needs 'x0' and 'x_f'");
    }
    sc.x0 = vec3(f["x0"], "endpoints.fixed.x0");
    sc.x_f = vec3(f["x_f"], "endpoints.fixed.x_f");
  } else {
    const json& s = ep["sampled"];
    check_keys(s, "endpoints.sampled", {"source", "target", "seed", "frame"});
    if (!s.contains("source") || !s.contains("target")) {
      throw ConfigError("endpoints.sampled: needs 'source' and 'target'");
    }
    SampledEndpoints se;
    se.source = parse_side(s["source"], "endpoints.sampled.source");
    se.target = parse_side(s["target"], "endpoints.sampled.target");
    se.target.seed_offset =
        s["target"].contains("seed_offset") ? se.target.seed_offset : 1;
    if (s.contains("seed")) {
      if (!s["seed"].is_number_unsigned() && !s["seed"].is_number_integer()) {
        throw ConfigError("endpoints.sampled.seed: expected an integer");
      }
      se.seed = s["seed"].get<std::uint64_t>();
    }
    if (s.contains("frame")) {
      se.frame = text(s["frame"], "endpoints.sampled.frame");
      if (se.frame != "x" && se.frame != "omega") {
        throw ConfigError("endpoints.sampled.frame: must be 'x' or 'omega'");
      }
    }
    sc.sampled = se;
  }

  const bool fixed_task =
      sc.task == Task::kSteer || sc.task == Task::kGroundCost;
  if (fixed_task && !sc.x0) {
    throw ConfigError(std::string(to_string(sc.task)) +
                      " needs fixed endpoints");
  }
  if (!fixed_task && !sc.sampled) {
    throw ConfigError(std::string(to_string(sc.task)) +
                      " needs sampled endpoints");
  }

  const auto only_for = [&](const char* section,
                            std::initializer_list<Task> tasks) {
    if (doc.contains(section) &&
        std::find(tasks.begin(), tasks.end(), sc.task) == tasks.end()) {
      throw ConfigError(std::string(section) + ": not used by task '" +
                        std::string(to_string(sc.task)) + "'");
    }
  };
  only_for("steer", {Task::kSteer});
  only_for("ground_cost",
           {Task::kGroundCost, Task::kTransport, Task::kEnsemble});
  only_for("transport", {Task::kTransport, Task::kEnsemble});
  only_for("ensemble", {Task::kEnsemble});

  if (doc.contains("steer")) {
    const json& s = doc["steer"];
    check_keys(s, "steer", {"policy", "step", "guard_eps"});
    if (s.contains("policy")) sc.steer.policy = policy(s["policy"], "steer.policy");
    if (s.contains("step")) sc.steer.step = positive(s["step"], "steer.step");
    if (s.contains("guard_eps")) {
      sc.steer.guard_eps = number(s["guard_eps"], "steer.guard_eps");
      if (*sc.steer.guard_eps < 0.0) {
        throw ConfigError("steer.guard_eps: must be nonnegative");
      }
    }
  }
  if (doc.contains("ground_cost")) parse_settings(doc["ground_cost"], sc.cost);
  if (doc.contains("transport")) {
    const json& t = doc["transport"];
    check_keys(t, "transport",
               {"solver", "epsilon", "epsilon_schedule", "max_iter", "tol"});
    if (t.contains("solver")) {
      sc.transport.solver = text(t["solver"], "transport.solver");
      if (sc.transport.solver != "exact" && sc.transport.solver != "sinkhorn" &&
          sc.transport.solver != "both") {
        throw ConfigError(
            "transport.solver: must be 'exact', 'sinkhorn' or 'both'");
      }
    }
    if (t.contains("epsilon") && t.contains("epsilon_schedule")) {
      throw ConfigError(
          "transport: give at most one of 'epsilon' or 'epsilon_schedule'");
    }
    if (t.contains("epsilon")) {
      sc.transport.epsilon = positive(t["epsilon"], "transport.epsilon");
    }
    if (t.contains("epsilon_schedule")) {
      const json& e = t["epsilon_schedule"];
      if (!e.is_array() || e.empty()) {
        throw ConfigError("transport.epsilon_schedule: expected a nonempty array");
      }
      for (const json& x : e) {
        sc.transport.epsilon_schedule.push_back(
            positive(x, "transport.epsilon_schedule"));
      }
    }
    if (t.contains("max_iter")) {
      sc.transport.max_iter = count(t["max_iter"], "transport.max_iter", 1);
    }
    if (t.contains("tol")) sc.transport.tol = positive(t["tol"], "transport.tol");
  }
  if (doc.contains("ensemble")) {
    const json& e = doc["ensemble"];
    check_keys(e, "ensemble", {"policy", "step"});
    if (e.contains("policy")) {
      sc.ensemble.policy = policy(e["policy"], "ensemble.policy");
      if (sc.ensemble.policy == PolicyKind::kOpenLoop) {
        throw ConfigError("ensemble.policy: needs a feedback policy");
      }
    }
    if (e.contains("step")) sc.ensemble.step = positive(e["step"], "ensemble.step");
  }
  if (doc.contains("output")) {
    check_keys(doc["output"], "output", {"dir"});
    if (doc["output"].contains("dir")) {
      sc.output_dir = text(doc["output"]["dir"], "output.dir");
    }
  }

  const bool needs_body =
      sc.task == Task::kSteer || sc.task == Task::kGroundCost ||
      sc.task == Task::kEnsemble ||
      sc.cost.kind == CostKind::kEulerNumeric ||
      sc.cost.kind == CostKind::kEulerBounded ||
      (sc.sampled && sc.sampled->frame == "omega");
  if (needs_body && !sc.J) throw ConfigError("scenario: missing 'body'");
  return sc;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, /*ignore_comments=*/true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_scenario(doc);
}

}  // namespace gomt::cli
