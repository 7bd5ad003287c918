#include "gomt/ground_cost.h"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <mutex>
#include <ostream>
#include <thread>

#include "gomt/error.h"

namespace gomt {
namespace {

void check_pair(const Vec& x0, const Vec& x_f, double t_f) {
  if (!(t_f > 0.0) || !std::isfinite(t_f)) {
    throw InvalidArgumentError("horizon t_f must be positive and finite");
  }
  if (x0.size() != x_f.size()) {
    throw InvalidArgumentError("endpoint dimensions differ");
  }
}

void append_bits(std::string& key, const void* data, std::size_t bytes) {
  key.append(static_cast<const char*>(data), bytes);
}

void append_vec(std::string& key, const Vec& v) {
  const Eigen::Index n = v.size();
  append_bits(key, &n, sizeof n);
  append_bits(key, v.data(), sizeof(double) * n);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

double cost_classical(const Vec& x0, const Vec& x_f, double t_f) {
  check_pair(x0, x_f, t_f);
  return (x0 - x_f).squaredNorm() / (2.0 * t_f);
}

double cost_norminv(const Vec& x0, const Vec& x_f, double t_f) {
  return cost_classical(x0, x_f, t_f);
}

double cost_upper_bound(const Vec& x0, const Vec& x_f, double t_f) {
  check_pair(x0, x_f, t_f);
  return (x0.squaredNorm() + x_f.squaredNorm()) / t_f;
}

double cost_lower_bound(const StateVec& x0, const StateVec& x_f, double t_f,
                        const AffinePair& pair, const Trajectory& trajectory) {
  check_pair(x0, x_f, t_f);
  double integral = 0.0;
  for (std::size_t i = 1; i < trajectory.size(); ++i) {
    const StateVec za = StateVec(trajectory.states[i - 1]) - x_f;
    const StateVec zb = StateVec(trajectory.states[i]) - x_f;
    integral += 0.5 * (trajectory.times[i] - trajectory.times[i - 1]) *
                ((pair.A * za).norm() + (pair.A * zb).norm());
  }
  const double inner = (x0 - x_f).norm() - t_f * pair.b.norm() - integral;
  if (inner <= 0.0) return 0.0;
  return inner * inner / (2.0 * t_f);
}

std::string_view to_string(CostKind kind) {
  switch (kind) {
    case CostKind::kClassical:
      return "classical";
    case CostKind::kNormInvariant:
      return "norm-invariant";
    case CostKind::kEulerNumeric:
      return "euler-numeric";
    case CostKind::kEulerBounded:
      return "euler-bounded";
  }
  return "unknown";
}

CostKind cost_kind_from_string(std::string_view name) {
  for (CostKind k : {CostKind::kClassical, CostKind::kNormInvariant,
                     CostKind::kEulerNumeric, CostKind::kEulerBounded}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgumentError("unknown ground cost kind '" + std::string(name) +
                             "'");
}

void GroundCostSpec::validate() const {
  if (!(t_f > 0.0) || !std::isfinite(t_f)) {
    throw InvalidArgumentError("horizon t_f must be positive and finite");
  }
  const bool euler =
      kind == CostKind::kEulerNumeric || kind == CostKind::kEulerBounded;
  if (euler && !body && !drift) {
    throw InvalidArgumentError(std::string(to_string(kind)) +
                               " ground cost needs a body or a drift");
  }
  if (!(sandwich_tol >= 0.0)) {
    throw InvalidArgumentError("sandwich tolerance must be nonnegative");
  }
}

Drift GroundCostSpec::dynamics() const {
  if (drift) return *drift;
  if (body) return Drift::Euler(*body);
  return Drift::Zero(3);
}

std::optional<CostEntry> GroundCostCache::find(const std::string& key) const {
  std::shared_lock lock(mutex_);
  const auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void GroundCostCache::insert(const std::string& key, const CostEntry& entry) {
  std::unique_lock lock(mutex_);
  entries_.emplace(key, entry);
}

std::size_t GroundCostCache::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

std::string GroundCostCache::key(const GroundCostSpec& spec, const Vec& x0,
                                 const Vec& x_f) {
  std::string key(to_string(spec.kind));
  key.push_back('\0');
  append_vec(key, x0);
  append_vec(key, x_f);
  append_bits(key, &spec.t_f, sizeof spec.t_f);
  if (spec.drift) {
    // Custom drifts are identified by name.
    key += spec.drift->name();
    key.push_back('\0');
  } else if (spec.body) {
    const Eigen::Vector3d& J = spec.body->moments();
    append_bits(key, J.data(), 3 * sizeof(double));
  }
  const TranscriptionSettings& s = spec.settings;
  append_bits(key, &s.intervals, sizeof s.intervals);
  for (double rho : s.penalty_schedule) append_bits(key, &rho, sizeof rho);
  for (double v : {s.gradient_tol, s.violation_tol, s.armijo_c,
                   s.armijo_shrink, s.ustar_step, spec.sandwich_tol}) {
    append_bits(key, &v, sizeof v);
  }
  append_bits(key, &s.max_iterations, sizeof s.max_iterations);
  append_bits(key, &s.memory, sizeof s.memory);
  return key;
}

CostEntry ground_cost(const GroundCostSpec& spec, const Vec& x0,
                      const Vec& x_f, GroundCostCache* cache) {
  spec.validate();
  check_pair(x0, x_f, spec.t_f);
  CostEntry entry;
  entry.upper = cost_upper_bound(x0, x_f, spec.t_f);
  switch (spec.kind) {
    case CostKind::kClassical:
      entry.value = cost_classical(x0, x_f, spec.t_f);
      entry.source = "closed-form";
      return entry;
    case CostKind::kNormInvariant:
      entry.value = cost_norminv(x0, x_f, spec.t_f);
      entry.source = "closed-form";
      return entry;
    case CostKind::kEulerBounded:
      entry.value = entry.upper;
      entry.source = "two-phase-bound";
      return entry;
    case CostKind::kEulerNumeric:
      break;
  }

  std::string key;
  if (cache) {
    key = GroundCostCache::key(spec, x0, x_f);
    if (auto hit = cache->find(key)) return *hit;
  }
  const Drift drift = spec.dynamics();
  const NumericGroundCost numeric =
      ground_cost_numeric(drift, x0, x_f, spec.t_f, spec.settings);
  entry.value = numeric.cost;
  entry.converged = numeric.converged;
  entry.source = numeric.source;
  if (is_translated_norm_invariant(drift, x_f)) {
    entry.lower = cost_norminv(x0, x_f, spec.t_f);
  }
  const double lo = entry.lower.value_or(0.0);
  entry.sandwich_ok = entry.value >= lo * (1.0 - 1e-2) - spec.sandwich_tol &&
                      entry.value <= entry.upper + spec.sandwich_tol;
  if (cache) cache->insert(key, entry);
  return entry;
}

CostMatrix cost_matrix(const GroundCostSpec& spec,
                       const std::vector<Vec>& sources,
                       const std::vector<Vec>& targets, GroundCostCache* cache,
                       int threads) {
  spec.validate();
  if (sources.empty() || targets.empty()) {
    throw InvalidArgumentError("cost matrix needs nonempty supports");
  }
  const int m = static_cast<int>(sources.size());
  const int n = static_cast<int>(targets.size());
  CostMatrix out;
  out.spec = spec;
  out.values.resize(m, n);
  std::vector<CostEntry> entries(static_cast<std::size_t>(m) * n);

  if (threads <= 0) {
    threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  }
  const bool closed_form = spec.kind != CostKind::kEulerNumeric;
  threads = closed_form ? 1 : std::min(threads, m * n);

  std::atomic<int> next{0};
  std::mutex error_mutex;
  std::exception_ptr error;
  auto worker = [&] {
    for (int idx = next++; idx < m * n; idx = next++) {
      try {
        entries[idx] = ground_cost(spec, sources[idx / n], targets[idx % n],
                                   cache);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);

  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < n; ++j) {
      const CostEntry& e = entries[static_cast<std::size_t>(i) * n + j];
      out.values(i, j) = e.value;
      if (!e.converged || !e.sandwich_ok) out.flagged.emplace_back(i, j);
    }
  }
  return out;
}

void write_cost_matrix_csv(const CostMatrix& matrix, std::ostream& out) {
  out << "m,n,kind,t_f\n";
  out << matrix.rows() << ',' << matrix.cols() << ','
      << to_string(matrix.spec.kind) << ',' << fmt(matrix.spec.t_f) << '\n';
  for (int i = 0; i < matrix.rows(); ++i) {
    for (int j = 0; j < matrix.cols(); ++j) {
      if (j) out << ',';
      out << fmt(matrix.values(i, j));
    }
    out << '\n';
  }
}

GroundCostReport ground_cost_report(const InertiaBody& body,
                                    const StateVec& x0, const StateVec& x_f,
                                    double t_f, double step,
                                    const TranscriptionSettings& settings,
                                    double sandwich_tol) {
  check_pair(x0, x_f, t_f);
  const Drift drift = Drift::Euler(body);
  GroundCostReport r;
  r.classical = cost_classical(x0, x_f, t_f);
  r.upper = cost_upper_bound(x0, x_f, t_f);
  const bool invariant = is_translated_norm_invariant(drift, Vec(x_f));
  if (invariant) r.norm_invariant = cost_norminv(x0, x_f, t_f);

  const Trajectory ustar_traj =
      integrate(body, feasible_policy(drift, x0, x_f, t_f), x0, x_f, t_f,
                step);
  r.ustar_cost = policy_cost(ustar_traj);
  r.lower_on_ustar =
      cost_lower_bound(x0, x_f, t_f, affine_pair(body, x_f), ustar_traj);
  r.two_phase_cost = policy_cost(integrate(
      body, two_phase_policy(drift, x0, x_f, t_f, step), x0, x_f, t_f, step));

  r.numeric = ground_cost_numeric(drift, x0, x_f, t_f, settings);
  const double v = r.numeric.cost;
  const double lo = r.norm_invariant.value_or(0.0);
  if (v > r.upper + sandwich_tol || v < lo * (1.0 - 1e-2) - sandwich_tol) {
    r.verdict = "violated";
  } else if (r.norm_invariant &&
             std::abs(v - lo) <= 1e-2 * lo + 1e-12) {
    r.verdict = "equality-certified";
  } else {
    r.verdict = "sandwiched";
  }
  return r;
}

}  // namespace gomt
