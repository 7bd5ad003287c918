#ifndef GOMT_GROUND_COST_H_
#define GOMT_GROUND_COST_H_

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "gomt/rigid_body.h"
#include "gomt/steering.h"
#include "gomt/trajopt.h"

namespace gomt {

// Closed forms. All take x0, x_f of equal dimension and t_f > 0 and throw
// InvalidArgumentError otherwise.

// |x0 - x_f|^2 / (2 t_f).
double cost_classical(const Vec& x0, const Vec& x_f, double t_f);
// Same value as cost_classical; named separately so that callers record the
// dynamical setting (translated norm-invariant drift).
double cost_norminv(const Vec& x0, const Vec& x_f, double t_f);
// (|x0|^2 + |x_f|^2) / t_f, the cost of the two-phase construction.
double cost_upper_bound(const Vec& x0, const Vec& x_f, double t_f);

// (1/2t_f) max(0, |z0| - t_f |b| - int |A z(t)| dt)^2 with the integral
// taken by the trapezoidal rule over `trajectory`. The value bounds the
// cost of that trajectory, not the optimum over all controls.
double cost_lower_bound(const StateVec& x0, const StateVec& x_f, double t_f,
                        const AffinePair& pair, const Trajectory& trajectory);

enum class CostKind { kClassical, kNormInvariant, kEulerNumeric, kEulerBounded };

std::string_view to_string(CostKind kind);
CostKind cost_kind_from_string(std::string_view name);

struct GroundCostSpec {
  CostKind kind = CostKind::kClassical;
  double t_f = 1.0;
  std::optional<InertiaBody> body;
  // Overrides the Euler drift of `body` for the numeric kind.
  std::optional<Drift> drift;
  TranscriptionSettings settings;
  // Slack on both sides of the bound sandwich.
  double sandwich_tol = 1e-3;

  // Throws InvalidArgumentError on t_f <= 0 or a euler kind without body
  // or drift.
  void validate() const;
  // Drift used for steering and numeric solves: `drift`, else the Euler
  // drift of `body`, else the zero field on R^3.
  Drift dynamics() const;
};

struct CostEntry {
  double value = 0.0;
  bool converged = true;
  double upper = 0.0;
  // Set when a certified lower bound applies (translated norm-invariant
  // drift at x_f, where the radial law is optimal).
  std::optional<double> lower;
  bool sandwich_ok = true;
  std::string source;
};

// Thread-safe memo for numeric entries keyed on the exact bits of
// (x0, x_f, t_f, drift identity, settings).
class GroundCostCache {
 public:
  std::optional<CostEntry> find(const std::string& key) const;
  void insert(const std::string& key, const CostEntry& entry);
  std::size_t size() const;

  static std::string key(const GroundCostSpec& spec, const Vec& x0,
                         const Vec& x_f);

 private:
  mutable std::shared_mutex mutex_;
  std::unordered_map<std::string, CostEntry> entries_;
};

// Single-pair evaluation according to the spec.
CostEntry ground_cost(const GroundCostSpec& spec, const Vec& x0,
                      const Vec& x_f, GroundCostCache* cache = nullptr);

struct CostMatrix {
  Mat values;
  GroundCostSpec spec;
  // Entries that did not converge or left the bound sandwich.
  std::vector<std::pair<int, int>> flagged;

  int rows() const { return static_cast<int>(values.rows()); }
  int cols() const { return static_cast<int>(values.cols()); }
};

// Entries are computed independently on up to `threads` workers
// (0 = hardware concurrency). Non-convergence is recorded in `flagged`.
CostMatrix cost_matrix(const GroundCostSpec& spec,
                       const std::vector<Vec>& sources,
                       const std::vector<Vec>& targets,
                       GroundCostCache* cache = nullptr, int threads = 0);

// Line 1 "m,n,kind,t_f", line 2 their values, then one row per source.
void write_cost_matrix_csv(const CostMatrix& matrix, std::ostream& out);

// Full diagnostic for one endpoint pair under a body's Euler drift.
struct GroundCostReport {
  double classical = 0.0;
  std::optional<double> norm_invariant;
  double upper = 0.0;
  // Trajectory lower bound evaluated on the u* closed loop.
  double lower_on_ustar = 0.0;
  double ustar_cost = 0.0;
  double two_phase_cost = 0.0;
  NumericGroundCost numeric;
  // "equality-certified", "sandwiched" or "violated".
  std::string verdict;
};

GroundCostReport ground_cost_report(const InertiaBody& body,
                                    const StateVec& x0, const StateVec& x_f,
                                    double t_f, double step,
                                    const TranscriptionSettings& settings = {},
                                    double sandwich_tol = 1e-3);

}  // namespace gomt

#endif  // GOMT_GROUND_COST_H_
