#ifndef GOMT_TRANSPORT_H_
#define GOMT_TRANSPORT_H_

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "gomt/ground_cost.h"
#include "gomt/rigid_body.h"
#include "gomt/steering.h"

namespace gomt {

// Weighted point cloud. Weights are nonnegative and sum to one within 1e-12.
class DiscreteMeasure {
 public:
  DiscreteMeasure() = default;
  // Throws InvalidArgumentError when the invariants fail.
  DiscreteMeasure(std::vector<Vec> support, std::vector<double> weights);
  static DiscreteMeasure uniform(std::vector<Vec> support);

  const std::vector<Vec>& support() const { return support_; }
  const std::vector<double>& weights() const { return weights_; }
  int size() const { return static_cast<int>(support_.size()); }
  Vec weight_vector() const;

 private:
  std::vector<Vec> support_;
  std::vector<double> weights_;
};

struct GaussianSpec {
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d covariance = Eigen::Matrix3d::Identity();
};

// n equal-weight draws mean + L g with L the Cholesky factor of the
// covariance and g from a mt19937_64 seeded with `seed`. Throws
// InvalidArgumentError for n < 1 or a covariance that is not SPD.
DiscreteMeasure sample_gaussian(const GaussianSpec& spec, int n,
                                std::uint64_t seed);

// omega -> J (.) omega on every atom; weights unchanged.
DiscreteMeasure pushforward_inertia(const DiscreteMeasure& omega,
                                    const InertiaBody& body);
// x -> x (/) J.
DiscreteMeasure pullback_inertia(const DiscreteMeasure& x,
                                 const InertiaBody& body);

// sum_i w_i |x_i|^2.
double second_moment(const DiscreteMeasure& measure);

struct Coupling {
  Mat plan;
  DiscreteMeasure source;
  DiscreteMeasure target;
  double cost = 0.0;
  // Max absolute deviation of the plan's row / column sums from the
  // marginals.
  double row_residual = 0.0;
  double col_residual = 0.0;
  // "hungarian", "network-simplex", "sinkhorn", "sinkhorn-log" or "product".
  std::string solver;
  std::optional<double> epsilon;
  int iterations = 0;
  int newton_steps = 0;
  bool converged = true;
  // Column residual (l1) after each iteration of the final epsilon stage.
  std::vector<double> residual_history;
};

// Exact discrete Kantorovich LP. Equal-size equal-weight instances are
// solved as an assignment problem, everything else by the transportation
// simplex. Throws MarginalMismatchError when total masses differ by more
// than 1e-9 and InvalidArgumentError on dimension mismatch.
Coupling solve_exact(const Mat& cost, const DiscreteMeasure& source,
                     const DiscreteMeasure& target);

// Assignment that minimizes sum_i cost(i, p[i]) for a square matrix.
std::vector<int> hungarian(const Mat& cost);

struct SinkhornOptions {
  // Defaults to 0.05 median(cost).
  std::optional<double> epsilon;
  int max_iter = 10000;
  double tol = 1e-9;
  // Unset: log domain when epsilon < 0.05 median(cost).
  std::optional<bool> log_domain;
  // Anneal epsilon geometrically from max(cost) in the log domain.
  bool epsilon_scaling = true;
  // Log domain only: after this many final-epsilon iterations switch to
  // damped Newton steps on the dual potentials. Unset disables it.
  std::optional<int> newton_after = 500;
};

// Entropic OT. The returned plan has exact row sums; the column residual is
// reported and `converged` says whether it met `tol`. Throws
// EpsilonTooSmallError when the plain-domain kernel underflows.
Coupling solve_sinkhorn(const Mat& cost, const DiscreteMeasure& source,
                        const DiscreteMeasure& target,
                        const SinkhornOptions& options = {});

// Independent coupling a b^T.
Coupling product_coupling(const Mat& cost, const DiscreteMeasure& source,
                          const DiscreteMeasure& target);

double median(const Mat& values);

struct EnsembleOptions {
  PolicyKind policy = PolicyKind::kFeasibleUstar;
  double step = 1e-3;
  // Plan entries at or below this mass are skipped.
  double mass_threshold = 0.0;
  // Record divergent pairs instead of throwing.
  bool continue_on_divergence = false;
  int threads = 0;
};

struct SteeredPair {
  int i = 0;
  int j = 0;
  double mass = 0.0;
  double cost = 0.0;
  double terminal_error = 0.0;
};

struct EnsembleResult {
  DiscreteMeasure terminal;
  // sum over steered pairs of mass * trajectory cost.
  double total_cost = 0.0;
  std::vector<SteeredPair> pairs;
  double max_terminal_error = 0.0;
  std::vector<std::string> failures;
};

// Steers every coupled pair (i, j) with the chosen closed-loop policy under
// spec.dynamics(). Throws DivergenceError naming (i, j) unless
// continue_on_divergence is set.
EnsembleResult ensemble_steer(const Coupling& coupling,
                              const GroundCostSpec& spec,
                              const EnsembleOptions& options = {});

// Header "x1,x2,x3,weight".
void write_measure_csv(const DiscreteMeasure& measure, std::ostream& out);
// Header "i,j,mass,cost"; entries with zero mass are omitted.
void write_coupling_csv(const Coupling& coupling, const Mat& cost,
                        std::ostream& out);

}  // namespace gomt

#endif  // GOMT_TRANSPORT_H_
